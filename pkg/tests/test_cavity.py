import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqed_bayes import (
    CavityQubitParams,
    FieldPair,
    build_rate_grid,
    cavity_fields,
    effective_detunings,
    integrate_fields_ode,
    rates,
    steady_fields,
)
from cqed_bayes.cavity import grid_size

FIG2 = dict(delta_r=0.0, epsilon_m=1.0, kappa=2.0, phi=math.pi / 4)


def brute_rates(p, a1, a2):
    """Rates from the defining formulas with plain complex scalars."""
    beta = a2 - a1
    quad = (beta * complex(math.cos(p.phi), -math.sin(p.phi))).real
    total = p.kappa * abs(beta) ** 2
    over = a1 * a2.conjugate()
    return (p.kappa * quad**2, total - p.kappa * quad**2, 2 * p.chi * over.imag, 2 * p.chi * over.real)


def test_detuning_pairing():
    d1, d2 = effective_detunings(CavityQubitParams(chi=0.3, delta_r=0.1, kappa=1.0))
    assert d1 == pytest.approx(complex(-0.2, -0.5), abs=1e-15)
    assert d2 == pytest.approx(complex(0.4, -0.5), abs=1e-15)


def test_fields_start_at_alpha0():
    p = CavityQubitParams(alpha0=0.3 - 0.2j)
    f = cavity_fields(p, 0.0)
    assert f.alpha1 == pytest.approx(0.3 - 0.2j)
    assert f.alpha2 == pytest.approx(0.3 - 0.2j)


def test_fields_relax_to_steady():
    p = CavityQubitParams(chi=0.5, **FIG2)
    late = cavity_fields(p, 60.0)
    ss = steady_fields(p)
    assert abs(late.alpha1 - ss.alpha1) < 1e-12
    assert abs(late.alpha2 - ss.alpha2) < 1e-12
    assert ss.t == math.inf


def test_steady_values_fig2_strong():
    p = CavityQubitParams(chi=0.5, **FIG2)
    r = rates(p, steady_fields(p))
    # 0.64 = kappa |beta|^2 / 2 with beta = 0.8 (brute force, see brute_rates)
    assert r.gamma_ci == pytest.approx(0.64, abs=1e-14)
    assert r.gamma_ba == pytest.approx(0.64, abs=1e-14)
    assert r.gamma_d == pytest.approx(0.64, abs=1e-14)
    assert r.gamma_m == pytest.approx(1.28, abs=1e-14)
    assert r.b_shift == pytest.approx(0.48, abs=1e-14)


def test_rates_match_brute_force_over_time():
    p = CavityQubitParams(chi=0.5, **FIG2)
    for t in (0.0, 0.013, 0.5, 2.0, 7.3):
        f = cavity_fields(p, t)
        gci, gba, gd, b = brute_rates(p, f.alpha1, f.alpha2)
        r = rates(p, f)
        assert r.gamma_ci == pytest.approx(gci, abs=1e-14)
        assert r.gamma_ba == pytest.approx(gba, abs=1e-14)
        assert r.gamma_d == pytest.approx(gd, abs=1e-14)
        assert r.b_shift == pytest.approx(b, abs=1e-14)


def test_zero_coupling_rates_vanish():
    p = CavityQubitParams(chi=0.0, **FIG2)
    r = rates(p, cavity_fields(p, np.linspace(0, 5, 11)))
    for name in ("gamma_ci", "gamma_ba", "gamma_d", "b_shift", "beta_arg"):
        assert np.all(getattr(r, name) == 0.0)


def test_weak_coupling_scales_as_chi_squared():
    small = [rates(p, steady_fields(p)).gamma_m
             for p in (CavityQubitParams(chi=c, **FIG2) for c in (1e-3, 2e-3))]
    assert small[1] / small[0] == pytest.approx(4.0, rel=1e-5)


def test_steady_decoherence_non_negative_sweep():
    rng = np.random.default_rng(0)
    for _ in range(300):
        p = CavityQubitParams(kappa=rng.uniform(0.5, 10), chi=rng.uniform(0, 2),
                              delta_r=rng.uniform(-2, 2), epsilon_m=rng.uniform(0.1, 3))
        assert rates(p, steady_fields(p)).gamma_d >= 0


def test_rk4_fourth_order():
    p = CavityQubitParams(chi=0.5, **FIG2)
    errs = []
    for dt in (0.2, 0.1, 0.05):
        ode = integrate_fields_ode(p, 10.0, dt)
        ref = cavity_fields(p, ode.t)
        errs.append(max(np.abs(ode.alpha1 - ref.alpha1).max(), np.abs(ode.alpha2 - ref.alpha2).max()))
    for coarse, fine in zip(errs, errs[1:]):
        assert 12 < coarse / fine < 20


def test_fig2_oracle_agreement():
    for chi in (0.1, 0.5):
        p = CavityQubitParams(chi=chi, **FIG2)
        ode = integrate_fields_ode(p, 10.0, 1e-4)
        ref = cavity_fields(p, ode.t)
        assert np.abs(ode.alpha1 - ref.alpha1).max() < 1e-8
        assert np.abs(ode.alpha2 - ref.alpha2).max() < 1e-8


def test_grid_midpoints_and_readonly():
    p = CavityQubitParams()
    g = build_rate_grid(p, 1.0, 0.25)
    assert g.n_steps == 4
    np.testing.assert_allclose(g.times, [0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(g.midpoints, [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(g.samples.gamma_ci, rates(p, cavity_fields(p, g.midpoints)).gamma_ci)
    with pytest.raises(ValueError):
        g.samples.gamma_ci[0] = 1.0
    assert g.sample(2).gamma_ci == g.samples.gamma_ci[2]


def test_grid_segment():
    g = build_rate_grid(CavityQubitParams(), 1.0, 0.1)
    s = g.segment(4)
    assert s.n_steps == 6
    assert s.t_m == pytest.approx(0.6)
    np.testing.assert_array_equal(s.samples.gamma_d, g.samples.gamma_d[4:])
    np.testing.assert_allclose(s.midpoints, g.midpoints[4:])
    with pytest.raises(ValueError):
        g.segment(10)


@pytest.mark.parametrize("t_m, dt", [(1.0, 0.3), (1.0, 0.0), (-1.0, 0.1), (0.1, 1.0)])
def test_grid_size_rejects(t_m, dt):
    with pytest.raises(ValueError):
        grid_size(t_m, dt)


def test_grid_size_tolerates_rounding():
    assert grid_size(10.0, 1e-4) == 100_000
    assert grid_size(0.3, 0.1) == 3


@pytest.mark.parametrize("bad", [dict(kappa=0.0), dict(chi=-0.1), dict(phi=7.0),
                                 dict(delta_r=math.nan), dict(alpha0=complex(math.inf, 0))])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        CavityQubitParams(**bad)


def test_params_replace():
    p = CavityQubitParams().replace(chi=0.1)
    assert p.chi == 0.1 and p.kappa == 2.0


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        cavity_fields(CavityQubitParams(), -1.0)


complex_st = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)


@settings(max_examples=200, deadline=None)
@given(a1=complex_st, a2=complex_st, phi=st.floats(0, 6.28), kappa=st.floats(0.1, 10))
def test_rate_decomposition(a1, a2, phi, kappa):
    p = CavityQubitParams(phi=phi, kappa=kappa)
    r = rates(p, FieldPair(a1, a2, 0.0))
    total = kappa * abs(a2 - a1) ** 2
    assert r.gamma_ci >= 0 and r.gamma_ba >= 0
    assert r.gamma_ci + r.gamma_ba == pytest.approx(total, rel=1e-12, abs=1e-12)
    quad = ((a2 - a1) * complex(math.cos(phi), -math.sin(phi))).real
    assert r.gamma_ci == pytest.approx(kappa * quad**2, rel=1e-9, abs=1e-9)
