import math

import numpy as np
import pytest

from cqed_bayes import (
    CavityQubitParams,
    CurrentRecord,
    QubitState,
    StepOverflow,
    build_rate_grid,
    ensemble_average,
    lindblad_reference,
    simulate_ito,
    simulate_stratonovich,
    stratonovich_drift_correction,
)
from cqed_bayes.trajectory import (
    coarsen_increments,
    ensemble_statistics,
    noise_coefficients,
    noise_gradient_product,
    simulate_ito_batch,
    wiener_increments,
)

FIG2 = dict(delta_r=0.0, epsilon_m=1.0, kappa=2.0, phi=math.pi / 4)
STRONG = CavityQubitParams(chi=0.5, **FIG2)


def test_qubit_state_validation():
    with pytest.raises(ValueError):
        QubitState(1.1, 0)
    with pytest.raises(ValueError):
        QubitState(0.5, 0.6)
    with pytest.raises(ValueError):
        QubitState(math.nan, 0)
    s = QubitState(1 + 1e-13, 0)
    assert s.rho11 == 1.0 and s.rho22 == 0.0
    assert QubitState(0.8, 0.1j).sigma_z == pytest.approx(0.6)
    m = QubitState(0.8, 0.1 + 0.2j).matrix()
    np.testing.assert_allclose(m, m.conj().T)
    assert np.trace(m).real == pytest.approx(1.0)


def test_current_record_validation():
    with pytest.raises(ValueError):
        CurrentRecord(0.1, [])
    with pytest.raises(ValueError):
        CurrentRecord(0.1, [1, 2], increments=[1])
    rec = CurrentRecord(0.1, [1.0, 2.0, 3.0], seed=(0, 1))
    assert rec.n_steps == 3 and rec.t_m == pytest.approx(0.3)
    assert rec.truncate(2).currents.tolist() == [1.0, 2.0]


def test_excited_state_is_fixed_point():
    tr = simulate_ito(STRONG, QubitState(1.0, 0.0), 2.0, 1e-3, seed=4)
    assert np.all(tr.rho11 == 1.0)
    assert np.all(tr.rho12 == 0.0)


def test_uncoupled_qubit_rotates_freely():
    p = CavityQubitParams(chi=0.0, omega_q=1.3, **FIG2)
    tr = simulate_ito(p, QubitState(0.5, 0.5), 5.0, 1e-3, seed=1)
    np.testing.assert_allclose(np.abs(tr.rho12), 0.5, atol=1e-13)
    np.testing.assert_allclose(tr.rho12, 0.5 * np.exp(-1.3j * tr.times), atol=1e-12)
    assert np.all(tr.rho11 == 0.5)


def test_current_record_formula():
    tr = simulate_ito(STRONG, None, 1.0, 1e-3, seed=2)
    grid = build_rate_grid(STRONG, 1.0, 1e-3)
    sz = 2 * tr.rho11[:-1] - 1
    expected = -grid.sqrt_gamma_ci * sz + tr.record.increments / 1e-3
    np.testing.assert_allclose(tr.record.currents, expected, rtol=0, atol=1e-12)
    assert tr.record.seed == (2, 0)


def test_positivity_along_paths():
    for seed in range(3):
        tr = simulate_ito(STRONG, QubitState(0.3, 0.4 * np.exp(0.7j)), 10.0, 1e-3, seed=seed)
        excess = np.abs(tr.rho12) ** 2 - tr.rho11 * (1 - tr.rho11)
        assert excess.max() <= 1e-9
        assert tr.rho11.min() >= 0 and tr.rho11.max() <= 1


def test_same_seed_same_path_and_batch_independence():
    a = simulate_ito(STRONG, None, 2.0, 1e-3, seed=7, index=5)
    b = simulate_ito(STRONG, None, 2.0, 1e-3, seed=7, index=5)
    np.testing.assert_array_equal(a.rho12, b.rho12)
    small = simulate_ito_batch(STRONG, None, 2.0, 1e-3, 7, [3, 5])
    large = simulate_ito_batch(STRONG, None, 2.0, 1e-3, 7, range(40))
    for tr in (small[1], large[5]):
        np.testing.assert_array_equal(tr.rho11, a.rho11)
        np.testing.assert_array_equal(tr.rho12, a.rho12)
        np.testing.assert_array_equal(tr.record.currents, a.record.currents)
    other = simulate_ito(STRONG, None, 2.0, 1e-3, seed=7, index=6)
    assert not np.array_equal(other.rho11, a.rho11)


def test_explicit_increments_override_seed():
    dw = wiener_increments(3, 0, 1000, 1e-3)
    a = simulate_ito(STRONG, None, 1.0, 1e-3, seed=99, increments=dw)
    b = simulate_ito(STRONG, None, 1.0, 1e-3, seed=3)
    np.testing.assert_array_equal(a.rho11, b.rho11)
    assert a.record.seed is None


def test_coarsen_increments():
    dw = np.arange(8.0)
    np.testing.assert_array_equal(coarsen_increments(dw, 2), [1, 5, 9, 13])
    with pytest.raises(ValueError):
        coarsen_increments(dw, 3)


def test_step_overflow_on_large_step():
    loud = CavityQubitParams(chi=0.5, epsilon_m=50.0, kappa=2.0, phi=math.pi / 4)
    with pytest.raises(StepOverflow):
        simulate_ito(loud, None, 1.0, 0.02, seed=0)


def test_unknown_scheme():
    with pytest.raises(ValueError):
        simulate_ito(STRONG, None, 1.0, 1e-3, scheme="rk4")


def test_grid_parameter_mismatch():
    grid = build_rate_grid(CavityQubitParams(chi=0.1), 1.0, 1e-3)
    with pytest.raises(ValueError):
        simulate_ito(STRONG, None, 1.0, 1e-3, grid=grid)


def test_euler_scheme_converges_more_slowly():
    # common Brownian path; a fine Milstein run is the reference
    fine = 1.25e-4
    dw = wiener_increments(5, 0, round(4.0 / fine), fine)
    errs = {}
    for scheme in ("euler", "milstein"):
        dt = 1e-3
        inc = coarsen_increments(dw, round(dt / fine))
        tr = simulate_ito(STRONG, None, 4.0, dt, increments=inc, scheme=scheme)
        ref = simulate_ito(STRONG, None, 4.0, fine, increments=dw, scheme="milstein")
        errs[scheme] = abs(tr.rho11[-1] - ref.rho11[-1])
    assert errs["milstein"] < errs["euler"]


def test_stratonovich_matches_ito_on_common_record():
    tr = simulate_ito(STRONG, None, 5.0, 1e-4, seed=11)
    st = simulate_stratonovich(STRONG, None, tr.record)
    assert np.abs(tr.as_array() - st.as_array()).max() < 2e-3


def test_stratonovich_mesh_mismatch():
    grid = build_rate_grid(STRONG, 1.0, 1e-2)
    with pytest.raises(ValueError):
        simulate_stratonovich(STRONG, None, CurrentRecord(1e-3, np.zeros(1000)), grid)


def test_drift_correction_is_half_gradient_product():
    grid = build_rate_grid(STRONG, 1.0, 0.1)
    rate = grid.sample(3)
    state = QubitState(0.3, 0.2 - 0.3j)
    c11, c12 = stratonovich_drift_correction(state, rate)
    g1, g2 = noise_gradient_product(0.3, 0.2 - 0.3j, math.sqrt(rate.gamma_ci), math.sqrt(rate.gamma_ba))
    assert c11 == pytest.approx(-0.5 * g1)
    assert c12 == pytest.approx(-0.5 * g2)


def test_drift_correction_finite_difference():
    s, b = 0.7, 0.4

    def f(y):
        f1, f2 = noise_coefficients(y[0], complex(y[1], y[2]), s, b)
        return np.array([f1, f2.real, f2.imag])

    for r11 in (0.1, 0.5, 0.9):
        for r12 in (0.1, -0.2j, 0.15 + 0.1j):
            y = np.array([r11, r12.real, r12.imag])
            h = 1e-6
            jac = np.column_stack([(f(y + h * e) - f(y - h * e)) / (2 * h) for e in np.eye(3)])
            g1, g2 = noise_gradient_product(r11, r12, s, b)
            np.testing.assert_allclose([g1, g2.real, g2.imag], jac @ f(y), atol=1e-8)


def test_lindblad_reference_free_rotation():
    p = CavityQubitParams(chi=0.0, omega_q=0.8, **FIG2)
    ref = lindblad_reference(p, QubitState(0.4, 0.3), 3.0, 1e-2)
    np.testing.assert_allclose(ref.rho12, 0.3 * np.exp(-0.8j * ref.times), atol=1e-10)
    assert np.all(ref.rho11 == 0.4)


def test_lindblad_reference_decays_at_steady_rate():
    ref = lindblad_reference(STRONG, None, 20.0, 1e-2)
    late = ref.rho12[-1] / ref.rho12[-101]
    assert abs(late) == pytest.approx(math.exp(-0.64 * 1.0), rel=1e-6)


def test_ensemble_average_and_errors():
    trs = simulate_ito_batch(STRONG, None, 1.0, 1e-2, 0, range(4))
    avg = ensemble_average(trs)
    np.testing.assert_allclose(avg.rho11, np.mean([t.rho11 for t in trs], axis=0))
    with pytest.raises(ValueError):
        ensemble_average([])
    other = simulate_ito(STRONG, None, 2.0, 1e-2, seed=0)
    with pytest.raises(ValueError):
        ensemble_average([trs[0], other])
    weak = simulate_ito(CavityQubitParams(chi=0.1), None, 1.0, 1e-2, seed=0)
    with pytest.raises(ValueError):
        ensemble_average([trs[0], weak])


def test_ensemble_statistics_chunk_invariance():
    a = ensemble_statistics(STRONG, None, 1.0, 1e-2, 3, 50, chunk_size=50)
    b = ensemble_statistics(STRONG, None, 1.0, 1e-2, 3, 50, chunk_size=7)
    trs = simulate_ito_batch(STRONG, None, 1.0, 1e-2, 3, range(50))
    direct = np.array([t.rho12 for t in trs])
    np.testing.assert_allclose(a.mean_rho12, direct.mean(axis=0), atol=1e-14)
    np.testing.assert_allclose(b.mean_rho12, a.mean_rho12, atol=1e-14)
    sem = direct.real.std(axis=0, ddof=1) / math.sqrt(50)
    np.testing.assert_allclose(a.sem_re_rho12, sem, atol=1e-13)
    np.testing.assert_allclose(b.sem_re_rho12, sem, atol=1e-13)
    assert a.n_trajectories == 50
    with pytest.raises(ValueError):
        ensemble_statistics(STRONG, None, 1.0, 1e-2, 3, 0)
