import math

import numpy as np
import pytest

from ripl_lab import (
    LevelStructure,
    QcbpProblem,
    SparsityPattern,
    exact_recovery_experiment,
    fourier_haar_matrix,
    inverse_sqrt_level_weights,
    recovery_metrics,
    solve_qcbp,
)
from ripl_lab.recovery import gaussian_recovery_experiment, level_weight_vector


def test_radial_shrink_oracle():
    # minimizer shrinks y toward the ball: A = I, y = (2, 0), eta = 1 -> (1, 0)
    res = solve_qcbp(QcbpProblem(a=np.eye(2), y=np.array([2.0, 0.0]), eta=1.0))
    assert res.converged
    assert np.allclose(res.xhat, [1.0, 0.0], atol=1e-6)
    assert res.objective == pytest.approx(1.0, abs=1e-6)


def test_eta_zero_invertible_matches_direct_solve():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    y = a @ (rng.standard_normal(6) + 1j * rng.standard_normal(6))
    res = solve_qcbp(QcbpProblem(a=a, y=y, eta=0.0))
    assert res.converged
    assert np.linalg.norm(res.xhat - np.linalg.solve(a, y)) < 1e-8


def test_zero_measurements_give_zero():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((4, 6))
    res = solve_qcbp(QcbpProblem(a=a, y=np.zeros(4), eta=0.3))
    assert res.converged
    assert np.array_equal(res.xhat, np.zeros(6))
    assert res.objective == 0.0


def test_feasibility_invariant():
    rng = np.random.default_rng(3)
    for eta in (0.0, 0.1, 1.0):
        a = rng.standard_normal((5, 9)) + 1j * rng.standard_normal((5, 9))
        y = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        res = solve_qcbp(QcbpProblem(a=a, y=y, eta=eta), feasibility_tol=1e-9)
        if res.converged:
            assert res.residual <= eta + 1e-9


def test_uniform_weights_match_unweighted_minimizer():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((6, 10))
    y = rng.standard_normal(6)
    lv = LevelStructure((0, 5, 10))
    plain = solve_qcbp(QcbpProblem(a=a, y=y, eta=0.1))
    scaled = solve_qcbp(QcbpProblem(a=a, y=y, eta=0.1, levels=lv, weights=(3.0, 3.0)))
    assert np.allclose(plain.xhat, scaled.xhat, atol=1e-5)
    assert scaled.objective == pytest.approx(3.0 * plain.objective, rel=1e-4)


def test_scaling_equivariance():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((5, 8)) + 1j * rng.standard_normal((5, 8))
    y = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    c = 2.5
    base = solve_qcbp(QcbpProblem(a=a, y=y, eta=0.2))
    scaled = solve_qcbp(QcbpProblem(a=a, y=c * y, eta=c * 0.2))
    assert np.allclose(scaled.xhat, c * base.xhat, atol=1e-5)


def test_infinite_weight_forces_level_to_zero():
    rng = np.random.default_rng(6)
    a = rng.standard_normal((4, 6))
    x0 = np.zeros(6)
    x0[4] = 1.0
    y = a @ x0
    lv = LevelStructure((0, 3, 6))
    res = solve_qcbp(QcbpProblem(a=a, y=y, eta=0.0, levels=lv, weights=(math.inf, 1.0)))
    assert np.max(np.abs(res.xhat[:3])) == 0.0


def test_iteration_cap_flags_not_converged():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((5, 9))
    y = rng.standard_normal(5)
    res = solve_qcbp(QcbpProblem(a=a, y=y, eta=0.0), max_iters=10)
    assert not res.converged
    assert res.iterations == 10


def test_problem_validation():
    with pytest.raises(ValueError):
        QcbpProblem(a=np.eye(2), y=np.zeros(3))
    with pytest.raises(ValueError):
        QcbpProblem(a=np.eye(2), y=np.zeros(2), eta=-1.0)
    with pytest.raises(ValueError):
        QcbpProblem(a=np.eye(2), y=np.zeros(2), weights=(1.0,))
    with pytest.raises(ValueError):
        level_weight_vector(LevelStructure((0, 2)), (0.0,))


def test_weight_helpers():
    lv = LevelStructure((0, 2, 4))
    assert np.array_equal(level_weight_vector(lv, (2.0, 0.5)), [2, 2, 0.5, 0.5])
    pattern = SparsityPattern(lv, (1, 0))
    assert inverse_sqrt_level_weights(pattern) == (1.0, math.inf)


def test_metrics_exact_recovery_all_zero():
    pattern = SparsityPattern(LevelStructure((0, 2, 4)), (1, 1))
    x = np.array([1.0, 0, 0, 2.0])
    out = recovery_metrics(x, x, pattern, eta=0.0)
    assert out["err2"] == 0.0
    assert out["err1"] == 0.0
    assert out["sigma_sM"] == 0.0
    assert out["bound_ratio_l1"] == 0.0
    assert out["bound_ratio_l2"] == 0.0


def test_metrics_ratios_with_noise_budget():
    pattern = SparsityPattern(LevelStructure((0, 2, 4)), (1, 1))
    x = np.array([1.0, 0, 0, 2.0])
    xhat = x + np.array([0.1, 0, 0, 0])
    out = recovery_metrics(x, xhat, pattern, eta=0.5)
    s = 2
    assert out["bound_ratio_l1"] == pytest.approx(0.1 / (math.sqrt(s) * 0.5))
    amp = 1.0 + (2 * 1.0) ** 0.25
    assert out["bound_ratio_l2"] == pytest.approx(0.1 / (amp * 0.5))


def test_metrics_mismatched_lengths():
    pattern = SparsityPattern(LevelStructure((0, 2)), (1,))
    with pytest.raises(ValueError):
        recovery_metrics(np.zeros(2), np.zeros(3), pattern)


def test_experiment_saturated_scheme_always_succeeds():
    u, layout = fourier_haar_matrix(16)
    lv = layout.sampling_levels()
    pattern = SparsityPattern(lv, (1, 1, 1, 2))
    res = exact_recovery_experiment(u, lv, lv.widths, lv.r, pattern, 8, seed=123)
    assert res.success_rate == 1.0


def test_experiment_grossly_undersampled_fails():
    u, layout = fourier_haar_matrix(16)
    lv = layout.sampling_levels()
    pattern = SparsityPattern(lv, (1, 2, 2, 3))  # total 8 = N/2
    res = exact_recovery_experiment(
        u, lv, (2, 2, 1, 1), 2, pattern, 8, seed=123,
        solver_opts={"max_iters": 5000, "primal_tol": 1e-5},
    )
    assert res.success_rate <= 0.25


def test_experiment_deterministic_replay():
    u, layout = fourier_haar_matrix(8)
    lv = layout.sampling_levels()
    pattern = SparsityPattern(lv, (1, 1, 1))
    a = exact_recovery_experiment(u, lv, (2, 2, 3), 2, pattern, 5, seed=7)
    b = exact_recovery_experiment(u, lv, (2, 2, 3), 2, pattern, 5, seed=7)
    assert a.records == b.records


def test_experiment_noise_mode_respects_radius():
    u, layout = fourier_haar_matrix(16)
    lv = layout.sampling_levels()
    pattern = SparsityPattern(lv, (1, 1, 1, 1))
    eta = 0.05
    res = exact_recovery_experiment(
        u, lv, lv.widths, lv.r, pattern, 4, seed=11, eta=eta, success_rtol=1.0
    )
    assert res.success_rate == 1.0
    assert res.meta["radius"] == eta
    # noisy measurements of a saturated isometry recover to O(eta)
    assert all(rec["err2"] <= 10 * eta for rec in res.records)


def test_experiment_thread_pool_replays_identically(monkeypatch):
    u, layout = fourier_haar_matrix(8)
    lv = layout.sampling_levels()
    pattern = SparsityPattern(lv, (1, 1, 1))
    serial = exact_recovery_experiment(u, lv, (2, 2, 2), 2, pattern, 6, seed=31)
    monkeypatch.setenv("RIPL_LAB_THREADS", "3")
    threaded = exact_recovery_experiment(u, lv, (2, 2, 2), 2, pattern, 6, seed=31)
    assert serial.records == threaded.records


def test_gaussian_experiment_shares_trial_signals():
    lv = LevelStructure((0, 4, 16))
    pattern = SparsityPattern(lv, (1, 1))
    res = gaussian_recovery_experiment(16, 12, pattern, 6, seed=21)
    assert res.trials == 6
    assert all(rec["m"] == [12] for rec in res.records)
    # well-determined Gaussian systems at m = 12 >> s = 2 succeed
    assert res.success_rate >= 0.8
