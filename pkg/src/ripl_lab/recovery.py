"""Quadratically-constrained basis pursuit and recovery diagnostics.

Solves min_z sum_k w_k || z restricted to level k ||_1 subject to
||A z - y|| <= eta with a primal-dual proximal splitting: the primal
step is a coordinate-wise complex soft-threshold (shrinking the modulus,
preserving the phase, with level weights), the dual step is the
projection onto the eta-ball around y (which degenerates to the affine
projection onto {u : u = y} when eta = 0, so one code path covers both).
Step sizes come from a power-iteration estimate of ||A||.  Optimality is
certified with a duality-gap estimate: a rescaled copy of the dual
iterate is always dual-feasible, so objective - dual value bounds the
suboptimality from above.

Also provides error metrics against the level-sparse approximation
bounds (diagnostic ratios: the bounds hold up to unspecified constants)
and a seeded multi-trial recovery experiment harness.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .levels import LevelStructure, best_approx_in_levels, random_sparse_vector
from .operators import gaussian_matrix
from .sampling import MeasurementOperator, _as_seed_sequence, build_measurement, draw_scheme

__all__ = [
    "QcbpProblem",
    "SolveResult",
    "ExperimentResult",
    "solve_qcbp",
    "recovery_metrics",
    "exact_recovery_experiment",
    "gaussian_recovery_experiment",
    "level_weight_vector",
    "inverse_sqrt_level_weights",
]


def thread_count():
    """Worker cap from RIPL_LAB_THREADS (default 1, minimum 1)."""
    raw = os.environ.get("RIPL_LAB_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_ordered(fn, items):
    workers = thread_count()
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def level_weight_vector(levels, weights):
    """Expand per-level weights w_k to a per-coordinate vector."""
    weights = tuple(float(w) for w in weights)
    if len(weights) != levels.r:
        raise ValueError(f"{len(weights)} weights for {levels.r} levels")
    if any(w <= 0 for w in weights):
        raise ValueError("level weights must be positive")
    out = np.empty(levels.n)
    for k in range(1, levels.r + 1):
        out[levels.level_slice(k)] = weights[k - 1]
    return out


def inverse_sqrt_level_weights(pattern):
    """Weights w_k = 1/sqrt(s_k); a zero budget gives an infinite weight,
    which the soft-threshold interprets as forcing that level to zero."""
    return tuple(math.inf if sk == 0 else 1.0 / math.sqrt(sk) for sk in pattern.s)


@dataclass(frozen=True)
class QcbpProblem:
    """min sum_k w_k ||P_k z||_1  s.t.  ||A z - y|| <= eta."""

    a: np.ndarray
    y: np.ndarray
    eta: float = 0.0
    levels: LevelStructure | None = None
    weights: tuple | None = None

    def __post_init__(self):
        a = self.a.a if isinstance(self.a, MeasurementOperator) else np.asarray(self.a)
        object.__setattr__(self, "a", a)
        y = np.asarray(self.y, dtype=np.complex128).ravel()
        object.__setattr__(self, "y", y)
        if a.ndim != 2:
            raise ValueError(f"A must be a matrix, got shape {a.shape}")
        if y.shape[0] != a.shape[0]:
            raise ValueError(f"y has length {y.shape[0]}, A has {a.shape[0]} rows")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.weights is not None:
            if self.levels is None:
                raise ValueError("per-level weights need a level structure")
            if self.levels.n != a.shape[1]:
                raise ValueError("weight levels do not match the column dimension")

    def coordinate_weights(self):
        if self.weights is None:
            return np.ones(self.a.shape[1])
        return level_weight_vector(self.levels, self.weights)

    def to_dict(self):
        from .operators import matrix_content_hash

        d = {
            "a_hash": matrix_content_hash(self.a),
            "y_re": self.y.real.tolist(),
            "y_im": self.y.imag.tolist(),
            "eta": self.eta,
        }
        if self.weights is not None:
            d["weights"] = [w if math.isfinite(w) else "inf" for w in self.weights]
            d["boundaries"] = list(self.levels.boundaries)
        return d


@dataclass(frozen=True)
class SolveResult:
    xhat: np.ndarray
    objective: float
    residual: float
    iterations: int
    converged: bool
    gap: float

    def to_dict(self):
        return {
            "objective": self.objective,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "gap": self.gap,
            "xhat_re": self.xhat.real.tolist(),
            "xhat_im": self.xhat.imag.tolist(),
        }


def _operator_norm(a, iters=100):
    gram = a.conj().T @ a
    n = a.shape[1]
    v = np.ones(n, dtype=np.complex128) / math.sqrt(n)
    v += np.arange(n) * (1e-6 / max(n, 1))  # break symmetry against flat eigvecs
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam = float(np.real(np.vdot(v, gram @ v)))
    return math.sqrt(max(lam, 0.0))


def _soft_threshold(z, thresh):
    mag = np.abs(z)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(mag > 0, np.maximum(1.0 - thresh / np.where(mag > 0, mag, 1.0), 0.0), 0.0)
    return z * scale


def _objective(z, w):
    mag = np.abs(z)
    with np.errstate(invalid="ignore"):  # inf weight times zero entry
        return float(np.sum(np.where(mag == 0, 0.0, w * mag)))


def solve_qcbp(problem, max_iters=50000, primal_tol=1e-7, feasibility_tol=1e-9,
               check_every=25, stability_window=100):
    """Primal-dual solve of the weighted l1 ball-constrained problem.

    Convergence requires feasibility to ``feasibility_tol``, a relative
    duality-gap estimate at most ``primal_tol``, and objective stability
    over a ``stability_window``-iteration window (guards against plateau
    misreads).  Hitting the iteration cap returns the current iterate
    flagged ``converged=False``.  Deterministic for fixed inputs.
    """
    a = problem.a
    y = problem.y
    eta = float(problem.eta)
    w = problem.coordinate_weights()
    m, n = a.shape
    a_h = a.conj().T

    norm_a = _operator_norm(a)
    if norm_a == 0.0:
        # zero operator: any z is feasible iff ||y|| <= eta; minimum is 0
        xhat = np.zeros(n, dtype=np.complex128)
        resid = float(np.linalg.norm(y))
        return SolveResult(xhat, 0.0, resid, 0, resid <= eta + feasibility_tol, 0.0)
    step = 1.0 / (1.02 * norm_a)
    sigma = tau = step

    z = np.zeros(n, dtype=np.complex128)
    zbar = z.copy()
    q = np.zeros(m, dtype=np.complex128)
    thresh = tau * w

    history = []
    window_checks = max(1, int(math.ceil(stability_window / check_every)))
    iterations = 0
    converged = False
    gap = math.inf
    objective = _objective(z, w)
    residual = float(np.linalg.norm(a @ z - y))

    for it in range(1, max_iters + 1):
        iterations = it
        u = q + sigma * (a @ zbar)
        if eta == 0.0:
            proj = y
        else:
            d = u / sigma - y
            nd = float(np.linalg.norm(d))
            proj = y + d * min(1.0, eta / nd) if nd > 0 else y
        q = u - sigma * proj
        z_new = _soft_threshold(z - tau * (a_h @ q), thresh)
        zbar = 2.0 * z_new - z
        z = z_new

        if it % check_every == 0 or it == max_iters:
            residual = float(np.linalg.norm(a @ z - y))
            objective = _objective(z, w)
            v = a_h @ q
            with np.errstate(invalid="ignore"):
                ratios = np.abs(v) / w  # inf weights contribute 0
            ratios = np.where(np.isnan(ratios), 0.0, ratios)
            scale_q = max(1.0, float(np.max(ratios))) if ratios.size else 1.0
            qf = q / scale_q
            dual = -float(np.real(np.vdot(qf, y))) - eta * float(np.linalg.norm(qf))
            gap = objective - dual
            rel_gap = abs(gap) / (1.0 + abs(objective))
            history.append(objective)
            stable = (
                len(history) > window_checks
                and abs(history[-1] - history[-1 - window_checks])
                <= primal_tol * (1.0 + abs(objective))
            )
            feasible = residual <= eta + feasibility_tol
            if feasible and rel_gap <= primal_tol and stable:
                converged = True
                break

    return SolveResult(
        xhat=z,
        objective=objective,
        residual=residual,
        iterations=iterations,
        converged=converged,
        gap=float(gap),
    )


def recovery_metrics(x_true, xhat, pattern, eta=0.0):
    """Error norms and diagnostic ratios against the recovery bounds.

    bound_ratio_l1 = ||e||_1 / (sigma + sqrt(s) eta) and
    bound_ratio_l2 = ||e|| / ((1 + (r rho)^(1/4)) (sigma/sqrt(s) + eta)),
    with sigma the best level-sparse approximation error of the true
    vector and the convention 0/0 = 0.  The underlying bounds carry
    unspecified constants, so these are diagnostics, not certificates.
    """
    x_true = np.asarray(x_true).ravel()
    xhat = np.asarray(xhat).ravel()
    if x_true.shape != xhat.shape:
        raise ValueError("vectors must have equal length")
    err = xhat - x_true
    err2 = float(np.linalg.norm(err))
    err1 = float(np.sum(np.abs(err)))
    _, sigma = best_approx_in_levels(x_true, pattern)
    s_total = pattern.total
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rho = pattern.ratio
    r = pattern.levels.r

    def ratio(num, denom):
        if denom == 0.0:
            return 0.0 if num == 0.0 else math.inf
        return num / denom

    denom1 = sigma + math.sqrt(s_total) * eta
    if s_total > 0:
        sigma_term = sigma / math.sqrt(s_total)
    else:
        sigma_term = 0.0 if sigma == 0.0 else math.inf
    amp = 1.0 + (r * rho) ** 0.25 if math.isfinite(rho) else math.inf
    denom2 = amp * (sigma_term + eta)
    if math.isinf(denom2):
        ratio2 = 0.0
    else:
        ratio2 = ratio(err2, denom2)
    return {
        "err2": err2,
        "err1": err1,
        "sigma_sM": sigma,
        "bound_ratio_l1": ratio(err1, denom1),
        "bound_ratio_l2": ratio2,
    }


@dataclass(frozen=True)
class ExperimentResult:
    success_rate: float
    records: tuple
    trials: int
    master_seed: int
    success_rtol: float
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "success_rate": self.success_rate,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "success_rtol": self.success_rtol,
            "records": [dict(rec) for rec in self.records],
            "meta": dict(self.meta),
        }


def _run_recovery_trials(make_matrix, pattern, trials, seed, eta, radius, weights,
                         solver_opts, success_rtol, magnitude_model, meta):
    solver_opts = dict(solver_opts or {})
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    master = _as_seed_sequence(seed)
    children = master.spawn(trials)
    level_weights = tuple(weights) if weights is not None else None
    sparsity_levels = pattern.levels
    ball_radius = float(radius) if radius is not None else float(eta)

    def run_trial(arg):
        index, child = arg
        matrix_ss, x_ss, noise_ss = child.spawn(3)
        a, m_record = make_matrix(matrix_ss)
        x = random_sparse_vector(pattern, np.random.default_rng(x_ss), magnitude_model)
        y = a @ x
        if eta > 0:
            rng_noise = np.random.default_rng(noise_ss)
            direction = rng_noise.standard_normal(len(y)) + 1j * rng_noise.standard_normal(len(y))
            y = y + direction * (eta / np.linalg.norm(direction))
        problem = QcbpProblem(
            a=a,
            y=y,
            eta=ball_radius,
            levels=sparsity_levels if level_weights is not None else None,
            weights=level_weights,
        )
        result = solve_qcbp(problem, **solver_opts)
        xnorm = float(np.linalg.norm(x))
        rel = float(np.linalg.norm(result.xhat - x)) / xnorm if xnorm > 0 else 0.0
        metrics = recovery_metrics(x, result.xhat, pattern, eta=eta)
        return {
            "trial": index,
            "m": m_record,
            "err2": metrics["err2"],
            "err1": metrics["err1"],
            "rel_err": rel,
            "success": rel <= success_rtol,
            "converged": result.converged,
            "iterations": result.iterations,
            "bound_ratio_l1": metrics["bound_ratio_l1"],
            "bound_ratio_l2": metrics["bound_ratio_l2"],
        }

    records = _map_ordered(run_trial, list(enumerate(children)))
    records.sort(key=lambda rec: rec["trial"])
    rate = sum(1 for rec in records if rec["success"]) / trials
    return ExperimentResult(
        success_rate=rate,
        records=tuple(records),
        trials=trials,
        master_seed=seed if isinstance(seed, int) else -1,
        success_rtol=success_rtol,
        meta=dict(meta, eta=eta, radius=ball_radius),
    )


def exact_recovery_experiment(u, levels, m, r0, pattern, trials, seed, eta=0.0,
                              radius=None, weights=None, solver_opts=None,
                              success_rtol=1e-4, magnitude_model="unit"):
    """Seeded multi-trial recovery experiment over multilevel schemes.

    Each trial draws a fresh scheme, a random level-sparse vector and
    (when eta > 0) a noise vector of norm exactly eta in a random
    Gaussian direction, then measures the fraction of trials recovering
    to relative error ``success_rtol``.  ``radius`` is the solver
    constraint radius (defaults to eta; pass sqrt(K)*eta for the
    K-scaled convention).  Per-trial streams derive from the master seed
    so results are independent of execution order; solver
    non-convergence is recorded per trial, never raised.
    """
    m = tuple(int(v) for v in m)

    def make_matrix(matrix_ss):
        scheme = draw_scheme(levels, m, r0=r0, seed=matrix_ss)
        return build_measurement(u, scheme).a, list(scheme.m)

    return _run_recovery_trials(
        make_matrix, pattern, trials, seed, eta, radius, weights, solver_opts,
        success_rtol, magnitude_model, meta={"sampling": "multilevel", "r0": r0},
    )


def gaussian_recovery_experiment(n, m_total, pattern, trials, seed, eta=0.0,
                                 radius=None, weights=None, solver_opts=None,
                                 success_rtol=1e-4, magnitude_model="unit"):
    """Baseline experiment with a fresh Gaussian matrix per trial.

    Shares the per-trial stream layout with
    :func:`exact_recovery_experiment`, so with the same master seed each
    trial solves for the same signal vector, making the two directly
    comparable trial by trial.
    """
    m_total = int(m_total)

    def make_matrix(matrix_ss):
        rng = np.random.default_rng(matrix_ss)
        return gaussian_matrix(m_total, n, rng), [m_total]

    return _run_recovery_trials(
        make_matrix, pattern, trials, seed, eta, radius, weights, solver_opts,
        success_rtol, magnitude_model, meta={"sampling": "gaussian"},
    )
