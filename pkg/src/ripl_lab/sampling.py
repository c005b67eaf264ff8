"""Multilevel random subsampling and the scaled measurement matrix.

A scheme draws m_k row indices i.i.d. uniformly (with replacement) from
each sampling level; the first r0 levels may instead be saturated, i.e.
taken in full, deterministically.  The measurement matrix stacks the
selected rows of an isometry scaled by 1/sqrt(p_k) with
p_k = m_k / (N_k - N_{k-1}), which makes A* A an unbiased estimate of
the identity.

Also implements the measurement-allocation calculators: the general
local-coherence condition, its closed-form specialisations for the
Fourier--Haar system (uniform kernel 2^-|k-l| and nonuniform kernel
2^-|k-l|/2), and the feasibility check of the nonuniform
relative-sparsity condition.  All allocators take an explicit user
constant C: the underlying sufficient conditions hold only up to
unspecified absolute constants, so guarantees are faithful only for
sufficiently large C.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .coherence import CoherenceProfile
from .levels import LevelError, LevelStructure, SparsityPattern
from .operators import matrix_content_hash

__all__ = [
    "SamplingScheme",
    "MeasurementOperator",
    "AllocationResult",
    "NonuniformCheck",
    "draw_scheme",
    "build_measurement",
    "allocate_uniform",
    "allocate_haar",
    "haar_interference_weights",
    "check_nonuniform_condition",
]


@dataclass(frozen=True)
class SamplingScheme:
    """Per-level draws t_{k,1..m_k} (1-based, repetitions allowed)."""

    levels: LevelStructure
    m: tuple
    draws: tuple
    saturated: tuple
    r0: int = 0
    seed: int | None = None

    def __post_init__(self):
        if len(self.m) != self.levels.r or len(self.draws) != self.levels.r:
            raise LevelError("scheme vectors must have one entry per level")
        for k in range(1, self.levels.r + 1):
            lo, hi = self.levels.level_range(k)
            mk = self.m[k - 1]
            dk = self.draws[k - 1]
            if len(dk) != mk:
                raise LevelError(f"level {k}: {len(dk)} draws but m_k = {mk}")
            if any(not lo <= t <= hi for t in dk):
                raise LevelError(f"level {k}: draw outside range {lo}..{hi}")
            if self.saturated[k - 1]:
                if dk != tuple(range(lo, hi + 1)):
                    raise LevelError(f"level {k} marked saturated but draws differ")

    @property
    def total(self):
        return sum(self.m)

    def densities(self):
        """p_k = m_k / level width (1.0 on saturated levels)."""
        return tuple(mk / wk for mk, wk in zip(self.m, self.levels.widths))

    def to_dict(self):
        return {
            "N": self.levels.n,
            "boundaries": list(self.levels.boundaries),
            "m": list(self.m),
            "r0": self.r0,
            "seed": self.seed,
            "saturated": list(self.saturated),
            "draws": [list(d) for d in self.draws],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            levels=LevelStructure.from_dict(d),
            m=tuple(d["m"]),
            draws=tuple(tuple(x) for x in d["draws"]),
            saturated=tuple(bool(v) for v in d["saturated"]),
            r0=int(d.get("r0", 0)),
            seed=d.get("seed"),
        )


def _as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def draw_scheme(levels, m, r0=0, seed=0, allow_empty=False):
    """Draw an (N, m)-multilevel scheme, saturating the first r0 levels.

    Levels 1..r0 take every index of their range deterministically and
    must be requested at full width; levels above r0 draw m_k indices
    i.i.d. uniformly with replacement.  Each level consumes an
    independently derived random stream, so the draws for level k do not
    depend on the other levels' counts.
    """
    m = tuple(int(v) for v in m)
    if len(m) != levels.r:
        raise LevelError(f"m has {len(m)} entries for {levels.r} levels")
    if not 0 <= r0 <= levels.r:
        raise LevelError(f"r0 = {r0} out of range 0..{levels.r}")
    widths = levels.widths
    for k in range(1, r0 + 1):
        if m[k - 1] != widths[k - 1]:
            raise LevelError(
                f"level {k} <= r0 must be fully sampled: m_k = {m[k - 1]}, "
                f"width = {widths[k - 1]}"
            )
    for k in range(r0 + 1, levels.r + 1):
        if m[k - 1] < 1 and not allow_empty:
            raise LevelError(f"level {k}: m_k must be >= 1 (or pass allow_empty)")
        if m[k - 1] < 0:
            raise LevelError(f"level {k}: negative m_k")

    ss = _as_seed_sequence(seed)
    streams = ss.spawn(levels.r)
    draws = []
    saturated = []
    for k in range(1, levels.r + 1):
        lo, hi = levels.level_range(k)
        if k <= r0:
            draws.append(tuple(range(lo, hi + 1)))
            saturated.append(True)
        else:
            rng = np.random.default_rng(streams[k - 1])
            draws.append(tuple(int(t) for t in rng.integers(lo, hi + 1, size=m[k - 1])))
            saturated.append(False)
    seed_val = int(seed) if isinstance(seed, (int, np.integer)) else None
    return SamplingScheme(
        levels=levels,
        m=m,
        draws=tuple(draws),
        saturated=tuple(saturated),
        r0=int(r0),
        seed=seed_val,
    )


@dataclass(frozen=True)
class MeasurementOperator:
    """Row-subsampled isometry with 1/sqrt(p_k) level scalings.

    ``k_factor`` is K = max_k (width_k / m_k) over nonempty levels, the
    worst inverse sampling density.  ``source_hash`` identifies the
    source isometry by content; the matrix itself is embedded only when
    requested at build time.
    """

    a: np.ndarray
    scheme: SamplingScheme
    p: tuple
    k_factor: float
    source_hash: str
    source: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self):
        return self.a.shape

    def to_dict(self, embed=False):
        d = {
            "scheme": self.scheme.to_dict(),
            "p": list(self.p),
            "K": self.k_factor,
            "source_hash": self.source_hash,
        }
        if embed:
            d["matrix_re"] = self.a.real.tolist()
            d["matrix_im"] = self.a.imag.tolist()
        return d


def build_measurement(u, scheme, embed_source=False):
    """Assemble the scaled measurement matrix from an isometry and a scheme."""
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"expected a square source matrix, got {u.shape}")
    if u.shape[0] != scheme.levels.n:
        raise ValueError(
            f"scheme levels end at {scheme.levels.n}, matrix is {u.shape[0]} x {u.shape[1]}"
        )
    p = scheme.densities()
    blocks = []
    for k in range(1, scheme.levels.r + 1):
        dk = scheme.draws[k - 1]
        if not dk:
            continue
        rows = np.asarray(dk, dtype=np.intp) - 1
        blocks.append(u[rows] / math.sqrt(p[k - 1]))
    a = np.vstack(blocks) if blocks else np.zeros((0, u.shape[1]), dtype=u.dtype)
    nonempty = [wk / mk for mk, wk in zip(scheme.m, scheme.levels.widths) if mk > 0]
    k_factor = max(nonempty) if nonempty else math.inf
    return MeasurementOperator(
        a=a,
        scheme=scheme,
        p=p,
        k_factor=float(k_factor),
        source_hash=matrix_content_hash(u),
        source=u if embed_source else None,
    )


@dataclass(frozen=True)
class AllocationResult:
    """Per-level sample counts from an allocation formula.

    ``raw`` holds the real-valued right-hand sides at the converged
    implicit log argument, before ceiling and clamping; ``clamped_low``
    and ``clamped_high`` flag levels pushed up to 1 or down to the level
    width.  ``log_arg`` is the converged total inside log(2m) (the
    unsaturated total when r0 > 0).
    """

    m: tuple
    raw: tuple
    clamped_low: tuple
    clamped_high: tuple
    iterations: int
    log_arg: int
    r0: int
    mode: str
    notes: tuple = ()

    @property
    def total(self):
        return sum(self.m)

    def k_factor(self, levels):
        return max(w / mk for w, mk in zip(levels.widths, self.m))

    def to_dict(self):
        return {
            "m": list(self.m),
            "raw": list(self.raw),
            "clamped_low": list(self.clamped_low),
            "clamped_high": list(self.clamped_high),
            "iterations": self.iterations,
            "log_arg": self.log_arg,
            "r0": self.r0,
            "mode": self.mode,
            "notes": list(self.notes),
        }


def _check_alloc_params(delta, eps, c):
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if c <= 0.0:
        raise ValueError(f"C must be positive, got {c}")


def _fixed_point_counts(base, widths, r0, log_factor, mode, notes, max_iterations=20):
    """Smallest fixed point of m_k = clamp(ceil(base_k * log_factor(arg))).

    ``arg`` is the grand total of m when r0 = 0, and the unsaturated
    total otherwise.  Iterating upward from the all-floor vector is
    monotone (the formula is non-decreasing in the log argument) and
    bounded by the widths, hence reaches the least fixed point.
    """
    r = len(widths)
    m = [widths[k] if k < r0 else 1 for k in range(r)]

    def step(current):
        arg = sum(current[k] for k in range(r0, r)) if r0 > 0 else sum(current)
        fac = log_factor(max(arg, 1))
        out = list(current)
        raw = [float("nan")] * r
        for k in range(r0, r):
            raw[k] = base[k] * fac
            out[k] = min(max(int(math.ceil(raw[k])), 1), widths[k])
        return out, raw, arg

    raw = [float("nan")] * r
    arg = 0
    for it in range(1, max_iterations + 1):
        new, raw, arg = step(m)
        if new == m:
            clamp_lo = tuple(k >= r0 and math.ceil(raw[k]) < 1 for k in range(r))
            clamp_hi = tuple(k >= r0 and math.ceil(raw[k]) > widths[k] for k in range(r))
            final_arg = sum(m[r0:]) if r0 > 0 else sum(m)
            return AllocationResult(
                m=tuple(m),
                raw=tuple(raw),
                clamped_low=clamp_lo,
                clamped_high=clamp_hi,
                iterations=it,
                log_arg=final_arg,
                r0=r0,
                mode=mode,
                notes=tuple(notes),
            )
        m = new
    raise RuntimeError(f"allocation fixed point not stable after {max_iterations} iterations")


def allocate_uniform(coh, s, delta, eps, c, r0=0):
    """Per-level counts from the general local-coherence condition.

    m_k = ceil(C * delta^-2 * (N_k - N_{k-1}) * (sum_l mu_{k,l} s_l)
               * (r log(2m) log(2N) log^2(2s) + log(1/eps))),
    solved as a fixed point in the total m appearing inside the log (the
    unsaturated total m~ when r0 > 0), each count clamped to
    [1, level width] and the first r0 levels taken in full.
    """
    if not isinstance(coh, CoherenceProfile):
        raise TypeError("allocate_uniform needs a CoherenceProfile")
    pattern = s if isinstance(s, SparsityPattern) else SparsityPattern(coh.sparsity, tuple(s))
    if pattern.levels.boundaries != coh.sparsity.boundaries:
        raise ValueError("pattern bound to different sparsity levels than the profile")
    _check_alloc_params(delta, eps, c)
    levels = coh.sampling
    r = levels.r
    if not 0 <= r0 <= r:
        raise ValueError(f"r0 = {r0} out of range 0..{r}")
    total_s = pattern.total
    if total_s < 1:
        raise ValueError("allocation needs at least one nonzero sparsity")

    widths = levels.widths
    n = levels.n
    svec = np.asarray(pattern.s, dtype=float)
    interference = coh.mu_local @ svec  # sum_l mu_{k,l} s_l
    base = [
        c * delta**-2 * widths[k] * float(interference[k]) for k in range(r)
    ]
    log_tail = math.log(1.0 / eps)
    ls = math.log(2.0 * total_s) ** 2
    ln = math.log(2.0 * n)

    def log_factor(arg):
        return r * math.log(2.0 * arg) * ln * ls + log_tail

    return _fixed_point_counts(base, widths, r0, log_factor, mode="uniform-general", notes=())


def haar_interference_weights(s, mode="uniform", r0=0):
    """Fourier--Haar interference kernel weights per band.

    w_k = s_k + sum_{l != k} decay^{|k-l|} s_l with decay = 1/2 for the
    uniform kernel and 1/sqrt(2) for the nonuniform kernel; the uniform
    kernel restricts the interference sum to bands l > r0, matching the
    fully-sampled variant of the condition.
    """
    s = tuple(int(v) for v in s)
    r = len(s)
    if mode == "uniform":
        decay = 0.5
        lo = r0
    elif mode == "nonuniform":
        decay = 1.0 / math.sqrt(2.0)
        lo = 0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    weights = []
    for k in range(r):
        w = float(s[k])
        for l in range(lo, r):
            if l != k:
                w += decay ** abs(k - l) * s[l]
        weights.append(w)
    return tuple(weights)


def _dyadic_sparsity_levels(s):
    r = len(s)
    return LevelStructure((0,) + tuple(2**k for k in range(1, r + 1)))


def allocate_haar(s, delta, eps, c, r0=0, mode="uniform"):
    """Per-band Fourier sample counts for the Fourier--Haar system.

    In "uniform" mode the closed-form local-coherence condition is used:
    m_k = ceil(C * delta^-2 * w_k * (log(2m~) log^2(2N) log^2(2s) + log(1/eps)))
    with the 2^-|k-l| interference kernel, solved as a fixed point in the
    total inside the log.  When r0 > 0 the first r0 bands are taken in
    full; this variant is valid under the hypothesis N_{r0} <= s_{r0+1}
    (the saturated bands must not out-measure the first free sparsity),
    which is checked and warned about when violated.

    In "nonuniform" mode the comparison condition
    m_k = ceil(C * w_k * log(s/eps) * log(N)) is used with the larger
    2^-|k-l|/2 kernel; it involves no delta (ignored) and no implicit
    total.
    """
    pattern = s if isinstance(s, SparsityPattern) else None
    if pattern is not None:
        levels = pattern.levels
        expected = _dyadic_sparsity_levels(pattern.s)
        if levels.boundaries != expected.boundaries:
            raise LevelError("Fourier--Haar allocation needs dyadic levels N_k = 2^k")
        s = pattern.s
    else:
        s = tuple(int(v) for v in s)
        levels = _dyadic_sparsity_levels(s)
        pattern = SparsityPattern(levels, s)
    _check_alloc_params(delta, eps, c)
    r = levels.r
    if not 0 <= r0 <= r:
        raise ValueError(f"r0 = {r0} out of range 0..{r}")
    total_s = pattern.total
    if total_s < 1:
        raise ValueError("allocation needs at least one nonzero sparsity")
    widths = levels.widths
    n = levels.n

    notes = []
    if mode == "uniform":
        if r0 >= 1:
            if r0 < r and levels.boundaries[r0] > s[r0]:
                msg = (
                    f"hypothesis N_r0 <= s_(r0+1) violated: "
                    f"{levels.boundaries[r0]} > {s[r0]}"
                )
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
                notes.append(msg)
        weights = haar_interference_weights(s, "uniform", r0)
        base = [c * delta**-2 * weights[k] for k in range(r)]
        log_tail = math.log(1.0 / eps)
        ls = math.log(2.0 * total_s) ** 2
        ln2 = math.log(2.0 * n) ** 2

        def log_factor(arg):
            return math.log(2.0 * arg) * ln2 * ls + log_tail

        return _fixed_point_counts(
            base, widths, r0, log_factor, mode="haar-uniform", notes=notes
        )
    if mode == "nonuniform":
        weights = haar_interference_weights(s, "nonuniform", r0)
        fac = math.log(total_s / eps) * math.log(n)
        base = [c * weights[k] for k in range(r)]

        def log_factor(arg):
            return fac

        return _fixed_point_counts(
            base, widths, r0, log_factor, mode="haar-nonuniform", notes=notes
        )
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class NonuniformCheck:
    """Per-sparsity-level sums of the relative-sparsity feasibility check."""

    lhs: np.ndarray
    passed: np.ndarray
    all_passed: bool

    def to_dict(self):
        return {
            "lhs": self.lhs.tolist(),
            "passed": [bool(v) for v in self.passed],
            "all_passed": self.all_passed,
        }


def check_nonuniform_condition(coh, relative_sparsities, m_hat, c=1.0):
    """Feasibility check 1 >= C * sum_k (width_k/m^_k - 1) mu~_{k,l} S_k.

    Evaluates the left-hand sum for every sparsity level l and reports
    pass/fail.  This is a check of a proposed m^, not a solver: the
    condition is implicit in m^.
    """
    if not isinstance(coh, CoherenceProfile):
        raise TypeError("check_nonuniform_condition needs a CoherenceProfile")
    m_hat = np.asarray(m_hat, dtype=float)
    s_rel = np.asarray(relative_sparsities, dtype=float)
    widths = np.asarray(coh.sampling.widths, dtype=float)
    if m_hat.shape != widths.shape:
        raise ValueError("m_hat must have one entry per sampling level")
    if np.any(m_hat < 1):
        raise ValueError("m_hat entries must be >= 1")
    if np.any(s_rel < 0):
        raise ValueError("relative sparsities must be non-negative")
    factor = (widths / m_hat - 1.0) * s_rel  # per sampling level k
    lhs = c * (coh.mu_tilde.T @ factor)  # one sum per sparsity level l
    passed = lhs <= 1.0
    return NonuniformCheck(lhs=lhs, passed=passed, all_passed=bool(np.all(passed)))
