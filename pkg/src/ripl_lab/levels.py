"""Level partitions, per-level sparsity budgets, support enumeration and
best level-sparse approximation.

A level structure partitions the index set {1..N} into r contiguous
levels via a strictly increasing boundary vector (0, B_1, ..., B_r = N);
level k covers indices {B_{k-1}+1, ..., B_k}.  The same structure is
used both for sparsity levels and for sampling levels.  A sparsity
pattern attaches a non-negative per-level budget s_k <= B_k - B_{k-1}.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations, product
from typing import NamedTuple

import numpy as np

__all__ = [
    "LevelError",
    "LevelStructure",
    "SparsityPattern",
    "SupportSet",
    "validate_boundaries",
    "is_sparse_in_levels",
    "best_approx_in_levels",
    "enumerate_supports",
    "count_supports",
    "random_sparse_vector",
]


class LevelError(ValueError):
    """A level structure or sparsity pattern violates its invariants."""


def validate_boundaries(boundaries, n=None):
    """Validate a candidate boundary vector (0, B_1, ..., B_r).

    Raises :class:`LevelError` if the vector does not start at 0, is not
    strictly increasing (an equal pair would mean an empty level), or its
    last entry differs from an explicitly expected dimension ``n``.
    """
    b = tuple(int(v) for v in boundaries)
    if len(b) < 2:
        raise LevelError("need at least one level: boundaries (0, ..., N)")
    if b[0] != 0:
        raise LevelError(f"boundaries must start at 0, got {b[0]}")
    for lo, hi in zip(b, b[1:]):
        if hi == lo:
            raise LevelError(f"empty level: repeated boundary {hi}")
        if hi < lo:
            raise LevelError(f"non-monotone boundaries: {lo} followed by {hi}")
    if n is not None and b[-1] != int(n):
        raise LevelError(f"last boundary {b[-1]} != ambient dimension {n}")
    return b


@dataclass(frozen=True)
class LevelStructure:
    """Partition of {1..N} into r contiguous levels.

    ``boundaries`` includes the leading 0, i.e. (0, B_1, ..., B_r) with
    B_r = N.  Indices are 1-based in all public interfaces; use
    :meth:`level_slice` for 0-based numpy slicing.
    """

    boundaries: tuple

    def __post_init__(self):
        object.__setattr__(self, "boundaries", validate_boundaries(self.boundaries))

    @property
    def r(self):
        return len(self.boundaries) - 1

    @property
    def n(self):
        return self.boundaries[-1]

    @property
    def widths(self):
        return tuple(hi - lo for lo, hi in zip(self.boundaries, self.boundaries[1:]))

    def level_range(self, k):
        """1-based inclusive index range (lo, hi) of level k (1-based)."""
        if not 1 <= k <= self.r:
            raise LevelError(f"level {k} out of range 1..{self.r}")
        return self.boundaries[k - 1] + 1, self.boundaries[k]

    def level_slice(self, k):
        """0-based slice of level k for numpy indexing."""
        lo, hi = self.level_range(k)
        return slice(lo - 1, hi)

    def level_of_index(self, j):
        """Level number containing 1-based index j."""
        if not 1 <= j <= self.n:
            raise LevelError(f"index {j} out of range 1..{self.n}")
        for k in range(1, self.r + 1):
            if j <= self.boundaries[k]:
                return k
        raise AssertionError("unreachable")

    def to_dict(self):
        return {"N": self.n, "boundaries": list(self.boundaries)}

    @classmethod
    def from_dict(cls, d):
        validate_boundaries(d["boundaries"], d.get("N"))
        return cls(tuple(d["boundaries"]))

    @classmethod
    def single_level(cls, n):
        return cls((0, int(n)))


@dataclass(frozen=True)
class SparsityPattern:
    """Per-level sparsity budgets s = (s_1, ..., s_r) bound to a structure."""

    levels: LevelStructure
    s: tuple

    def __post_init__(self):
        s = tuple(int(v) for v in self.s)
        object.__setattr__(self, "s", s)
        if len(s) != self.levels.r:
            raise LevelError(f"pattern length {len(s)} != level count {self.levels.r}")
        for k, (sk, wk) in enumerate(zip(s, self.levels.widths), start=1):
            if sk < 0:
                raise LevelError(f"negative sparsity s_{k} = {sk}")
            if sk > wk:
                raise LevelError(f"s_{k} = {sk} exceeds level width {wk}")

    @property
    def total(self):
        return sum(self.s)

    @property
    def ratio(self):
        """Sparsity ratio rho = max s_k / s_l over pairs with s_l > 0.

        Defined only over levels with positive budget.  A mix of zero and
        positive budgets gives +inf (with a warning), since the defining
        maximum is unbounded; the degenerate all-zero pattern returns 1.0.
        """
        pos = [v for v in self.s if v > 0]
        if not pos:
            return 1.0
        if len(pos) < len(self.s):
            warnings.warn(
                "sparsity ratio is +inf: some levels have zero budget "
                "while others are positive",
                RuntimeWarning,
                stacklevel=2,
            )
            return math.inf
        return max(pos) / min(pos)

    def doubled(self):
        """Pattern with budgets 2 s_k, each clamped to its level width.

        Returns (pattern, clamped) where ``clamped`` flags levels at which
        2 s_k exceeded the width and was reduced.
        """
        widths = self.levels.widths
        s2 = tuple(min(2 * sk, wk) for sk, wk in zip(self.s, widths))
        clamped = tuple(2 * sk > wk for sk, wk in zip(self.s, widths))
        return SparsityPattern(self.levels, s2), clamped

    def to_dict(self):
        d = self.levels.to_dict()
        d["s"] = list(self.s)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(LevelStructure.from_dict(d), tuple(d["s"]))


class SupportSet(NamedTuple):
    """A support Delta within {1..N} with its per-level counts."""

    indices: tuple
    counts: tuple


def _check_length(x, pattern):
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != pattern.levels.n:
        raise LevelError(
            f"vector length {x.shape} incompatible with N = {pattern.levels.n}"
        )
    return x


def is_sparse_in_levels(x, pattern, tol=0.0):
    """True iff x has at most s_k nonzeros in each level.

    Entries with modulus <= ``tol`` count as zero; the default tol = 0.0
    is an exact zero test.
    """
    x = _check_length(x, pattern)
    nz = np.abs(x) > tol
    for k in range(1, pattern.levels.r + 1):
        if int(np.count_nonzero(nz[pattern.levels.level_slice(k)])) > pattern.s[k - 1]:
            return False
    return True


def best_approx_in_levels(x, pattern):
    """Best approximation of x by a vector with <= s_k nonzeros per level.

    Within each level the s_k largest-magnitude entries are kept and the
    rest zeroed; magnitude ties are broken toward the lowest index.
    Returns ``(z, sigma)`` where sigma = ||x - z||_1 is the l1 error,
    which is the minimal l1 distance from x to the level-sparse set.
    """
    x = _check_length(x, pattern)
    z = np.zeros_like(x)
    for k in range(1, pattern.levels.r + 1):
        sl = pattern.levels.level_slice(k)
        sk = pattern.s[k - 1]
        if sk == 0:
            continue
        block = x[sl]
        # stable sort on -|x|: equal magnitudes keep ascending index order
        order = np.argsort(-np.abs(block), kind="stable")[:sk]
        kept = np.zeros_like(block)
        kept[order] = block[order]
        z[sl] = kept
    sigma = float(np.sum(np.abs(x - z)))
    return z, sigma


def _level_subsets(lo, hi, smax, exact):
    """Subsets of the 1-based range {lo..hi}, lexicographically ordered."""
    rng = range(lo, hi + 1)
    if exact:
        return list(combinations(rng, smax))
    subsets = []
    for c in range(smax + 1):
        subsets.extend(combinations(rng, c))
    subsets.sort()
    return subsets


def enumerate_supports(pattern, exact_counts=True):
    """Yield every admissible support, in lexicographic order.

    With ``exact_counts`` each level contributes exactly s_k indices;
    otherwise all counts <= s_k are enumerated.  The sequence is lazy and
    duplicate-free; the caller is responsible for bounding consumption
    (see :func:`count_supports`).
    """
    levels = pattern.levels
    per_level = []
    for k in range(1, levels.r + 1):
        lo, hi = levels.level_range(k)
        per_level.append(_level_subsets(lo, hi, pattern.s[k - 1], exact_counts))

    def gen():
        for choice in product(*per_level):
            indices = tuple(j for part in choice for j in part)
            counts = tuple(len(part) for part in choice)
            yield SupportSet(indices, counts)

    return gen()


def count_supports(pattern, exact_counts=True):
    """Number of supports :func:`enumerate_supports` would yield."""
    total = 1
    for sk, wk in zip(pattern.s, pattern.levels.widths):
        if exact_counts:
            total *= math.comb(wk, sk)
        else:
            total *= sum(math.comb(wk, c) for c in range(sk + 1))
    return total


def random_sparse_vector(pattern, rng, magnitude_model="unit"):
    """Random vector with exactly s_k nonzeros in each level.

    ``magnitude_model`` is "unit" (unimodular entries, uniform phase) or
    "gaussian" (standard complex normal entries).  Deterministic for a
    given ``rng`` state.
    """
    if magnitude_model not in ("unit", "gaussian"):
        raise ValueError(f"unknown magnitude model {magnitude_model!r}")
    levels = pattern.levels
    x = np.zeros(levels.n, dtype=np.complex128)
    for k in range(1, levels.r + 1):
        sk = pattern.s[k - 1]
        if sk == 0:
            continue
        lo, hi = levels.level_range(k)
        pick = rng.choice(hi - lo + 1, size=sk, replace=False) + (lo - 1)
        if magnitude_model == "unit":
            vals = np.exp(2j * np.pi * rng.random(sk))
        else:
            vals = (rng.standard_normal(sk) + 1j * rng.standard_normal(sk)) / np.sqrt(2)
        x[pick] = vals
    return x
