import math

import numpy as np
import pytest

from ripl_lab import (
    LevelError,
    LevelStructure,
    SparsityPattern,
    best_approx_in_levels,
    count_supports,
    enumerate_supports,
    is_sparse_in_levels,
    random_sparse_vector,
    validate_boundaries,
)


def test_validate_accepts_simple_partition():
    assert validate_boundaries((0, 2, 4), 4) == (0, 2, 4)


def test_validate_rejects_non_monotone():
    with pytest.raises(LevelError, match="non-monotone"):
        validate_boundaries((0, 4, 2), 4)


def test_validate_rejects_wrong_last_boundary():
    with pytest.raises(LevelError, match="!= ambient"):
        validate_boundaries((0, 2, 3), 4)


def test_validate_rejects_empty_level():
    with pytest.raises(LevelError, match="empty level"):
        validate_boundaries((0, 2, 2, 4))


def test_validate_requires_leading_zero():
    with pytest.raises(LevelError):
        validate_boundaries((1, 4))


def test_level_structure_basics():
    ls = LevelStructure((0, 2, 4, 8))
    assert ls.r == 3
    assert ls.n == 8
    assert ls.widths == (2, 2, 4)
    assert ls.level_range(1) == (1, 2)
    assert ls.level_range(3) == (5, 8)
    assert ls.level_of_index(5) == 3
    assert LevelStructure.from_dict(ls.to_dict()) == ls


def test_pattern_rejects_budget_over_width():
    ls = LevelStructure((0, 2, 4))
    with pytest.raises(LevelError, match="exceeds level width"):
        SparsityPattern(ls, (3, 1))


def test_pattern_ratio_examples():
    ls = LevelStructure((0, 4, 16))
    assert SparsityPattern(ls, (2, 8)).ratio == 4.0
    assert SparsityPattern(ls, (3, 3)).ratio == 1.0
    with pytest.warns(RuntimeWarning, match="zero budget"):
        assert SparsityPattern(ls, (2, 0)).ratio == math.inf
    assert SparsityPattern(ls, (0, 0)).ratio == 1.0


def test_is_sparse_in_levels_examples():
    p = SparsityPattern(LevelStructure((0, 2, 4)), (1, 1))
    assert is_sparse_in_levels([1, 0, 0, 2], p)
    assert not is_sparse_in_levels([1, 1, 0, 0], p)
    assert is_sparse_in_levels(np.zeros(4), p)


def test_is_sparse_tolerance_variant():
    p = SparsityPattern(LevelStructure((0, 2, 4)), (1, 1))
    x = [1, 1e-9, 0, 2]
    assert not is_sparse_in_levels(x, p)
    assert is_sparse_in_levels(x, p, tol=1e-8)


def test_is_sparse_dimension_mismatch():
    p = SparsityPattern(LevelStructure((0, 2, 4)), (1, 1))
    with pytest.raises(LevelError):
        is_sparse_in_levels([1, 0, 0], p)


def test_best_approx_example():
    p = SparsityPattern(LevelStructure((0, 2, 4)), (1, 1))
    z, sigma = best_approx_in_levels(np.array([3.0, 1.0, 2.0, 0.0]), p)
    assert np.array_equal(z, [3, 0, 2, 0])
    assert sigma == 1.0


def test_best_approx_admissible_input_unchanged():
    p = SparsityPattern(LevelStructure((0, 2, 4)), (1, 1))
    x = np.array([0, 2j, 0, -1], dtype=complex)
    z, sigma = best_approx_in_levels(x, p)
    assert np.array_equal(z, x)
    assert sigma == 0.0


def test_best_approx_full_budget_is_identity():
    ls = LevelStructure((0, 3, 5))
    p = SparsityPattern(ls, ls.widths)
    x = np.arange(5, dtype=complex)
    z, sigma = best_approx_in_levels(x, p)
    assert np.array_equal(z, x)
    assert sigma == 0.0


def test_best_approx_tie_breaks_to_lowest_index():
    p = SparsityPattern(LevelStructure((0, 3)), (1,))
    z, sigma = best_approx_in_levels(np.array([2.0, 2.0, 2.0]), p)
    assert np.array_equal(z, [2, 0, 0])
    assert sigma == 4.0


def test_best_approx_idempotent():
    rng = np.random.default_rng(5)
    p = SparsityPattern(LevelStructure((0, 3, 7, 10)), (1, 2, 1))
    x = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    z, _ = best_approx_in_levels(x, p)
    z2, sigma2 = best_approx_in_levels(z, p)
    assert np.array_equal(z, z2)
    assert sigma2 == 0.0


def test_best_approx_matches_support_bruteforce():
    # sigma equals the minimum over all admissible supports of the l1 tail
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(4, 13))
        cut = int(rng.integers(1, n))
        ls = LevelStructure((0, cut, n))
        s = (int(rng.integers(0, cut + 1)), int(rng.integers(0, n - cut + 1)))
        p = SparsityPattern(ls, s)
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        _, sigma = best_approx_in_levels(x, p)
        best = min(
            float(np.sum(np.abs(x))) - float(np.sum(np.abs(x[np.asarray(sup.indices, dtype=int) - 1])))
            if sup.indices
            else float(np.sum(np.abs(x)))
            for sup in enumerate_supports(p, exact_counts=False)
        )
        assert sigma == pytest.approx(best, abs=1e-12)


def test_enumerate_exact_example():
    p = SparsityPattern(LevelStructure((0, 2, 4)), (1, 1))
    sups = [s.indices for s in enumerate_supports(p, exact_counts=True)]
    assert sups == [(1, 3), (1, 4), (2, 3), (2, 4)]


def test_enumerate_zero_budget_single_empty():
    p = SparsityPattern(LevelStructure((0, 2, 4)), (0, 0))
    sups = list(enumerate_supports(p, exact_counts=True))
    assert len(sups) == 1
    assert sups[0].indices == ()


def test_enumerate_count_matches_binomials():
    p = SparsityPattern(LevelStructure((0, 3, 7, 12)), (2, 1, 3))
    expected = math.comb(3, 2) * math.comb(4, 1) * math.comb(5, 3)
    assert count_supports(p, exact_counts=True) == expected
    assert sum(1 for _ in enumerate_supports(p, exact_counts=True)) == expected


def test_enumerate_le_counts_no_duplicates():
    p = SparsityPattern(LevelStructure((0, 3, 6)), (2, 1))
    sups = [s.indices for s in enumerate_supports(p, exact_counts=False)]
    assert len(sups) == len(set(sups)) == count_supports(p, exact_counts=False)
    assert () in sups


def test_enumerate_counts_consistent_with_indices():
    p = SparsityPattern(LevelStructure((0, 2, 5)), (1, 2))
    for sup in enumerate_supports(p, exact_counts=False):
        c1 = sum(1 for j in sup.indices if j <= 2)
        c2 = sum(1 for j in sup.indices if j > 2)
        assert sup.counts == (c1, c2)


def test_random_sparse_vector_contract():
    p = SparsityPattern(LevelStructure((0, 4, 12)), (2, 3))
    rng = np.random.default_rng(11)
    x = random_sparse_vector(p, rng, "unit")
    assert is_sparse_in_levels(x, p)
    assert np.count_nonzero(x[:4]) == 2
    assert np.count_nonzero(x[4:]) == 3
    mods = np.abs(x[np.abs(x) > 0])
    assert np.all(np.abs(mods - 1.0) <= 1e-12)


def test_random_sparse_vector_deterministic():
    p = SparsityPattern(LevelStructure((0, 4, 12)), (2, 3))
    x1 = random_sparse_vector(p, np.random.default_rng(42), "gaussian")
    x2 = random_sparse_vector(p, np.random.default_rng(42), "gaussian")
    assert np.array_equal(x1, x2)


def test_pattern_serialization_roundtrip():
    p = SparsityPattern(LevelStructure((0, 2, 4, 8)), (1, 0, 3))
    d = p.to_dict()
    assert d == {"N": 8, "boundaries": [0, 2, 4, 8], "s": [1, 0, 3]}
    assert SparsityPattern.from_dict(d) == p
