import math

import numpy as np
import pytest

from core.exceptions import DimensionMismatchError, TreeSearchError
from core.treepolicy import (
    Leaf,
    Split,
    TreeClassSpec,
    brute_oracle,
    candidate_thresholds,
    canonical_tree,
    depth,
    exact_search,
    format_tree,
    parse_tree,
    predict,
    predict_batch,
    tree_objective,
    validate_tree,
)


def _random_tree(gen, grid, d, K):
    if d == 0:
        return Leaf(int(gen.integers(K)))
    f = int(gen.integers(len(grid)))
    t = float(grid[f][gen.integers(len(grid[f]))])
    left = _random_tree(gen, grid, d - 1, K)
    return Split(f, t, left, _random_tree(gen, grid, d - 1, K))


def _instance(gen, T, p, K):
    X = np.round(gen.normal(size=(T, p)), 1)
    S = gen.normal(size=(T, K))
    return S, X


class TestPredict:
    STUMP = Split(0, 0.0, Leaf(0), Leaf(1))

    def test_leaf(self):
        assert predict(Leaf(1), np.array([3.0, -2.0])) == 1

    def test_stump_routing(self):
        assert predict(self.STUMP, np.array([-1.0, 5.0])) == 0
        assert predict(self.STUMP, np.array([1.0, 5.0])) == 1

    def test_boundary_goes_left(self):
        assert predict(self.STUMP, np.array([0.0, 0.0])) == 0

    def test_batch_agrees(self, rng):
        tree = Split(1, 0.2, Split(0, -0.5, Leaf(2), Leaf(0)), Leaf(1))
        X = rng.normal(size=(200, 2))
        expected = [predict(tree, x) for x in X]
        np.testing.assert_array_equal(predict_batch(tree, X), expected)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            predict(self.STUMP, np.zeros(3), p=2)
        with pytest.raises(DimensionMismatchError):
            predict(Split(4, 0.0, Leaf(0), Leaf(1)), np.zeros(2))
        with pytest.raises(DimensionMismatchError):
            predict_batch(self.STUMP, np.zeros(3))


class TestTreeHelpers:
    def test_canonical_tree(self):
        assert canonical_tree(0) == Leaf(0)
        assert canonical_tree(2) == Split(
            0,
            -math.inf,
            Split(0, -math.inf, Leaf(0), Leaf(0)),
            Split(0, -math.inf, Leaf(0), Leaf(0)),
        )
        assert depth(canonical_tree(3)) == 3

    def test_candidate_thresholds(self):
        X = np.array([[3.0, 1.0], [1.0, 1.0], [2.0, 1.0], [3.0, 1.0]])
        grid = candidate_thresholds(X)
        np.testing.assert_array_equal(grid[0], [-np.inf, 1.5, 2.5, np.inf])
        np.testing.assert_array_equal(grid[1], [-np.inf, np.inf])

    def test_validate_tree(self):
        spec = TreeClassSpec(L=1, p=2, K=2)
        validate_tree(Split(1, 0.0, Leaf(0), Leaf(1)), spec)
        for bad in (
            Split(2, 0.0, Leaf(0), Leaf(1)),
            Split(0, 0.0, Leaf(0), Leaf(2)),
            Split(0, math.nan, Leaf(0), Leaf(1)),
            canonical_tree(2),
        ):
            with pytest.raises(TreeSearchError):
                validate_tree(bad, spec)

    def test_spec_rejects_depth_zero(self):
        with pytest.raises(TreeSearchError):
            TreeClassSpec(L=0, p=2, K=2)


class TestExactSearch:
    def test_worked_example(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        S = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        result = exact_search(S, X, TreeClassSpec(L=1, p=1, K=2))
        assert result.tree == Split(0, 2.5, Leaf(0), Leaf(1))
        assert result.objective == 4.0

    def test_single_arm(self, rng):
        S = rng.normal(size=(30, 1))
        X = rng.normal(size=(30, 2))
        result = exact_search(S, X, TreeClassSpec(L=1, p=2, K=1))
        assert result.tree == canonical_tree(1)
        assert result.objective == pytest.approx(S[:, 0].sum())

    @pytest.mark.parametrize("L", [1, 2, 3])
    def test_all_zero_scores(self, rng, L):
        X = rng.normal(size=(12, 2))
        result = exact_search(np.zeros((12, 3)), X, TreeClassSpec(L=L, p=2, K=3))
        assert result.tree == canonical_tree(L)
        assert result.objective == 0.0

    def test_single_row(self):
        S = np.array([[0.2, 1.5, -0.3]])
        result = exact_search(S, np.array([[0.7]]), TreeClassSpec(L=2, p=1, K=3))
        assert predict(result.tree, np.array([0.7])) == 1
        assert result.objective == 1.5

    def test_matches_oracle(self):
        gen = np.random.default_rng(2718)
        for i in range(200):
            T = int(gen.integers(1, 41))
            p = int(gen.integers(1, 4))
            K = int(gen.integers(2, 4))
            L = 1 + i % 2
            S, X = _instance(gen, T, p, K)
            spec = TreeClassSpec(L=L, p=p, K=K)
            fast = exact_search(S, X, spec)
            slow = brute_oracle(S, X, spec)
            assert format_tree(fast.tree) == format_tree(slow.tree)
            assert fast.objective == slow.objective

    @pytest.mark.parametrize("L", [1, 2, 3])
    def test_no_tree_beats_search(self, L):
        gen = np.random.default_rng(100 + L)
        S, X = _instance(gen, 35, 3, 3)
        spec = TreeClassSpec(L=L, p=3, K=3)
        best = exact_search(S, X, spec).objective
        grid = candidate_thresholds(X)
        for _ in range(1000):
            tree = _random_tree(gen, grid, L, 3)
            assert tree_objective(tree, S, X) <= best + 1e-9

    def test_depth_three_dominates_depth_two(self):
        gen = np.random.default_rng(5)
        S, X = _instance(gen, 30, 2, 2)
        two = exact_search(S, X, TreeClassSpec(L=2, p=2, K=2)).objective
        three = exact_search(S, X, TreeClassSpec(L=3, p=2, K=2)).objective
        assert three >= two - 1e-12

    def test_row_permutation_invariant(self, rng):
        S, X = _instance(rng, 40, 3, 2)
        spec = TreeClassSpec(L=2, p=3, K=2)
        perm = rng.permutation(40)
        a = exact_search(S, X, spec)
        b = exact_search(S[perm], X[perm], spec)
        assert a.tree == b.tree
        assert a.objective == pytest.approx(b.objective, abs=1e-12)

    def test_constant_shift(self, rng):
        S, X = _instance(rng, 25, 2, 3)
        spec = TreeClassSpec(L=2, p=2, K=3)
        base = exact_search(S, X, spec)
        shifted = exact_search(S + 1.25, X, spec)
        assert tree_objective(shifted.tree, S, X) == pytest.approx(base.objective)
        assert shifted.objective == pytest.approx(base.objective + 25 * 1.25)

    def test_objective_recomputes(self, rng):
        S, X = _instance(rng, 30, 2, 2)
        result = exact_search(S, X, TreeClassSpec(L=2, p=2, K=2))
        assert result.objective == tree_objective(result.tree, S, X)

    def test_shape_errors(self):
        spec = TreeClassSpec(L=1, p=2, K=2)
        with pytest.raises(TreeSearchError):
            exact_search(np.zeros((4, 3)), np.zeros((4, 2)), spec)
        with pytest.raises(DimensionMismatchError):
            exact_search(np.zeros((4, 2)), np.zeros((3, 2)), spec)
        with pytest.raises(TreeSearchError):
            exact_search(np.full((4, 2), np.nan), np.zeros((4, 2)), spec)


class TestBruteOracle:
    def test_size_guard(self):
        with pytest.raises(TreeSearchError, match="too large"):
            brute_oracle(np.zeros((41, 2)), np.zeros((41, 1)), TreeClassSpec(1, 1, 2))
        with pytest.raises(TreeSearchError):
            brute_oracle(np.zeros((5, 2)), np.zeros((5, 1)), TreeClassSpec(3, 1, 2))

    def test_all_zero_scores(self):
        X = np.arange(6.0).reshape(3, 2)
        result = brute_oracle(np.zeros((3, 2)), X, TreeClassSpec(L=2, p=2, K=2))
        assert result.tree == canonical_tree(2)


class TestTextForm:
    def test_round_trip(self):
        tree = Split(
            2,
            0.1 + 0.2,
            Split(0, -math.inf, Leaf(0), Leaf(3)),
            Split(1, math.inf, Leaf(1), Leaf(2)),
        )
        assert parse_tree(format_tree(tree)) == tree

    def test_format(self):
        text = format_tree(Split(0, 2.5, Leaf(0), Leaf(1)))
        assert text == "node(f=0, t=2.5, L=leaf(a=0), R=leaf(a=1))"

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "leaf(a=)",
            "node(f=0, t=abc, L=leaf(a=0), R=leaf(a=1))",
            "node(f=0, t=1, L=leaf(a=0))",
            "leaf(a=1) leaf(a=2)",
        ],
    )
    def test_malformed(self, text):
        with pytest.raises(TreeSearchError):
            parse_tree(text)
