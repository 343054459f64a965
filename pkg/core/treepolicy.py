"""
Decision-Tree Policy Module

Depth-L axis-aligned decision trees mapping contexts to actions, and the exact
search that maximizes sum_t scores[t, tree(x_t)] over the class.

Thresholds are drawn from a global candidate grid per feature: -inf, the
midpoints between consecutive distinct values of that feature, and +inf.
Rows go left when x[feature] <= threshold. Trees are always complete; a
shallower tree is represented by a degenerate split.

Tie order: among trees whose objective is within the tie tolerance of the
maximum, the tree with the smallest nested key wins, where
key(Split) = (feature, threshold, key(left), key(right)) and
key(Leaf) = (action,).

Usage:
    from core.treepolicy import TreeClassSpec, exact_search, format_tree

    result = exact_search(scores, contexts, TreeClassSpec(L=2, p=3, K=2))
    print(format_tree(result.tree), result.objective)
"""

import logging
import math
import re
from dataclasses import dataclass

import numpy as np

from config import settings

from .exceptions import DimensionMismatchError, TreeSearchError
from .tree_kernels import max_prefix_sweep

logger = logging.getLogger(__name__)

# Size guard of the enumeration oracle
ORACLE_MAX_T = 40
ORACLE_MAX_P = 3
ORACLE_MAX_L = 2
ORACLE_MAX_K = 3


@dataclass(frozen=True)
class Leaf:
    action: int


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "Leaf | Split"
    right: "Leaf | Split"


TreePolicy = Leaf | Split


@dataclass(frozen=True)
class TreeClassSpec:
    """Depth-L trees over p features choosing among K actions."""

    L: int
    p: int
    K: int

    def __post_init__(self):
        if self.L < 1:
            raise TreeSearchError(f"Tree depth must be at least 1, got {self.L}")
        if self.p < 1 or self.K < 1:
            raise TreeSearchError(f"Need p >= 1 and K >= 1, got p={self.p}, K={self.K}")


@dataclass(frozen=True)
class SearchResult:
    tree: TreePolicy
    objective: float


def depth(tree: TreePolicy) -> int:
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(depth(tree.left), depth(tree.right))


def tree_key(tree: TreePolicy) -> tuple:
    """Sort key defining the tie order."""
    if isinstance(tree, Leaf):
        return (tree.action,)
    return (tree.feature, tree.threshold, tree_key(tree.left), tree_key(tree.right))


def canonical_tree(d: int) -> TreePolicy:
    """First depth-d tree in tie order: feature 0, threshold -inf, action 0."""
    if d == 0:
        return Leaf(0)
    sub = canonical_tree(d - 1)
    return Split(0, -math.inf, sub, sub)


def validate_tree(tree: TreePolicy, spec: TreeClassSpec) -> None:
    """Raises TreeSearchError unless `tree` belongs to the class."""
    if depth(tree) > spec.L:
        raise TreeSearchError(f"Tree depth {depth(tree)} exceeds L={spec.L}")
    stack = [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Leaf):
            if not 0 <= node.action < spec.K:
                raise TreeSearchError(
                    f"Leaf action {node.action} outside 0..{spec.K - 1}"
                )
            continue
        if not 0 <= node.feature < spec.p:
            raise TreeSearchError(
                f"Split feature {node.feature} outside 0..{spec.p - 1}"
            )
        if math.isnan(node.threshold):
            raise TreeSearchError("Split threshold is NaN")
        stack.extend((node.left, node.right))


def predict(tree: TreePolicy, x: np.ndarray, p: int | None = None) -> int:
    """Routes one context to its leaf action."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or (p is not None and x.shape[0] != p):
        raise DimensionMismatchError(f"Context has shape {x.shape}, expected ({p},)")
    node = tree
    while isinstance(node, Split):
        if node.feature >= x.shape[0]:
            raise DimensionMismatchError(
                f"Tree splits on feature {node.feature} of a {x.shape[0]}-dim context"
            )
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.action


def predict_batch(tree: TreePolicy, contexts: np.ndarray) -> np.ndarray:
    """Vectorized `predict` over the rows of an n x p matrix."""
    X = np.asarray(contexts, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatchError(f"Contexts must be 2-D, got shape {X.shape}")
    out = np.empty(X.shape[0], dtype=np.int64)
    _route(tree, X, np.arange(X.shape[0]), out)
    return out


def _route(node: TreePolicy, X: np.ndarray, rows: np.ndarray, out: np.ndarray):
    if isinstance(node, Leaf):
        out[rows] = node.action
        return
    if node.feature >= X.shape[1]:
        raise DimensionMismatchError(
            f"Tree splits on feature {node.feature} of {X.shape[1]}-dim contexts"
        )
    goes_left = X[rows, node.feature] <= node.threshold
    _route(node.left, X, rows[goes_left], out)
    _route(node.right, X, rows[~goes_left], out)


def tree_objective(tree: TreePolicy, scores: np.ndarray, contexts: np.ndarray) -> float:
    """Exactly rounded sum of scores[t, tree(x_t)]."""
    actions = predict_batch(tree, contexts)
    return math.fsum(scores[np.arange(scores.shape[0]), actions].tolist())


def candidate_thresholds(contexts: np.ndarray) -> list[np.ndarray]:
    """Per feature: -inf, midpoints of consecutive distinct values, +inf."""
    X = np.asarray(contexts, dtype=float)
    grid = []
    for f in range(X.shape[1]):
        values = np.unique(X[:, f])
        mids = (values[:-1] + values[1:]) / 2.0
        grid.append(np.concatenate(([-np.inf], mids, [np.inf])))
    return grid


def tie_tolerance(scores: np.ndarray) -> float:
    return settings.TIE_TOLERANCE * max(1.0, float(np.abs(scores).sum()))


def _first_near_max(values: np.ndarray, tol: float) -> int:
    return int(np.flatnonzero(values >= values.max() - tol)[0])


def _check_instance(scores, contexts, spec: TreeClassSpec):
    S = np.asarray(scores, dtype=float)
    X = np.asarray(contexts, dtype=float)
    if S.ndim != 2 or S.shape[0] < 1:
        raise TreeSearchError(f"Scores must be a non-empty T x K matrix, got {S.shape}")
    if S.shape[1] != spec.K:
        raise TreeSearchError(f"Scores have {S.shape[1]} columns, expected K={spec.K}")
    if X.shape != (S.shape[0], spec.p):
        raise DimensionMismatchError(
            f"Contexts have shape {X.shape}, expected ({S.shape[0]}, {spec.p})"
        )
    if not np.all(np.isfinite(S)):
        raise TreeSearchError("Scores must be finite")
    return S, X


class _ExactSearch:
    """Recursive exact maximization over row subsets.

    For a node holding rows R and remaining depth d, the value of splitting
    on feature f after the k smallest rows (in f order) is the best depth d-1
    value of the prefix plus that of the suffix. Depth 1 uses cumulative
    per-arm sums; depth 2 sweeps a second feature with the compiled
    prefix-maximum kernel; deeper levels recurse per cut.
    """

    def __init__(self, S: np.ndarray, X: np.ndarray):
        self.S = S
        self.X = X
        self.K = S.shape[1]
        self.grid = candidate_thresholds(X)
        self.cand_feature = np.concatenate(
            [np.full(len(c), f) for f, c in enumerate(self.grid)]
        )
        self.cand_threshold = np.concatenate(self.grid)
        self.tol = tie_tolerance(S)

    def _orders(self, rows: np.ndarray) -> list[np.ndarray]:
        Xs = self.X[rows]
        return [np.argsort(Xs[:, f], kind="stable") for f in range(Xs.shape[1])]

    def _groups(self, rows: np.ndarray) -> list[tuple[np.ndarray, int]]:
        groups = []
        for f in range(self.X.shape[1]):
            uniq, inverse = np.unique(self.X[rows, f], return_inverse=True)
            groups.append((inverse.reshape(-1).astype(np.int64), len(uniq)))
        return groups

    def _depth1_cuts(self, Ss: np.ndarray, order: np.ndarray) -> np.ndarray:
        pref = np.vstack([np.zeros(self.K), np.cumsum(Ss[order], axis=0)])
        return pref.max(axis=1) + (pref[-1] - pref).max(axis=1)

    def _depth2_cuts(self, Ss: np.ndarray, order: np.ndarray, groups) -> np.ndarray:
        n = Ss.shape[0]
        pref = np.vstack([np.zeros(self.K), np.cumsum(Ss[order], axis=0)])
        suf = pref[-1] - pref
        left = pref.max(axis=1)
        right = suf.max(axis=1)
        order = np.ascontiguousarray(order, dtype=np.int64)
        reverse = order[::-1].copy()
        out_left = np.empty(n + 1)
        out_right = np.empty(n + 1)
        for inverse, n_groups in groups:
            for a in range(self.K):
                for b in range(self.K):
                    if a == b:
                        continue
                    diff = np.ascontiguousarray(Ss[:, a] - Ss[:, b])
                    max_prefix_sweep(order, inverse, n_groups, diff, out_left)
                    max_prefix_sweep(reverse, inverse, n_groups, diff, out_right)
                    np.maximum(left, pref[:, b] + out_left, out=left)
                    np.maximum(right, suf[:, b] + out_right[::-1], out=right)
        return left + right

    def _deep_cuts(self, rows, order, counts, d) -> np.ndarray:
        memo = {}
        for k in np.unique(counts):
            left = np.sort(rows[order[:k]])
            right = np.sort(rows[order[k:]])
            memo[int(k)] = self.best_value(left, d - 1) + self.best_value(right, d - 1)
        return np.array([memo[int(k)] for k in counts])

    def candidate_values(self, rows: np.ndarray, d: int) -> np.ndarray:
        """Best depth-d value for every global (feature, threshold) at the root."""
        Ss = self.S[rows]
        orders = self._orders(rows)
        groups = self._groups(rows) if d == 2 else None
        values = []
        for f, order in enumerate(orders):
            xs = self.X[rows[order], f]
            counts = np.searchsorted(xs, self.grid[f], side="right")
            if d == 1:
                values.append(self._depth1_cuts(Ss, order)[counts])
            elif d == 2:
                values.append(self._depth2_cuts(Ss, order, groups)[counts])
            else:
                values.append(self._deep_cuts(rows, order, counts, d))
        return np.concatenate(values)

    def best_value(self, rows: np.ndarray, d: int) -> float:
        if rows.size == 0:
            return 0.0
        if d == 0:
            return float(self.S[rows].sum(axis=0).max())
        return float(self.candidate_values(rows, d).max())

    def solve(self, rows: np.ndarray, d: int) -> TreePolicy:
        if rows.size == 0:
            return canonical_tree(d)
        if d == 0:
            return Leaf(_first_near_max(self.S[rows].sum(axis=0), self.tol))
        values = self.candidate_values(rows, d)
        i = _first_near_max(values, self.tol)
        f, t = int(self.cand_feature[i]), float(self.cand_threshold[i])
        goes_left = self.X[rows, f] <= t
        logger.debug(
            f"depth {d}: split f={f} t={t:.6g} on {rows.size} rows "
            f"(value {values[i]:.6g})"
        )
        left = self.solve(rows[goes_left], d - 1)
        return Split(f, t, left, self.solve(rows[~goes_left], d - 1))


def exact_search(scores, contexts, spec: TreeClassSpec) -> SearchResult:
    """Maximizes sum_t scores[t, tree(x_t)] over depth-L trees.

    Returns the smallest tree in tie order among the maximizers, with its
    objective re-summed exactly over the rows.
    """
    S, X = _check_instance(scores, contexts, spec)
    logger.info(
        f"Exact tree search: T={S.shape[0]}, p={spec.p}, K={spec.K}, L={spec.L}"
    )
    tree = _ExactSearch(S, X).solve(np.arange(S.shape[0]), spec.L)
    result = SearchResult(tree=tree, objective=tree_objective(tree, S, X))
    logger.info(f"Exact tree search finished: objective {result.objective:.6g}")
    return result


def brute_oracle(scores, contexts, spec: TreeClassSpec) -> SearchResult:
    """Enumerates every depth-L tree on the same grid (small instances only)."""
    S, X = _check_instance(scores, contexts, spec)
    T, K = S.shape
    if (
        T > ORACLE_MAX_T
        or spec.p > ORACLE_MAX_P
        or spec.L > ORACLE_MAX_L
        or K > ORACLE_MAX_K
    ):
        raise TreeSearchError(
            f"Instance too large for enumeration: T={T}, p={spec.p}, L={spec.L}, K={K} "
            f"(limits {ORACLE_MAX_T}, {ORACLE_MAX_P}, {ORACLE_MAX_L}, {ORACLE_MAX_K})"
        )
    grid = candidate_thresholds(X)
    splits = [(f, float(t)) for f, ts in enumerate(grid) for t in ts]
    goes_left = np.array([X[:, f] <= t for f, t in splits])
    tol = tie_tolerance(S)

    def stumps(mask: np.ndarray) -> np.ndarray:
        """Values of every (split, left action, right action) on the masked rows."""
        left = (goes_left & mask).astype(float) @ S
        right = (~goes_left & mask).astype(float) @ S
        return (left[:, :, None] + right[:, None, :]).reshape(-1)

    def stump_tree(index: int) -> Split:
        s, a, b = np.unravel_index(index, (len(splits), K, K))
        f, t = splits[s]
        return Split(f, t, Leaf(int(a)), Leaf(int(b)))

    if spec.L == 1:
        tree = stump_tree(_first_near_max(stumps(np.ones(T, dtype=bool)), tol))
    else:
        children = [(stumps(mask), stumps(~mask)) for mask in goes_left]
        root_values = np.array([lv.max() + rv.max() for lv, rv in children])
        best = root_values.max()
        s = int(np.flatnonzero(root_values >= best - tol)[0])
        left_values, right_values = children[s]
        pairs = (left_values[:, None] + right_values[None, :]).reshape(-1)
        i = int(np.flatnonzero(pairs >= best - tol)[0])
        li, ri = divmod(i, right_values.shape[0])
        f, t = splits[s]
        tree = Split(f, t, stump_tree(li), stump_tree(ri))
    return SearchResult(tree=tree, objective=tree_objective(tree, S, X))


def format_tree(tree: TreePolicy) -> str:
    """Single-line text form with 17-significant-digit thresholds."""
    if isinstance(tree, Leaf):
        return f"leaf(a={tree.action})"
    return (
        f"node(f={tree.feature}, t={tree.threshold:.17g}, "
        f"L={format_tree(tree.left)}, R={format_tree(tree.right)})"
    )


_LEAF = re.compile(r"\s*leaf\(a=(\d+)\)")
_NODE = re.compile(r"\s*node\(f=(\d+),\s*t=([^,\s]+),\s*L=")
_RIGHT = re.compile(r"\s*,\s*R=")
_CLOSE = re.compile(r"\s*\)")


def parse_tree(text: str) -> TreePolicy:
    """Inverse of `format_tree`."""
    tree, pos = _parse_at(text, 0)
    if text[pos:].strip():
        raise TreeSearchError(
            f"Trailing text after tree at offset {pos}: {text[pos:]!r}"
        )
    return tree


def _expect(pattern: re.Pattern, text: str, pos: int) -> re.Match:
    match = pattern.match(text, pos)
    if match is None:
        raise TreeSearchError(
            f"Malformed tree text at offset {pos}: {text[pos : pos + 40]!r}"
        )
    return match


def _parse_at(text: str, pos: int) -> tuple[TreePolicy, int]:
    leaf = _LEAF.match(text, pos)
    if leaf:
        return Leaf(int(leaf.group(1))), leaf.end()
    head = _expect(_NODE, text, pos)
    try:
        threshold = float(head.group(2))
    except ValueError:
        raise TreeSearchError(
            f"Bad threshold {head.group(2)!r} at offset {pos}"
        ) from None
    left, pos = _parse_at(text, head.end())
    pos = _expect(_RIGHT, text, pos).end()
    right, pos = _parse_at(text, pos)
    pos = _expect(_CLOSE, text, pos).end()
    return Split(int(head.group(1)), threshold, left, right), pos
