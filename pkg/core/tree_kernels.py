"""Compiled inner loops of the exact tree search."""

import numpy as np
from numba import njit


@njit(cache=True)
def max_prefix_sweep(order, groups, n_groups, diff, out):
    """Running best cut of a growing row set along a second feature.

    Rows are inserted in `order`. Row i belongs to group `groups[i]` (its rank
    among the distinct values of the second feature) and carries `diff[i]`.
    After j insertions `out[j]` holds the largest sum of `diff` over rows whose
    group is at most some cut, the empty cut included, so it is never
    negative. A segment tree over groups keeps each node's total and its best
    nonempty prefix sum.
    """
    size = 1
    while size < n_groups:
        size *= 2
    tot = np.zeros(2 * size)
    best = np.zeros(2 * size)
    out[0] = 0.0
    for j in range(order.shape[0]):
        i = order[j]
        pos = size + groups[i]
        tot[pos] += diff[i]
        best[pos] = tot[pos]
        pos //= 2
        while pos >= 1:
            left = 2 * pos
            tot[pos] = tot[left] + tot[left + 1]
            joined = tot[left] + best[left + 1]
            best[pos] = best[left] if best[left] >= joined else joined
            pos //= 2
        out[j + 1] = best[1] if best[1] > 0.0 else 0.0
