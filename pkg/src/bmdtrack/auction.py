"""Bertsekas' forward auction with epsilon scaling for rectangular assignment.

Values are maximized.  ``-inf`` entries are forbidden pairings.  Real values
are first rounded onto a grid of spacing ``quantum``; with the final epsilon
below ``1/N`` grid units the result is exactly optimal for the gridded problem.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

UNASSIGNED = -1


class InfeasibleAssignment(ValueError):
    pass


def _auction_square(benefit: np.ndarray, allowed: np.ndarray, eps_final: float, scale: float = 5.0) -> np.ndarray:
    """Solve a square problem; returns ``col_of_row``.  Requires a perfect matching."""
    n = benefit.shape[0]
    finite = benefit[allowed]
    span = float(finite.max() - finite.min()) if finite.size else 0.0
    arcs = [[(int(j), float(benefit[i, j])) for j in np.flatnonzero(allowed[i])] for i in range(n)]
    prices = [0.0] * n
    eps = max(span / 2.0, eps_final)
    max_bids = 10_000 * n * n + 100_000
    while True:
        col_of_row = [UNASSIGNED] * n
        row_of_col = [UNASSIGNED] * n
        queue = deque(range(n))
        bids = 0
        while queue:
            i = queue.popleft()
            best_j, best, second = UNASSIGNED, -math.inf, -math.inf
            for j, v in arcs[i]:
                net = v - prices[j]
                if net > best:  # strict: lowest column index wins ties
                    best_j, second, best = j, best, net
                elif net > second:
                    second = net
            if second == -math.inf:
                second = best - span - eps  # single arc: bounded price rise
            prices[best_j] += best - second + eps
            prev = row_of_col[best_j]
            row_of_col[best_j] = i
            col_of_row[i] = best_j
            if prev != UNASSIGNED:
                col_of_row[prev] = UNASSIGNED
                queue.append(prev)
            bids += 1
            if bids > max_bids:
                raise InfeasibleAssignment("auction did not terminate; no perfect matching on allowed arcs")
        if eps <= eps_final:
            return np.array(col_of_row, dtype=int)
        eps = max(eps / scale, eps_final)


def _has_perfect_matching(allowed: np.ndarray) -> bool:
    n = allowed.shape[0]
    match = [-1] * n

    def augment(i, seen):
        for j in np.flatnonzero(allowed[i]):
            if not seen[j]:
                seen[j] = True
                if match[j] < 0 or augment(match[j], seen):
                    match[j] = i
                    return True
        return False

    return all(augment(i, [False] * n) for i in range(n))


def auction(values: np.ndarray, quantum: float = 1e-6) -> np.ndarray:
    """Assign every row of an ``m x k`` (``m <= k``) value matrix to a distinct column.

    Returns ``col_of_row``.  Raises :class:`InfeasibleAssignment` if no
    complete assignment exists on the finite entries.
    """
    values = np.asarray(values, dtype=float)
    m, k = values.shape
    if m == 0:
        return np.zeros(0, dtype=int)
    if m > k:
        raise InfeasibleAssignment("more rows than columns")
    allowed = np.isfinite(values)
    if not allowed.any(axis=1).all():
        raise InfeasibleAssignment("a row has no allowed column")
    masked = np.where(allowed, values, -math.inf)
    greedy = masked.argmax(axis=1)
    if len(set(greedy.tolist())) == m:
        # every row already holds its own best column
        return greedy
    # pad to a square problem with zero-benefit dummy rows that may take any column
    grid = np.zeros((k, k))
    grid[:m][allowed] = np.round(values[allowed] / quantum)
    allow = np.ones((k, k), dtype=bool)
    allow[:m] = allowed
    if not _has_perfect_matching(allow):
        raise InfeasibleAssignment("no complete assignment on allowed entries")
    col_of_row = _auction_square(grid, allow, 1.0 / (k + 1))
    return col_of_row[:m]


def solve_partial(values: np.ndarray, quantum: float = 1e-6) -> np.ndarray:
    """Assignment where rows may stay unassigned (``-1``).

    Cardinality is maximized first, then total value: each row gets a private
    "unassigned" column priced below any achievable set of real pairings.
    """
    values = np.asarray(values, dtype=float)
    m, n = values.shape
    if m == 0:
        return np.zeros(0, dtype=int)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return np.full(m, UNASSIGNED)
    lo, hi = float(finite.min()), float(finite.max())
    dummy = lo - (hi - lo + 1.0) * (m + 1)
    padded = np.full((m, n + m), -math.inf)
    padded[:, :n] = values
    padded[np.arange(m), n + np.arange(m)] = dummy
    cols = auction(padded, quantum)
    return np.where(cols < n, cols, UNASSIGNED)


def assignment_value(values: np.ndarray, col_of_row: np.ndarray) -> float:
    rows = np.flatnonzero(np.asarray(col_of_row) >= 0)
    return float(np.asarray(values)[rows, np.asarray(col_of_row)[rows]].sum())
