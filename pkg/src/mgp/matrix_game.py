"""Exact solver for two-player zero-sum matrix games.

The row player maximizes ``p^T G q`` and the column player minimizes it.
Games are solved with a dense tableau simplex (Bland's rule) on the
standard value LP for a positively shifted payoff matrix. The row strategy
is read off the dual (slack reduced costs), so one LP yields both players'
strategies. Every solution carries an exploitability certificate computed
from pure best responses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_TOL = 1e-9
TIE_TOL = 1e-12


class GameInputError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class MatrixGameSolution:
    value: float
    row_strategy: np.ndarray
    col_strategy: np.ndarray
    exploitability: float


def exploitability(G: np.ndarray, p: np.ndarray, q: np.ndarray) -> float:
    """Largest unilateral gain available to either player against (p, q)."""
    v = p @ G @ q
    row_gain = np.max(G @ q) - v
    col_gain = v - np.min(p @ G)
    return float(max(row_gain, col_gain, 0.0))


def _normalize(x: np.ndarray) -> np.ndarray:
    x = np.where(x > 0, x, 0.0)
    s = x.sum()
    if s <= 0:
        raise SolverError("degenerate strategy from simplex")
    return x / s


def _simplex(M: np.ndarray, max_pivots: int = 10_000):
    """max 1^T y s.t. M y <= 1, y >= 0 for strictly positive M.

    Returns (y, x) where x are the dual variables of the inequality rows.
    """
    m, n = M.shape
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = M
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = 1.0
    T[m, :n] = -1.0
    basis = list(range(n, n + m))
    eps = 1e-12 * max(1.0, float(np.max(M)))
    for _ in range(max_pivots):
        obj = T[m, :-1]
        candidates = np.flatnonzero(obj < -eps)
        if candidates.size == 0:
            break
        col = int(candidates[0])
        column = T[:m, col]
        rows = np.flatnonzero(column > eps)
        if rows.size == 0:
            raise SolverError("unbounded LP; payoff shift failed")
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + eps * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        T[row] /= T[row, col]
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row])
        basis[row] = col
    else:
        raise SolverError("simplex pivot limit reached")
    y = np.zeros(n)
    for r, var in enumerate(basis):
        if var < n:
            y[var] = T[r, -1]
    x = T[m, n:n + m].copy()
    return y, x


def solve_matrix_game(G, tol: float = DEFAULT_TOL) -> MatrixGameSolution:
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] < 1 or G.shape[1] < 1:
        raise GameInputError(f"payoff must be a non-empty matrix, got shape {G.shape}")
    if not np.all(np.isfinite(G)):
        raise GameInputError("payoff matrix has non-finite entries")
    if tol <= 0:
        raise GameInputError("tol must be positive")
    lo, hi = float(G.min()), float(G.max())
    m, n = G.shape
    if hi - lo == 0.0:
        p = np.full(m, 1.0 / m)
        q = np.full(n, 1.0 / n)
        return MatrixGameSolution(lo, p, q, 0.0)

    # scale to [1, 2] so pivot tolerances are dimensionless
    scale = hi - lo
    M = (G - lo) / scale + 1.0
    y, x = _simplex(M)
    q = _normalize(y)
    p = _normalize(x)
    gap = exploitability(G, p, q)
    if gap > tol:
        raise SolverError(f"certificate failed: exploitability {gap:.3e} > tol {tol:.1e}")
    return MatrixGameSolution(float(p @ G @ q), p, q, gap)


def best_response_value(G, opponent_strategy, side: str) -> tuple[float, int]:
    """Best pure response to a fixed opponent mixed strategy.

    ``side='max'``: the row player responds to a column strategy.
    ``side='min'``: the column player responds to a row strategy.
    Ties within 1e-12 go to the lowest index.
    """
    G = np.asarray(G, dtype=np.float64)
    s = np.asarray(opponent_strategy, dtype=np.float64)
    if side == "max":
        if s.shape != (G.shape[1],):
            raise GameInputError("column strategy dimension mismatch")
        payoffs = G @ s
        best = payoffs.max()
        idx = int(np.flatnonzero(payoffs >= best - TIE_TOL)[0])
    elif side == "min":
        if s.shape != (G.shape[0],):
            raise GameInputError("row strategy dimension mismatch")
        payoffs = s @ G
        best = payoffs.min()
        idx = int(np.flatnonzero(payoffs <= best + TIE_TOL)[0])
    else:
        raise GameInputError(f"side must be 'max' or 'min', got {side!r}")
    return float(best), idx
