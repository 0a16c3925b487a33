"""Dense two-phase tableau simplex for small equality-form LPs.

Solves ``max c @ x  s.t.  A @ x = b, x >= 0`` with Bland's anti-cycling rule.
Meant for problems with tens of variables; no sparsity, no presolve beyond
dropping redundant equality rows found in phase one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TOL = 1e-11


class InfeasibleError(ValueError):
    def __init__(self, message: str, violated: Sequence[str] = ()):
        super().__init__(message)
        self.violated = list(violated)


class UnboundedError(ValueError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    value: float
    duals: np.ndarray
    reduced_costs: np.ndarray
    basis: list[int]
    iterations: int
    dropped_rows: list[int] = field(default_factory=list)

    def max_violation(self, A: np.ndarray, b: np.ndarray) -> float:
        """Largest primal infeasibility (equality residual or negativity)."""
        return float(max(np.max(np.abs(A @ self.x - b), initial=0.0), -np.min(self.x, initial=0.0)))


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    others = np.arange(T.shape[0]) != row
    T[others] -= np.outer(T[others, col], T[row])


def _run(T: np.ndarray, basis: list[int], allowed: np.ndarray, max_iter: int) -> int:
    """Iterate on tableau ``T`` whose last row holds reduced costs of a *minimisation*."""
    m = T.shape[0] - 1
    for it in range(max_iter):
        cost = T[-1, :-1]
        candidates = np.flatnonzero((cost < -TOL) & allowed)
        if candidates.size == 0:
            return it
        col = int(candidates[0])  # Bland: lowest index entering
        column = T[:m, col]
        positive = column > TOL
        if not positive.any():
            raise UnboundedError("objective is unbounded")
        ratios = np.full(m, np.inf)
        ratios[positive] = T[:m, -1][positive] / column[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + TOL * max(1.0, abs(best)))
        row = int(min(ties, key=lambda r: basis[r]))  # Bland: lowest index leaving
        _pivot(T, row, col)
        basis[row] = col
    raise RuntimeError("simplex did not terminate")


def solve_lp(c, A, b, row_names: Sequence[str] | None = None, max_iter: int = 10_000) -> LPResult:
    """Maximise ``c @ x`` subject to ``A @ x == b`` and ``x >= 0``.

    Returns the optimal vertex together with a dual vector ``y`` such that
    ``A.T @ y >= c`` (reduced costs ``c - A.T @ y <= 0``) and
    ``b @ y == c @ x`` at optimality.
    """
    c = np.asarray(c, dtype=float)
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    names = list(row_names) if row_names is not None else [f"row {r}" for r in range(m)]

    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1

    # Phase one: minimise the sum of artificials.
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    iters = _run(T, basis, np.ones(n + m, dtype=bool), max_iter)

    if -T[-1, -1] > 1e-9 * max(1.0, np.abs(b).max(initial=0.0)):
        violated = [names[basis.index(n + r)] for r in range(m)
                    if n + r in basis and T[basis.index(n + r), -1] > 1e-9]
        raise InfeasibleError(f"infeasible: residual {-T[-1, -1]:.3g} on {', '.join(violated)}", violated)

    # Drive artificials out of the basis; rows where that is impossible are redundant.
    dropped = []
    for r in range(m):
        if basis[r] < n:
            continue
        nz = np.flatnonzero(np.abs(T[r, :n]) > 1e-9)
        if nz.size:
            _pivot(T, r, int(nz[0]))
            basis[r] = int(nz[0])
        else:
            dropped.append(r)
    keep = [r for r in range(m) if r not in dropped]

    # Phase two on the kept rows, artificial columns frozen.
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis2 = [basis[r] for r in keep]
    T2[-1, :n] = -c
    for r, j in enumerate(basis2):
        T2[-1] -= T2[-1, j] * T2[r]
    iters += _run(T2, basis2, np.ones(n, dtype=bool), max_iter)

    x = np.zeros(n)
    for r, j in enumerate(basis2):
        x[j] = T2[r, -1]
    x[np.abs(x) < 1e-14] = 0.0

    y = np.zeros(m)
    B = A[keep][:, basis2]
    y_keep = np.linalg.solve(B.T, c[basis2])
    y[keep] = y_keep
    y[flip] *= -1  # back to the caller's row signs
    A_orig = np.array(A)
    A_orig[flip] *= -1
    reduced = c - A_orig.T @ y
    return LPResult(x, float(c @ x), y, reduced, basis2, iters, dropped)
