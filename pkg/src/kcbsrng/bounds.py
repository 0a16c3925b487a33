"""Min-entropy versus KCBS-violation curves ``f(L)``.

Three sources are provided:

``ns_analytic``
    closed form ``-log2(1.75 - L/4)`` valid under marginal consistency only;
``ns_lp``
    the same bound recomputed point by point with the in-repo simplex;
``quantum_reference``
    feasible qutrit realizations found by multi-start local search.  These
    are lower bounds on the true guessing probability, so the resulting
    ``f`` is an *upper* bound on the certifiable entropy.  Use it to
    reproduce reference figures, not as a certificate.
"""

from __future__ import annotations

import io
import itertools
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .qutrit import ALL_CONTEXTS, CONTEXTS, L_CLASSICAL, L_QUANTUM, OUTCOMES, Density3, Ket3, joint_probs, kcbs_value
from .simplex import InfeasibleError, LPResult, solve_lp

FORMAT_VERSION = 1
_EDGE = 1e-9


class OutOfRangeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Classical bound
# ---------------------------------------------------------------------------


def kcbs_expression(assignment: Sequence[int]) -> int:
    """Number of unequal adjacent pairs minus equal ones for a 0/1 assignment."""
    return sum(1 if assignment[i - 1] != assignment[j - 1] else -1 for i, j in CONTEXTS)


def classical_bound_bruteforce() -> tuple[int, list[tuple[int, ...]]]:
    """Maximum of the KCBS expression over all 32 deterministic assignments."""
    values = {a: kcbs_expression(a) for a in itertools.product((0, 1), repeat=5)}
    best = max(values.values())
    return best, [a for a, v in values.items() if v == best]


# ---------------------------------------------------------------------------
# No-signalling (marginal consistency) bound
# ---------------------------------------------------------------------------


def _check_domain(L: float) -> None:
    if L > L_QUANTUM + _EDGE:
        raise OutOfRangeError(f"L = {L} exceeds the quantum maximum {L_QUANTUM}")


def ns_guessing_prob(L: float) -> float:
    """``1.75 - L/4`` on ``[3, L_q]``; 1 below the classical bound."""
    _check_domain(L)
    return 1.0 if L <= L_CLASSICAL else 1.75 - L / 4.0


def f_ns(L: float) -> float:
    _check_domain(L)
    if L <= L_CLASSICAL:
        return 0.0
    return -math.log2(1.75 - L / 4.0)


def _var(ctx: int, outcome: int) -> int:
    return 4 * ctx + outcome


@dataclass(frozen=True)
class NsLpProblem:
    """Equality-form LP over the 20 probabilities ``P(ab|ctx)``.

    Variable ``4 * c + o`` is ``P(OUTCOMES[o] | CONTEXTS[c])``.
    """

    L: float
    A: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    row_names: tuple[str, ...] = field(repr=False)

    @classmethod
    def build(cls, L: float) -> "NsLpProblem":
        rows, rhs, names = [], [], []
        for c, ctx in enumerate(CONTEXTS):
            r = np.zeros(20)
            r[4 * c:4 * c + 4] = 1.0
            rows.append(r)
            rhs.append(1.0)
            names.append(f"normalisation {ctx}")
        for obs in range(1, 6):
            r = np.zeros(20)
            sign = 1.0
            for c, (i, j) in enumerate(CONTEXTS):
                if obs not in (i, j):
                    continue
                for o, (a, b) in enumerate(OUTCOMES):
                    if (a if obs == i else b) == 1:
                        r[_var(c, o)] += sign
                sign = -1.0
            rows.append(r)
            rhs.append(0.0)
            names.append(f"marginal consistency A{obs}")
        r = np.zeros(20)
        for c in range(5):
            for o, (a, b) in enumerate(OUTCOMES):
                r[_var(c, o)] = 1.0 if a != b else -1.0
        rows.append(r)
        rhs.append(float(L))
        names.append("KCBS value")
        return cls(float(L), np.array(rows), np.array(rhs), tuple(names))

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.A))


def lp_solve_ns(L: float, ctx: Sequence[int] = (1, 2), outcome: Sequence[int] = (1, 0)) -> tuple[float, LPResult]:
    """Maximise ``P(outcome | ctx)`` over the marginal-consistent polytope at KCBS value ``L``.

    Raises :class:`~kcbsrng.simplex.InfeasibleError` (listing the violated
    rows) when no such behaviour exists.
    """
    prob = NsLpProblem.build(L)
    cost = np.zeros(20)
    cost[_var(CONTEXTS.index(tuple(ctx)), OUTCOMES.index(tuple(outcome)))] = 1.0
    res = solve_lp(cost, prob.A, prob.b, prob.row_names)
    return res.value, res


def ns_guessing_prob_lp(L: float) -> float:
    """Largest single joint probability over all 20 objectives."""
    best = -np.inf
    for c, o in itertools.product(CONTEXTS, OUTCOMES):
        best = max(best, lp_solve_ns(L, c, o)[0])
    return best


# ---------------------------------------------------------------------------
# Entropy curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EntropyCurve:
    L: np.ndarray
    f: np.ndarray
    provenance: str
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        L = np.asarray(self.L, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if L.shape != f.shape or L.ndim != 1:
            raise ValueError("L and f must be 1-D arrays of equal length")
        if np.any(np.diff(L) <= 0):
            raise ValueError("curve grid must be strictly increasing")
        if self.provenance not in ("ns_analytic", "ns_lp", "quantum_reference"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "f", f)

    @property
    def guessing(self) -> np.ndarray:
        return 2.0 ** (-self.f)

    def __call__(self, L: float) -> float:
        return curve_eval(self, L)


def ns_analytic_curve(n: int = 50) -> EntropyCurve:
    grid = np.linspace(L_CLASSICAL, L_QUANTUM, n)
    return EntropyCurve(grid, np.array([f_ns(x) for x in grid]), "ns_analytic")


def ns_lp_curve(n: int = 50) -> EntropyCurve:
    grid = np.linspace(L_CLASSICAL, L_QUANTUM, n)
    f = np.array([-math.log2(ns_guessing_prob_lp(x)) for x in grid])
    return EntropyCurve(grid, np.maximum(f, 0.0), "ns_lp")


def curve_eval(curve: EntropyCurve, L: float) -> float:
    """``f(L)``: closed form for ``ns_analytic``, otherwise linear interpolation.

    Both curves are convex in ``L``, so chords lie above them: between nodes
    the interpolated value can overstate ``f``.  Near the quantum maximum,
    where the guessing probability has a square-root cusp, the excess reaches
    a few hundredths of a bit on a 20-node grid.  Reference quality only.
    """
    _check_domain(L)
    if L <= L_CLASSICAL:
        return 0.0
    if curve.provenance == "ns_analytic":
        return f_ns(L)
    if L > curve.L[-1] + _EDGE:
        raise OutOfRangeError(f"L = {L} is beyond the curve's last node {curve.L[-1]}")
    return float(np.interp(L, curve.L, curve.f))


def curve_to_tsv(grid: Sequence[float], f_q: Sequence[float] | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# format_version={FORMAT_VERSION}\n")
    buf.write("L\tf_ns\tf_q\n" if f_q is not None else "L\tf_ns\n")
    for n, L in enumerate(grid):
        row = f"{L:.10f}\t{f_ns(min(L, L_QUANTUM)):.10f}"
        if f_q is not None:
            row += f"\t{f_q[n]:.10f}"
        buf.write(row + "\n")
    return buf.getvalue()


def curve_from_tsv(text: str, column: str = "f_q") -> EntropyCurve:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    header = lines[0].split("\t")
    if header[:2] != ["L", "f_ns"]:
        raise ValueError("curve TSV must start with columns L, f_ns")
    if column not in header:
        raise ValueError(f"curve TSV has no {column!r} column")
    idx = header.index(column)
    data = np.array([[float(v) for v in ln.split("\t")] for ln in lines[1:]])
    prov = "quantum_reference" if column == "f_q" else "ns_analytic"
    return EntropyCurve(data[:, 0], data[:, idx], prov, {"source": "tsv"})


def read_curve(path: str | Path, column: str = "f_q") -> EntropyCurve:
    return curve_from_tsv(Path(path).read_text(), column)


# ---------------------------------------------------------------------------
# Qutrit realizations and the quantum reference curve
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Realization3:
    """Five pentagon-orthogonal unit vectors and a state.

    The search only produces pure states; a ``Density3`` is accepted for
    evaluation.
    """

    vectors: tuple[Ket3, ...]
    state: Ket3 | Density3
    params: tuple[float, ...] = ()

    def __post_init__(self):
        for i, j in CONTEXTS:
            if abs(self.vectors[i - 1].inner(self.vectors[j - 1])) > 1e-9:
                raise ValueError(f"vectors {i} and {j} are not orthogonal")

    @property
    def value(self) -> float:
        return kcbs_value(self.rho, self.vectors)

    @property
    def rho(self) -> Density3:
        return self.state.density() if isinstance(self.state, Ket3) else self.state


def guessing_prob(real: Realization3) -> tuple[float, tuple[tuple[int, int], tuple[int, int]]]:
    """Largest joint probability; ties go to the lowest context, then outcome order 11, 10, 01, 00."""
    rho = real.rho
    best, arg = -1.0, None
    for ctx in ALL_CONTEXTS:
        d = joint_probs(rho, ctx, real.vectors)
        for o, p in zip(OUTCOMES, d):
            if p > best + 1e-12:
                best, arg = p, (tuple(ctx), o)
    return best, arg


def _vectors_from(b: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Batch of realizations, shape (B, 5, 3).

    Orthogonal freedom is fixed by psi1 = e_z and psi2 = e_x; then psi5 lies
    in the xy-plane (angle b), psi3 in the yz-plane (angle g) and
    psi4 is their normalised cross product.
    """
    B = b.shape[0]
    v = np.zeros((B, 5, 3))
    v[:, 0, 2] = 1.0
    v[:, 1, 0] = 1.0
    v[:, 4, 0] = np.cos(b)
    v[:, 4, 1] = np.sin(b)
    v[:, 2, 1] = np.cos(g)
    v[:, 2, 2] = np.sin(g)
    cr = np.cross(v[:, 2], v[:, 4])
    n = np.linalg.norm(cr, axis=1, keepdims=True)
    v[:, 3] = cr / np.maximum(n, 1e-300)
    return v


def _state_from(x: np.ndarray, complex_state: bool) -> np.ndarray:
    th, ph = x[:, 2], x[:, 3]
    s = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1).astype(complex)
    if complex_state:
        s[:, 1] *= np.exp(1j * x[:, 4])
        s[:, 2] *= np.exp(1j * x[:, 5])
    return s


def _overlaps(x: np.ndarray, complex_state: bool) -> np.ndarray:
    """Squared overlaps ``|<psi_i|s>|^2``, shape (B, 5)."""
    v = _vectors_from(x[:, 0], x[:, 1])
    s = _state_from(x, complex_state)
    return np.abs(np.einsum("bij,bj->bi", v, s)) ** 2


def realization_from_params(x: Sequence[float], complex_state: bool = False) -> Realization3:
    x = np.asarray(x, dtype=float)[None, :]
    v = _vectors_from(x[:, 0], x[:, 1])[0]
    s = _state_from(x, complex_state)[0]
    return Realization3(tuple(Ket3(row) for row in v), Ket3(s), tuple(float(t) for t in x[0]))


# Outcome (1, 0) and (0, 0) in context (1, 2).  The pentagon's dihedral
# symmetry maps every other (context, outcome) onto one of these, and (1, 1)
# has probability zero for orthogonal rank-1 projectors.
_TARGETS = ("10", "00")


def _target_prob(c: np.ndarray, target: np.ndarray) -> np.ndarray:
    return np.where(target == 0, c[:, 0], 1.0 - c[:, 0] - c[:, 1])


def batch_nelder_mead(func, x0: np.ndarray, step: float | np.ndarray = 0.2, max_iter: int = 2000,
                      xatol: float = 1e-10, fatol: float = 1e-13) -> tuple[np.ndarray, np.ndarray]:
    """Nelder-Mead run independently on each row of ``x0`` with one vectorised objective.

    ``func(points, rows)`` maps an (m, n) array of points, each belonging to
    problem ``rows[k]``, to (m,) values.  Standard
    coefficients (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
    Returns the best vertex and value per row.
    """
    B, n = x0.shape
    steps = np.broadcast_to(np.asarray(step, dtype=float), (B,))
    S = np.repeat(x0[:, None, :], n + 1, axis=1)
    for d in range(n):
        S[:, d + 1, d] += steps
    F = func(S.reshape(-1, n), np.repeat(np.arange(B), n + 1)).reshape(B, n + 1)
    rows = np.arange(B)
    active = np.ones(B, dtype=bool)
    for _ in range(max_iter):
        order = np.argsort(F, axis=1, kind="stable")
        S = np.take_along_axis(S, order[:, :, None], axis=1)
        F = np.take_along_axis(F, order, axis=1)
        spread_x = np.max(np.abs(S[:, 1:] - S[:, :1]), axis=(1, 2))
        spread_f = np.max(np.abs(F[:, 1:] - F[:, :1]), axis=1)
        active = (spread_x > xatol) | (spread_f > fatol)
        if not active.any():
            break
        idx = rows[active]
        s, f = S[idx], F[idx]
        cen = s[:, :-1].mean(axis=1)
        worst = s[:, -1]
        xr = 2.0 * cen - worst
        xe = 3.0 * cen - 2.0 * worst
        xoc = 1.5 * cen - 0.5 * worst
        xic = 0.5 * (cen + worst)
        m = len(idx)
        vals = func(np.concatenate([xr, xe, xoc, xic]), np.tile(idx, 4)).reshape(4, m)
        fr, fe, foc, fic = vals
        f0, fsw, fw = f[:, 0], f[:, -2], f[:, -1]

        new_x = worst.copy()
        new_f = fw.copy()
        shrink = np.zeros(m, dtype=bool)

        expand = fr < f0
        use_e = expand & (fe < fr)
        new_x[use_e], new_f[use_e] = xe[use_e], fe[use_e]
        use_r = (expand & ~use_e) | ((fr >= f0) & (fr < fsw))
        new_x[use_r], new_f[use_r] = xr[use_r], fr[use_r]
        outside = (fr >= fsw) & (fr < fw)
        ok = outside & (foc <= fr)
        new_x[ok], new_f[ok] = xoc[ok], foc[ok]
        shrink |= outside & ~ok
        inside = fr >= fw
        ok = inside & (fic < fw)
        new_x[ok], new_f[ok] = xic[ok], fic[ok]
        shrink |= inside & ~ok

        s[:, -1] = new_x
        f[:, -1] = new_f
        if shrink.any():
            ss = s[shrink]
            ss[:, 1:] = ss[:, :1] + 0.5 * (ss[:, 1:] - ss[:, :1])
            k = ss.shape[0]
            f[shrink, 1:] = func(ss[:, 1:].reshape(-1, n), np.repeat(idx[shrink], n)).reshape(k, n)
            s[shrink] = ss
        S[idx], F[idx] = s, f
    best = np.argmin(F, axis=1)
    return S[rows, best], F[rows, best]


@dataclass
class CurveSearch:
    """Settings for the multi-start augmented-Lagrangian search."""

    restarts: int = 100
    seed: int = 0
    tolerance: float = 1e-6
    complex_state: bool = False
    max_stages: int = 12
    max_iter: int = 1500
    penalty0: float = 10.0


def _search(targets_L: np.ndarray, target_kind: np.ndarray, x0: np.ndarray, cfg: CurveSearch):
    """Maximise the target probability subject to ``L(x) = targets_L`` for each row."""
    lam = np.zeros(len(x0))
    mu = np.full(len(x0), cfg.penalty0)
    x = x0.copy()
    residual = np.full(len(x0), np.inf)
    step = 0.4
    for stage in range(cfg.max_stages):
        def objective(pts, rows, lam=lam, mu=mu):
            c = _overlaps(pts, cfg.complex_state)
            g = 4.0 * c.sum(axis=1) - 5.0 - targets_L[rows]
            return -_target_prob(c, target_kind[rows]) + lam[rows] * g + 0.5 * mu[rows] * g * g

        todo = np.abs(residual) >= cfg.tolerance * 1e-3
        if not todo.any():
            break
        x, _ = batch_nelder_mead(objective, x, step=np.where(todo, step, 1e-9), max_iter=cfg.max_iter)
        c = _overlaps(x, cfg.complex_state)
        residual = 4.0 * c.sum(axis=1) - 5.0 - targets_L
        lam = lam + mu * residual
        mu = mu * 10.0
        step = max(step * 0.3, 1e-3)
    return x, residual


def _polish(x: np.ndarray, targets_L: np.ndarray, complex_state: bool, iters: int = 4) -> np.ndarray:
    """Newton steps on the constraint alone, along its finite-difference gradient."""
    x = x.copy()
    h = 1e-7
    n = x.shape[1]
    for _ in range(iters):
        c = _overlaps(x, complex_state)
        g = 4.0 * c.sum(axis=1) - 5.0 - targets_L
        grad = np.empty_like(x)
        for d in range(n):
            xp = x.copy()
            xp[:, d] += h
            cp = _overlaps(xp, complex_state)
            grad[:, d] = (4.0 * cp.sum(axis=1) - 5.0 - targets_L - g) / h
        norm2 = np.sum(grad * grad, axis=1)
        ok = (norm2 > 1e-12) & (np.abs(g) < 1e-3)
        x[ok] -= (g[ok] / norm2[ok])[:, None] * grad[ok]
    return x


def _upper_concave_hull(L: np.ndarray, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((-P, L))
    hull: list[tuple[float, float]] = []
    for x, y in zip(L[order], P[order]):
        if hull and abs(hull[-1][0] - x) < 1e-15:
            continue
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (x - x1) <= (y - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append((x, y))
    h = np.array(hull)
    return h[:, 0], h[:, 1]


def quantum_curve(grid: Sequence[float] | int = 20, restarts: int = 100, seed: int = 0,
                  tolerance: float = 1e-6, complex_state: bool = False) -> EntropyCurve:
    """Quantum reference ``f(L)`` from explicit qutrit realizations.

    For every grid node and both symmetry-distinct targets, ``restarts``
    random starts are optimised by augmented-Lagrangian Nelder-Mead.
    Realizations whose KCBS value lies within ``tolerance`` of the node are
    kept.  The guessing probability is then replaced by the upper concave
    envelope over all kept ``(L, P)`` pairs, which is again achievable
    (direct sums of realizations) and makes ``2**-f`` concave and
    non-increasing.  Nodes without a feasible realization are listed in
    ``metadata["flagged"]``.
    """
    if isinstance(grid, (int, np.integer)):
        grid = np.linspace(L_CLASSICAL, L_QUANTUM, int(grid))
    grid = np.asarray(grid, dtype=float)
    if grid.min() < L_CLASSICAL - _EDGE or grid.max() > L_QUANTUM + _EDGE:
        raise OutOfRangeError(f"grid must lie in [3, {L_QUANTUM}]")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    cfg = CurveSearch(restarts=restarts, seed=seed, tolerance=tolerance, complex_state=complex_state)
    n_par = 6 if complex_state else 4

    node_idx, kind, starts = [], [], []
    for g_i in range(len(grid)):
        for t in range(len(_TARGETS)):
            for r in range(restarts):
                rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, g_i, t, r])))
                node_idx.append(g_i)
                kind.append(t)
                starts.append(rng.uniform(0.0, 2.0 * np.pi, n_par))
    node_idx = np.array(node_idx)
    kind = np.array(kind)
    targets_L = grid[node_idx]
    x, _ = _search(targets_L, kind, np.array(starts), cfg)
    x = _polish(x, targets_L, complex_state)

    c = _overlaps(x, complex_state)
    L_act = 4.0 * c.sum(axis=1) - 5.0
    feasible = np.abs(L_act - targets_L) < tolerance
    # Probability of the best (context, outcome) of each realization.
    P = np.maximum(c.max(axis=1), np.max(1.0 - c - np.roll(c, -1, axis=1), axis=1))
    P = np.minimum(P, 1.0)

    raw = np.full(len(grid), np.nan)
    best_params: list[tuple[float, ...] | None] = [None] * len(grid)
    for g_i in range(len(grid)):
        sel = np.flatnonzero(feasible & (node_idx == g_i))
        if sel.size:
            j = sel[np.argmax(P[sel])]
            raw[g_i] = P[j]
            best_params[g_i] = tuple(float(t) for t in x[j])
    flagged = [float(grid[i]) for i in range(len(grid)) if np.isnan(raw[i])]
    if flagged:
        warnings.warn(f"no feasible realization found at L = {flagged}", RuntimeWarning, stacklevel=2)
    if not feasible.any():
        raise RuntimeError("quantum curve search found no feasible realization")

    hL, hP = _upper_concave_hull(L_act[feasible], P[feasible])
    env = np.interp(grid, hL, hP)  # constant extension beyond the hull ends
    env = np.minimum.accumulate(env)
    f = np.maximum(-np.log2(env), 0.0)
    meta = {
        "restarts": restarts,
        "seed": seed,
        "tolerance": tolerance,
        "complex_state": complex_state,
        "raw_guessing": raw.tolist(),
        "envelope_guessing": env.tolist(),
        "best_params": best_params,
        "flagged": flagged,
        "feasible_fraction": float(feasible.mean()),
    }
    return EntropyCurve(grid, f, "quantum_reference", meta)
