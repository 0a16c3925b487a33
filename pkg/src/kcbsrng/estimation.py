"""KCBS violation estimators from trial logs and probability tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .device import TrialLog
from .qutrit import CONTEXTS, OUTCOMES

_ROW_TOL = 2e-3
_ROW_REJECT = 1e-2


class InvalidDistributionError(ValueError):
    pass


@dataclass(frozen=True)
class CountsTable:
    """``counts[c, o]`` = number of trials in context ``c`` with outcome ``OUTCOMES[o]``."""

    counts: np.ndarray

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def k(self) -> int:
        return int(self.counts.sum())

    def n(self, ctx: tuple[int, int], a: int, b: int) -> int:
        return int(self.counts[CONTEXTS.index(tuple(ctx)), OUTCOMES.index((a, b))])


def counts_table(log: TrialLog) -> CountsTable:
    outcome = 3 - (2 * log.a.astype(np.int64) + log.b)  # (1,1)->0, (1,0)->1, (0,1)->2, (0,0)->3
    flat = np.bincount(log.ctx * 4 + outcome, minlength=20)
    return CountsTable(flat.reshape(5, 4))


def _signs(log: TrialLog) -> np.ndarray:
    """+1 where a_i != a_j, -1 where equal."""
    return np.where(log.a != log.b, 1.0, -1.0)


def _weights(log: TrialLog) -> np.ndarray:
    w = np.asarray(log.distribution.weights)
    used = np.unique(log.ctx)
    if np.any(w[used] <= 0.0):
        raise InvalidDistributionError("log contains a context with zero input probability")
    return w


def streaming_estimator(log: TrialLog) -> tuple[np.ndarray, np.ndarray]:
    """Per-trial terms ``tau(a, b) / P(context)`` and their running mean."""
    w = _weights(log)
    terms = _signs(log) / w[log.ctx]
    running = np.cumsum(terms) / np.arange(1, log.k + 1)
    return terms, running


def violation_from_log(log: TrialLog) -> float:
    """Importance-weighted estimate of L (unbiased for memoryless devices)."""
    w = _weights(log)
    if log.k == 0:
        raise ValueError("cannot estimate a violation from an empty log")
    c = counts_table(log).counts
    used = w > 0  # zero-weight contexts never occur in a valid log
    diff = (c[:, 1] + c[:, 2] - c[:, 0] - c[:, 3])[used]
    return float(np.sum(diff / w[used]) / log.k)


def stderr_estimate(log: TrialLog) -> float:
    """Sample standard deviation of the per-trial terms over ``sqrt(k)``."""
    if log.k < 2:
        raise ValueError("need at least two trials")
    terms, _ = streaming_estimator(log)
    return float(terms.std(ddof=1) / math.sqrt(log.k))


# ---------------------------------------------------------------------------
# Probability tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbTable:
    """Rows in ``CONTEXTS`` order, columns ``(p10, p01, p00, p11)``."""

    rows: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rows, dtype=float)
        if r.shape == (5, 3):
            r = np.hstack([r, np.zeros((5, 1))])
        if r.shape != (5, 4):
            raise ValueError(f"expected 5 rows of (p10, p01, p00[, p11]), got {r.shape}")
        if np.any(r < 0):
            raise ValueError("probabilities must be non-negative")
        object.__setattr__(self, "rows", r)

    @classmethod
    def from_log(cls, log: TrialLog) -> "ProbTable":
        c = counts_table(log).counts.astype(float)
        tot = c.sum(axis=1, keepdims=True)
        if np.any(tot == 0):
            raise ValueError("every context must occur at least once")
        p = c / tot
        return cls(p[:, [1, 2, 3, 0]])


def violation_from_probs(table: ProbTable, renormalize: bool = False) -> float:
    """``sum over contexts of P(10) + P(01) - P(00) - P(11)``.

    With ``renormalize=True`` each row is divided by its sum first, which
    undoes per-row rounding of tables printed to a few decimals (conditional
    frequencies from counts always sum to one).
    """
    sums = table.rows.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > _ROW_REJECT):
        raise ValueError(f"row sums {np.round(sums, 4).tolist()} are not normalised")
    rows = table.rows / sums[:, None] if renormalize else table.rows
    p10, p01, p00, p11 = rows.T
    return float(np.sum(p10 + p01 - p00 - p11))


def rows_within_rounding(table: ProbTable) -> bool:
    return bool(np.all(np.abs(table.rows.sum(axis=1) - 1.0) <= _ROW_TOL))


def read_prob_table(path: str | Path) -> ProbTable:
    """CSV with header ``i,j,p10,p01,p00[,p11]``; rows may come in any order."""
    text = Path(path).read_text()
    reader = csv.DictReader(io.StringIO(text))
    fields = reader.fieldnames or []
    need = ["i", "j", "p10", "p01", "p00"]
    if fields[:5] != need:
        raise ValueError(f"expected header {','.join(need)}[,p11], got {','.join(fields)}")
    rows = np.full((5, 4), np.nan)
    for lineno, rec in enumerate(reader, start=2):
        try:
            pair = (int(rec["i"]), int(rec["j"]))
            vals = [float(rec[k]) for k in ("p10", "p01", "p00")]
            vals.append(float(rec["p11"]) if rec.get("p11") not in (None, "") else 0.0)
        except (TypeError, ValueError):
            raise ValueError(f"line {lineno}: cannot parse {rec}") from None
        if pair not in CONTEXTS:
            raise ValueError(f"line {lineno}: {pair} is not a compatible pair")
        rows[CONTEXTS.index(pair)] = vals
    if np.isnan(rows).any():
        raise ValueError("probability table must list all five contexts")
    return ProbTable(rows)


# Experimental probabilities (p10, p01, p00) per context; P(11) was not recorded.
EXPERIMENT_UNIFORM_PROBS = ProbTable(np.array([
    [0.4256, 0.4529, 0.1215],
    [0.4888, 0.4260, 0.0852],
    [0.4160, 0.4611, 0.1221],
    [0.4935, 0.4186, 0.0879],
    [0.4159, 0.4629, 0.1212],
]))
EXPERIMENT_BIASED_PROBS = ProbTable(np.array([
    [0.4166, 0.4611, 0.1223],
    [0.4987, 0.4086, 0.0927],
    [0.4346, 0.4477, 0.1177],
    [0.4846, 0.4235, 0.0918],
    [0.4414, 0.4355, 0.1230],
]))
