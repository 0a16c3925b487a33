"""Trial-by-trial simulation of the KCBS randomness experiment.

Randomness
----------
Every draw comes from ``numpy.random.Generator(PCG64)`` seeded through
``numpy.random.SeedSequence``.  An experiment with seed ``s`` uses
``SeedSequence(s)``; replica ``n`` of a batch uses ``SeedSequence([s, n])``.
Identical ``(model, distribution, k, seed)`` always yield an identical log.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .qutrit import (
    ALL_CONTEXTS,
    CONTEXTS,
    OUTCOMES,
    Context,
    Density3,
    Ket3,
    as_context,
    depolarize,
    joint_probs,
    kcbs_vectors,
)

FORMAT_VERSION = 1
LOG_HEADER = ("trial", "i", "j", "a_i", "a_j")


class LogParseError(ValueError):
    """Malformed trial-log file; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


# ---------------------------------------------------------------------------
# Input distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InputDistribution:
    weights: tuple[float, ...]
    kind: str = "custom"
    alpha: float | None = None
    k: int | None = None

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if len(w) != 5:
            raise ValueError("need one weight per context (5)")
        if min(w) < 0.0 or abs(sum(w) - 1.0) > 1e-12:
            raise ValueError(f"weights must be non-negative and sum to 1, got {w}")
        object.__setattr__(self, "weights", w)

    @property
    def r(self) -> float:
        return min(self.weights)

    def weight(self, ctx) -> float:
        return self.weights[as_context(ctx).index]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "weights": list(self.weights), "alpha": self.alpha, "k": self.k}

    @classmethod
    def from_dict(cls, d: dict) -> "InputDistribution":
        return cls(tuple(d["weights"]), d.get("kind", "custom"), d.get("alpha"), d.get("k"))


def uniform_distribution() -> InputDistribution:
    return InputDistribution((0.2,) * 5, kind="uniform")


def make_biased_distribution(alpha: float, k: int) -> InputDistribution:
    """Context (1,2) with weight ``1 - 4 alpha/sqrt(k)``, the rest ``alpha/sqrt(k)``."""
    if alpha <= 0 or k <= (4 * alpha) ** 2:
        raise ValueError(f"biased distribution needs alpha > 0 and k > (4 alpha)^2; got alpha={alpha}, k={k}")
    r = alpha / math.sqrt(k)
    main = 1.0 - 4.0 * r
    w = (main, r, r, r, r)
    # Absorb the last-ulp rounding so the weights sum to 1 exactly.
    w = (1.0 - sum(w[1:]),) + w[1:]
    return InputDistribution(w, kind="biased", alpha=float(alpha), k=int(k))


def sample_setting(dist: InputDistribution, rng: np.random.Generator) -> Context:
    return ALL_CONTEXTS[int(rng.choice(5, p=dist.weights))]


def _sample_contexts(dist: InputDistribution, rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.choice(5, size=n, p=dist.weights)


# ---------------------------------------------------------------------------
# Device models
# ---------------------------------------------------------------------------


def _outcome_table(rho: Density3, vectors) -> np.ndarray:
    """(5, 4) array of joint probabilities in OUTCOMES order, clipped to >= 0."""
    t = np.array([joint_probs(rho, c, vectors) for c in ALL_CONTEXTS])
    t = np.clip(t, 0.0, None)
    return t / t.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class IdealQuantum:
    rho: Density3 = field(default_factory=lambda: Ket3.basis(0).density())
    vectors: tuple[Ket3, ...] = field(default_factory=kcbs_vectors)
    memoryless = True

    def table(self) -> np.ndarray:
        return _outcome_table(self.rho, self.vectors)


@dataclass(frozen=True)
class Depolarized:
    v: float
    rho: Density3 = field(default_factory=lambda: Ket3.basis(0).density())
    vectors: tuple[Ket3, ...] = field(default_factory=kcbs_vectors)
    memoryless = True

    def __post_init__(self):
        if not 0.0 <= self.v <= 1.0:
            raise ValueError(f"v must lie in [0, 1], got {self.v}")

    def table(self) -> np.ndarray:
        return _outcome_table(depolarize(self.rho, self.v), self.vectors)


@dataclass(frozen=True)
class LossyQuantum:
    """Ideal device whose single detection event is lost with probability ``1 - eta``.

    Trials where no detector fires are discarded and redrawn (post-selection).
    """

    eta: float
    base: IdealQuantum | Depolarized = field(default_factory=IdealQuantum)
    memoryless = True

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")

    def table(self) -> np.ndarray:
        return self.base.table()


MemoryPolicy = Callable[[tuple[int, ...], Sequence["TrialRecord"]], tuple[int, ...]]


@dataclass(frozen=True)
class DeterministicNCHV:
    """Non-contextual deterministic device: each observable has a fixed answer.

    ``memory`` (optional) sees the strategy and the full history after each
    trial and returns the strategy for the next trial.
    """

    strategy: tuple[int, ...] = (1, 0, 0, 1, 0)
    memory: MemoryPolicy | None = None

    def __post_init__(self):
        s = tuple(int(a) for a in self.strategy)
        if len(s) != 5 or any(a not in (0, 1) for a in s):
            raise ValueError(f"strategy must assign 0/1 to each of 5 observables, got {self.strategy}")
        object.__setattr__(self, "strategy", s)

    @property
    def memoryless(self) -> bool:
        return self.memory is None


DeviceModel = IdealQuantum | Depolarized | LossyQuantum | DeterministicNCHV


@dataclass
class _DeviceState:
    """Per-run mutable state (the NCHV strategy table and discard counter)."""

    strategy: tuple[int, ...] | None = None
    discarded: int = 0


def device_respond(model: DeviceModel, ctx, history: Sequence["TrialRecord"], rng: np.random.Generator,
                   state: _DeviceState | None = None) -> tuple[int, int]:
    """One trial's outcome pair ``(a_i, a_j)`` for context ``ctx``."""
    c = as_context(ctx)
    if isinstance(model, DeterministicNCHV):
        strategy = model.strategy if state is None or state.strategy is None else state.strategy
        out = (strategy[c.i - 1], strategy[c.j - 1])
        if model.memory is not None and state is not None:
            rec = TrialRecord(len(history) + 1, c, out)
            state.strategy = tuple(model.memory(strategy, tuple(history) + (rec,)))
        return out
    probs = model.table()[c.index]
    while True:
        a, b = OUTCOMES[int(rng.choice(4, p=probs))]
        if not isinstance(model, LossyQuantum) or rng.random() < model.eta:
            return a, b
        if state is not None:
            state.discarded += 1


# ---------------------------------------------------------------------------
# Trial logs
# ---------------------------------------------------------------------------


class TrialRecord:
    __slots__ = ("index", "context", "outcomes")

    def __init__(self, index: int, context: Context, outcomes: tuple[int, int]):
        self.index = index
        self.context = context
        self.outcomes = outcomes

    def __repr__(self):
        return f"TrialRecord({self.index}, {tuple(self.context)}, {self.outcomes})"

    def __eq__(self, other):
        return (isinstance(other, TrialRecord) and self.index == other.index
                and tuple(self.context) == tuple(other.context) and self.outcomes == other.outcomes)


@dataclass(frozen=True, eq=False)
class TrialLog:
    """Columnar trial log.  ``ctx`` holds context indices 0..4 into ``CONTEXTS``."""

    ctx: np.ndarray
    a: np.ndarray
    b: np.ndarray
    distribution: InputDistribution
    seed: int | None = None
    discarded_count: int = 0

    def __post_init__(self):
        ctx = np.asarray(self.ctx, dtype=np.int64).reshape(-1)
        a = np.asarray(self.a, dtype=np.int8).reshape(-1)
        b = np.asarray(self.b, dtype=np.int8).reshape(-1)
        if not (len(ctx) == len(a) == len(b)):
            raise ValueError("ctx, a, b must have equal length")
        if len(ctx) and (ctx.min() < 0 or ctx.max() > 4):
            raise ValueError("context index out of range")
        for arr in (ctx, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "ctx", ctx)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def k(self) -> int:
        return len(self.ctx)

    def __len__(self):
        return self.k

    @property
    def records(self) -> list[TrialRecord]:
        return [TrialRecord(n + 1, ALL_CONTEXTS[c], (int(x), int(y)))
                for n, (c, x, y) in enumerate(zip(self.ctx, self.a, self.b))]

    @classmethod
    def from_records(cls, records: Sequence[TrialRecord], distribution: InputDistribution,
                     seed: int | None = None, discarded_count: int = 0) -> "TrialLog":
        idx = [r.index for r in records]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("trial indices must be strictly increasing")
        return cls(np.array([as_context(r.context).index for r in records], dtype=np.int64),
                   np.array([r.outcomes[0] for r in records]), np.array([r.outcomes[1] for r in records]),
                   distribution, seed, discarded_count)

    def __eq__(self, other):
        return (isinstance(other, TrialLog) and np.array_equal(self.ctx, other.ctx)
                and np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)
                and self.distribution == other.distribution and self.seed == other.seed
                and self.discarded_count == other.discarded_count)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def replica_seed(seed: int, n: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, n])


def run_experiment(model: DeviceModel, dist: InputDistribution, k: int, seed: int,
                   rng: np.random.Generator | None = None) -> TrialLog:
    """Run ``k`` retained trials.  Deterministic in ``(model, dist, k, seed)``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = _rng(seed) if rng is None else rng
    ctx = _sample_contexts(dist, rng, k)
    if isinstance(model, DeterministicNCHV):
        if model.memoryless:
            s = np.array(model.strategy, dtype=np.int8)
            first = np.array([c[0] - 1 for c in CONTEXTS])
            second = np.array([c[1] - 1 for c in CONTEXTS])
            return TrialLog(ctx, s[first[ctx]], s[second[ctx]], dist, seed)
        state = _DeviceState(strategy=model.strategy)
        history: list[TrialRecord] = []
        a = np.empty(k, dtype=np.int8)
        b = np.empty(k, dtype=np.int8)
        for n, c in enumerate(ctx):
            x, y = device_respond(model, ALL_CONTEXTS[c], history, rng, state)
            history.append(TrialRecord(n + 1, ALL_CONTEXTS[c], (x, y)))
            a[n], b[n] = x, y
        return TrialLog(ctx, a, b, dist, seed)

    # Memoryless quantum devices: inverse-CDF sampling per trial.
    cdf = np.cumsum(model.table(), axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(k)
    outcome = (u[:, None] > cdf[ctx]).sum(axis=1)
    discarded = 0
    if isinstance(model, LossyQuantum) and model.eta < 1.0:
        lost = rng.random(k) >= model.eta
        while lost.any():
            n_lost = int(lost.sum())
            discarded += n_lost
            u = rng.random(n_lost)
            outcome[lost] = (u[:, None] > cdf[ctx[lost]]).sum(axis=1)
            still = rng.random(n_lost) >= model.eta
            idx = np.flatnonzero(lost)
            lost = np.zeros(k, dtype=bool)
            lost[idx[still]] = True
    pairs = np.array(OUTCOMES, dtype=np.int8)[outcome]
    return TrialLog(ctx, pairs[:, 0], pairs[:, 1], dist, seed, discarded)


def no_disturbance_report(log: TrialLog) -> dict[int, float | None]:
    """Per observable, ``|P(a_i = 1 | first context) - P(a_i = 1 | second context)|``.

    ``None`` marks an observable not seen in both of its contexts.
    """
    report: dict[int, float | None] = {}
    for obs in range(1, 6):
        marginals = []
        for n, (i, j) in enumerate(CONTEXTS):
            if obs not in (i, j):
                continue
            mask = log.ctx == n
            if not mask.any():
                marginals.append(None)
                continue
            col = log.a if obs == i else log.b
            marginals.append(float(col[mask].mean()))
        if None in marginals:
            report[obs] = None
        else:
            report[obs] = abs(marginals[0] - marginals[1])
    return report


# ---------------------------------------------------------------------------
# Serialization: CSV + JSON sidecar
# ---------------------------------------------------------------------------


def log_to_csv(log: TrialLog) -> str:
    buf = io.StringIO()
    buf.write(",".join(LOG_HEADER) + "\n")
    first = np.array([c[0] for c in CONTEXTS])[log.ctx]
    second = np.array([c[1] for c in CONTEXTS])[log.ctx]
    for n in range(log.k):
        buf.write(f"{n + 1},{first[n]},{second[n]},{log.a[n]},{log.b[n]}\n")
    return buf.getvalue()


def log_sidecar(log: TrialLog) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "k": log.k,
        "seed": log.seed,
        "distribution": log.distribution.to_dict(),
        "discarded_count": log.discarded_count,
    }


def atomic_write(path: str | Path, data: str | bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    tmp.replace(path)


def sidecar_path(csv_path: str | Path) -> Path:
    p = Path(csv_path)
    return p.with_suffix(".json")


def write_log(log: TrialLog, csv_path: str | Path) -> Path:
    atomic_write(csv_path, log_to_csv(log))
    side = sidecar_path(csv_path)
    atomic_write(side, json.dumps(log_sidecar(log), indent=2, sort_keys=True) + "\n")
    return side


def parse_log_csv(text: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = csv.reader(io.StringIO(text))
    try:
        header = next(rows)
    except StopIteration:
        raise LogParseError("empty file", 1) from None
    if tuple(h.strip() for h in header) != LOG_HEADER:
        raise LogParseError(f"expected header {','.join(LOG_HEADER)}", 1)
    ctx, a, b = [], [], []
    last = 0
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise LogParseError(f"expected 5 fields, got {len(row)}", lineno)
        try:
            t, i, j, x, y = (int(v) for v in row)
        except ValueError:
            raise LogParseError(f"non-integer field in {row}", lineno) from None
        if t <= last:
            raise LogParseError("trial numbers must be strictly increasing", lineno)
        if (i, j) not in CONTEXTS:
            raise LogParseError(f"({i}, {j}) is not a compatible pair", lineno)
        if x not in (0, 1) or y not in (0, 1):
            raise LogParseError("outcomes must be 0 or 1", lineno)
        last = t
        ctx.append(CONTEXTS.index((i, j)))
        a.append(x)
        b.append(y)
    return np.array(ctx, dtype=np.int64), np.array(a, dtype=np.int8), np.array(b, dtype=np.int8)


def read_log(csv_path: str | Path, distribution: InputDistribution | None = None) -> TrialLog:
    """Load a log and its sidecar.  ``distribution`` overrides the sidecar's."""
    csv_path = Path(csv_path)
    ctx, a, b = parse_log_csv(csv_path.read_text())
    side = sidecar_path(csv_path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    if distribution is None:
        if "distribution" not in meta:
            raise LogParseError(f"no sidecar {side.name} and no distribution given")
        distribution = InputDistribution.from_dict(meta["distribution"])
    if "k" in meta and meta["k"] != len(ctx):
        raise LogParseError(f"sidecar says k={meta['k']} but the CSV has {len(ctx)} trials")
    return TrialLog(ctx, a, b, distribution, meta.get("seed"), int(meta.get("discarded_count", 0)))
