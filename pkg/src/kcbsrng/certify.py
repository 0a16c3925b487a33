"""Finite-statistics min-entropy certification and input-entropy accounting."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .bounds import EntropyCurve, curve_eval, kcbs_expression, ns_analytic_curve
from .device import (
    DeterministicNCHV,
    InputDistribution,
    TrialLog,
    no_disturbance_report,
    replica_seed,
    run_experiment,
)
from .estimation import stderr_estimate, violation_from_log
from .qutrit import L_CLASSICAL, L_QUANTUM, Ket3, depolarize, kcbs_value, kcbs_vectors

FORMAT_VERSION = 1

DEFAULT_THRESHOLDS: tuple[float, ...] = tuple(round(3.0 + 0.1 * n, 10) for n in range(10)) + (L_QUANTUM,)

ASSUMPTIONS = (
    "inputs drawn i.i.d. from the stated distribution, independent of the device",
    "the two measurements of each trial are compatible (no marginal disturbance)",
    "adversary side information is classical",
    "fair sampling: post-selected (retained) trials represent all trials; "
    "discarded no-click events do not count towards k",
)

ACCOUNTING_NOTE = (
    "Input consumption is not uniquely defined for a biased setting distribution. "
    "'shannon' charges k*H(P) bits (the average cost of sampling the inputs); "
    "'min_entropy' charges k*(-log2 max P), which is what reproduces the "
    "net figure of about 5246 bits reported for the biased alpha=6 experiment. Both nets are reported."
)


def epsilon(k: int, r: float, eps_prime: float) -> float:
    """Concentration gap ``(L_q + 1/r) * sqrt(-2 ln(eps') / k)``."""
    if k < 1 or not 0.0 < r <= 0.2 or not 0.0 < eps_prime < 1.0:
        raise ValueError(f"need k >= 1, 0 < r <= 0.2, 0 < eps' < 1; got k={k}, r={r}, eps'={eps_prime}")
    return (L_QUANTUM + 1.0 / r) * math.sqrt(-2.0 * math.log(eps_prime) / k)


def epsilon_expanded(k: int, r: float, eps_prime: float) -> float:
    """Same quantity written as ``sqrt(-2 (1 + L_q r)^2 ln(eps') / (k r^2))``."""
    if k < 1 or not 0.0 < r <= 0.2 or not 0.0 < eps_prime < 1.0:
        raise ValueError(f"need k >= 1, 0 < r <= 0.2, 0 < eps' < 1; got k={k}, r={r}, eps'={eps_prime}")
    return math.sqrt(-2.0 * (1.0 + L_QUANTUM * r) ** 2 * math.log(eps_prime) / (k * r * r))


def input_entropy(dist: InputDistribution, k: int, accounting: str = "shannon") -> float:
    """Bits consumed choosing ``k`` settings."""
    w = np.asarray(dist.weights)
    if accounting == "shannon":
        nz = w[w > 0]
        per_trial = float(-np.sum(nz * np.log2(nz)))
    elif accounting == "min_entropy":
        per_trial = float(-math.log2(w.max()))
    else:
        raise ValueError(f"unknown accounting {accounting!r}")
    return k * max(per_trial, 0.0)


def net_randomness(entropy_bound_bits: float, input_entropy_bits: float) -> float:
    return entropy_bound_bits - input_entropy_bits


@dataclass
class CertificationParams:
    delta: float = 1e-3
    eps_prime: float = 1e-2
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    curve: EntropyCurve = field(default_factory=ns_analytic_curve)
    input_accounting: str = "min_entropy"

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0 or not 0.0 < self.eps_prime < 1.0:
            raise ValueError("delta and eps' must lie in (0, 1)")
        t = tuple(float(x) for x in self.thresholds)
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if abs(t[0] - L_CLASSICAL) > 1e-12 or abs(t[-1] - L_QUANTUM) > 1e-9:
            raise ValueError(f"thresholds must run from 3 to {L_QUANTUM}")
        if self.input_accounting not in ("shannon", "min_entropy"):
            raise ValueError(f"unknown accounting {self.input_accounting!r}")
        self.thresholds = t


@dataclass
class CertificationReport:
    L_hat: float
    k: int
    r: float
    epsilon: float
    delta: float
    eps_prime: float
    m: int | None
    L_m: float | None
    curve: str
    entropy_bound_bits: float
    raw_bound_bits: float | None
    input_entropy_bits: float
    input_accounting: str
    net_bits: float
    input_entropy_shannon_bits: float
    input_min_entropy_bits: float
    net_bits_shannon: float
    net_bits_min_entropy: float
    stderr: float | None = None
    notes: list[str] = field(default_factory=list)
    assumptions: list[str] = field(default_factory=lambda: list(ASSUMPTIONS))
    no_disturbance: dict | None = None
    discarded_count: int = 0
    config: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.entropy_bound_bits > 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["format_version"] = FORMAT_VERSION
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def select_threshold(L_hat: float, thresholds: Sequence[float]) -> int | None:
    """Index of the largest threshold not exceeding ``L_hat``."""
    idx = [n for n, t in enumerate(thresholds) if t <= L_hat]
    return idx[-1] if idx else None


def min_entropy_bound(L_hat: float, k: int, dist: InputDistribution, params: CertificationParams | None = None,
                      stderr: float | None = None) -> CertificationReport:
    """``k f(L_m - eps) - log2(1/delta)``, clamped at zero, plus input accounting.

    The bound holds unless an event of probability at most ``delta``
    occurred, up to a distance ``eps'`` between the device's output
    distribution and the one used in the analysis.
    """
    params = CertificationParams() if params is None else params
    r = dist.r
    eps = epsilon(k, r, params.eps_prime)
    notes: list[str] = []

    if L_hat > L_QUANTUM + 3.0 * (stderr or 0.0):
        msg = f"estimate {L_hat:.5f} exceeds the quantum maximum {L_QUANTUM:.5f}; threshold capped"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)

    m = select_threshold(L_hat, params.thresholds)
    L_m = None if m is None else params.thresholds[m]
    raw = None
    if m is None:
        bound = 0.0
        notes.append("no violation: estimate below the classical bound 3, nothing certified")
    elif L_m - eps <= L_CLASSICAL:
        bound = 0.0
        notes.append(f"no certification at this k: L_m - eps = {L_m - eps:.5f} <= 3")
    else:
        raw = k * curve_eval(params.curve, L_m - eps) - math.log2(1.0 / params.delta)
        bound = max(raw, 0.0)
        if raw < 0:
            notes.append(f"computed bound {raw:.3f} was negative and is reported as 0")

    h_sh = input_entropy(dist, k, "shannon")
    h_min = input_entropy(dist, k, "min_entropy")
    h_used = h_sh if params.input_accounting == "shannon" else h_min
    net = net_randomness(bound, h_used)
    notes.append(f"net randomness is {'positive' if net > 0 else 'not positive'} ({params.input_accounting} accounting)")
    notes.append(ACCOUNTING_NOTE)
    if params.curve.provenance == "quantum_reference":
        notes.append("quantum_reference curve comes from feasible realizations; "
                     "treat the bound as a reference value, not a certificate")
    return CertificationReport(
        L_hat=float(L_hat), k=int(k), r=float(r), epsilon=eps, delta=params.delta, eps_prime=params.eps_prime,
        m=m, L_m=L_m, curve=params.curve.provenance, entropy_bound_bits=bound, raw_bound_bits=raw,
        input_entropy_bits=h_used, input_accounting=params.input_accounting, net_bits=net,
        input_entropy_shannon_bits=h_sh, input_min_entropy_bits=h_min,
        net_bits_shannon=net_randomness(bound, h_sh), net_bits_min_entropy=net_randomness(bound, h_min),
        stderr=stderr, notes=notes,
    )


def certify_log(log: TrialLog, params: CertificationParams | None = None) -> CertificationReport:
    """Estimate the violation from ``log`` and certify it, with a marginal-disturbance audit."""
    L_hat = violation_from_log(log)
    se = stderr_estimate(log) if log.k >= 2 else None
    report = min_entropy_bound(L_hat, log.k, log.distribution, params, se)
    audit = no_disturbance_report(log)
    defined = [v for v in audit.values() if v is not None]
    report.no_disturbance = {
        "per_observable": {str(k): v for k, v in audit.items()},
        "max_discrepancy": max(defined) if defined else None,
        "undefined": [k for k, v in audit.items() if v is None],
    }
    report.discarded_count = log.discarded_count
    if log.discarded_count:
        report.notes.append(f"{log.discarded_count} no-click events were discarded (post-selection)")
    return report


# ---------------------------------------------------------------------------
# Concentration check and asymptotic noise threshold
# ---------------------------------------------------------------------------


def true_violation(model) -> float:
    """Per-trial expected KCBS value of a memoryless device."""
    if isinstance(model, DeterministicNCHV):
        if not model.memoryless:
            raise ValueError("true violation is only defined for memoryless devices")
        return float(kcbs_expression(model.strategy))
    t = model.table()
    return float(np.sum(t[:, 1] + t[:, 2] - t[:, 0] - t[:, 3]))


class CoverageResult(NamedTuple):
    rate: float
    exceedances: int
    replicas: int
    epsilon: float
    L_true: float


def azuma_coverage_test(model, dist: InputDistribution, k: int, eps_prime: float, replicas: int,
                        seed: int) -> CoverageResult:
    """Fraction of replicas with ``L_hat >= L_true + eps``; should not exceed ``eps'``."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    L_true = true_violation(model)
    eps = epsilon(k, dist.r, eps_prime)
    hits = 0
    for n in range(replicas):
        rng = np.random.Generator(np.random.PCG64(replica_seed(seed, n)))
        log = run_experiment(model, dist, k, seed, rng=rng)
        hits += violation_from_log(log) >= L_true + eps
    return CoverageResult(hits / replicas, hits, replicas, eps, L_true)


def asymptotic_rate(L: float, curve: EntropyCurve | None = None) -> float:
    """Per-trial certified entropy in the large-k limit (``eps -> 0``, fine thresholds)."""
    curve = ns_analytic_curve() if curve is None else curve
    return curve_eval(curve, min(L, L_QUANTUM))


def noise_threshold(curve: EntropyCurve | None = None, tol: float = 1e-10) -> float:
    """Smallest depolarizing visibility with positive asymptotic certified rate (bisection)."""
    lo, hi = 0.0, 1.0
    ideal = Ket3.basis(0).density()
    vecs = kcbs_vectors()
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if asymptotic_rate(kcbs_value(depolarize(ideal, mid), vecs), curve) > 0.0:
            hi = mid
        else:
            lo = mid
    return hi
