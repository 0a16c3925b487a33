"""Von Neumann extraction and a nine-test statistical battery.

Eight tests follow NIST SP 800-22 (frequency, block frequency, runs,
longest run of ones, non-overlapping template matching, serial,
approximate entropy, cumulative sums); the ninth is the two-bit serial
test from the Handbook of Applied Cryptography. Every test takes a
:class:`BitString` (or any 0/1 array) and returns either a p-value or an
:class:`InsufficientData` marker when the input is below the test's
minimum length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import special

from .device import TrialLog, atomic_write

FORMAT_VERSION = 1
THETA = 1e-3


def erfc(x: float) -> float:
    """Complementary error function."""
    return float(special.erfc(x))


def igamc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x)``."""
    return float(special.gammaincc(a, x))


def normal_cdf(x: float) -> float:
    return float(special.ndtr(x))


# ---------------------------------------------------------------------------
# Bit strings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BitString:
    """Immutable 0/1 sequence with an origin tag such as ``"S1"`` or ``"S1_ext"``."""

    bits: np.ndarray
    origin: str = ""

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 1:
            b = b.reshape(-1)
        if b.size and (b.min() < 0 or b.max() > 1):
            raise ValueError("bits must be 0 or 1")
        b = b.astype(np.uint8)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @classmethod
    def from_str(cls, s: str, origin: str = "") -> "BitString":
        s = "".join(s.split())
        if set(s) - {"0", "1"}:
            raise ValueError("bit string may only contain 0 and 1")
        return cls(np.frombuffer(s.encode(), dtype=np.uint8) - ord("0"), origin)

    def __len__(self) -> int:
        return int(self.bits.size)

    def __str__(self) -> str:
        return (self.bits + ord("0")).tobytes().decode()

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return self.origin == other.origin and np.array_equal(self.bits, other.bits)

    __hash__ = None


def _bits(x) -> np.ndarray:
    return x.bits if isinstance(x, BitString) else np.asarray(x, dtype=np.uint8).reshape(-1)


def von_neumann_extract(bits: BitString) -> BitString:
    """Non-overlapping pairs: 01 -> 0, 10 -> 1, 00 and 11 dropped."""
    b = _bits(bits)
    pairs = b[: b.size // 2 * 2].reshape(-1, 2)
    keep = pairs[:, 0] != pairs[:, 1]
    origin = getattr(bits, "origin", "")
    return BitString(pairs[keep, 0], f"{origin}_ext" if origin else "ext")


def streams_from_log(log: TrialLog) -> dict[str, BitString]:
    """Detector-1 stream ``S1`` (first outcome of each trial), ``S2`` (second), interleaved ``S_t``."""
    a = np.asarray(log.a, dtype=np.uint8)
    b = np.asarray(log.b, dtype=np.uint8)
    inter = np.empty(2 * a.size, dtype=np.uint8)
    inter[0::2] = a
    inter[1::2] = b
    return {"S1": BitString(a, "S1"), "S2": BitString(b, "S2"), "S_t": BitString(inter, "S_t")}


# ASCII: comment header, then 0/1 lines of fixed width.
_LINE = 64


def bits_to_ascii(bs: BitString) -> str:
    s = str(bs)
    body = "\n".join(s[n:n + _LINE] for n in range(0, len(s), _LINE))
    return f"# format_version={FORMAT_VERSION}\n# origin={bs.origin}\n# bits={len(bs)}\n" + body + ("\n" if s else "")


def bits_from_ascii(text: str) -> BitString:
    origin = ""
    declared = None
    body = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key == "origin":
                origin = val
            elif key == "bits":
                declared = int(val)
            elif key == "format_version" and int(val) != FORMAT_VERSION:
                raise ValueError(f"line {lineno}: unsupported format_version {val}")
            continue
        if set(line) - {"0", "1"}:
            raise ValueError(f"line {lineno}: unexpected characters in bit data")
        body.append(line)
    bs = BitString.from_str("".join(body), origin)
    if declared is not None and declared != len(bs):
        raise ValueError(f"header declares {declared} bits, found {len(bs)}")
    return bs


def bits_to_packed(bs: BitString) -> bytes:
    header = f"bits={len(bs)} origin={bs.origin} format_version={FORMAT_VERSION}\n".encode()
    return header + np.packbits(bs.bits).tobytes()


def bits_from_packed(data: bytes) -> BitString:
    head, sep, payload = data.partition(b"\n")
    if not sep:
        raise ValueError("packed bit file has no header line")
    fields = dict(tok.split("=", 1) for tok in head.decode().split() if "=" in tok)
    if "bits" not in fields:
        raise ValueError("packed header must contain bits=<n>")
    n = int(fields["bits"])
    if len(payload) != (n + 7) // 8:
        raise ValueError(f"expected {(n + 7) // 8} payload bytes for {n} bits, got {len(payload)}")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[:n]
    return BitString(bits, fields.get("origin", ""))


def write_bits(bs: BitString, path: str | Path, packed: bool = False) -> None:
    atomic_write(path, bits_to_packed(bs) if packed else bits_to_ascii(bs))


def read_bits(path: str | Path) -> BitString:
    data = Path(path).read_bytes()
    if data.startswith(b"bits="):
        return bits_from_packed(data)
    return bits_from_ascii(data.decode())


# ---------------------------------------------------------------------------
# Tests
# ---------------------------------------------------------------------------


class InsufficientData(NamedTuple):
    test: str
    n: int
    required: int

    def __str__(self) -> str:
        return f"insufficient data for {self.test}: n={self.n} < {self.required}"


def _need(name: str, b: np.ndarray, required: int, override: int | None):
    req = required if override is None else override
    return InsufficientData(name, int(b.size), req) if b.size < req else None


def frequency(bits, min_length: int | None = None):
    """Monobit test: ``erfc(|S_n| / sqrt(2n))``."""
    b = _bits(bits)
    if (short := _need("frequency", b, 100, min_length)) or b.size == 0:
        return short or InsufficientData("frequency", 0, 1)
    s = 2.0 * np.count_nonzero(b) - b.size
    return erfc(abs(s) / math.sqrt(2.0 * b.size))


def block_frequency(bits, M: int = 128, min_length: int | None = None):
    """Chi-square on the ones-proportion of ``n // M`` blocks."""
    b = _bits(bits)
    N = b.size // M
    if short := _need("block_frequency", b, max(100, M), min_length):
        return short
    if N == 0:
        return InsufficientData("block_frequency", int(b.size), M)
    pi = b[: N * M].reshape(N, M).mean(axis=1)
    chi2 = 4.0 * M * float(np.sum((pi - 0.5) ** 2))
    return igamc(N / 2.0, chi2 / 2.0)


def runs(bits, min_length: int | None = None):
    """Total number of runs; returns 0 when the frequency pre-test fails."""
    b = _bits(bits)
    n = b.size
    if (short := _need("runs", b, 100, min_length)) or n < 2:
        return short or InsufficientData("runs", n, 2)
    pi = np.count_nonzero(b) / n
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0
    v = 1 + int(np.count_nonzero(b[1:] != b[:-1]))
    num = abs(v - 2.0 * n * pi * (1.0 - pi))
    return erfc(num / (2.0 * math.sqrt(2.0 * n) * pi * (1.0 - pi)))


# (M, class boundaries lo..hi, probabilities) for the longest-run test.
_LROB = {
    8: (1, 4, (0.2148, 0.3672, 0.2305, 0.1875)),
    128: (4, 9, (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    10_000: (10, 16, (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
}


def _lrob_block(n: int) -> int | None:
    if n >= 750_000:
        return 10_000
    if n >= 6272:
        return 128
    if n >= 128:
        return 8
    return None


def longest_run_in_blocks(blocks: np.ndarray) -> np.ndarray:
    run = np.zeros(blocks.shape[0], dtype=np.int64)
    best = np.zeros_like(run)
    for col in blocks.T:
        run = (run + 1) * col
        np.maximum(best, run, out=best)
    return best


def lrob(bits, M: int | None = None, min_length: int | None = None):
    """Longest run of ones in blocks of ``M`` bits (``M`` chosen from ``n`` when omitted)."""
    b = _bits(bits)
    if short := _need("lrob", b, 128, min_length):
        return short
    M = _lrob_block(b.size) if M is None else M
    if M not in _LROB:
        raise ValueError(f"block length must be one of {sorted(_LROB)}")
    lo, hi, pi = _LROB[M]
    N = b.size // M
    if N == 0:
        return InsufficientData("lrob", int(b.size), M)
    longest = longest_run_in_blocks(b[: N * M].reshape(N, M))
    v = np.bincount(np.clip(longest, lo, hi) - lo, minlength=hi - lo + 1)
    expected = N * np.asarray(pi)
    chi2 = float(np.sum((v - expected) ** 2 / expected))
    return igamc((len(pi) - 1) / 2.0, chi2 / 2.0)


@lru_cache(maxsize=None)
def aperiodic_templates(m: int) -> tuple[tuple[int, ...], ...]:
    """All ``m``-bit templates that cannot overlap a shifted copy of themselves."""
    out = []
    for v in range(2 ** m):
        t = tuple((v >> (m - 1 - i)) & 1 for i in range(m))
        if all(t[k:] != t[: m - k] for k in range(1, m)):
            out.append(t)
    return tuple(out)


def _window_codes(block: np.ndarray, m: int) -> np.ndarray:
    """Integer value of every length-``m`` window (no wrap-around)."""
    codes = np.zeros(block.size - m + 1, dtype=np.int64)
    for k in range(m):
        codes = (codes << 1) | block[k: block.size - m + 1 + k]
    return codes


def notm_pvalues(bits, m: int = 8, N: int = 8, templates: Sequence[Sequence[int]] | None = None,
                 min_length: int | None = None):
    """One p-value per template for the non-overlapping template test.

    For aperiodic templates two matches can never overlap, so the
    non-overlapping scan count equals the plain window count.
    """
    b = _bits(bits)
    templates = aperiodic_templates(m) if templates is None else tuple(tuple(t) for t in templates)
    if any(len(t) != m for t in templates):
        raise ValueError(f"all templates must have length {m}")
    M = b.size // N
    mu = (M - m + 1) / 2.0 ** m
    required = N * math.ceil(2 ** m + m - 1)  # mu >= 1 in every block
    if short := _need("notm", b, required, min_length):
        return short
    if M < m:
        return InsufficientData("notm", int(b.size), N * m)
    sigma2 = M * (1.0 / 2 ** m - (2 * m - 1) / 2.0 ** (2 * m))
    codes = np.array([int("".join(map(str, t)), 2) for t in templates])
    W = np.empty((N, codes.size))
    fast = _all_aperiodic(templates)
    for j in range(N):
        block = b[j * M:(j + 1) * M].astype(np.int64)
        if fast:
            W[j] = np.bincount(_window_codes(block, m), minlength=2 ** m)[codes]
        else:
            W[j] = [_scan_count(block, t) for t in templates]
    chi2 = np.sum((W - mu) ** 2, axis=0) / sigma2
    return np.array([igamc(N / 2.0, x / 2.0) for x in chi2])


def _all_aperiodic(templates) -> bool:
    m = len(templates[0])
    return all(all(t[k:] != t[: m - k] for k in range(1, m)) for t in templates)


def _scan_count(block: np.ndarray, t: Sequence[int]) -> int:
    m = len(t)
    hits = np.flatnonzero(_window_codes(block, m) == int("".join(map(str, t)), 2))
    count, nxt = 0, 0
    for h in hits:
        if h >= nxt:
            count += 1
            nxt = h + m
    return count


def notm(bits, m: int = 8, N: int = 8, templates=None, min_length: int | None = None):
    """Bonferroni-combined p-value over all templates: ``min(1, T * min p)``."""
    ps = notm_pvalues(bits, m, N, templates, min_length)
    if isinstance(ps, InsufficientData):
        return ps
    return float(min(1.0, ps.size * ps.min()))


def _psi2(b: np.ndarray, m: int) -> float:
    if m <= 0:
        return 0.0
    n = b.size
    ext = np.concatenate([b, b[: m - 1]]).astype(np.int64)
    counts = np.bincount(_window_codes(ext, m), minlength=2 ** m)
    return 2.0 ** m / n * float(np.sum(counts.astype(float) ** 2)) - n


def serial_pvalues(bits, m: int = 2, min_length: int | None = None):
    b = _bits(bits)
    if short := _need("serial", b, max(100, 2 ** (m + 3)), min_length):
        return short
    p0, p1, p2 = _psi2(b, m), _psi2(b, m - 1), _psi2(b, m - 2)
    d1 = p0 - p1
    d2 = p0 - 2.0 * p1 + p2
    return igamc(2.0 ** (m - 2), d1 / 2.0), igamc(2.0 ** (m - 3), d2 / 2.0)


def serial(bits, m: int = 2, min_length: int | None = None):
    """Overlapping ``m``-bit pattern test; the smaller of the two p-values."""
    ps = serial_pvalues(bits, m, min_length)
    return ps if isinstance(ps, InsufficientData) else float(min(ps))


def _phi(b: np.ndarray, m: int) -> float:
    n = b.size
    ext = np.concatenate([b, b[: m - 1]]).astype(np.int64) if m > 1 else b.astype(np.int64)
    c = np.bincount(_window_codes(ext, m), minlength=2 ** m) / n
    c = c[c > 0]
    return float(np.sum(c * np.log(c)))


def approx_entropy(bits, m: int = 2, min_length: int | None = None):
    """Approximate entropy from ``m``- and ``m+1``-bit wrapped pattern frequencies."""
    b = _bits(bits)
    if short := _need("approx_entropy", b, max(100, 2 ** (m + 5)), min_length):
        return short
    apen = _phi(b, m) - _phi(b, m + 1)
    chi2 = 2.0 * b.size * (math.log(2.0) - apen)
    return igamc(2.0 ** (m - 1), chi2 / 2.0)


def _cusum_p(b: np.ndarray) -> float:
    n = b.size
    z = float(np.max(np.abs(np.cumsum(2 * b.astype(np.int64) - 1))))
    if z == 0:
        return 1.0
    sq = math.sqrt(n)
    k = np.arange(int((-n / z + 1) / 4), int((n / z - 1) / 4) + 1)  # C-style truncation, as in the reference code
    s1 = np.sum(special.ndtr((4 * k + 1) * z / sq) - special.ndtr((4 * k - 1) * z / sq))
    k = np.arange(int((-n / z - 3) / 4), int((n / z - 1) / 4) + 1)
    s2 = np.sum(special.ndtr((4 * k + 3) * z / sq) - special.ndtr((4 * k + 1) * z / sq))
    return float(min(1.0, max(0.0, 1.0 - s1 + s2)))


def cusums(bits, mode: str = "both", min_length: int | None = None):
    """Cumulative sums; ``mode`` is ``forward``, ``reverse`` or ``both`` (worst p)."""
    b = _bits(bits)
    if short := _need("cusums", b, 100, min_length):
        return short
    if b.size == 0:
        return InsufficientData("cusums", 0, 1)
    if mode == "forward":
        return _cusum_p(b)
    if mode == "reverse":
        return _cusum_p(b[::-1])
    if mode == "both":
        return min(_cusum_p(b), _cusum_p(b[::-1]))
    raise ValueError(f"unknown mode {mode!r}")


def two_bit_statistic(bits) -> float:
    b = _bits(bits).astype(np.int64)
    n = b.size
    n1 = int(b.sum())
    n0 = n - n1
    pairs = np.bincount(2 * b[:-1] + b[1:], minlength=4).astype(float)
    return 4.0 / (n - 1) * float(np.sum(pairs ** 2)) - 2.0 / n * (n0 ** 2 + n1 ** 2) + 1.0


def two_bit(bits, min_length: int | None = None):
    """Two-bit serial test: chi-square with 2 degrees of freedom on overlapping pairs."""
    b = _bits(bits)
    if short := _need("two_bit", b, 21, min_length):
        return short
    return igamc(1.0, two_bit_statistic(b) / 2.0)


TESTS: dict[str, Callable] = {
    "frequency": frequency,
    "block_frequency": block_frequency,
    "runs": runs,
    "lrob": lrob,
    "notm": notm,
    "serial": serial,
    "approx_entropy": approx_entropy,
    "cusums": cusums,
    "two_bit": two_bit,
}

CORRELATION_SENSITIVE = ("two_bit", "serial", "approx_entropy", "notm")


# ---------------------------------------------------------------------------
# Battery
# ---------------------------------------------------------------------------


@dataclass
class TestReport:
    """p-values of one bit string; verdicts are derived from ``theta`` on demand."""

    __test__ = False  # not a pytest class

    origin: str
    n: int
    pvalues: dict[str, "float | InsufficientData"]
    theta: float = THETA

    def passed(self, name: str) -> bool | None:
        p = self.pvalues[name]
        return None if isinstance(p, InsufficientData) else bool(p >= self.theta)

    @property
    def failures(self) -> list[str]:
        return [t for t in self.pvalues if self.passed(t) is False]

    @property
    def insufficient(self) -> list[str]:
        return [t for t in self.pvalues if self.passed(t) is None]

    @property
    def verdict(self) -> str:
        if self.failures:
            return "fail"
        return "incomplete" if self.insufficient else "pass"

    def with_theta(self, theta: float) -> "TestReport":
        return TestReport(self.origin, self.n, dict(self.pvalues), theta)

    def to_dict(self) -> dict:
        return {
            "origin": self.origin,
            "n": self.n,
            "theta": self.theta,
            "tests": [
                {"test": t, "p_value": None if isinstance(p, InsufficientData) else p,
                 "pass": self.passed(t), "note": str(p) if isinstance(p, InsufficientData) else ""}
                for t, p in self.pvalues.items()
            ],
            "verdict": self.verdict,
            "failures": self.failures,
        }


def battery(bits, theta: float = THETA) -> TestReport:
    """Run all nine tests with their default parameters."""
    b = _bits(bits)
    return TestReport(getattr(bits, "origin", ""), int(b.size), {name: fn(b) for name, fn in TESTS.items()}, theta)


def battery_table(reports: Mapping[str, TestReport]) -> dict:
    """Rows are tests, columns are strings."""
    cols = list(reports)
    theta = {r.theta for r in reports.values()}
    rows = []
    for t in TESTS:
        row = {"test": t}
        for c in cols:
            p = reports[c].pvalues[t]
            row[c] = None if isinstance(p, InsufficientData) else p
        rows.append(row)
    return {
        "format_version": FORMAT_VERSION,
        "theta": theta.pop() if len(theta) == 1 else sorted(theta),
        "columns": cols,
        "lengths": {c: reports[c].n for c in cols},
        "rows": rows,
        "verdicts": {c: reports[c].verdict for c in cols},
        "failures": {c: reports[c].failures for c in cols},
        "insufficient": {c: reports[c].insufficient for c in cols},
    }


def table_to_json(table: dict) -> str:
    return json.dumps(table, indent=2, sort_keys=False) + "\n"


@dataclass
class ExtractTestResult:
    strings: dict[str, BitString]
    reports: dict[str, TestReport] = field(default_factory=dict)

    @property
    def table(self) -> dict:
        return battery_table(self.reports)


def extract_and_test(log: TrialLog, theta: float = THETA) -> ExtractTestResult:
    """Build ``S1``, ``S2``, ``S_t``; extract ``S1`` and ``S2``; run the battery on extracted and raw interleaved strings."""
    raw = streams_from_log(log)
    strings = {
        "S1_ext": von_neumann_extract(raw["S1"]),
        "S2_ext": von_neumann_extract(raw["S2"]),
        "S_t": raw["S_t"],
    }
    return ExtractTestResult(strings, {k: battery(v, theta) for k, v in strings.items()})
