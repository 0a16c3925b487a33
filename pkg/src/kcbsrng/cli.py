"""Command-line pipeline: simulate, curve, certify, extract-test, pipeline.

Every option can also be given in a JSON file passed with ``--config``;
explicit flags take precedence over the file, which takes precedence over
the built-in defaults.  Exit codes: 0 success, 2 invalid configuration,
3 unreadable input, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bounds, certify, device, estimation, randtests
from .simplex import InfeasibleError, UnboundedError

EXIT_OK, EXIT_CONFIG, EXIT_PARSE, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_SEED = 1


class ConfigError(ValueError):
    pass


class InputParseError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = DEFAULT_SEED
    k: int = 100_000
    device: str = "ideal"  # ideal | depolarized | lossy | nchv
    visibility: float = 1.0
    eta: float = 1.0
    strategy: list[int] = field(default_factory=lambda: [1, 0, 0, 1, 0])
    dist: str = "uniform"  # uniform | biased | custom
    alpha: float = 6.0
    weights: list[float] | None = None
    delta: float = 1e-3
    eps_prime: float = 1e-2
    thresholds: list[float] | None = None
    curve: str = "ns"  # ns | ns_lp | quantum | path to a TSV
    grid: int = 20
    restarts: int = 100
    theta: float = randtests.THETA
    accounting: str = "min_entropy"
    out: str | None = None
    out_dir: str = "kcbs_out"
    packed: bool = False

    def validate(self) -> "RunConfig":
        if not isinstance(self.k, int) or self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k!r}")
        if self.device not in ("ideal", "depolarized", "lossy", "nchv"):
            raise ConfigError(f"unknown device {self.device!r}")
        if self.dist not in ("uniform", "biased", "custom"):
            raise ConfigError(f"unknown dist {self.dist!r}")
        if not 0.0 <= self.visibility <= 1.0:
            raise ConfigError("visibility must lie in [0, 1]")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError("eta must lie in (0, 1]")
        if not 0.0 < self.delta < 1.0 or not 0.0 < self.eps_prime < 1.0:
            raise ConfigError("delta and eps_prime must lie in (0, 1)")
        if not 0.0 < self.theta < 1.0:
            raise ConfigError("theta must lie in (0, 1)")
        if self.grid < 2 or self.restarts < 1:
            raise ConfigError("grid must be >= 2 and restarts >= 1")
        if self.accounting not in ("shannon", "min_entropy"):
            raise ConfigError(f"unknown accounting {self.accounting!r}")
        if self.curve not in ("ns", "ns_lp", "quantum") and not Path(self.curve).is_file():
            raise ConfigError(f"curve must be ns, ns_lp, quantum or an existing TSV file, got {self.curve!r}")
        try:
            self.distribution()
            self.model()
            device.DeterministicNCHV(tuple(self.strategy))
            self.params(curve=bounds.ns_analytic_curve())
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def distribution(self) -> device.InputDistribution:
        if self.dist == "uniform":
            return device.uniform_distribution()
        if self.dist == "biased":
            return device.make_biased_distribution(self.alpha, self.k)
        if self.weights is None:
            raise ConfigError("custom dist needs weights")
        return device.InputDistribution(tuple(self.weights))

    def model(self):
        if self.device == "ideal":
            return device.IdealQuantum()
        if self.device == "depolarized":
            return device.Depolarized(self.visibility)
        if self.device == "lossy":
            return device.LossyQuantum(self.eta)
        return device.DeterministicNCHV(tuple(self.strategy))

    def load_curve(self) -> bounds.EntropyCurve:
        if self.curve == "ns":
            return bounds.ns_analytic_curve()
        if self.curve == "ns_lp":
            return bounds.ns_lp_curve()
        if self.curve == "quantum":
            return bounds.quantum_curve(self.grid, self.restarts, self.seed)
        try:
            return bounds.read_curve(self.curve)
        except (ValueError, IndexError) as exc:
            raise InputParseError(f"{self.curve}: {exc}") from None

    def params(self, curve: bounds.EntropyCurve | None = None) -> certify.CertificationParams:
        kw = {} if self.thresholds is None else {"thresholds": tuple(self.thresholds)}
        return certify.CertificationParams(self.delta, self.eps_prime, curve=curve or self.load_curve(),
                                           input_accounting=self.accounting, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


_FIELDS = {f.name for f in fields(RunConfig)}


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the ``--config`` file, then explicit flags."""
    merged: dict = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise InputParseError(f"{args.config}: line {exc.lineno}: {exc.msg}") from None
        unknown = set(data) - _FIELDS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(data)
    for name in _FIELDS:
        val = getattr(args, name, None)
        if val is not None:
            merged[name] = val
    try:
        cfg = RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write_json(path: Path, obj) -> None:
    device.atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_simulate(cfg: RunConfig) -> device.TrialLog:
    log = device.run_experiment(cfg.model(), cfg.distribution(), cfg.k, cfg.seed)
    out = Path(cfg.out or "log.csv")
    device.write_log(log, out)
    _say(f"wrote {out} (k={log.k}, L_hat={estimation.violation_from_log(log):.5f})")
    return log


def cmd_curve(cfg: RunConfig, ns_only: bool = False) -> str:
    if ns_only:
        text = bounds.curve_to_tsv(np.linspace(bounds.L_CLASSICAL, bounds.L_QUANTUM, cfg.grid))
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            curve = bounds.quantum_curve(cfg.grid, cfg.restarts, cfg.seed)
        for w in caught:
            _say(f"warning: {w.message}")
        text = bounds.curve_to_tsv(curve.L, curve.f)
    out = Path(cfg.out or "curve.tsv")
    device.atomic_write(out, text)
    _say(f"wrote {out}")
    return text


def _read_log(path: str) -> device.TrialLog:
    try:
        return device.read_log(path)
    except device.LogParseError as exc:
        raise InputParseError(f"{path}: {exc}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise InputParseError(f"{path}: {exc}") from None


def cmd_certify(cfg: RunConfig, log_path: str | None = None, from_probs: str | None = None) -> certify.CertificationReport:
    params = cfg.params()
    if from_probs:
        try:
            table = estimation.read_prob_table(from_probs)
        except (OSError, ValueError) as exc:
            raise InputParseError(f"{from_probs}: {exc}") from None
        L_hat = estimation.violation_from_probs(table)
        report = certify.min_entropy_bound(L_hat, cfg.k, cfg.distribution(), params)
        report.notes.append(f"estimate taken from probability table {Path(from_probs).name}; k and inputs from config")
    else:
        if log_path is None:
            raise ConfigError("certify needs a log path or --from-probs")
        report = certify.certify_log(_read_log(log_path), params)
    report.config = cfg.to_dict()
    out = Path(cfg.out or "report.json")
    device.atomic_write(out, report.to_json())
    _say(f"L_hat={report.L_hat:.5f} bound={report.entropy_bound_bits:.1f} bits net={report.net_bits:.1f} -> {out}")
    return report


def cmd_extract_test(cfg: RunConfig, log_path: str) -> dict:
    log = _read_log(log_path)
    res = randtests.extract_and_test(log, cfg.theta)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, bs in res.strings.items():
        randtests.write_bits(bs, out_dir / (f"{name}.bin" if cfg.packed else f"{name}.txt"), packed=cfg.packed)
    table = res.table
    table["config"] = cfg.to_dict()
    device.atomic_write(out_dir / "tests.json", randtests.table_to_json(table))
    _say(f"battery verdicts: {table['verdicts']} -> {out_dir / 'tests.json'}")
    return table


def cmd_pipeline(cfg: RunConfig, dry_run: bool = False) -> dict | None:
    if dry_run:
        _say("configuration valid")
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return None
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "log.csv"
    stage = RunConfig(**{**cfg.to_dict(), "out": str(log_path)})
    cmd_simulate(stage)
    stage.out = str(out_dir / "report.json")
    report = cmd_certify(stage, str(log_path))
    table = cmd_extract_test(stage, str(log_path))
    summary = {
        "format_version": 1,
        "L_hat": report.L_hat,
        "entropy_bound_bits": report.entropy_bound_bits,
        "input_entropy_bits": report.input_entropy_bits,
        "net_bits": report.net_bits,
        "net_bits_shannon": report.net_bits_shannon,
        "net_positive": report.net_bits > 0,
        "battery_verdicts": table["verdicts"],
        "config": cfg.to_dict(),
    }
    _write_json(out_dir / "summary.json", summary)
    flag = "positive" if report.net_bits > 0 else "NEGATIVE"
    print(f"net randomness: {report.net_bits:.1f} bits ({flag}, {cfg.accounting} accounting)")
    return summary


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with option values; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file")


def _sim_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int)
    p.add_argument("--device", choices=["ideal", "depolarized", "lossy", "nchv"])
    p.add_argument("--visibility", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--strategy", type=lambda s: [int(c) for c in s], help="five 0/1 digits, e.g. 10010")
    p.add_argument("--dist", choices=["uniform", "biased", "custom"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--weights", type=lambda s: [float(x) for x in s.split(",")], help="five comma-separated weights")


def _cert_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float)
    p.add_argument("--eps-prime", dest="eps_prime", type=float)
    p.add_argument("--thresholds", type=lambda s: [float(x) for x in s.split(",")])
    p.add_argument("--curve", help="ns, ns_lp, quantum, or a curve TSV")
    p.add_argument("--accounting", choices=["shannon", "min_entropy"])
    p.add_argument("--grid", type=int)
    p.add_argument("--restarts", type=int)


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kcbsrng", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a device and write a CSV log with JSON sidecar")
    _common(p)
    _sim_opts(p)

    p = sub.add_parser("curve", help="write the min-entropy curve TSV")
    _common(p)
    p.add_argument("--grid", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--ns-only", action="store_true", help="analytic no-signalling column only")

    p = sub.add_parser("certify", help="certify a trial log (or a probability table)")
    _common(p)
    p.add_argument("log", nargs="?")
    p.add_argument("--from-probs", help="CSV with i,j,p10,p01,p00[,p11]")
    p.add_argument("--k", type=int)
    p.add_argument("--dist", choices=["uniform", "biased", "custom"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--weights", type=lambda s: [float(x) for x in s.split(",")])
    _cert_opts(p)

    p = sub.add_parser("extract-test", help="extract bit strings from a log and run the battery")
    _common(p)
    p.add_argument("log")
    p.add_argument("--theta", type=float)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--packed", action="store_true", default=None)

    p = sub.add_parser("pipeline", help="simulate, certify and test in one run")
    _common(p)
    _sim_opts(p)
    _cert_opts(p)
    p.add_argument("--theta", type=float)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--packed", action="store_true", default=None)
    p.add_argument("--dry-run", action="store_true", help="validate the configuration only")
    return ap


def run(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        if args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "curve":
            cmd_curve(cfg, args.ns_only)
        elif args.command == "certify":
            cmd_certify(cfg, args.log, args.from_probs)
        elif args.command == "extract-test":
            cmd_extract_test(cfg, args.log)
        elif args.command == "pipeline":
            cmd_pipeline(cfg, args.dry_run)
    except (ConfigError, estimation.InvalidDistributionError) as exc:
        _say(f"error: {exc}")
        return EXIT_CONFIG
    except InputParseError as exc:
        _say(f"error: {exc}")
        return EXIT_PARSE
    except (InfeasibleError, UnboundedError, bounds.OutOfRangeError, RuntimeError, ArithmeticError) as exc:
        _say(f"numerical failure: {exc}")
        return EXIT_NUMERIC
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
