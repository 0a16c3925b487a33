"""The twelve acceptance criteria, one test each, at their stated tolerances.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
"""

import math
import shutil
import time

import numpy as np
import pytest

from kcbsrng import certify
from kcbsrng.bounds import (
    classical_bound_bruteforce,
    curve_eval,
    f_ns,
    ns_guessing_prob_lp,
)
from kcbsrng.certify import CertificationParams, azuma_coverage_test, certify_log, epsilon, min_entropy_bound
from kcbsrng.cli import DEFAULT_SEED, EXIT_OK, run
from kcbsrng.device import (
    DeterministicNCHV,
    IdealQuantum,
    make_biased_distribution,
    run_experiment,
    uniform_distribution,
)
from kcbsrng.estimation import EXPERIMENT_BIASED_PROBS, EXPERIMENT_UNIFORM_PROBS, violation_from_probs
from kcbsrng.qutrit import CONTEXTS, L_QUANTUM, Ket3, commutation_residual, kcbs_value, kcbs_vectors
from kcbsrng.randtests import CORRELATION_SENSITIVE, TESTS, erfc, extract_and_test, igamc

UNI = uniform_distribution()


def test_c01_exact_algebra(criterion):
    t0 = time.perf_counter()
    vecs = kcbs_vectors()
    ground = Ket3.basis(0)
    d_value = abs(kcbs_value(ground.density(), vecs) - (4 * math.sqrt(5) - 5))
    d_orth = max(abs(vecs[i - 1].inner(vecs[j - 1])) for i, j in CONTEXTS)
    d_comm = max(commutation_residual(i, j, vecs) for i, j in CONTEXTS)
    d_overlap = max(abs(abs(v.inner(ground)) ** 2 - 5 ** -0.5) for v in vecs)
    ok = max(d_value, d_orth, d_comm, d_overlap) < 1e-12
    criterion(1, ok, f"value {d_value:.1e}, orth {d_orth:.1e}, comm {d_comm:.1e}, overlap {d_overlap:.1e} "
                     f"({1e3 * (time.perf_counter() - t0):.1f} ms)")
    assert ok


def test_c02_classical_bound(criterion):
    best, argmax = classical_bound_bruteforce()
    ok = best == 3
    criterion(2, ok, f"max over 32 assignments = {best}, attained by {len(argmax)} assignments")
    assert ok


def test_c03_experimental_probability_tables(criterion):
    uni_raw, bia_raw = violation_from_probs(EXPERIMENT_UNIFORM_PROBS), violation_from_probs(EXPERIMENT_BIASED_PROBS)
    uni_norm = violation_from_probs(EXPERIMENT_UNIFORM_PROBS, renormalize=True)
    bia_norm = violation_from_probs(EXPERIMENT_BIASED_PROBS, renormalize=True)
    raw_ok = abs(uni_raw - 3.9234) < 1e-10 and abs(bia_raw - 3.9048) < 1e-10
    # printed rows do not sum to one; the reported 3.924 corresponds to normalised rows
    pub_ok = abs(uni_norm - 3.924) < 5e-4 and abs(bia_norm - 3.905) < 5e-4
    ok = raw_ok and pub_ok
    criterion(3, ok, f"raw {uni_raw:.4f} / {bia_raw:.4f}; normalised rows {uni_norm:.5f} / {bia_norm:.5f} "
                     f"vs 3.924 / 3.905 (raw gaps {abs(uni_raw - 3.924):.1e} / {abs(bia_raw - 3.905):.1e})")
    assert ok


def test_c04_no_signalling_bound(criterion):
    t0 = time.perf_counter()
    grid = np.linspace(3.0, L_QUANTUM, 50)
    err = max(abs(-math.log2(ns_guessing_prob_lp(L)) - f_ns(L)) for L in grid)
    ok = err < 1e-9 and f_ns(3.0) == 0.0
    criterion(4, ok, f"max |LP - analytic| = {err:.1e} on 50 points, f_ns(3) = {f_ns(3.0)} "
                     f"({time.perf_counter() - t0:.2f} s)")
    assert ok


def test_c05_quantum_reference_curve(criterion, quantum_ref):
    c = quantum_ref
    f_max = float(c.f[-1])
    p_max = float(c.guessing[-1])
    f_at_3944 = curve_eval(c, 3.944)
    sandwich = max(f_ns(L) - f for L, f in zip(c.L, c.f))
    elapsed = c.metadata["elapsed_s"]
    checks = {
        "f_q(L_q) in [1.10, 1.16]": 1.10 <= f_max <= 1.16,
        "P* = 0.457 +/- 0.01": abs(p_max - 0.457) <= 0.01,
        "f_q(3) <= 1e-6": c.f[0] <= 1e-6,
        "f_ns <= f_q + 1e-6": sandwich <= 1e-6,
        "runtime <= 600 s": elapsed <= 600,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    criterion(5, ok, f"f_q(L_q) = {f_max:.5f}, P* = {p_max:.5f}, f_q(3.944) = {f_at_3944:.5f}, "
                     f"f_q(3) = {c.f[0]:.1e}, max(f_ns - f_q) = {sandwich:.1e}, {elapsed:.0f} s"
                     + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok, failed


def test_c06_worked_example(criterion, quantum_ref):
    eps = epsilon(100_000, 0.2, 0.01)
    ns = min_entropy_bound(3.924, 100_000, UNI).entropy_bound_bits
    q = min_entropy_bound(3.924, 100_000, UNI, CertificationParams(curve=quantum_ref)).entropy_bound_bits
    # 3.282e4 at four significant figures; 30-digit evaluation gives 32822.714
    ok = abs(eps - 0.0858391) <= 1e-6 and round(ns, -1) == 32820 and abs(ns - 32822.714) < 1 and 5e4 <= q <= 8e4
    criterion(6, ok, f"eps = {eps:.7f}, NS bound = {ns:.2f} bits, quantum-curve bound = {q:.0f} bits")
    assert ok


def test_c07_net_randomness(criterion, quantum_ref):
    params = CertificationParams(curve=quantum_ref)
    bia = certify_log(run_experiment(IdealQuantum(), make_biased_distribution(6, 100_000), 100_000, DEFAULT_SEED),
                      params)
    uni = certify_log(run_experiment(IdealQuantum(), UNI, 100_000, DEFAULT_SEED), params)
    ok = (1e3 <= bia.net_bits <= 1e4 and uni.net_bits < 0
          and certify.ACCOUNTING_NOTE in bia.notes and certify.ACCOUNTING_NOTE in uni.notes)
    criterion(7, ok, f"biased L_hat {bia.L_hat:.4f}: bound {bia.entropy_bound_bits:.0f}, "
                     f"net {bia.net_bits:.0f} ({bia.input_accounting}; shannon {bia.net_bits_shannon:.0f}); "
                     f"uniform net {uni.net_bits:.0f}")
    assert ok


def test_c08_end_to_end(criterion, ideal_log, nchv_log):
    t0 = time.perf_counter()
    ideal = certify_log(ideal_log)
    nchv = certify_log(nchv_log)
    ok = (abs(ideal.L_hat - 3.944) <= 0.02 and ideal.entropy_bound_bits > 0
          and nchv.L_hat <= 3.02 and nchv.entropy_bound_bits == 0.0)
    criterion(8, ok, f"ideal L_hat {ideal.L_hat:.4f} bound {ideal.entropy_bound_bits:.0f}; "
                     f"NCHV L_hat {nchv.L_hat:.4f} bound {nchv.entropy_bound_bits:.0f} "
                     f"({time.perf_counter() - t0:.1f} s)")
    assert ok


def test_c09_azuma_coverage(criterion):
    t0 = time.perf_counter()
    res = {
        name: azuma_coverage_test(model, UNI, 2000, 0.05, 500, seed=DEFAULT_SEED)
        for name, model in [("ideal", IdealQuantum()), ("nchv", DeterministicNCHV((1, 0, 0, 1, 0)))]
    }
    elapsed = time.perf_counter() - t0
    ok = all(r.rate <= 0.05 for r in res.values()) and elapsed <= 120
    criterion(9, ok, ", ".join(f"{k} exceedance {r.rate:.3f}" for k, r in res.items()) + f" ({elapsed:.1f} s)")
    assert ok


def test_c10_noise_threshold(criterion):
    v = certify.noise_threshold()
    below = certify.asymptotic_rate(kcbs_value(_depolarized(v - 1e-3), kcbs_vectors()))
    above = certify.asymptotic_rate(kcbs_value(_depolarized(v + 1e-3), kcbs_vectors()))
    ok = abs(v - 0.585) <= 0.01 and below == 0.0 and above > 0.0
    criterion(10, ok, f"certified rate turns positive at v = {v:.6f}")
    assert ok


def _depolarized(v):
    from kcbsrng.qutrit import depolarize

    return depolarize(Ket3.basis(0).density(), v)


def test_c11_statistical_battery(criterion, ideal_log):
    t0 = time.perf_counter()
    res = extract_and_test(ideal_log, theta=1e-3)
    ext_ok = all(res.reports[s].verdict == "pass" and len(res.reports[s].pvalues) == 9 for s in ("S1_ext", "S2_ext"))
    st = res.reports["S_t"].pvalues
    raw_ok = all(not isinstance(st[t], tuple) and st[t] < 1e-3 for t in CORRELATION_SENSITIVE)
    # special functions against 40-digit references
    sf_err = max(abs(erfc(1.0) - 0.15729920705028513066), abs(erfc(3.0) - 0.000022090496998585441373),
                 abs(igamc(2.5, 1.0) - 0.84914503608460963623), abs(igamc(62.0, 55.0) - 0.81113558583793378647))
    elapsed = time.perf_counter() - t0
    ok = ext_ok and raw_ok and sf_err < 1e-10 and elapsed <= 60 and len(TESTS) == 9
    criterion(11, ok, f"S1_ext {res.reports['S1_ext'].verdict}, S2_ext {res.reports['S2_ext'].verdict}, "
                      f"S_t fails {sorted(res.reports['S_t'].failures)}, special-function error {sf_err:.1e} "
                      f"({elapsed:.1f} s)")
    assert ok


def test_c12_reproducibility(criterion, tmp_path):
    runs = {
        "log": lambda d: ["simulate", "--k", "20000", "--out", str(d / "log.csv")],
        "curve": lambda d: ["curve", "--grid", "4", "--restarts", "10", "--out", str(d / "curve.tsv")],
        "pipeline": lambda d: ["pipeline", "--k", "20000", "--dist", "biased", "--out-dir", str(d)],
    }
    same = {}
    for name, argv_of in runs.items():
        d = tmp_path / name
        snapshots = []
        for _ in range(2):
            if d.exists():
                shutil.rmtree(d)
            d.mkdir()
            assert run(argv_of(d)) == EXIT_OK
            snapshots.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        same[name] = snapshots[0] == snapshots[1]
    ok = all(same.values())
    criterion(12, ok, ", ".join(f"{k} {'identical' if v else 'DIFFER'}" for k, v in same.items()))
    assert ok
