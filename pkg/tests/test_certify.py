import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kcbsrng.bounds import EntropyCurve, f_ns, ns_analytic_curve
from kcbsrng.certify import (
    ACCOUNTING_NOTE,
    DEFAULT_THRESHOLDS,
    CertificationParams,
    asymptotic_rate,
    azuma_coverage_test,
    certify_log,
    epsilon,
    epsilon_expanded,
    input_entropy,
    min_entropy_bound,
    noise_threshold,
    select_threshold,
    true_violation,
)
from kcbsrng.device import (
    DeterministicNCHV,
    Depolarized,
    IdealQuantum,
    InputDistribution,
    make_biased_distribution,
    uniform_distribution,
)
from kcbsrng.qutrit import L_QUANTUM

UNI = uniform_distribution()
BIASED = make_biased_distribution(6, 100_000)

# 30-digit mpmath evaluations of the closed forms
EPS_UNIFORM = 0.0858386410515738896
EPS_BIASED = 0.543662425058075194
BOUND_NS_UNIFORM = 32822.7144236150020
H_UNIFORM = 232192.809488736235
H_BIASED_SHANNON = 53933.5280329010209
H_BIASED_MIN = 11387.0785141808166


# -- epsilon ----------------------------------------------------------------


def test_epsilon_uniform_example():
    assert epsilon(100_000, 0.2, 0.01) == pytest.approx(EPS_UNIFORM, abs=1e-12)
    assert abs(epsilon(100_000, 0.2, 0.01) - 0.0858391) < 1e-6


def test_epsilon_biased_example():
    assert BIASED.r == pytest.approx(0.018973666, abs=1e-9)
    assert epsilon(100_000, BIASED.r, 0.01) == pytest.approx(EPS_BIASED, abs=1e-10)


def test_epsilon_halves_when_k_quadruples():
    assert epsilon(400_000, 0.2, 0.01) == pytest.approx(0.5 * epsilon(100_000, 0.2, 0.01), rel=1e-14)


@pytest.mark.parametrize("args", [(0, 0.2, 0.01), (10, 0.0, 0.01), (10, 0.25, 0.01), (10, 0.2, 0.0), (10, 0.2, 1.0)])
def test_epsilon_domain(args):
    with pytest.raises(ValueError):
        epsilon(*args)


@given(st.integers(1, 10**9), st.floats(1e-4, 0.2), st.floats(1e-12, 0.999))
def test_epsilon_forms_agree(k, r, ep):
    assert epsilon_expanded(k, r, ep) == pytest.approx(epsilon(k, r, ep), rel=1e-10)


# -- thresholds -------------------------------------------------------------


def test_default_thresholds():
    assert len(DEFAULT_THRESHOLDS) == 11
    assert DEFAULT_THRESHOLDS[0] == 3.0 and DEFAULT_THRESHOLDS[-1] == L_QUANTUM


@pytest.mark.parametrize("L, m", [(2.9, None), (3.0, 0), (3.924, 9), (3.95, 10), (3.8999999, 8)])
def test_select_threshold(L, m):
    assert select_threshold(L, DEFAULT_THRESHOLDS) == m


@pytest.mark.parametrize("thr", [(3.0, 3.5, 3.5, L_QUANTUM), (3.1, L_QUANTUM), (3.0, 3.9)])
def test_bad_thresholds(thr):
    with pytest.raises(ValueError):
        CertificationParams(thresholds=thr)


# -- bound ------------------------------------------------------------------


def test_ns_bound_worked_example():
    rep = min_entropy_bound(3.924, 100_000, UNI)
    assert rep.L_m == 3.9 and rep.m == 9
    assert rep.entropy_bound_bits == pytest.approx(BOUND_NS_UNIFORM, abs=1e-6)
    assert round(rep.entropy_bound_bits, -1) == 32820  # 3.282e4 at four figures


def test_bound_at_classical_value_is_zero():
    rep = min_entropy_bound(3.0, 100_000, UNI)
    assert rep.entropy_bound_bits == 0.0 and not rep.certified
    assert any("no certification at this k" in n for n in rep.notes)


def test_no_violation_note():
    rep = min_entropy_bound(2.5, 100_000, UNI)
    assert rep.m is None and rep.entropy_bound_bits == 0.0
    assert any(n.startswith("no violation") for n in rep.notes)


def test_negative_raw_bound_is_clamped():
    # L_m - eps lands a hair above 3, so k f is smaller than log2(1/delta)
    params = CertificationParams(thresholds=(3.0, 3.0859, L_QUANTUM))
    rep = min_entropy_bound(3.09, 100_000, UNI, params)
    assert rep.raw_bound_bits < 0 and rep.entropy_bound_bits == 0.0
    assert any("reported as 0" in n for n in rep.notes)


def test_super_quantum_warns():
    with pytest.warns(RuntimeWarning):
        rep = min_entropy_bound(4.2, 100_000, UNI, stderr=0.01)
    assert rep.L_m == L_QUANTUM


@given(st.floats(3.0, L_QUANTUM), st.floats(3.0, L_QUANTUM))
def test_bound_monotone_in_L(a, b):
    lo, hi = sorted((a, b))
    assert min_entropy_bound(lo, 10**6, UNI).entropy_bound_bits <= min_entropy_bound(hi, 10**6, UNI).entropy_bound_bits


@given(st.integers(10**4, 10**7), st.integers(10**4, 10**7), st.floats(3.3, L_QUANTUM))
def test_bound_monotone_in_k(k1, k2, L):
    lo, hi = sorted((k1, k2))
    assert min_entropy_bound(L, lo, UNI).entropy_bound_bits <= min_entropy_bound(L, hi, UNI).entropy_bound_bits


def test_report_json_round_trip():
    rep = min_entropy_bound(3.924, 100_000, UNI)
    d = json.loads(rep.to_json())
    assert d["format_version"] == 1
    assert d["entropy_bound_bits"] == rep.entropy_bound_bits
    assert ACCOUNTING_NOTE in d["notes"]
    assert len(d["assumptions"]) == 4


# -- input entropy and net --------------------------------------------------


@pytest.mark.parametrize(
    "dist, accounting, expected",
    [
        (UNI, "shannon", H_UNIFORM),
        (UNI, "min_entropy", H_UNIFORM),
        (BIASED, "shannon", H_BIASED_SHANNON),
        (BIASED, "min_entropy", H_BIASED_MIN),
        (InputDistribution((1.0, 0.0, 0.0, 0.0, 0.0)), "shannon", 0.0),
    ],
)
def test_input_entropy(dist, accounting, expected):
    assert input_entropy(dist, 100_000, accounting) == pytest.approx(expected, abs=1e-6)


def test_input_entropy_rejects_unknown():
    with pytest.raises(ValueError):
        input_entropy(UNI, 10, "renyi")


def test_uniform_net_negative():
    rep = min_entropy_bound(3.924, 100_000, UNI)
    assert rep.net_bits < 0 and rep.net_bits_shannon < 0


def test_biased_ns_curve_nets():
    rep = min_entropy_bound(3.905, 100_000, BIASED)
    expected = 100_000 * f_ns(3.9 - EPS_BIASED) - math.log2(1000)
    assert rep.entropy_bound_bits == pytest.approx(expected, abs=1e-6)
    assert rep.net_bits_min_entropy == pytest.approx(expected - H_BIASED_MIN, abs=1e-6)
    assert rep.net_bits_shannon < 0 < rep.net_bits_min_entropy
    assert rep.input_accounting == "min_entropy"


def test_shannon_accounting_selectable():
    rep = min_entropy_bound(3.905, 100_000, BIASED, CertificationParams(input_accounting="shannon"))
    assert rep.net_bits == rep.net_bits_shannon


def test_quantum_reference_caveat():
    c = EntropyCurve(np.array([3.0, L_QUANTUM]), np.array([0.0, 1.0]), "quantum_reference")
    rep = min_entropy_bound(3.924, 100_000, UNI, CertificationParams(curve=c))
    assert rep.curve == "quantum_reference"
    assert any("not a certificate" in n for n in rep.notes)


# -- log certification ------------------------------------------------------


def test_certify_ideal_log(ideal_log):
    rep = certify_log(ideal_log)
    assert rep.certified
    assert rep.no_disturbance["max_discrepancy"] < 0.02
    assert rep.stderr is not None and rep.discarded_count == 0


def test_certify_nchv_log(nchv_log):
    rep = certify_log(nchv_log)
    assert rep.entropy_bound_bits == 0.0
    assert rep.L_hat <= 3.02


# -- coverage and noise threshold ------------------------------------------


def test_true_violation():
    assert true_violation(IdealQuantum()) == pytest.approx(L_QUANTUM, abs=1e-12)
    assert true_violation(DeterministicNCHV((1, 0, 0, 1, 0))) == 3.0
    with pytest.raises(ValueError):
        true_violation(DeterministicNCHV((1, 0, 0, 1, 0), memory=True))


def test_coverage_rejects_no_replicas():
    with pytest.raises(ValueError):
        azuma_coverage_test(IdealQuantum(), UNI, 100, 0.05, 0, seed=1)


@pytest.mark.parametrize("model", [IdealQuantum(), Depolarized(0.9), DeterministicNCHV((1, 0, 0, 1, 0))])
def test_coverage_small(model):
    res = azuma_coverage_test(model, UNI, 500, 0.05, 50, seed=11)
    assert res.rate <= 0.05
    assert res.replicas == 50


def test_coverage_deterministic():
    a = azuma_coverage_test(Depolarized(0.8), UNI, 200, 0.3, 20, seed=5)
    b = azuma_coverage_test(Depolarized(0.8), UNI, 200, 0.3, 20, seed=5)
    assert a == b


def test_asymptotic_rate():
    assert asymptotic_rate(3.0) == 0.0
    assert asymptotic_rate(L_QUANTUM) == pytest.approx(f_ns(L_QUANTUM))
    assert asymptotic_rate(4.5) == pytest.approx(f_ns(L_QUANTUM))


def test_noise_threshold():
    v = noise_threshold()
    assert v == pytest.approx((3 - 5 / 3) / (L_QUANTUM - 5 / 3), abs=1e-8)
    assert abs(v - 0.585) < 0.01
    assert noise_threshold(ns_analytic_curve(7)) == pytest.approx(v, abs=1e-8)
