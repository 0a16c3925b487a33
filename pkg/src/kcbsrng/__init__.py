"""Simulation and certification toolkit for KCBS contextuality-based random number generation.

Submodules
----------
qutrit
    Qutrit states, the KCBS pentagram vectors and Born-rule probabilities.
device
    Device models, trial simulation and the CSV log format.
estimation
    Violation estimators from logs and probability tables.
bounds
    Classical, no-signalling and quantum-reference min-entropy curves.
simplex
    Small dense LP solver used for the no-signalling bound.
certify
    Finite-statistics certification and input-entropy accounting.
randtests
    Von Neumann extraction and the statistical test battery.
cli
    ``kcbsrng`` command-line pipeline.
"""

from .bounds import (
    EntropyCurve,
    curve_eval,
    f_ns,
    lp_solve_ns,
    ns_analytic_curve,
    ns_lp_curve,
    quantum_curve,
)
from .certify import (
    CertificationParams,
    CertificationReport,
    azuma_coverage_test,
    certify_log,
    epsilon,
    input_entropy,
    min_entropy_bound,
    net_randomness,
    noise_threshold,
)
from .device import (
    Depolarized,
    DeterministicNCHV,
    IdealQuantum,
    InputDistribution,
    LossyQuantum,
    TrialLog,
    make_biased_distribution,
    read_log,
    run_experiment,
    uniform_distribution,
    write_log,
)
from .estimation import ProbTable, violation_from_log, violation_from_probs
from .qutrit import L_CLASSICAL, L_QUANTUM, Density3, Ket3, joint_probs, kcbs_value, kcbs_vectors
from .randtests import BitString, battery, von_neumann_extract

__version__ = "0.1.0"
