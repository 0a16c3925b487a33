"""
Testing the output bits
=======================

The two detector streams of a run are biased (a click has probability
1/sqrt(5)), so they go through a von Neumann extractor before testing.
The raw interleaved stream is tested as a control: within a trial the
two outcomes are never both 1, which the pattern-sensitive tests catch.
"""

from kcbsrng.device import IdealQuantum, run_experiment, uniform_distribution
from kcbsrng.randtests import extract_and_test

log = run_experiment(IdealQuantum(), uniform_distribution(), 100_000, 1)
res = extract_and_test(log, theta=1e-3)
table = res.table

cols = table["columns"]
print("lengths:", table["lengths"])
print(f"\n{'test':16s}" + "".join(f"{c:>12s}" for c in cols))
for row in table["rows"]:
    cells = "".join(f"{'n/a':>12s}" if row[c] is None else f"{row[c]:12.4f}" for c in cols)
    print(f"{row['test']:16s}{cells}")
print("\nverdicts at theta = 0.001:", table["verdicts"])
print("S_t failures:", table["failures"]["S_t"])
