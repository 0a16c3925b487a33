"""
How much randomness does a violation buy?
=========================================

Two lower bounds on the single-trial min-entropy as a function of the
observed KCBS value L:

* the no-signalling bound, from a 20-variable linear program (and in
  closed form);
* a quantum reference curve from a search over explicit qutrit
  realizations.

The quantum curve is tighter everywhere above L = 3.
"""

import math

import numpy as np

from kcbsrng.bounds import NsLpProblem, f_ns, lp_solve_ns, ns_guessing_prob_lp, quantum_curve
from kcbsrng.qutrit import L_QUANTUM

# The LP and the closed form agree to machine precision.
grid = np.linspace(3.0, L_QUANTUM, 8)
print("   L       P*_NS (LP)   f_ns (LP)    f_ns (closed form)")
for L in grid:
    p = ns_guessing_prob_lp(L)
    print(f"{L:.4f}   {p:.8f}   {-math.log2(p) + 0.0:.8f}   {f_ns(L):.8f}")

# The LP also returns a dual certificate: b . y equals the optimum.
prob = NsLpProblem.build(3.9)
value, res = lp_solve_ns(3.9)
print(f"\nLP at L = 3.9: value {value:.8f}, dual objective {prob.b @ res.duals:.8f}, "
      f"primal residual {res.max_violation(prob.A, prob.b):.1e}, {res.iterations} pivots")

# A coarse quantum curve; the full 20 x 100 run takes about a minute.
print("\nsearching qutrit realizations (8 nodes x 30 restarts) ...")
q = quantum_curve(grid, restarts=30, seed=1)
print("   L       f_ns      f_q       P*_q")
for L, fn, fq, p in zip(q.L, [f_ns(x) for x in q.L], q.f, q.guessing):
    print(f"{L:.4f}   {fn:.5f}   {fq:.5f}   {p:.5f}")

# At the maximum the realization is forced: P* = 1/sqrt(5).
print(f"\nat L_q: f_q = {q.f[-1]:.5f}, log2(sqrt 5) = {math.log2(math.sqrt(5)):.5f}")
