"""
Checking the inequalities behind the method
===========================================

The penalized problems F_k have unique minimizers x_k*. This script checks,
with the exact oracles, how far consecutive minimizers move, that they stay
in a level set of f, and how close they get to the constrained optimum.
"""

import numpy as np
from scipy import optimize

from huberpen import GeneratorSpec, Schedule, checks, generate_problem, p_delta_prime, solve_constrained_exact
from huberpen.oracle import check_drift_lemma, check_gap_lemma, penalized_path
from huberpen.problem import ConstrainedProblem, QuadraticObjective
from huberpen.penalty import Halfspace
from huberpen.schedule import delta_at, drift_bound, gamma_at

sch = Schedule()

# one dimension first: f = (x - 2)^2 / 2 with x <= 1, so x* = 1 and the
# penalized minimizer solves (x - 2) + gamma p'(x - 1) = 0
p1 = ConstrainedProblem(QuadraticObjective(np.eye(1), np.array([-2.0])), (Halfspace(np.array([1.0]), 1.0),))
print("  k    x_k* (bisection)   |x_k* - x_k+1*|   bound")
for k in (1, 4, 16, 64, 256):
    xk = [optimize.brentq(lambda x, j=j: (x - 2) + gamma_at(sch, j) * p_delta_prime(x - 1, delta_at(sch, j)), -5, 5)
          for j in (k, k + 1)]
    print(f"{k:4d}   {xk[0]:.10f}      {abs(xk[0] - xk[1]):.3e}         {drift_bound(sch, 1.0, k):.3e}")

# the same check on a random instance through the library
p = generate_problem(4, 6, seed=12, spec=GeneratorSpec(active_optimum=True))
rep = check_drift_lemma(p, sch, [2**j for j in range(9)], minimizer_tol=1e-9)
print("\ndrift check on (4, 6):", "pass" if rep.passed else "FAIL",
      "min margin", min(r["margin"] for r in rep.rows))

# minimizers approach x* as gamma grows and gamma * delta shrinks
sol = solve_constrained_exact(p)
ks = [10**j for j in range(7)]
path = penalized_path(p, sch, ks, tol=1e-9)
print("\n       k   ||x_k* - x*||   sqrt(gamma delta / (2 mu alpha_min))")
for k in ks:
    gd = gamma_at(sch, k) * delta_at(sch, k)
    print(f"{k:8d}   {np.linalg.norm(path[k] - sol.x_star):.3e}       {np.sqrt(gd / (2 * p.mu * p.alpha_min)):.3e}")

# with a large penalty weight the full gap inequality holds for one constraint
gap = check_gap_lemma(p1, 100.0, 1e-4, R=6.0)
print("\nsingle-constraint gap check:", gap.rows[0]["form"], "lhs", gap.rows[0]["lhs"], "rhs", gap.rows[0]["rhs"])

# the packaged suites, as run by `huberpen check`
for r in (checks.penalty_suite(), checks.perturbation_suite(), *checks.drift_suite(), checks.gap_suite()):
    print(f"{r.name:13s} {'pass' if r.passed else 'FAIL'}  ({len(r.rows)} rows)")
