"""
Solving a constrained quadratic by sampling one constraint per step
===================================================================

Generates a 5-dimensional problem with 8 constraints whose unconstrained
minimizer is infeasible, computes the exact optimum, runs 30 seeded chains
of the incremental penalty method for 1e5 steps and fits the decay of the
mean squared error on a log-log scale. Takes a few seconds.
"""

import numpy as np

from huberpen import GeneratorSpec, Schedule, SolverConfig, generate_problem, rate_fit, run_ensemble
from huberpen import solve_constrained_exact
from huberpen.schedule import validate

p = generate_problem(5, 8, seed=2, spec=GeneratorSpec(active_optimum=True))
sol = solve_constrained_exact(p)
print(f"n={p.n} m={p.m} mu={p.mu:.3f} L_f={p.L_f:.3f}")
print("active constraints at the optimum:", sol.active_set, "multipliers", sol.multipliers[list(sol.active_set)])

# gamma_k = k^(1/4), delta_k = k^(-3/4), step_k = step0 / k; step0 = 1/(2 L_f) keeps early steps stable
sch = Schedule(g=0.25, d=0.75, s=1.0, step0=1 / (2 * p.L_f))
for d in validate(sch):
    print(d.level, d.message)

cfg = SolverConfig(sch, iterations=100_000, seed=0, checkpoints=(1000,))
ens = run_ensemble(p, cfg, num_seeds=30, x_star=sol.x_star)

print("\n      k   mean ||x_k - x*||^2   mean dist to X")
for k in (1, 10, 100, 1000, 10_000, 100_000):
    j = int(np.searchsorted(ens.k, k))
    print(f"{ens.k[j]:7d}   {ens.mean_sq_err[j]:.3e}             {ens.mean_dist_feasible[j]:.3e}")

fit = rate_fit(ens.k, ens.mean_sq_err, 1e3, 1e5)
print(f"\nlog-log slope over [1e3, 1e5]: {fit.slope:.3f} +- {fit.slope_stderr:.3f}, r^2 {fit.r_squared:.4f}")
print("predicted exponent (an upper bound on the error):", -sch.rate_exponent())

# a slower width decay weakens the guarantee to k^-(d-g); on this instance the
# observed decay stays faster than that
slow = Schedule(g=0.25, d=0.5, s=1.0, step0=1 / (2 * p.L_f))
ens2 = run_ensemble(p, SolverConfig(slow, 100_000, seed=0), 30, sol.x_star)
fit2 = rate_fit(ens2.k, ens2.mean_sq_err, 1e3, 1e5)
print(f"d=0.5: slope {fit2.slope:.3f} (predicted exponent {-slow.rate_exponent()})")
