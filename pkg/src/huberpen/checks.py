"""Property suites over the penalty kernel and the penalized minimizers.

Each suite returns a :class:`~huberpen.oracle.CheckReport`. Rows carry the
worst observed margin (bound minus observed value), so a negative margin
beyond the slack marks a violation. Failing rows keep enough data to replay
the offending sample.
"""

import numpy as np

from . import penalty as pen
from .oracle import (
    CheckReport,
    ball_radius,
    check_drift_lemma,
    check_gap_lemma,
    check_level_set,
    solve_constrained_exact,
    subgradient_bound,
)
from .problem import GeneratorSpec, generate_problem, problem_to_dict
from .schedule import Schedule

SLACK = 1e-12
FD_RTOL = 1e-6
DRIFT_K = tuple(2**j for j in range(9))


def _random_halfspace(rng, max_dim):
    n = int(rng.integers(1, max_dim + 1))
    a = rng.standard_normal(n) * rng.uniform(0.2, 5.0)
    return pen.Halfspace(a, float(rng.normal(scale=2.0))), n


def _points_near(rng, hs, delta, count):
    """Random points; half are moved so the residual lands within 3 delta of 0."""
    x = rng.standard_normal((count, hs.dim)) * 3.0
    move = rng.uniform(size=count) < 0.5
    target = rng.uniform(-3.0, 3.0, size=count) * delta
    shift = (target - (x @ hs.a - hs.b)) / hs.norm_a**2
    return x + np.where(move, shift, 0.0)[:, None] * hs.a


class _Worst:
    def __init__(self, name):
        self.name = name
        self.margin = np.inf
        self.sample = None
        self.count = 0

    def update(self, margins, samples):
        """Fold an array of margins; ``samples(j)`` describes entry j."""
        margins = np.atleast_1d(np.asarray(margins, dtype=float))
        if margins.size == 0:
            return
        self.count += margins.size
        j = int(np.argmin(margins))
        if margins[j] < self.margin:
            self.margin = float(margins[j])
            self.sample = samples(j)

    def row(self, slack=SLACK):
        ok = bool(self.margin >= -slack)
        row = {"property": self.name, "samples": self.count, "worst_margin": self.margin, "ok": ok}
        if not ok:
            row["sample"] = self.sample
        return row


def penalty_suite(seed=0, samples=10_000, max_dim=8, per_halfspace=5):
    """Sampled checks of the kernel's bounds, monotonicity and derivatives.

    Draws ``samples / per_halfspace`` random ``(a, b, delta)`` and
    ``per_halfspace`` points for each.
    """
    rng = np.random.default_rng(seed)
    names = ["nonnegative", "feasible_upper", "infeasible_lower", "delta_monotone",
             "dominates_distance", "zero_width_is_distance", "grad_norm", "grad_lipschitz",
             "grad_finite_difference"]
    worst = {k: _Worst(k) for k in names}
    eps = np.finfo(float).eps ** (1.0 / 3.0)

    for _ in range(max(1, samples // per_halfspace)):
        hs, n = _random_halfspace(rng, max_dim)
        delta = float(10 ** rng.uniform(-3, 1))
        X = _points_near(rng, hs, delta, per_halfspace)
        Y = _points_near(rng, hs, delta, per_halfspace)

        def sample(j, **extra):
            return {"a": hs.a.tolist(), "b": hs.b, "x": X[j].tolist(), "delta": delta, **extra}

        s = X @ hs.a - hs.b
        h = pen.h_delta(X, hs, delta)
        dist = pen.dist_halfspace(X, hs)
        cap = delta / (4.0 * hs.norm_a)
        inside = s <= 0

        worst["nonnegative"].update(h, sample)
        worst["feasible_upper"].update((cap - h)[inside], lambda j: sample(np.flatnonzero(inside)[j]))
        # strict inequality: equality counts as a failure
        lower = np.where(h > cap, h - cap, -1.0)[~inside]
        worst["infeasible_lower"].update(lower, lambda j: sample(np.flatnonzero(~inside)[j]))
        delta2 = delta * float(rng.uniform(1.0, 10.0))
        worst["delta_monotone"].update(pen.h_delta(X, hs, delta2) - h, lambda j: sample(j, delta2=delta2))
        worst["dominates_distance"].update(h - dist, sample)
        proj = X - (np.maximum(s, 0.0) / hs.norm_a**2)[:, None] * hs.a
        proj_dist = np.linalg.norm(X - proj, axis=1)
        d0 = pen.h_delta(X, hs, 0.0)
        worst["zero_width_is_distance"].update(1e-12 * (1.0 + proj_dist) - np.abs(d0 - proj_dist), sample)

        gx = pen.grad_h_delta(X, hs, delta)
        gy = pen.grad_h_delta(Y, hs, delta)
        worst["grad_norm"].update(1.0 - np.linalg.norm(gx, axis=1), sample)
        lip = pen.grad_lipschitz_constant(hs, delta) * np.linalg.norm(X - Y, axis=1)
        worst["grad_lipschitz"].update(lip - np.linalg.norm(gx - gy, axis=1),
                                       lambda j: sample(j, y=Y[j].tolist()))

        steps = eps * (1.0 + np.linalg.norm(X, axis=1))
        # keep every probe on one branch of the kernel
        smooth = np.minimum(np.abs(s - delta), np.abs(s + delta)) > 10 * steps * hs.norm_a
        for j in np.flatnonzero(smooth):
            E = np.eye(n) * steps[j]
            fd = (pen.h_delta(X[j] + E, hs, delta) - pen.h_delta(X[j] - E, hs, delta)) / (2 * steps[j])
            err = np.linalg.norm(fd - gx[j]) / max(np.linalg.norm(gx[j]), 1.0)
            worst["grad_finite_difference"].update(FD_RTOL - err, lambda _, j=j: sample(j))

    report = CheckReport("penalty")
    report.rows = [w.row() for w in worst.values()]
    return report


def perturbation_suite(seed=0, pairs=100, points=10_000):
    """Sampled sup of ``||grad h_d1 - grad h_d2||`` against ``(d1 - d2) / (2 d1)``.

    The sample includes points with residual ``s = +-d2``, where the
    difference is largest, so the sup must also come within 1% of the bound.
    """
    rng = np.random.default_rng(seed)
    report = CheckReport("perturbation")
    for _ in range(pairs):
        hs, n = _random_halfspace(rng, 8)
        d1 = float(10 ** rng.uniform(-3, 1))
        d2 = d1 * float(rng.uniform(0.01, 0.99))
        bound = pen.grad_delta_perturbation_bound(d1, d2)
        s = rng.uniform(-2 * d1, 2 * d1, size=points)
        s[:2] = (-d2, d2)
        X = rng.standard_normal((points, n))
        X += ((s - (X @ hs.a - hs.b)) / hs.norm_a**2)[:, None] * hs.a
        diff = np.linalg.norm(pen.grad_h_delta(X, hs, d1) - pen.grad_h_delta(X, hs, d2), axis=1)
        sup = float(diff.max())
        report.rows.append({
            "delta1": d1, "delta2": d2, "bound": bound, "sup": sup,
            "margin": bound - sup, "attained": sup / bound,
            "ok": bool(sup <= bound + SLACK and sup >= 0.99 * bound),
        })
    return report


def _instance(n, m, seed):
    return generate_problem(n, m, seed, GeneratorSpec(active_optimum=True))


def drift_suite(seeds=(0, 1, 2, 3, 4), ks=DRIFT_K, tol=1e-6, minimizer_tol=1e-9):
    """Drift and level-set checks along the recommended schedule."""
    drift = CheckReport("drift")
    level = CheckReport("level_set")
    sch = Schedule(g=0.25, d=0.75, s=1.0)
    for seed in seeds:
        rng = np.random.default_rng(10_000 + seed)
        n, m = int(rng.integers(2, 7)), int(rng.integers(2, 9))
        p = _instance(n, m, seed)
        sol = solve_constrained_exact(p)
        rep = check_drift_lemma(p, sch, ks, tol=tol, minimizer_tol=minimizer_tol)
        lev = check_level_set(p, sch, rep.minimizers, sol, tol=1e-8)
        for r in rep.rows:
            drift.rows.append({"seed": seed, "n": n, "m": m, **r})
        for r in lev.rows:
            level.rows.append({"seed": seed, "n": n, "m": m, **r})
        if not (rep.passed and lev.passed):
            drift.notes.append({"seed": seed, "problem": problem_to_dict(p)})
    return drift, level


def single_constraint_gap_params(p, sol, gd=1e-2, factor=8.0):
    """``(gamma, delta, R)`` with ``gamma * delta = gd`` and ``gamma / 4 = factor / 4 * L``."""
    R = ball_radius(p, sol, gd)
    gamma = factor * subgradient_bound(p, R)
    return gamma, gd / gamma, R


def gap_suite(seeds=(0, 1, 2, 3, 4), tol=1e-8):
    """Full inequality on single-constraint instances; consequence for general m."""
    report = CheckReport("gap")
    for seed in seeds:
        rng = np.random.default_rng(20_000 + seed)
        n = int(rng.integers(1, 5))
        p = _instance(n, 1, 100 + seed)
        sol = solve_constrained_exact(p)
        gamma, delta, R = single_constraint_gap_params(p, sol)
        rep = check_gap_lemma(p, gamma, delta, tol=tol, sol=sol, R=R)
        report.rows += [{"seed": seed, "n": n, **r} for r in rep.rows]
        if not rep.passed:
            report.notes.append({"seed": seed, "problem": problem_to_dict(p)})
    for seed in seeds:
        rng = np.random.default_rng(30_000 + seed)
        n, m = int(rng.integers(2, 5)), int(rng.integers(2, 7))
        p = _instance(n, m, 200 + seed)
        rep = check_gap_lemma(p, 1e3, 1e-4, tol=tol, beta_samples=50)
        report.rows += [{"seed": seed, "n": n, **r} for r in rep.rows]
        if not rep.passed:
            report.notes.append({"seed": seed, "problem": problem_to_dict(p)})
    return report
