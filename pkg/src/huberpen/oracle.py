"""Reference solvers for small instances.

Everything here is brute force and certificate-checked. These routines are
the ground truth the incremental solver and the lemma checks are measured
against; they are not meant to scale past a few dozen constraints.
"""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, NumericalError
from .penalty import _as_point
from .problem import F_value, grad_F
from .schedule import delta_at, drift_bound, gamma_at

MAX_ENUMERATION_M = 20
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class OracleSolution:
    """Constrained optimum with its KKT certificate.

    ``multipliers`` has one entry per constraint (zero off the active set).
    ``kkt`` holds the stationarity, primal, dual and complementarity
    residuals of the returned point.
    """

    x_star: np.ndarray
    f_star: float
    active_set: tuple
    multipliers: np.ndarray
    tolerance: float
    kkt: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "x_star": self.x_star.tolist(),
            "f_star": self.f_star,
            "active_set": list(self.active_set),
            "multipliers": self.multipliers.tolist(),
            "tolerance": self.tolerance,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            x_star=np.asarray(d["x_star"], dtype=float),
            f_star=float(d["f_star"]),
            active_set=tuple(int(i) for i in d["active_set"]),
            multipliers=np.asarray(d["multipliers"], dtype=float),
            tolerance=float(d["tolerance"]),
        )


def save_solution(sol, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sol.to_dict(), fh, indent=1)
        fh.write("\n")


def load_solution(path):
    with open(path, encoding="utf-8") as fh:
        return OracleSolution.from_dict(json.load(fh))


def kkt_residuals(Q, c, A, b, x, lam):
    """Stationarity, primal, dual and complementarity residuals."""
    r = A @ x - b
    return {
        "stationarity": float(np.linalg.norm(Q @ x + c + A.T @ lam)),
        "primal": float(max(0.0, r.max())),
        "dual": float(max(0.0, -lam.min())),
        "complementarity": float(np.abs(lam * r).max()),
    }


def _enumerate_active_sets(Q, c, A, b, tol):
    """Smallest-first search over active sets; returns (x, lam, active)."""
    m, n = A.shape
    Qinv_At = np.linalg.solve(Q, A.T)
    x_unc = -np.linalg.solve(Q, c)
    r_unc = A @ x_unc - b
    a_norms = np.linalg.norm(A, axis=1)

    def feasible(x):
        r = A @ x - b
        return np.all(r <= tol * (1.0 + a_norms * np.linalg.norm(x) + np.abs(b)))

    if feasible(x_unc):
        return x_unc, np.zeros(m), ()

    M = A @ Qinv_At
    for size in range(1, min(n, m) + 1):
        for S in itertools.combinations(range(m), size):
            idx = list(S)
            A_S = A[idx]
            sv = np.linalg.svd(A_S, compute_uv=False)
            if sv[-1] <= RANK_RTOL * sv[0]:
                continue
            try:
                lam_S = np.linalg.solve(M[np.ix_(idx, idx)], r_unc[idx])
            except np.linalg.LinAlgError:
                continue
            if lam_S.min() < -tol * (1.0 + np.abs(lam_S).max()):
                continue
            x = x_unc - Qinv_At[:, idx] @ lam_S
            if not feasible(x):
                continue
            lam = np.zeros(m)
            lam[idx] = np.maximum(lam_S, 0.0)
            return x, lam, S
    return None


def solve_constrained_exact(p, tol=1e-10):
    """Exact minimizer of the quadratic program by active-set enumeration.

    Candidate active sets are visited by increasing size, then
    lexicographically; the first one whose equality-constrained KKT point
    is primal and dual feasible is returned. Strong convexity makes that
    point the unique optimum.
    """
    if p.m > MAX_ENUMERATION_M:
        raise DomainError(f"enumeration limited to m <= {MAX_ENUMERATION_M}, got m={p.m}")
    if not tol > 0:
        raise DomainError("tol must be > 0")
    Q, c = p.objective.Q, p.objective.linear_term
    found = _enumerate_active_sets(Q, c, p.A, p.b, tol)
    if found is None:
        raise NumericalError(
            "no KKT-consistent active set found (infeasible or rank-deficient instance)",
            m=p.m,
            n=p.n,
        )
    x, lam, S = found
    return OracleSolution(
        x_star=x,
        f_star=p.objective.value(x),
        active_set=tuple(S),
        multipliers=lam,
        tolerance=tol,
        kkt=kkt_residuals(Q, c, p.A, p.b, x, lam),
    )


def project_polyhedron(p, x, tol=1e-10):
    """Euclidean projection of ``x`` onto the feasible polyhedron."""
    if p.m > MAX_ENUMERATION_M:
        raise DomainError(f"enumeration limited to m <= {MAX_ENUMERATION_M}, got m={p.m}")
    x = _as_point(x, p.n)
    if p.is_feasible(x):
        return x.copy()
    if p.m == 1:
        return p.constraints[0].project(x)
    found = _enumerate_active_sets(np.eye(p.n), -x, p.A, p.b, tol)
    if found is None:
        raise NumericalError("projection failed: no KKT-consistent active set", x=x.tolist())
    return found[0]


def _penalty_hessian(p, x, gamma, delta):
    s = p.A @ x - p.b
    band = np.abs(s) <= delta
    H = p.objective.Q.copy()
    if band.any():
        Ab = p.A[band]
        w = (gamma / p.m) / (2.0 * delta * p.norms[band])
        H += (Ab * w[:, None]).T @ Ab
    return H


def penalized_smoothness(p, gamma, delta):
    """Lipschitz constant of ``grad_F``: ``L_f + gamma * max||a_i|| / (2 delta)``."""
    return p.L_f + gamma * float(p.norms.max()) / (2.0 * delta)


def minimize_penalized(p, gamma, delta, tol=1e-9, x0=None, method="newton", max_iter=None):
    """Minimizer of the penalized objective, certified by ``||grad F|| <= tol * mu``.

    By strong convexity the certificate implies the returned point is within
    ``tol`` of the true minimizer. ``method="newton"`` runs a damped
    generalized Newton iteration (the objective is piecewise quadratic);
    ``method="gd"`` runs plain gradient descent with step ``1/L``.
    """
    if not (gamma > 0 and delta > 0 and tol > 0):
        raise DomainError("need gamma > 0, delta > 0, tol > 0")
    x = p.objective.unconstrained_minimizer() if x0 is None else _as_point(x0, p.n).copy()
    target = tol * p.mu
    g = grad_F(p, x, gamma, delta)

    if method == "gd":
        step = 1.0 / penalized_smoothness(p, gamma, delta)
        max_iter = max_iter or 2_000_000
        for it in range(max_iter):
            if np.linalg.norm(g) <= target:
                return x
            x = x - step * g
            g = grad_F(p, x, gamma, delta)
        raise NumericalError("gradient descent hit the iteration cap", iterations=max_iter,
                             grad_norm=float(np.linalg.norm(g)), target=target)
    if method != "newton":
        raise DomainError(f"unknown method {method!r}")

    max_iter = max_iter or 500
    fx = F_value(p, x, gamma, delta)
    f_prev = np.inf
    best, stalled = np.inf, 0
    eps = np.finfo(float).eps
    for it in range(max_iter):
        gnorm = np.linalg.norm(g)
        if gnorm <= target:
            return x
        # progress is either a new best gradient or a decrease of F above round-off
        if gnorm < best or f_prev - fx > 16 * eps * max(1.0, abs(fx)):
            best, stalled = min(best, gnorm), 0
        else:
            stalled += 1
            if stalled >= 5:
                raise NumericalError("Newton iteration stalled above the certificate (round-off floor)",
                                     iteration=it, grad_norm=float(gnorm), target=target)
        f_prev = fx
        dx = -np.linalg.solve(_penalty_hessian(p, x, gamma, delta), g)
        slope = float(g @ dx)
        t = 1.0
        while t > 1e-12:
            x_new = x + t * dx
            f_new = F_value(p, x_new, gamma, delta)
            if f_new <= fx + 1e-4 * t * slope:
                break
            g_new = grad_F(p, x_new, gamma, delta)
            # F is flat to round-off near the minimizer; accept gradient progress
            if f_new <= fx and np.linalg.norm(g_new) < gnorm:
                break
            t *= 0.5
        else:
            raise NumericalError("line search failed", iteration=it, grad_norm=float(gnorm), target=target)
        x, fx = x_new, f_new
        g = grad_F(p, x, gamma, delta)
    raise NumericalError("Newton iteration hit the cap", iterations=max_iter,
                         grad_norm=float(np.linalg.norm(g)), target=target)


def subgradient_bound(p, R):
    """Bound ``L_f * R + ||c||`` on ``||grad f||`` over the ball of radius R."""
    if not R >= 0:
        raise DomainError("R must be >= 0")
    return p.L_f * R + float(np.linalg.norm(p.objective.linear_term))


def level_set_diameter(p, sol, gd):
    """Diameter bound of ``{x : f(x) <= f* + gd / (4 alpha_min)}``.

    For a quadratic the level set is contained in a ball of radius
    ``sqrt(2 (t - f_unc) / mu)`` about the unconstrained minimizer.
    """
    x_unc = p.objective.unconstrained_minimizer()
    t = sol.f_star + gd / (4.0 * p.alpha_min)
    excess = max(0.0, t - p.objective.value(x_unc))
    return 2.0 * np.sqrt(2.0 * excess / p.mu)


def ball_radius(p, sol, gd):
    """Radius R of a ball containing every penalized minimizer and its projection.

    Uses ``R = 2 * (||x*|| + level-set diameter)``; the factor two is slack.
    """
    return 2.0 * (float(np.linalg.norm(sol.x_star)) + level_set_diameter(p, sol, gd))


def estimate_hoffman(p, samples=200, seed=0, scale=1.0, tol=1e-10):
    """Empirical ``max dist(x, X) / sum_i dist(x, X_i)`` over sampled infeasible x."""
    rng = np.random.default_rng(seed)
    center = p.witness if p.witness is not None else np.zeros(p.n)
    best = 0.0
    for _ in range(samples):
        x = center + scale * (1.0 + rng.exponential()) * rng.standard_normal(p.n)
        parts = np.maximum(p.residuals(x), 0.0) / p.norms
        total = parts.sum()
        if total <= 0:
            continue
        d = float(np.linalg.norm(x - project_polyhedron(p, x, tol)))
        best = max(best, d / total)
    return best


# -- rate fitting -------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    n_points: int
    excluded: int = 0


def rate_fit(k, mse, k_min, k_max):
    """Least-squares fit of ``log(mse)`` against ``log(k)`` over ``[k_min, k_max]``.

    Non-positive entries are dropped and counted in ``excluded``; at least
    ten usable points are required.
    """
    k = np.asarray(k, dtype=float)
    mse = np.asarray(mse, dtype=float)
    if k.shape != mse.shape:
        raise DomainError("k and mse must have the same shape")
    window = (k >= k_min) & (k <= k_max) & np.isfinite(mse)
    usable = window & (mse > 0)
    excluded = int(window.sum() - usable.sum())
    if usable.sum() < 10:
        raise DomainError(f"need >= 10 positive points in [{k_min}, {k_max}], have {int(usable.sum())}")
    lk, lm = np.log(k[usable]), np.log(mse[usable])
    res = stats.linregress(lk, lm)
    return RateFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r_squared=float(res.rvalue**2),
        slope_stderr=float(res.stderr),
        n_points=int(usable.sum()),
        excluded=excluded,
    )


# -- lemma checks -------------------------------------------------------------


@dataclass
class CheckReport:
    name: str
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        """False if any asserted row fails; rows with ``ok=None`` are informational."""
        return all(r["ok"] is not False for r in self.rows)

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "rows": self.rows, "notes": self.notes}


def penalized_path(p, sch, ks, tol):
    """Penalized minimizers ``x_k*`` for each k in ``ks``, warm-started in order."""
    out = {}
    x0 = None
    for k in sorted(set(int(k) for k in ks)):
        x0 = minimize_penalized(p, gamma_at(sch, k), delta_at(sch, k), tol=tol, x0=x0)
        out[k] = x0
    return out


def check_drift_lemma(p, sch, k_list, tol=1e-6, minimizer_tol=None):
    """Check ``mu ||x_k* - x_{k+1}*|| <= mu * drift_bound(k) + tol`` for each k.

    Minimizers are computed at accuracy ``minimizer_tol`` (default
    ``tol / 10``); the report keeps them in ``report.minimizers`` for reuse.
    """
    ks = sorted(set(int(k) for k in k_list))
    xs = penalized_path(p, sch, ks + [k + 1 for k in ks], minimizer_tol or tol / 10)
    report = CheckReport("drift")
    for k in ks:
        lhs = p.mu * float(np.linalg.norm(xs[k] - xs[k + 1]))
        rhs = p.mu * drift_bound(sch, p.mu, k)
        report.rows.append({"k": k, "lhs": lhs, "rhs": rhs, "margin": rhs - lhs, "ok": bool(lhs <= rhs + tol)})
    report.minimizers = xs
    return report


def check_level_set(p, sch, minimizers, sol, tol=1e-8):
    """Check ``f(x_k*) <= f(x*) + gamma_k delta_k / (4 alpha_min) + tol``.

    Also checks every minimizer lies in the schedule-wide level set built
    from ``gd_bound``.
    """
    report = CheckReport("level_set")
    top = sol.f_star + sch.gd_bound / (4.0 * p.alpha_min)
    for k, x in sorted(minimizers.items()):
        fx = p.objective.value(x)
        rhs = sol.f_star + gamma_at(sch, k) * delta_at(sch, k) / (4.0 * p.alpha_min)
        report.rows.append({
            "k": k, "f": fx, "rhs": rhs, "margin": rhs - fx,
            "ok": bool(fx <= rhs + tol and fx <= top + tol),
        })
    return report


def check_gap_lemma(p, gamma, delta, tol=1e-8, sol=None, R=None, minimizer_tol=1e-9, beta_samples=100):
    """Check the optimality-gap inequality for one ``(gamma, delta)`` pair.

    For ``m = 1`` the Hoffman constant is exactly one and the full
    inequality is asserted whenever ``gamma / 4 > L``. For larger m only the
    consequence ``||x* - x_k*||^2 <= gamma delta / (2 mu alpha_min)`` is
    asserted; an empirical Hoffman estimate is reported alongside.
    """
    sol = sol or solve_constrained_exact(p)
    xk = minimize_penalized(p, gamma, delta, tol=minimizer_tol)
    pk = project_polyhedron(p, xk)
    if R is None:
        R = ball_radius(p, sol, gamma * delta)
    L = subgradient_bound(p, R)
    dist = float(np.linalg.norm(xk - pk))
    gap_x = float(np.sum((sol.x_star - xk) ** 2))
    gap_p = float(np.sum((sol.x_star - pk) ** 2))
    rhs = gamma * delta / (4.0 * p.alpha_min)
    report = CheckReport("gap")
    report.x_k = xk
    report.p_k = pk
    common = {"gamma": gamma, "delta": delta, "m": p.m, "L": L, "R": R, "dist": dist,
              "in_ball": bool(max(np.linalg.norm(xk), np.linalg.norm(pk)) <= R)}

    if p.m == 1:
        beta = 1.0
        coef = gamma / (4.0 * p.m * beta) - L
        if coef <= 0:
            report.notes.append(f"not in asymptotic regime: gamma/(4 m beta) - L = {coef:g} <= 0")
            report.rows.append({**common, "form": "full", "ok": None})
            return report
        lhs = 0.5 * p.mu * gap_x + 0.5 * p.mu * gap_p + coef * dist
        report.rows.append({**common, "form": "full", "beta": beta, "lhs": lhs, "rhs": rhs,
                            "margin": rhs - lhs, "ok": bool(lhs <= rhs + tol)})
        return report

    beta_hat = estimate_hoffman(p, samples=beta_samples)
    coef = gamma / (4.0 * p.m * beta_hat) - L if beta_hat > 0 else float("nan")
    if not coef > 0:
        report.notes.append(f"with beta_hat={beta_hat:g}, gamma/(4 m beta) - L = {coef:g}; regime not confirmed")
    bound = gamma * delta / (2.0 * p.mu * p.alpha_min)
    report.rows.append({**common, "form": "consequence", "beta_hat": beta_hat, "lhs": gap_x,
                        "rhs": bound, "margin": bound - gap_x, "ok": bool(gap_x <= bound + tol)})
    return report
