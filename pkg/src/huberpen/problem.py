"""Strongly convex quadratic programs with linear inequality constraints.

A problem is ``minimize f(x) = 1/2 x'Qx + c'x  s.t.  <a_i, x> - b_i <= 0``.
The penalized objective replaces the constraints by the averaged Huber
penalty, ``F(x) = f(x) + (gamma / m) * sum_i h_delta(x; a_i, b_i)``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .penalty import Halfspace, _as_point

GENERATOR_NAME = "huberpen.generate_problem/1"


class Objective:
    """Smooth, strongly convex objective.

    Subclasses provide ``value``, ``grad``, ``mu`` and ``L_f``. Only
    :class:`QuadraticObjective` ships with the package.
    """

    n: int
    mu: float
    L_f: float

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticObjective(Objective):
    """``f(x) = 1/2 x'Qx + linear_term'x`` with symmetric positive definite Q."""

    Q: np.ndarray
    linear_term: np.ndarray
    mu: float = field(init=False)
    L_f: float = field(init=False)

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        c = np.array(self.linear_term, dtype=float).reshape(-1)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] != c.size:
            raise DomainError(f"Q {Q.shape} and linear term {c.shape} disagree")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(c))):
            raise DomainError("objective data must be finite")
        scale = max(np.abs(Q).max(), np.finfo(float).tiny)
        if np.abs(Q - Q.T).max() > 1e-12 * scale:
            raise DomainError("Q must be symmetric")
        Q = 0.5 * (Q + Q.T)
        eig = np.linalg.eigvalsh(Q)
        if eig[0] <= 0:
            raise DomainError(f"Q must be positive definite, min eigenvalue {eig[0]}")
        Q.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "linear_term", c)
        object.__setattr__(self, "mu", float(eig[0]))
        object.__setattr__(self, "L_f", float(eig[-1]))

    @property
    def n(self):
        return self.linear_term.size

    def value(self, x):
        return 0.5 * float(x @ self.Q @ x) + float(self.linear_term @ x)

    def grad(self, x):
        return self.Q @ x + self.linear_term

    def unconstrained_minimizer(self):
        return -np.linalg.solve(self.Q, self.linear_term)


@dataclass(frozen=True)
class ConstrainedProblem:
    """Objective plus a list of halfspace constraints.

    ``A``, ``b`` and ``norms`` stack the constraint data for vectorized
    evaluation; they are derived from ``constraints`` and read-only.
    """

    objective: QuadraticObjective
    constraints: tuple
    witness: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        cons = tuple(self.constraints)
        if len(cons) < 1:
            raise DomainError("need at least one constraint")
        n = self.objective.n
        for i, hs in enumerate(cons):
            if hs.dim != n:
                raise DomainError(f"constraint {i} has dimension {hs.dim}, expected {n}")
        object.__setattr__(self, "constraints", cons)
        A = np.array([hs.a for hs in cons])
        b = np.array([hs.b for hs in cons])
        norms = np.array([hs.norm_a for hs in cons])
        for arr in (A, b, norms):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "norms", norms)
        if self.witness is not None:
            w = _as_point(self.witness, n).copy()
            w.setflags(write=False)
            object.__setattr__(self, "witness", w)

    @property
    def n(self):
        return self.objective.n

    @property
    def m(self):
        return len(self.constraints)

    @property
    def mu(self):
        return self.objective.mu

    @property
    def L_f(self):
        return self.objective.L_f

    @property
    def alpha_min(self):
        return float(self.norms.min())

    def residuals(self, x):
        """Vector of ``<a_i, x> - b_i``."""
        return self.A @ _as_point(x, self.n) - self.b

    def is_feasible(self, x, tol=0.0):
        return bool(np.all(self.residuals(x) <= tol))


def f_value(p, x):
    x = _as_point(x, p.n)
    return p.objective.value(x)


def grad_f(p, x):
    x = _as_point(x, p.n)
    return p.objective.grad(x)


def _penalty_terms(p, x, delta):
    s = p.A @ x - p.b
    if delta == 0:
        return np.maximum(s, 0.0) / p.norms
    vals = np.where(s > delta, s, np.where(s < -delta, 0.0, (s + delta) ** 2 / (4.0 * delta)))
    return vals / p.norms


def _penalty_slopes(p, x, delta):
    s = p.A @ x - p.b
    return np.clip((s + delta) / (2.0 * delta), 0.0, 1.0)


def _check_params(gamma, delta, smooth):
    if not (np.isfinite(gamma) and gamma > 0):
        raise DomainError(f"gamma must be > 0, got {gamma}")
    if not np.isfinite(delta) or delta < 0 or (smooth and delta == 0):
        bound = "> 0" if smooth else ">= 0"
        raise DomainError(f"delta must be {bound}, got {delta}")


def F_value(p, x, gamma, delta):
    """Penalized objective ``f(x) + (gamma/m) sum_i h_delta(x; a_i, b_i)``."""
    _check_params(gamma, delta, smooth=False)
    x = _as_point(x, p.n)
    return p.objective.value(x) + gamma / p.m * float(_penalty_terms(p, x, delta).sum())


def penalty_gradients(p, x, delta):
    """Rows ``grad h_delta(x; a_i, b_i)`` for every constraint, shape (m, n)."""
    _check_params(1.0, delta, smooth=True)
    x = _as_point(x, p.n)
    return (_penalty_slopes(p, x, delta) / p.norms)[:, None] * p.A


def grad_F(p, x, gamma, delta):
    """Gradient of :func:`F_value`; requires ``delta > 0``."""
    _check_params(gamma, delta, smooth=True)
    x = _as_point(x, p.n)
    coef = _penalty_slopes(p, x, delta) / p.norms
    return p.objective.grad(x) + (gamma / p.m) * (coef @ p.A)


def dist_feasible_set(p, x, tol=1e-10):
    """Distance from ``x`` to the feasible polyhedron, via the exact projector."""
    from .oracle import project_polyhedron

    if not tol > 0:
        raise DomainError("tol must be > 0")
    x = _as_point(x, p.n)
    if p.is_feasible(x):
        return 0.0
    return float(np.linalg.norm(x - project_polyhedron(p, x, tol)))


# -- generation ---------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorSpec:
    """Knobs for :func:`generate_problem`.

    Eigenvalues of Q are drawn in ``[mu_min, L_max]`` (both endpoints are
    used when ``n >= 2``). Constraint normals have norms drawn uniformly in
    ``normal_scale``. Offsets keep the witness at least ``margin * ||a_i||``
    inside every constraint, plus a random slack in ``[0, slack]``. With
    ``active_optimum`` the unconstrained minimizer is pushed ``violation``
    beyond one randomly chosen constraint.
    """

    mu_min: float = 1.0
    L_max: float = 3.0
    normal_scale: tuple = (1.0, 1.0)
    witness_scale: float = 1.0
    margin: float = 1e-2
    slack: float = 1.0
    active_optimum: bool = False
    violation: float = 0.2

    def validate(self):
        if not 0 < self.mu_min <= self.L_max:
            raise DomainError("need 0 < mu_min <= L_max")
        lo, hi = self.normal_scale
        if not 0 < lo <= hi:
            raise DomainError("need 0 < normal_scale[0] <= normal_scale[1]")
        if self.margin <= 0 or self.slack < 0 or self.witness_scale < 0:
            raise DomainError("margin must be > 0; slack and witness_scale >= 0")
        if self.active_optimum and self.violation <= 0:
            raise DomainError("violation must be > 0 for an active optimum")


def generate_problem(n, m, seed, spec=None):
    """Random strictly feasible instance, reproducible from ``seed``."""
    spec = spec or GeneratorSpec()
    if int(n) != n or int(m) != m or n < 1 or m < 1:
        raise DomainError(f"need integers n >= 1 and m >= 1, got n={n}, m={m}")
    n, m = int(n), int(m)
    spec.validate()
    rng = np.random.default_rng(seed)

    eig = rng.uniform(spec.mu_min, spec.L_max, size=n)
    if n >= 2:
        eig[0], eig[1] = spec.mu_min, spec.L_max
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q = (U * eig) @ U.T
    Q = 0.5 * (Q + Q.T)

    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=1)[:, None]
    A *= rng.uniform(*spec.normal_scale, size=m)[:, None]
    norms = np.linalg.norm(A, axis=1)

    witness = spec.witness_scale * rng.standard_normal(n)
    b = A @ witness + norms * (spec.margin + spec.slack * rng.uniform(size=m))

    if spec.active_optimum:
        j = int(rng.integers(m))
        # step from the witness along a_j until the point is `violation` outside X_j
        gap = b[j] - A[j] @ witness
        x_unc = witness + (gap / norms[j] + spec.violation) * A[j] / norms[j]
        c = -Q @ x_unc
    else:
        c = rng.standard_normal(n)

    return ConstrainedProblem(
        objective=QuadraticObjective(Q, c),
        constraints=tuple(Halfspace(A[i], b[i]) for i in range(m)),
        witness=witness,
        meta={"seed": int(seed), "generator": GENERATOR_NAME},
    )


# -- file format --------------------------------------------------------------


def problem_to_dict(p):
    return {
        "n": p.n,
        "m": p.m,
        "Q": p.objective.Q.tolist(),
        "linear_term": p.objective.linear_term.tolist(),
        "constraints": [{"a": hs.a.tolist(), "b": hs.b} for hs in p.constraints],
        "witness": None if p.witness is None else p.witness.tolist(),
        "meta": dict(p.meta),
    }


def problem_from_dict(d):
    n, m = int(d["n"]), int(d["m"])
    cons = tuple(Halfspace(np.asarray(c["a"], dtype=float), float(c["b"])) for c in d["constraints"])
    if len(cons) != m:
        raise DomainError(f"file declares m={m} but lists {len(cons)} constraints")
    obj = QuadraticObjective(np.asarray(d["Q"], dtype=float), np.asarray(d["linear_term"], dtype=float))
    if obj.n != n:
        raise DomainError(f"file declares n={n} but Q is {obj.Q.shape}")
    witness = d.get("witness")
    return ConstrainedProblem(
        objective=obj,
        constraints=cons,
        witness=None if witness is None else np.asarray(witness, dtype=float),
        meta=dict(d.get("meta") or {}),
    )


def dumps_problem(p):
    # json emits floats with repr(), the shortest round-trip decimal
    return json.dumps(problem_to_dict(p), indent=1) + "\n"


def save_problem(p, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_problem(p))


def load_problem(path):
    with open(path, encoding="utf-8") as fh:
        return problem_from_dict(json.load(fh))
