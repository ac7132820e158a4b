"""One-sided Huber penalty for a single linear inequality.

For a constraint ``<a, x> - b <= 0`` and smoothing width ``delta > 0`` the
scalar kernel is::

              | s                        s >  delta
    p(s)  =   | (s + delta)^2 / (4 delta)  -delta <= s <= delta
              | 0                        s < -delta

and the penalty is ``h(x) = p(<a, x> - b) / ||a||``. With ``delta = 0`` the
penalty reduces to the Euclidean distance to the halfspace.

The scalar kernels accept numpy arrays and broadcast.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Halfspace:
    """The set ``{x : <a, x> - b <= 0}`` with the norm of ``a`` cached."""

    a: np.ndarray
    b: float
    norm_a: float = field(init=False)

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim != 1 or a.size == 0:
            raise DomainError("normal vector must be a non-empty 1-d array")
        if not np.all(np.isfinite(a)) or not np.isfinite(self.b):
            raise DomainError("halfspace data must be finite")
        norm_a = float(np.linalg.norm(a))
        if norm_a == 0.0:
            raise DomainError("normal vector must be nonzero")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "norm_a", norm_a)

    @property
    def dim(self):
        return self.a.size

    def residual(self, x):
        """Return ``<a, x> - b``."""
        x = _as_point(x, self.dim)
        return float(self.a @ x) - self.b

    def project(self, x):
        """Euclidean projection of ``x`` onto the halfspace."""
        x = _as_point(x, self.dim)
        viol = max(0.0, float(self.a @ x) - self.b)
        return x - (viol / self.norm_a**2) * self.a


@dataclass(frozen=True)
class PenaltyParams:
    """Penalty weight ``gamma > 0`` and smoothing width ``delta >= 0``."""

    delta: float
    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta >= 0):
            raise DomainError(f"delta must be >= 0, got {self.delta}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise DomainError(f"gamma must be > 0, got {self.gamma}")


def _as_point(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape != (dim,):
        raise DomainError(f"point has shape {x.shape}, expected ({dim},)")
    return x


def _as_points(x, dim):
    """Accept one point of shape (dim,) or a stack of shape (N, dim)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 and dim == 1:
        x = x.reshape(1)
    if x.ndim not in (1, 2) or x.shape[-1] != dim:
        raise DomainError(f"points have shape {x.shape}, expected (..., {dim})")
    return x


def _check_kernel_args(s, delta):
    if not (np.isfinite(delta) and delta > 0):
        raise DomainError(f"delta must be finite and > 0, got {delta}")
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise DomainError("s must be finite")
    return s


def _scalar_or_array(out):
    return float(out) if out.ndim == 0 else out


def p_delta(s, delta):
    """Scalar Huber kernel, evaluated elementwise.

    The middle branch owns the closed interval ``[-delta, delta]``.
    """
    s = _check_kernel_args(s, delta)
    out = np.where(
        s > delta,
        s,
        np.where(s < -delta, 0.0, (s + delta) ** 2 / (4.0 * delta)),
    )
    return _scalar_or_array(out)


def p_delta_prime(s, delta):
    """Derivative of :func:`p_delta`; values lie in ``[0, 1]``."""
    s = _check_kernel_args(s, delta)
    out = np.where(
        s > delta,
        1.0,
        np.where(s < -delta, 0.0, (s + delta) / (2.0 * delta)),
    )
    return _scalar_or_array(out)


def dist_halfspace(x, hs):
    """Euclidean distance from ``x`` to the halfspace ``hs``.

    ``x`` may be a single point or a stack of points along the first axis.
    """
    x = _as_points(x, hs.dim)
    return _scalar_or_array(np.maximum(x @ hs.a - hs.b, 0.0) / hs.norm_a)


def h_delta(x, hs, delta):
    """Penalty ``p_delta(<a, x> - b) / ||a||``; ``delta = 0`` gives the distance."""
    if not (np.isfinite(delta) and delta >= 0):
        raise DomainError(f"delta must be >= 0, got {delta}")
    if delta == 0:
        return dist_halfspace(x, hs)
    x = _as_points(x, hs.dim)
    return p_delta(x @ hs.a - hs.b, delta) / hs.norm_a


def grad_h_delta(x, hs, delta):
    """Gradient ``p'_delta(<a, x> - b) a / ||a||``, one row per point.

    Its norm never exceeds one and it is Lipschitz in ``x`` with constant
    ``||a|| / (2 delta)``. Undefined for ``delta = 0``.
    """
    if not (np.isfinite(delta) and delta > 0):
        raise DomainError(f"gradient requires delta > 0, got {delta}")
    x = _as_points(x, hs.dim)
    slope = np.asarray(p_delta_prime(x @ hs.a - hs.b, delta))
    return (slope / hs.norm_a)[..., None] * hs.a


def grad_delta_perturbation_bound(delta1, delta2):
    """Uniform bound on ``||grad h_delta1(x) - grad h_delta2(x)||``.

    Requires ``delta1 >= delta2 > 0``; returns ``(delta1 - delta2) / (2 delta1)``.
    """
    if not (np.isfinite(delta1) and np.isfinite(delta2)):
        raise DomainError("widths must be finite")
    if not delta1 >= delta2 > 0:
        raise DomainError(f"need delta1 >= delta2 > 0, got {delta1}, {delta2}")
    return (delta1 - delta2) / (2.0 * delta1)


def grad_lipschitz_constant(hs, delta):
    """Lipschitz constant ``||a|| / (2 delta)`` of :func:`grad_h_delta`."""
    if not (np.isfinite(delta) and delta > 0):
        raise DomainError(f"delta must be > 0, got {delta}")
    return hs.norm_a / (2.0 * delta)
