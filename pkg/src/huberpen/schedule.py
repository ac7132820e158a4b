"""Power-law parameter schedules.

``gamma_k = gamma0 * k**g``, ``delta_k = delta0 * k**-d`` and
``step_k = step0 * k**-s`` for ``k >= 1``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error", "warning" or "info"
    message: str
    value: float = None


@dataclass(frozen=True)
class Schedule:
    g: float = 0.25
    d: float = 0.75
    s: float = 1.0
    gamma0: float = 1.0
    delta0: float = 1.0
    step0: float = 1.0

    @property
    def gd_bound(self):
        """Upper bound on ``gamma_k * delta_k`` over ``k >= 1`` when ``g <= d``."""
        return self.gamma0 * self.delta0

    def rate_exponent(self):
        """Predicted exponent r in ``E||x_k - x*||^2 = O(k**-r)``."""
        return min(self.s - 2 * self.g, 2 - 2 * self.s + 2 * self.g, self.d - self.g)

    def with_step0(self, step0):
        return Schedule(self.g, self.d, self.s, self.gamma0, self.delta0, step0)

    def to_dict(self):
        return {k: getattr(self, k) for k in ("g", "d", "s", "gamma0", "delta0", "step0")}


def _check_k(k):
    # scalars stay Python floats so every caller rounds identically
    if np.ndim(k) == 0:
        if k < 1:
            raise DomainError(f"iteration index must be >= 1, got {k}")
        return float(k)
    k = np.asarray(k, dtype=float)
    if np.any(k < 1):
        raise DomainError("iteration index must be >= 1")
    return k


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def gamma_at(sch, k):
    return _out(sch.gamma0 * _check_k(k) ** sch.g)


def delta_at(sch, k):
    return _out(sch.delta0 * _check_k(k) ** -sch.d)


def step_at(sch, k):
    return _out(sch.step0 * _check_k(k) ** -sch.s)


def validate(sch):
    """Check a schedule; returns a list of :class:`Diagnostic`.

    No ``error`` entries means the schedule is usable. Warnings flag a
    non-positive predicted rate; one info entry reports the exponent.
    """
    diags = []
    if not sch.g > 0:
        diags.append(Diagnostic("error", f"g must be > 0, got {sch.g}", sch.g))
    if not sch.d > 0:
        diags.append(Diagnostic("error", f"d must be > 0, got {sch.d}", sch.d))
    if not 0 < sch.s <= 1:
        diags.append(Diagnostic("error", f"s must lie in (0, 1], got {sch.s}", sch.s))
    if sch.g > sch.d:
        diags.append(Diagnostic("error", f"g={sch.g} > d={sch.d}: gamma_k*delta_k increases", sch.d - sch.g))
    for name in ("gamma0", "delta0", "step0"):
        v = getattr(sch, name)
        if not (np.isfinite(v) and v > 0):
            diags.append(Diagnostic("error", f"{name} must be finite and > 0, got {v}", v))
    if any(dg.level == "error" for dg in diags):
        return diags

    e1 = sch.s - 2 * sch.g
    e2 = 2 - 2 * sch.s + 2 * sch.g
    e3 = sch.d - sch.g
    if min(e1, e2) <= 0:
        diags.append(Diagnostic("warning", f"min(s-2g, 2-2s+2g) = {min(e1, e2):g} <= 0; no rate guarantee", min(e1, e2)))
    if e3 <= 0:
        diags.append(Diagnostic("warning", f"d-g = {e3:g} <= 0; no rate guarantee", e3))
    diags.append(Diagnostic("info", f"predicted rate exponent {sch.rate_exponent():g}", sch.rate_exponent()))
    return diags


def is_valid(sch):
    return not any(dg.level == "error" for dg in validate(sch))


def drift_bound(sch, mu, k):
    """Bound on ``||x_k* - x_{k+1}*||`` for successive penalized minimizers.

    Only needs gamma_k nondecreasing and delta_k nonincreasing, so constant
    schedules (``g = d = 0``) are accepted and give zero.
    """
    if not mu > 0:
        raise DomainError("mu must be > 0")
    if sch.g < 0 or sch.d < 0 or not (sch.gamma0 > 0 and sch.delta0 > 0):
        raise DomainError("drift bound needs g >= 0, d >= 0 and positive scales")
    g0, g1 = gamma_at(sch, k), gamma_at(sch, np.asarray(k) + 1)
    d0, d1 = delta_at(sch, k), delta_at(sch, np.asarray(k) + 1)
    return _out(((g1 - g0) + g0 * (d0 - d1) / (2 * d0)) / mu)
