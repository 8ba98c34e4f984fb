"""Time-one flow maps of interpolating fields.

Integration uses the Dormand-Prince 5(4) embedded pair (7 stages, FSAL,
local extrapolation) with a PI step-size controller. The fields being
integrated are small (``||X_m|| <= 2 eps``) and smooth, so an explicit pair
is adequate; the tolerances go down to ~1e-15.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .maps import MapEvaluationError

__all__ = [
    "IntegratorConfig",
    "FlowResult",
    "FlowError",
    "StepSizeUnderflow",
    "MaxStepsExceeded",
    "FieldEvaluationError",
    "FlowNonConvergence",
    "integrate",
    "integrate_fixed",
    "flow",
    "flow_time_one",
    "flow_time_one_verified",
]

# Dormand & Prince (1980), "A family of embedded Runge-Kutta formulae".
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
# B5 - B4 written out exactly rather than differenced in floating point
E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

ORDER = 5
SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
# PI controller exponents (Hairer, Norsett & Wanner, II.4)
BETA = 0.04
ALPHA = 1 / ORDER - 0.75 * BETA


class FlowError(RuntimeError):
    pass


class StepSizeUnderflow(FlowError):
    pass


class MaxStepsExceeded(FlowError):
    pass


class FieldEvaluationError(FlowError):
    pass


class FlowNonConvergence(FlowError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    abs_tol: float = 1e-13
    rel_tol: float = 1e-13
    max_steps: int = 100_000
    min_step: float = 1e-12

    def __post_init__(self):
        for name in ("abs_tol", "rel_tol"):
            value = getattr(self, name)
            if not 0 < value <= 1e-3:
                raise ValueError(f"{name} must lie in (0, 1e-3], got {value}")
        if self.max_steps < 10:
            raise ValueError("max_steps must be >= 10")
        if not self.min_step > 0:
            raise ValueError("min_step must be positive")

    def tightened(self, factor=100.0):
        return dataclasses.replace(
            self, abs_tol=self.abs_tol / factor, rel_tol=self.rel_tol / factor
        )


@dataclass
class FlowResult:
    endpoint: np.ndarray
    accepted_steps: int
    rejected_steps: int
    est_global_error: float
    escaped: bool = False


def _call(rhs, y):
    try:
        k = rhs(y)
    except MapEvaluationError as exc:
        raise FieldEvaluationError(f"field evaluation failed at {y}: {exc}") from exc
    if not np.all(np.isfinite(k)):
        raise FieldEvaluationError(f"field is not finite at {y}")
    return k


def _rk_step(rhs, y, k1, dt):
    ks = [k1]
    for i in range(1, 7):
        incr = sum(a * kj for a, kj in zip(A[i], ks) if a != 0.0)
        ks.append(_call(rhs, y + dt * incr))
    # stage 7 is evaluated at the 5th-order solution (FSAL)
    y_new = y + dt * sum(b * kj for b, kj in zip(B5, ks) if b != 0.0)
    err = dt * sum(e * kj for e, kj in zip(E, ks) if e != 0.0)
    return y_new, err, ks[6]


def integrate(rhs, y0, t_end, cfg=None, guard=None, guard_radius=None):
    """Integrate the autonomous ODE ``y' = rhs(y)`` from 0 to ``t_end``.

    If ``guard`` (a :class:`~flowembed.maps.Domain`) is given, the
    integration aborts with ``escaped=True`` as soon as an accepted state
    lies farther than ``guard_radius`` (default ``guard.delta / 3``) from
    the box, and the last in-domain state is returned.
    """
    cfg = cfg or IntegratorConfig()
    y = np.array(y0, copy=True)
    if guard is not None and guard_radius is None:
        guard_radius = guard.delta / 3
    t = 0.0
    dt = float(t_end)
    k1 = _call(rhs, y)
    accepted = rejected = 0
    global_err = 0.0
    err_prev = 1e-4
    last_rejected = False
    while t < t_end:
        if accepted + rejected >= cfg.max_steps:
            raise MaxStepsExceeded(f"exceeded {cfg.max_steps} steps at t={t}")
        remaining = t_end - t
        if dt >= remaining:
            dt = remaining
        elif dt < cfg.min_step:
            raise StepSizeUnderflow(f"step {dt:.3e} below min_step at t={t}")
        y_new, err_vec, k_last = _rk_step(rhs, y, k1, dt)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale))
        if err <= 1.0:
            if guard is not None and np.any(guard.distance(y_new) > guard_radius):
                return FlowResult(y, accepted, rejected, global_err, escaped=True)
            accepted += 1
            global_err += float(np.max(np.abs(err_vec)))
            t = t_end if dt == remaining else t + dt
            y, k1 = y_new, k_last
            if err == 0.0:
                factor = MAX_FACTOR
            else:
                factor = SAFETY * err ** (-ALPHA) * err_prev**BETA
                factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
            if last_rejected:
                factor = min(factor, 1.0)
            err_prev = max(err, 1e-4)
            last_rejected = False
        else:
            rejected += 1
            factor = max(MIN_FACTOR, SAFETY * err ** (-1 / ORDER))
            last_rejected = True
        dt *= factor
    return FlowResult(y, accepted, rejected, global_err)


def integrate_fixed(rhs, y0, t_end, n_steps):
    """Fixed-step propagation with the 5th-order member of the pair."""
    y = np.array(y0, copy=True)
    dt = t_end / n_steps
    k1 = _call(rhs, y)
    for _ in range(n_steps):
        y, _, k1 = _rk_step(rhs, y, k1, dt)
    return y


def flow(field, x0, t, cfg=None, guard=None):
    """``Phi^t_X(x0)`` for a field callable ``X``, guarded by the ``delta/3`` inflation of ``guard``."""
    x0 = np.asarray(x0)
    if guard is not None and np.any(guard.distance(x0) > 0):
        raise ValueError(f"initial point {x0} is outside the guard box")
    return integrate(field, x0, t, cfg, guard)


def flow_time_one(field, x0, cfg=None, guard=None):
    return flow(field, x0, 1.0, cfg, guard)


def flow_time_one_verified(field, x0, cfg=None, guard=None):
    """Time-one map checked against a run at 1/100 of the tolerances.

    The tighter result is returned with ``est_global_error`` replaced by
    the endpoint discrepancy between the two runs.
    """
    cfg = cfg or IntegratorConfig()
    loose = flow_time_one(field, x0, cfg, guard)
    if loose.escaped:
        return loose
    tight = flow_time_one(field, x0, cfg.tightened(100.0), guard)
    if tight.escaped:
        return tight
    discrepancy = float(np.max(np.abs(tight.endpoint - loose.endpoint)))
    if discrepancy > 100 * cfg.abs_tol:
        raise FlowNonConvergence(
            f"tolerance runs disagree by {discrepancy:.3e} at x0={x0}"
        )
    return dataclasses.replace(tight, est_global_error=discrepancy)
