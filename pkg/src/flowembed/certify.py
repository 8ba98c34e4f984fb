"""Measured embedding errors and the bounds they are checked against.

The sup norms are sampled maxima, so ``measured_error`` is a lower bound on
the true supremum over the box: ``measured <= bound`` is a necessary check,
not a proof. The displacement size ``eps`` is a sampled lower bound as
well, which is why it is inflated by ``safety_factor`` before any bound is
evaluated.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import bisect

from .averaging import SIX_E, InterpField, field_eval, plan_order
from .flow import FlowError, IntegratorConfig, flow_time_one_verified
from .maps import MuFamily, as_point, estimate_epsilon, evaluate, real_grid

__all__ = [
    "DEFAULT_SAFETY_FACTOR",
    "CERTIFIABLE_FLOOR",
    "DegenerateError",
    "TrajectoryEscape",
    "UnstableDerivativeError",
    "BoundHypothesisWarning",
    "ErrorReport",
    "OrderEstimate",
    "LieCheck",
    "SlopeFit",
    "ExponentialBound",
    "theoretical_bound",
    "exponential_bound",
    "epsilon_for_exponential_bound",
    "hypothesis_holds",
    "epsilon_used",
    "embedding_error",
    "measure_error",
    "order_sweep",
    "best_order",
    "mu_radius",
    "sample_points",
    "mu_order_check",
    "lie_coefficient",
    "default_mu_grid",
    "lie_vs_field_taylor",
    "epsilon_slope_check",
]

DEFAULT_SAFETY_FACTOR = 1.25
# smallest exponential bound we treat as measurable in double precision
CERTIFIABLE_FLOOR = 1e-13
_ROUNDOFF = np.finfo(float).eps


class DegenerateError(ValueError):
    """The map is the identity on the sample set (eps = 0)."""


class TrajectoryEscape(FlowError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class UnstableDerivativeError(ArithmeticError):
    pass


class BoundHypothesisWarning(UserWarning):
    """Bounds are being evaluated outside the range where they are proved."""


def _threads():
    try:
        return max(1, int(os.environ.get("FLOWEMBED_THREADS", "1")))
    except ValueError:
        return 1


def _map_points(fn, points):
    n = _threads()
    if n == 1 or len(points) < 2:
        return [fn(p) for p in points]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, points))


def theoretical_bound(epsilon, delta, m):
    """Embedding error bound: ``2 eps**2 / delta`` for m = 1, ``3 eps (6 (m-1) eps / delta)**m`` otherwise."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return 2.0 * epsilon**2 / delta
    return 3.0 * epsilon * (6.0 * (m - 1) * epsilon / delta) ** m


class ExponentialBound(NamedTuple):
    value: float
    below_floor: bool


def exponential_bound(epsilon, delta):
    """``3 eps exp(-delta / (6 e eps))``, flagged when below :data:`CERTIFIABLE_FLOOR`."""
    value = 3.0 * epsilon * math.exp(-delta / (SIX_E * epsilon))
    return ExponentialBound(value, value < CERTIFIABLE_FLOOR)


def epsilon_for_exponential_bound(delta, target):
    """Solve ``exponential_bound(eps, delta) = target`` for eps by bisection.

    The bound is increasing in eps, so the root is unique; the search is
    restricted to the admissible range ``eps <= delta / (6 e)``.
    """
    hi = delta / SIX_E
    lo = hi / 1e3

    def log_gap(e):
        return math.log(3.0 * e) - delta / (SIX_E * e) - math.log(target)

    if log_gap(hi) < 0:
        raise ValueError("target exceeds the bound at the admissibility edge")
    return bisect(log_gap, lo, hi, xtol=1e-16 * hi, maxiter=200)


def hypothesis_holds(epsilon, delta, m):
    """Whether the bound for order ``m`` is covered by the theorem's hypotheses."""
    if epsilon == 0:
        return True
    if m == 1:
        return epsilon < delta
    plan = plan_order(epsilon, delta)
    return plan.admissible and m <= plan.m_star


@dataclass
class ErrorReport:
    m: int
    measured_error: float
    bound_poly: float
    bound_exp: Optional[float]
    epsilon_used: float
    delta: float
    n_samples: int
    integrator_discrepancy: float
    failure: str = ""

    @property
    def tolerance_limited(self):
        return self.integrator_discrepancy > self.measured_error / 100

    @property
    def hypothesis_ok(self):
        return hypothesis_holds(self.epsilon_used, self.delta, self.m)

    @property
    def satisfied(self):
        if self.failure or self.tolerance_limited or not self.hypothesis_ok:
            return False
        ok = self.measured_error <= self.bound_poly
        if self.bound_exp is not None:
            ok = ok and self.measured_error <= self.bound_exp
        return ok


def epsilon_used(f, dom, grid, safety_factor=DEFAULT_SAFETY_FACTOR, epsilon=None):
    """``epsilon`` if given, else ``safety_factor`` times the sampled estimate."""
    if epsilon is not None:
        if epsilon < 0:
            raise ValueError("epsilon override must be non-negative")
        return float(epsilon)
    return safety_factor * estimate_epsilon(f, dom, grid)


def embedding_error(f, m, x, cfg=None, guard=None):
    """``(||Phi^1_{X_m}(x) - f(x)||_inf, integrator discrepancy)`` at one point."""
    x = as_point(x, f.dimension)
    fx = evaluate(f, x)
    res = flow_time_one_verified(InterpField(f, m), x, cfg, guard)
    if res.escaped:
        raise TrajectoryEscape(f"trajectory from {x} left the delta/3 neighbourhood", point=x)
    return float(np.max(np.abs(res.endpoint - fx))), res.est_global_error


def measure_error(
    f, m, dom, grid, integ_cfg=None, safety_factor=DEFAULT_SAFETY_FACTOR, epsilon=None
):
    """Sampled ``||Phi^1_{X_m} - f||`` over the real grid of ``dom``.

    ``epsilon`` overrides the (inflated) sampled displacement size.
    Outside the theorem's range of orders a :class:`BoundHypothesisWarning`
    is issued and the report can never be ``satisfied``.
    """
    cfg = integ_cfg or IntegratorConfig()
    eps = epsilon_used(f, dom, grid, safety_factor, epsilon)
    points = real_grid(dom, grid.real_points_per_axis)
    if eps == 0:
        # identity on the samples: X_m = 0 and the embedding is exact
        return ErrorReport(m, 0.0, 0.0, None, 0.0, dom.delta, len(points), 0.0)
    if not hypothesis_holds(eps, dom.delta, m):
        warnings.warn(
            f"order m={m} is outside the proved range for eps={eps:.4g}, delta={dom.delta:.4g}",
            BoundHypothesisWarning,
            stacklevel=2,
        )
    results = _map_points(lambda x: embedding_error(f, m, x, cfg, dom), list(points))
    errors, discrepancies = zip(*results)
    bound_exp = None
    if m >= 2 and hypothesis_holds(eps, dom.delta, m) and m == plan_order(eps, dom.delta).m_star:
        bound_exp = exponential_bound(eps, dom.delta).value
    return ErrorReport(
        m=m,
        measured_error=max(errors),
        bound_poly=theoretical_bound(eps, dom.delta, m),
        bound_exp=bound_exp,
        epsilon_used=eps,
        delta=dom.delta,
        n_samples=len(points),
        integrator_discrepancy=max(discrepancies),
    )


def order_sweep(
    f, dom, grid, m_max, integ_cfg=None, safety_factor=DEFAULT_SAFETY_FACTOR, epsilon=None
):
    """Reports for ``m = 1 .. min(m_max, m_star)``; a failing order does not stop the sweep."""
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    eps = epsilon_used(f, dom, grid, safety_factor, epsilon)
    top = m_max if eps == 0 else min(m_max, plan_order(eps, dom.delta).m_star)
    n_samples = grid.real_points_per_axis**dom.dimension
    reports = []
    for m in range(1, top + 1):
        try:
            reports.append(measure_error(f, m, dom, grid, integ_cfg, epsilon=eps))
        except (FlowError, ArithmeticError) as exc:
            reports.append(
                ErrorReport(
                    m, math.inf, theoretical_bound(eps, dom.delta, m), None,
                    eps, dom.delta, n_samples, math.inf, failure=str(exc),
                )
            )
    return reports


def best_order(reports):
    """Order with the smallest measured error among reports that did not fail."""
    ok = [r for r in reports if not r.failure]
    return min(ok, key=lambda r: (r.measured_error, r.m)).m if ok else None


@dataclass
class OrderEstimate:
    m: int
    mu_values: tuple
    errors: tuple
    observed_order: float
    inconclusive: bool
    integrator_discrepancy: float = 0.0


def mu_radius(epsilon, delta, m):
    """Radius of the mu-disk used in the proof: ``delta/eps`` for m = 1, ``2 delta / (3 eps (m-1))`` otherwise."""
    if epsilon == 0:
        return math.inf
    if m == 1:
        return delta / epsilon
    return 2.0 * delta / (3.0 * epsilon * (m - 1))


def sample_points(dom, count):
    """``count`` deterministic points of the box, evenly picked from a tensor grid."""
    if count < 1:
        raise ValueError("sample count must be >= 1")
    per_axis = max(2, math.ceil(count ** (1 / dom.dimension)))
    pts = real_grid(dom, per_axis)
    idx = np.unique(np.round(np.linspace(0, len(pts) - 1, count)).astype(int))
    return pts[idx]


def mu_order_check(
    f, m, dom, sample_count=9, mu0=None, integ_cfg=None,
    grid=None, safety_factor=DEFAULT_SAFETY_FACTOR, epsilon=None,
):
    """Observed order of ``Phi^1_{X_{m,mu}} - f_mu`` in ``mu`` from ``mu0, mu0/2, mu0/4``.

    The expected order is ``m + 1``. The result is inconclusive when some
    error is within a factor 100 of the integrator discrepancy or of the
    double-precision floor of the measurement.
    """
    cfg = integ_cfg or IntegratorConfig()
    grid = grid or _default_grid()
    eps = epsilon_used(f, dom, grid, safety_factor, epsilon)
    limit = mu_radius(eps, dom.delta, m) / 8
    if mu0 is None:
        mu0 = min(1.0, limit)
    if not 0 < mu0 <= limit:
        raise ValueError(f"mu0={mu0} must lie in (0, {limit:.4g}]")
    points = sample_points(dom, sample_count)
    mus = (mu0, mu0 / 2, mu0 / 4)
    errors, disc = [], 0.0
    for mu in mus:
        fam = MuFamily(f, mu)
        results = _map_points(lambda x: embedding_error(fam, m, x, cfg, dom), list(points))
        errors.append(max(r[0] for r in results))
        disc = max(disc, max(r[1] for r in results))
    floor = 100 * max(disc, _ROUNDOFF * float(np.max(np.abs(points))))
    inconclusive = any(e <= floor for e in errors)
    order = math.nan if inconclusive else math.log2(errors[1] / errors[2])
    return OrderEstimate(m, mus, tuple(errors), order, inconclusive, disc)


def _default_grid():
    from .maps import SampleGrid

    return SampleGrid()


def _compositions(total, parts):
    for cuts in combinations(range(1, total), parts - 1):
        bounds = (0,) + cuts + (total,)
        yield tuple(bounds[i + 1] - bounds[i] for i in range(parts))


def _directional(v, g, step):
    # (v . grad) g by a central difference along the unit direction of v
    def derivative(y):
        vv = v(y)
        norm = float(np.linalg.norm(vv))
        if norm == 0.0:
            return np.zeros_like(g(y))
        u = vv / norm
        return (g(y + step * u) - g(y - step * u)) * norm / (2 * step)

    return derivative


def _lie_fields(f, kmax, step):
    a = {1: lambda y: evaluate(f, y) - y}
    for k in range(2, kmax + 1):

        def ak(y, k=k):
            total = 0.0
            for j in range(2, k + 1):
                for comp in _compositions(k, j):
                    # L_{a_i1} ... L_{a_ij} id = L_{a_i1} ... L_{a_i(j-1)} a_ij
                    g = a[comp[-1]]
                    for i in reversed(comp[:-1]):
                        g = _directional(a[i], g, step)
                    total = total + g(y) / math.factorial(j)
            return -total

        a[k] = ak
    return a


def lie_coefficient(f, k, x, fd_step=1e-5):
    """Coefficient ``a_k`` of the auxiliary field ``Y = sum mu**k a_k`` at ``x``.

    ``a_1 = f - id`` and ``a_k = -sum_{j>=2} 1/j! sum_{i_1+..+i_j=k}
    L_{a_i1} .. L_{a_ij} id`` with ``L_a g = (a . grad) g``. Directional
    derivatives are nested central differences; the result is recomputed
    with ``2 * fd_step`` and rejected if it moves by more than 10%.
    """
    if k not in (1, 2, 3):
        raise ValueError("lie_coefficient supports k in {1, 2, 3}")
    if not fd_step > 0:
        raise ValueError("fd_step must be positive")
    x = as_point(x, f.dimension).astype(float)
    value = _lie_fields(f, k, fd_step)[k](x)
    if k == 1:
        return value
    check = _lie_fields(f, k, 2 * fd_step)[k](x)
    change = float(np.max(np.abs(value - check)))
    size = max(float(np.max(np.abs(value))), float(np.max(np.abs(check))))
    # a_k is of size ||a_1||**k; changes far below that are treated as zero
    a1 = float(np.max(np.abs(evaluate(f, x) - x)))
    if change > 0.1 * size and change > 1e-3 * a1**k:
        raise UnstableDerivativeError(
            f"a_{k} changed by {change:.3e} (size {size:.3e}) when fd_step was doubled"
        )
    return value


@dataclass
class LieCheck:
    k: int
    x: np.ndarray
    a_k_numeric: np.ndarray
    a_k_from_field: np.ndarray
    rel_discrepancy: float
    inconclusive: bool = False


def default_mu_grid(m, epsilon, delta, count=None, cap=0.2):
    """``count`` (default ``4m + 1``) equispaced mu values in ``(0, min(cap, mu_m / 8)]``."""
    count = count or 4 * m + 1
    top = min(cap, mu_radius(epsilon, delta, m) / 8)
    return tuple(top * np.arange(1, count + 1) / count)


def lie_vs_field_taylor(f, m, x, mu_grid, fd_step=1e-5, max_condition=1e10):
    """Compare the mu-Taylor coefficients of ``X_{m,mu}(x)`` with ``a_k(x)``, ``k = 2..m``.

    The coefficients are a least-squares fit of a degree-``m`` polynomial
    in mu to ``X_{m,mu}(x)`` sampled on ``mu_grid``.
    """
    if m not in (2, 3):
        raise ValueError("lie_vs_field_taylor supports m in {2, 3}")
    mus = np.asarray(mu_grid, dtype=float)
    if len(np.unique(mus)) != len(mus) or len(mus) < 2 * m + 1:
        raise ValueError(f"need at least {2 * m + 1} distinct mu values")
    if np.any(mus <= 0):
        raise ValueError("mu values must be positive")
    x = as_point(x, f.dimension).astype(float)
    samples = np.stack([field_eval(MuFamily(f, mu), x, m) for mu in mus])
    vander = np.vander(mus, m + 1, increasing=True)
    inconclusive = bool(np.linalg.cond(vander) > max_condition)
    coef, *_ = np.linalg.lstsq(vander, samples, rcond=None)
    checks = []
    for k in range(2, m + 1):
        numeric = lie_coefficient(f, k, x, fd_step)
        diff = float(np.max(np.abs(coef[k] - numeric)))
        size = float(np.max(np.abs(numeric)))
        rel = diff / size if size > 1e-12 else diff
        checks.append(LieCheck(k, x, numeric, coef[k], rel, inconclusive))
    return checks


@dataclass
class SlopeFit:
    m: int
    h_values: tuple
    epsilons: tuple
    errors: tuple
    slope: float
    reports: list = field(default_factory=list, repr=False)


def epsilon_slope_check(
    family, m, dom, grid, h_values, integ_cfg=None, safety_factor=DEFAULT_SAFETY_FACTOR
):
    """Log-log slope of the embedding error against the sampled eps over a step-size family.

    ``family`` maps a step size ``h`` to a map, e.g.
    ``lambda h: EulerStep("pendulum", h)``. For a smooth family through the
    identity the slope should be ``m + 1``.
    """
    h_values = tuple(float(h) for h in h_values)
    if len(h_values) < 3:
        raise ValueError("need at least 3 step sizes")
    ratios = np.array(h_values[1:]) / np.array(h_values[:-1])
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("step sizes must form a geometric progression")
    epsilons, errors, reports = [], [], []
    for h in h_values:
        f = family(h)
        eps = estimate_epsilon(f, dom, grid)
        if eps == 0:
            raise DegenerateError(f"family member at h={h} is the identity on the samples")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundHypothesisWarning)
            rep = measure_error(f, m, dom, grid, integ_cfg, epsilon=safety_factor * eps)
        if rep.tolerance_limited:
            raise ValueError(f"measurement at h={h} is tolerance limited; slope fit invalid")
        epsilons.append(eps)
        errors.append(rep.measured_error)
        reports.append(rep)
    slope = float(np.polyfit(np.log(epsilons), np.log(errors), 1)[0])
    return SlopeFit(m, h_values, tuple(epsilons), tuple(errors), slope, reports)
