"""Discrete averaging: finite differences along orbits and interpolating fields.

For a near-identity map ``f`` the order-``m`` interpolating vector field is

    X_m(x) = sum_{k=1}^m (-1)**(k-1) / k * Delta_k(x),

with ``Delta_0(x) = x`` and ``Delta_k(x) = Delta_{k-1}(f(x)) - Delta_{k-1}(x)``.
It is a weighted sum of the iterates ``f^0(x), ..., f^m(x)`` and its time-one
flow approximates ``f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np

from .maps import as_point, neighbourhood_samples, orbit

__all__ = [
    "SIX_E",
    "MAX_BINOMIAL_ORDER",
    "InterpField",
    "OrderPlan",
    "plan_order",
    "differences",
    "delta",
    "delta_binomial",
    "delta_from_first_differences",
    "field_eval",
    "field_norm_estimate",
    "difference_norm_estimate",
]

SIX_E = 6.0 * math.e
MAX_BINOMIAL_ORDER = 60


def differences(f, x, m):
    """All forward differences ``Delta_0(x), ..., Delta_m(x)``.

    One orbit of length ``m`` is computed and differenced in place with a
    triangular scheme: ``m`` map evaluations and ``m (m + 1) / 2``
    subtractions. Returns an array with leading axis ``m + 1``.
    """
    if m < 0:
        raise ValueError("difference order must be non-negative")
    work = orbit(f, x, m)
    out = np.empty_like(work)
    out[0] = work[0]
    for level in range(1, m + 1):
        # after this pass work[j] holds Delta_level(f^j(x)) for j <= m - level
        work[: m + 1 - level] = work[1 : m + 2 - level] - work[: m + 1 - level]
        out[level] = work[0]
    return out


def delta(f, x, k):
    """``Delta_k(x)`` via the recursive definition."""
    return differences(f, x, k)[k]


def delta_binomial(f, x, k):
    """``Delta_k(x) = sum_i C(k, i) (-1)**(k - i) f^i(x)``.

    Independent of :func:`delta` apart from sharing the orbit; coefficients
    are exact Python integers. The sum is formed with ``math.fsum`` per
    component so the only rounding is in the products.
    """
    if k > MAX_BINOMIAL_ORDER:
        raise ValueError(f"binomial form supports k <= {MAX_BINOMIAL_ORDER}")
    pts = orbit(f, x, k)
    terms = np.stack([(-1) ** (k - i) * float(comb(k, i)) * pts[i] for i in range(k + 1)])
    return _fsum_leading(terms)


def delta_from_first_differences(f, x, k):
    """``Delta_k(x_0) = sum_{j<k} (-1)**(k-j-1) C(k-1, j) Delta_1(x_j)`` with ``x_j = f^j(x_0)``."""
    if k == 0:
        return as_point(x, f.dimension).copy()
    if k - 1 > MAX_BINOMIAL_ORDER:
        raise ValueError(f"binomial form supports k <= {MAX_BINOMIAL_ORDER + 1}")
    pts = orbit(f, x, k)
    first = pts[1:] - pts[:-1]
    terms = np.stack(
        [(-1) ** (k - j - 1) * float(comb(k - 1, j)) * first[j] for j in range(k)]
    )
    return _fsum_leading(terms)


def _fsum_leading(terms):
    flat = terms.reshape(terms.shape[0], -1)
    if np.iscomplexobj(flat):
        re = [math.fsum(col) for col in flat.real.T]
        im = [math.fsum(col) for col in flat.imag.T]
        out = np.array(re) + 1j * np.array(im)
    else:
        out = np.array([math.fsum(col) for col in flat.T])
    return out.reshape(terms.shape[1:])


def _compensated_sum(terms):
    # Neumaier summation along the leading axis, elementwise
    total = np.zeros_like(terms[0])
    comp = np.zeros_like(terms[0])
    for t in terms:
        s = total + t
        big = np.abs(total) >= np.abs(t)
        comp = comp + np.where(big, (total - s) + t, (t - s) + total)
        total = s
    return total + comp


def field_eval(f, x, m):
    """Interpolating vector field ``X_m(x)`` of order ``m >= 1``.

    Terms are accumulated in ascending ``k`` with compensated summation.
    """
    if m < 1:
        raise ValueError("field order must be >= 1")
    d = differences(f, x, m)
    weights = [(-1) ** (k - 1) / k for k in range(1, m + 1)]
    terms = np.stack([w * d[k] for k, w in zip(range(1, m + 1), weights)])
    if m == 1:
        return terms[0]
    return _compensated_sum(terms)


@dataclass(frozen=True)
class InterpField:
    """Order-``m`` interpolating field of ``map`` (which may be a ``MuFamily``)."""

    map: object
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("field order must be >= 1")

    @property
    def dimension(self):
        return self.map.dimension

    def __call__(self, x):
        return field_eval(self.map, x, self.m)


@dataclass(frozen=True)
class OrderPlan:
    epsilon: float
    delta: float
    ratio: float
    M_eps: float
    m_star: int
    admissible: bool


def plan_order(epsilon, delta):
    """Interpolation order plan for displacement ``epsilon`` on a ``delta``-neighbourhood.

    ``M_eps = delta / (6 e epsilon)``, the optimal order is
    ``floor(M_eps) + 1`` and the pair is admissible when
    ``epsilon / delta <= 1 / (6 e)``, i.e. ``M_eps >= 1``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not delta > 0:
        raise ValueError("delta must be positive")
    M = delta / (SIX_E * epsilon)
    return OrderPlan(
        epsilon=float(epsilon),
        delta=float(delta),
        ratio=epsilon / delta,
        M_eps=M,
        m_star=math.floor(M) + 1,
        admissible=M >= 1.0,
    )


def field_norm_estimate(field, dom, grid):
    """Sampled ``max ||X_m||_inf`` over the complex ``delta/3``-neighbourhood of the box."""
    z = neighbourhood_samples(dom, grid, radius=dom.delta / 3)
    return float(np.max(np.abs(field(z))))


def difference_norm_estimate(f, k, dom, grid):
    """Sampled ``max ||Delta_k||_inf`` over the complex ``delta/3``-neighbourhood."""
    z = neighbourhood_samples(dom, grid, radius=dom.delta / 3)
    return float(np.max(np.abs(delta(f, z, k))))
