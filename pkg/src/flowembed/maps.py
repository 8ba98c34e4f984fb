"""Near-identity analytic map families.

Every map acts on arrays whose last axis holds the ``n`` coordinates, so a
single point has shape ``(n,)`` and a batch of points has shape ``(..., n)``.
Inputs may be real or complex; the formulas are the complex-analytic ones,
so evaluating at complex points gives the analytic continuation.

The families form a closed set:

* :class:`Identity`
* :class:`Translation`
* :class:`LinearScalar` (n = 1)
* :class:`EulerStep` (``x + h g(x)`` for a built-in field ``g``)
* :class:`StdSymplectic` (n = 2)
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

__all__ = [
    "MapEvaluationError",
    "Identity",
    "Translation",
    "LinearScalar",
    "EulerStep",
    "StdSymplectic",
    "MuFamily",
    "NearIdentityMap",
    "VECTOR_FIELDS",
    "Domain",
    "SampleGrid",
    "as_point",
    "evaluate",
    "iterate",
    "orbit",
    "real_grid",
    "complex_offsets",
    "neighbourhood_samples",
    "estimate_epsilon",
    "MAX_GRID_POINTS",
]

MAX_GRID_POINTS = 10_000


class MapEvaluationError(ArithmeticError):
    """A map produced non-finite output (or was handed a non-finite point)."""

    def __init__(self, message, point=None, iterate_index=None):
        super().__init__(message)
        self.point = point
        self.iterate_index = iterate_index


def _pendulum(x):
    q, p = x[..., 0], x[..., 1]
    return np.stack([p, -np.sin(q)], axis=-1)


def _cubic(x):
    q, p = x[..., 0], x[..., 1]
    return np.stack([p, -q**3], axis=-1)


VECTOR_FIELDS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "pendulum": _pendulum,
    "cubic": _cubic,
}


def _check_finite_param(name, value):
    arr = np.asarray(value)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"parameter {name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Identity:
    dimension: int = 1

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")

    def __call__(self, x):
        return np.array(x, copy=True)


@dataclass(frozen=True)
class Translation:
    """``x -> x + c``; ``c`` fixes the dimension."""

    c: tuple

    def __post_init__(self):
        c = tuple(np.atleast_1d(np.asarray(self.c)).tolist())
        if not c:
            raise ValueError("translation vector must be non-empty")
        _check_finite_param("c", c)
        object.__setattr__(self, "c", c)

    @property
    def dimension(self):
        return len(self.c)

    def __call__(self, x):
        return x + np.asarray(self.c)


@dataclass(frozen=True)
class LinearScalar:
    lam: complex

    dimension = 1

    def __post_init__(self):
        _check_finite_param("lam", self.lam)

    def __call__(self, x):
        return self.lam * x


@dataclass(frozen=True)
class EulerStep:
    """Explicit Euler step ``x + h g(x)`` of a built-in planar field.

    ``field`` names an entry of :data:`VECTOR_FIELDS`: ``"pendulum"`` is
    ``g(q, p) = (p, -sin q)`` and ``"cubic"`` is ``g(q, p) = (p, -q**3)``.
    """

    field: str
    h: float

    dimension = 2

    def __post_init__(self):
        if self.field not in VECTOR_FIELDS:
            raise ValueError(
                f"unknown vector field {self.field!r}; choose from {sorted(VECTOR_FIELDS)}"
            )
        _check_finite_param("h", self.h)

    def vector_field(self, x):
        return VECTOR_FIELDS[self.field](x)

    def __call__(self, x):
        return x + self.h * VECTOR_FIELDS[self.field](x)


@dataclass(frozen=True)
class StdSymplectic:
    """Standard-map style shear on ``(q, p)``.

    ``p' = p + eps_p sin(q)``, ``q' = q + eps_p p'``. Entire and symplectic.
    """

    eps_p: float

    dimension = 2

    def __post_init__(self):
        _check_finite_param("eps_p", self.eps_p)

    def __call__(self, x):
        q, p = x[..., 0], x[..., 1]
        p_new = p + self.eps_p * np.sin(q)
        q_new = q + self.eps_p * p_new
        return np.stack([q_new, p_new], axis=-1)


@dataclass(frozen=True)
class MuFamily:
    """The segment ``f_mu = (1 - mu) id + mu f`` joining the identity to ``f``.

    ``mu`` may be complex. ``f_mu(x) - x`` is computed as ``mu (f(x) - x)`` so
    the displacement is exactly linear in ``mu``.
    """

    base: "NearIdentityMap"
    mu: complex = 1.0

    def __post_init__(self):
        _check_finite_param("mu", self.mu)

    @property
    def dimension(self):
        return self.base.dimension

    def __call__(self, x):
        return x + self.mu * (self.base(x) - x)


NearIdentityMap = Union[Identity, Translation, LinearScalar, EulerStep, StdSymplectic, MuFamily]


def as_point(x, dimension=None):
    """Coerce ``x`` to a coordinate array with at least one axis."""
    arr = np.asarray(x)
    if arr.dtype.kind not in "fc":
        arr = arr.astype(float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if dimension is not None and arr.shape[-1] != dimension:
        raise ValueError(f"expected {dimension} coordinates, got shape {arr.shape}")
    return arr


def evaluate(f, x):
    """Evaluate ``f`` at ``x`` and refuse non-finite input or output."""
    x = as_point(x, f.dimension)
    if not np.all(np.isfinite(x)):
        raise MapEvaluationError(f"non-finite input point {x}", point=x)
    with np.errstate(over="ignore", invalid="ignore"):
        y = f(x)
    if not np.all(np.isfinite(y)):
        raise MapEvaluationError(f"map {f!r} overflowed at point {x}", point=x)
    return y


def orbit(f, x, k):
    """Return the stacked orbit ``[x, f(x), ..., f^k(x)]`` (leading axis k+1)."""
    if k < 0:
        raise ValueError("iterate count must be non-negative")
    x = as_point(x, f.dimension)
    points = [x]
    for i in range(1, k + 1):
        try:
            points.append(evaluate(f, points[-1]))
        except MapEvaluationError as exc:
            raise MapEvaluationError(
                f"iterate {i} failed: {exc}", point=exc.point, iterate_index=i
            ) from exc
    return np.stack(points)


def iterate(f, x, k):
    """``f^k(x)``; ``f^0`` is the identity."""
    return orbit(f, x, k)[-1]


@dataclass(frozen=True)
class Domain:
    """Real box ``[lower, upper]`` together with the neighbourhood radius ``delta``."""

    lower: tuple
    upper: tuple
    delta: float

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) != len(upper) or not lower:
            raise ValueError("lower and upper must be non-empty and of equal length")
        if not all(lo < hi for lo, hi in zip(lower, upper)):
            raise ValueError("need lower[i] < upper[i] for every axis")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def dimension(self):
        return len(self.lower)

    def distance(self, x):
        """Infinity-norm distance from ``x`` (real or complex) to the real box."""
        x = np.asarray(x)
        real = np.clip(x.real, self.lower, self.upper)
        return np.max(np.abs(x - real), axis=-1)


@dataclass(frozen=True)
class SampleGrid:
    """Discretisation of sup-norms.

    ``complex_ring_samples`` directions of modulus ``radius`` are used per
    coordinate; the coordinates are offset independently, giving
    ``complex_ring_samples ** n`` complex samples around each real point.
    """

    real_points_per_axis: int = 21
    complex_ring_samples: int = 8

    def __post_init__(self):
        if self.real_points_per_axis < 2:
            raise ValueError("real_points_per_axis must be >= 2")
        if self.complex_ring_samples < 0:
            raise ValueError("complex_ring_samples must be >= 0")


def real_grid(dom, points_per_axis):
    """Tensor grid of ``points_per_axis`` equispaced points per axis of the box."""
    total = points_per_axis**dom.dimension
    if total > MAX_GRID_POINTS:
        raise ValueError(f"grid of {total} points exceeds the cap of {MAX_GRID_POINTS}")
    # lo + (hi - lo) * (i / (N - 1)) keeps the coarse points bit-identical
    # inside any refinement with 2N - 1 points per axis
    t = np.arange(points_per_axis) / (points_per_axis - 1)
    axes = [lo + (hi - lo) * t for lo, hi in zip(dom.lower, dom.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def complex_offsets(dimension, ring_samples, radius):
    """Offsets ``radius * i * exp(i theta_j)`` chosen independently per coordinate.

    Returns shape ``(ring_samples ** dimension, dimension)``. With
    ``ring_samples`` divisible by 4 the set contains ``+-i radius`` and
    ``+-radius``.
    """
    if ring_samples == 0:
        return np.zeros((1, dimension), dtype=complex)
    theta = 2 * np.pi * np.arange(ring_samples) / ring_samples
    ring = radius * 1j * np.exp(1j * theta)
    return np.array(list(itertools.product(ring, repeat=dimension)))


def neighbourhood_samples(dom, grid, radius=None):
    """Complex sample points around the real grid of ``dom``.

    ``radius`` defaults to ``dom.delta``. Returns shape ``(N, n)`` complex.
    The sample set for a refined grid (``2k - 1`` points per axis, doubled
    ring count) contains the coarse one.
    """
    radius = dom.delta if radius is None else radius
    pts = real_grid(dom, grid.real_points_per_axis)
    offs = complex_offsets(dom.dimension, grid.complex_ring_samples, radius)
    return (pts[:, None, :] + offs[None, :, :]).reshape(-1, dom.dimension)


def estimate_epsilon(f, dom, grid):
    """Sampled ``max ||f(z) - z||_inf`` over the complex ``delta``-neighbourhood.

    This is a lower bound on the true supremum; callers certifying bounds
    should inflate it (see ``certify.DEFAULT_SAFETY_FACTOR``).
    """
    z = neighbourhood_samples(dom, grid)
    disp = evaluate(f, z) - z
    return float(np.max(np.abs(disp)))
