"""Domains, working grids, weight densities, and weighted inner products.

All integrals in the library are realized as quadrature sums on a
:class:`WorkingGrid`.  Weighted inner products use a weight density
``w = dnu/dt`` evaluated pointwise on the grid; step weights follow a
left-closed/right-open cell convention with the final cell closed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DomainError, ParameterError, ShapeError

DEFAULT_GRID_SIZE = 101
DEFAULT_TRUNCATION_QUANTILE = 0.999


@dataclass(frozen=True)
class Domain:
    """Interval carrying the functional data: ``[lower, upper]`` or ``[lower, inf)``.

    ``upper=None`` denotes a right-unbounded domain.
    """

    lower: float
    upper: float | None = None

    def __post_init__(self) -> None:
        if self.upper is not None and not self.lower < self.upper:
            raise ConfigurationError(
                f"bounded domain requires lower < upper, got [{self.lower}, {self.upper}]"
            )

    @property
    def is_bounded(self) -> bool:
        return self.upper is not None

    @property
    def length(self) -> float:
        return self.upper - self.lower if self.is_bounded else np.inf

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.is_bounded:
            return (t >= self.lower) & (t <= self.upper)
        return t >= self.lower


@dataclass(frozen=True)
class UniformWeight:
    """Lebesgue weight ``w(t) = 1``; normalized exactly on unit-length domains."""


@dataclass(frozen=True)
class StepWeight:
    """Piecewise-constant weight on cells ``[breaks[l], breaks[l+1])``.

    Cells are left-closed/right-open; the final cell is closed on both ends.
    Levels may be unnormalized; :meth:`normalized` rescales to unit mass.
    """

    breaks: tuple[float, ...]
    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        breaks = tuple(float(b) for b in self.breaks)
        levels = tuple(float(c) for c in self.levels)
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "levels", levels)
        if len(breaks) < 2 or np.any(np.diff(breaks) <= 0):
            raise ConfigurationError("step breaks must be strictly increasing, length >= 2")
        if len(levels) != len(breaks) - 1:
            raise ConfigurationError(
                f"expected {len(breaks) - 1} levels for {len(breaks)} breaks, got {len(levels)}"
            )
        if any(c < 0 for c in levels):
            raise ConfigurationError("step levels must be nonnegative")

    def total_mass(self) -> float:
        widths = np.diff(self.breaks)
        return float(np.dot(widths, self.levels))

    def normalized(self) -> "StepWeight":
        mass = self.total_mass()
        if mass <= 0:
            raise ConfigurationError("cannot normalize a step weight with zero mass")
        return StepWeight(self.breaks, tuple(c / mass for c in self.levels))


@dataclass(frozen=True)
class ExponentialWeight:
    """Exponential density ``w(t) = rate * exp(-rate * (t - lower))`` on ``[lower, inf)``."""

    rate: float

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise ParameterError(f"exponential rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class HalfNormalWeight:
    """Half-normal density ``w(t) = sqrt(2/(pi*scale^2)) * exp(-(t-lower)^2/(2*scale^2))``."""

    scale: float

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ParameterError(f"half-normal scale must be positive, got {self.scale}")


WeightSpec = Union[UniformWeight, StepWeight, ExponentialWeight, HalfNormalWeight]


def validate_weight_domain(spec: WeightSpec, domain: Domain) -> None:
    """Raise ConfigurationError if the weight family is invalid on the domain."""
    if isinstance(spec, (UniformWeight, StepWeight)) and not domain.is_bounded:
        raise ConfigurationError(
            f"{type(spec).__name__} requires a bounded domain, got [{domain.lower}, inf)"
        )
    if isinstance(spec, (ExponentialWeight, HalfNormalWeight)) and domain.is_bounded:
        raise ConfigurationError(
            f"{type(spec).__name__} requires a right-unbounded domain"
        )


def evaluate_weight(spec: WeightSpec, t, domain: Domain):
    """Evaluate the weight density at time points ``t``.

    Returns a scalar for scalar input, otherwise an ndarray.  Raises
    DomainError for points outside the domain (for steps, outside the
    break range).
    """
    validate_weight_domain(spec, domain)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if not np.all(domain.contains(t_arr)):
        bad = t_arr[~domain.contains(t_arr)][0]
        raise DomainError(f"time point {bad} lies outside the domain")

    if isinstance(spec, UniformWeight):
        w = np.ones_like(t_arr)
    elif isinstance(spec, StepWeight):
        breaks = np.asarray(spec.breaks)
        if np.any(t_arr < breaks[0]) or np.any(t_arr > breaks[-1]):
            raise DomainError("time point outside the step weight's break range")
        idx = np.searchsorted(breaks, t_arr, side="right") - 1
        idx = np.minimum(idx, len(spec.levels) - 1)  # closed final cell
        w = np.asarray(spec.levels)[idx]
    elif isinstance(spec, ExponentialWeight):
        u = t_arr - domain.lower
        w = spec.rate * np.exp(-spec.rate * u)
    else:
        u = t_arr - domain.lower
        w = np.sqrt(2.0 / (np.pi * spec.scale**2)) * np.exp(-(u**2) / (2 * spec.scale**2))

    if np.isscalar(t) or np.ndim(t) == 0:
        return float(w[0])
    return w


def weight_quantile(spec: WeightSpec, q: float, domain: Domain) -> float:
    """Quantile of the weight density (unbounded families only)."""
    if isinstance(spec, ExponentialWeight):
        return domain.lower - np.log1p(-q) / spec.rate
    if isinstance(spec, HalfNormalWeight):
        return domain.lower + float(stats.halfnorm.ppf(q, scale=spec.scale))
    raise ConfigurationError(f"{type(spec).__name__} has no quantile function")


@dataclass(frozen=True)
class WorkingGrid:
    """Strictly increasing evaluation points with trapezoid quadrature weights."""

    points: np.ndarray
    quad_weights: np.ndarray
    domain: Domain
    truncation: float | None = field(default=None)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        qw = np.asarray(self.quad_weights, dtype=float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "quad_weights", qw)
        if pts.ndim != 1 or len(pts) < 2:
            raise ConfigurationError("grid needs at least 2 one-dimensional points")
        if np.any(np.diff(pts) <= 0):
            raise ConfigurationError("grid points must be strictly increasing")
        if qw.shape != pts.shape:
            raise ShapeError("quad_weights must match points in length")
        if np.any(qw < 0):
            raise ConfigurationError("quadrature weights must be nonnegative")

    @property
    def size(self) -> int:
        return len(self.points)


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Composite trapezoid quadrature weights for sorted points."""
    points = np.asarray(points, dtype=float)
    if np.any(np.diff(points) <= 0):
        raise ConfigurationError("points must be strictly increasing")
    w = np.empty_like(points)
    w[0] = (points[1] - points[0]) / 2.0
    w[-1] = (points[-1] - points[-2]) / 2.0
    w[1:-1] = (points[2:] - points[:-2]) / 2.0
    return w


def build_grid(
    domain: Domain,
    size: int = DEFAULT_GRID_SIZE,
    spec: WeightSpec = UniformWeight(),
    truncation_quantile: float = DEFAULT_TRUNCATION_QUANTILE,
) -> WorkingGrid:
    """Equispaced working grid on the domain (truncated for unbounded ones).

    Right-unbounded domains are cut at the ``truncation_quantile`` of the
    weight density; the cut point is recorded on the grid.
    """
    if size < 2:
        raise ParameterError(f"grid size must be >= 2, got {size}")
    validate_weight_domain(spec, domain)
    if domain.is_bounded:
        pts = np.linspace(domain.lower, domain.upper, size)
        truncation = None
    else:
        upper = weight_quantile(spec, truncation_quantile, domain)
        pts = np.linspace(domain.lower, upper, size)
        truncation = float(upper)
    return WorkingGrid(pts, trapezoid_weights(pts), domain, truncation)


def integrate(f_values: np.ndarray, grid: WorkingGrid) -> float:
    """Quadrature of grid-sampled values: ``sum_g f(t_g) q_g``."""
    f_values = np.asarray(f_values, dtype=float)
    if f_values.shape != grid.points.shape:
        raise ShapeError(
            f"values length {f_values.shape} does not match grid size {grid.points.shape}"
        )
    return float(np.dot(f_values, grid.quad_weights))


def integrate_weight(spec: WeightSpec, grid: WorkingGrid) -> float:
    """Total mass of the weight over the grid's span.

    Uniform and step weights are integrated in closed form (exact); smooth
    densities by quadrature of their grid values.
    """
    if isinstance(spec, UniformWeight):
        return float(grid.points[-1] - grid.points[0])
    if isinstance(spec, StepWeight):
        return spec.total_mass()
    return integrate(evaluate_weight(spec, grid.points, grid.domain), grid)


def inner_product_nu(
    f_values: np.ndarray,
    g_values: np.ndarray,
    spec: WeightSpec,
    grid: WorkingGrid,
) -> float:
    """Weighted inner product ``int f g w dt`` by quadrature."""
    f_values = np.asarray(f_values, dtype=float)
    g_values = np.asarray(g_values, dtype=float)
    if f_values.shape != grid.points.shape or g_values.shape != grid.points.shape:
        raise ShapeError("inner product arguments must match the grid size")
    w = evaluate_weight(spec, grid.points, grid.domain)
    return float(np.sum(f_values * g_values * w * grid.quad_weights))


def weight_to_json(spec: WeightSpec) -> dict:
    """JSON-safe encoding of a weight spec."""
    if isinstance(spec, UniformWeight):
        return {"type": "uniform"}
    if isinstance(spec, StepWeight):
        return {"type": "step", "breaks": list(spec.breaks), "levels": list(spec.levels)}
    if isinstance(spec, ExponentialWeight):
        return {"type": "exponential", "rate": spec.rate}
    if isinstance(spec, HalfNormalWeight):
        return {"type": "halfnormal", "scale": spec.scale}
    raise ConfigurationError(f"unknown weight spec {spec!r}")


def weight_from_json(data: dict) -> WeightSpec:
    """Decode a weight spec from its JSON encoding."""
    kind = data.get("type")
    if kind == "uniform":
        return UniformWeight()
    if kind == "step":
        return StepWeight(tuple(data["breaks"]), tuple(data["levels"]))
    if kind == "exponential":
        return ExponentialWeight(float(data["rate"]))
    if kind == "halfnormal":
        return HalfNormalWeight(float(data["scale"]))
    raise ConfigurationError(f"unknown weight type {kind!r}")
