"""Weighted FPCA via the square-root-weight transform.

The eigensystem of a process under an absolutely continuous measure with
density ``w`` is obtained by eigendecomposing the transformed process
``Z = sqrt(w) (X - mean)`` under the plain quadrature inner product and
back-transforming the eigenfunctions with ``1/sqrt(w)`` (set to zero where
``w`` vanishes).  Scores agree between the two integral forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeError
from .fpca import (
    Eigensystem,
    FunctionalDataset,
    FunctionalSample,
    MeanFunction,
    compute_scores,
    eigendecompose,
    estimate_covariance,
    estimate_mean,
)
from .numerics import (
    WeightSpec,
    WorkingGrid,
    evaluate_weight,
    validate_weight_domain,
)


@dataclass(frozen=True)
class RadonNikodymRatio:
    """Density of one measure with respect to another, tabulated on a grid."""

    grid: WorkingGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != self.grid.points.shape:
            raise ShapeError("ratio values must match the grid size")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ConfigurationError("ratio values must be finite and nonnegative")


def transform_to_z(
    data: FunctionalDataset, mean: MeanFunction, spec: WeightSpec
) -> FunctionalDataset:
    """Pointwise transform ``z_ij = sqrt(w(t_ij)) (x_ij - mean(t_ij))``.

    Observation times and responses are carried through unchanged.
    """
    validate_weight_domain(spec, data.domain)
    samples = []
    for sample in data.samples:
        w = np.atleast_1d(evaluate_weight(spec, sample.times, data.domain))
        if np.any(w < 0):
            raise ConfigurationError("weight evaluated negative; corrupt spec")
        z = np.sqrt(w) * (sample.values - mean.at(sample.times))
        samples.append(FunctionalSample(sample.subject_id, sample.times, z))
    return FunctionalDataset(tuple(samples), data.domain, data.responses)


def back_transform(phi_z: np.ndarray, w_on_grid: np.ndarray) -> np.ndarray:
    """Map eigenfunction rows through ``1/sqrt(w)`` with the zero convention."""
    with np.errstate(divide="ignore"):
        inv_root = np.where(w_on_grid > 0, 1.0 / np.sqrt(w_on_grid), 0.0)
    return phi_z * inv_root[None, :]


def wfpca_fit(
    data: FunctionalDataset,
    spec: WeightSpec,
    grid: WorkingGrid,
    m_max: int,
    mean_bandwidth: float | None = None,
    cov_bandwidth: float | None = None,
) -> Eigensystem:
    """Weighted FPCA pipeline.

    Estimates the mean of ``X``, transforms to ``Z``, eigendecomposes the
    covariance of ``Z`` (which is centered by construction), and stores both
    the ``Z``-side and back-transformed eigenfunction tables.
    """
    validate_weight_domain(spec, data.domain)
    mean = estimate_mean(data, grid, mean_bandwidth)
    z_data = transform_to_z(data, mean, spec)
    zero_mean = MeanFunction(grid, np.zeros(grid.size))
    cov_z = estimate_covariance(z_data, zero_mean, grid, cov_bandwidth)
    eig = eigendecompose(cov_z, m_max)
    w = np.atleast_1d(evaluate_weight(spec, grid.points, grid.domain))
    phi_w = back_transform(eig.phi_z, w)
    return Eigensystem(eig.eigenvalues, eig.phi_z, phi_w, mean, spec)


def wfpca_scores(
    data: FunctionalDataset,
    eig: Eigensystem,
    grid: WorkingGrid,
    form: str = "z",
) -> np.ndarray:
    """Scores under the eigensystem's measure (n x M).

    ``form="z"`` integrates the transformed residual against ``phi_z``
    (primary path); ``form="nu"`` integrates the raw residual against
    ``phi_w`` under the weighted measure.  The two agree on a common grid.
    """
    if form == "z":
        return compute_scores(data, eig, grid)
    if form != "nu":
        raise ConfigurationError(f"unknown score form {form!r}")
    w = np.atleast_1d(evaluate_weight(eig.weight, grid.points, grid.domain))
    proj = eig.phi_w * w * grid.quad_weights
    scores = np.empty((data.n, eig.n_components))
    for i, sample in enumerate(data.samples):
        r = sample.values - eig.mean.at(sample.times)
        r_grid = np.interp(grid.points, sample.times, r)
        scores[i] = proj @ r_grid
    return scores


def change_of_measure(
    eig: Eigensystem,
    ratio: RadonNikodymRatio,
    target_weight: WeightSpec | None = None,
) -> Eigensystem:
    """Move a fitted eigensystem to a new measure via a density ratio.

    The ``phi_z`` table (eigenfunctions of the transformed process under the
    base measure) is rescaled by ``1/sqrt(ratio)`` to give the system under
    the new measure; eigenvalues are unchanged.  With ``ratio == 1`` this is
    the identity.
    """
    if ratio.grid.size != eig.mean.grid.size or not np.array_equal(
        ratio.grid.points, eig.mean.grid.points
    ):
        raise ShapeError("ratio tabulated on a different grid than the eigensystem")
    phi_w = back_transform(eig.phi_z, ratio.values)
    weight = eig.weight if target_weight is None else target_weight
    return Eigensystem(eig.eigenvalues.copy(), eig.phi_z.copy(), phi_w, eig.mean, weight)
