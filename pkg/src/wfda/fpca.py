"""Functional PCA from discretely observed curves.

Estimation follows the usual two-track design: dense-regular datasets
(every sample observed exactly on the working grid) use cross-sectional
moments, irregular ones use pooled local linear smoothing.  The covariance
operator is diagonalized through the quadrature-symmetrized matrix
``Q^{1/2} C Q^{1/2}`` so that eigenfunctions come out orthonormal in the
grid's quadrature inner product.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import smoothing
from .errors import (
    ConfigurationError,
    InsufficientDataError,
    ParameterError,
    ShapeError,
)
from .numerics import Domain, UniformWeight, WeightSpec, WorkingGrid, evaluate_weight

EIGENVALUE_FLOOR_REL = 1e-12
SIGN_TOL = 1e-10


@dataclass(frozen=True)
class FunctionalSample:
    """One subject's curve: increasing observation times and matching values."""

    subject_id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or values.ndim != 1 or len(times) != len(values):
            raise ShapeError(f"sample {self.subject_id}: times and values must match 1-d")
        if len(times) < 1:
            raise ShapeError(f"sample {self.subject_id}: needs at least one observation")
        if np.any(np.diff(times) <= 0):
            raise ConfigurationError(f"sample {self.subject_id}: times must be increasing")


@dataclass(frozen=True)
class FunctionalDataset:
    """Collection of curves with an optional scalar response per subject."""

    samples: tuple[FunctionalSample, ...]
    domain: Domain
    responses: np.ndarray | None = None

    def __post_init__(self) -> None:
        samples = tuple(self.samples)
        object.__setattr__(self, "samples", samples)
        ids = [s.subject_id for s in samples]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("subject ids must be unique")
        for s in samples:
            if not np.all(self.domain.contains(s.times)):
                raise ConfigurationError(
                    f"sample {s.subject_id} has observation times outside the domain"
                )
        if self.responses is not None:
            resp = np.asarray(self.responses, dtype=float)
            object.__setattr__(self, "responses", resp)
            if resp.shape != (len(samples),):
                raise ShapeError("need exactly one response per sample")

    @property
    def n(self) -> int:
        return len(self.samples)

    def drop(self, index: int) -> "FunctionalDataset":
        """Dataset without the given sample (responses sliced alongside)."""
        samples = self.samples[:index] + self.samples[index + 1 :]
        responses = None
        if self.responses is not None:
            responses = np.delete(self.responses, index)
        return FunctionalDataset(samples, self.domain, responses)

    def subset(self, indices) -> "FunctionalDataset":
        samples = tuple(self.samples[i] for i in indices)
        responses = self.responses[list(indices)] if self.responses is not None else None
        return FunctionalDataset(samples, self.domain, responses)


def dense_value_matrix(data: FunctionalDataset, grid: WorkingGrid) -> np.ndarray | None:
    """The n x G value matrix when every sample is observed on the grid, else None."""
    pts = grid.points
    for s in data.samples:
        if len(s.times) != len(pts) or not np.array_equal(s.times, pts):
            return None
    return np.vstack([s.values for s in data.samples])


@dataclass(frozen=True)
class MeanFunction:
    """Mean curve tabulated on a working grid."""

    grid: WorkingGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != self.grid.points.shape:
            raise ShapeError("mean values must match the grid size")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("mean values must be finite")

    def at(self, t: np.ndarray) -> np.ndarray:
        """Linear interpolation of the mean at arbitrary times."""
        return np.interp(t, self.grid.points, self.values)


@dataclass(frozen=True)
class CovarianceSurface:
    """Symmetric covariance matrix on the grid plus a measurement-noise variance."""

    grid: WorkingGrid
    matrix: np.ndarray
    noise_var: float = 0.0

    def __post_init__(self) -> None:
        mat = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", mat)
        g = self.grid.size
        if mat.shape != (g, g):
            raise ShapeError("covariance matrix must be G x G for the grid")
        if np.max(np.abs(mat - mat.T)) > 1e-10 * max(1.0, np.max(np.abs(mat))):
            raise ConfigurationError("covariance matrix is not symmetric within tolerance")
        if self.noise_var < 0:
            raise ConfigurationError("noise variance must be nonnegative")


@dataclass(frozen=True)
class Eigensystem:
    """Retained eigenvalues with paired eigenfunction tables.

    ``phi_z`` rows are orthonormal under the plain quadrature inner product;
    ``phi_w`` rows are the back-transformed functions ``phi_z / sqrt(w)``
    (zero where the weight vanishes), orthonormal under the weighted one.
    """

    eigenvalues: np.ndarray
    phi_z: np.ndarray
    phi_w: np.ndarray
    mean: MeanFunction
    weight: WeightSpec = field(default_factory=UniformWeight)

    def __post_init__(self) -> None:
        vals = np.asarray(self.eigenvalues, dtype=float)
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "phi_z", np.asarray(self.phi_z, dtype=float))
        object.__setattr__(self, "phi_w", np.asarray(self.phi_w, dtype=float))
        m = len(vals)
        g = self.mean.grid.size
        if self.phi_z.shape != (m, g) or self.phi_w.shape != (m, g):
            raise ShapeError("eigenfunction tables must be M x G")
        if np.any(vals <= 0):
            raise ConfigurationError("retained eigenvalues must be positive")
        if np.any(np.diff(vals) > 0):
            raise ConfigurationError("eigenvalues must be non-increasing")

    @property
    def n_components(self) -> int:
        return len(self.eigenvalues)


def estimate_mean(
    data: FunctionalDataset,
    grid: WorkingGrid,
    bandwidth: float | None = None,
) -> MeanFunction:
    """Mean curve on the grid.

    Dense-regular data: pointwise cross-sectional average.  Irregular data:
    local linear smoother of the pooled observations (Epanechnikov kernel,
    bandwidth by 5-fold CV unless supplied).
    """
    if data.n < 2:
        raise InsufficientDataError("mean estimation needs at least 2 samples")
    if bandwidth is not None and bandwidth <= 0:
        raise ParameterError(f"bandwidth must be positive, got {bandwidth}")
    dense = dense_value_matrix(data, grid)
    if dense is not None:
        return MeanFunction(grid, dense.mean(axis=0))
    pooled_t = np.concatenate([s.times for s in data.samples])
    pooled_y = np.concatenate([s.values for s in data.samples])
    if bandwidth is None:
        bandwidth = smoothing.select_bandwidth_1d(pooled_t, pooled_y)
    values = smoothing.local_linear_1d(grid.points, pooled_t, pooled_y, bandwidth)
    return MeanFunction(grid, values)


def _dense_noise_variance(residuals: np.ndarray) -> float:
    """Measurement-error variance from within-curve second differences.

    For equispaced dense designs, second differences of a smooth curve are
    O(h^2) while the noise contributes variance 6 sigma^2 per difference.
    """
    if residuals.shape[1] < 3:
        return 0.0
    d2 = residuals[:, :-2] - 2.0 * residuals[:, 1:-1] + residuals[:, 2:]
    return max(0.0, float(np.mean(d2**2) / 6.0))


def estimate_covariance(
    data: FunctionalDataset,
    mean: MeanFunction,
    grid: WorkingGrid,
    bandwidth: float | None = None,
) -> CovarianceSurface:
    """Covariance surface on the grid.

    Dense-regular data: sample second-moment matrix of the grid residuals
    (1/n normalization, matching the score-moment convention downstream).
    Irregular data: local plane smoother over off-diagonal raw covariances;
    the diagonal is excluded so measurement noise does not leak into the
    surface, and the noise variance is recovered from the diagonal gap.
    """
    if data.n < 2:
        raise InsufficientDataError("covariance estimation needs at least 2 samples")
    if bandwidth is not None and bandwidth <= 0:
        raise ParameterError(f"bandwidth must be positive, got {bandwidth}")
    dense = dense_value_matrix(data, grid)
    if dense is not None:
        residuals = dense - mean.values
        mat = residuals.T @ residuals / data.n
        mat = (mat + mat.T) / 2.0
        return CovarianceSurface(grid, mat, _dense_noise_variance(residuals))

    s_list, t_list, v_list = [], [], []
    diag_t, diag_v = [], []
    for sample in data.samples:
        r = sample.values - mean.at(sample.times)
        diag_t.append(sample.times)
        diag_v.append(r * r)
        if len(r) < 2:
            continue
        prod = np.outer(r, r)
        ti, tj = np.meshgrid(sample.times, sample.times, indexing="ij")
        off = ~np.eye(len(r), dtype=bool)
        s_list.append(ti[off])
        t_list.append(tj[off])
        v_list.append(prod[off])
    if not s_list:
        raise InsufficientDataError("no within-curve pairs available for covariance")
    s = np.concatenate(s_list)
    t = np.concatenate(t_list)
    v = np.concatenate(v_list)
    if bandwidth is None:
        bandwidth = smoothing.select_bandwidth_2d(s, t, v)
    mat = smoothing.local_plane_grid(grid.points, s, t, v, bandwidth)
    mat = (mat + mat.T) / 2.0

    # diagonal-vs-surface gap over the middle 50% of the domain
    pooled_t = np.concatenate(diag_t)
    pooled_v = np.concatenate(diag_v)
    diag_fit = smoothing.local_linear_1d(grid.points, pooled_t, pooled_v, bandwidth)
    lo, hi = np.quantile(grid.points, [0.25, 0.75])
    middle = (grid.points >= lo) & (grid.points <= hi)
    noise = max(0.0, float(np.mean(diag_fit[middle] - np.diag(mat)[middle])))
    return CovarianceSurface(grid, mat, noise)


def _apply_sign_convention(phi: np.ndarray, quad: np.ndarray) -> np.ndarray:
    """Flip rows so that each integrates to >= 0 (first nonzero value breaks ties)."""
    out = phi.copy()
    for k in range(out.shape[0]):
        total = float(out[k] @ quad)
        if total < -SIGN_TOL:
            out[k] = -out[k]
        elif abs(total) <= SIGN_TOL:
            scale = np.max(np.abs(out[k]))
            if scale > 0:
                nz = np.nonzero(np.abs(out[k]) > 1e-12 * scale)[0]
                if len(nz) and out[k, nz[0]] < 0:
                    out[k] = -out[k]
    return out


def eigendecompose(cov: CovarianceSurface, m_max: int) -> Eigensystem:
    """Discretized covariance-operator eigensystem.

    Solves the symmetric eigenproblem of ``Q^{1/2} C Q^{1/2}`` and maps
    eigenvectors back through ``Q^{-1/2}``; retains at most ``m_max``
    components whose eigenvalues exceed ``1e-12`` of the leading one.
    """
    grid = cov.grid
    g = grid.size
    if not 1 <= m_max <= g:
        raise ParameterError(f"m_max must be in [1, {g}], got {m_max}")
    quad = grid.quad_weights
    root = np.sqrt(quad)
    b = root[:, None] * cov.matrix * root[None, :]
    b = (b + b.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(b)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    floor = max(0.0, EIGENVALUE_FLOOR_REL * (eigvals[0] if len(eigvals) else 0.0))
    keep = np.nonzero(eigvals > floor)[0][:m_max]
    eigvals = eigvals[keep]
    with np.errstate(divide="ignore"):
        inv_root = np.where(root > 0, 1.0 / root, 0.0)
    phi = (eigvecs[:, keep] * inv_root[:, None]).T

    # renormalize in the quadrature inner product and fix signs
    for k in range(phi.shape[0]):
        norm = np.sqrt(float((phi[k] ** 2) @ quad))
        if norm > 0:
            phi[k] /= norm
    phi = _apply_sign_convention(phi, quad)
    mean = MeanFunction(grid, np.zeros(g))
    return Eigensystem(eigvals, phi, phi.copy(), mean, UniformWeight())


def fit_fpca(
    data: FunctionalDataset,
    grid: WorkingGrid,
    m_max: int,
    mean_bandwidth: float | None = None,
    cov_bandwidth: float | None = None,
) -> Eigensystem:
    """Classical FPCA pipeline: mean, covariance, eigendecomposition."""
    mean = estimate_mean(data, grid, mean_bandwidth)
    cov = estimate_covariance(data, mean, grid, cov_bandwidth)
    eig = eigendecompose(cov, m_max)
    return Eigensystem(eig.eigenvalues, eig.phi_z, eig.phi_w, mean, UniformWeight())


def _z_residual_on_grid(
    sample: FunctionalSample,
    eig: Eigensystem,
    grid: WorkingGrid,
    dense_row: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted residual curve interpolated onto the grid.

    Residuals are formed at the observation times, scaled by sqrt(w) there,
    then linearly interpolated with constant extrapolation beyond the
    sample's observed range.
    """
    if dense_row is not None:
        r = dense_row - eig.mean.values
        w = evaluate_weight(eig.weight, grid.points, grid.domain)
        return np.sqrt(w) * r
    if len(sample.times) < 2:
        warnings.warn(
            f"sample {sample.subject_id} has under 2 observations; "
            "using nearest-value extension for its score",
            stacklevel=3,
        )
    r = sample.values - eig.mean.at(sample.times)
    w = evaluate_weight(eig.weight, sample.times, grid.domain)
    z = np.sqrt(w) * r
    return np.interp(grid.points, sample.times, z)


def compute_scores(
    data: FunctionalDataset, eig: Eigensystem, grid: WorkingGrid
) -> np.ndarray:
    """Principal component scores (n x M) by quadrature against ``phi_z``.

    Scores are taken on the transformed residual ``sqrt(w) (X - mean)``, so
    for a non-uniform weight they are the weighted-measure scores.
    """
    if eig.mean.grid.size != grid.size or not np.array_equal(
        eig.mean.grid.points, grid.points
    ):
        raise ShapeError("eigensystem was fitted on a different grid")
    dense = dense_value_matrix(data, grid)
    proj = eig.phi_z * grid.quad_weights
    if dense is not None:
        w = evaluate_weight(eig.weight, grid.points, grid.domain)
        z = np.sqrt(w) * (dense - eig.mean.values)
        return z @ proj.T
    scores = np.empty((data.n, eig.n_components))
    for i, sample in enumerate(data.samples):
        z = _z_residual_on_grid(sample, eig, grid)
        scores[i] = proj @ z
    return scores
