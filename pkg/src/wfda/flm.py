"""Scalar-on-function linear regression over a weighted measure.

The coefficient function is expanded in the weighted eigensystem and
estimated by per-component moment ratios ``beta_k = sigma_kY / rho_k``,
with both moments on the same ``1/n`` normalization so the regression on
the estimated scores is exactly ordinary least squares.  Leave-one-out
cross-validation comes in two modes: ``fast`` keeps the eigensystem fixed
and re-estimates the score regression per fold (computed exactly through
the regression leverage identity), ``exact`` refits the full pipeline
without each sample.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    DomainError,
    InsufficientDataError,
    ParameterError,
    UndefinedScoreError,
)
from .fpca import Eigensystem, FunctionalDataset, MeanFunction, compute_scores
from .numerics import (
    Domain,
    WeightSpec,
    WorkingGrid,
    trapezoid_weights,
    weight_from_json,
    weight_to_json,
)
from .wfpca import wfpca_fit

TABLE_TOL = 1e-10


@dataclass(frozen=True)
class WflmModel:
    """Fitted weighted functional linear model.

    ``beta_w_values`` tabulates the coefficient function of the transformed
    process; ``beta_values`` the coefficient function of the original one.
    """

    mu_y: float
    eig: Eigensystem
    m: int
    sigma_ky: np.ndarray
    beta_k: np.ndarray
    beta_w_values: np.ndarray
    beta_values: np.ndarray

    def __post_init__(self) -> None:
        sigma = np.asarray(self.sigma_ky, dtype=float)
        beta = np.asarray(self.beta_k, dtype=float)
        object.__setattr__(self, "sigma_ky", sigma)
        object.__setattr__(self, "beta_k", beta)
        object.__setattr__(self, "beta_w_values", np.asarray(self.beta_w_values, dtype=float))
        object.__setattr__(self, "beta_values", np.asarray(self.beta_values, dtype=float))
        if not 0 <= self.m <= self.eig.n_components:
            raise ParameterError("truncation exceeds retained components")
        if sigma.shape != (self.m,) or beta.shape != (self.m,):
            raise ParameterError("component coefficient lengths must equal m")
        expected = sigma / self.eig.eigenvalues[: self.m] if self.m else beta
        if not np.array_equal(beta, expected):
            raise ConfigurationError("beta_k must equal sigma_ky / eigenvalues exactly")
        scale = max(1.0, float(np.max(np.abs(self.beta_w_values), initial=0.0)))
        if np.max(np.abs(self.beta_w_values - beta @ self.eig.phi_z[: self.m])) > TABLE_TOL * scale:
            raise ConfigurationError("beta_w table inconsistent with components")
        if np.max(np.abs(self.beta_values - beta @ self.eig.phi_w[: self.m])) > TABLE_TOL * scale:
            raise ConfigurationError("beta table inconsistent with components")

    @property
    def grid(self) -> WorkingGrid:
        return self.eig.mean.grid

    @property
    def domain(self) -> Domain:
        return self.eig.mean.grid.domain


def fit_wflm(
    data: FunctionalDataset,
    spec: WeightSpec,
    grid: WorkingGrid,
    m: int,
    mean_bandwidth: float | None = None,
    cov_bandwidth: float | None = None,
    eig: Eigensystem | None = None,
) -> WflmModel:
    """Fit the truncated score regression under the given weight.

    ``eig`` may pass in a precomputed eigensystem fitted on the same data,
    weight, and grid; otherwise the weighted FPCA pipeline runs here.  A
    truncation larger than the retained component count is reduced with a
    warning.
    """
    if data.responses is None:
        raise ConfigurationError("fit requires a dataset with responses")
    if m < 0:
        raise ParameterError(f"m must be nonnegative, got {m}")
    y = data.responses
    mu_y = float(np.mean(y))
    if eig is None:
        eig = wfpca_fit(data, spec, grid, max(m, 1), mean_bandwidth, cov_bandwidth)
    if m > eig.n_components:
        warnings.warn(
            f"requested {m} components but only {eig.n_components} retained; truncating",
            stacklevel=2,
        )
        m = eig.n_components
    scores = compute_scores(data, eig, grid)[:, :m]
    sigma_ky = scores.T @ (y - mu_y) / data.n
    beta_k = sigma_ky / eig.eigenvalues[:m]
    beta_w_values = beta_k @ eig.phi_z[:m]
    beta_values = beta_k @ eig.phi_w[:m]
    return WflmModel(mu_y, eig, m, sigma_ky, beta_k, beta_w_values, beta_values)


def predict(model: WflmModel, new_data: FunctionalDataset, grid: WorkingGrid) -> np.ndarray:
    """Predicted responses for new curves under the fitted model."""
    for sample in new_data.samples:
        if not np.all(model.domain.contains(sample.times)):
            raise DomainError(
                f"sample {sample.subject_id} has observation times outside the "
                "model's domain"
            )
    scores = compute_scores(new_data, model.eig, grid)[:, : model.m]
    return model.mu_y + scores @ model.beta_k


def _loo_predictions(scores: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact leave-one-out predictions of the intercept + scores regression.

    Uses the leverage identity for linear least squares, which reproduces
    the per-fold re-estimated moments without refitting.
    """
    n = len(y)
    design = np.column_stack([np.ones(n), scores])
    q, _ = np.linalg.qr(design)
    leverage = np.einsum("ij,ij->i", q, q)
    fitted = q @ (q.T @ y)
    denom = 1.0 - leverage
    if np.any(denom < 1e-10):
        raise InsufficientDataError(
            "leave-one-out undefined: a sample has leverage one (too few samples "
            "for the requested number of components)"
        )
    return y - (y - fitted) / denom


def cve(
    data: FunctionalDataset,
    spec: WeightSpec,
    grid: WorkingGrid,
    m: int,
    mode: str = "fast",
    eig: Eigensystem | None = None,
) -> float:
    """Leave-one-out cross-validation error of the fitted model.

    ``fast`` holds the eigensystem fixed at the full-data fit and
    re-estimates the score regression per fold; ``exact`` refits mean,
    covariance, eigensystem, and regression without each sample.
    """
    if data.responses is None:
        raise ConfigurationError("cve requires responses")
    n = data.n
    if n < 3:
        raise InsufficientDataError(f"cve needs at least 3 samples, got {n}")
    y = data.responses
    if mode == "fast":
        if eig is None:
            eig = wfpca_fit(data, spec, grid, max(m, 1))
        m_eff = min(m, eig.n_components)
        scores = compute_scores(data, eig, grid)[:, :m_eff]
        preds = _loo_predictions(scores, y)
        return float(np.mean((y - preds) ** 2))
    if mode != "exact":
        raise ConfigurationError(f"unknown cv mode {mode!r}")
    sq_err = 0.0
    for i in range(n):
        rest = data.drop(i)
        model = fit_wflm(rest, spec, grid, m)
        pred = predict(model, data.subset([i]), grid)[0]
        sq_err += (y[i] - pred) ** 2
    return float(sq_err / n)


def select_num_components(
    data: FunctionalDataset,
    spec: WeightSpec,
    grid: WorkingGrid,
    m_candidates,
    mode: str = "fast",
) -> tuple[int, list[tuple[int, float]]]:
    """Truncation level minimizing the LOO error; ties favor fewer components."""
    candidates = sorted(set(int(m) for m in m_candidates))
    if not candidates:
        raise ConfigurationError("need at least one candidate truncation")
    trace: list[tuple[int, float]] = []
    if mode == "fast":
        eig = wfpca_fit(data, spec, grid, max(max(candidates), 1))
        scores = compute_scores(data, eig, grid)
        for m in candidates:
            m_eff = min(m, eig.n_components)
            preds = _loo_predictions(scores[:, :m_eff], data.responses)
            trace.append((m, float(np.mean((data.responses - preds) ** 2))))
    else:
        for m in candidates:
            trace.append((m, cve(data, spec, grid, m, mode)))
    best_m, _ = min(trace, key=lambda item: (item[1], item[0]))
    return best_m, trace


def loocvs(
    data: FunctionalDataset,
    spec: WeightSpec,
    grid: WorkingGrid,
    m: int,
    mode: str = "fast",
    eig: Eigensystem | None = None,
) -> float:
    """LOO error normalized by the total sum of squares around the mean."""
    y = data.responses
    if y is None:
        raise ConfigurationError("loocvs requires responses")
    tss = float(np.sum((y - np.mean(y)) ** 2))
    if tss == 0.0:
        raise UndefinedScoreError("responses have zero variance; score undefined")
    return len(y) * cve(data, spec, grid, m, mode, eig=eig) / tss


def model_to_dict(model: WflmModel) -> dict:
    """JSON-ready encoding of a fitted model."""
    grid = model.grid
    domain = grid.domain
    return {
        "mu_y": model.mu_y,
        "m": model.m,
        "beta_k": model.beta_k.tolist(),
        "sigma_ky": model.sigma_ky.tolist(),
        "eigenvalues": model.eig.eigenvalues.tolist(),
        "grid_points": grid.points.tolist(),
        "domain": {"lower": domain.lower, "upper": domain.upper},
        "truncation": grid.truncation,
        "phi_z": model.eig.phi_z.tolist(),
        "phi_w": model.eig.phi_w.tolist(),
        "mean": model.eig.mean.values.tolist(),
        "weight": weight_to_json(model.eig.weight),
    }


def model_from_dict(payload: dict) -> WflmModel:
    """Rebuild a fitted model from its JSON encoding.

    Quadrature weights are regenerated from the stored grid points by the
    same trapezoid rule used at fit time, so round-tripped predictions are
    unchanged.
    """
    domain = Domain(payload["domain"]["lower"], payload["domain"]["upper"])
    points = np.asarray(payload["grid_points"], dtype=float)
    grid = WorkingGrid(points, trapezoid_weights(points), domain, payload.get("truncation"))
    mean = MeanFunction(grid, np.asarray(payload["mean"], dtype=float))
    eig = Eigensystem(
        np.asarray(payload["eigenvalues"], dtype=float),
        np.asarray(payload["phi_z"], dtype=float),
        np.asarray(payload["phi_w"], dtype=float),
        mean,
        weight_from_json(payload["weight"]),
    )
    m = int(payload["m"])
    sigma_ky = np.asarray(payload["sigma_ky"], dtype=float)
    beta_k = np.asarray(payload["beta_k"], dtype=float)
    return WflmModel(
        payload["mu_y"],
        eig,
        m,
        sigma_ky,
        beta_k,
        beta_k @ eig.phi_z[:m],
        beta_k @ eig.phi_w[:m],
    )
