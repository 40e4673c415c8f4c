"""Seeded simulation designs and the Monte Carlo evaluation harness.

Three data-generating designs: two dense equispaced designs on [0, 1]
driven by a ten-component trigonometric expansion, and one irregular
design on [0, inf) driven by the exponentially weighted polynomial basis.
Each run of the harness draws a fresh dataset from a child seed, fits the
requested methods, and records the mean squared prediction error on a
noise-free test set.

Reproducibility: child seeds come from a splitmix64 mix of the master seed
and the run index, and all normal variates are produced by inverse-CDF
transform of 53-bit uniforms, so identical configurations give bit-identical
datasets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import flm, measure_select
from .errors import ConfigurationError
from .fpca import FunctionalDataset, FunctionalSample
from .laguerre import LaguerreBasis, basis_matrix
from .numerics import (
    Domain,
    ExponentialWeight,
    HalfNormalWeight,
    StepWeight,
    UniformWeight,
    WeightSpec,
    WorkingGrid,
    build_grid,
    trapezoid_weights,
)

UNIT = Domain(0.0, 1.0)
HALFLINE = Domain(0.0)

# Verbatim generating weight of the second bounded design: zero on the first
# quarter, increasing steps after; mass 1/4 (intentionally unnormalized).
SCENARIO2_WEIGHT = StepWeight((0.0, 0.25, 0.5, 0.75, 1.0), (0.0, 1 / 6, 1 / 3, 1 / 2))

_FINE_GRID_SIZE = 1001
_MASK64 = (1 << 64) - 1
_GOLDEN64 = 0x9E3779B97F4A7C15


def _splitmix64(z: int) -> int:
    """splitmix64 finalizer; the documented child-seed mixing function."""
    z = (z + _GOLDEN64) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def child_seed(master: int, index: int) -> int:
    """Deterministic 64-bit seed for run ``index`` of a master seed."""
    return _splitmix64((master & _MASK64) ^ _splitmix64(index))


def _uniforms(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniforms strictly inside (0, 1) from 53-bit integers."""
    return (rng.integers(0, 1 << 53, size=shape).astype(float) + 0.5) / float(1 << 53)


def standard_normals(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normals by inverse-CDF transform of the uniform stream."""
    return ndtri(_uniforms(rng, shape))


def exponential_times(rng: np.random.Generator, rate: float, shape) -> np.ndarray:
    """Exponential variates by inverse CDF: ``-log(1 - u) / rate``."""
    return -np.log1p(-_uniforms(rng, shape)) / rate


@dataclass(frozen=True)
class SimConfig:
    """One simulation setting.

    ``n_obs=None`` draws each curve's measurement count uniformly from
    {5, ..., 10} (unbounded design only).  Test responses are always
    noise-free; ``noise_sd`` is the measurement noise on curves and
    ``response_noise_sd`` the noise on training responses.
    """

    scenario: str
    n: int
    n_obs: int | None
    noise_sd: float = 0.5
    response_noise_sd: float = 0.5
    seed: int = 0
    runs: int = 1
    test_size: int = 100
    grid_size: int = 101

    def __post_init__(self) -> None:
        if self.scenario not in ("s1", "s2", "unbounded"):
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")
        if self.n < 3 or self.runs < 1 or self.test_size < 1 or self.grid_size < 2:
            raise ConfigurationError("n, runs, test_size, grid_size out of range")
        if self.noise_sd < 0 or self.response_noise_sd < 0:
            raise ConfigurationError("noise levels must be nonnegative")
        if self.n_obs is None and self.scenario != "unbounded":
            raise ConfigurationError("random measurement counts only apply to the unbounded design")
        if self.n_obs is not None and self.n_obs < 2:
            raise ConfigurationError("need at least 2 observations per curve")


def bounded_mean(t: np.ndarray) -> np.ndarray:
    return 2.0 * t - 5.0 * np.cos(2.0 * np.pi * t)


def bounded_eigenfunctions(t: np.ndarray) -> np.ndarray:
    """Ten orthonormal trigonometric components on [0, 1] (10 x len(t))."""
    rows = []
    for k in range(1, 11):
        if k % 2 == 1:
            rows.append(np.sqrt(2.0) * np.cos(k * np.pi * t))
        else:
            rows.append(np.sqrt(2.0) * np.sin((k - 1) * np.pi * t))
    return np.vstack(rows)


def scenario1_eigenvalues() -> np.ndarray:
    return 10.0 * 0.5 ** (10.0 - np.arange(1, 11))


def scenario2_eigenvalues() -> np.ndarray:
    return 10.0 * 0.5 ** (np.arange(1, 11) - 1.0)


def scenario1_coefficients() -> np.ndarray:
    return 5.0 * 0.5 ** (np.arange(1, 11) - 1.0)


def scenario2_coefficient_function(t: np.ndarray) -> np.ndarray:
    return 2.0 + 3.0 * t - 3.0 * np.sin(np.pi * t)


def unbounded_mean(t: np.ndarray) -> np.ndarray:
    return 5.0 - 3.0 * np.cos(np.pi * t / 5.0) + 2.0 * t


def unbounded_eigenvalues() -> np.ndarray:
    return 10.0 * 0.5 ** (np.arange(1, 10) - 1.0)


def unbounded_coefficients() -> np.ndarray:
    return 10.0 / np.arange(1, 10) ** 3


def step_weighted_quadrature(points: np.ndarray, weight: StepWeight) -> np.ndarray:
    """Quadrature weights integrating ``f -> int f(t) w(t) dt`` cell-exactly.

    Each grid cell lies inside one step cell (the step breaks must be grid
    points), so the constant level multiplies the cell's trapezoid weights;
    the step discontinuities then cause no quadrature bias.
    """
    breaks = np.asarray(weight.breaks)
    if not np.all(np.isin(np.round(breaks, 12), np.round(points, 12))):
        raise ConfigurationError("step breaks must lie on the quadrature grid")
    mids = (points[:-1] + points[1:]) / 2.0
    idx = np.clip(np.searchsorted(breaks, mids, side="right") - 1, 0, len(weight.levels) - 1)
    cell_levels = np.asarray(weight.levels)[idx]
    halves = np.diff(points) / 2.0
    q = np.zeros_like(points)
    q[:-1] += halves * cell_levels
    q[1:] += halves * cell_levels
    return q


def _dense_dataset(times, rows, domain, responses=None) -> FunctionalDataset:
    samples = tuple(
        FunctionalSample(f"s{i:05d}", times, row) for i, row in enumerate(rows)
    )
    return FunctionalDataset(samples, domain, responses)


def _bounded_design(config: SimConfig, seed: int, eigenvalues, scenario2: bool):
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, config.n_obs)
    psi = bounded_eigenfunctions(t)
    mean = bounded_mean(t)

    fine = np.linspace(0.0, 1.0, _FINE_GRID_SIZE)
    if scenario2:
        q_nu = step_weighted_quadrature(fine, SCENARIO2_WEIGHT)
        response_vector = scenario2_coefficient_function(fine) * 1.0
        psi_fine = bounded_eigenfunctions(fine)
        mean_fine = bounded_mean(fine)
    else:
        beta = scenario1_coefficients()

    def draw(count: int, response_noise: float):
        xi = standard_normals(rng, (count, 10)) * np.sqrt(eigenvalues)
        noise = standard_normals(rng, (count, config.n_obs)) * config.noise_sd
        rows = mean + xi @ psi + noise
        if scenario2:
            curves_fine = mean_fine + xi @ psi_fine
            y = curves_fine @ (response_vector * q_nu)
        else:
            y = xi @ beta
        y = y + standard_normals(rng, count) * response_noise
        return rows, y

    train_rows, train_y = draw(config.n, config.response_noise_sd)
    test_rows, test_y = draw(config.test_size, 0.0)
    train = _dense_dataset(t, train_rows, UNIT, train_y)
    test = _dense_dataset(t, test_rows, UNIT, test_y)
    return train, test


def generate_scenario1(config: SimConfig, seed: int | None = None):
    """First bounded design: eigenvalues increasing in the component index,
    responses loading most heavily on the lowest-variance components."""
    if config.scenario != "s1":
        raise ConfigurationError("config is not a scenario-1 configuration")
    return _bounded_design(
        config, config.seed if seed is None else seed, scenario1_eigenvalues(), False
    )


def generate_scenario2(config: SimConfig, seed: int | None = None):
    """Second bounded design: responses integrate the curves against a
    smooth coefficient and the verbatim (unnormalized) step weight."""
    if config.scenario != "s2":
        raise ConfigurationError("config is not a scenario-2 configuration")
    return _bounded_design(
        config, config.seed if seed is None else seed, scenario2_eigenvalues(), True
    )


def generate_unbounded(config: SimConfig, seed: int | None = None):
    """Unbounded design: exponentially located measurements, nine-component
    exponential-weight basis, responses linear in the component scores."""
    if config.scenario != "unbounded":
        raise ConfigurationError("config is not an unbounded configuration")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    basis = LaguerreBasis(1.0)
    rho = unbounded_eigenvalues()
    beta = unbounded_coefficients()

    def draw(count: int, response_noise: float) -> list:
        samples = []
        ys = np.empty(count)
        for i in range(count):
            n_i = config.n_obs if config.n_obs is not None else int(rng.integers(5, 11))
            t = np.sort(exponential_times(rng, 0.5, n_i))
            while len(np.unique(t)) < n_i:  # ties have probability zero
                t = np.sort(exponential_times(rng, 0.5, n_i))
            xi = standard_normals(rng, 9) * np.sqrt(rho)
            vals = unbounded_mean(t) + xi @ basis_matrix(basis, t)
            vals = vals + standard_normals(rng, n_i) * config.noise_sd
            ys[i] = xi @ beta
            samples.append((t, vals))
        ys = ys + standard_normals(rng, count) * response_noise
        return samples, ys

    train_raw, train_y = draw(config.n, config.response_noise_sd)
    test_raw, test_y = draw(config.test_size, 0.0)
    train = FunctionalDataset(
        tuple(FunctionalSample(f"s{i:05d}", t, v) for i, (t, v) in enumerate(train_raw)),
        HALFLINE,
        train_y,
    )
    test = FunctionalDataset(
        tuple(FunctionalSample(f"s{i:05d}", t, v) for i, (t, v) in enumerate(test_raw)),
        HALFLINE,
        test_y,
    )
    return train, test


_GENERATORS = {
    "s1": generate_scenario1,
    "s2": generate_scenario2,
    "unbounded": generate_unbounded,
}


def generate(config: SimConfig, seed: int | None = None):
    """Dispatch to the configured scenario's generator."""
    return _GENERATORS[config.scenario](config, seed)


@dataclass(frozen=True)
class Method:
    """One estimation method evaluated by the harness.

    ``kind`` is one of ``uniform`` (plain functional linear model),
    ``step`` (dyadic weight search), ``exponential`` / ``halfnormal``
    (parametric weight search), or ``fixed`` (a given weight, no search).
    ``m`` pins the truncation; otherwise it is selected by cross-validation
    up to ``m_cap``.
    """

    name: str
    kind: str
    weight: WeightSpec | None = None
    m: int | None = None
    m_cap: int | None = None
    lambda1_grid: tuple[float, ...] = (0.0, 0.5, 1.0)
    lambda2_grid: tuple[float, ...] = (0.0, 0.5, 1.0)
    k_max: int = measure_select.DEFAULT_MAX_SPLITS
    param_grid: tuple[float, ...] | None = None
    cv_mode: str = "fast"

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "step", "exponential", "halfnormal", "fixed"):
            raise ConfigurationError(f"unknown method kind {self.kind!r}")
        if self.kind == "fixed" and self.weight is None:
            raise ConfigurationError("fixed methods need a weight")


def flm_uniform(name: str = "flm", **kwargs) -> Method:
    return Method(name, "uniform", **kwargs)


def wflm_step(name: str = "wflm-step", **kwargs) -> Method:
    return Method(name, "step", **kwargs)


def wflm_exponential(name: str = "wflm-exp", **kwargs) -> Method:
    return Method(name, "exponential", **kwargs)


def wflm_halfnormal(name: str = "wflm-halfnorm", **kwargs) -> Method:
    return Method(name, "halfnormal", **kwargs)


def wflm_fixed(weight: WeightSpec, name: str = "wflm-fixed", **kwargs) -> Method:
    return Method(name, "fixed", weight=weight, **kwargs)


@dataclass(frozen=True)
class MethodSummary:
    """Per-run errors of one method with their aggregates."""

    mspes: tuple[float, ...]
    amspe: float
    sd: float
    median: float


@dataclass(frozen=True)
class SimResult:
    """Harness output: per-method error summaries for one configuration."""

    config: SimConfig
    methods: dict[str, MethodSummary] = field(default_factory=dict)


def prediction_mspe(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Mean squared prediction error over a test set."""
    predicted = np.asarray(predicted, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if predicted.shape != truth.shape:
        raise ConfigurationError("prediction and truth lengths differ")
    return float(np.mean((predicted - truth) ** 2))


def _default_m_candidates(n: int, grid_size: int, cap: int | None) -> range:
    upper = max(1, min(n - 2, grid_size - 2, cap if cap is not None else 20))
    return range(1, upper + 1)


def _common_grid(train: FunctionalDataset) -> WorkingGrid | None:
    """The shared observation grid of a dense-common design, if any."""
    first = train.samples[0].times
    for s in train.samples[1:]:
        if len(s.times) != len(first) or not np.array_equal(s.times, first):
            return None
    return WorkingGrid(first, trapezoid_weights(first), train.domain)


def _bounded_truncation(train: FunctionalDataset, test: FunctionalDataset, size: int):
    """Bounded working domain covering every observation time of the run."""
    t_max = max(
        max(s.times[-1] for s in train.samples), max(s.times[-1] for s in test.samples)
    )
    domain = Domain(train.domain.lower, float(t_max))
    pts = np.linspace(domain.lower, domain.upper, size)
    grid = WorkingGrid(pts, trapezoid_weights(pts), domain)
    retag = lambda d: FunctionalDataset(d.samples, domain, d.responses)
    return retag(train), retag(test), grid


def _fit_and_predict(
    method: Method, train: FunctionalDataset, test: FunctionalDataset, config: SimConfig
) -> np.ndarray:
    bounded = train.domain.is_bounded
    if method.kind == "step" and not bounded:
        raise ConfigurationError("step weights require a bounded domain")
    if method.kind in ("exponential", "halfnormal") and bounded:
        raise ConfigurationError(f"{method.kind} weights require an unbounded domain")

    if method.kind in ("uniform", "fixed") or (method.kind == "step" and bounded):
        if bounded:
            grid = _common_grid(train)
            if grid is None:
                grid = build_grid(train.domain, config.grid_size, UniformWeight())
        else:
            train, test, grid = _bounded_truncation(train, test, config.grid_size)

    if method.kind == "uniform":
        spec: WeightSpec = UniformWeight()
        m = method.m
        if m is None:
            m, _ = flm.select_num_components(
                train, spec, grid, _default_m_candidates(train.n, grid.size, method.m_cap),
                method.cv_mode,
            )
    elif method.kind == "fixed":
        spec = method.weight
        m = method.m
        if m is None:
            m, _ = flm.select_num_components(
                train, spec, grid, _default_m_candidates(train.n, grid.size, method.m_cap),
                method.cv_mode,
            )
    elif method.kind == "step":
        selection = measure_select.tune_step(
            train,
            grid,
            m_cap=method.m_cap if method.m is None else method.m,
            mode=method.cv_mode,
            lambda1_grid=method.lambda1_grid,
            lambda2_grid=method.lambda2_grid,
            k_max=method.k_max,
        )
        spec, m = selection.weight, selection.m
    else:
        builder = lambda s: build_grid(train.domain, config.grid_size, s)
        selection = measure_select.parametric_search(
            train,
            builder,
            method.kind,
            param_grid=method.param_grid,
            m_candidates=None if method.m is None else [method.m],
            mode=method.cv_mode,
        )
        spec, m = selection.weight, selection.m
        grid = builder(spec)

    model = flm.fit_wflm(train, spec, grid, m)
    return flm.predict(model, test, grid)


def run_experiment(config: SimConfig, methods: list[Method]) -> SimResult:
    """Run the full Monte Carlo experiment for one configuration.

    Runs are independent given their child seeds; run ``q`` uses
    ``child_seed(config.seed, q)``.
    """
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ConfigurationError("method names must be unique")
    per_method: dict[str, list[float]] = {name: [] for name in names}
    for q in range(config.runs):
        train, test = generate(config, child_seed(config.seed, q))
        for method in methods:
            preds = _fit_and_predict(method, train, test, config)
            per_method[method.name].append(prediction_mspe(preds, test.responses))
    summaries = {}
    for name in names:
        mspes = np.asarray(per_method[name])
        sd = float(np.std(mspes, ddof=1)) if len(mspes) > 1 else 0.0
        summaries[name] = MethodSummary(
            tuple(mspes.tolist()), float(np.mean(mspes)), sd, float(np.median(mspes))
        )
    return SimResult(config, summaries)


def result_rows(result: SimResult) -> list[dict]:
    """Long-format rows (one per run and method) for CSV export."""
    config = result.config
    rows = []
    for name, summary in result.methods.items():
        for run, mspe in enumerate(summary.mspes):
            rows.append(
                {
                    "scenario": config.scenario,
                    "method": name,
                    "n": config.n,
                    "N": config.n_obs if config.n_obs is not None else "5-10",
                    "sigma": config.noise_sd,
                    "run": run,
                    "mspe": mspe,
                }
            )
    return rows


def summary_json(result: SimResult) -> dict:
    """Aggregate summary (mean, sd, median of per-run errors) per method."""
    return {
        "scenario": result.config.scenario,
        "n": result.config.n,
        "N": result.config.n_obs if result.config.n_obs is not None else "5-10",
        "sigma": result.config.noise_sd,
        "runs": result.config.runs,
        "seed": result.config.seed,
        "methods": {
            name: {"amspe": s.amspe, "sd": s.sd, "median": s.median}
            for name, s in result.methods.items()
        },
    }
