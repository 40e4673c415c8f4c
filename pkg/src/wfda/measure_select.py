"""Data-adaptive weight selection.

Bounded domains: greedy dyadic refinement over normalized step weights,
scored by a penalized leave-one-out criterion (total variation plus
support-fraction penalties).  Unbounded domains: grid search over a
parametric density family scored by the plain leave-one-out error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import flm
from .errors import ConfigurationError
from .fpca import FunctionalDataset
from .numerics import (
    ExponentialWeight,
    HalfNormalWeight,
    StepWeight,
    UniformWeight,
    WeightSpec,
    WorkingGrid,
    weight_to_json,
)

DEFAULT_LEVEL_MULTIPLIERS = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0)
DEFAULT_MAX_SPLITS = 3
NORMALIZATION_TOL = 1e-10


@dataclass(frozen=True)
class PcvsConfig:
    """Settings for one dyadic search: truncation, penalties, refinement depth."""

    m: int
    lambda1: float = 0.0
    lambda2: float = 0.0
    k_max: int = DEFAULT_MAX_SPLITS
    candidate_levels: tuple[float, ...] = DEFAULT_LEVEL_MULTIPLIERS

    def __post_init__(self) -> None:
        if self.m < 0:
            raise ConfigurationError("truncation must be nonnegative")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigurationError("penalty parameters must be nonnegative")
        if self.k_max < 1:
            raise ConfigurationError("k_max must be at least 1")
        if not self.candidate_levels:
            raise ConfigurationError("candidate level multipliers must be nonempty")
        if any(c < 0 for c in self.candidate_levels):
            raise ConfigurationError("candidate level multipliers must be nonnegative")


@dataclass(frozen=True)
class TraceEntry:
    """One objective evaluation during a search."""

    weight: WeightSpec
    score: float
    accepted: bool


@dataclass(frozen=True)
class SelectionResult:
    """Chosen weight with its truncation, penalties, score, and search trace."""

    weight: WeightSpec
    m: int
    lambda1: float
    lambda2: float
    score: float
    trace: tuple[TraceEntry, ...] = field(default_factory=tuple)

    def accepted_scores(self) -> list[float]:
        return [entry.score for entry in self.trace if entry.accepted]


def total_variation(weight: StepWeight) -> float:
    """Sum of absolute jumps between consecutive step levels."""
    return float(np.sum(np.abs(np.diff(weight.levels))))


def support_fraction(weight: StepWeight, domain_length: float) -> float:
    """Fraction of the domain where the step level is nonzero."""
    widths = np.diff(weight.breaks)
    levels = np.asarray(weight.levels)
    return float(np.sum(widths[levels != 0.0]) / domain_length)


def pcvs(
    data: FunctionalDataset,
    weight: WeightSpec,
    grid: WorkingGrid,
    m: int,
    lambda1: float,
    lambda2: float,
    mode: str = "fast",
) -> float:
    """Penalized cross-validation score for a normalized step weight.

    The predictive term is the normalized leave-one-out score; the penalties
    charge total variation and support fraction of the weight.
    """
    if not isinstance(weight, StepWeight):
        raise ConfigurationError("pcvs is defined for step weights only")
    if abs(weight.total_mass() - 1.0) > NORMALIZATION_TOL:
        raise ConfigurationError(
            f"step weight must be normalized; mass is {weight.total_mass():.12f}"
        )
    base = flm.loocvs(data, weight, grid, m, mode)
    penalty = lambda1 * total_variation(weight)
    penalty += lambda2 * support_fraction(weight, grid.domain.length)
    return base + penalty


def _merge_equal_cells(breaks: list[float], levels: list[float]) -> StepWeight:
    out_breaks = [breaks[0]]
    out_levels = []
    for b, level in zip(breaks[1:], levels):
        if out_levels and level == out_levels[-1]:
            out_breaks[-1] = b
        else:
            out_breaks.append(b)
            out_levels.append(level)
    return StepWeight(tuple(out_breaks), tuple(out_levels))


def _split_candidate(
    breaks: list[float], levels: list[float], idx: int, mult: float
) -> tuple[list[float], list[float]] | None:
    """Split cell ``idx`` at its midpoint with left level ``mult * parent``.

    The right child absorbs the cell's mass so the total stays one; if that
    would go negative it is floored at zero and all levels are rescaled.
    Returns None when the candidate weight has no mass at all.
    """
    parent = levels[idx]
    mid = (breaks[idx] + breaks[idx + 1]) / 2.0
    left = mult * parent
    right = parent * (2.0 - mult)
    new_breaks = breaks[: idx + 1] + [mid] + breaks[idx + 1 :]
    new_levels = levels[:idx] + [left, max(right, 0.0)] + levels[idx + 1 :]
    if right < 0.0:
        widths = np.diff(new_breaks)
        mass = float(np.dot(widths, new_levels))
        if mass <= 0.0:
            return None
        new_levels = [c / mass for c in new_levels]
    return new_breaks, new_levels


def dyadic_search(
    data: FunctionalDataset,
    grid: WorkingGrid,
    config: PcvsConfig,
    mode: str = "fast",
) -> SelectionResult:
    """Greedy dyadic refinement of a step weight minimizing the penalized score.

    Starting from the uniform density, each sweep splits every current cell
    at its midpoint and searches the left child's level over multiples of the
    parent level, the right child absorbing the mass constraint.  A sweep
    that fails to lower the objective ends the search; cells never get finer
    than ``2**k_max``.
    """
    domain = grid.domain
    if not domain.is_bounded:
        raise ConfigurationError("dyadic search requires a bounded domain")
    multipliers = tuple(dict.fromkeys(config.candidate_levels))

    breaks = [domain.lower, domain.upper]
    levels = [1.0 / domain.length]
    current = StepWeight(tuple(breaks), tuple(levels))
    current_score = pcvs(data, current, grid, config.m, config.lambda1, config.lambda2, mode)
    trace: list[TraceEntry] = [TraceEntry(current, current_score, True)]

    for _ in range(config.k_max):
        improved = False
        idx = 0
        for _ in range(len(levels)):
            best_score = np.inf
            best_key = np.inf
            best_state = None
            for mult in multipliers:
                cand = _split_candidate(breaks, levels, idx, mult)
                if cand is None:
                    continue
                cand_weight = StepWeight(tuple(cand[0]), tuple(cand[1]))
                score = pcvs(
                    data, cand_weight, grid, config.m, config.lambda1, config.lambda2, mode
                )
                trace.append(TraceEntry(cand_weight, score, False))
                key = abs(mult - 1.0)
                if score < best_score or (score == best_score and key < best_key):
                    best_score = score
                    best_key = key
                    best_state = cand
            if best_state is not None and best_score < current_score:
                breaks, levels = best_state
                current_score = best_score
                improved = True
            else:
                # structural no-op split: same function, exactly the same mass
                mid = (breaks[idx] + breaks[idx + 1]) / 2.0
                breaks = breaks[: idx + 1] + [mid] + breaks[idx + 1 :]
                levels = levels[:idx] + [levels[idx], levels[idx]] + levels[idx + 1 :]
            current = StepWeight(tuple(breaks), tuple(levels))
            trace.append(TraceEntry(current, current_score, True))
            idx += 2
        if not improved:
            break

    final = _merge_equal_cells(breaks, levels)
    return SelectionResult(
        final, config.m, config.lambda1, config.lambda2, current_score, tuple(trace)
    )


def tune_step(
    data: FunctionalDataset,
    grid: WorkingGrid,
    m_cap: int | None = None,
    mode: str = "fast",
    lambda1_grid: Sequence[float] = (0.0, 0.5, 1.0),
    lambda2_grid: Sequence[float] = (0.0, 0.5, 1.0),
    k_max: int = DEFAULT_MAX_SPLITS,
    candidate_levels: tuple[float, ...] = DEFAULT_LEVEL_MULTIPLIERS,
) -> SelectionResult:
    """Joint search over truncation, penalties, and the step weight.

    The truncation cap defaults to the best uniform-weight truncation by
    leave-one-out error.  Every combination runs its own dyadic search with
    the penalized objective; the final winner is the combination whose
    selected weight has the lowest unpenalized leave-one-out score.
    """
    if not lambda1_grid or not lambda2_grid:
        raise ConfigurationError("penalty grids must be nonempty")
    if m_cap is None:
        n = data.n
        upper = max(1, min(n - 2, grid.size - 2, 20))
        m_cap, _ = flm.select_num_components(
            data, UniformWeight(), grid, range(1, upper + 1), mode
        )
    if m_cap < 1:
        raise ConfigurationError("truncation cap must be at least 1")

    best: SelectionResult | None = None
    best_raw = np.inf
    for m in range(1, m_cap + 1):
        for lam1 in lambda1_grid:
            for lam2 in lambda2_grid:
                config = PcvsConfig(m, lam1, lam2, k_max, candidate_levels)
                result = dyadic_search(data, grid, config, mode)
                raw = flm.loocvs(data, result.weight, grid, m, mode)
                if raw < best_raw:
                    best_raw = raw
                    best = result
    assert best is not None
    return best


_FAMILIES = {
    "exponential": ExponentialWeight,
    "halfnormal": HalfNormalWeight,
}


def default_parametric_grid(data: FunctionalDataset, size: int = 9) -> np.ndarray:
    """Geometric parameter grid centered on the data's inverse mean time."""
    pooled = np.concatenate([s.times for s in data.samples])
    mean_time = float(np.mean(pooled))
    if mean_time <= 0:
        raise ConfigurationError("observation times must have positive mean")
    center = 1.0 / mean_time
    return np.geomspace(center / 16.0, center * 16.0, size)


def parametric_search(
    data: FunctionalDataset,
    grid_builder: Callable[[WeightSpec], WorkingGrid],
    family: str,
    param_grid: Sequence[float] | None = None,
    m_candidates: Sequence[int] | None = None,
    mode: str = "fast",
) -> SelectionResult:
    """Best weight in a parametric density family by leave-one-out error.

    Each parameter value rebuilds the working grid (the truncation point
    depends on the density), selects its truncation, and records the
    resulting error; ties favor smaller parameters, then fewer components.
    """
    if family not in _FAMILIES:
        raise ConfigurationError(
            f"unknown family {family!r}; expected one of {sorted(_FAMILIES)}"
        )
    make = _FAMILIES[family]
    if param_grid is None:
        param_grid = default_parametric_grid(data)
    params = sorted(set(float(p) for p in param_grid))
    if not params:
        raise ConfigurationError("parameter grid must be nonempty")
    if m_candidates is None:
        m_candidates = range(1, max(2, min(data.n - 2, 10) + 1))

    trace: list[TraceEntry] = []
    best_score = np.inf
    best_weight = None
    best_m = 0
    for param in params:
        spec = make(param)
        grid = grid_builder(spec)
        m, m_trace = flm.select_num_components(data, spec, grid, m_candidates, mode)
        score = min(value for _, value in m_trace)
        trace.append(TraceEntry(spec, score, False))
        if score < best_score:
            best_score = score
            best_weight = spec
            best_m = m
    assert best_weight is not None
    trace = [
        TraceEntry(e.weight, e.score, e.weight == best_weight) for e in trace
    ]
    return SelectionResult(best_weight, best_m, 0.0, 0.0, best_score, tuple(trace))


def selection_to_json(result: SelectionResult) -> dict:
    """JSON-ready encoding of a selection result, trace included."""
    return {
        "weight": weight_to_json(result.weight),
        "m": result.m,
        "lambda1": result.lambda1,
        "lambda2": result.lambda2,
        "score": result.score,
        "trace": [
            {
                "weight": weight_to_json(entry.weight),
                "score": entry.score,
                "accepted": entry.accepted,
            }
            for entry in result.trace
        ],
    }
