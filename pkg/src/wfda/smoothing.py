"""Local linear kernel smoothers (Epanechnikov) with CV bandwidth selection.

Internal machinery for mean and covariance estimation on irregular designs.
Windows that are degenerate at an evaluation point are widened until a
stable local fit exists; evaluation points with no usable neighbourhood fall
back to the nearest observation.
"""

from __future__ import annotations

import numpy as np

from .errors import InsufficientDataError, ParameterError

_CV_FOLDS = 5
_CV_GRID_SIZE = 10
_CV_SEED = 0
_MAX_WIDENINGS = 60
# Cap on held-out points per fold when scoring covariance bandwidths; keeps
# surface CV tractable for large pair clouds.
_CV_MAX_EVAL = 400


def _epanechnikov(u: np.ndarray) -> np.ndarray:
    out = 1.0 - u * u
    out[out < 0] = 0.0
    return 0.75 * out


def bandwidth_grid(t: np.ndarray) -> np.ndarray:
    """Geometric candidate bandwidths spanning [2 * median gap, range / 4]."""
    t_sorted = np.unique(t)
    if len(t_sorted) < 2:
        raise InsufficientDataError("need at least two distinct points for a bandwidth grid")
    gaps = np.diff(t_sorted)
    lo = 2.0 * float(np.median(gaps))
    hi = float(t_sorted[-1] - t_sorted[0]) / 4.0
    if hi <= lo:
        hi = lo * 1.5
    return np.geomspace(lo, hi, _CV_GRID_SIZE)


def _local_linear_1d_at(
    x0: float, t: np.ndarray, y: np.ndarray, h: float
) -> float:
    """Local linear fit value at a single point, widening degenerate windows."""
    for _ in range(_MAX_WIDENINGS):
        d = t - x0
        w = _epanechnikov(d / h)
        active = w > 0
        if active.sum() >= 2 and np.ptp(t[active]) > 0:
            wa, da, ya = w[active], d[active], y[active]
            s0 = wa.sum()
            s1 = float(wa @ da)
            s2 = float(wa @ (da * da))
            t0 = float(wa @ ya)
            t1 = float(wa @ (da * ya))
            denom = s0 * s2 - s1 * s1
            if denom > 1e-12 * max(s0 * s2, 1e-300):
                return (s2 * t0 - s1 * t1) / denom
        h *= 1.5
    return float(y[np.argmin(np.abs(t - x0))])


def local_linear_1d(
    eval_points: np.ndarray, t: np.ndarray, y: np.ndarray, bandwidth: float
) -> np.ndarray:
    """Local linear regression of pooled (t, y) evaluated at eval_points."""
    if bandwidth <= 0:
        raise ParameterError(f"bandwidth must be positive, got {bandwidth}")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.array([_local_linear_1d_at(x0, t, y, bandwidth) for x0 in eval_points])


def select_bandwidth_1d(t: np.ndarray, y: np.ndarray) -> float:
    """5-fold CV over a geometric bandwidth grid; ties go to the smaller value."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    candidates = bandwidth_grid(t)
    rng = np.random.default_rng(_CV_SEED)
    order = rng.permutation(len(t))
    folds = [order[k::_CV_FOLDS] for k in range(_CV_FOLDS)]
    sse = np.zeros(len(candidates))
    for fold in folds:
        keep = np.setdiff1d(np.arange(len(t)), fold, assume_unique=False)
        if len(keep) < 2:
            continue
        for j, h in enumerate(candidates):
            pred = local_linear_1d(t[fold], t[keep], y[keep], h)
            sse[j] += float(np.sum((y[fold] - pred) ** 2))
    return float(candidates[int(np.argmin(sse))])


def _local_plane_at(
    s0: float, t0: float, s: np.ndarray, t: np.ndarray, v: np.ndarray, h: float
) -> float:
    """Local plane fit value at (s0, t0) with product Epanechnikov weights."""
    for _ in range(_MAX_WIDENINGS):
        ds = s - s0
        dt = t - t0
        w = _epanechnikov(ds / h) * _epanechnikov(dt / h)
        active = w > 0
        if active.sum() >= 3:
            wa = w[active]
            x = np.column_stack((np.ones(active.sum()), ds[active], dt[active]))
            xtw = x.T * wa
            gram = xtw @ x
            if np.linalg.cond(gram) < 1e10:
                beta = np.linalg.solve(gram, xtw @ v[active])
                return float(beta[0])
        h *= 1.5
    nearest = np.argmin((s - s0) ** 2 + (t - t0) ** 2)
    return float(v[nearest])


def local_plane_grid(
    grid_points: np.ndarray,
    s: np.ndarray,
    t: np.ndarray,
    v: np.ndarray,
    bandwidth: float,
) -> np.ndarray:
    """Local plane smoother of scattered (s, t, v) on grid_points x grid_points.

    Vectorized over grid columns row by row; compact kernel support keeps the
    active sets small.
    """
    if bandwidth <= 0:
        raise ParameterError(f"bandwidth must be positive, got {bandwidth}")
    g = len(grid_points)
    out = np.empty((g, g))
    order = np.argsort(s)
    s_sorted, t_sorted, v_sorted = s[order], t[order], v[order]
    for i, s0 in enumerate(grid_points):
        lo = np.searchsorted(s_sorted, s0 - bandwidth, side="left")
        hi = np.searchsorted(s_sorted, s0 + bandwidth, side="right")
        ds = s_sorted[lo:hi] - s0
        ws = _epanechnikov(ds / bandwidth)
        tt, vv = t_sorted[lo:hi], v_sorted[lo:hi]
        for j, t0 in enumerate(grid_points):
            dt = tt - t0
            w = ws * _epanechnikov(dt / bandwidth)
            active = w > 0
            if active.sum() >= 3:
                wa = w[active]
                dsa, dta, va = ds[active], dt[active], vv[active]
                s00 = wa.sum()
                s10 = float(wa @ dsa)
                s01 = float(wa @ dta)
                s20 = float(wa @ (dsa * dsa))
                s11 = float(wa @ (dsa * dta))
                s02 = float(wa @ (dta * dta))
                r0 = float(wa @ va)
                r1 = float(wa @ (dsa * va))
                r2 = float(wa @ (dta * va))
                gram = np.array([[s00, s10, s01], [s10, s20, s11], [s01, s11, s02]])
                rhs = np.array([r0, r1, r2])
                det = np.linalg.det(gram)
                if abs(det) > 1e-12 * max(abs(s00 * s20 * s02), 1e-300):
                    out[i, j] = np.linalg.solve(gram, rhs)[0]
                    continue
            out[i, j] = _local_plane_at(s0, t0, s, t, v, bandwidth * 1.5)
    return out


def local_plane_points(
    eval_s: np.ndarray,
    eval_t: np.ndarray,
    s: np.ndarray,
    t: np.ndarray,
    v: np.ndarray,
    bandwidth: float,
) -> np.ndarray:
    """Local plane smoother evaluated at scattered points."""
    return np.array(
        [_local_plane_at(s0, t0, s, t, v, bandwidth) for s0, t0 in zip(eval_s, eval_t)]
    )


def select_bandwidth_2d(s: np.ndarray, t: np.ndarray, v: np.ndarray) -> float:
    """5-fold CV for the surface smoother; held-out folds capped for speed."""
    pooled = np.concatenate([s, t])
    candidates = bandwidth_grid(pooled)
    n = len(v)
    rng = np.random.default_rng(_CV_SEED)
    order = rng.permutation(n)
    folds = [order[k::_CV_FOLDS] for k in range(_CV_FOLDS)]
    sse = np.zeros(len(candidates))
    for fold in folds:
        if len(fold) > _CV_MAX_EVAL:
            fold = fold[:_CV_MAX_EVAL]
        keep = np.setdiff1d(np.arange(n), fold, assume_unique=False)
        if len(keep) < 3:
            continue
        for j, h in enumerate(candidates):
            pred = local_plane_points(s[fold], t[fold], s[keep], t[keep], v[keep], h)
            sse[j] += float(np.sum((v[fold] - pred) ** 2))
    return float(candidates[int(np.argmin(sse))])
