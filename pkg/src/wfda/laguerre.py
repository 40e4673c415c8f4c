"""Closed-form orthonormal polynomial basis of L2([0, inf), rate*exp(-rate*t) dt).

The first nine basis functions are hard-coded as coefficient tables in
``u = rate * t``; they coincide with the Laguerre polynomials ``L_{k-1}(u)``
and satisfy ``phi_k(0) = 1`` and the scale covariance
``phi_k(t; rate) = phi_k(rate * t; 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

MAX_ORDER = 9

# Coefficients of phi_k in powers of u = rate * t, k = 1..9.
_COEFFS = (
    (1.0,),
    (1.0, -1.0),
    (1.0, -2.0, 1.0 / 2.0),
    (1.0, -3.0, 3.0 / 2.0, -1.0 / 6.0),
    (1.0, -4.0, 6.0 / 2.0, -4.0 / 6.0, 1.0 / 24.0),
    (1.0, -5.0, 10.0 / 2.0, -10.0 / 6.0, 5.0 / 24.0, -1.0 / 120.0),
    (1.0, -6.0, 15.0 / 2.0, -20.0 / 6.0, 5.0 / 8.0, -1.0 / 20.0, 1.0 / 720.0),
    (1.0, -7.0, 21.0 / 2.0, -35.0 / 6.0, 35.0 / 24.0, -7.0 / 40.0, 7.0 / 720.0,
     -1.0 / 5040.0),
    (1.0, -8.0, 28.0 / 2.0, -56.0 / 6.0, 70.0 / 24.0, -7.0 / 15.0, 7.0 / 180.0,
     -1.0 / 630.0, 1.0 / 40320.0),
)


@dataclass(frozen=True)
class LaguerreBasis:
    """Orthonormal basis under the exponential density with the given rate."""

    rate: float
    max_order: int = MAX_ORDER

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise ParameterError(f"rate must be positive, got {self.rate}")
        if not 1 <= self.max_order <= MAX_ORDER:
            raise ParameterError(f"max_order must be in [1, {MAX_ORDER}], got {self.max_order}")


def evaluate_basis(basis: LaguerreBasis, k: int, t):
    """Evaluate the k-th basis function (1-based) at nonnegative times t.

    Horner evaluation of the hard-coded coefficient table in u = rate*t.
    """
    if not 1 <= k <= basis.max_order:
        raise ParameterError(f"basis order k={k} outside [1, {basis.max_order}]")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ParameterError("basis functions are defined for t >= 0")
    u = basis.rate * t_arr
    coeffs = _COEFFS[k - 1]
    out = np.full_like(u, coeffs[-1], dtype=float)
    for c in reversed(coeffs[:-1]):
        out = out * u + c
    if np.ndim(t) == 0:
        return float(out)
    return out


def basis_matrix(basis: LaguerreBasis, t: np.ndarray) -> np.ndarray:
    """Stack the first max_order basis functions at times t (max_order x len(t))."""
    return np.array([evaluate_basis(basis, k, t) for k in range(1, basis.max_order + 1)])


def check_orthonormality(basis: LaguerreBasis, quad_nodes: int) -> float:
    """Max deviation of the Gram matrix from identity under the exponential weight.

    Uses Gauss-Laguerre quadrature, exact for these polynomial products when
    quad_nodes >= max_order.
    """
    if quad_nodes < 2 * basis.max_order:
        raise ParameterError("need at least 2*max_order quadrature nodes")
    nodes, weights = np.polynomial.laguerre.laggauss(quad_nodes)
    # int f(t) rate*exp(-rate t) dt = int f(u/rate) exp(-u) du
    values = basis_matrix(basis, nodes / basis.rate)
    gram = (values * weights) @ values.T
    return float(np.max(np.abs(gram - np.eye(basis.max_order))))
