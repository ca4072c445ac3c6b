"""Quasi-classical eigenvalue formulas, Bethe equations and the energy formula.

Residuals are written as ``lhs - rhs`` of each equation.  All functions take
plain arrays of squared roots ``x_i = v_i**2`` (or ``y_i = 1/x_i`` for the
y-form); wrappers accepting :class:`BetheRoots` live next to them.
"""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np

from ..algebra import ChainSpec, EtaExpansion
from ..errors import DomainError
from ..manybody import ModelParams
from .roots import BetheRoots

SINGULAR_TOL = 1e-14
RESIDUAL_WARN = 1e-6


def _as_x(roots) -> np.ndarray:
    if isinstance(roots, BetheRoots):
        if np.any(roots.at_infinity):
            raise DomainError("roots at infinity are not allowed here; pass the finite subset")
        return roots.squared_roots
    return np.asarray(roots, dtype=complex).reshape(-1)


def _check_distinct(x: np.ndarray, what: str = "v_i^2") -> None:
    for k in range(len(x)):
        for i in range(k):
            if abs(x[k] - x[i]) <= SINGULAR_TOL * max(1.0, abs(x[k])):
                raise DomainError(f"{what} coincide at indices {i} and {k}")


def _check_away(x: np.ndarray, nodes: np.ndarray, what: str) -> None:
    for k, xk in enumerate(x):
        for l, e in enumerate(nodes):
            if abs(xk - e) <= SINGULAR_TOL * max(1.0, abs(e)):
                raise DomainError(f"root {k} sits on the pole {what}_{l + 1}")


def _others_product(x: np.ndarray, k: int) -> complex:
    return complex(np.prod(np.delete(x[k] - x, k)))


# ---------------------------------------------------------------- eigenvalues

def qc_conserved_eigenvalue(j: int, roots, params: ModelParams) -> complex:
    """Eigenvalue of ``tau_j*`` from the squared roots (``j`` is 1-based).

    Roots flagged at infinity in a :class:`BetheRoots` contribute nothing.
    """
    e2 = params.eps ** 2
    if not 1 <= j <= len(e2):
        raise IndexError(f"site index {j} out of range")
    x = roots.finite if isinstance(roots, BetheRoots) else _as_x(roots)
    ej = e2[j - 1]
    _check_away(x, np.array([ej]), f"eps_{j}^2 ->")
    others = np.delete(e2, j - 1)
    return complex(np.sum(ej / (ej - others)) - np.sum(2 * ej / (ej - x)) - params.alpha)


def qc_conserved_eigenvalues(roots, params: ModelParams) -> np.ndarray:
    return np.array([qc_conserved_eigenvalue(j, roots, params) for j in range(1, params.length + 1)])


def _general_constants(ep: EtaExpansion) -> tuple[complex, complex, complex, complex]:
    s2 = ep.psi * ep.phi + 1
    if abs(s2) < SINGULAR_TOL:
        raise DomainError("psi*phi = -1 is a branch point")
    s = ep.sqrt_psiphi
    X = (ep.lam - ep.mu) * ep.psi + (ep.gamma - ep.delta) * ep.phi
    Y = (ep.gamma - ep.delta) * (ep.lam - ep.mu)
    return s2, s, X, Y


def qc_conserved_eigenvalue_general(j: int, roots, chain: ChainSpec, ep: EtaExpansion) -> complex:
    """Eigenvalue of the nine-parameter ``tau_j`` (principal square root branch)."""
    s2, s, X, _ = _general_constants(ep)
    e = chain.eps
    ej = e[j - 1]
    e2 = e ** 2
    x = _as_x(roots)
    _check_away(x, np.array([e2[j - 1]]), f"eps_{j}^2 ->")
    others = np.delete(e2, j - 1)
    bracket = np.sum(e2[j - 1] / (e2[j - 1] - others)) - np.sum(2 * e2[j - 1] / (e2[j - 1] - x)) + 0.75
    return complex((e2[j - 1] * s2 - ep.xi ** 2) / ej * bracket - ej * s2
                   - (ep.alpha + ep.beta) * ej * s + ep.xi * ej * X / (2 * s))


def log_derivative_targets(lambda_star: Sequence[complex], params: ModelParams) -> np.ndarray:
    """``s_j = Q'(eps_j^2)/Q(eps_j^2)`` implied by the ``tau_j*`` eigenvalues."""
    e2 = params.eps ** 2
    lam = np.asarray(lambda_star, dtype=complex)
    if lam.shape != e2.shape:
        raise ValueError(f"expected {len(e2)} eigenvalues, got {lam.shape}")
    if not np.all(np.isfinite(lam)):
        raise ValueError("conserved eigenvalues must be finite")
    out = np.empty(len(e2), dtype=complex)
    for j in range(len(e2)):
        others = np.delete(e2, j)
        out[j] = (np.sum(e2[j] / (e2[j] - others)) - params.alpha - lam[j]) / (2 * e2[j])
    return out


def log_derivative_targets_general(lambdas: Sequence[complex], chain: ChainSpec,
                                   ep: EtaExpansion) -> np.ndarray:
    """Same as :func:`log_derivative_targets` for the nine-parameter family."""
    s2, s, X, _ = _general_constants(ep)
    e = chain.eps
    e2 = e ** 2
    lam = np.asarray(lambdas, dtype=complex)
    out = np.empty(len(e2), dtype=complex)
    for j in range(len(e2)):
        pref = e2[j] * s2 - ep.xi ** 2
        if abs(pref) < SINGULAR_TOL:
            raise DomainError(f"eps_{j + 1}^2 (psi phi + 1) = xi^2: eigenvalue carries no root information")
        rest = lam[j] + e[j] * s2 + (ep.alpha + ep.beta) * e[j] * s - ep.xi * e[j] * X / (2 * s)
        others = np.delete(e2, j)
        total = np.sum(e2[j] / (e2[j] - others)) + 0.75 - rest * e[j] / pref
        out[j] = total / (2 * e2[j])
    return out


# ---------------------------------------------------------------- Bethe equations

def _bae_v(x: np.ndarray, e2: np.ndarray, alpha, glam) -> np.ndarray:
    n = len(x)
    r = np.empty(n, dtype=complex)
    for k in range(n):
        d = np.delete(x[k] - x, k)
        r[k] = ((alpha + 1) / x[k] + np.sum(2 / d) - np.sum(1 / (x[k] - e2))
                - glam / (4 * x[k]) * np.prod(x[k] - e2) / np.prod(d))
    return r


def _check_v(x, e2):
    if np.any(np.abs(x) < SINGULAR_TOL):
        k = int(np.argmin(np.abs(x)))
        raise DomainError(f"v_{k + 1}^2 = 0 is singular")
    _check_distinct(x)
    _check_away(x, e2, "eps^2")


def bae_residual(roots, params: ModelParams) -> np.ndarray:
    """Residual of the reduced Bethe equations in the squared roots."""
    x = _as_x(roots)
    e2 = params.eps ** 2
    _check_v(x, e2)
    return _bae_v(x, e2, params.alpha, params.gamma * params.lam)


def bae_jacobian(roots, params: ModelParams) -> np.ndarray:
    """Analytic Jacobian of :func:`bae_residual` with respect to ``x = v**2``."""
    x = _as_x(roots)
    e2 = params.eps ** 2
    _check_v(x, e2)
    a, c = params.alpha, params.gamma * params.lam / 4
    n = len(x)
    J = np.zeros((n, n), dtype=complex)
    for k in range(n):
        d = np.delete(x[k] - x, k)
        idx = np.delete(np.arange(n), k)
        F = np.prod(x[k] - e2) / (x[k] * np.prod(d))
        dlogF = np.sum(1 / (x[k] - e2)) - 1 / x[k] - np.sum(1 / d)
        J[k, k] = -(a + 1) / x[k] ** 2 - np.sum(2 / d ** 2) + np.sum(1 / (x[k] - e2) ** 2) - c * F * dlogF
        for m, dm in zip(idx, d):
            # d/dx_m of 2/(x_k - x_m) is 2/(x_k - x_m)^2; of log F is 1/(x_k - x_m)
            J[k, m] = 2 / dm ** 2 - c * F / dm
    return J


def _bae_y(y: np.ndarray, z2: np.ndarray, G, Gamma) -> np.ndarray:
    n = len(y)
    c = Gamma ** 2 / G ** 2
    r = np.empty(n, dtype=complex)
    for k in range(n):
        yi = np.delete(y, k)
        F = np.prod(1 - y[k] / z2) / (y[k] * np.prod(1 - y[k] / yi))
        r[k] = 1 + 1 / G + np.sum(2 * yi / (yi - y[k])) + np.sum(z2 / (y[k] - z2)) + c * F
    return r


def _check_y(y, z2):
    if np.any(np.abs(y) < SINGULAR_TOL):
        k = int(np.argmin(np.abs(y)))
        raise DomainError(f"y_{k + 1} = 0 (root at infinity) is singular in the y-form")
    _check_distinct(y, "y_i")
    _check_away(y, z2, "z^2")


def bae_residual_y(y: Sequence[complex], params: ModelParams) -> np.ndarray:
    """Residual of the Bethe equations in ``y_i = v_i**-2`` and ``z = 1/eps``.

    Equals ``v_k**2`` times :func:`bae_residual`, so the zero sets coincide.
    """
    y = np.asarray(y, dtype=complex).reshape(-1)
    z2 = np.asarray(params.z) ** 2
    _check_y(y, z2)
    return _bae_y(y, z2, params.G, params.Gamma)


def bae_jacobian_y(y: Sequence[complex], params: ModelParams) -> np.ndarray:
    y = np.asarray(y, dtype=complex).reshape(-1)
    z2 = np.asarray(params.z) ** 2
    _check_y(y, z2)
    c = params.Gamma ** 2 / params.G ** 2
    n = len(y)
    J = np.zeros((n, n), dtype=complex)
    for k in range(n):
        idx = np.delete(np.arange(n), k)
        yi = y[idx]
        F = np.prod(1 - y[k] / z2) / (y[k] * np.prod(1 - y[k] / yi))
        dlogF = -1 / y[k] + np.sum(1 / (y[k] - z2)) + np.sum(1 / (yi - y[k]))
        J[k, k] = np.sum(2 * yi / (yi - y[k]) ** 2) - np.sum(z2 / (y[k] - z2) ** 2) + c * F * dlogF
        for m, ym in zip(idx, yi):
            J[k, m] = -2 * y[k] / (ym - y[k]) ** 2 - c * F * y[k] / (ym * (ym - y[k]))
    return J


def bae_residual_general(roots, chain: ChainSpec, ep: EtaExpansion) -> np.ndarray:
    """Residual of the nine-parameter quasi-classical Bethe equations.

    With ``beta = psi = phi = delta = mu = xi = 0`` this is ``v_k**2`` times
    :func:`bae_residual`.
    """
    s2, s, X, Y = _general_constants(ep)
    x = _as_x(roots)
    e2 = chain.eps ** 2
    _check_distinct(x)
    _check_away(x, e2, "eps^2")
    const = (ep.alpha + ep.beta) * s + s2 - ep.xi * X / (2 * s)
    inhom = 0.25 * (Y - X ** 2 / (4 * s2))
    r = np.empty(len(x), dtype=complex)
    for k in range(len(x)):
        d = np.delete(x[k] - x, k)
        r[k] = (const + (x[k] * s2 - ep.xi ** 2) * (np.sum(2 / d) - np.sum(1 / (x[k] - e2)))
                - inhom * np.prod(x[k] - e2) / np.prod(d))
    return r


def residual_norm(r: np.ndarray) -> float:
    return float(np.max(np.abs(r))) if len(r) else 0.0


# ---------------------------------------------------------------- energy

def energy_from_y(y: Sequence[complex], params: ModelParams) -> complex:
    """Energy from ``y_i = v_i**-2``; exact zeros mean roots at infinity.

    The products ``prod_k 1/(1 - y_i/y_k)`` are evaluated as
    ``prod_k y_k/(y_k - y_i)`` so a vanishing ``y_k`` gives a clean zero.
    """
    y = np.asarray(y, dtype=complex).reshape(-1)
    z2 = np.asarray(params.z) ** 2
    E = (1 + params.G) * np.sum(y) - 0.5 * np.sum(z2)
    if params.Gamma == 0:
        return complex(E)
    S = 0j
    for i in range(len(y)):
        yk = np.delete(y, i)
        diff = yk - y[i]
        if np.any(np.abs(diff) <= SINGULAR_TOL * max(1.0, abs(y[i]))):
            raise DomainError(f"singular product: y_{i + 1} collides with another root")
        S += np.prod(1 - y[i] / z2) * np.prod(yk / diff)
    return complex(E + params.Gamma ** 2 / params.G * S)


def energy_from_roots(roots: BetheRoots, params: ModelParams, *, warn: bool = True) -> complex:
    """Energy eigenvalue of ``H`` from Bethe roots.

    Warns when the stored residual norm exceeds ``1e-6``.  The imaginary part
    is returned as computed so callers can check it.
    """
    if len(roots.squared_roots) != params.length:
        raise ValueError(f"expected {params.length} roots, got {len(roots.squared_roots)}")
    if warn and np.isfinite(roots.residual_norm) and roots.residual_norm > RESIDUAL_WARN:
        warnings.warn(f"energy from roots with BAE residual {roots.residual_norm:.3g}", RuntimeWarning,
                      stacklevel=2)
    y = np.where(roots.at_infinity, 0, roots.inverse_form)
    return energy_from_y(y, params)


def conserved_weighted_sum(roots, params: ModelParams) -> complex:
    """``sum_j eps_j**-2 lambda_j*`` evaluated term by term."""
    lam = qc_conserved_eigenvalues(roots, params)
    return complex(np.sum(lam / params.eps ** 2))


def weighted_sum_closed_form(roots, params: ModelParams) -> complex:
    """Closed form ``sum_{i,j} 2/(v_i^2 - eps_j^2) - alpha sum_j eps_j**-2``.

    Equal to :func:`conserved_weighted_sum` for any roots.
    """
    x = roots.finite if isinstance(roots, BetheRoots) else _as_x(roots)
    e2 = params.eps ** 2
    return complex(np.sum(2 / (x[:, None] - e2[None, :])) - params.alpha * np.sum(1 / e2))
