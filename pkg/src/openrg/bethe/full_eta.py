"""Full-eta transfer-matrix eigenvalue, its Bethe equations and the L = 1 anchor solver.

Everything depends on the roots only through ``x_i = v_i**2``; the Bethe
equations are even in ``v_k`` so the principal root is used where a ``v_k``
is needed.  Roots at infinity (``x_i = inf``) contribute trivially.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..algebra import POLE_GUARD, BoundaryParams, ChainSpec
from ..errors import DomainError
from ..manybody import ModelParams, _extrapolate_to_zero
from .roots import BetheRoots, COLLISION_TOL

P = np.polynomial.polynomial

QC_ETA_FRACTIONS = (0.4, 0.3, 0.2, 0.1)  # eta samples in units of |eps|


def _boundary_roots(bp: BoundaryParams) -> tuple[complex, complex]:
    """``(sqrt(psi- phi- + 1), sqrt(psi+ phi+ + 1))``, principal branch."""
    pm = bp.psi_minus * bp.phi_minus + 1
    pp = bp.psi_plus * bp.phi_plus + 1
    if abs(pm) < 1e-14 or abs(pp) < 1e-14:
        raise DomainError("psi*phi + 1 vanishes on a boundary (branch point)")
    return complex(np.sqrt(pm)), complex(np.sqrt(pp))


def boundary_constant(bp: BoundaryParams) -> complex:
    """The constant ``c`` multiplying the inhomogeneous term of the eigenvalue."""
    sm, sp = _boundary_roots(bp)
    return 2 * ((0.5 * (bp.psi_minus * bp.phi_plus + bp.phi_minus * bp.psi_plus) + 1) / (sm * sp) - 1)


def _ratio(u, shift, x) -> complex:
    """``prod_i ((u + shift)**2 - x_i) / (u**2 - x_i)``; infinite ``x_i`` give 1."""
    x = x[np.isfinite(x)]
    return complex(np.prod(((u + shift) ** 2 - x) / (u * u - x)))


def _terms(u, x: np.ndarray, chain: ChainSpec, bp: BoundaryParams, drop: int | None = None) -> complex:
    """Eigenvalue at ``u``; with ``drop = j`` the factor ``1/(u - eps_j)`` is removed."""
    eps, eta = chain.eps, chain.eta
    sm, sp = _boundary_roots(bp)
    den = (u - eps) * (u + eps)
    if drop is not None:
        den[drop] = u + eps[drop]
    site_a = np.prod((u - eps - eta / 2) * (u + eps - eta / 2) / den)
    site_d = np.prod((u - eps + eta / 2) * (u + eps + eta / 2) / den)
    a = (2 * u - eta) / (2 * u) * (u + bp.xi_minus / sm + eta / 2) * (u + bp.xi_plus / sp + eta / 2) * site_a
    d = (2 * u + eta) / (2 * u) * (u - bp.xi_minus / sm - eta / 2) * (u - bp.xi_plus / sp - eta / 2) * site_d
    out = a * _ratio(u, eta, x) + d * _ratio(u, -eta, x)
    c = boundary_constant(bp)
    if c != 0:
        fin = x[np.isfinite(x)]
        if len(fin) == len(x):
            num = ((u + eps) ** 2 - eta**2 / 4) * ((u - eps) ** 2 - eta**2 / 4)
            out += c * (u * u - eta**2 / 4) * np.prod(num / den) / np.prod(u * u - fin)
    return complex(sm * sp * out)


def lambda_full(u: complex, roots: BetheRoots, chain: ChainSpec, bp: BoundaryParams) -> complex:
    """Eigenvalue of the double-row transfer matrix at finite ``eta``."""
    if chain.eta == 0:
        raise DomainError("the full-eta eigenvalue requires eta != 0")
    if roots.length != chain.length:
        raise ValueError(f"need {chain.length} roots, got {roots.length}")
    u = complex(u)
    x = roots.squared_roots
    if abs(u) < POLE_GUARD:
        raise DomainError("u = 0 is a pole")
    for l, e in enumerate(chain.eps):
        if abs(u * u - e * e) < POLE_GUARD:
            raise DomainError(f"u = +-eps_{l + 1} is a pole")
    for i, xi in enumerate(x):
        if np.isfinite(xi) and abs(u * u - xi) < POLE_GUARD:
            raise DomainError(f"u = +-v_{i + 1} is a pole")
    return _terms(u, x, chain, bp)


def lambda_full_residue(j: int, roots: BetheRoots, chain: ChainSpec, bp: BoundaryParams) -> complex:
    """``lim_{u -> eps_j} (u - eps_j) Lambda(u)``, evaluated with the pole factor cancelled."""
    if not 1 <= j <= chain.length:
        raise IndexError(f"site index {j} out of range 1..{chain.length}")
    ej = chain.eps[j - 1]
    for i, xi in enumerate(roots.squared_roots):
        if np.isfinite(xi) and abs(ej * ej - xi) < POLE_GUARD:
            raise DomainError(f"v_{i + 1}**2 coincides with eps_{j}**2")
    return _terms(ej, roots.squared_roots, chain, bp, drop=j - 1)


def pole_limit(f, u0: complex, steps: Sequence[float] = (1e-4, -1e-4, 2e-4, -2e-4)) -> complex:
    """``lim_{u -> u0} (u - u0) f(u)`` by polynomial extrapolation in the offset."""
    return complex(_extrapolate_to_zero(list(steps), [h * f(u0 + h) for h in steps]))


def bae_full_residual(roots: BetheRoots, chain: ChainSpec, bp: BoundaryParams) -> np.ndarray:
    """Three-term full-eta Bethe residual per root (finite roots only)."""
    if chain.eta == 0:
        raise DomainError("the full-eta Bethe equations require eta != 0")
    eps, eta = chain.eps, chain.eta
    sm, sp = _boundary_roots(bp)
    x = roots.finite
    inhom = (bp.psi_minus * bp.phi_plus + bp.phi_minus * bp.psi_plus) + 2 - 2 * sm * sp
    out = np.empty(len(x), dtype=complex)
    for k, xk in enumerate(x):
        if abs(xk) < 1e-300:
            raise DomainError(f"v_{k + 1} = 0")
        others = np.delete(x, k)
        if np.any(np.abs(others - xk) < COLLISION_TOL * max(1.0, abs(xk))):
            raise DomainError(f"v_{k + 1}**2 collides with another root")
        v = np.sqrt(xk)
        plus_den = (v + eta / 2) ** 2 - eps**2
        minus_den = (v - eta / 2) ** 2 - eps**2
        if np.any(np.abs(plus_den) < 1e-14) or np.any(np.abs(minus_den) < 1e-14):
            raise DomainError(f"v_{k + 1} sits on a shifted inhomogeneity")
        t1 = (2 * eta / v) * (v * sm + bp.xi_minus + eta / 2 * sm) * (v * sp + bp.xi_plus + eta / 2 * sp) \
            / np.prod(plus_den) * np.prod((v + eta) ** 2 - others)
        t2 = (2 * eta / v) * (v * sm - bp.xi_minus - eta / 2 * sm) * (v * sp - bp.xi_plus - eta / 2 * sp) \
            / np.prod(minus_den) * np.prod((v - eta) ** 2 - others)
        out[k] = t1 - t2 + inhom
    return out


def bae_full_quasiclassical(roots: BetheRoots, chain: ChainSpec, bp: BoundaryParams) -> np.ndarray:
    """Full-eta residual rescaled to the quasi-classical residual.

    The leading term in ``eta`` is ``4 eta**2 prod_{i!=k}(x_k - x_i) / prod_l(x_k - eps_l**2)``
    times the quasi-classical residual, so the two agree up to ``O(eta)``.
    """
    x = roots.finite
    e2 = chain.eps ** 2
    g = np.array([np.prod(xk - np.delete(x, k)) / np.prod(xk - e2) for k, xk in enumerate(x)])
    return bae_full_residual(roots, chain, bp) / (4 * chain.eta**2 * g)


def bae_from_pole(k: int, roots: BetheRoots, chain: ChainSpec, bp: BoundaryParams,
                  sign: int = 1, steps: Sequence[float] = (1e-5, -1e-5, 2e-5, -2e-5)) -> complex:
    """Bethe residual of root ``k`` recovered from the pole of the eigenvalue at ``sign * v_k``.

    The pole coefficient equals ``sign (v**2 - eta**2/4) F(v) / (2 v prod_{i!=k}(x_k - x_i))``
    times the full-eta residual, so this returns the residual itself.
    """
    x = roots.squared_roots
    if not 1 <= k <= len(x) or not np.isfinite(x[k - 1]):
        raise IndexError(f"root {k} is not a finite root")
    eps, eta = chain.eps, chain.eta
    v = np.sqrt(x[k - 1])
    others = np.delete(x, k - 1)
    F = np.prod(((v + eps) ** 2 - eta**2 / 4) * ((v - eps) ** 2 - eta**2 / 4) / (v * v - eps**2))
    norm = (v * v - eta**2 / 4) * F / (2 * v * np.prod(x[k - 1] - others))
    res = pole_limit(lambda u: lambda_full(u, roots, chain, bp), sign * v, steps)
    return complex(sign * res / norm)


def _single_site_numerator(chain: ChainSpec, bp: BoundaryParams) -> np.ndarray:
    """Polynomial in ``v`` whose roots are the L = 1 full-eta Bethe roots (times ``v``)."""
    e, eta = chain.eps[0], chain.eta
    sm, sp = _boundary_roots(bp)
    up = P.polymul([bp.xi_minus + eta / 2 * sm, sm], [bp.xi_plus + eta / 2 * sp, sp])
    dn = P.polymul([-bp.xi_minus - eta / 2 * sm, sm], [-bp.xi_plus - eta / 2 * sp, sp])
    plus = P.polyfromroots([e - eta / 2, -e - eta / 2])
    minus = P.polyfromroots([e + eta / 2, -e + eta / 2])
    inhom = (bp.psi_minus * bp.phi_plus + bp.phi_minus * bp.psi_plus) + 2 - 2 * sm * sp
    num = P.polysub(2 * eta * P.polymul(up, minus), 2 * eta * P.polymul(dn, plus))
    return P.polyadd(num, inhom * P.polymul([0, 1], P.polymul(plus, minus)))


def solve_full_bae_single(chain: ChainSpec, bp: BoundaryParams) -> list[BetheRoots]:
    """All solutions of the L = 1 full-eta Bethe equation, one per eigenstate.

    The equation is cleared of denominators into a polynomial in ``v``; its
    nonzero roots come in pairs ``+-v`` and each ``v**2`` labels one state.
    Missing states (for diagonal K the degree drops) carry a root at infinity.
    """
    if chain.length != 1:
        raise ValueError("the polynomial full-eta solver handles L = 1 only")
    num = _single_site_numerator(chain, bp)
    scale = np.max(np.abs(num))
    num = np.where(np.abs(num) < 1e-15 * scale, 0, num)
    v = P.polyroots(np.trim_zeros(num, "b")) if np.count_nonzero(num) > 1 else np.zeros(0)
    x: list[complex] = []
    for xi in v[np.abs(v) > 1e-9 * max(1.0, abs(chain.eps[0]))] ** 2:
        if all(abs(xi - xk) > 1e-8 * max(1.0, abs(xi)) for xk in x):
            x.append(complex(xi))
    states = [BetheRoots([xi], source="full-eta") for xi in x]
    while len(states) < 2:
        states.append(BetheRoots([np.inf], source="full-eta"))
    out = []
    for s in states:
        res = bae_full_residual(s, chain, bp)
        out.append(s.with_(residual_norm=float(np.max(np.abs(res))) if len(res) else 0.0))
    return out


def full_eta_energies_single(params: ModelParams,
                             fractions: Sequence[float] = QC_ETA_FRACTIONS) -> np.ndarray:
    """L = 1 energies from the full-eta eigenvalue alone, sorted ascending.

    At each ``+-eta`` the two full-eta states are solved, the pole coefficient
    of the eigenvalue at ``u = eps`` is divided by ``eta**2``, and the even
    part is extrapolated in ``eta**2`` to zero.  The samples are
    ``fractions * min(|eps|, 1/(2|gamma|))``: the boundary has a branch point
    at ``eta = 1/|gamma|``, and rounding in the O(eta) cancellation grows as eta
    shrinks, so moderate samples with a high-order fit beat tiny ones.  With
    the reduced boundary (``xi = psi = phi = 0``) the limit equals
    ``eps * (lambda* - 1/4)``.
    """
    if params.length != 1:
        raise ValueError("full-eta energies are anchored at L = 1 only")
    ep = params.eta_expansion()
    e = params.eps[0]
    # sqrt(1 - eta**2 gamma**2) branches at eta = 1/|gamma|; stay well inside
    scale = min(abs(e), 0.5 / abs(params.gamma)) if params.gamma else abs(e)
    etas = [float(f) * scale for f in fractions]
    samples = []
    for eta in etas:
        even = np.zeros(2, dtype=complex)
        for s in (1.0, -1.0):
            ch = params.chain(s * eta)
            bp = ep.boundary(s * eta)
            lam = [lambda_full_residue(1, r, ch, bp) / eta**2 for r in solve_full_bae_single(ch, bp)]
            even += 0.5 * np.sort_complex(np.array(lam))
        samples.append(even)
    lam = _extrapolate_to_zero([eta * eta for eta in etas], samples)
    lam_star = lam / e + 0.25
    energy = lam_star / (2 * params.alpha * e**2)
    return energy[np.argsort(energy.real)]
