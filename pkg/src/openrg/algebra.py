"""Boundary QISM building blocks for the rational (XXX) R-matrix.

Everything here is a dense complex matrix.  Objects living on an auxiliary
space times the chain are stored "aux-major": a ``(2 * D, 2 * D)`` matrix
whose row index is ``a * D + b`` for auxiliary index ``a`` and chain basis
state ``b`` (see :mod:`openrg.spins` for the chain basis).

The K-matrices and the transfer matrix use the shifted spectral parameter
(``u -> u - eta/2``, ``eps_j -> eps_j - eta/2``).  The unshifted K-matrices
are kept only for checking the reflection equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .spins import SM, SP, SZ

MAX_LENGTH = 12
POLE_GUARD = 1e-8

PERM = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)
I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)


def _as_complex_tuple(values) -> tuple[complex, ...]:
    return tuple(complex(v) for v in values)


@dataclass(frozen=True)
class ChainSpec:
    """Lattice of ``L`` sites with inhomogeneities ``eps_j`` and parameter ``eta``."""

    inhomogeneities: tuple[complex, ...]
    eta: complex
    max_length: int = MAX_LENGTH

    def __post_init__(self):
        eps = _as_complex_tuple(self.inhomogeneities)
        object.__setattr__(self, "inhomogeneities", eps)
        object.__setattr__(self, "eta", complex(self.eta))
        if not eps:
            raise ValueError("chain needs at least one site")
        if len(eps) > self.max_length:
            raise ValueError(f"length {len(eps)} exceeds cap {self.max_length}")
        scale = max(abs(e) for e in eps)
        tol = 1e-12 * max(scale, 1.0)
        for j, e in enumerate(eps):
            if abs(e) <= tol:
                raise ValueError(f"inhomogeneity eps_{j + 1} must be nonzero")
            for k in range(j):
                if abs(e - eps[k]) <= tol:
                    raise ValueError(f"inhomogeneities eps_{k + 1} and eps_{j + 1} coincide")
                if abs(e + eps[k]) <= tol:
                    raise ValueError(f"inhomogeneities eps_{k + 1} and eps_{j + 1} satisfy eps_j = -eps_k")

    @property
    def length(self) -> int:
        return len(self.inhomogeneities)

    @property
    def dim(self) -> int:
        return 1 << self.length

    @property
    def eps(self) -> np.ndarray:
        return np.array(self.inhomogeneities, dtype=complex)

    def with_eta(self, eta) -> "ChainSpec":
        return replace(self, eta=eta)

    def negated(self) -> "ChainSpec":
        return replace(self, inhomogeneities=tuple(-e for e in self.inhomogeneities))


@dataclass(frozen=True)
class BoundaryParams:
    """Parameters of the two K-matrices."""

    xi_minus: complex = 0.0
    psi_minus: complex = 0.0
    phi_minus: complex = 0.0
    xi_plus: complex = 0.0
    psi_plus: complex = 0.0
    phi_plus: complex = 0.0

    def __post_init__(self):
        for name in ("xi_minus", "psi_minus", "phi_minus", "xi_plus", "psi_plus", "phi_plus"):
            value = complex(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)

    def swapped(self) -> "BoundaryParams":
        """Exchange ``psi`` and ``phi`` on both boundaries (the transpose of K)."""
        return replace(self, psi_minus=self.phi_minus, phi_minus=self.psi_minus,
                       psi_plus=self.phi_plus, phi_plus=self.psi_plus)


@dataclass(frozen=True)
class EtaExpansion:
    """Leading and first-order coefficients of the boundary parameters in ``eta``.

    ``lam`` is the coefficient called lambda (a Python keyword).
    """

    xi: complex = 0.0
    psi: complex = 0.0
    phi: complex = 0.0
    alpha: complex = 0.0
    beta: complex = 0.0
    gamma: complex = 0.0
    delta: complex = 0.0
    lam: complex = 0.0
    mu: complex = 0.0

    def __post_init__(self):
        for name in ("xi", "psi", "phi", "alpha", "beta", "gamma", "delta", "lam", "mu"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        if abs(self.psi * self.phi + 1) < 1e-14:
            raise DomainError("psi*phi + 1 must be nonzero (branch point of sqrt(psi*phi + 1))")

    def boundary(self, eta) -> BoundaryParams:
        return BoundaryParams(
            xi_plus=self.xi + eta * self.alpha,
            psi_plus=self.psi + eta * self.gamma,
            phi_plus=self.phi + eta * self.lam,
            xi_minus=-self.xi + eta * self.beta,
            psi_minus=self.psi + eta * self.delta,
            phi_minus=self.phi + eta * self.mu,
        )

    def swapped(self) -> "EtaExpansion":
        """``psi <-> phi``, ``gamma <-> lambda``, ``delta <-> mu``."""
        return replace(self, psi=self.phi, phi=self.psi, gamma=self.lam, lam=self.gamma,
                       delta=self.mu, mu=self.delta)

    @property
    def sqrt_psiphi(self) -> complex:
        return complex(np.sqrt(self.psi * self.phi + 1))


# --- two-dimensional auxiliary objects -------------------------------------

def r_matrix(u, eta) -> np.ndarray:
    """``R(u) = u I + eta P`` on C^2 (x) C^2."""
    return u * I4 + eta * PERM


def k_minus_preshift(u, bp: BoundaryParams) -> np.ndarray:
    return np.array([[bp.xi_minus + u, bp.psi_minus * u],
                     [bp.phi_minus * u, bp.xi_minus - u]], dtype=complex)


def k_plus_preshift(u, bp: BoundaryParams, eta) -> np.ndarray:
    w = u + eta
    return np.array([[bp.xi_plus + w, bp.psi_plus * w],
                     [bp.phi_plus * w, bp.xi_plus - w]], dtype=complex)


def k_minus(u, bp: BoundaryParams, eta) -> np.ndarray:
    """Right reflection matrix in the shifted convention."""
    return k_minus_preshift(u - eta / 2, bp)


def k_plus(u, bp: BoundaryParams, eta) -> np.ndarray:
    """Left reflection matrix in the shifted convention."""
    return k_plus_preshift(u - eta / 2, bp, eta)


# --- Lax operators and aux-major products ----------------------------------

def _check_pole(u, poles, what="u") -> None:
    for p in poles:
        if abs(u - p) < POLE_GUARD:
            raise DomainError(f"{what}={u!r} is within {POLE_GUARD:g} of the pole {p!r}")


def lax_local(u, eta) -> np.ndarray:
    """Single-site Lax operator as a 4-index array ``[a, x, c, y]``.

    ``a, c`` index the auxiliary space and ``x, y`` the site; as a 4x4 matrix
    (rows ``(a, x)``) it is ``I + (eta/u) [[Sz, S-], [S+, -Sz]]``.
    """
    _check_pole(u, (0.0,))
    g = eta / u
    ell = np.zeros((2, 2, 2, 2), dtype=complex)
    ell[0, :, 0, :] = SZ
    ell[0, :, 1, :] = SM
    ell[1, :, 0, :] = SP
    ell[1, :, 1, :] = -SZ
    return np.eye(4, dtype=complex).reshape(2, 2, 2, 2) + g * ell


def _aux_identity(D: int) -> np.ndarray:
    out = np.zeros((2, D, 2, D), dtype=complex)
    out[0, :, 0, :] = np.eye(D)
    out[1, :, 1, :] = np.eye(D)
    return out


def _mul_local_right(M: np.ndarray, L4: np.ndarray, j: int) -> np.ndarray:
    """``M @ L_aj`` for aux-major ``M`` of shape ``(2, D, 2, D)``."""
    D = M.shape[1]
    low = 1 << (j - 1)
    M6 = M.reshape(2, D, 2, D // (2 * low), 2, low)
    return np.einsum("arbpxl,bxcy->arcpyl", M6, L4).reshape(2, D, 2, D)


def _mul_local_left(L4: np.ndarray, j: int, M: np.ndarray) -> np.ndarray:
    """``L_aj @ M`` for aux-major ``M``."""
    D = M.shape[1]
    low = 1 << (j - 1)
    M6 = M.reshape(2, D // (2 * low), 2, low, 2, D)
    return np.einsum("bxcy,cpylsr->bpxlsr", L4, M6).reshape(2, D, 2, D)


def _mul_aux_right(M: np.ndarray, K: np.ndarray) -> np.ndarray:
    return np.einsum("arbs,bc->arcs", M, K)


def _check_site(j: int, chain: ChainSpec) -> None:
    if not 1 <= j <= chain.length:
        raise IndexError(f"site index {j} out of range 1..{chain.length}")


def lax(u, j: int, chain: ChainSpec) -> np.ndarray:
    """``L_aj(u)`` embedded on aux (x) chain, aux-major, shape ``(2D, 2D)``."""
    _check_site(j, chain)
    D = chain.dim
    M = _mul_local_right(_aux_identity(D), lax_local(u, chain.eta), j)
    return M.reshape(2 * D, 2 * D)


def monodromy(u, chain: ChainSpec) -> np.ndarray:
    """``T(u) = L_aL(u - eps_L) ... L_a1(u - eps_1)`` (shifted convention)."""
    eps, eta = chain.eps, chain.eta
    M = _aux_identity(chain.dim)
    for j in range(chain.length, 0, -1):
        M = _mul_local_right(M, lax_local(u - eps[j - 1], eta), j)
    return M.reshape(2 * chain.dim, 2 * chain.dim)


def dual_monodromy(u, chain: ChainSpec) -> np.ndarray:
    """``L_a1(u + eps_1) ... L_aL(u + eps_L)`` (shifted convention)."""
    eps, eta = chain.eps, chain.eta
    M = _aux_identity(chain.dim)
    for j in range(1, chain.length + 1):
        M = _mul_local_right(M, lax_local(u + eps[j - 1], eta), j)
    return M.reshape(2 * chain.dim, 2 * chain.dim)


def double_row_monodromy(u, chain: ChainSpec, bp: BoundaryParams) -> np.ndarray:
    D = chain.dim
    T = monodromy(u, chain).reshape(2, D, 2, D)
    T = _mul_aux_right(T, k_minus(u, bp, chain.eta))
    Tt = dual_monodromy(u, chain).reshape(2, D, 2, D)
    return np.einsum("arbs,bsct->arct", T, Tt).reshape(2 * D, 2 * D)


def _transfer_poles(chain: ChainSpec):
    return (0.0, *chain.inhomogeneities, *(-e for e in chain.inhomogeneities))


def transfer_matrix(u, chain: ChainSpec, bp: BoundaryParams) -> np.ndarray:
    """Double-row transfer matrix ``t(u)`` on the ``2**L`` chain space.

    ``tr_a[K+(u) L_L(u-eps_L)...L_1(u-eps_1) K-(u) L_1(u+eps_1)...L_L(u+eps_L)]``
    with the 1/u normalisation inside every Lax operator kept literally.
    """
    if chain.eta == 0:
        raise DomainError("transfer matrix requires eta != 0")
    _check_pole(u, _transfer_poles(chain))
    return _transfer_unchecked(u, chain, bp)


def _transfer_unchecked(u, chain: ChainSpec, bp: BoundaryParams) -> np.ndarray:
    eps, eta, D = chain.eps, chain.eta, chain.dim
    M = np.zeros((2, D, 2, D), dtype=complex)
    Kp = k_plus(u, bp, eta)
    for a in range(2):
        for b in range(2):
            M[a, :, b, :] = Kp[a, b] * np.eye(D)
    for j in range(chain.length, 0, -1):
        M = _mul_local_right(M, lax_local(u - eps[j - 1], eta), j)
    M = _mul_aux_right(M, k_minus(u, bp, eta))
    for j in range(1, chain.length + 1):
        M = _mul_local_right(M, lax_local(u + eps[j - 1], eta), j)
    return M[0, :, 0, :] + M[1, :, 1, :]


# --- residual checks -------------------------------------------------------

def rel_residual(lhs: np.ndarray, rhs: np.ndarray) -> float:
    """Relative Frobenius distance ``|lhs - rhs| / max(|lhs|, |rhs|)``."""
    scale = max(np.linalg.norm(lhs), np.linalg.norm(rhs), np.finfo(float).tiny)
    return float(np.linalg.norm(lhs - rhs) / scale)


RFunc = Callable[[complex, complex], np.ndarray]


def _r12(R):
    return np.kron(R, I2)


def _r23(R):
    return np.kron(I2, R)


def _r13(R):
    P23 = np.kron(I2, PERM)
    return P23 @ _r12(R) @ P23


def ybe_residual(u, v, eta, r_fn: RFunc = r_matrix) -> float:
    lhs = _r12(r_fn(u - v, eta)) @ _r13(r_fn(u, eta)) @ _r23(r_fn(v, eta))
    rhs = _r23(r_fn(v, eta)) @ _r13(r_fn(u, eta)) @ _r12(r_fn(u - v, eta))
    return rel_residual(lhs, rhs)


def _r21(R):
    return PERM @ R @ PERM


def reflection_minus_residual(u, v, bp: BoundaryParams, eta, r_fn: RFunc = r_matrix) -> float:
    """Right reflection equation with the unshifted ``K-``."""
    K1 = np.kron(k_minus_preshift(u, bp), I2)
    K2 = np.kron(I2, k_minus_preshift(v, bp))
    lhs = r_fn(u - v, eta) @ K1 @ _r21(r_fn(u + v, eta)) @ K2
    rhs = K2 @ r_fn(u + v, eta) @ K1 @ _r21(r_fn(u - v, eta))
    return rel_residual(lhs, rhs)


def reflection_plus_residual(u, v, bp: BoundaryParams, eta, r_fn: RFunc = r_matrix) -> float:
    """Dual reflection equation with the unshifted ``K+``."""
    K1 = np.kron(k_plus_preshift(u, bp, eta), I2)
    K2 = np.kron(I2, k_plus_preshift(v, bp, eta))
    w = -u - v - 2 * eta
    lhs = r_fn(v - u, eta) @ K1 @ _r21(r_fn(w, eta)) @ K2
    rhs = K2 @ r_fn(w, eta) @ K1 @ _r21(r_fn(v - u, eta))
    return rel_residual(lhs, rhs)


def _embed_aux_a(X: np.ndarray, D: int) -> np.ndarray:
    """Aux-major ``(2D, 2D)`` operator on space ``a`` -> ``a (x) b (x) chain``."""
    X4 = X.reshape(2, D, 2, D)
    out = np.einsum("aicj,bd->abicdj", X4, I2)
    return out.reshape(4 * D, 4 * D)


def _embed_aux_b(X: np.ndarray, D: int) -> np.ndarray:
    X4 = X.reshape(2, D, 2, D)
    out = np.einsum("bidj,ac->abicdj", X4, I2)
    return out.reshape(4 * D, 4 * D)


def _embed_r_ab(R: np.ndarray, D: int) -> np.ndarray:
    return np.kron(R, np.eye(D, dtype=complex))


def rll_residual(u, v, j: int, chain: ChainSpec, r_fn: RFunc = r_matrix) -> float:
    D, eta = chain.dim, chain.eta
    Ra = _embed_r_ab(r_fn(u - v, eta), D)
    La = _embed_aux_a(lax(u, j, chain), D)
    Lb = _embed_aux_b(lax(v, j, chain), D)
    return rel_residual(Ra @ La @ Lb, Lb @ La @ Ra)


def lax_inverse_residual(u, j: int, chain: ChainSpec) -> float:
    """Distance of ``L(u) L(eta - u)`` from ``(1 + (3/4) eta^2 / (u (eta - u))) I``."""
    eta = chain.eta
    prod = lax(u, j, chain) @ lax(eta - u, j, chain)
    scalar = 1 + eta**2 * 0.75 / (u * (eta - u))
    return rel_residual(prod, scalar * np.eye(prod.shape[0]))


def rtt_residual(u, v, chain: ChainSpec, r_fn: RFunc = r_matrix) -> float:
    D, eta = chain.dim, chain.eta
    R = _embed_r_ab(r_fn(u - v, eta), D)
    Ta = _embed_aux_a(monodromy(u, chain), D)
    Tb = _embed_aux_b(monodromy(v, chain), D)
    return rel_residual(R @ Ta @ Tb, Tb @ Ta @ R)


def rtrt_residual(u, v, chain: ChainSpec, bp: BoundaryParams, r_fn: RFunc = r_matrix) -> float:
    """Reflection algebra of the double-row monodromy, shifted convention.

    In the shifted variables the ``R(u + v)`` factors become ``R(u + v - eta)``.
    """
    D, eta = chain.dim, chain.eta
    Rm = _embed_r_ab(r_fn(u - v, eta), D)
    Rp = _embed_r_ab(_r21(r_fn(u + v - eta, eta)), D)
    Ta = _embed_aux_a(double_row_monodromy(u, chain, bp), D)
    Tb = _embed_aux_b(double_row_monodromy(v, chain, bp), D)
    return rel_residual(Rm @ Ta @ Rp @ Tb, Tb @ Rp @ Ta @ Rm)


def transfer_commutator_residual(u, v, chain: ChainSpec, bp: BoundaryParams) -> float:
    tu = transfer_matrix(u, chain, bp)
    tv = transfer_matrix(v, chain, bp)
    comm = tu @ tv - tv @ tu
    return float(np.linalg.norm(comm) / (np.linalg.norm(tu) * np.linalg.norm(tv)))


def transfer_transpose_residual(u, chain: ChainSpec, bp: BoundaryParams) -> float:
    """``t(u, eps)`` against ``t(u, -eps)^T`` with ``psi <-> phi`` on both boundaries."""
    lhs = transfer_matrix(u, chain, bp)
    rhs = transfer_matrix(u, chain.negated(), bp.swapped()).T
    return rel_residual(lhs, rhs)


def corrupted_r_matrix(delta: float = 1e-3, entry=(1, 2)) -> RFunc:
    """An R-matrix with one entry shifted by ``delta``; used for fault injection."""
    def r_fn(u, eta):
        R = r_matrix(u, eta)
        R[entry] += delta
        return R
    return r_fn


# --- aggregated report -----------------------------------------------------

def identity_threshold(length: int) -> float:
    return 1e-12 if length <= 4 else 1e-11


@dataclass(frozen=True)
class ResidualRow:
    name: str
    residual: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.residual) and self.residual < self.threshold)


@dataclass(frozen=True)
class StructureReport:
    rows: tuple[ResidualRow, ...]
    samples: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def row(self, name: str) -> ResidualRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)


def structure_report(chain: ChainSpec, bp: BoundaryParams, samples: Sequence[tuple],
                     *, r_fn: RFunc = r_matrix, threshold: float | None = None) -> StructureReport:
    """Maximum residual of each algebraic identity over the ``(u, v)`` samples."""
    samples = list(samples)
    if not samples:
        raise ValueError("structure_report needs at least one (u, v) sample")
    poles = (*_transfer_poles(chain), chain.eta)
    for u, v in samples:
        _check_pole(u, poles, "u")
        _check_pole(v, poles, "v")
    thr = identity_threshold(chain.length) if threshold is None else threshold
    eta = chain.eta
    checks: dict[str, list[float]] = {
        "ybe": [], "reflection_minus": [], "reflection_plus": [], "rll": [],
        "lax_inverse": [], "rtt": [], "rtrt": [], "transfer_commute": [],
        "transfer_transpose": [],
    }
    small = chain.length <= 4
    for n, (u, v) in enumerate(samples):
        checks["ybe"].append(ybe_residual(u, v, eta, r_fn))
        checks["reflection_minus"].append(reflection_minus_residual(u, v, bp, eta, r_fn))
        checks["reflection_plus"].append(reflection_plus_residual(u, v, bp, eta, r_fn))
        j = 1 + n % chain.length
        checks["rll"].append(rll_residual(u, v, j, chain, r_fn))
        checks["lax_inverse"].append(lax_inverse_residual(u, j, chain))
        if small or n == 0:
            checks["rtt"].append(rtt_residual(u, v, chain, r_fn))
            checks["rtrt"].append(rtrt_residual(u, v, chain, bp, r_fn))
        checks["transfer_commute"].append(transfer_commutator_residual(u, v, chain, bp))
        checks["transfer_transpose"].append(transfer_transpose_residual(u, chain, bp))
    rows = tuple(ResidualRow(name, float(max(vals)), thr) for name, vals in checks.items())
    return StructureReport(rows=rows, samples=len(samples))
