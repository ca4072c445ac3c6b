"""Spin-1/2 Hamiltonian, conserved operators and exact diagonalization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .algebra import MAX_LENGTH, BoundaryParams, ChainSpec, EtaExpansion, transfer_matrix
from .errors import DomainError
from .spins import SM, SP, SZ, embed, site_operator, sz_diagonal, total_sz

__all__ = [
    "ModelParams", "SpectrumResult", "site_operator", "hamiltonian", "tau_general",
    "tau_star", "tau_stars", "tau_semi_diagonal", "tau_first", "tau_second", "tau_third",
    "gauge_transform", "gauge_matrix", "exact_spectrum", "joint_spectrum",
    "pole_residue", "quasiclassical_coefficient", "quasiclassical_check", "commutator_norm",
    "commutator_residuals", "hamiltonian_sum_residual", "second_family_residual",
    "gauge_chain_residuals", "u1_residual",
]


@dataclass(frozen=True)
class ModelParams:
    """Couplings of the spin-form Hamiltonian.

    ``z`` are the single-particle couplings ``z_j = 1/eps_j``, ``G`` the
    pairing strength and ``Gamma`` the environment coupling.
    """

    z: tuple[float, ...]
    G: float
    Gamma: float
    max_length: int = MAX_LENGTH

    def __post_init__(self):
        z = tuple(float(x) for x in self.z)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "G", float(self.G))
        object.__setattr__(self, "Gamma", float(self.Gamma))
        if not z:
            raise ValueError("need at least one site")
        if len(z) > self.max_length:
            raise ValueError(f"length {len(z)} exceeds cap {self.max_length}")
        if any(not np.isfinite(x) or x <= 0 for x in z):
            raise ValueError("couplings z_j must be positive and finite")
        if len(set(z)) != len(z):
            raise ValueError("couplings z_j must be distinct (eps_j = 1/z_j must not coincide)")
        if self.G == 0 or not np.isfinite(self.G):
            raise ValueError("pairing strength G must be nonzero and finite")
        if not np.isfinite(self.Gamma):
            raise ValueError("Gamma must be finite")

    @property
    def length(self) -> int:
        return len(self.z)

    @property
    def dim(self) -> int:
        return 1 << self.length

    @property
    def eps(self) -> np.ndarray:
        return 1.0 / np.array(self.z)

    @property
    def alpha(self) -> float:
        return 1.0 / self.G

    @property
    def gamma(self) -> float:
        return 2.0 * self.Gamma / self.G

    @property
    def lam(self) -> float:
        return -self.gamma

    def eta_expansion(self) -> EtaExpansion:
        """Boundary expansion with ``xi = beta = psi = phi = delta = mu = 0``."""
        return EtaExpansion(alpha=self.alpha, gamma=self.gamma, lam=self.lam)

    def chain(self, eta=0.0) -> ChainSpec:
        return ChainSpec(tuple(self.eps), eta, max_length=self.max_length)


def commutator_norm(A: np.ndarray, B: np.ndarray) -> float:
    return float(np.linalg.norm(A @ B - B @ A))


def hamiltonian(params: ModelParams) -> np.ndarray:
    """Spin-form Hamiltonian (no constant term).

    ``sum_k z_k^2 Sz_k - G sum_{k != j} z_k z_j S+_k S-_j + Gamma sum_k z_k (S+_k + S-_k)``
    """
    L, z = params.length, params.z
    D = params.dim
    H = np.zeros((D, D), dtype=complex)
    H[np.diag_indices(D)] += sum(z[k] ** 2 * sz_diagonal(k + 1, L) for k in range(L))
    for k in range(L):
        for j in range(L):
            if j != k:
                embed({k + 1: SP, j + 1: SM}, L, out=H, coeff=-params.G * z[k] * z[j])
        if params.Gamma:
            embed({k + 1: SP + SM}, L, out=H, coeff=params.Gamma * z[k])
    return H


def _add_pair(out, L, j, k, mj, mk, coeff):
    """Accumulate ``coeff * m_j m_k``; on the same site the matrices multiply."""
    if coeff == 0:
        return
    if j == k:
        embed({j: mj @ mk}, L, out=out, coeff=coeff)
    else:
        embed({j: mj, k: mk}, L, out=out, coeff=coeff)


def tau_general(j: int, chain: ChainSpec, ep: EtaExpansion) -> np.ndarray:
    """Nine-parameter conserved operator ``tau_j`` of the open rational Gaudin family."""
    L = chain.length
    if not 1 <= j <= L:
        raise IndexError(f"site index {j} out of range 1..{L}")
    eps = chain.eps
    ej = eps[j - 1]
    xi, psi, phi = ep.xi, ep.psi, ep.phi
    ab = ep.alpha + ep.beta
    gd = ep.gamma - ep.delta
    lm = ep.lam - ep.mu
    out = np.zeros((chain.dim, chain.dim), dtype=complex)

    pre = (1 + psi * phi) * ej**2 - xi**2
    for k in range(1, L + 1):
        if k == j:
            continue
        d = ej - eps[k - 1]
        if abs(d) < 1e-14:
            raise DomainError(f"eps_{j} - eps_{k} vanishes")
        c = pre / d
        _add_pair(out, L, j, k, SZ, SZ, 2 * c)
        _add_pair(out, L, j, k, SP, SM, c)
        _add_pair(out, L, j, k, SM, SP, c)

    for k in range(1, L + 1):
        s = ej + eps[k - 1]
        if abs(s) < 1e-14:
            raise DomainError(f"eps_{j} + eps_{k} vanishes")
        w = 1.0 / s
        _add_pair(out, L, j, k, SZ, SZ, w * 2 * (ej + xi) * (ej - xi))
        _add_pair(out, L, j, k, SP, SM, -w * (ej - xi) ** 2)
        _add_pair(out, L, j, k, SM, SP, -w * (ej + xi) ** 2)
        _add_pair(out, L, j, k, SZ, SP, w * 2 * psi * ej * (ej + xi))
        _add_pair(out, L, j, k, SP, SZ, w * 2 * psi * ej * (ej - xi))
        _add_pair(out, L, j, k, SM, SZ, w * 2 * phi * ej * (ej + xi))
        _add_pair(out, L, j, k, SZ, SM, w * 2 * phi * ej * (ej - xi))
        _add_pair(out, L, j, k, SP, SP, w * ej**2 * psi**2)
        _add_pair(out, L, j, k, SM, SM, w * ej**2 * phi**2)
        _add_pair(out, L, j, k, SZ, SZ, -w * ej**2 * 2 * psi * phi)

    cz = 2 * ab * ej - 2 * xi + psi * lm * ej**2 - phi * gd * ej**2
    cp = psi * ab * ej - xi * gd * ej - psi * xi + gd * ej**2
    cm = phi * ab * ej - xi * lm * ej - phi * xi - lm * ej**2
    embed({j: cz * SZ + cp * SP + cm * SM}, L, out=out)
    return out


def tau_first(j: int, eps, xi, alpha, gamma, lam) -> np.ndarray:
    """Semi-diagonal operator before the local gauge transformation (diagonal K-)."""
    eps = np.asarray(eps, dtype=complex)
    L = len(eps)
    ej = eps[j - 1]
    out = np.zeros((1 << L, 1 << L), dtype=complex)
    for k in range(1, L + 1):
        if k == j:
            continue
        ek = eps[k - 1]
        base = ej**2 / (ej**2 - ek**2)
        _add_pair(out, L, j, k, SZ, SZ, 4 * base)
        _add_pair(out, L, j, k, SP, SM, 2 * base * (ek + xi) / (ej + xi))
        _add_pair(out, L, j, k, SM, SP, 2 * base * (ek - xi) / (ej - xi))
    local = (2 * alpha * ej**2 / (ej**2 - xi**2)) * SZ \
        + (gamma * ej**2 / (ej + xi)) * SP - (lam * ej**2 / (ej - xi)) * SM
    embed({j: local}, L, out=out)
    return out


def tau_semi_diagonal(j: int, eps, xi, alpha, gamma, lam) -> np.ndarray:
    """``eps_j tau_j / ((eps_j - xi)(eps_j + xi))`` for diagonal K-, with its constant."""
    eps = np.asarray(eps, dtype=complex)
    ej = eps[j - 1]
    const = 0.25 - 0.5 * (ej**2 + xi**2) / (ej**2 - xi**2)
    out = tau_first(j, eps, xi, alpha, gamma, lam)
    out[np.diag_indices(out.shape[0])] += const
    return out


def _gauge_root(e, xi):
    """``sqrt(e^2 - xi^2)`` on the branch fixed by the gauge factors.

    Equal to the principal root when ``e > |xi|``.
    """
    return (e - xi) * np.sqrt((e + xi) / (e - xi))


def tau_second(j: int, eps, xi, alpha, gamma, lam) -> np.ndarray:
    """Closed form of the gauge-transformed semi-diagonal operator."""
    eps = np.asarray(eps, dtype=complex)
    L = len(eps)
    ej = eps[j - 1]
    rj = _gauge_root(ej, xi)
    out = np.zeros((1 << L, 1 << L), dtype=complex)
    for k in range(1, L + 1):
        if k == j:
            continue
        ek = eps[k - 1]
        base = ej**2 / (ej**2 - ek**2)
        _add_pair(out, L, j, k, SZ, SZ, 4 * base)
        flip = 2 * base * _gauge_root(ek, xi) / rj
        _add_pair(out, L, j, k, SP, SM, flip)
        _add_pair(out, L, j, k, SM, SP, flip)
    local = (2 * alpha * ej**2 / (ej**2 - xi**2)) * SZ + (gamma * ej**2 / rj) * SP \
        - (lam * ej**2 / rj) * SM
    embed({j: local}, L, out=out)
    return out


def tau_third(j: int, eps, xi, alpha, gamma, lam) -> np.ndarray:
    """``(eps_j^2 - xi^2)/eps_j^2`` times :func:`tau_second`."""
    eps = np.asarray(eps, dtype=complex)
    ej = eps[j - 1]
    return (ej**2 - xi**2) / ej**2 * tau_second(j, eps, xi, alpha, gamma, lam)


def _tau_star_from(j: int, eps, alpha, gamma, lam) -> np.ndarray:
    eps = np.asarray(eps)
    L = len(eps)
    ej = eps[j - 1]
    out = np.zeros((1 << L, 1 << L), dtype=complex)
    for k in range(1, L + 1):
        if k == j:
            continue
        ek = eps[k - 1]
        den = ej**2 - ek**2
        _add_pair(out, L, j, k, SZ, SZ, 4 * ej**2 / den)
        flip = 2 * ej * ek / den
        _add_pair(out, L, j, k, SP, SM, flip)
        _add_pair(out, L, j, k, SM, SP, flip)
    embed({j: 2 * alpha * SZ + gamma * ej * SP - lam * ej * SM}, L, out=out)
    return out


def tau_star(j: int, params: ModelParams) -> np.ndarray:
    """Conserved operator ``tau*_j`` of the spin-1/2 open rational Richardson-Gaudin system."""
    if not 1 <= j <= params.length:
        raise IndexError(f"site index {j} out of range 1..{params.length}")
    return _tau_star_from(j, params.eps, params.alpha, params.gamma, params.lam)


def tau_stars(params: ModelParams) -> list[np.ndarray]:
    return [tau_star(j, params) for j in range(1, params.length + 1)]


def gauge_matrix(xi, chain: ChainSpec) -> np.ndarray:
    """Diagonal of ``U = U_1 ... U_L`` with ``U_j = diag(sqrt((eps_j+xi)/(eps_j-xi)), 1)``."""
    eps = chain.eps
    diag = np.ones(chain.dim, dtype=complex)
    for j in range(1, chain.length + 1):
        e = eps[j - 1]
        if abs(e - xi) < 1e-14 or abs(e + xi) < 1e-14:
            raise DomainError(f"gauge factor singular: eps_{j} = +/-xi")
        f = np.sqrt((e + xi) / (e - xi))
        up = sz_diagonal(j, chain.length) > 0
        diag[up] *= f
    return diag


def gauge_transform(op: np.ndarray, xi, chain: ChainSpec) -> np.ndarray:
    """``U op U^-1`` for the product of local diagonal gauge matrices."""
    d = gauge_matrix(xi, chain)
    return op * (d[:, None] / d[None, :])


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    conserved_eigenvalues: np.ndarray | None = None
    max_residual: float = 0.0
    orthonormality_error: float = 0.0
    clusters: tuple[tuple[int, ...], ...] = field(default_factory=tuple)


def _clusters(vals: np.ndarray, tol: float) -> list[list[int]]:
    groups, cur = [], [0]
    for i in range(1, len(vals)):
        if vals[i] - vals[i - 1] < tol:
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    groups.append(cur)
    return groups


def exact_spectrum(op: np.ndarray, commuting_set: Sequence[np.ndarray] | None = None, *,
                   hermitian: bool = True, seed: int = 0,
                   cluster_tol: float = 1e-8) -> SpectrumResult:
    """Full eigendecomposition of a Hermitian operator.

    Eigenvalue clusters closer than ``cluster_tol * ||op||`` are re-diagonalized
    with a seeded random real combination of ``commuting_set``, so the returned
    vectors form a joint eigenbasis.  ``conserved_eigenvalues[m, j]`` is the
    expectation value of ``commuting_set[j]`` in eigenvector ``m``.
    """
    op = np.asarray(op)
    if not hermitian:
        return joint_spectrum([op, *(commuting_set or [])], seed=seed)
    scale = max(np.linalg.norm(op, 2), np.finfo(float).tiny)
    if np.linalg.norm(op - op.conj().T) > 1e-12 * scale:
        raise ValueError("operator flagged Hermitian but op != op^H")
    vals, vecs = np.linalg.eigh(op)
    groups = _clusters(vals, cluster_tol * scale)
    if commuting_set:
        rng = np.random.default_rng(seed)
        coeffs = rng.standard_normal(len(commuting_set))
        combo = sum(c * A for c, A in zip(coeffs, commuting_set))
        combo = 0.5 * (combo + combo.conj().T)
        for g in groups:
            if len(g) < 2:
                continue
            sub = vecs[:, g]
            _, w = np.linalg.eigh(sub.conj().T @ combo @ sub)
            vecs[:, g] = sub @ w
            vals[g] = np.real(np.einsum("im,ij,jm->m", vecs[:, g].conj(), op, vecs[:, g]))
    conserved = None
    if commuting_set:
        conserved = np.stack(
            [np.real(np.einsum("im,ij,jm->m", vecs.conj(), A, vecs)) for A in commuting_set],
            axis=1,
        )
    res = np.linalg.norm(op @ vecs - vecs * vals, axis=0).max()
    ortho = np.linalg.norm(vecs.conj().T @ vecs - np.eye(len(vals)))
    return SpectrumResult(vals, vecs, conserved, float(res), float(ortho),
                          tuple(tuple(g) for g in groups if len(g) > 1))


def joint_spectrum(ops: Sequence[np.ndarray], *, seed: int = 0) -> SpectrumResult:
    """Joint eigenvectors of commuting, diagonalizable (not necessarily normal) matrices.

    Diagonalizes a seeded random combination; ``conserved_eigenvalues[m, j]`` is
    the Rayleigh quotient of ``ops[j]`` (exact for a joint eigenvector).
    ``eigenvalues`` are those of ``ops[0]``.
    """
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal(len(ops)) + 1j * rng.standard_normal(len(ops))
    combo = sum(c * A for c, A in zip(coeffs, ops))
    _, vecs = np.linalg.eig(combo)
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    lam = np.stack([np.einsum("im,ij,jm->m", vecs.conj(), A, vecs) for A in ops], axis=1)
    order = np.lexsort((lam[:, 0].imag, lam[:, 0].real))
    vecs, lam = vecs[:, order], lam[order]
    res = max(np.linalg.norm(A @ vecs - vecs * lam[:, j], axis=0).max() for j, A in enumerate(ops))
    ortho = np.linalg.norm(vecs.conj().T @ vecs - np.eye(vecs.shape[1]))
    return SpectrumResult(lam[:, 0], vecs, lam, float(res), float(ortho))


# --- quasi-classical limit of the transfer matrix -------------------------

RESIDUE_OFFSETS = (1e-4, 5e-5)


def pole_residue(u0, chain: ChainSpec, bp: BoundaryParams,
                 offsets: Sequence[float] = RESIDUE_OFFSETS) -> np.ndarray:
    """Residue of ``t(u)`` at the simple pole ``u0``.

    ``g(r) = r t(u0 + r)`` is symmetrized over ``+-r`` (cancelling odd orders)
    and extrapolated linearly in ``r**2`` to ``r = 0`` from the two offsets.
    """
    r1, r2 = offsets
    if r1 == r2:
        raise ValueError("residue offsets must differ")

    def h(r):
        return 0.5 * r * (transfer_matrix(u0 + r, chain, bp) - transfer_matrix(u0 - r, chain, bp))

    h1, h2 = h(r1), h(r2)
    return (r1**2 * h2 - r2**2 * h1) / (r1**2 - r2**2)


def quasiclassical_coefficient(j: int, chain: ChainSpec, ep: EtaExpansion, eta: float,
                               offsets: Sequence[float] = RESIDUE_OFFSETS) -> np.ndarray:
    """``lim_{u -> eps_j} (u - eps_j) t(u) / eta**2`` at finite ``eta``."""
    ch = chain.with_eta(eta)
    res = pole_residue(ch.eps[j - 1], ch, ep.boundary(eta), offsets)
    return res / eta**2


def _extrapolate_to_zero(xs: Sequence[float], ys: Sequence[np.ndarray]) -> np.ndarray:
    """Value at 0 of the interpolating polynomial through ``(xs, ys)`` (Neville)."""
    xs = list(xs)
    p = [np.array(y, dtype=complex) for y in ys]
    n = len(xs)
    for m in range(1, n):
        for i in range(n - m):
            p[i] = (xs[i + m] * p[i] - xs[i] * p[i + 1]) / (xs[i + m] - xs[i])
    return p[0]


def quasiclassical_check(j: int, chain: ChainSpec, ep: EtaExpansion,
                         eta_samples: Sequence[float],
                         offsets: Sequence[float] = RESIDUE_OFFSETS) -> float:
    """Relative distance between the extrapolated pole coefficient and ``tau_j``.

    For every sample the pole coefficient is evaluated at ``+eta`` and
    ``-eta``; the even part is extrapolated polynomially in ``eta**2`` to
    ``eta = 0``, so two samples already cancel the first three orders.
    """
    etas = [float(e) for e in eta_samples]
    if len(etas) < 2:
        raise ValueError("need at least two eta samples for the extrapolation")
    if any(not 0 < e <= 0.1 for e in etas):
        raise ValueError("eta samples must lie in (0, 0.1]")
    if len(set(etas)) != len(etas):
        raise ValueError("eta samples must be distinct")
    even = [0.5 * (quasiclassical_coefficient(j, chain, ep, e, offsets)
                   + quasiclassical_coefficient(j, chain, ep, -e, offsets)) for e in etas]
    c0 = _extrapolate_to_zero([e * e for e in etas], even)
    tau = tau_general(j, chain, ep)
    return float(np.linalg.norm(c0 - tau) / np.linalg.norm(tau))


# --- operator identity checks ----------------------------------------------

def _rel(A: np.ndarray, B: np.ndarray) -> float:
    return float(np.linalg.norm(A - B) / max(np.linalg.norm(B), np.finfo(float).tiny))


def commutator_residuals(params: ModelParams) -> dict[str, float]:
    """Largest ``||[A, B]|| / (||A|| ||B||)`` over the ``tau*`` pairs and over ``(H, tau*)``."""
    taus = tau_stars(params)
    H = hamiltonian(params)
    norms = [np.linalg.norm(t) for t in taus]
    pair = max((commutator_norm(taus[j], taus[k]) / (norms[j] * norms[k])
                for j in range(len(taus)) for k in range(j)), default=0.0)
    hn = np.linalg.norm(H)
    ham = max(commutator_norm(H, t) / (hn * n) for t, n in zip(taus, norms))
    return {"tau_star_commute": float(pair), "hamiltonian_commute": float(ham)}


def hamiltonian_sum_residual(params: ModelParams) -> float:
    """Relative distance between ``2 alpha H`` and ``sum_j eps_j**-2 tau*_j``."""
    total = sum(e**-2 * t for e, t in zip(params.eps, tau_stars(params)))
    return _rel(total, 2 * params.alpha * hamiltonian(params))


def second_family_residual(j: int, chain: ChainSpec, ep: EtaExpansion) -> float:
    """Relative distance between ``tau_j(-eps)^T`` (psi<->phi, gamma<->lambda, delta<->mu) and ``-tau_j``."""
    tilde = tau_general(j, chain.negated(), ep.swapped()).T
    return _rel(tilde, -tau_general(j, chain, ep))


def gauge_chain_residuals(j: int, eps, xi, alpha, gamma, lam) -> dict[str, float]:
    """Residuals of the diagonal-K reduction chain for site ``j``.

    ``gauge``: ``U tau_first U^-1`` against :func:`tau_second`.
    ``chain``: :func:`tau_third` at ``sqrt(eps**2 + xi**2)`` against ``tau*``.
    ``reduction``: ``tau_general`` with ``psi = phi = delta = mu = 0`` against the semi-diagonal form.
    """
    eps = np.asarray(eps, dtype=complex)
    ch = ChainSpec(tuple(eps), 0.0)
    second = tau_second(j, eps, xi, alpha, gamma, lam)
    gauge = _rel(gauge_transform(tau_first(j, eps, xi, alpha, gamma, lam), xi, ch), second)
    shifted = np.sqrt(eps**2 + xi**2)
    chain = _rel(tau_third(j, shifted, xi, alpha, gamma, lam), _tau_star_from(j, eps, alpha, gamma, lam))
    ep = EtaExpansion(xi=xi, alpha=alpha, gamma=gamma, lam=lam)
    ej = eps[j - 1]
    scaled = ej / ((ej - xi) * (ej + xi)) * tau_general(j, ch, ep)
    red = _rel(scaled, tau_semi_diagonal(j, eps, xi, alpha, gamma, lam))
    return {"gauge": gauge, "chain": chain, "reduction": red}


def u1_residual(params: ModelParams) -> float:
    """``||[H, Sz_total]|| / ||H||``; zero iff ``Gamma = 0``."""
    H = hamiltonian(params)
    return commutator_norm(H, total_sz(params.length)) / float(np.linalg.norm(H))
