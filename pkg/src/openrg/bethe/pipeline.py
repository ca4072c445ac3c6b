"""Root reconstruction from conserved eigenvalues and end-to-end matching against ED."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..algebra import ChainSpec, EtaExpansion
from ..errors import ConditioningError, ConvergenceError, DomainError
from ..manybody import ModelParams, exact_spectrum, hamiltonian, tau_stars
from ..spins import total_sz
from .equations import (
    bae_jacobian_y, bae_residual, bae_residual_general, bae_residual_y, energy_from_roots, log_derivative_targets,
    log_derivative_targets_general, qc_conserved_eigenvalues, residual_norm,
)
from .roots import COND_CAP, BetheRoots, ProjectiveQ, log_derivative_nullvector
from .solvers import (
    heine_stieltjes_from_conserved, heine_stieltjes_projective, newton_refine, newton_solve,
)

BAE_ACCEPT = 1e-8
ENERGY_ACCEPT = 1e-8
REL_FLOOR = 1e-3  # relative errors use max(|E|, REL_FLOOR * spectral radius)
GAP_ACCEPT = 1e-8  # conserved-eigenvalue gap, relative to max(1, max |lambda*|)


def _finite_residual(roots: BetheRoots, params: ModelParams) -> float:
    try:
        return residual_norm(bae_residual(roots.finite, params))
    except DomainError:
        return float("inf")


def roots_from_conserved(lambda_star: Sequence[float], params: ModelParams, *,
                         degree: int | None = None, cond_cap: float = COND_CAP) -> BetheRoots:
    """Linear reconstruction of the Bethe roots from the ``tau_j*`` eigenvalues.

    Solves ``Q'(eps_j^2) = s_j Q(eps_j^2)`` for the coefficients of ``Q``.
    ``degree`` (default ``L``) lowers the number of finite roots; the rest are
    placed at infinity.  Raises :class:`ConditioningError` above ``cond_cap``.
    """
    s = log_derivative_targets(lambda_star, params)
    q, cond = log_derivative_nullvector(params.eps ** 2, s, degree, cond_cap=cond_cap)
    roots = BetheRoots.from_inverse(q.inverse_roots(params.length), source="reconstruction", condition=cond)
    return roots.with_(residual_norm=_finite_residual(roots, params))


def roots_from_conserved_general(lambdas: Sequence[complex], chain: ChainSpec, ep: EtaExpansion, *,
                                 cond_cap: float = COND_CAP) -> BetheRoots:
    """Reconstruction for the nine-parameter family (all roots finite)."""
    s = log_derivative_targets_general(lambdas, chain, ep)
    q, cond = log_derivative_nullvector(chain.eps ** 2, s, cond_cap=cond_cap)
    y = q.inverse_roots()
    if np.any(np.abs(y) == 0):
        raise ConditioningError("reconstructed roots at infinity", cond=cond)
    x = 1 / y
    try:
        res = residual_norm(bae_residual_general(x, chain, ep))
    except DomainError:
        res = float("inf")
    return BetheRoots(x, residual_norm=res, source="reconstruction", condition=cond)


@dataclass(frozen=True)
class StateSolution:
    roots: BetheRoots
    provenance: tuple[str, ...]
    condition: float
    conserved_gap: float


def _conserved_gap(roots: BetheRoots, lam: np.ndarray, params: ModelParams) -> float:
    try:
        return float(np.max(np.abs(qc_conserved_eigenvalues(roots, params) - lam)))
    except DomainError:
        return float("inf")


def _polish(q: ProjectiveQ, cond: float, params: ModelParams, prov: list[str]) -> BetheRoots:
    """Heine-Stieltjes Newton then root Newton, keeping whichever stage is best."""
    L = params.length
    roots = BetheRoots.from_inverse(q.inverse_roots(L), source="reconstruction", condition=cond)
    roots = roots.with_(residual_norm=_finite_residual(roots, params))
    try:
        hs = heine_stieltjes_projective(params, q)
        cand = BetheRoots.from_inverse(hs.Q.inverse_roots(L), source="heine-stieltjes", condition=cond)
        cand = cand.with_(residual_norm=_finite_residual(cand, params))
        if not cand.residual_norm > roots.residual_norm:
            roots = cand
            prov.append("heine-stieltjes")
    except (ConvergenceError, DomainError, ConditioningError):
        pass
    form = "y-form" if params.Gamma != 0 else "v-form"
    try:
        cand = newton_refine(roots, params, form)
        if not cand.residual_norm > roots.residual_norm:
            roots = cand.with_(condition=cond)
            prov.append("newton")
    except (ConvergenceError, DomainError):
        pass
    return roots


def cluster_polynomial(m: int, A: complex) -> np.ndarray:
    """Monic ``U(u)`` (ascending coefficients) whose roots ``u_i`` seed ``m`` escaping roots.

    For small ``c = Gamma**2/G**2`` escaping roots sit at ``y_i ~ c/u_i``.  At
    leading order the Bethe equations of the cluster say
    ``u U'' + A U' + u**m`` vanishes at every root of ``U``; being monic of
    degree ``m`` it equals ``U``, which fixes ``a_n = (n+1)(n+A) a_{n+1}``.
    ``A = 1 + 1/G + 2 N - L`` with ``N`` the number of non-escaping roots.
    """
    a = np.zeros(m + 1, dtype=complex)
    a[m] = 1
    for n in range(m - 1, -1, -1):
        a[n] = (n + 1) * (n + A) * a[n + 1]
    return a


def _cluster_rescue(roots: BetheRoots, lam: np.ndarray, params: ModelParams) -> BetheRoots | None:
    """Re-seed the ``m`` smallest ``|y|`` from :func:`cluster_polynomial` and run Newton.

    Coefficient-based reconstruction resolves a cluster of ``m`` roots near
    ``y = 0`` only to about ``eps_machine**(1/m)``, which is noise once the
    cluster radius ``~c`` is smaller.  Every ``m`` is tried; the candidate
    that reproduces ``lam`` best wins.
    """
    L = params.length
    if params.Gamma == 0 or np.any(roots.at_infinity):
        return None
    c = params.Gamma ** 2 / params.G ** 2
    y = roots.inverse_form
    order = np.argsort(np.abs(y))
    best = None
    for m in range(1, L + 1):
        u = np.polynomial.polynomial.polyroots(cluster_polynomial(m, 1 + 1 / params.G + 2 * (L - m) - L))
        if np.any(np.abs(u) < 1e-12):
            continue
        y0 = np.concatenate([y[order[m:]], c / u])
        try:
            with np.errstate(all="ignore"):
                ys, _, _ = newton_solve(lambda v: bae_residual_y(v, params),
                                        lambda v: bae_jacobian_y(v, params), y0)
        except (ConvergenceError, DomainError):
            continue
        cand = BetheRoots(1 / ys, source="newton", condition=roots.condition)
        cand = cand.with_(residual_norm=_finite_residual(cand, params))
        gap = _conserved_gap(cand, lam, params)
        if best is None or gap < best[0]:
            best = (gap, cand)
    return None if best is None else best[1]


def solve_state(lambda_star: Sequence[float], params: ModelParams, *,
                degree: int | None = None, cond_cap: float = COND_CAP,
                residual_tol: float = BAE_ACCEPT) -> StateSolution:
    """Roots of one eigenstate from its ``tau_j*`` eigenvalues.

    Two linear seeds are built: the node conditions ``Q'(eps_j^2) = s_j Q(eps_j^2)``
    and the full Heine-Stieltjes identity with ``V`` fixed by the same
    eigenvalues.  Each seed is polished by Newton on the projective
    Heine-Stieltjes coefficients and then by Newton on the roots.  Among seeds
    whose Bethe residual is below ``residual_tol`` the one reproducing the
    conserved eigenvalues best is returned; otherwise the smallest residual.
    If that fails (residual or conserved gap), a cluster of roots escaping
    towards ``y = 0`` is re-seeded by :func:`_cluster_rescue`.
    Raises :class:`ConditioningError` only if no seed could be built.
    """
    L = params.length
    degree = L if degree is None else degree
    lam = np.asarray(lambda_star, dtype=float)
    seeds = []
    errors = []
    try:
        seeds.append(("reconstruction", *log_derivative_nullvector(
            params.eps ** 2, log_derivative_targets(lam, params), degree, cond_cap=cond_cap)))
    except ConditioningError as exc:
        errors.append(exc)
    q, cond = heine_stieltjes_from_conserved(lam, params, degree=degree)
    if cond <= cond_cap:
        seeds.append(("hs-linear", q, cond))
    if not seeds:
        raise errors[0] if errors else ConditioningError("no usable seed", cond=cond)
    best = None
    raw = []
    for name, q, cond in seeds:
        raw.append(BetheRoots.from_inverse(q.inverse_roots(L), source="reconstruction", condition=cond))
        prov = [name]
        try:
            roots = _polish(q, cond, params, prov)
        except ConditioningError:
            continue
        gap = _conserved_gap(roots, lam, params)
        key = (not roots.residual_norm < residual_tol, gap if roots.residual_norm < residual_tol
               else roots.residual_norm)
        if best is None or key < best[0]:
            best = (key, StateSolution(roots, tuple(prov), cond, gap))
    if best is None:
        raise ConditioningError("all seeds failed root extraction", cond=float("inf"))
    sol = best[1]
    gap_tol = GAP_ACCEPT * max(1.0, float(np.max(np.abs(lam))))
    if sol.roots.residual_norm < residual_tol and sol.conserved_gap < gap_tol:
        return sol
    for start in (sol.roots, *raw):
        cand = _cluster_rescue(start, lam, params)
        if cand is None or not cand.residual_norm < residual_tol:
            continue
        gap = _conserved_gap(cand, lam, params)
        if gap < gap_tol or (not sol.roots.residual_norm < residual_tol) or gap < sol.conserved_gap:
            sol = StateSolution(cand, sol.provenance + ("cluster-rescue",), sol.condition, gap)
        if gap < gap_tol:
            break
    return sol


@dataclass(frozen=True)
class StateRecord:
    index: int
    energy_ed: float
    energy_bethe: complex
    abs_error: float
    rel_error: float
    bae_residual: float
    roots: BetheRoots | None
    provenance: tuple[str, ...]
    conserved_ed: np.ndarray
    conserved_gap: float  # max |lambda*(roots) - lambda*(ED)|
    finite_roots: int
    matched: bool
    diagnostics: str = ""


@dataclass(frozen=True)
class SpectrumMatchReport:
    params: ModelParams
    seed: int
    mode: str  # "full" or "sector" (Gamma = 0 fallback)
    records: tuple[StateRecord, ...]
    energy_tol: float = ENERGY_ACCEPT
    residual_tol: float = BAE_ACCEPT
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def max_rel_error(self) -> float:
        return max((r.rel_error for r in self.records), default=0.0)

    @property
    def max_residual(self) -> float:
        return max((r.bae_residual for r in self.records), default=0.0)

    @property
    def matched_count(self) -> int:
        return sum(r.matched for r in self.records)

    @property
    def unmatched(self) -> list[StateRecord]:
        return [r for r in self.records if not r.matched]

    @property
    def passed(self) -> bool:
        return self.matched_count == len(self.records) == self.params.dim


def spectrum_match(params: ModelParams, *, seed: int = 0, energy_tol: float = ENERGY_ACCEPT,
                   residual_tol: float = BAE_ACCEPT, cond_cap: float = COND_CAP) -> SpectrumMatchReport:
    """Match every ED eigenstate of ``H`` to Bethe roots and an energy.

    ED of ``H`` with the ``tau_j*`` as commuting set gives the conserved
    eigenvalues of each state; :func:`solve_state` turns them into roots and
    :func:`energy_from_roots` into an energy.  At ``Gamma = 0`` the u(1)
    symmetry is used instead: each state sits in a magnetization sector with
    ``N = M + L/2`` finite roots and the remaining ``L - N`` at infinity.
    Failures are recorded per state, never raised.
    """
    L = params.length
    taus = tau_stars(params)
    H = hamiltonian(params)
    sector = params.Gamma == 0
    commuting = taus + ([total_sz(L)] if sector else [])
    ed = exact_spectrum(H, commuting, seed=seed)
    spectral = float(np.max(np.abs(ed.eigenvalues)))
    floor = REL_FLOOR * max(spectral, np.finfo(float).tiny)
    notes = []
    if sector:
        notes.append("Gamma = 0: u(1)-sector mode, finite-root count from total Sz")
    records = []
    for m in range(params.dim):
        lam = ed.conserved_eigenvalues[m, :L]
        E = float(ed.eigenvalues[m])
        degree = int(round(ed.conserved_eigenvalues[m, L] + L / 2)) if sector else L
        diag = []
        try:
            sol = solve_state(lam, params, degree=degree, cond_cap=cond_cap, residual_tol=residual_tol)
        except (ConditioningError, DomainError, ConvergenceError, ValueError) as exc:
            records.append(StateRecord(m, E, complex("nan"), float("inf"), float("inf"), float("inf"),
                                       None, (), lam, float("inf"), degree, False,
                                       f"{type(exc).__name__}: {exc}"))
            continue
        roots = sol.roots
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            try:
                Eb = energy_from_roots(roots, params)
            except DomainError as exc:
                Eb = complex("nan")
                diag.append(f"energy: {exc}")
        err = abs(Eb - E) if np.isfinite(Eb) else float("inf")
        rel = err / max(abs(E), floor)
        gap = sol.conserved_gap
        res = roots.residual_norm
        ok = bool(rel < energy_tol and res < residual_tol)
        if not ok:
            if res >= residual_tol:
                diag.append(f"BAE residual {res:.3g}")
            if rel >= energy_tol:
                diag.append(f"energy mismatch {rel:.3g}")
        if roots.collisions():
            diag.append(f"near-collision {roots.collisions()}")
        if roots.near_poles(params.eps):
            diag.append(f"near pole {roots.near_poles(params.eps)}")
        if abs(Eb.imag) > 1e-8:
            diag.append(f"Im E = {Eb.imag:.3g}")
        records.append(StateRecord(m, E, Eb, err, rel, res, roots, sol.provenance, lam, gap,
                                   int(np.sum(~roots.at_infinity)), ok, "; ".join(diag)))
    return SpectrumMatchReport(params, seed, "sector" if sector else "full", tuple(records),
                               energy_tol, residual_tol, tuple(notes))
