"""Root solvers: Newton refinement, Gamma continuation and the Heine-Stieltjes form."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from ..algebra import ChainSpec, EtaExpansion
from ..errors import ConvergenceError, DomainError
from ..manybody import ModelParams
from .equations import (
    bae_jacobian, bae_jacobian_y, bae_residual, bae_residual_general, bae_residual_y,
    energy_from_y, log_derivative_targets, residual_norm,
)
from .roots import BetheRoots, ProjectiveQ, QPolynomial, compose_affine

TARGETS = ("v-form", "y-form", "general")
RESIDUAL_TOL = 1e-12
STEP_TOL = 1e-14
MAX_ITER = 100
MAX_HALVINGS = 20


def _fd_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    n = len(x)
    J = np.zeros((n, n), dtype=complex)
    for m in range(n):
        h = 1e-6 * max(1.0, abs(x[m]))
        e = np.zeros(n, dtype=complex)
        e[m] = h
        J[:, m] = (f(x + e) - f(x - e)) / (2 * h)
    return J


def _safe(f, x):
    try:
        r = f(x)
    except DomainError:
        return None
    return r if np.all(np.isfinite(r)) else None


def newton_solve(f: Callable[[np.ndarray], np.ndarray], jac: Callable[[np.ndarray], np.ndarray],
                 x0: Sequence[complex], *, tol: float = RESIDUAL_TOL, step_tol: float = STEP_TOL,
                 max_iter: int = MAX_ITER, max_halvings: int = MAX_HALVINGS) -> tuple[np.ndarray, float, int]:
    """Damped Newton iteration for a square complex system.

    A step is halved (up to ``max_halvings`` times) while it fails to reduce
    the max-norm residual.  Stops when the residual is below ``tol`` or the
    relative step is below ``step_tol``.  Returns ``(x, residual, iterations)``.
    """
    x = np.array(x0, dtype=complex)
    r = _safe(f, x)
    if r is None:
        raise DomainError("initial point is singular")
    res = residual_norm(r)
    for it in range(max_iter + 1):
        if res < tol:
            return x, res, it
        if it == max_iter:
            break
        J = jac(x)
        try:
            if not np.all(np.isfinite(J)):
                raise np.linalg.LinAlgError("non-finite Jacobian")
            # singularity is judged after column equilibration (unknowns may differ in scale)
            cn = np.linalg.norm(J, axis=0)
            if np.any(cn == 0) or np.linalg.cond(J / cn) > 1e15:
                raise np.linalg.LinAlgError("singular Jacobian")
            dx = np.linalg.solve(J / cn, -r) / cn
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"Jacobian singular at iteration {it}", last=x, residual=res) from exc
        t = 1.0
        for _ in range(max_halvings + 1):
            xn = x + t * dx
            rn = _safe(f, xn)
            if rn is not None and residual_norm(rn) < res:
                break
            t *= 0.5
        else:
            # no decrease possible: accept if already at round-off level
            if np.max(np.abs(dx)) <= step_tol * max(1.0, np.max(np.abs(x))) * 1e2:
                return x, res, it
            raise ConvergenceError(f"line search failed at iteration {it}", last=x, residual=res)
        step = np.max(np.abs(xn - x))
        x, r, res = xn, rn, residual_norm(rn)
        if step <= step_tol * max(1.0, np.max(np.abs(x))):
            return x, res, it + 1
    raise ConvergenceError(f"no convergence in {max_iter} iterations (residual {res:.3g})",
                           last=x, residual=res)


def newton_refine(initial: BetheRoots, params: ModelParams | None = None,
                  target_equation: str = "y-form", *, chain: ChainSpec | None = None,
                  ep: EtaExpansion | None = None, tol: float = RESIDUAL_TOL,
                  max_iter: int = MAX_ITER) -> BetheRoots:
    """Refine roots by damped Newton on the chosen form of the Bethe equations.

    Roots flagged at infinity are held fixed and excluded from the system
    (they drop out of every equation).  ``residual_norm`` of the result is the
    v-form residual for ``'v-form'``/``'y-form'`` and the nine-parameter
    residual for ``'general'``.
    """
    if target_equation not in TARGETS:
        raise ValueError(f"target_equation must be one of {TARGETS}")
    inf = initial.at_infinity
    if target_equation == "general":
        if chain is None or ep is None:
            raise ValueError("general form needs chain and ep")
        if np.any(inf):
            raise DomainError("general form requires finite roots")
        f = lambda x: bae_residual_general(x, chain, ep)
        x, _, _ = newton_solve(f, lambda x: _fd_jacobian(f, x), initial.squared_roots, tol=tol,
                               max_iter=max_iter)
        return initial.with_(squared_roots=x, residual_norm=residual_norm(f(x)), source="newton")
    if params is None:
        raise ValueError("params required")
    x0 = initial.squared_roots[~inf]
    if len(x0) == 0:
        return initial.with_(residual_norm=0.0, source="newton")
    if target_equation == "v-form":
        f = lambda x: bae_residual(x, params)
        x, _, _ = newton_solve(f, lambda x: bae_jacobian(x, params), x0, tol=tol, max_iter=max_iter)
    else:
        f = lambda y: bae_residual_y(y, params)
        y, _, _ = newton_solve(f, lambda y: bae_jacobian_y(y, params), 1 / x0, tol=tol, max_iter=max_iter)
        x = 1 / y
    out = initial.squared_roots.copy()
    out[~inf] = x
    return initial.with_(squared_roots=out, residual_norm=residual_norm(bae_residual(x, params)),
                         source="newton")


# ---------------------------------------------------------------- continuation

ESCAPE_TOL = 1e-6
MIN_STEP = 1e-6
STALL_COLLISION_TOL = 1e-2  # relative root spacing read as an imminent collision
STALL_ZERO_TOL = 1e-4


@dataclass(frozen=True)
class PathPoint:
    Gamma: float
    roots: BetheRoots
    energy: complex
    escaped: tuple[int, ...] = ()
    collisions: tuple[tuple[int, int], ...] = ()


def _y_of(roots: BetheRoots) -> np.ndarray:
    return roots.inverse_form


def _stall_reason(pt: PathPoint) -> str:
    """Likely cause of a stalled continuation step, judged from the last good point."""
    x = pt.roots.squared_roots
    near = pt.roots.collisions(STALL_COLLISION_TOL)
    if near:
        return f"root collision {[list(c) for c in near]} (pair leaving the real axis or merging)"
    if np.min(np.abs(x)) < STALL_ZERO_TOL * np.max(np.abs(x)):
        return "a root passes through v = 0 (y-form singular)"
    return "step rejected without a recognized singularity"


def continuation_solve(params: ModelParams, gamma_path: Sequence[float], seeds: BetheRoots, *,
                       min_step: float = MIN_STEP, tol: float = RESIDUAL_TOL) -> list[PathPoint]:
    """Track one root configuration along a monotone path of ``Gamma`` values.

    Works in ``y = 1/v**2`` so roots escaping to infinity in ``v`` stay finite.
    Between requested path points the step is adaptive: a secant predictor is
    corrected by Newton, and the step is halved on failure.  Points where
    ``|y_i| < 1e-6 max(z**2)`` are flagged as escapes and tracking stops there
    (the y-form is singular at ``y = 0``).  Raises :class:`ConvergenceError`
    (``last`` = last good ``Gamma``, ``path`` = points so far) when the step
    drops below ``min_step``.
    """
    path = [float(g) for g in gamma_path]
    if not path:
        raise ValueError("empty Gamma path")
    d = np.diff(path)
    if len(d) and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("Gamma path must be strictly monotone")
    if np.any(seeds.at_infinity):
        raise DomainError("continuation seeds must be finite")
    zmax2 = max(params.z) ** 2

    def solve_at(G, y0):
        p = replace(params, Gamma=G)
        with np.errstate(all="ignore"):  # trial steps may overflow; rejected by the line search
            y, _, _ = newton_solve(lambda y: bae_residual_y(y, p), lambda y: bae_jacobian_y(y, p), y0,
                                   tol=tol, max_iter=50)
        return y

    def point(G, y):
        p = replace(params, Gamma=G)
        x = 1 / y
        roots = BetheRoots(x, residual_norm=residual_norm(bae_residual(x, p)), source="continuation")
        esc = tuple(int(i) for i in np.nonzero(np.abs(y) < ESCAPE_TOL * zmax2)[0])
        return PathPoint(G, roots, energy_from_y(y, p), esc, tuple(roots.collisions()))

    y = solve_at(path[0], _y_of(seeds))
    out = [point(path[0], y)]
    prev = None  # (Gamma, y) before the current point, for the secant predictor
    g = path[0]
    for target in path[1:]:
        h = target - g
        while g != target:
            h = np.sign(target - g) * min(abs(h), abs(target - g))
            gn = g + h
            pred = y if prev is None else y + (y - prev[1]) * (h / (g - prev[0]))
            try:
                yn = solve_at(gn, pred)
                if np.max(np.abs(yn - y)) > 0.5 * max(1.0, np.max(np.abs(y))):
                    raise ConvergenceError("jump", last=g)
            except (ConvergenceError, DomainError):
                h *= 0.5
                if abs(h) < min_step:
                    last = point(g, y)
                    exc = ConvergenceError(f"continuation stalled at Gamma={g:.17g}: {_stall_reason(last)}",
                                           last=g, residual=last.roots.residual_norm)
                    exc.path = out  # points completed before the stall
                    exc.stalled = last  # last converged point, possibly between path entries
                    raise exc
                continue
            prev, y, g = (g, y), yn, gn
            h *= 1.5
        pt = point(g, y)
        out.append(pt)
        if pt.escaped or pt.collisions:
            break
    return out


# ---------------------------------------------------------------- Heine-Stieltjes

@dataclass(frozen=True)
class HeineStieltjesResult:
    """Converged ``(Q, V)`` pair.

    ``Q`` is projective (see :class:`ProjectiveQ`) and may have roots at
    infinity; ``V`` holds the Van Vleck coefficients in ``x``.  ``residual``
    is the max coefficient residual of the scaled identity.
    """

    Q: ProjectiveQ
    V: np.ndarray
    residual: float
    iterations: int

    @property
    def inverse_roots(self) -> np.ndarray:
        return self.Q.inverse_roots()

    def roots(self, length: int | None = None) -> BetheRoots:
        return BetheRoots.from_inverse(self.Q.inverse_roots(length), source="heine-stieltjes")


def _pad(c, n):
    out = np.zeros(n, dtype=complex)
    out[: len(c)] = c
    return out


def _shift_matrix(c: np.ndarray, ncols: int, n: int) -> np.ndarray:
    """Matrix of ``v -> v * c`` acting on ``ncols`` coefficients of ``v``."""
    M = np.zeros((n, ncols), dtype=complex)
    for k in range(ncols):
        M[k:k + len(c), k] = c
    return M


def _hs_scaled_operator(params: ModelParams, degree: int, center: complex, half: float) -> np.ndarray:
    """Matrix of the Heine-Stieltjes operator on ``Q`` in ``t = (x - center)/half``.

    With ``X = x/half`` and ``P`` rescaled to be monic in ``t`` the identity
    reads ``X P Q'' + ((alpha+1) P - X P') Q' + Vh Q = half gamma lam/4 c_L P**2``
    (``Vh = half**(1-L) V``, ``c_L`` the top coefficient of ``Q``).  The
    returned matrix includes the right side, so the identity is homogeneous in
    the coefficients of ``Q``.
    """
    L = params.length
    tau = (params.eps ** 2 - center) / half
    Ph = npoly.polyfromroots(tau).astype(complex)
    X = np.array([center / half, 1.0], dtype=complex)
    A1 = npoly.polymul(X, Ph)
    A2 = (params.alpha + 1) * Ph - npoly.polymul(X, npoly.polyder(Ph))
    n = L + degree + 1
    M = np.zeros((n, degree + 1), dtype=complex)
    for m in range(degree + 1):
        e = np.zeros(degree + 1)
        e[m] = 1
        M[:, m] = _pad(npoly.polymul(A1, npoly.polyder(e, 2)), n) + _pad(npoly.polymul(A2, npoly.polyder(e)), n)
    if degree == L:
        M[:, L] -= _pad(half * params.gamma * params.lam / 4 * npoly.polymul(Ph, Ph), n)
    return M


def heine_stieltjes_projective(params: ModelParams, initial: ProjectiveQ, *, tol: float = 1e-13,
                               max_iter: int = MAX_ITER) -> HeineStieltjesResult:
    """Newton on the Heine-Stieltjes identity in projective coefficients.

    Unknowns are all ``degree + 1`` coefficients of ``Q`` plus the ``L + 1``
    Van Vleck coefficients, with the normalization ``<c0, c> = 1``; this keeps
    the problem regular when roots run off to infinity.  ``degree < L`` is
    only meaningful when ``gamma * lam = 0`` (closed-model sectors).
    """
    L = params.length
    degree = initial.degree
    if not 0 <= degree <= L:
        raise ValueError(f"degree must lie in 0..{L}")
    # the origin-anchored frame keeps the identity's rows balanced
    center, half = 0j, float(np.max(np.abs(params.eps ** 2)))
    c0 = initial.reframe(center, half).coefficients
    M = _hs_scaled_operator(params, degree, center, half)
    n = M.shape[0]
    V0, *_ = np.linalg.lstsq(_shift_matrix(c0, L + 1, n), -M @ c0, rcond=None)
    w = c0.conj()

    def f(u):
        c, V = u[:degree + 1], u[degree + 1:]
        return np.concatenate([M @ c + _pad(npoly.polymul(V, c), n), [w @ c - 1]])

    def jac(u):
        c, V = u[:degree + 1], u[degree + 1:]
        J = np.zeros((n + 1, degree + L + 2), dtype=complex)
        J[:n, :degree + 1] = M + _shift_matrix(V, degree + 1, n)
        J[:n, degree + 1:] = _shift_matrix(c, L + 1, n)
        J[n, :degree + 1] = w
        return J

    u, res, it = newton_solve(f, jac, np.concatenate([c0, V0]), tol=tol, max_iter=max_iter)
    if res > 1e-10:
        raise ConvergenceError(f"Heine-Stieltjes residual {res:.3g}", last=u, residual=res)
    c, Vh = u[:degree + 1], u[degree + 1:]
    scale = np.linalg.norm(c)
    V = half ** (L - 1) * compose_affine(Vh, center, half)
    return HeineStieltjesResult(ProjectiveQ(c, center, half), V, res / scale, it)


def van_vleck_from_conserved(lambda_star: Sequence[float], params: ModelParams) -> np.ndarray:
    """Van Vleck polynomial (coefficients in ``x``) implied by the ``tau_j*`` eigenvalues.

    At ``x = eps_j^2`` the identity reduces to ``V(eps_j^2) = eps_j^2 P'(eps_j^2) s_j``
    with ``s_j = Q'/Q`` from the conserved eigenvalues, and the top coefficient
    of ``V`` is ``gamma lam/4``, so
    ``V(x) = P(x) [gamma lam/4 + sum_j eps_j^2 s_j/(x - eps_j^2)]``.
    """
    e2 = params.eps ** 2
    s = log_derivative_targets(lambda_star, params)
    V = params.gamma * params.lam / 4 * npoly.polyfromroots(e2).astype(complex)
    for j in range(len(e2)):
        V = npoly.polyadd(V, e2[j] * s[j] * npoly.polyfromroots(np.delete(e2, j)))
    return _pad(V, params.length + 1)


def heine_stieltjes_from_conserved(lambda_star: Sequence[float], params: ModelParams, *,
                                   degree: int | None = None) -> tuple[ProjectiveQ, float]:
    """Linear reconstruction of ``Q`` through the Heine-Stieltjes identity.

    With ``V`` fixed by :func:`van_vleck_from_conserved` the identity is linear
    and homogeneous in the projective coefficients of ``Q``: ``2L + 1``
    equations for ``degree + 1`` unknowns, solved by SVD.  Unlike the
    node-only reconstruction this also constrains ``Q`` at large ``x``, which
    pins down roots close to infinity.  Returns ``(Q, condition_number)``.
    """
    L = params.length
    degree = L if degree is None else degree
    half = float(np.max(np.abs(params.eps ** 2)))
    M = _hs_scaled_operator(params, degree, 0j, half)
    n = M.shape[0]
    # V in t = x/half, times half**(1-L)
    Vh = half ** (1 - L) * compose_affine(van_vleck_from_conserved(lambda_star, params), 0j, 1 / half)
    A = M + _shift_matrix(Vh, degree + 1, n)
    if degree == 0:
        return ProjectiveQ(np.ones(1), 0j, half), 1.0
    _, sv, vh = np.linalg.svd(A)
    cond = float(sv[0] / sv[degree - 1]) if sv[degree - 1] > 0 else float("inf")
    return ProjectiveQ(vh[-1].conj(), 0j, half), cond


def heine_stieltjes_residual(Q: np.ndarray, V: np.ndarray, params: ModelParams) -> np.ndarray:
    """Coefficients of ``x P Q'' + ((alpha+1) P - x P') Q' + V Q - (gamma lam/4) P**2`` in ``x``."""
    P = npoly.polyfromroots(params.eps ** 2).astype(complex)
    c1 = (params.alpha + 1) * P - npoly.polymulx(npoly.polyder(P))
    n = 2 * params.length + 1
    lhs = (_pad(npoly.polymul(npoly.polymulx(P), npoly.polyder(Q, 2)), n)
           + _pad(npoly.polymul(c1, npoly.polyder(Q)), n) + _pad(npoly.polymul(V, Q), n))
    return lhs - _pad(params.gamma * params.lam / 4 * npoly.polymul(P, P), n)


def van_vleck_for(Q: QPolynomial, params: ModelParams) -> tuple[np.ndarray, float]:
    """Least-squares ``V`` for a given monic ``Q``; returns ``(V, max coefficient residual)``.

    ``V`` enters linearly once ``Q`` is fixed.
    """
    L = params.length
    if Q.degree != L:
        raise ValueError(f"Q must have degree {L}, got {Q.degree}")
    n = 2 * L + 1
    base = heine_stieltjes_residual(Q.coefficients, np.zeros(L + 1), params)
    V, *_ = np.linalg.lstsq(_shift_matrix(Q.coefficients, L + 1, n), -base, rcond=None)
    return V, float(np.max(np.abs(heine_stieltjes_residual(Q.coefficients, V, params))))


def _polish_monic(Q: QPolynomial, V: np.ndarray, params: ModelParams,
                  steps: int = 3) -> tuple[QPolynomial, np.ndarray, float]:
    """Newton on the ``L`` free coefficients of monic ``Q`` and the ``L + 1`` of ``V``.

    The identity is bilinear in ``(Q, V)``: ``2L + 1`` equations for ``2L + 1``
    unknowns.  A few plain steps are taken and the best iterate is kept.
    """
    L = params.length
    n = 2 * L + 1
    zero = np.zeros(L + 1)

    def split(u):
        return np.concatenate([u[:L], [1.0]]), u[L:]

    u = np.concatenate([Q.coefficients[:L], V])
    r = heine_stieltjes_residual(*split(u), params)
    best = (residual_norm(r), u)
    for _ in range(steps):
        q, v = split(u)
        J = np.zeros((n, n), dtype=complex)
        off = heine_stieltjes_residual(zero, v, params)
        for m in range(L):
            J[:, m] = heine_stieltjes_residual(np.eye(L + 1)[m], v, params) - off
        J[:, L:] = _shift_matrix(q, L + 1, n)
        try:
            u = u - np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            break
        r = heine_stieltjes_residual(*split(u), params)
        if residual_norm(r) < best[0]:
            best = (residual_norm(r), u)
    q, v = split(best[1])
    return QPolynomial(q), v, best[0]


def heine_stieltjes_solve(params: ModelParams, initial: QPolynomial, *, tol: float = 1e-10,
                          max_iter: int = MAX_ITER) -> tuple[QPolynomial, np.ndarray]:
    """Solve for the monic ``Q`` and Van Vleck ``V`` starting from ``initial``.

    Runs :func:`heine_stieltjes_projective` and renormalizes to monic ``Q``;
    the result satisfies the identity in ``x`` with max coefficient residual
    below ``tol``.
    """
    L = params.length
    if initial.degree != L:
        raise ValueError(f"initial Q must have degree {L}, got {initial.degree}")
    out = heine_stieltjes_projective(params, ProjectiveQ(initial.coefficients, 0j, 1.0), max_iter=max_iter)
    Q = out.Q.monic()
    if Q is None:
        raise ConvergenceError("converged Q lost its leading coefficient (root at infinity)",
                               last=out.Q.coefficients, residual=out.residual)
    # V in the monic normalization is the same polynomial; polish it linearly, then
    # polish (Q, V) jointly in the x basis, which the reframing above loses digits in
    V, res = van_vleck_for(Q, params)
    Q, V, res = _polish_monic(Q, V, params)
    scale = max(1.0, float(np.max(np.abs(heine_stieltjes_residual(Q.coefficients, 0 * V, params)))))
    if res > tol * scale:
        raise ConvergenceError(f"Heine-Stieltjes coefficient residual {res:.3g}", last=Q.coefficients,
                               residual=res)
    return Q, V
