"""Bethe root containers, root-polynomial utilities and linear reconstruction.

Roots are handled through their squares ``x_i = v_i**2`` (every formula in
this package depends on ``v_i`` only through ``v_i**2``) or equivalently
through ``y_i = 1 / x_i``.  A root with ``y_i = 0`` sits at infinity in ``v``
and is stored as ``x_i = inf``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import chebyshev as C

from ..errors import ConditioningError

INFINITY_TOL = 1e-10
COLLISION_TOL = 1e-9
COND_CAP = 1e12

SOURCES = ("reconstruction", "newton", "continuation", "heine-stieltjes", "full-eta", "given")


@dataclass(frozen=True)
class BetheRoots:
    """Squared Bethe roots of one eigenstate plus diagnostics.

    ``squared_roots`` holds ``v_i**2`` (``inf`` for a root at infinity).
    """

    squared_roots: np.ndarray
    residual_norm: float = float("nan")
    source: str = "given"
    condition: float = float("nan")

    def __post_init__(self):
        x = np.array(self.squared_roots, dtype=complex).reshape(-1)
        object.__setattr__(self, "squared_roots", x)
        if self.source not in SOURCES:
            raise ValueError(f"unknown root source {self.source!r}")

    @classmethod
    def from_inverse(cls, y: Sequence[complex], **kw) -> "BetheRoots":
        y = np.asarray(y, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.where(np.abs(y) < INFINITY_TOL, np.inf + 0j, 1.0 / np.where(y == 0, 1, y))
        return cls(x, **kw)

    @property
    def length(self) -> int:
        return len(self.squared_roots)

    @property
    def inverse_form(self) -> np.ndarray:
        x = self.squared_roots
        out = np.zeros_like(x)
        finite = np.isfinite(x)
        out[finite] = 1.0 / x[finite]
        return out

    @property
    def at_infinity(self) -> np.ndarray:
        """True where ``|y_i| < 1e-10`` (root at infinity in ``v``)."""
        return np.abs(self.inverse_form) < INFINITY_TOL

    @property
    def finite(self) -> np.ndarray:
        """The finite squared roots."""
        return self.squared_roots[~self.at_infinity]

    def collisions(self, tol: float = COLLISION_TOL) -> list[tuple[int, int]]:
        x = self.squared_roots
        out = []
        for i in range(len(x)):
            for k in range(i):
                if np.isfinite(x[i]) and np.isfinite(x[k]):
                    scale = max(1.0, abs(x[i]), abs(x[k]))
                    if abs(x[i] - x[k]) < tol * scale:
                        out.append((k, i))
        return out

    def near_poles(self, eps: Sequence[complex], tol: float = COLLISION_TOL) -> list[tuple[int, int]]:
        """Pairs ``(i, l)`` with ``v_i**2`` within ``tol`` of ``eps_l**2``."""
        e2 = np.asarray(eps, dtype=complex) ** 2
        out = []
        for i, xi in enumerate(self.squared_roots):
            for l, el in enumerate(e2):
                if np.isfinite(xi) and abs(xi - el) < tol * max(1.0, abs(el)):
                    out.append((i, l))
        return out

    def with_(self, **changes) -> "BetheRoots":
        data = dict(squared_roots=self.squared_roots, residual_norm=self.residual_norm,
                    source=self.source, condition=self.condition)
        data.update(changes)
        return BetheRoots(**data)


@dataclass(frozen=True)
class QPolynomial:
    """Monic ``Q(x) = prod_i (x - v_i**2)``; ``coefficients`` in ascending powers."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex).reshape(-1)
        if len(c) < 1 or abs(c[-1] - 1) > 1e-12:
            raise ValueError("QPolynomial must be monic")
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def from_roots(cls, roots: Sequence[complex]) -> "QPolynomial":
        return cls(np.polynomial.polynomial.polyfromroots(np.asarray(roots, dtype=complex)))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def roots(self) -> np.ndarray:
        return polynomial_roots(self.coefficients)

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coefficients)

    def reexpansion_error(self) -> float:
        """Max coefficient difference after re-expanding the extracted roots."""
        back = np.polynomial.polynomial.polyfromroots(self.roots())
        return float(np.max(np.abs(back - self.coefficients)))


def polynomial_roots(coeffs: Sequence[complex], polish: int = 1) -> np.ndarray:
    """Roots of ``sum_m c_m x**m`` via companion-matrix eigenvalues plus Newton polish."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "b")
    if len(c) <= 1:
        return np.zeros(0, dtype=complex)
    nzero = 0
    while c[0] == 0:
        c = c[1:]
        nzero += 1
    r = np.polynomial.polynomial.polyroots(c).astype(complex) if len(c) > 1 else np.zeros(0, complex)
    dc = np.polynomial.polynomial.polyder(c)
    for _ in range(polish):
        p = np.polynomial.polynomial.polyval(r, c)
        dp = np.polynomial.polynomial.polyval(r, dc)
        ok = dp != 0
        step = np.zeros_like(r)
        step[ok] = p[ok] / dp[ok]
        # accept the polish only where it does not increase |Q|
        trial = r - step
        better = np.abs(np.polynomial.polynomial.polyval(trial, c)) <= np.abs(p)
        r = np.where(better, trial, r)
    return np.concatenate([np.zeros(nzero, dtype=complex), r])


@dataclass(frozen=True)
class ProjectiveQ:
    """``Q`` up to normalization, as power-series coefficients in ``t = (x - center)/half``.

    A vanishing top coefficient means a root at infinity, so no monic
    normalization is forced on the representation.
    """

    coefficients: np.ndarray
    center: complex
    half: float

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex).reshape(-1)
        object.__setattr__(self, "coefficients", c / np.linalg.norm(c))

    @classmethod
    def for_nodes(cls, nodes: Sequence[complex], coefficients: Sequence[complex]) -> "ProjectiveQ":
        center, half = affine_frame(nodes)
        return cls(coefficients, center, half)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def inverse_roots(self, length: int | None = None) -> np.ndarray:
        """``y = 1/x`` for every root, zeros for roots at infinity, padded to ``length``."""
        # roots in w = 1/t, so small top coefficients give small w instead of huge t
        w = polynomial_roots(self.coefficients[::-1])
        den = self.center * w + self.half
        # exact t = 0 roots (w = inf) sit at x = center
        y = np.concatenate([w / den, np.full(self.degree - len(w), 1 / self.center if self.center else np.inf)])
        if not np.all(np.isfinite(y)):
            raise ConditioningError("root at x = 0 (v = 0)", cond=float("inf"))
        length = self.degree if length is None else length
        return np.concatenate([y, np.zeros(length - len(y), dtype=complex)])

    def reframe(self, center: complex, half: float) -> "ProjectiveQ":
        """Same polynomial expressed in ``(x - center)/half``."""
        # x = self.center + self.half * t  and  x = center + half * t'
        a = (center - self.center) / self.half
        b = half / self.half
        return ProjectiveQ(compose_affine(self.coefficients, -a / b, 1 / b), center, half)

    def x_coefficients(self) -> np.ndarray:
        """Coefficients in ``x`` (same normalization)."""
        return compose_affine(self.coefficients, self.center, self.half)

    def monic(self) -> "QPolynomial | None":
        q = self.x_coefficients()
        if abs(self.coefficients[-1]) < 1e-14:
            return None
        return QPolynomial(q / q[-1])


def affine_frame(nodes: Sequence[complex]) -> tuple[complex, float]:
    """Center and half-width mapping the nodes into the unit disc."""
    x = np.asarray(nodes, dtype=complex)
    if len(x) == 1:
        return complex(0.0), float(abs(x[0])) or 1.0
    center = 0.5 * (x[np.argmin(x.real)] + x[np.argmax(x.real)])
    half = float(np.max(np.abs(x - center)))
    return complex(center), half or 1.0


def compose_affine(coeffs: Sequence[complex], center: complex, half: float) -> np.ndarray:
    """Coefficients in ``x`` of ``sum_m c_m ((x - center)/half)**m``."""
    lin = np.array([-center / half, 1 / half], dtype=complex)
    out = np.zeros(len(coeffs), dtype=complex)
    power = np.ones(1, dtype=complex)
    for c in coeffs:
        out[: len(power)] += c * power
        power = np.polynomial.polynomial.polymul(power, lin)
    return out


def log_derivative_system(nodes: Sequence[complex], targets: Sequence[complex],
                          degree: int) -> tuple[np.ndarray, complex, float]:
    """Chebyshev-basis matrix of the conditions ``Q'(x_j) - s_j Q(x_j) = 0``.

    Columns act on Chebyshev coefficients in ``t = (x - center)/half``.
    """
    x = np.asarray(nodes, dtype=complex)
    s = np.asarray(targets, dtype=complex)
    center, half = affine_frame(x)
    t = (x - center) / half
    A = np.zeros((len(x), degree + 1), dtype=complex)
    for m in range(degree + 1):
        e = np.zeros(degree + 1)
        e[m] = 1
        A[:, m] = C.chebval(t, C.chebder(e)) / half - s * C.chebval(t, e)
    return A, center, half


def log_derivative_nullvector(nodes: Sequence[complex], targets: Sequence[complex],
                              degree: int | None = None, *,
                              cond_cap: float = COND_CAP) -> tuple[ProjectiveQ, float]:
    """Recover ``Q`` (up to normalization) with ``Q'(x_j)/Q(x_j) = s_j``.

    The coefficient vector is the null vector of the homogeneous system,
    found by SVD, so a vanishing leading coefficient (a root at infinity) is
    harmless.  With ``degree < len(nodes)`` the system is overdetermined and
    the smallest right singular vector is its least-squares solution.

    Returns ``(Q, condition_number)``; the condition number is the ratio of
    the largest to the ``degree``-th singular value.
    """
    n = len(nodes)
    degree = n if degree is None else degree
    if not 0 <= degree <= n:
        raise ValueError(f"degree must lie in 0..{n}")
    if degree == 0:
        return ProjectiveQ.for_nodes(nodes, [1.0]), 1.0
    A, center, half = log_derivative_system(nodes, targets, degree)
    _, sv, vh = np.linalg.svd(A)
    smallest = sv[degree - 1]
    cond = float(sv[0] / smallest) if smallest > 0 else float("inf")
    if not np.isfinite(cond) or cond > cond_cap:
        raise ConditioningError(f"reconstruction system ill-conditioned (cond={cond:.3g})", cond=cond)
    return ProjectiveQ(C.cheb2poly(vh[-1].conj()), center, half), cond


def roots_from_log_derivative(nodes: Sequence[complex], targets: Sequence[complex],
                              degree: int | None = None, *,
                              cond_cap: float = COND_CAP) -> tuple[np.ndarray, float]:
    """Roots (in ``y = 1/x`` form) of the ``Q`` recovered by :func:`log_derivative_nullvector`.

    Missing roots for ``degree < len(nodes)`` are returned as exact zeros.
    Returns ``(y_roots, condition_number)``.
    """
    q, cond = log_derivative_nullvector(nodes, targets, degree, cond_cap=cond_cap)
    return q.inverse_roots(len(nodes)), cond
