"""Spin-1/2 operators on the 2**L dimensional chain space.

Basis convention
----------------
Basis states are integers ``b`` in ``[0, 2**L)``.  Site ``j`` (1-based) is
stored in bit ``j - 1`` of ``b`` (site 1 is the least-significant bit) and the
bit value is the local index into the 2x2 matrices below, whose index 0 is
spin up (``S^z = +1/2``) and index 1 is spin down.  With this choice the
single-site matrices are embedded verbatim, so for ``L = 1`` ``Sz`` is
``diag(1/2, -1/2)`` and ``S+`` is ``[[0, 1], [0, 0]]``.

Operators are dense ``complex128`` arrays; embedding is done with bit
arithmetic instead of Kronecker chains.
"""

from __future__ import annotations

from itertools import product
from typing import Mapping

import numpy as np

SZ = np.array([[0.5, 0.0], [0.0, -0.5]], dtype=complex)
SP = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SM = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
ID2 = np.eye(2, dtype=complex)

LOCAL = {"Sz": SZ, "S+": SP, "S-": SM, "I": ID2}

_ALIASES = {
    "sz": "Sz", "z": "Sz", "s+": "S+", "sp": "S+", "+": "S+",
    "s-": "S-", "sm": "S-", "-": "S-", "i": "I", "id": "I",
}


def local_matrix(kind: str) -> np.ndarray:
    """Return the 2x2 matrix for ``kind`` (``'Sz'``, ``'S+'``, ``'S-'`` or ``'I'``)."""
    key = kind if kind in LOCAL else _ALIASES.get(kind.lower())
    if key is None:
        raise ValueError(f"unknown spin operator kind {kind!r}")
    return LOCAL[key]


def _check_site(j: int, L: int) -> None:
    if not 1 <= j <= L:
        raise IndexError(f"site index {j} out of range 1..{L}")


def sz_diagonal(j: int, L: int) -> np.ndarray:
    """Diagonal of ``S_j^z`` as a real vector of length ``2**L``."""
    _check_site(j, L)
    b = np.arange(1 << L)
    return 0.5 - ((b >> (j - 1)) & 1)


def embed(factors: Mapping[int, np.ndarray], L: int, out: np.ndarray | None = None,
          coeff: complex = 1.0) -> np.ndarray:
    """Embed a product of single-site 2x2 matrices on distinct sites.

    ``factors`` maps 1-based site index to a 2x2 matrix.  If ``out`` is given
    the term ``coeff * (product)`` is accumulated into it in place.
    """
    D = 1 << L
    if out is None:
        out = np.zeros((D, D), dtype=complex)
    sites = sorted(factors)
    for j in sites:
        _check_site(j, L)
    if not sites:
        out[np.diag_indices(D)] += coeff
        return out
    b = np.arange(D)
    shifts = [j - 1 for j in sites]
    sitemask = 0
    for s in shifts:
        sitemask |= 1 << s
    rest = b[(b & sitemask) == 0]
    for cin in product((0, 1), repeat=len(sites)):
        pattern = sum(c << s for c, s in zip(cin, shifts))
        cols = rest | pattern
        for cout in product((0, 1), repeat=len(sites)):
            amp = coeff
            for j, ci, co in zip(sites, cin, cout):
                amp = amp * factors[j][co, ci]
                if amp == 0:
                    break
            if amp == 0:
                continue
            flip = sum((ci ^ co) << s for ci, co, s in zip(cin, cout, shifts))
            out[cols ^ flip, cols] += amp
    return out


def site_operator(kind: str, j: int, L: int) -> np.ndarray:
    """Single-site spin operator ``S_j^kind`` on the full chain."""
    return embed({j: local_matrix(kind)}, L)


def two_site(kind_a: str, j: int, kind_b: str, k: int, L: int) -> np.ndarray:
    """The product ``S_j^a S_k^b``; for ``j == k`` the local matrices are multiplied."""
    a, b = local_matrix(kind_a), local_matrix(kind_b)
    if j == k:
        return embed({j: a @ b}, L)
    return embed({j: a, k: b}, L)


def apply_local_right(M: np.ndarray, m: np.ndarray, j: int, L: int) -> np.ndarray:
    """Return ``M @ O`` where ``O`` is the 2x2 matrix ``m`` embedded at site ``j``.

    Costs O(D**2) rather than a dense O(D**3) product.
    """
    D = 1 << L
    low = 1 << (j - 1)
    M4 = M.reshape(M.shape[0], D // (2 * low), 2, low)
    return np.einsum("hpcl,cd->hpdl", M4, m).reshape(M.shape[0], D)


def apply_local_left(m: np.ndarray, j: int, M: np.ndarray, L: int) -> np.ndarray:
    """Return ``O @ M`` where ``O`` is ``m`` embedded at site ``j``."""
    D = 1 << L
    low = 1 << (j - 1)
    M4 = M.reshape(D // (2 * low), 2, low, M.shape[1])
    return np.einsum("dc,pclh->pdlh", m, M4).reshape(D, M.shape[1])


def total_sz(L: int) -> np.ndarray:
    """``sum_k S_k^z`` as a dense diagonal matrix."""
    return np.diag(sum(sz_diagonal(j, L) for j in range(1, L + 1)).astype(complex))
