import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from openrg.algebra import (
    PERM, BoundaryParams, ChainSpec, EtaExpansion, corrupted_r_matrix, k_minus, k_plus, lax_inverse_residual,
    lax_local, r_matrix, reflection_minus_residual, reflection_plus_residual, rll_residual, rtrt_residual,
    rtt_residual, structure_report, transfer_commutator_residual, transfer_matrix,
    transfer_transpose_residual, ybe_residual,
)
from openrg.errors import DomainError
from openrg.spins import SM, SP, SZ

from conftest import random_boundary, random_chain, sample_points

ID2 = np.eye(2)
finite = st.floats(-3, 3, allow_nan=False)
cnum = st.builds(complex, finite, finite).filter(lambda z: abs(z) > 0.05)


def _site_op(op, j, L):
    """``op`` on chain site ``j`` (site 1 is the lowest bit, i.e. the last Kronecker factor)."""
    out = np.ones((1, 1))
    for k in range(L, 0, -1):
        out = np.kron(out, op if k == j else ID2)
    return out


def _dense_transfer(u, chain, bp):
    """Independent oracle: Kronecker-product construction on aux (x) chain."""
    L, eta, eps = chain.length, chain.eta, chain.eps
    D = chain.dim

    def lax_full(w, j):
        # I + (eta/w)(P_aj - I/2) with P_aj = I/2 + 2 S_a . S_j
        Sx = (SP + SM) / 2
        Sy = (SP - SM) / 2j
        dot = sum(np.kron(s, _site_op(s, j, L)) for s in (Sx, Sy, SZ))
        return np.eye(2 * D) + (eta / w) * 2 * dot

    M = np.kron(k_plus(u, bp, eta), np.eye(D))
    for j in range(L, 0, -1):
        M = M @ lax_full(u - eps[j - 1], j)
    M = M @ np.kron(k_minus(u, bp, eta), np.eye(D))
    for j in range(1, L + 1):
        M = M @ lax_full(u + eps[j - 1], j)
    return M[:D, :D] + M[D:, D:]


def test_r_matrix_is_u_plus_eta_permutation():
    R = r_matrix(0.7 + 0.1j, 0.3)
    assert np.allclose(R, (0.7 + 0.1j) * np.eye(4) + 0.3 * PERM)
    a, b = np.array([1.0, 2.0]), np.array([3.0, -1.0])
    assert np.allclose(PERM @ np.kron(a, b), np.kron(b, a))


def test_lax_local_matches_permutation_form():
    u, eta = 0.9 - 0.2j, 0.4
    L4 = lax_local(u, eta).reshape(4, 4)
    assert np.allclose(L4, np.eye(4) + eta / u * (PERM - np.eye(4) / 2))


def test_lax_pole_and_transfer_domain_errors(rng):
    chain = random_chain(rng, 2)
    bp = random_boundary(rng)
    with pytest.raises(DomainError):
        lax_local(0.0, 0.1)
    with pytest.raises(DomainError):
        transfer_matrix(chain.eps[0], chain, bp)
    with pytest.raises(DomainError):
        transfer_matrix(-chain.eps[1], chain, bp)
    with pytest.raises(DomainError):
        transfer_matrix(0.5, chain.with_eta(0.0), bp)


@pytest.mark.parametrize("L", [1, 2, 3])
def test_transfer_matrix_matches_kronecker_oracle(rng, L):
    chain = random_chain(rng, L)
    bp = random_boundary(rng)
    for u, _ in sample_points(rng, 3):
        T = transfer_matrix(u, chain, bp)
        ref = _dense_transfer(u, chain, bp)
        assert np.linalg.norm(T - ref) < 1e-12 * np.linalg.norm(ref)


@settings(max_examples=40, deadline=None)
@given(u=cnum, v=cnum, eta=cnum)
def test_ybe_holds_for_any_arguments(u, v, eta):
    assert ybe_residual(u, v, eta) < 1e-13


def test_reflection_equations(rng):
    for _ in range(10):
        bp = random_boundary(rng)
        eta = complex(rng.normal(), rng.normal())
        for u, v in sample_points(rng, 3):
            assert reflection_minus_residual(u, v, bp, eta) < 1e-13
            assert reflection_plus_residual(u, v, bp, eta) < 1e-13


@pytest.mark.parametrize("L", [1, 2, 3, 4])
def test_lattice_identities(rng, L):
    chain = random_chain(rng, L)
    bp = random_boundary(rng)
    for n, (u, v) in enumerate(sample_points(rng, 4)):
        j = 1 + n % L
        assert rll_residual(u, v, j, chain) < 1e-13
        assert lax_inverse_residual(u, j, chain) < 1e-13
        assert rtt_residual(u, v, chain) < 1e-12
        assert rtrt_residual(u, v, chain, bp) < 1e-12
        assert transfer_commutator_residual(u, v, chain, bp) < 1e-12
        assert transfer_transpose_residual(u, chain, bp) < 1e-12


def test_corrupted_r_breaks_ybe():
    bad = corrupted_r_matrix()
    assert ybe_residual(0.4 + 0.3j, -0.7 + 0.2j, 0.5, bad) > 1e-6


def test_structure_report_rows(rng):
    chain = random_chain(rng, 3)
    bp = random_boundary(rng)
    rep = structure_report(chain, bp, sample_points(rng, 6))
    names = {r.name for r in rep.rows}
    assert {"ybe", "reflection_minus", "reflection_plus", "rll", "lax_inverse", "transfer_commute"} <= names
    assert rep.passed and rep.samples == 6
    bad = structure_report(chain, bp, sample_points(rng, 2), r_fn=corrupted_r_matrix())
    assert not bad.row("ybe").passed
    with pytest.raises(ValueError):
        structure_report(chain, bp, [])
    with pytest.raises(DomainError):
        structure_report(chain, bp, [(chain.eps[0], 1.0)])


def test_chain_spec_validation():
    with pytest.raises(ValueError, match="coincide"):
        ChainSpec((1.0, 1.0), 0.1)
    with pytest.raises(ValueError, match="nonzero"):
        ChainSpec((0.0, 1.0), 0.1)
    with pytest.raises(ValueError, match="-eps_k"):
        ChainSpec((1.0, -1.0), 0.1)
    with pytest.raises(ValueError, match="cap"):
        ChainSpec(tuple(range(1, 14)), 0.1)
    ChainSpec(tuple(range(1, 14)), 0.1, max_length=13)


def test_eta_expansion_branch_point():
    with pytest.raises(DomainError):
        EtaExpansion(psi=1.0, phi=-1.0)
    ep = EtaExpansion(xi=0.2, psi=0.1, alpha=0.3, beta=0.4)
    bp = ep.boundary(0.5)
    assert bp == BoundaryParams(xi_minus=-0.2 + 0.2, psi_minus=0.1, xi_plus=0.2 + 0.15, psi_plus=0.1)
