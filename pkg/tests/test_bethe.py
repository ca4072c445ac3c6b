import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from openrg.algebra import BoundaryParams, ChainSpec, EtaExpansion, transfer_matrix
from openrg.bethe import (
    BetheRoots, ProjectiveQ, QPolynomial, bae_from_pole, bae_full_quasiclassical, bae_full_residual,
    bae_jacobian, bae_jacobian_y, bae_residual, bae_residual_general, bae_residual_y, continuation_solve,
    energy_from_roots, full_eta_energies_single, heine_stieltjes_residual, heine_stieltjes_solve,
    lambda_full, lambda_full_residue, newton_refine, pole_limit, polynomial_roots, qc_conserved_eigenvalue_general,
    qc_conserved_eigenvalues, roots_from_conserved, roots_from_conserved_general, solve_full_bae_single,
    solve_state, spectrum_match, van_vleck_for,
)
from openrg.bethe.equations import conserved_weighted_sum, weighted_sum_closed_form
from openrg.bethe.pipeline import cluster_polynomial
from openrg.errors import ConvergenceError, DomainError
from openrg.manybody import ModelParams, exact_spectrum, hamiltonian, joint_spectrum, tau_general, tau_stars

from conftest import cplx, fixture_params, random_expansion

warnings.simplefilter("ignore", RuntimeWarning)


def _ed(p: ModelParams, seed: int = 0):
    return exact_spectrum(hamiltonian(p), tau_stars(p), seed=seed)


def _solved_states(p: ModelParams):
    ed = _ed(p)
    return ed, [solve_state(ed.conserved_eigenvalues[m], p) for m in range(p.dim)]


def _same_set(a, b, tol) -> bool:
    """Order-free comparison of two root lists."""
    a, b = list(np.asarray(a)), list(np.asarray(b))
    if len(a) != len(b):
        return False
    for v in a:
        k = int(np.argmin([abs(v - w) for w in b]))
        if abs(v - b[k]) > tol:
            return False
        b.pop(k)
    return True


def _fd(f, x, h=1e-7):
    J = np.zeros((len(x), len(x)), dtype=complex)
    for m in range(len(x)):
        dx = np.zeros(len(x), dtype=complex)
        dx[m] = h * max(1.0, abs(x[m]))
        J[:, m] = (f(x + dx) - f(x - dx)) / (2 * dx[m])
    return J


# ---------------------------------------------------------------- roots and polynomials

def test_bethe_roots_infinity_and_flags():
    r = BetheRoots.from_inverse([0.5, 0.0, 2.0])
    assert r.at_infinity.tolist() == [False, True, False]
    assert np.allclose(r.finite, [2.0, 0.5])
    close = BetheRoots([1.0, 1.0 + 1e-12, 3.0])
    assert close.collisions() == [(0, 1)]
    assert BetheRoots([0.25 + 1e-12]).near_poles([0.5]) == [(0, 0)]
    with pytest.raises(ValueError):
        BetheRoots([1.0], source="guess")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=8))
def test_q_polynomial_reexpansion(pairs):
    roots = np.array([complex(a, b) for a, b in pairs])
    # multiple roots are conditioned like eps**(1/m); keep them apart
    assume(all(abs(r - s) > 0.1 for i, r in enumerate(roots) for s in roots[:i]))
    Q = QPolynomial.from_roots(roots)
    assert Q.degree == len(roots)
    assert Q.reexpansion_error() < 1e-9 * max(1.0, np.max(np.abs(Q.coefficients)))
    assert np.max(np.abs(Q(Q.roots()))) < 1e-8 * max(1.0, np.max(np.abs(Q.coefficients)))


def test_polynomial_roots_and_monic_check():
    r = polynomial_roots([6.0, -5.0, 1.0])
    assert np.allclose(np.sort(r.real), [2.0, 3.0])
    assert np.allclose(polynomial_roots([0.0, 0.0, 1.0]), [0.0, 0.0])
    with pytest.raises(ValueError):
        QPolynomial([1.0, 2.0])


def test_projective_q_handles_roots_at_infinity():
    # Q(x) = (x - 2) * (1 - 0 x): degree 2 with one root at infinity
    q = ProjectiveQ(np.array([-2.0, 1.0, 0.0]), 0j, 1.0)
    y = q.inverse_roots()
    assert np.allclose(np.sort_complex(y), [0.0, 0.5])
    assert q.monic() is None
    q2 = ProjectiveQ(np.array([6.0, -5.0, 1.0]), 0j, 1.0).reframe(1.0, 3.0)
    assert np.allclose(q2.monic().coefficients, [6.0, -5.0, 1.0])


# ---------------------------------------------------------------- equations

def test_residual_forms_agree(rng):
    p = fixture_params(4)
    x = cplx(rng, 4) + 2.0
    v = bae_residual(x, p)
    assert np.allclose(bae_residual_y(1 / x, p), x * v)
    reduced = bae_residual_general(x, p.chain(), p.eta_expansion())
    assert np.allclose(reduced, x * v)


def test_jacobians_match_finite_differences(rng):
    p = fixture_params(3)
    x = cplx(rng, 3) + 1.5
    assert np.allclose(bae_jacobian(x, p), _fd(lambda t: bae_residual(t, p), x), rtol=1e-6, atol=1e-6)
    y = 1 / x
    assert np.allclose(bae_jacobian_y(y, p), _fd(lambda t: bae_residual_y(t, p), y), rtol=1e-6, atol=1e-6)


def test_equation_domain_errors():
    p = fixture_params(2)
    with pytest.raises(DomainError):
        bae_residual([1.0, 1.0], p)
    with pytest.raises(DomainError):
        bae_residual([p.eps[0] ** 2, 3.0], p)
    with pytest.raises(DomainError):
        bae_residual([0.0, 3.0], p)
    with pytest.raises(DomainError):
        bae_residual_y([0.0, 0.5], p)


def test_sum_rule_holds_off_shell(rng):
    for L in (1, 3, 5):
        p = fixture_params(L)
        x = cplx(rng, L)
        assert abs(conserved_weighted_sum(x, p) - weighted_sum_closed_form(x, p)) < 1e-12 * abs(
            weighted_sum_closed_form(x, p))


@pytest.mark.parametrize("L", [2, 3, 4])
def test_consistency_triangle_and_reality(L):
    p = fixture_params(L)
    ed, sols = _solved_states(p)
    for m, sol in enumerate(sols):
        lam = ed.conserved_eigenvalues[m]
        assert sol.roots.residual_norm < 1e-8
        assert np.max(np.abs(qc_conserved_eigenvalues(sol.roots, p) - lam)) < 1e-8
        E = energy_from_roots(sol.roots, p)
        assert abs(E.imag) < 1e-8
        assert abs(E.real - ed.eigenvalues[m]) < 1e-8 * max(1.0, abs(ed.eigenvalues[m]))
        # sum rule on shell: (1/2 alpha) sum eps^-2 lambda* = E
        total = np.sum(qc_conserved_eigenvalues(sol.roots, p) / p.eps ** 2) / (2 * p.alpha)
        assert abs(total - E) < 1e-8 * max(1.0, abs(E))
        x = sol.roots.squared_roots
        assert _same_set(x, x.conj(), 1e-8 * np.max(np.abs(x)))


def test_energy_warns_on_large_residual():
    p = fixture_params(1)
    with pytest.warns(RuntimeWarning):
        energy_from_roots(BetheRoots([2.0], residual_norm=1e-3), p)
    with pytest.raises(ValueError):
        energy_from_roots(BetheRoots([2.0, 3.0]), p)


def test_reconstruction_single_state():
    p = fixture_params(3)
    ed = _ed(p)
    roots = roots_from_conserved(ed.conserved_eigenvalues[0], p)
    assert roots.source == "reconstruction"
    assert roots.residual_norm < 1e-6


def test_general_family_reconstruction(rng):
    chain = ChainSpec((0.9 + 0.1j, 1.6 - 0.2j), 0.0)
    ep = random_expansion(rng)
    taus = [tau_general(j, chain, ep) for j in (1, 2)]
    js = joint_spectrum(taus, seed=1)
    for m in range(chain.dim):
        lam = js.conserved_eigenvalues[m]
        roots = roots_from_conserved_general(lam, chain, ep)
        roots = newton_refine(roots, target_equation="general", chain=chain, ep=ep)
        assert roots.residual_norm < 1e-8
        back = [qc_conserved_eigenvalue_general(j, roots, chain, ep) for j in (1, 2)]
        assert np.allclose(back, lam, atol=1e-8)


# ---------------------------------------------------------------- solvers

@pytest.mark.parametrize("form", ["v-form", "y-form"])
def test_newton_refine_recovers_perturbed_roots(rng, form):
    p = fixture_params(3)
    _, sols = _solved_states(p)
    exact = sols[2].roots
    start = exact.with_(squared_roots=exact.squared_roots * (1 + 1e-4 * cplx(rng, 3)))
    out = newton_refine(start, p, form)
    assert out.residual_norm < 1e-12
    assert _same_set(out.squared_roots, exact.squared_roots, 1e-9 * np.max(np.abs(exact.squared_roots)))
    with pytest.raises(ValueError):
        newton_refine(start, p, "x-form")


def test_cluster_polynomial_seeds_small_gamma():
    # U = u U'' + A U' + u**m holds coefficient by coefficient
    A, m = -1.75, 4
    a = cluster_polynomial(m, A)
    P = np.polynomial.polynomial
    rhs = P.polyadd(P.polyadd(P.polymulx(P.polyder(a, 2)), A * P.polyder(a)), np.eye(m + 1)[m])
    assert np.allclose(a, rhs)
    p = fixture_params(4, Gamma=1e-3)
    rep = spectrum_match(p)
    assert rep.passed and rep.max_rel_error < 1e-8
    assert any("cluster-rescue" in r.provenance for r in rep.records)


def test_continuation_tracks_ed_state():
    p = fixture_params(2)
    _, sols = _solved_states(p)
    pts = continuation_solve(p, [0.3, 0.2, 0.1], sols[0].roots)
    assert [pt.Gamma for pt in pts] == [0.3, 0.2, 0.1]
    for pt in pts:
        E = np.linalg.eigvalsh(hamiltonian(ModelParams(p.z, p.G, pt.Gamma)))
        assert np.min(np.abs(E - pt.energy.real)) < 1e-10
        assert pt.roots.residual_norm < 1e-10 and not pt.escaped and not pt.collisions


def test_continuation_stalls_at_collision():
    p = ModelParams((1.3, 1.6), 0.8, 0.3)
    _, sols = _solved_states(p)
    with pytest.raises(ConvergenceError, match="root collision") as info:
        continuation_solve(p, [0.3, 0.5, 0.7], sols[0].roots)
    exc = info.value
    assert 0.6 < exc.last < 0.7
    assert exc.stalled.roots.collisions(1e-2)
    assert [pt.Gamma for pt in exc.path] == [0.3, 0.5]


def test_continuation_input_checks():
    p = fixture_params(2)
    seeds = BetheRoots([1.0, 2.0])
    with pytest.raises(ValueError):
        continuation_solve(p, [0.3, 0.1, 0.2], seeds)
    with pytest.raises(ValueError):
        continuation_solve(p, [], seeds)
    with pytest.raises(DomainError):
        continuation_solve(p, [0.3], BetheRoots([np.inf, 2.0]))


@pytest.mark.parametrize("L", [2, 3])
def test_heine_stieltjes_equivalence(rng, L):
    p = fixture_params(L)
    _, sols = _solved_states(p)
    for sol in sols:
        x = sol.roots.squared_roots
        Q0 = QPolynomial.from_roots(x * (1 + 1e-6 * cplx(rng, L)))
        Q, V = heine_stieltjes_solve(p, Q0)
        assert np.max(np.abs(heine_stieltjes_residual(Q.coefficients, V, p))) < 1e-10
        assert _same_set(Q.roots(), x, 1e-8 * max(1.0, np.max(np.abs(x))))
        # and conversely the BAE roots give a vanishing residual for their own V
        _, res = van_vleck_for(QPolynomial.from_roots(x), p)
        assert res < 1e-10 * max(1.0, np.max(np.abs(x)) ** L)


# ---------------------------------------------------------------- full eta

def _single_site(eta=0.3 + 0.05j, diagonal=True):
    chain = ChainSpec((0.8 + 0.1j,), eta)
    if diagonal:
        bp = BoundaryParams(xi_minus=-0.4, xi_plus=0.5, psi_plus=0.3, phi_plus=-0.2)
    else:
        bp = BoundaryParams(-0.1, 0.2, 0.1, 0.5, 0.3, -0.2)
    return chain, bp


@pytest.mark.parametrize("diagonal", [True, False])
def test_full_eta_eigenvalue_is_transfer_eigenvalue(diagonal):
    chain, bp = _single_site(diagonal=diagonal)
    sols = solve_full_bae_single(chain, bp)
    assert len(sols) == 2
    for u in (0.37 + 0.21j, -1.1 + 0.4j, 0.9 - 0.6j, 1.7 + 0.2j, -0.3 - 0.8j):
        ev = np.linalg.eigvals(transfer_matrix(u, chain, bp))
        lam = [lambda_full(u, s, chain, bp) for s in sols]
        assert _same_set(lam, ev, 1e-9 * np.max(np.abs(ev)))


def test_full_eta_pole_limits_give_bethe_equations():
    chain, bp = _single_site(diagonal=False)
    for s in solve_full_bae_single(chain, bp):
        assert s.residual_norm < 1e-10
        # off shell the pole coefficient at +-v reproduces the residual itself
        off = s.with_(squared_roots=s.squared_roots * 1.1)
        ref = bae_full_residual(off, chain, bp)[0]
        assert abs(bae_from_pole(1, off, chain, bp, sign=1) - ref) < 1e-7 * max(1.0, abs(ref))
        assert abs(bae_from_pole(1, off, chain, bp, sign=-1) - ref) < 1e-7 * max(1.0, abs(ref))


def test_full_eta_residue_at_inhomogeneity():
    chain, bp = _single_site()
    s = solve_full_bae_single(chain, bp)[0]
    e = chain.eps[0]
    ref = pole_limit(lambda u: lambda_full(u, s, chain, bp), e)
    assert abs(lambda_full_residue(1, s, chain, bp) - ref) < 1e-8 * abs(ref)


def test_full_eta_quasiclassical_residual():
    # off shell, the eta**2-rescaled full residual approaches the quasi-classical one at O(eta)
    ep = EtaExpansion(xi=0.2, psi=0.1, phi=-0.3, alpha=0.7, beta=0.1, gamma=0.4, delta=-0.2, lam=0.5, mu=0.3)
    x = np.array([1.7 + 0.3j, -0.9 + 0.8j])
    roots = BetheRoots(x)
    gaps = []
    for eta in (1e-3, 5e-4):
        chain = ChainSpec((0.8, 1.3), eta)
        qc = bae_residual_general(x, chain, ep)
        gaps.append(np.max(np.abs(bae_full_quasiclassical(roots, chain, ep.boundary(eta)) - qc)))
    assert gaps[0] < 1e-2
    assert 1.6 < gaps[0] / gaps[1] < 2.4  # first order in eta


@settings(max_examples=15, deadline=None)
@given(z=st.floats(0.3, 3.0), G=st.sampled_from([-1.5, -0.4, 0.3, 0.8, 2.0]), Gamma=st.floats(0.05, 1.0))
def test_full_eta_energies_single_site(z, G, Gamma):
    E = full_eta_energies_single(ModelParams((z,), G, Gamma))
    ref = np.sqrt(z**4 / 4 + Gamma**2 * z**2)
    assert np.allclose(E, [-ref, ref], rtol=1e-9, atol=1e-11)


def test_full_eta_domain_checks():
    chain, bp = _single_site()
    s = solve_full_bae_single(chain, bp)[0]
    with pytest.raises(DomainError):
        lambda_full(chain.eps[0], s, chain, bp)
    with pytest.raises(DomainError):
        lambda_full(0.0, s, chain, bp)
    with pytest.raises(ValueError):
        solve_full_bae_single(ChainSpec((0.8, 1.2), 0.1), bp)
    with pytest.raises(ValueError):
        full_eta_energies_single(fixture_params(2))


# ---------------------------------------------------------------- pipeline

def test_spectrum_match_sector_mode():
    rep = spectrum_match(fixture_params(3, Gamma=0.0))
    assert rep.mode == "sector" and rep.passed and rep.max_rel_error < 1e-8
    assert sorted({r.finite_roots for r in rep.records}) == [0, 1, 2, 3]


def test_spectrum_match_single_site_closed_form():
    p = ModelParams((1.7,), 0.8, 0.3)
    rep = spectrum_match(p)
    ref = np.sqrt(1.7**4 / 4 + 0.09 * 1.7**2)
    assert np.allclose(sorted(r.energy_bethe.real for r in rep.records), [-ref, ref], atol=1e-12)


def test_spectrum_match_deterministic():
    a = spectrum_match(fixture_params(3), seed=4)
    b = spectrum_match(fixture_params(3), seed=4)
    assert [r.energy_bethe for r in a.records] == [r.energy_bethe for r in b.records]
