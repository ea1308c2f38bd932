import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agpchaos.agp_core import (
    CutoffRule,
    DegenerateCouplingError,
    adapt_degenerate_basis,
    agp_bound,
    agp_matrix_exact,
    agp_norm_exact,
    agp_norm_regularized,
    agp_norm_timeintegral_oracle,
)
from agpchaos.eigensolver import diagonalize, rotate_to_eigenbasis
from agpchaos.lattice_models import (
    HamiltonianSpec,
    build_deformation,
    build_hamiltonian,
    commutator_deformation,
)

from conftest import random_symmetric

TWO_LEVEL_E = np.array([0.0, 1.0])
TWO_LEVEL_O = np.array([[0.0, 1.0], [1.0, 0.0]])


def brute_norm(Ot, E, mu):
    """Double loop over pairs, no vectorization."""
    D = E.size
    total = 0.0
    for n in range(D):
        for m in range(D):
            if m != n:
                w = E[m] - E[n]
                total += w * w / (w * w + mu * mu) ** 2 * Ot[m, n] ** 2
    return total / D


def eigen_problem(spec, tag):
    dec = diagonalize(build_hamiltonian(spec))
    return rotate_to_eigenbasis(build_deformation(spec, tag), dec), dec.E


class TestCutoffRule:
    def test_rules(self):
        assert CutoffRule().resolve(16, 12870) == 16 / 12870
        assert CutoffRule("L^-1/2/D").resolve(16, 100) == pytest.approx(0.25 / 100)
        assert CutoffRule("L^2/D").resolve(4, 64) == 0.25
        assert CutoffRule.parse("0.01").resolve(4, 64) == 0.01
        assert CutoffRule.parse("L/D") == CutoffRule()
        with pytest.raises(ValueError):
            CutoffRule("fixed", -1.0)


class TestExact:
    def test_diagonal_operator(self, rng):
        E = np.sort(rng.normal(size=6))
        assert np.array_equal(agp_matrix_exact(np.diag(rng.normal(size=6)), E), np.zeros((6, 6)))

    def test_two_level(self):
        A = agp_matrix_exact(TWO_LEVEL_O, TWO_LEVEL_E)
        assert A[0, 1] == 1.0 and A[1, 0] == 1.0 and A[0, 0] == 0.0

    def test_degenerate_coupling_raises(self):
        with pytest.raises(DegenerateCouplingError):
            agp_matrix_exact(TWO_LEVEL_O, np.array([1.0, 1.0]))

    def test_symmetry_deformation_recovers_generator(self, rng):
        H = random_symmetric(rng, 6)
        a = rng.normal(size=(6, 6))
        B = a - a.T
        dec = diagonalize(H)
        K = commutator_deformation(H, B)
        Kt = rotate_to_eigenbasis(K.matrix, dec)
        Bt = rotate_to_eigenbasis(B, dec)
        A = agp_matrix_exact(Kt, dec.E)
        off = ~np.eye(6, dtype=bool)
        assert np.allclose(A[off], np.abs(Bt[off]), atol=1e-12)

    def test_symmetry_deformation_symmetric_generator(self, rng):
        H = random_symmetric(rng, 7)
        B = random_symmetric(rng, 7)
        dec = diagonalize(H)
        K = commutator_deformation(H, B)
        Gt = rotate_to_eigenbasis(K.matrix, dec)
        Bt = rotate_to_eigenbasis(B, dec)
        off = ~np.eye(7, dtype=bool)
        expected = np.sum(Bt[off] ** 2) / 7
        assert agp_norm_regularized(Gt, dec.E, 1e-9, L=1).norm_sq == pytest.approx(expected, rel=1e-9)


class TestRegularized:
    def test_two_level_mu_zero_limit(self):
        rep = agp_norm_regularized(TWO_LEVEL_O, TWO_LEVEL_E, 1e-12, L=1)
        assert rep.norm_sq == pytest.approx(1.0, rel=1e-12)

    def test_diagonal_operator_is_zero(self, rng):
        E = np.sort(rng.normal(size=8))
        rep = agp_norm_regularized(np.diag(E), E, 0.1, L=3)
        assert rep.norm_sq == 0.0 and np.all(rep.z == 0)

    def test_degenerate_pair_contributes_nothing(self):
        rep = agp_norm_regularized(TWO_LEVEL_O, np.array([0.5, 0.5]), 0.1, L=1)
        assert rep.norm_sq == 0.0

    def test_matches_brute_force(self, rng):
        H = random_symmetric(rng, 20)
        O = random_symmetric(rng, 20)
        dec = diagonalize(H)
        Ot = rotate_to_eigenbasis(O, dec)
        for mu in (1e-3, 0.05, 2.0):
            rep = agp_norm_regularized(Ot, dec.E, mu, L=4, block=7)
            assert rep.norm_sq == pytest.approx(brute_norm(Ot, dec.E, mu), rel=1e-12)
            assert rep.norm_sq == pytest.approx(rep.z.sum(), rel=1e-14)

    def test_rescaling_convention(self, rng):
        Ot, E = eigen_problem(HamiltonianSpec("xxz_defect", 6, {"delta": 1.1, "eps_d": 0.2}), "eps_d")
        rep = agp_norm_regularized(Ot, E, CutoffRule(), L=6, extensive=False)
        assert rep.rescaled_norm_sq == rep.norm_sq
        assert rep.mu == 6 / 64
        rep = agp_norm_regularized(Ot, E, CutoffRule(), L=6)
        assert rep.rescaled_norm_sq == pytest.approx(rep.norm_sq / 6)

    def test_exact_limit(self, rng):
        # no degeneracies: perturbed random matrix
        H = random_symmetric(rng, 48)
        dec = diagonalize(H)
        Ot = rotate_to_eigenbasis(random_symmetric(rng, 48), dec)
        gap = np.min(np.diff(dec.E))
        exact = agp_norm_exact(Ot, dec.E)
        for ratio in (1e-2, 1e-3):
            mu = gap * ratio
            reg = agp_norm_regularized(Ot, dec.E, mu, L=1).norm_sq
            assert abs(reg - exact) <= 3 * ratio**2 * exact

    def test_monotone_tail(self, rng):
        for _ in range(5):
            dec = diagonalize(random_symmetric(rng, 16))
            Ot = rotate_to_eigenbasis(random_symmetric(rng, 16), dec)
            wmax = dec.E[-1] - dec.E[0]
            mus = wmax * np.array([1.0, 1.5, 2.0, 4.0, 10.0])
            norms = [agp_norm_regularized(Ot, dec.E, mu, L=1).norm_sq for mu in mus]
            assert np.all(np.diff(norms) <= 0)

    def test_gauge_invariance(self, rng):
        # full-space XXZ: magnetization sectors +m and -m are degenerate
        spec = HamiltonianSpec("xxz", 8, {"delta": 1.1})
        H = build_hamiltonian(spec)
        dec = diagonalize(H)
        O = build_deformation(spec, "delta").matrix
        mu = CutoffRule().resolve(8, dec.dimension)
        ref = agp_norm_regularized(rotate_to_eigenbasis(O, dec), dec.E, mu, L=8).norm_sq
        V = dec.V * rng.choice([-1.0, 1.0], size=dec.dimension)
        tol = 1e-9 * np.abs(dec.E).max()
        breaks = np.nonzero(np.diff(dec.E) > tol)[0] + 1
        blocks = [b for b in np.split(np.arange(dec.dimension), breaks) if b.size > 1]
        assert blocks, "expected degenerate blocks in this model"
        for b in blocks:
            q, _ = np.linalg.qr(rng.normal(size=(b.size, b.size)))
            V[:, b] = V[:, b] @ q
        Ot = V.T @ O @ V
        rotated = agp_norm_regularized(Ot, dec.E, mu, L=8).norm_sq
        assert rotated == pytest.approx(ref, rel=1e-9)

    def test_free_model_adapted_basis(self):
        spec = HamiltonianSpec("tfim_periodic", 6, {"hx": 0.8})
        Ot, E = eigen_problem(spec, "hx")
        Oa = adapt_degenerate_basis(Ot, E)
        exact = agp_norm_exact(Oa, E)
        assert agp_norm_regularized(Oa, E, 1e-8, L=6).norm_sq == pytest.approx(exact, rel=1e-10)


class TestBound:
    def test_two_level_saturation(self):
        assert agp_bound(TWO_LEVEL_O, 1.0) == 0.25
        assert agp_norm_regularized(TWO_LEVEL_O, TWO_LEVEL_E, 1.0, L=1).norm_sq == 0.25

    def test_zero(self):
        assert agp_bound(np.zeros((3, 3)), 0.1) == 0.0

    @settings(max_examples=40, deadline=None)
    @given(
        n=st.integers(2, 12),
        seed=st.integers(0, 2**32 - 1),
        log_mu=st.floats(-4, 1),
    )
    def test_bound_holds(self, n, seed, log_mu):
        rng = np.random.default_rng(seed)
        dec = diagonalize(random_symmetric(rng, n))
        Ot = rotate_to_eigenbasis(random_symmetric(rng, n), dec)
        mu = 10.0**log_mu
        assert agp_norm_regularized(Ot, dec.E, mu, L=1).norm_sq <= agp_bound(Ot, mu)


class TestTimeIntegralOracle:
    def test_two_level(self):
        mu = 0.01
        spectral = agp_norm_regularized(TWO_LEVEL_O, TWO_LEVEL_E, mu, L=1).norm_sq
        # closed form: element = omega / (omega^2 + mu^2)
        assert spectral == pytest.approx((1.0 / (1.0 + mu * mu)) ** 2, rel=1e-14)
        oracle = agp_norm_timeintegral_oracle(TWO_LEVEL_O, TWO_LEVEL_E, mu, t_max=2000.0)
        assert oracle == pytest.approx(spectral, rel=1e-6)

    def test_diagonal(self):
        E = np.array([0.0, 0.3, 1.0])
        assert agp_norm_timeintegral_oracle(np.diag(E), E, 0.1) == 0.0

    def test_xxz_four_sites(self):
        spec = HamiltonianSpec("xxz", 4, {"delta": 1.1})
        Ot, E = eigen_problem(spec, "delta")
        mu = CutoffRule().resolve(4, 16)
        spectral = agp_norm_regularized(Ot, E, mu, L=4).norm_sq
        assert agp_norm_timeintegral_oracle(Ot, E, mu) == pytest.approx(spectral, rel=1e-6)

    def test_truncation_too_short(self):
        with pytest.raises(ValueError):
            agp_norm_timeintegral_oracle(TWO_LEVEL_O, TWO_LEVEL_E, 0.1, t_max=10.0)

    def test_size_limit(self):
        with pytest.raises(ValueError):
            agp_norm_timeintegral_oracle(np.eye(300), np.arange(300.0), 0.1)
