import numpy as np
import pytest

from agpchaos.agp_core import adapt_degenerate_basis, agp_norm_exact
from agpchaos.analytic_free import free_alpha, free_norm_asymptotic, momenta
from agpchaos.eigensolver import diagonalize, rotate_to_eigenbasis
from agpchaos.lattice_models import HamiltonianSpec, build_deformation, build_hamiltonian


def ed_norm(L, hx):
    spec = HamiltonianSpec("tfim_periodic", L, {"hx": hx})
    dec = diagonalize(build_hamiltonian(spec))
    Ot = adapt_degenerate_basis(rotate_to_eigenbasis(build_deformation(spec, "hx"), dec), dec.E)
    return agp_norm_exact(Ot, dec.E)


def test_momenta():
    assert np.allclose(momenta(4), [0, np.pi / 4, np.pi / 2, 3 * np.pi / 4])


def test_two_sites_by_hand():
    # only k = pi/2 contributes: alpha_1 = -(1 / 1.25) / 8
    c = free_alpha(2, 0.5)
    assert c.alpha[0] == pytest.approx(-0.1, rel=1e-14)
    assert abs(c.alpha[1]) < 1e-15
    assert c.norm_sq == pytest.approx(0.04, rel=1e-12)
    assert c.rescaled_norm_sq == pytest.approx(0.02, rel=1e-12)


@pytest.mark.parametrize("L", [4, 5, 6, 7, 8])
@pytest.mark.parametrize("hx", [0.5, 0.8, 2.0])
def test_matches_exact_diagonalization(L, hx):
    assert free_alpha(L, hx).norm_sq == pytest.approx(ed_norm(L, hx), rel=1e-9)


def test_field_sign_symmetry():
    for L in (5, 8, 13):
        assert free_alpha(L, 0.7).norm_sq == pytest.approx(free_alpha(L, -0.7).norm_sq, rel=1e-12)


def test_critical_point_is_finite():
    c = free_alpha(6, 1.0)
    assert np.all(np.isfinite(c.alpha)) and c.norm_sq > 0


@pytest.mark.parametrize("hx", [1.5, 2.0, 3.0])
def test_asymptotic_form(hx):
    assert free_alpha(60, hx).norm_sq == pytest.approx(free_norm_asymptotic(60, hx), rel=1e-8)
    # strings decay geometrically in the paramagnet
    a = free_alpha(60, hx).alpha
    assert a[4] / a[3] == pytest.approx(1 / hx, rel=1e-6)


def test_asymptotic_domain():
    with pytest.raises(ValueError):
        free_norm_asymptotic(10, 0.9)
    with pytest.raises(ValueError):
        free_alpha(1, 0.5)
