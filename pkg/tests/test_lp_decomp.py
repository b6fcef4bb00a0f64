import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shellscat.errors import ParameterError
from shellscat.lp_decomp import LPBasis, block_range, project, project_below_I, project_leq
from shellscat.spectral_core import ComplexField, make_grid

BASES = [LPBasis("smooth"), LPBasis("c2poly")]


def random_field(grid, seed=0, band=None, side="physical"):
    rng = np.random.default_rng(seed)
    spec = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    if band is not None:
        spec = spec * band(grid.xi_norm)
    f = ComplexField.frequency(grid, spec)
    return f.to_physical() if side == "physical" else f


@pytest.fixture(scope="module")
def grid():
    return make_grid(3, 4.0, 16)


@pytest.mark.parametrize("basis", BASES)
def test_profile_shape(basis):
    t = np.linspace(0, 3, 3001)
    phi = basis.phi(t)
    assert np.all(phi[t <= 1] == 1.0) and np.all(phi[t >= 2] == 0.0)
    assert np.all(np.diff(phi) <= 0)
    assert np.all((phi >= 0) & (phi <= 1))


@pytest.mark.parametrize("basis", BASES)
@given(t=st.floats(1e-6, 1e6))
def test_psi_telescopes(basis, t):
    total = sum(basis.psi(t / 2.0**k) for k in range(-40, 41))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_smoothness_flag():
    assert BASES[0].smoothness == np.inf and BASES[1].smoothness == 2


@pytest.mark.parametrize("basis", BASES)
def test_block_support(grid, basis):
    f = random_field(grid, 1, side="frequency")
    for k in range(-1, 4):
        spec = project(f, k, basis).spectrum()
        outside = (grid.xi_norm < 2.0 ** (k - 1)) | (grid.xi_norm > 2.0 ** (k + 1))
        assert np.all(spec[outside] == 0)
        spec_leq = project_leq(f, k, basis).spectrum()
        assert np.all(spec_leq[grid.xi_norm > 2.0 ** (k + 1)] == 0)


def test_low_band_killed_by_higher_block(grid):
    k = 2
    f = random_field(grid, 2, band=lambda r: r <= 2.0 ** (k - 1), side="frequency")
    assert np.abs(project(f, k).spectrum()).max() == 0
    assert np.allclose(project_leq(f, k - 1).data, f.data, atol=1e-12)


def test_single_mode_scaling(grid):
    spec = np.zeros(grid.shape, complex)
    spec[3, 1, 0] = 1.0
    xi0 = grid.xi_norm[3, 1, 0]
    f = ComplexField.frequency(grid, spec)
    for k in range(0, 4):
        out = project(f, k).data
        assert out[3, 1, 0] == pytest.approx(LPBasis().psi(xi0 / 2.0**k))
        assert np.count_nonzero(out) <= 1


@pytest.mark.parametrize("basis", BASES)
def test_reconstruction_sum(grid, basis):
    f = random_field(grid, 3)
    total = project_leq(f, -21, basis)
    for k in range(-20, 21):
        total = total + project(f, k, basis)
    assert np.linalg.norm((total - f).data) <= 1e-12 * np.linalg.norm(f.data)


@pytest.mark.parametrize("basis", BASES)
def test_leq_recursion(grid, basis):
    f = random_field(grid, 4)
    for k in (-1, 1, 3):
        diff = project_leq(f, k, basis) - project_leq(f, k - 1, basis) - project(f, k, basis)
        assert np.linalg.norm(diff.data) <= 1e-12 * np.linalg.norm(f.data)


def test_low_limit_is_mean_mode(grid):
    f = random_field(grid, 5)
    spec = project_leq(f, -10).spectrum()
    assert np.count_nonzero(spec) == 1 and spec[0, 0, 0] == pytest.approx(f.spectrum()[0, 0, 0])


def test_below_I_examples(grid):
    f = random_field(grid, 6)
    np.testing.assert_array_equal(project_below_I(f, 16).data, project_leq(f, -1).data)
    crit = project(random_field(grid, 6, side="frequency"), 2)
    assert np.abs(project_below_I(crit, 16).spectrum()).max() == 0
    with pytest.raises(ParameterError):
        project_below_I(f, 0.0)


@pytest.mark.parametrize("lam", [4.0, 16.0, 30.0])
def test_decomposition_at_lambda(grid, lam):
    f = random_field(grid, 7)
    k_lam, crit, high = block_range(grid, lam)
    total = project_below_I(f, lam)
    for k in range(k_lam - 2, high[-1] + 1 if high else k_lam + 2):
        total = total + project(f, k)
    assert np.linalg.norm((total - f).data) <= 1e-12 * np.linalg.norm(f.data)


@pytest.mark.parametrize("basis", BASES)
def test_almost_orthogonality(grid, basis):
    f = random_field(grid, 8)
    energy = sum(project(f, k, basis).l2() ** 2 for k in range(-8, 8))
    assert energy <= 2.0 * f.l2() ** 2


def test_self_adjoint(grid):
    f, g = random_field(grid, 9), random_field(grid, 10)
    cell = grid.cell_volume
    left = np.vdot(project(f, 1).data, g.data) * cell
    right = np.vdot(f.data, project(g, 1).data) * cell
    assert left == pytest.approx(right, rel=1e-12)


def test_output_side_follows_input(grid):
    f = random_field(grid, 11).to_frequency()
    assert project(f, 1).side.value == "frequency"
    assert math.isfinite(project(f.to_physical(), 1).l2())
