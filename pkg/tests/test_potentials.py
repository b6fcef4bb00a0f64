import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shellscat.errors import FieldIOError, ParameterError
from shellscat.potentials import (
    DeltaShell,
    apply_potential,
    box_quadrature,
    bump_potential,
    deposit_charges,
    grid_potential,
    large_part_norm,
    mollifier_sigma,
    pairing,
    read_surface,
    smoothed_trace,
    sphere_quadrature,
    trace_eval,
    write_surface,
)
from shellscat.spectral_core import ComplexField, make_grid


@pytest.fixture(scope="module")
def grid():
    return make_grid(3, 2.0, 24)


def smooth_field(grid, seed):
    rng = np.random.default_rng(seed)
    spec = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * np.exp(-0.1 * grid.xi_squared)
    return ComplexField.frequency(grid, spec).to_physical()


def test_sphere_area_3d():
    s = sphere_quadrature(1.0, n=32)
    assert s.area == pytest.approx(4 * math.pi, rel=1e-6)
    assert np.allclose(np.linalg.norm(s.nodes, axis=1), 1.0)
    assert np.allclose(s.normals, s.nodes)


def test_circle_length():
    s = sphere_quadrature(0.5, n=40, d=2)
    assert s.area == pytest.approx(math.pi, abs=1e-10)


@pytest.mark.parametrize("n", [4, 8, 16])
def test_sphere_exponential_integral(n):
    # int_{S^2} exp(a.x) dS = 4 pi sinh|a| / |a|
    a = np.array([0.3, -0.5, 0.4])
    s = sphere_quadrature(1.0, n=n)
    exact = 4 * math.pi * math.sinh(np.linalg.norm(a)) / np.linalg.norm(a)
    approx = np.sum(s.weights * np.exp(s.nodes @ a))
    assert abs(approx - exact) < [1e-4, 1e-10, 1e-13][[4, 8, 16].index(n)] * exact


def test_box_convergence_order():
    # smooth integrand exp(x) on the cube surface [-h, h]^3
    h = 0.5
    exact = 4 * h**2 * (math.exp(h) + math.exp(-h)) + 8 * h * (math.exp(h) - math.exp(-h))
    errors = []
    for n in (1, 2, 3):
        b = box_quadrature([h, h, h], n=n)
        errors.append(abs(np.sum(b.weights * np.exp(b.nodes[:, 0])) - exact))
    assert errors[1] < errors[0] / 4 and errors[2] < errors[1] / 4
    b = box_quadrature([h, h, h], n=4)
    assert b.area == pytest.approx(24 * h**2, rel=1e-14)
    assert np.allclose(np.abs(b.normals).sum(axis=1), 1.0)


def test_surface_must_fit_B0():
    with pytest.raises(ParameterError):
        sphere_quadrature(1.2, n=8, R0=1.0)
    with pytest.raises(ParameterError):
        box_quadrature([0.8, 0.8, 0.8], R0=1.0)
    with pytest.raises(ParameterError):
        sphere_quadrature(-1.0)


def test_pairing_constant_gives_area(grid):
    shell = DeltaShell(sphere_quadrature(1.0, n=16), 1.0)
    one = ComplexField.physical(grid, np.ones(grid.shape))
    assert pairing(None, shell, one, one) == pytest.approx(4 * math.pi, rel=1e-12)
    _, charges = apply_potential(None, shell, one)
    assert charges.total() == pytest.approx(4 * math.pi, rel=1e-12)


def test_trace_of_plane_wave(grid):
    k = np.array([grid.wavenumbers[3], grid.wavenumbers[-2], grid.wavenumbers[1]])
    x, y, z = grid.coords()
    wave = ComplexField.physical(grid, np.exp(1j * (k[0] * x + k[1] * y + k[2] * z)))
    s = sphere_quadrature(0.9, n=6)
    np.testing.assert_allclose(trace_eval(wave, s), np.exp(1j * s.nodes @ k), atol=1e-12)
    assert np.all(trace_eval(ComplexField.zeros(grid), s) == 0)


def test_trace_of_gaussian():
    g = make_grid(3, 4.0, 48)
    gauss = ComplexField.physical(g, np.exp(-g.radius**2))
    s = sphere_quadrature(1.0, n=8)
    np.testing.assert_allclose(trace_eval(gauss, s), math.exp(-1.0), atol=1e-9)


def test_apply_potential_zero(grid):
    u = smooth_field(grid, 0)
    V0 = grid_potential(grid, np.zeros(grid.shape), 1.0)
    shell = DeltaShell(sphere_quadrature(1.0, n=6), 0.0)
    part, charges = apply_potential(V0, shell, u)
    assert np.all(part.data == 0) and np.all(charges.charges == 0)


@pytest.mark.parametrize("sigma", [None, 0.2])
def test_pairing_symmetry(grid, sigma):
    V0 = bump_potential(grid, 1.3, 0.8)
    rng = np.random.default_rng(1)
    shell = DeltaShell(sphere_quadrature(0.9, n=6), rng.standard_normal(72))
    u, v = smooth_field(grid, 2), smooth_field(grid, 3)
    a = pairing(V0, shell, u, v, sigma)
    b = pairing(V0, shell, v, u, sigma)
    assert a == pytest.approx(b, rel=1e-12)


def test_realness(grid):
    V0 = bump_potential(grid, 0.7, 1.0)
    shell = DeltaShell(sphere_quadrature(0.5, n=6), 0.3)
    u = smooth_field(grid, 4)
    ubar = ComplexField.physical(grid, np.conj(u.data))
    p1, c1 = apply_potential(V0, shell, u)
    p2, c2 = apply_potential(V0, shell, ubar)
    np.testing.assert_allclose(p2.data, np.conj(p1.data), atol=1e-14)
    np.testing.assert_allclose(c2.charges, np.conj(c1.charges), atol=1e-12)


def test_smoothed_trace_is_deposit_transpose(grid):
    sigma = mollifier_sigma(grid)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1, 1, (7, 3))
    q = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    u = smooth_field(grid, 6)
    left = np.sum(deposit_charges(grid, pts, q, sigma).data * u.data) * grid.cell_volume
    right = np.sum(q * smoothed_trace(u, pts, sigma))
    assert left == pytest.approx(right, rel=1e-12)


def test_deposit_has_unit_mass(grid):
    sigma = mollifier_sigma(grid)
    bump = deposit_charges(grid, np.array([[0.1, -0.2, 0.3]]), np.array([1.0]), sigma)
    assert np.sum(bump.data).real * grid.cell_volume == pytest.approx(1.0, rel=1e-12)
    assert abs(bump.data.imag).max() < 1e-14


def test_mollifier_width_floor(grid):
    assert mollifier_sigma(grid) == pytest.approx(1.5 * grid.dx)
    with pytest.raises(ParameterError):
        mollifier_sigma(grid, grid.dx)


def test_grid_potential_checks(grid):
    with pytest.raises(ParameterError):
        grid_potential(grid, 1j * np.ones(grid.shape), 1.0)
    with pytest.raises(ParameterError):
        grid_potential(grid, np.ones(grid.shape), 1.0)
    V0 = bump_potential(grid, -2.0, 0.6, center=[0.2, 0, 0])
    assert V0.sup == pytest.approx(2.0, rel=0.05)
    assert V0.support_radius == pytest.approx(0.8)
    assert V0.scaled(0.5).sup == pytest.approx(0.5 * V0.sup)


def test_shell_alpha_real():
    with pytest.raises(ParameterError):
        DeltaShell(sphere_quadrature(0.5, n=4), 1j)
    shell = DeltaShell(sphere_quadrature(0.5, n=4), -3.0)
    assert shell.alpha_sup == 3.0


@given(st.floats(0.5, 5.0))
def test_large_part_norm_monotone(amp):
    g = make_grid(3, 2.0, 16)
    V0 = bump_potential(g, amp**2, 1.0)
    lams = [1.0, 4.0, 16.0, 64.0, 256.0, 10.0 * amp**8 + 1.0]
    values = [large_part_norm(V0, lam) for lam in lams]
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert values[-1] == 0.0


def test_surface_file_round_trip(tmp_path):
    shell = DeltaShell(box_quadrature([0.3, 0.4, 0.5], n=3), 0.25)
    path = write_surface(tmp_path / "s.json", shell)
    back = read_surface(path)
    np.testing.assert_array_equal(back.surface.nodes, shell.surface.nodes)
    np.testing.assert_array_equal(back.alpha, shell.alpha)
    assert back.surface.kind == shell.surface.kind
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(FieldIOError):
        read_surface(tmp_path / "bad.json")
    with pytest.raises(FieldIOError):
        read_surface(tmp_path / "none.json")
