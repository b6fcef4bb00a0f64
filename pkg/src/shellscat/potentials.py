"""Potentials V = V0 + alpha dsigma: a real grid part and a delta shell.

The shell is a quadrature measure (nodes, weights, normals) carrying a real
density alpha.  It acts on a field through the field's values on the nodes,
either the exact band-limited interpolant or a Gaussian-smoothed trace; the
smoothed variant is the transpose of :func:`deposit_charges`, which keeps
discretized operators symmetric.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FieldIOError, ParameterError
from .spectral_core import (
    ComplexField,
    Grid,
    Side,
    atomic_write_text,
    fourier_eval,
    separable_analysis,
    separable_synthesis,
)

__all__ = [
    "GridPotential",
    "SurfaceKind",
    "Hypersurface",
    "DeltaShell",
    "grid_potential",
    "bump_potential",
    "sphere_quadrature",
    "box_quadrature",
    "trace_eval",
    "smoothed_trace",
    "deposit_charges",
    "ShellCharges",
    "apply_potential",
    "pairing",
    "large_part_norm",
    "write_surface",
    "read_surface",
    "mollifier_sigma",
]


@dataclass
class GridPotential:
    """Real potential sampled on the grid, vanishing outside a ball."""

    field: ComplexField
    support_radius: float

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values().real

    def scaled(self, factor: float) -> "GridPotential":
        return GridPotential(self.field * float(factor), self.support_radius)

    @property
    def sup(self) -> float:
        return float(np.abs(self.values).max())


def grid_potential(grid: Grid, values, support_radius: float, tol: float = 1e-13) -> GridPotential:
    values = np.broadcast_to(np.asarray(values), grid.shape)
    if np.iscomplexobj(values):
        if np.abs(values.imag).max() > tol * max(1.0, np.abs(values).max()):
            raise ParameterError("grid potential must be real valued")
        values = values.real
    if support_radius <= 0 or support_radius > grid.L:
        raise ParameterError(f"support radius {support_radius} must lie in (0, L={grid.L}]")
    outside = grid.radius > support_radius
    if np.any(np.abs(values[outside]) > tol * max(1.0, np.abs(values).max())):
        raise ParameterError(f"potential does not vanish outside |x| <= {support_radius}")
    return GridPotential(ComplexField.physical(grid, np.where(outside, 0.0, values)), float(support_radius))


def bump_potential(grid: Grid, amplitude: float, radius: float, center=None) -> GridPotential:
    """Smooth compactly supported bump amplitude * exp(1 - 1/(1 - (r/radius)^2))."""
    center = np.zeros(grid.d) if center is None else np.asarray(center, dtype=float)
    r = np.sqrt(sum((c - x0) ** 2 for c, x0 in zip(grid.coords(), center)))
    s = np.clip(r / radius, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        vals = np.where(s < 1.0, amplitude * np.exp(1.0 - 1.0 / np.where(s < 1.0, 1.0 - s**2, 1.0)), 0.0)
    reach = radius + float(np.linalg.norm(center))
    return grid_potential(grid, vals, reach)


class SurfaceKind(str, enum.Enum):
    SPHERE = "sphere"
    POLYHEDRAL = "polyhedral"


@dataclass
class Hypersurface:
    kind: SurfaceKind
    params: dict
    nodes: np.ndarray
    weights: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        self.kind = SurfaceKind(self.kind)
        self.nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        self.normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
        n = self.nodes.shape[0]
        if self.weights.shape != (n,) or self.normals.shape != self.nodes.shape:
            raise ParameterError("nodes, weights and normals must agree in length")
        if np.any(self.weights <= 0):
            raise ParameterError("quadrature weights must be positive")

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @property
    def reach(self) -> float:
        return float(np.linalg.norm(self.nodes, axis=1).max())


@dataclass
class DeltaShell:
    surface: Hypersurface
    alpha: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.surface.nodes.shape[0]
        alpha = np.zeros(n) if self.alpha is None else np.broadcast_to(np.asarray(self.alpha), (n,))
        if np.iscomplexobj(alpha):
            if np.abs(alpha.imag).max() > 0:
                raise ParameterError("shell density alpha must be real")
            alpha = alpha.real
        self.alpha = np.asarray(alpha, dtype=float).copy()

    @property
    def alpha_sup(self) -> float:
        return float(np.abs(self.alpha).max()) if self.alpha.size else 0.0

    def scaled(self, factor: float) -> "DeltaShell":
        return DeltaShell(self.surface, self.alpha * float(factor))


def _check_inside(nodes: np.ndarray, R0: float | None) -> None:
    if R0 is not None and np.linalg.norm(nodes, axis=1).max() > R0 * (1 + 1e-12):
        raise ParameterError(f"surface leaves the ball B_0 of radius {R0}")


def sphere_quadrature(r: float, center=None, n: int = 16, d: int = 3, R0: float | None = None) -> Hypersurface:
    """Latitude-longitude product rule (d = 3) or equispaced circle (d = 2).

    In d = 3 the polar angle uses n Gauss-Legendre nodes in cos(theta) and the
    azimuth 2n equispaced nodes, so spherical harmonics of degree < 2n are
    integrated exactly.
    """
    if r <= 0:
        raise ParameterError("sphere radius must be positive")
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    if d == 2:
        t = 2 * math.pi * (np.arange(n) + 0.5) / n
        normals = np.stack([np.cos(t), np.sin(t)], axis=1)
        weights = np.full(n, 2 * math.pi * r / n)
    elif d == 3:
        cos_t, w_t = np.polynomial.legendre.leggauss(n)
        phi = 2 * math.pi * (np.arange(2 * n) + 0.5) / (2 * n)
        sin_t = np.sqrt(1.0 - cos_t**2)
        normals = np.stack(
            [np.outer(sin_t, np.cos(phi)), np.outer(sin_t, np.sin(phi)), np.outer(cos_t, np.ones_like(phi))],
            axis=-1,
        ).reshape(-1, 3)
        weights = np.outer(w_t, np.full(2 * n, 2 * math.pi / (2 * n))).ravel() * r**2
    else:
        raise ParameterError("d must be 2 or 3")
    nodes = center + r * normals
    _check_inside(nodes, R0)
    return Hypersurface(SurfaceKind.SPHERE, {"r": r, "center": center.tolist(), "n": n}, nodes, weights, normals)


def box_quadrature(half_widths, center=None, n: int = 8, R0: float | None = None) -> Hypersurface:
    """Axis-aligned box surface with a tensor Gauss-Legendre rule on every face."""
    half = np.asarray(half_widths, dtype=float)
    d = half.size
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    g, w = np.polynomial.legendre.leggauss(n)
    nodes, weights, normals = [], [], []
    for axis in range(d):
        others = [a for a in range(d) if a != axis]
        grids = np.meshgrid(*[g * half[a] for a in others], indexing="ij")
        wgrid = np.ones_like(grids[0])
        for a, gw in zip(others, np.meshgrid(*[w * half[a] for a in others], indexing="ij")):
            wgrid = wgrid * gw
        for sign in (-1.0, 1.0):
            pts = np.zeros((grids[0].size, d))
            pts[:, axis] = sign * half[axis]
            for a, gr in zip(others, grids):
                pts[:, a] = gr.ravel()
            nrm = np.zeros_like(pts)
            nrm[:, axis] = sign
            nodes.append(pts + center)
            weights.append(wgrid.ravel())
            normals.append(nrm)
    nodes = np.concatenate(nodes)
    _check_inside(nodes, R0)
    params = {"half_widths": half.tolist(), "center": center.tolist(), "n": n}
    return Hypersurface(SurfaceKind.POLYHEDRAL, params, nodes, np.concatenate(weights), np.concatenate(normals))


# ---------------------------------------------------------------- traces and charges


def mollifier_sigma(grid: Grid, width: float | None = None) -> float:
    """Gaussian standard deviation for a mollifier of width h (default 3 dx).

    The width is the diameter-scale h; the Gaussian uses sigma = h / 2.
    """
    h = 3.0 * grid.dx if width is None else float(width)
    if h < 2.0 * grid.dx - 1e-12:
        raise ParameterError(f"mollification width {h} is below 2 dx = {2 * grid.dx}")
    return h / 2.0


def _gaussian_factors(grid: Grid, points: np.ndarray, sigma: float) -> list[np.ndarray]:
    """Per-axis samples of the band-limited periodic Gaussian centred at points.

    The Nyquist mode enters as a cosine so the profile is real; the product
    over axes is a unit-mass Gaussian of standard deviation sigma.
    """
    k = grid.wavenumbers
    damp = np.exp(-0.5 * sigma**2 * k**2)
    nyq = grid.mode_index == -grid.N // 2
    x = grid.axis
    synth = np.exp(1j * np.outer(k[~nyq], x))  # (k, N)
    factors = []
    for a in range(grid.d):
        p = points[:, a]
        coef = damp[~nyq][None, :] * np.exp(-1j * np.outer(p, k[~nyq]))
        vals = (coef @ synth).real
        k_n = k[nyq][0]
        vals += damp[nyq][0] * np.cos(k_n * (x[None, :] - p[:, None]))
        factors.append(vals * grid.dk / (2 * math.pi))
    return factors


def trace_eval(u: ComplexField, surface: Hypersurface | np.ndarray) -> np.ndarray:
    """Exact values of the band-limited field at the surface nodes (or points)."""
    points = surface.nodes if isinstance(surface, Hypersurface) else np.asarray(surface, dtype=float)
    return fourier_eval(u.grid, u.spectrum(), points)


def smoothed_trace(u: ComplexField, points: np.ndarray, sigma: float) -> np.ndarray:
    """Pairings <eta_p, u> of the field with unit-mass Gaussians at each point."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    factors = _gaussian_factors(u.grid, points, sigma)
    return separable_analysis(u.values(), factors) * u.grid.cell_volume


def deposit_charges(grid: Grid, points: np.ndarray, charges: np.ndarray, sigma: float) -> ComplexField:
    """Grid field sum_i charges_i * eta_{points_i} (unit-mass Gaussians)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    charges = np.asarray(charges, dtype=complex)
    factors = _gaussian_factors(grid, points, sigma)
    return ComplexField.physical(grid, separable_synthesis(charges, [f.astype(complex) for f in factors]))


@dataclass
class ShellCharges:
    """Discrete measure sum_i charges_i delta_{nodes_i}."""

    nodes: np.ndarray
    charges: np.ndarray

    def total(self) -> complex:
        return complex(np.sum(self.charges))


def apply_potential(V0: GridPotential | None, shell: DeltaShell | None, u: ComplexField,
                    sigma: float | None = None) -> tuple[ComplexField, ShellCharges | None]:
    """Return (V0 u, alpha * trace(u) * weights).

    ``sigma`` switches the shell trace from point values to Gaussian-smoothed
    values with that standard deviation.
    """
    grid = u.grid
    if V0 is None:
        grid_part = ComplexField.zeros(grid)
    else:
        if V0.grid != grid:
            raise ParameterError("potential and field live on different grids")
        grid_part = ComplexField.physical(grid, V0.values * u.values())
    if shell is None:
        return grid_part, None
    nodes = shell.surface.nodes
    tr = trace_eval(u, nodes) if sigma is None else smoothed_trace(u, nodes, sigma)
    return grid_part, ShellCharges(nodes, shell.alpha * shell.surface.weights * tr)


def pairing(V0: GridPotential | None, shell: DeltaShell | None, u: ComplexField, v: ComplexField,
            sigma: float | None = None) -> complex:
    """Bilinear <V u, v> = int V0 u v dx + sum_i w_i alpha_i u(z_i) v(z_i)."""
    grid_part, charges = apply_potential(V0, shell, u, sigma)
    total = complex(np.sum(grid_part.values() * v.values()) * u.grid.cell_volume)
    if charges is not None:
        nodes = charges.nodes
        tv = trace_eval(v, nodes) if sigma is None else smoothed_trace(v, nodes, sigma)
        total += complex(np.sum(charges.charges * tv))
    return total


def large_part_norm(V0: GridPotential, lam: float) -> float:
    """||1_F V0||_{L^{d/2}} with F = {|V0| > lam^(1/4)}."""
    vals = np.abs(V0.values)
    big = vals > lam**0.25
    p = V0.grid.d / 2.0
    return float((np.sum(vals[big] ** p) * V0.grid.cell_volume) ** (1.0 / p))


# ---------------------------------------------------------------- surface files


def write_surface(path, shell: DeltaShell) -> Path:
    s = shell.surface
    doc = {
        "kind": s.kind.value,
        "params": s.params,
        "nodes": s.nodes.tolist(),
        "weights": s.weights.tolist(),
        "normals": s.normals.tolist(),
        "alpha": shell.alpha.tolist(),
    }
    atomic_write_text(path, json.dumps(doc))
    return Path(path)


def read_surface(path) -> DeltaShell:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FieldIOError(f"cannot read surface {path}: {exc}") from exc
    missing = [k for k in ("kind", "params", "nodes", "weights", "normals", "alpha") if k not in doc]
    if missing:
        raise FieldIOError(f"surface file {path} lacks {missing}")
    surface = Hypersurface(doc["kind"], doc["params"], doc["nodes"], doc["weights"], doc["normals"])
    return DeltaShell(surface, np.asarray(doc["alpha"], dtype=float))
