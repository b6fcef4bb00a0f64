"""Outgoing and ingoing Helmholtz resolvents on the periodic box.

On R^d the outgoing resolvent is convolution with the kernel
Phi(r) = -exp(i k r) / (4 pi r) in d = 3 and -(i/4) H0(k r) in d = 2, where
k = sqrt(lam).  A periodic lattice cannot carry that kernel directly: the
lattice sum of 1/(lam - |xi|^2) describes the periodized kernel, and its copies
decay only like 1/r.  Every backend below therefore convolves with the kernel
cut off at a radius ``a`` that covers all source-to-target distances of
interest.  The cut-off kernel has a smooth closed-form transform, and the box
is zero-padded until the periodic copies of the cut-off kernel no longer reach
the region where the output is requested.  Inside that region the result is
the R^d convolution up to the spectral accuracy of the source.

Backends
--------
pv_sphere
    Standing-wave part (the principal value of 1/(lam - |xi|^2), kernel
    -cos(k r)/(4 pi r)) cut off at ``a``, plus the resonant-sphere term
    -+ i pi / (2 k) * integral over |xi| = k of f_hat(xi) exp(i x.xi),
    evaluated with a latitude-longitude rule on the sphere and exact
    band-limited interpolation of f_hat.
absorption
    Damped kernels with lam -> lam +- i eps on a geometric eps schedule, then
    polynomial (repeated Richardson) extrapolation to eps = 0.
green3d
    The outgoing kernel itself, cut off at ``a``, on a box at least doubled.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft
from scipy import special

from .errors import ParameterError, SymbolSingularityError
from .funcspaces import symbol_floor
from .potentials import deposit_charges, mollifier_sigma
from .spectral_core import (
    ComplexField,
    Grid,
    Side,
    p_zeta_symbol,
    q_tau_symbol,
    separable_analysis,
    separable_synthesis,
)

__all__ = [
    "Backend",
    "ResolventSpec",
    "ResolventDiagnostics",
    "resolve",
    "apply_helmholtz",
    "fundamental_solution",
    "green_function",
    "green_gradient",
    "conj_resolve_tau",
    "conj_resolve_zeta",
    "apply_conj_tau",
    "apply_conj_zeta",
    "support_radius",
]

log = logging.getLogger(__name__)


class Backend(str, enum.Enum):
    PV_SPHERE = "pv_sphere"
    ABSORPTION = "absorption"
    GREEN3D = "green3d"


@dataclass(frozen=True)
class ResolventSpec:
    """Resolvent parameters.

    ``sign`` is +1 for outgoing and -1 for ingoing waves.  ``valid_radius``
    bounds |x| for the points where the output must equal the R^d
    convolution; ``None`` means the whole box.
    """

    lam: float
    sign: int = 1
    backend: Backend = Backend.PV_SPHERE
    sphere_quad_order: int = 16
    epsilon_schedule: tuple[float, ...] | None = None
    valid_radius: float | None = None
    support_tol: float = 1e-14

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend(self.backend))
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ParameterError(f"lambda must be positive, got {self.lam}")
        if self.sign not in (1, -1):
            raise ParameterError("sign must be +1 (outgoing) or -1 (ingoing)")
        if self.sphere_quad_order < 8:
            raise ParameterError("sphere quadrature order must be at least 8")
        sched = self.schedule
        if any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
            raise ParameterError("absorption schedule must be positive and strictly decreasing")

    @property
    def k(self) -> float:
        return math.sqrt(self.lam)

    @property
    def schedule(self) -> tuple[float, ...]:
        if self.epsilon_schedule is not None:
            return tuple(float(e) for e in self.epsilon_schedule)
        eps0 = self.lam / 10.0
        return tuple(eps0 / 2.0**j for j in range(4))


@dataclass
class ResolventDiagnostics:
    backend: str
    padding: int
    cutoff_radius: float
    source_radius: float
    shell_mass: float = 0.0
    sphere_nodes: int = 0
    extrapolation_residual: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# ---------------------------------------------------------------- geometry helpers


def support_radius(f: ComplexField, tol: float = 1e-14) -> float:
    """Largest |x| at which |f| exceeds tol * max|f| (0 for the zero field)."""
    vals = np.abs(f.values())
    peak = vals.max()
    if peak == 0:
        return 0.0
    return float(f.grid.radius[vals > tol * peak].max())


def _layout(grid: Grid, valid_radius: float, source_radius: float, min_padding: int) -> tuple[int, float]:
    """Choose the padding factor P and cut-off radius a.

    Copies of the cut-off kernel sit 2 L P apart per axis, so they stay out of
    reach when 2 L P - (|x|_inf + |y|_inf) exceeds a = |x| + |y|.
    """
    diag = grid.L * math.sqrt(grid.d)
    rv = min(valid_radius, diag)
    rs = min(source_radius, diag)
    a = rv + rs + 2.0 * grid.dx
    reach_inf = min(rv, grid.L) + min(rs, grid.L)
    P = max(1, min_padding)
    while 2.0 * grid.L * P - reach_inf <= a + 2.0 * grid.dx:
        P += 1
    return P, a


@lru_cache(maxsize=6)
def _padded(grid: Grid, P: int) -> Grid:
    return grid if P == 1 else grid.padded(P)


def _embed(grid: Grid, P: int, data: np.ndarray) -> np.ndarray:
    if P == 1:
        return data.astype(complex, copy=True)
    big = np.zeros((grid.N * P,) * grid.d, dtype=complex)
    off = (P - 1) * grid.N // 2
    big[(slice(off, off + grid.N),) * grid.d] = data
    return big


def _extract(grid: Grid, P: int, data: np.ndarray) -> np.ndarray:
    if P == 1:
        return data
    off = (P - 1) * grid.N // 2
    return data[(slice(off, off + grid.N),) * grid.d]


def _apply_multiplier(grid: Grid, P: int, data: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    big = _embed(grid, P, data)
    spec = scipy.fft.fftn(big)
    spec *= multiplier
    return _extract(grid, P, scipy.fft.ifftn(spec, overwrite_x=True))


# ---------------------------------------------------------------- cut-off kernels


def _sinc_term(rho: np.ndarray, a: float) -> np.ndarray:
    """sin(rho a) / rho with its limit a at rho = 0."""
    return a * np.sinc(rho * a / math.pi)


def _outgoing_numerator(rho, k, a, d):
    """Numerator N with m = N / (k^2 - rho^2) for the outgoing kernel cut at a."""
    if d == 3:
        return 1.0 - np.exp(1j * k * a) * (np.cos(rho * a) - 1j * k * _sinc_term(rho, a))
    ka = k * a
    return 1.0 - 0.5j * math.pi * a * (k * special.hankel1(1, ka) * special.j0(rho * a)
                                        - rho * special.hankel1(0, ka) * special.j1(rho * a))


def _standing_numerator(rho, k, a, d):
    """Numerator for the standing-wave (principal value) kernel cut at a."""
    if d == 3:
        return 1.0 - math.cos(k * a) * np.cos(rho * a) - k * math.sin(k * a) * _sinc_term(rho, a)
    ka = k * a
    return 1.0 + 0.5 * math.pi * a * (k * special.y1(ka) * special.j0(rho * a)
                                      - rho * special.y0(ka) * special.j1(rho * a))


def _resonant_safe(numerator, rho: np.ndarray, k: float, a: float, d: int) -> np.ndarray:
    """Evaluate N(rho)/(k^2 - rho^2) for real k, removing the 0/0 at rho = k.

    Modes within s = 1e-3 / a of the sphere take a cubic interpolant through
    k +- s and k +- 2 s, where direct evaluation is well conditioned.
    """
    s = 1e-3 / a
    den = k**2 - rho**2
    near = np.abs(rho - k) < s
    safe_den = np.where(near, 1.0, den)
    out = numerator(rho, k, a, d) / safe_den
    if np.any(near):
        nodes = k + s * np.array([-2.0, -1.0, 1.0, 2.0])
        vals = numerator(nodes, k, a, d) / (k**2 - nodes**2)
        t = rho[near]
        interp = np.zeros(t.shape, dtype=np.result_type(vals, float))
        for i in range(4):
            basis = np.ones_like(t)
            for j in range(4):
                if j != i:
                    basis = basis * (t - nodes[j]) / (nodes[i] - nodes[j])
            interp = interp + vals[i] * basis
        out = out.astype(np.result_type(out, interp))
        out[near] = interp
    return out


def _outgoing_multiplier(rho, lam_complex: complex, a: float, d: int) -> np.ndarray:
    k = np.sqrt(complex(lam_complex))
    if k.imag < 0:
        k = -k
    if abs(k.imag) < 1e-300:
        return _resonant_safe(_outgoing_numerator, rho, k.real, a, d)
    return _outgoing_numerator(rho, k, a, d) / (k**2 - rho**2)


# ---------------------------------------------------------------- backends


def _sphere_term(f_data: np.ndarray, grid: Grid, k: float, sign: int, n: int) -> tuple[np.ndarray, float, int]:
    """-+ i pi/(2k) (2 pi)^(-d/2) * integral over |xi| = k of f_hat(xi) exp(i x.xi)."""
    from .potentials import sphere_quadrature

    d = grid.d
    quad = sphere_quadrature(k, n=n, d=d)
    x = grid.axis
    analysis = [np.exp(-1j * np.outer(quad.nodes[:, a], x)) for a in range(d)]
    fhat = (2 * math.pi) ** (-d / 2.0) * grid.cell_volume * separable_analysis(f_data, analysis)
    coef = (-sign * 1j * math.pi / (2 * k)) * (2 * math.pi) ** (-d / 2.0) * quad.weights * fhat
    synthesis = [np.conj(f) for f in analysis]
    field_vals = separable_synthesis(coef, synthesis)
    shell_mass = float(np.sum(quad.weights * np.abs(fhat) ** 2))
    return field_vals, shell_mass, quad.nodes.shape[0]


def _sphere_order(spec: ResolventSpec, d: int, reach: float) -> int:
    band = spec.k * reach
    if d == 3:
        return max(spec.sphere_quad_order, int(math.ceil((band + 12.0) / 2.0)))
    return max(spec.sphere_quad_order, int(math.ceil(2.0 * band + 24.0)))


@lru_cache(maxsize=4)
def _multipliers(big: Grid, backend: Backend, lam: float, sign: int, a: float,
                 schedule: tuple[float, ...]) -> tuple[np.ndarray, np.ndarray | None]:
    """Cut-off kernel multiplier on the padded lattice, plus the gap between
    the full and reduced extrapolations for the absorption backend."""
    rho = big.xi_norm
    k = math.sqrt(lam)
    gap = None
    if backend is Backend.PV_SPHERE:
        mult = _resonant_safe(_standing_numerator, rho, k, a, big.d)
    elif backend is Backend.ABSORPTION:
        eps = np.asarray(schedule)
        weights = _extrapolation_weights(eps)
        lower = _extrapolation_weights(eps[:-1])
        mults = [_outgoing_multiplier(rho, lam + 1j * e, a, big.d) for e in eps]
        mult = sum(w * m for w, m in zip(weights, mults))
        gap = sum(w * m for w, m in zip(lower, mults[:-1])) - mult
    else:
        mult = _outgoing_multiplier(rho, lam, a, big.d)
    if sign < 0 and backend is not Backend.PV_SPHERE:
        mult = np.conj(mult)
        gap = None if gap is None else np.conj(gap)
    return mult, gap


def resolve(f: ComplexField, spec: ResolventSpec, diagnostics: dict | None = None,
            source_radius: float | None = None) -> ComplexField:
    """Apply (Delta + lam +- i0)^(-1) to a band-limited source on the grid.

    ``source_radius`` overrides the measured support radius of ``f``; callers
    that solve many problems with a common bound pass it so the multiplier is
    built once.
    """
    grid = f.grid
    data = f.values()
    if not np.all(np.isfinite(data)):
        raise ParameterError("source contains non-finite values")
    if spec.backend is Backend.GREEN3D and grid.d != 3:
        raise ParameterError("green3d backend is only available in d = 3")
    r_src = support_radius(f, spec.support_tol) if source_radius is None else float(source_radius)
    diag_len = grid.L * math.sqrt(grid.d)
    r_valid = diag_len if spec.valid_radius is None else float(spec.valid_radius)
    min_pad = 2 if spec.backend is Backend.GREEN3D else 1
    P, a = _layout(grid, r_valid, r_src, min_pad)
    diag = ResolventDiagnostics(spec.backend.value, P, a, r_src)

    if not np.any(data):
        out = np.zeros_like(data, dtype=complex)
    else:
        mult, gap = _multipliers(_padded(grid, P), spec.backend, spec.lam, spec.sign, a, spec.schedule)
        spec_big = scipy.fft.fftn(_embed(grid, P, data))
        if gap is not None:
            num = float(np.sum(np.abs(gap * spec_big) ** 2))
            den = float(np.sum(np.abs(mult * spec_big) ** 2))
            diag.extrapolation_residual = math.sqrt(num / den) if den > 0 else 0.0
        spec_big *= mult
        out = _extract(grid, P, scipy.fft.ifftn(spec_big, overwrite_x=True))
        if spec.backend is Backend.PV_SPHERE:
            n = _sphere_order(spec, grid.d, min(r_valid, diag_len) + min(r_src, diag_len))
            sphere_vals, mass, nodes = _sphere_term(data, grid, spec.k, spec.sign, n)
            out = out + sphere_vals
            diag.shell_mass, diag.sphere_nodes = mass, nodes
    if diagnostics is not None:
        diagnostics.update(diag.to_dict())
    return ComplexField.physical(grid, out)


def _extrapolation_weights(eps: np.ndarray) -> np.ndarray:
    """Lagrange weights that evaluate the interpolant through (eps_j, u_j) at 0."""
    w = np.ones(len(eps))
    for i in range(len(eps)):
        for j in range(len(eps)):
            if i != j:
                w[i] *= eps[j] / (eps[j] - eps[i])
    return w


def apply_helmholtz(u: ComplexField, lam: float) -> ComplexField:
    """(Delta + lam) u computed spectrally on the periodic grid."""
    spec = u.spectrum() * (lam - u.grid.xi_squared)
    return ComplexField(u.grid, Side.FREQUENCY, spec).to_physical()


# ---------------------------------------------------------------- point sources


def green_function(x, y, lam: float, sign: int = 1) -> np.ndarray:
    """Closed-form Phi^{+-}(x - y) at off-grid points (rows of x, y broadcast)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    r = np.linalg.norm(x - y, axis=-1)
    k = math.sqrt(lam)
    d = x.shape[-1]
    if d == 3:
        val = -np.exp(1j * k * r) / (4 * math.pi * r)
    elif d == 2:
        val = -0.25j * special.hankel1(0, k * r)
    else:
        raise ParameterError("d must be 2 or 3")
    return val if sign > 0 else np.conj(val)


def green_gradient(x, y, lam: float, sign: int = 1) -> np.ndarray:
    """Gradient in x of the closed-form kernel Phi^{+-}(x - y)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    diff = x - y
    r = np.linalg.norm(diff, axis=-1)
    k = math.sqrt(lam)
    d = x.shape[-1]
    if d == 3:
        radial = -np.exp(1j * k * r) * (1j * k * r - 1.0) / (4 * math.pi * r**2)
    else:
        radial = 0.25j * k * special.hankel1(1, k * r)
    if sign < 0:
        radial = np.conj(radial)
    return radial[..., None] * diff / r[..., None]


def fundamental_solution(y, spec: ResolventSpec, grid: Grid, width: float | None = None,
                         diagnostics: dict | None = None) -> ComplexField:
    """Resolvent applied to a Gaussian-mollified delta at y.

    The mollifier is rescaled by exp(sigma^2 lam / 2) so that, away from a few
    sigma around y, the output equals the point-source kernel rather than its
    smoothed version (a radial average of a Helmholtz solution scales it by the
    mollifier's transform at |xi| = sqrt(lam)).
    """
    y = np.asarray(y, dtype=float)
    sigma = mollifier_sigma(grid, width)
    if np.any(np.abs(y) > grid.L - 8.0 * sigma):
        raise ParameterError(f"source point {y.tolist()} is too close to the box boundary")
    scale = math.exp(0.5 * sigma**2 * spec.lam)
    src = deposit_charges(grid, y[None, :], np.array([scale]), sigma)
    return resolve(src, spec, diagnostics)


# ---------------------------------------------------------------- conjugated operators


def _zero_set_guard(spec: np.ndarray, symbol: np.ndarray, floor: float, grid: Grid, what: str) -> np.ndarray:
    near = np.abs(symbol) < floor
    if np.any(near):
        total = grid.l2_frequency(spec)
        mass = grid.l2_frequency(np.where(near, spec, 0))
        if total > 0 and mass > 1e-10 * total:
            modes = [tuple(int(i) for i in idx) for idx in np.argwhere(near)[:20]]
            raise SymbolSingularityError(
                f"symbol singularity: {what} nearly vanishes on {int(near.sum())} modes carrying "
                f"relative mass {mass / total:.3g}; lattice indices {modes}",
                modes,
            )
    return np.where(near, 0.0, 1.0 / np.where(near, 1.0, symbol))


def conj_resolve_tau(f: ComplexField, tau: float) -> ComplexField:
    """(Delta + 2 tau d/dx_d + tau^2)^(-1): divide the spectrum by q_tau."""
    if not tau > 0:
        raise ParameterError("tau must be positive")
    q = q_tau_symbol(f.grid, tau)
    spec = f.spectrum()
    inv = _zero_set_guard(spec, q, symbol_floor(tau), f.grid, "q_tau")
    return ComplexField(f.grid, Side.FREQUENCY, spec * inv)


def apply_conj_tau(u: ComplexField, tau: float) -> ComplexField:
    return ComplexField(u.grid, Side.FREQUENCY, u.spectrum() * q_tau_symbol(u.grid, tau))


def _check_zeta(zeta: np.ndarray, lam: float | None) -> float:
    square = complex(np.sum(zeta * zeta))
    size2 = float(np.sum(np.abs(zeta) ** 2))
    if lam is None:
        lam = -square.real
    if abs(square + lam) > 1e-12 * max(1.0, size2):
        raise ParameterError(f"zeta.zeta = {square} differs from -lambda = {-lam}")
    return float(lam)


def conj_resolve_zeta(f: ComplexField, zeta, lam: float | None = None) -> ComplexField:
    """(Delta + 2 zeta.grad)^(-1): divide the spectrum by p_zeta."""
    zeta = np.asarray(zeta, dtype=complex)
    _check_zeta(zeta, lam)
    p = p_zeta_symbol(f.grid, zeta)
    spec = f.spectrum()
    floor = symbol_floor(float(np.sqrt(np.sum(np.abs(zeta) ** 2))))
    inv = _zero_set_guard(spec, p, floor, f.grid, "p_zeta")
    return ComplexField(f.grid, Side.FREQUENCY, spec * inv)


def apply_conj_zeta(u: ComplexField, zeta) -> ComplexField:
    zeta = np.asarray(zeta, dtype=complex)
    return ComplexField(u.grid, Side.FREQUENCY, u.spectrum() * p_zeta_symbol(u.grid, zeta))
