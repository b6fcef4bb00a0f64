"""Point-source scattering by a grid potential plus a delta shell.

The total field solves (Delta + lam - V0 - alpha dsigma) u = 0 with incident
wave u_in(x, y) = Phi(x - y).  The solve has two stages:

* the volume part (Delta + lam +- i0 - V0)^(-1) is a Neumann series in
  R o V0, R being the free resolvent, guarded by a measured contraction proxy;
* the shell part is a dense linear system for the scattered field at the shell
  nodes.

Discretization of the shell.  Shell charges are deposited on the grid as
unit-mass Gaussians eta (width from ``mollifier_sigma``) and shell traces are
pairings with the same Gaussians, each rescaled by c = exp(sigma^2 lam / 2).
That factor undoes the Gaussian's effect on a Helmholtz solution away from the
charge.  Because the deposit is the transpose of the trace and R is a
symmetric convolution, the discrete interaction operator is symmetric and the
data matrix inherits exact reciprocity.  Incident waves on the scatterer and
the far interaction with receivers use the closed-form kernel.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special

from .errors import DivergenceError, ParameterError, RegimeError
from .funcspaces import x_star_norm
from .potentials import (
    DeltaShell,
    GridPotential,
    deposit_charges,
    mollifier_sigma,
    smoothed_trace,
    sphere_quadrature,
)
from .resolvent import (
    Backend,
    ResolventSpec,
    apply_helmholtz,
    green_function,
    green_gradient,
    resolve,
    support_radius,
)
from .spectral_core import ComplexField, Grid, Side, fourier_eval

__all__ = [
    "ScatteringProblem",
    "ScatteringData",
    "NeumannResult",
    "SRCReport",
    "boundary_points",
    "contraction_proxy",
    "incident_wave",
    "neumann_resolve_V0",
    "solve_scattering",
    "src_residual",
    "field_evaluators",
    "closed_form_evaluators",
    "reciprocity_check",
    "shell_residual",
    "orthogonality_test",
]

log = logging.getLogger(__name__)


def boundary_points(R0: float, n: int, d: int = 3) -> np.ndarray:
    """Source/receiver positions on |x| = R0 from the shell's lat-long rule."""
    return sphere_quadrature(R0, n=n, d=d).nodes


@dataclass
class ScatteringProblem:
    """Geometry, potential and numerical controls of one scattering experiment."""

    grid: Grid
    lam: float
    sources: np.ndarray
    receivers: np.ndarray
    R0: float
    V0: GridPotential | None = None
    shell: DeltaShell | None = None
    sign: int = 1
    backend: Backend = Backend.ABSORPTION
    width: float | None = None
    tol: float = 1e-12
    max_iter: int = 30
    probes: int = 3
    power_steps: int = 4
    seed: int = 0
    _proxy: float | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.sources = np.atleast_2d(np.asarray(self.sources, dtype=float))
        self.receivers = np.atleast_2d(np.asarray(self.receivers, dtype=float))
        self.backend = Backend(self.backend)
        g = self.grid
        errors = []
        if not (np.isfinite(self.lam) and self.lam > 0):
            errors.append(f"lambda must be positive, got {self.lam}")
        if self.sign not in (1, -1):
            errors.append("sign must be +1 or -1")
        if self.R0 < 1.0:
            errors.append(f"R0 = {self.R0} must be at least 1")
        if self.R0 > g.L / 4.0 + 1e-12:
            errors.append(f"margin violation: R0 = {self.R0} exceeds L/4 = {g.L / 4.0}")
        for name, pts in (("source", self.sources), ("receiver", self.receivers)):
            if pts.shape[1] != g.d:
                errors.append(f"{name} points must have {g.d} coordinates")
                continue
            dev = np.abs(np.linalg.norm(pts, axis=1) - self.R0)
            if np.any(dev > 1e-9 * self.R0):
                errors.append(f"{name} points must lie on |x| = R0 (max deviation {dev.max():.3g})")
        if self.V0 is not None:
            if self.V0.grid != g:
                errors.append("V0 lives on a different grid")
            elif self.V0.support_radius > self.R0:
                errors.append("V0 support exceeds B_0")
        if self.shell is not None:
            nodes = self.shell.surface.nodes
            if nodes.shape[1] != g.d:
                errors.append("shell dimension does not match grid")
            elif np.any(np.linalg.norm(nodes, axis=1) >= self.R0):
                errors.append("shell nodes must lie inside B_0")
        if self.tol <= 0 or self.max_iter < 1:
            errors.append("tol must be positive and max_iter at least 1")
        if errors:
            raise ParameterError("; ".join(errors))
        reach = self.interaction_radius
        if reach + 2.0 * self.sigma > g.L:
            raise ParameterError(f"mollified shell charges reach {reach:.3g}, too close to the box boundary")

    @property
    def sigma(self) -> float:
        return mollifier_sigma(self.grid, self.width)

    @property
    def scale(self) -> float:
        """Mollifier correction c = exp(sigma^2 lam / 2)."""
        return math.exp(0.5 * self.sigma**2 * self.lam)

    @property
    def interaction_radius(self) -> float:
        """Radius containing every internal source: V0 and the shell charges."""
        r = 0.0
        if self.V0 is not None:
            r = self.V0.support_radius
        if self.shell is not None:
            r = max(r, float(np.linalg.norm(self.shell.surface.nodes, axis=1).max()) + 6.0 * self.sigma)
        return r

    @property
    def resolvent(self) -> ResolventSpec:
        """Free resolvent, exact on B_0 and on the scatterer's reach."""
        return ResolventSpec(self.lam, sign=self.sign, backend=self.backend,
                             valid_radius=max(self.interaction_radius, self.R0))

    def source_bound(self, f: ComplexField | None = None) -> float:
        """Common source radius for all resolvent applications of one solve.

        Using one cut-off kernel throughout keeps R a single linear operator,
        so the series reproduces manufactured solutions exactly.
        """
        radius = max(self.interaction_radius, self.grid.dx)
        return radius if f is None else max(radius, support_radius(f))

    def apply_resolvent(self, f: ComplexField, radius: float | None = None) -> ComplexField:
        return resolve(f, self.resolvent, source_radius=self.source_bound() if radius is None else radius)

    def apply_V0(self, u: ComplexField) -> ComplexField:
        return ComplexField.physical(self.grid, self.V0.values * u.values())


@dataclass
class NeumannResult:
    field: ComplexField
    iterations: int
    residual: float | None
    term_ratios: list[float]
    proxy: float


@dataclass
class ScatteringData:
    """Scattered field values indexed (receiver, source)."""

    matrix: np.ndarray
    lam: float
    sign: int
    receivers: np.ndarray
    sources: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.matrix.shape == (len(self.receivers), len(self.sources)) and \
                self.matrix.shape[0] == self.matrix.shape[1] and np.allclose(self.receivers, self.sources):
            self.metadata.setdefault("reciprocity_defect", reciprocity_check(self)["defect"])


# ---------------------------------------------------------------- volume stage


def _probe_fields(problem: ScatteringProblem) -> list[ComplexField]:
    rng = np.random.default_rng(problem.seed)
    g = problem.grid
    band = g.xi_norm <= 2.0 * math.sqrt(problem.lam)
    probes = []
    for _ in range(problem.probes):
        spec = (rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)) * band
        probes.append(ComplexField(g, Side.FREQUENCY, spec).to_physical())
    return probes


def contraction_proxy(problem: ScatteringProblem) -> float:
    """Largest measured X*_lam gain of R o V0 over probes and power iterates."""
    if problem._proxy is not None:
        return problem._proxy
    if problem.V0 is None or problem.V0.sup == 0:
        problem._proxy = 0.0
        return 0.0
    worst = 0.0
    for p in _probe_fields(problem):
        p_norm = x_star_norm(p, problem.lam).value
        for _ in range(problem.power_steps):
            q = problem.apply_resolvent(problem.apply_V0(p))
            q_norm = x_star_norm(q, problem.lam).value
            if p_norm == 0 or q_norm == 0:
                break
            worst = max(worst, q_norm / p_norm)
            p, p_norm = ComplexField.physical(problem.grid, q.values() / q_norm), 1.0
    problem._proxy = worst
    log.debug("contraction proxy %.4g", worst)
    return worst


def neumann_resolve_V0(f: ComplexField, problem: ScatteringProblem, check_residual: bool = True) -> NeumannResult:
    """(Delta + lam +- i0 - V0)^(-1) f as the series sum_n (R V0)^n R f."""
    radius = problem.source_bound(f)
    first = problem.apply_resolvent(f, radius)
    if problem.V0 is None or problem.V0.sup == 0:
        return NeumannResult(first, 0, 0.0 if check_residual else None, [], 0.0)
    rho = contraction_proxy(problem)
    if rho >= 1.0:
        raise RegimeError(
            f"below lambda_0: contraction proxy {rho:.3g} >= 1 for lambda = {problem.lam}; "
            "increase lambda or reduce the potential"
        )
    total = first.values().copy()
    term = first
    norms = [np.linalg.norm(first.values())]
    ratios = []
    it = 0
    while True:
        if it >= problem.max_iter:
            raise DivergenceError(
                f"Neumann series did not reach tolerance {problem.tol} in {problem.max_iter} iterations "
                f"(last term ratio {ratios[-1]:.3g}, proxy {rho:.3g})"
            )
        it += 1
        term = problem.apply_resolvent(problem.apply_V0(term), radius)
        total += term.values()
        norms.append(np.linalg.norm(term.values()))
        total_norm = np.linalg.norm(total)
        ratios.append(norms[-1] / total_norm if total_norm > 0 else 0.0)
        if ratios[-1] < problem.tol:
            break
        recent = norms[-6:]
        if len(recent) == 6 and all(b >= a for a, b in zip(recent, recent[1:])):
            raise RegimeError(
                f"below lambda_0: Neumann terms grew for 5 steps (proxy {rho:.3g}); increase lambda"
            )
    u = ComplexField.physical(problem.grid, total)
    residual = None
    if check_residual:
        # Lippmann-Schwinger form u - R(V0 u) - R f, measured on B_0
        r = total - problem.apply_resolvent(problem.apply_V0(u), radius).values() - first.values()
        ball = problem.grid.radius <= problem.R0
        denom = np.linalg.norm(first.values()[ball])
        residual = float(np.linalg.norm(r[ball]) / denom) if denom > 0 else 0.0
    return NeumannResult(u, it, residual, ratios, rho)


# ---------------------------------------------------------------- incident waves


def incident_wave(y, problem: ScatteringProblem) -> tuple[ComplexField, callable]:
    """Mollified grid field of Phi(. - y) and its closed-form off-grid evaluator."""
    from .resolvent import fundamental_solution

    y = np.asarray(y, dtype=float)
    if np.linalg.norm(y) < problem.R0 - 1e-9 * problem.R0:
        raise ParameterError(f"source point at distance {np.linalg.norm(y):.3g} is inside B_0")
    spec = ResolventSpec(problem.lam, sign=problem.sign, backend=problem.backend)
    grid_field = fundamental_solution(y, spec, problem.grid, problem.width)

    def evaluate(points):
        return green_function(points, y[None, :], problem.lam, problem.sign)

    return grid_field, evaluate


# ---------------------------------------------------------------- shell stage


def _shell_trace(problem: ScatteringProblem, u: ComplexField) -> np.ndarray:
    return problem.scale * smoothed_trace(u, problem.shell.surface.nodes, problem.sigma)


def _shell_deposit(problem: ScatteringProblem, charges: np.ndarray) -> ComplexField:
    return deposit_charges(problem.grid, problem.shell.surface.nodes, problem.scale * charges, problem.sigma)


def solve_scattering(problem: ScatteringProblem, keep_fields: bool = False):
    """Solve for every source; return (scattered fields or None, ScatteringData).

    The shell unknowns are the scattered field values t at the nodes and solve
    (I - A) t = b with A_ij = c^2 <eta_i, N eta_j> w_j alpha_j, N being the
    Neumann inverse for V0.
    """
    g = problem.grid
    lam, sign = problem.lam, problem.sign
    has_v0 = problem.V0 is not None and problem.V0.sup > 0
    has_shell = problem.shell is not None and problem.shell.alpha_sup > 0
    n_rec, n_src = len(problem.receivers), len(problem.sources)
    meta = {"iterations": [], "residuals": [], "proxy": 0.0}
    if not (has_v0 or has_shell):
        fields = [ComplexField.zeros(g) for _ in range(n_src)] if keep_fields else None
        return fields, ScatteringData(np.zeros((n_rec, n_src), complex), lam, sign,
                                      problem.receivers, problem.sources, meta)

    if has_v0:
        meta["proxy"] = contraction_proxy(problem)
        mask = problem.V0.values != 0
        coords = np.stack([np.broadcast_to(c, g.shape)[mask] for c in g.coords()], axis=-1)
        v0_vals = problem.V0.values[mask]

    if has_shell:
        nodes = problem.shell.surface.nodes
        w_alpha = problem.shell.surface.weights * problem.shell.alpha
        m = len(nodes)
        A = np.empty((m, m), dtype=complex)
        for j in range(m):
            unit = np.zeros(m, complex)
            unit[j] = 1.0
            col = neumann_resolve_V0(_shell_deposit(problem, unit), problem, check_residual=False)
            A[:, j] = _shell_trace(problem, col.field) * w_alpha[j]
        system = np.eye(m) - A
        cond = float(np.linalg.cond(system))
        meta["fredholm_condition"] = cond
        meta["fredholm_ill_conditioned"] = bool(cond > 1e10)
        if cond > 1e10:
            log.warning("Fredholm matrix nearly singular (condition %.3g)", cond)
        lu = scipy.linalg.lu_factor(system)

    data = np.zeros((n_rec, n_src), dtype=complex)
    fields = [] if keep_fields else None
    for s, y in enumerate(problem.sources):
        source = np.zeros(g.shape, complex)
        if has_v0:
            u_in_mask = green_function(coords, y[None, :], lam, sign)
            source[mask] = v0_vals * u_in_mask
        src_field = ComplexField.physical(g, source)
        charges = None
        if has_shell:
            t_in = green_function(nodes, y[None, :], lam, sign)
            b = A @ t_in
            if has_v0:
                b += _shell_trace(problem, neumann_resolve_V0(src_field, problem, check_residual=False).field)
            t = scipy.linalg.lu_solve(lu, b)
            charges = w_alpha * (t + t_in)
            src_field = src_field + _shell_deposit(problem, charges)
        result = neumann_resolve_V0(src_field, problem)
        meta["iterations"].append(result.iterations)
        meta["residuals"].append(result.residual)
        if keep_fields:
            fields.append(result.field)
        # receivers see the closed-form kernel against the induced sources
        values = np.zeros(n_rec, complex)
        if has_v0:
            u_tot = u_in_mask + result.field.values()[mask]
            kernel = green_function(problem.receivers[:, None, :], coords[None, :, :], lam, sign)
            values += kernel @ (v0_vals * u_tot) * g.cell_volume
        if has_shell:
            kernel = green_function(problem.receivers[:, None, :], nodes[None, :, :], lam, sign)
            values += kernel @ charges
        data[:, s] = values
    return fields, ScatteringData(data, lam, sign, problem.receivers, problem.sources, meta)


# ---------------------------------------------------------------- structural checks


@dataclass
class SRCReport:
    radii: np.ndarray
    values: np.ndarray
    slope: float


def _sphere_directions(d: int, n: int) -> np.ndarray:
    return sphere_quadrature(1.0, n=n, d=d).nodes


def field_evaluators(u: ComplexField):
    """Exact band-limited evaluators of u and its gradient at off-grid points."""
    g = u.grid
    spec = u.spectrum()
    grads = [1j * k * spec for k in g.frequencies()]

    def value(points):
        return fourier_eval(g, spec, points)

    def gradient(points):
        return np.stack([fourier_eval(g, s, points) for s in grads], axis=-1)

    value.domain_radius = gradient.domain_radius = g.L
    return value, gradient


def closed_form_evaluators(y, lam: float, sign: int = 1):
    """Evaluators of Phi^{sign}(. - y) and its gradient."""
    y = np.atleast_2d(np.asarray(y, dtype=float))

    def value(points):
        return green_function(points, y, lam, sign)

    def gradient(points):
        return green_gradient(points, y, lam, sign)

    return value, gradient


def src_residual(value, gradient, lam: float, sign: int, radii, d: int = 3, n: int = 6,
                 center=None) -> SRCReport:
    """Sommerfeld combination sup_{|x|=R} |x_hat . grad u -+ i sqrt(lam) u| per radius.

    The slope is the least-squares fit of log(value * R^((d-1)/2)) against
    log R.  It is NaN when some value vanishes.
    """
    radii = np.asarray(radii, dtype=float)
    limit = getattr(value, "domain_radius", np.inf)
    if np.any(radii >= limit):
        raise ParameterError(f"radii up to {radii.max()} exceed the evaluation domain {limit}")
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    dirs = _sphere_directions(d, n)
    k = math.sqrt(lam)
    out = []
    for R in radii:
        pts = center + R * dirs
        comb = np.sum(dirs * gradient(pts), axis=-1) - sign * 1j * k * value(pts)
        out.append(float(np.abs(comb).max()))
    out = np.asarray(out)
    if np.all(out > 0) and len(radii) >= 2:
        slope = float(np.polyfit(np.log(radii), np.log(out * radii ** ((d - 1) / 2.0)), 1)[0])
    else:
        slope = float("nan")
    return SRCReport(radii, out, slope)


def reciprocity_check(data: ScatteringData) -> dict:
    """defect = max|D - D^T| / max|D|, with 0/0 read as 0."""
    D = data.matrix
    if D.shape[0] != D.shape[1]:
        raise ParameterError("reciprocity needs a square data matrix")
    scale = float(np.abs(D).max())
    diff = float(np.abs(D - D.T).max())
    return {"defect": diff / scale if scale > 0 else 0.0, "max_abs": scale, "max_difference": diff}


def shell_residual(v: ComplexField, lam: float, V0: GridPotential | None = None,
                   shell: DeltaShell | None = None, R0: float | None = None,
                   width: float | None = None) -> float:
    """Relative residual of (Delta + lam - V0 - alpha dsigma) v on B_0.

    The shell acts through the same scaled Gaussian deposit and trace pair
    used in the scattering solver.  Fields produced by the cut-off resolvent
    are not periodic on the box, so v is first tapered by an erfc profile that
    equals 1 to round-off on the measured ball and vanishes at the box edge;
    otherwise the spectral Laplacian would see the wrap-around jump.
    """
    g = v.grid
    radius = g.L if R0 is None else R0
    if radius < g.L:
        edge = (g.L - radius) / 9.0
        taper = 0.5 * scipy.special.erfc((g.radius - 0.5 * (g.L + radius)) / edge)
        r = apply_helmholtz(ComplexField.physical(g, taper * v.values()), lam).values()
    else:
        r = apply_helmholtz(v, lam).values()
    if V0 is not None:
        r = r - V0.values * v.values()
    if shell is not None:
        sigma = mollifier_sigma(g, width)
        c = math.exp(0.5 * sigma**2 * lam)
        nodes = shell.surface.nodes
        tr = c * smoothed_trace(v, nodes, sigma)
        r = r - deposit_charges(g, nodes, c * shell.alpha * shell.surface.weights * tr, sigma).values()
    ball = g.radius <= radius
    denom = np.linalg.norm(v.values()[ball])
    return float(np.linalg.norm(r[ball]) / denom) if denom > 0 else 0.0


def _potential_pairing(V0, shell, u, v, lam, width) -> complex:
    total = 0j
    g = u.grid
    if V0 is not None:
        total += complex(np.sum(V0.values * u.values() * v.values()) * g.cell_volume)
    if shell is not None:
        sigma = mollifier_sigma(g, width)
        c = math.exp(0.5 * sigma**2 * lam)
        nodes = shell.surface.nodes
        tu = c * smoothed_trace(u, nodes, sigma)
        tv = c * smoothed_trace(v, nodes, sigma)
        total += complex(np.sum(shell.alpha * shell.surface.weights * tu * tv))
    return total


def orthogonality_test(V1: tuple, V2: tuple, v1: ComplexField, v2: ComplexField, lam: float,
                       R0: float | None = None, width: float | None = None,
                       max_residual: float = 1e-6, check: bool = True) -> complex:
    """<(V1 - V2) v1, v2> for potentials given as (V0, shell) pairs.

    With ``check`` the fields must solve their equations on B_0 with relative
    residual below ``max_residual``.
    """
    if check:
        for name, (V0, shell), v in (("v1", V1, v1), ("v2", V2, v2)):
            res = shell_residual(v, lam, V0, shell, R0, width)
            if res > max_residual:
                raise ParameterError(f"{name} does not solve its equation on B_0: residual {res:.3g}")
    return _potential_pairing(*V1, v1, v2, lam, width) - _potential_pairing(*V2, v1, v2, lam, width)
