"""Complex geometrical optics solutions and the Fourier pairing of V1 - V2.

A CGO solution of (Delta + lam - V) v = 0 has the form v = exp(zeta.x)(1 + w)
with zeta.zeta = -lam, and the correction solves
(Delta + 2 zeta.grad) w = V (1 + w).  For a pair zeta1 + zeta2 = -i kappa the
product v1 v2 = exp(-i kappa.x)(1 + w1)(1 + w2) stays bounded, so pairings of
two solutions never form exp(zeta.x) itself.

The correction is computed by fixed-point iteration on a Bloch-shifted lattice:
w = exp(i s.x) w_per with w_per periodic, which turns the symbol into
p_zeta(xi + s).  The shift s is chosen to keep p_zeta away from zero on the
lattice (the unshifted lattice contains xi = 0, where p_zeta vanishes).

Shell potentials act as multiplication by the mollified surface density
rho(x) = sum_n w_n alpha_n G_sigma(x - n).  A multiplication operator commutes
with exp(zeta.x), so the conjugated problem never sees exponential factors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import special_ortho_group

from .errors import DivergenceError, ParameterError, RegimeError
from .funcspaces import xzeta_norm
from .potentials import DeltaShell, GridPotential, deposit_charges, mollifier_sigma
from .spectral_core import ComplexField, Grid, p_zeta_symbol, separable_synthesis

__all__ = [
    "ZetaPair",
    "make_zeta_pair",
    "haar_rotation",
    "CGOPotential",
    "CGOSolution",
    "cgo_correction",
    "cgo_pairing",
    "direct_pairing",
    "potential_xzeta_norm",
    "reconstruct_fourier",
    "rotation_average_decay",
]

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- zeta pairs


@dataclass(frozen=True)
class ZetaPair:
    zeta1: np.ndarray
    zeta2: np.ndarray
    kappa: np.ndarray
    tau: float
    lam: float
    eta: np.ndarray
    theta: np.ndarray

    def invariant_defects(self) -> dict[str, float]:
        """Deviation of each defining identity; all should be round-off small.

        The squares are measured relative to max(1, |zeta|^2): evaluating
        zeta.zeta in floating point already rounds at that scale.
        """
        k = self.kappa

        def square(z):
            return abs(complex(z @ z) + self.lam) / max(1.0, float(np.sum(np.abs(z) ** 2)))

        return {
            "square1": square(self.zeta1),
            "square2": square(self.zeta2),
            "sum": float(np.abs(self.zeta1 + self.zeta2 + 1j * k).max()),
            "orthogonality": float(max(abs(self.eta @ self.theta), abs(self.eta @ k), abs(self.theta @ k))),
            "unit": float(max(abs(np.linalg.norm(self.eta) - 1), abs(np.linalg.norm(self.theta) - 1))),
        }

    def rotated(self, T: np.ndarray) -> "ZetaPair":
        return ZetaPair(T @ self.zeta1, T @ self.zeta2, T @ self.kappa, self.tau, self.lam,
                        T @ self.eta, T @ self.theta)


def make_zeta_pair(kappa, tau: float, lam: float, seed: int = 0) -> ZetaPair:
    """zeta_{1,2} = +-tau eta + i(-kappa/2 +- sqrt(tau^2 + lam - |kappa|^2/4) theta)."""
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (3,):
        raise ParameterError("zeta pairs are built in d = 3")
    if not np.all(np.isfinite(kappa)):
        raise ParameterError("kappa must be finite")
    radicand = tau**2 + lam - kappa @ kappa / 4.0
    # tau^2 = |kappa|^2/4 - lambda is admissible; absorb its round-off
    if abs(radicand) <= 1e-12 * max(1.0, tau**2 + abs(lam)):
        radicand = 0.0
    if radicand < 0 or tau <= 0:
        raise ParameterError(f"tau = {tau} too small: need tau^2 >= |kappa|^2/4 - lambda")
    rng = np.random.default_rng(seed)
    basis = []
    k_norm = np.linalg.norm(kappa)
    if k_norm > 0:
        basis.append(kappa / k_norm)
    while len(basis) < 3:
        v = rng.standard_normal(3)
        for b in basis:
            v -= (v @ b) * b
        n = np.linalg.norm(v)
        if n > 1e-8:
            basis.append(v / n)
    eta, theta = basis[-2], basis[-1]
    # clean the last bits of orthogonality against kappa
    if k_norm > 0:
        eta = eta - (eta @ kappa) / k_norm**2 * kappa
        eta /= np.linalg.norm(eta)
        theta = np.cross(kappa / k_norm, eta)
    root = math.sqrt(radicand)
    zeta1 = tau * eta + 1j * (-kappa / 2.0 + root * theta)
    zeta2 = -tau * eta + 1j * (-kappa / 2.0 - root * theta)
    return ZetaPair(zeta1, zeta2, kappa.copy(), float(tau), float(lam), eta, theta)


def haar_rotation(rng: np.random.Generator, d: int = 3) -> np.ndarray:
    return special_ortho_group.rvs(d, random_state=rng)


# ---------------------------------------------------------------- potentials


@dataclass
class CGOPotential:
    """V = V0 + alpha dsigma on a grid; the shell enters through its mollified density."""

    grid: Grid
    V0: GridPotential | None = None
    shell: DeltaShell | None = None
    width: float | None = None
    _density: np.ndarray | None = field(default=None, init=False, repr=False)
    _spectrum: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.V0 is not None and self.V0.grid != self.grid:
            raise ParameterError("V0 lives on a different grid")
        if self.shell is not None and self.shell.surface.nodes.shape[1] != self.grid.d:
            raise ParameterError("shell dimension does not match grid")

    @property
    def is_zero(self) -> bool:
        return (self.V0 is None or self.V0.sup == 0) and (self.shell is None or self.shell.alpha_sup == 0)

    @property
    def sigma(self) -> float:
        return mollifier_sigma(self.grid, self.width)

    @property
    def shell_weights(self) -> np.ndarray:
        return self.shell.surface.weights * self.shell.alpha

    @property
    def values(self) -> np.ndarray:
        """Grid samples of V0 + rho."""
        if self._density is None:
            out = np.zeros(self.grid.shape, dtype=complex)
            if self.V0 is not None:
                out += self.V0.values
            if self.shell is not None and self.shell.alpha_sup > 0:
                out += deposit_charges(self.grid, self.shell.surface.nodes, self.shell_weights.astype(complex),
                                       self.sigma).values()
            self._density = out
        return self._density

    def conjugated_apply(self, g: np.ndarray, zeta=None, lam: float | None = None) -> np.ndarray:
        """exp(-zeta.x) V (exp(zeta.x) g), which is V g for a multiplication operator."""
        return self.values * g

    def spectrum(self) -> np.ndarray:
        """Lattice transform of V0 plus the exact transform of the shell measure."""
        if self._spectrum is None:
            g = self.grid
            spec = np.zeros(g.shape, dtype=complex)
            if self.V0 is not None:
                spec += g.forward(self.V0.values.astype(complex))
            if self.shell is not None:
                nodes = self.shell.surface.nodes
                factors = [np.exp(-1j * np.outer(nodes[:, a], g.wavenumbers)) for a in range(g.d)]
                coef = (2 * math.pi) ** (-g.d / 2.0) * self.shell_weights.astype(complex)
                spec += separable_synthesis(coef, factors)
            self._spectrum = spec
        return self._spectrum


def potential_xzeta_norm(potential: CGOPotential, zeta, s: float = -0.5) -> float:
    """||V||_{X^s_zeta} from the lattice spectrum of V0 + alpha dsigma."""
    g = potential.grid
    zeta = np.asarray(zeta, dtype=complex)
    size = float(np.sqrt(np.sum(np.abs(zeta) ** 2)))
    weight = (size + np.abs(p_zeta_symbol(g, zeta))) ** s
    return g.l2_frequency(weight * potential.spectrum())


# ---------------------------------------------------------------- CGO correction


@dataclass
class CGOSolution:
    w: ComplexField
    zeta: np.ndarray
    shift: np.ndarray
    iterations: int
    residual: float
    w_norm: float
    v_norm: float

    @property
    def ratio(self) -> float:
        return self.w_norm / self.v_norm if self.v_norm > 0 else 0.0


def _bloch_shift(grid: Grid, zeta: np.ndarray, seed: int, candidates: int = 16) -> tuple[np.ndarray, float]:
    rng = np.random.default_rng(seed)
    best, best_min = None, -1.0
    trials = [np.full(grid.d, 0.5 * grid.dk)] + [rng.uniform(0, grid.dk, grid.d) for _ in range(candidates - 1)]
    for s in trials:
        low = float(np.abs(p_zeta_symbol(grid, zeta, s)).min())
        if low > best_min:
            best, best_min = s, low
    return best, best_min


class _ShiftedInverse:
    """(Delta + 2 zeta.grad)^(-1) and its forward operator on the shifted lattice."""

    def __init__(self, grid: Grid, zeta: np.ndarray, shift: np.ndarray):
        self.grid = grid
        self.symbol = p_zeta_symbol(grid, zeta, shift)
        phase_arg = sum(s * x for s, x in zip(shift, grid.coords()))
        self.phase = np.exp(1j * phase_arg)

    def periodic(self, data: np.ndarray) -> np.ndarray:
        return data * np.conj(self.phase)

    def solve(self, data: np.ndarray) -> np.ndarray:
        spec = self.grid.forward(self.periodic(data)) / self.symbol
        return self.phase * self.grid.inverse(spec)

    def apply(self, data: np.ndarray) -> np.ndarray:
        spec = self.grid.forward(self.periodic(data)) * self.symbol
        return self.phase * self.grid.inverse(spec)


def cgo_correction(potential: CGOPotential, zeta, lam: float, tol: float = 1e-12,
                   max_iter: int = 60, seed: int = 0) -> CGOSolution:
    """Fixed point w = (Delta + 2 zeta.grad)^(-1) V (1 + w) in the contraction regime."""
    g = potential.grid
    zeta = np.asarray(zeta, dtype=complex)
    if abs(complex(zeta @ zeta) + lam) > 1e-12 * max(1.0, float(np.sum(np.abs(zeta) ** 2))):
        raise ParameterError("zeta.zeta must equal -lambda")
    v_norm = potential_xzeta_norm(potential, zeta, -0.5)
    shift, _ = _bloch_shift(g, zeta, seed)
    if potential.is_zero:
        return CGOSolution(ComplexField.zeros(g), zeta, shift, 0, 0.0, 0.0, v_norm)
    op = _ShiftedInverse(g, zeta, shift)

    def norm(data):
        return xzeta_norm(ComplexField.physical(g, op.periodic(data)), zeta, 0.5, shift).value

    ones = np.ones(g.shape, dtype=complex)
    source_scale = np.linalg.norm(potential.conjugated_apply(ones, zeta, lam))
    w = np.zeros(g.shape, dtype=complex)
    diffs = []
    it = 0
    while True:
        it += 1
        new = op.solve(potential.conjugated_apply(ones + w, zeta, lam))
        diffs.append(norm(new - w))
        w = new
        size = norm(w)
        if diffs[-1] <= tol * max(size, 1e-300):
            break
        if len(diffs) >= 2 and diffs[-1] >= diffs[-2]:
            raise RegimeError(
                f"outside contraction regime: CGO update ratio {diffs[-1] / diffs[-2]:.3g} >= 1 "
                f"(|zeta| = {np.linalg.norm(zeta):.3g})"
            )
        if it >= max_iter:
            raise DivergenceError(f"CGO iteration did not converge in {max_iter} steps")
    residual = op.apply(w) - potential.conjugated_apply(ones + w, zeta, lam)
    rel = float(np.linalg.norm(residual) / source_scale) if source_scale > 0 else 0.0
    return CGOSolution(ComplexField.physical(g, w), zeta, shift, it, rel, norm(w), v_norm)


# ---------------------------------------------------------------- pairings


def cgo_pairing(potential: CGOPotential, pair: ZetaPair, sol1: CGOSolution, sol2: CGOSolution) -> complex:
    """<V v1, v2> for v_j = exp(zeta_j.x)(1 + w_j): the exponentials combine to exp(-i kappa.x)."""
    g = potential.grid
    plane = np.exp(-1j * sum(k * x for k, x in zip(pair.kappa, g.coords())))
    integrand = potential.values * plane * (1.0 + sol1.w.values()) * (1.0 + sol2.w.values())
    return complex(np.sum(integrand) * g.cell_volume)


def direct_pairing(potential: CGOPotential, kappa) -> complex:
    """<V, exp(-i kappa.x)> for V0 + rho.

    V0 is summed on the grid; the shell density has the closed-form transform
    sum_n w_n alpha_n exp(-i kappa.n) exp(-sigma^2 |kappa|^2 / 2).
    """
    g = potential.grid
    kappa = np.asarray(kappa, dtype=float)
    total = 0j
    if potential.V0 is not None:
        plane = np.exp(-1j * sum(k * x for k, x in zip(kappa, g.coords())))
        total += complex(np.sum(potential.V0.values * plane) * g.cell_volume)
    if potential.shell is not None:
        damping = math.exp(-0.5 * potential.sigma**2 * float(kappa @ kappa))
        total += damping * complex(np.sum(potential.shell_weights * np.exp(-1j * potential.shell.surface.nodes @ kappa)))
    return total


def reconstruct_fourier(V1: CGOPotential, V2: CGOPotential, kappas, taus, lam: float,
                        seeds=(0, 1, 2), tol: float = 1e-12, tau_window: int = 1) -> list[dict]:
    """Rows (kappa, tau, direct, estimate, remainder) of the Fourier pairing table.

    ``estimate`` is <(V1 - V2) v1, v2> for CGO solutions of the two
    potentials, averaged over orientation seeds; ``remainder`` is
    estimate - direct, the contribution of the corrections w1, w2.

    With ``tau_window`` = k > 1 every cell also samples tau' = tau (1 + i/k),
    i < k, so the solutions cover [tau, 2 tau).  ``remainder_avg`` is the mean
    of |estimate - direct| over all (tau', seed) samples of the cell.  Shell
    potentials make the pointwise remainder oscillate in tau; only this
    window average is expected to shrink.
    """
    if V1.grid != V2.grid:
        raise ParameterError("potentials must share a grid")
    if tau_window < 1:
        raise ParameterError("tau_window must be at least 1")
    rows = []
    for kappa in np.atleast_2d(np.asarray(kappas, dtype=float)):
        direct = direct_pairing(V1, kappa) - direct_pairing(V2, kappa)
        for tau in taus:
            estimates, window = [], []
            status = "ok"
            for step in range(tau_window):
                tau_s = tau * (1.0 + step / tau_window)
                for seed in seeds:
                    pair = make_zeta_pair(kappa, tau_s, lam, seed)
                    try:
                        s1 = cgo_correction(V1, pair.zeta1, lam, tol, seed=seed)
                        s2 = cgo_correction(V2, pair.zeta2, lam, tol, seed=seed)
                    except (RegimeError, DivergenceError) as exc:
                        log.info("cell kappa=%s tau=%s absent: %s", kappa, tau_s, exc)
                        status = "absent"
                        break
                    value = cgo_pairing(V1, pair, s1, s2) - cgo_pairing(V2, pair, s1, s2)
                    window.append(abs(value - direct))
                    if step == 0:
                        estimates.append(value)
                if status == "absent":
                    break
            if status == "absent":
                rows.append({"kappa": kappa.tolist(), "tau": float(tau), "direct": direct,
                             "estimate": None, "remainder": None, "remainder_std": None,
                             "remainder_avg": None, "status": status})
                continue
            est = np.asarray(estimates)
            rem = est - direct
            rows.append({
                "kappa": kappa.tolist(),
                "tau": float(tau),
                "direct": direct,
                "estimate": complex(est.mean()),
                "remainder": complex(rem.mean()),
                "remainder_std": float(np.abs(rem).std()),
                "remainder_avg": float(np.mean(window)),
                "status": status,
            })
    return rows


# ---------------------------------------------------------------- averaging


def rotation_average_decay(potential: CGOPotential, Ms, lam: float, samples: int = 64,
                           seed: int = 0) -> dict:
    """Monte Carlo mean of ||V||^2_{X^{-1/2}_zeta} over Haar rotations and tau in [M, 2M].

    Returns per-M means and standard errors, and the least-squares log-log
    slope of the means against M.
    """
    if potential.grid.d != 3:
        raise ParameterError("rotation averaging is implemented for d = 3")
    if samples < 2:
        raise ParameterError("at least two samples are needed")
    rng = np.random.default_rng(seed)
    table = []
    for M in Ms:
        vals = []
        for _ in range(samples):
            tau = rng.uniform(M, 2 * M)
            T = haar_rotation(rng)
            zeta = T @ make_zeta_pair(np.zeros(3), tau, lam, seed=0).zeta1
            vals.append(potential_xzeta_norm(potential, zeta, -0.5) ** 2)
        vals = np.asarray(vals)
        mean = float(vals.mean())
        stderr = float(vals.std(ddof=1) / math.sqrt(samples))
        table.append({"M": float(M), "mean": mean, "stderr": stderr,
                      "relative_stderr": stderr / mean if mean > 0 else 0.0})
    means = np.array([r["mean"] for r in table])
    if len(table) >= 2 and np.all(means > 0):
        slope = float(np.polyfit(np.log([r["M"] for r in table]), np.log(means), 1)[0])
    else:
        slope = float("nan")
    return {"rows": table, "slope": slope}
