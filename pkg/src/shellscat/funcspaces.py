"""Norms adapted to the Helmholtz resolvent and its conjugated variants.

Notation used below, with m(xi) = |lam - |xi|^2| and k_lam the critical index:

* Agmon-Hormander pair on dyadic annuli D_j:
  ``ah``  = sum_j 2^(j/2) ||f||_{L2(D_j)},  ``ah*`` = sup_j 2^(-j/2) ||f||_{L2(D_j)}.
* Y_lam:  low block ||m^(-1/2) P_<I f_hat||, the four critical blocks
  lam^(-1/2) ah(P_k f)^2 and the high blocks ||m^(-1/2) P_k f_hat||^2,
  combined in l^2.  Y_lam* swaps m^(-1/2) for m^(1/2) and uses
  lam^(1/2) ah*(P_k u)^2 on the critical blocks.
* Z_{lam,p'} and Z*_{lam,p} replace the critical blocks by weighted
  L^{p'} or L^p norms; X_lam* carries both critical terms.
* Frequency-weighted norms for the conjugated operators: |q_tau|^s,
  (M tau^2 + |q_tau|^2 / M)^(s/2) and (|zeta| + |p_zeta|)^s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ParameterError, SymbolSingularityError
from .lp_decomp import DEFAULT_BASIS, LPBasis, block_range
from .spectral_core import ComplexField, Grid, Side, annulus_range, p_zeta_symbol, q_tau_symbol

__all__ = [
    "NormReport",
    "critical_exponents",
    "ah_norm",
    "ah_dual_norm",
    "y_norm",
    "y_star_norm",
    "z_norm",
    "z_star_norm",
    "x_star_norm",
    "x_norm_upper",
    "bourgain_norm",
    "ytm_norm",
    "xzeta_norm",
    "symbol_floor",
]


@dataclass
class NormReport:
    name: str
    value: float
    blocks: dict[str, float] = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    truncation_flags: list[str] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "blocks": dict(self.blocks),
            "params": {k: _jsonable(v) for k, v in self.params.items()},
            "truncation_flags": list(self.truncation_flags),
            "notes": {k: _jsonable(v) for k, v in self.notes.items()},
        }


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, (np.ndarray, list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def critical_exponents(d: int) -> tuple[float, float]:
    """Return (q_d, p_d) with 2/q_d = (d-1)/(d+1) and 1/p_d = 1/2 - 1/d."""
    q = 2.0 * (d + 1) / (d - 1)
    p = math.inf if d == 2 else 2.0 * d / (d - 2.0)
    return q, p


def _inv(p: float) -> float:
    return 0.0 if math.isinf(p) else 1.0 / p


def _dual(p: float) -> float:
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


# ---------------------------------------------------------------- annuli


@lru_cache(maxsize=16)
def _annulus_labels(grid: Grid) -> np.ndarray:
    r = grid.radius
    with np.errstate(divide="ignore"):
        labels = np.ceil(np.log2(np.where(r > 1.0, r, 1.0))).astype(np.int64)
    # guard the closed outer boundary against rounding in log2
    outer = 2.0 ** labels.astype(float)
    labels = np.where(r > outer, labels + 1, labels)
    labels = np.where((labels > 0) & (r <= outer / 2.0), labels - 1, labels)
    return labels


def _annulus_l2(f: ComplexField) -> tuple[dict[int, float], list[str]]:
    grid = f.grid
    data = f.values()
    labels = _annulus_labels(grid)
    js = annulus_range(grid)
    sums = np.bincount(labels.ravel(), weights=(np.abs(data) ** 2).ravel(), minlength=js[-1] + 1)
    out = {j: math.sqrt(float(sums[j]) * grid.cell_volume) for j in js}
    flags = [f"D_{j} truncated by box" for j in js if 2.0**j > grid.L]
    return out, flags


def ah_norm(f: ComplexField) -> NormReport:
    pieces, flags = _annulus_l2(f)
    blocks = {f"j={j}": 2.0 ** (j / 2.0) * v for j, v in pieces.items()}
    return NormReport("ah", float(sum(blocks.values())), blocks, {}, flags)


def ah_dual_norm(f: ComplexField) -> NormReport:
    pieces, flags = _annulus_l2(f)
    blocks = {f"j={j}": 2.0 ** (-j / 2.0) * v for j, v in pieces.items()}
    return NormReport("ah_dual", float(max(blocks.values())), blocks, {}, flags)


# ---------------------------------------------------------------- block helpers


def _block_field(grid: Grid, spec: np.ndarray, multiplier: np.ndarray) -> ComplexField:
    return ComplexField(grid, Side.FREQUENCY, spec * multiplier).to_physical()


def _noncritical(f: ComplexField, lam: float, basis: LPBasis, power: float):
    """Squared low and high contributions with weight m^power, plus block data."""
    grid = f.grid
    spec = f.spectrum()
    xi = grid.xi_norm
    m = np.abs(lam - grid.xi_squared)
    k_lam, crit, high = block_range(grid, lam)
    low_mult = basis.phi(xi / 2.0 ** (k_lam - 3))
    high_mults = [basis.psi(xi / 2.0**k) for k in high]
    support = low_mult > 0
    for mult in high_mults:
        support |= mult > 0
    if np.any(m[support] == 0):
        raise AssertionError("non-critical block support meets the resonant sphere")
    weight = np.where(support, m, 1.0) ** power
    power_spec = np.abs(spec) ** 2 * weight
    low_sq = float(np.sum(low_mult**2 * power_spec)) * grid.dual_cell_volume
    high_sq = sum(float(np.sum(mult**2 * power_spec)) for mult in high_mults) * grid.dual_cell_volume
    return low_sq, high_sq, spec, crit


def _assemble(name, low_sq, high_sq, crit_sq: dict, params, flags, notes=None) -> NormReport:
    blocks = {"low": math.sqrt(low_sq)}
    blocks.update({f"k={k}": math.sqrt(v) for k, v in crit_sq.items()})
    blocks["high"] = math.sqrt(high_sq)
    total = math.sqrt(low_sq + high_sq + sum(crit_sq.values()))
    return NormReport(name, total, blocks, params, sorted(set(flags)), notes or {})


def _check_lambda(lam):
    if not (np.isfinite(lam) and lam > 0):
        raise ParameterError(f"lambda must be positive, got {lam}")


def y_norm(f: ComplexField, lam: float, basis: LPBasis = DEFAULT_BASIS) -> NormReport:
    _check_lambda(lam)
    low_sq, high_sq, spec, crit = _noncritical(f, lam, basis, -1.0)
    crit_sq, flags = {}, []
    for k in crit:
        piece = _block_field(f.grid, spec, basis.psi(f.grid.xi_norm / 2.0**k))
        rep = ah_norm(piece)
        crit_sq[k] = rep.value**2 / math.sqrt(lam)
        flags += rep.truncation_flags
    return _assemble("y", low_sq, high_sq, crit_sq, {"lambda": lam, "basis": basis.kind.value}, flags)


def y_star_norm(u: ComplexField, lam: float, basis: LPBasis = DEFAULT_BASIS) -> NormReport:
    _check_lambda(lam)
    low_sq, high_sq, spec, crit = _noncritical(u, lam, basis, 1.0)
    crit_sq, flags = {}, []
    for k in crit:
        piece = _block_field(u.grid, spec, basis.psi(u.grid.xi_norm / 2.0**k))
        rep = ah_dual_norm(piece)
        crit_sq[k] = math.sqrt(lam) * rep.value**2
        flags += rep.truncation_flags
    return _assemble("y_star", low_sq, high_sq, crit_sq, {"lambda": lam, "basis": basis.kind.value}, flags)


def _validate_p(d: int, p: float) -> None:
    q_d, p_d = critical_exponents(d)
    if not (q_d - 1e-12 <= p <= p_d + 1e-12 or (math.isinf(p) and math.isinf(p_d))):
        raise ParameterError(f"exponent p={p} outside the admissible range [{q_d}, {p_d}]")


def z_norm(g: ComplexField, lam: float, p_prime: float | None = None,
           basis: LPBasis = DEFAULT_BASIS) -> NormReport:
    """Z_{lam,p'} norm; the default p' = q_d' gives the plain Z_lam norm."""
    _check_lambda(lam)
    d = g.grid.d
    q_d, p_d = critical_exponents(d)
    if p_prime is None:
        p_prime = _dual(q_d)
    _validate_p(d, _dual(p_prime))
    exponent = d * (_inv(p_prime) - (1.0 - _inv(p_d)))
    low_sq, high_sq, spec, crit = _noncritical(g, lam, basis, -1.0)
    crit_sq = {}
    for k in crit:
        piece = _block_field(g.grid, spec, basis.psi(g.grid.xi_norm / 2.0**k))
        crit_sq[k] = lam**exponent * g.grid.lp_physical(piece.data, p_prime) ** 2
    params = {"lambda": lam, "p_prime": p_prime, "basis": basis.kind.value}
    return _assemble("z", low_sq, high_sq, crit_sq, params, [])


def z_star_norm(u: ComplexField, lam: float, p: float | None = None,
                basis: LPBasis = DEFAULT_BASIS) -> NormReport:
    _check_lambda(lam)
    d = u.grid.d
    q_d, p_d = critical_exponents(d)
    if p is None:
        p = q_d
    _validate_p(d, p)
    exponent = d * (_inv(p) - _inv(p_d))
    low_sq, high_sq, spec, crit = _noncritical(u, lam, basis, 1.0)
    crit_sq = {}
    for k in crit:
        piece = _block_field(u.grid, spec, basis.psi(u.grid.xi_norm / 2.0**k))
        crit_sq[k] = lam**exponent * u.grid.lp_physical(piece.data, p) ** 2
    params = {"lambda": lam, "p": p, "basis": basis.kind.value}
    return _assemble("z_star", low_sq, high_sq, crit_sq, params, [])


def x_star_norm(u: ComplexField, lam: float, basis: LPBasis = DEFAULT_BASIS) -> NormReport:
    _check_lambda(lam)
    d = u.grid.d
    q_d, p_d = critical_exponents(d)
    exponent = d * (_inv(q_d) - _inv(p_d))
    low_sq, high_sq, spec, crit = _noncritical(u, lam, basis, 1.0)
    crit_sq, flags = {}, []
    for k in crit:
        piece = _block_field(u.grid, spec, basis.psi(u.grid.xi_norm / 2.0**k))
        rep = ah_dual_norm(piece)
        crit_sq[k] = math.sqrt(lam) * rep.value**2 + lam**exponent * u.grid.lp_physical(piece.data, q_d) ** 2
        flags += rep.truncation_flags
    return _assemble("x_star", low_sq, high_sq, crit_sq, {"lambda": lam, "basis": basis.kind.value}, flags)


def x_norm_upper(h: ComplexField, lam: float, basis: LPBasis = DEFAULT_BASIS,
                 refine: bool = False, refine_iters: int = 30) -> NormReport:
    """Upper bound for the X_lam norm inf{||f||_Y + ||g||_Z : h = f + g}.

    Every critical block P_k h goes whole to Y or whole to Z, whichever is
    cheaper on its own; the bound is then ||f||_Y + ||g||_Z evaluated exactly
    for that split.  With ``refine`` each block's share t_k in g = sum t_k P_k h
    is further tuned by golden-section search, one block at a time.
    """
    _check_lambda(lam)
    grid = h.grid
    d = grid.d
    q_d, p_d = critical_exponents(d)
    q_dual = _dual(q_d)
    z_exp = d * (_inv(q_dual) - (1.0 - _inv(p_d)))
    spec = h.spectrum()
    _, crit, _ = block_range(grid, lam)
    pieces = {}
    choice = {}
    for k in crit:
        mult = basis.psi(grid.xi_norm / 2.0**k)
        piece = _block_field(grid, spec, mult)
        cost_y = lam**-0.25 * ah_norm(piece).value
        cost_z = lam ** (z_exp / 2.0) * grid.lp_physical(piece.data, q_dual)
        pieces[k] = mult
        choice[k] = 1.0 if cost_z < cost_y else 0.0

    def bound(shares: dict[int, float]) -> float:
        g_mult = sum((shares[k] * pieces[k] for k in crit), np.zeros(grid.shape))
        g = ComplexField(grid, Side.FREQUENCY, spec * g_mult)
        f = ComplexField(grid, Side.FREQUENCY, spec * (1.0 - g_mult))
        return y_norm(f, lam, basis).value + z_norm(g, lam, None, basis).value

    best = bound(choice)
    if refine:
        golden = (math.sqrt(5.0) - 1.0) / 2.0
        for k in crit:
            lo, hi = 0.0, 1.0
            a, b = hi - golden * (hi - lo), lo + golden * (hi - lo)
            fa = bound({**choice, k: a})
            fb = bound({**choice, k: b})
            for _ in range(refine_iters):
                if fa < fb:
                    hi, b, fb = b, a, fa
                    a = hi - golden * (hi - lo)
                    fa = bound({**choice, k: a})
                else:
                    lo, a, fa = a, b, fb
                    b = lo + golden * (hi - lo)
                    fb = bound({**choice, k: b})
            t = a if fa < fb else b
            if min(fa, fb) < best:
                best = min(fa, fb)
                choice[k] = t
    blocks = {f"k={k}": choice[k] for k in crit}
    notes = {"assignment": {f"k={k}": ("z" if choice[k] == 1.0 else "y" if choice[k] == 0.0 else f"mix {choice[k]:.4f}") for k in crit},
             "kind": "upper bound"}
    return NormReport("x_upper", float(best), blocks, {"lambda": lam, "basis": basis.kind.value, "refined": refine}, [], notes)


# ---------------------------------------------------------------- conjugated-operator norms


def symbol_floor(tau: float) -> float:
    return 1e-8 * (1.0 + tau**2)


def _weighted(f: ComplexField, weight: np.ndarray) -> float:
    return f.grid.l2_frequency(weight * f.spectrum())


def _check_zero_set(spec: np.ndarray, symbol_abs: np.ndarray, floor: float, what: str,
                    rel: float = 1e-14) -> None:
    near = symbol_abs < floor
    if not np.any(near):
        return
    scale = np.abs(spec).max()
    bad = near & (np.abs(spec) > rel * scale)
    if np.any(bad):
        modes = [tuple(int(i) for i in idx) for idx in np.argwhere(bad)[:20]]
        raise SymbolSingularityError(
            f"symbol singularity: field has mass on {int(bad.sum())} modes where |{what}| < {floor:.3g}; "
            f"first offending lattice indices {modes}",
            modes,
        )


def bourgain_norm(f: ComplexField, tau: float, s: float) -> NormReport:
    """||f||_{Y_tau^s} = || |q_tau|^s f_hat ||."""
    if not tau > 0:
        raise ParameterError("tau must be positive")
    q_abs = np.abs(q_tau_symbol(f.grid, tau))
    spec = f.spectrum()
    if s < 0:
        _check_zero_set(spec, q_abs, symbol_floor(tau), "q_tau")
        q_abs = np.where(q_abs < symbol_floor(tau), 1.0, q_abs)
    value = f.grid.l2_frequency(q_abs**s * spec)
    return NormReport("bourgain", value, {"all": value}, {"tau": tau, "s": s})


def ytm_norm(f: ComplexField, tau: float, M: float, s: float) -> NormReport:
    """||(M tau^2 + |q_tau|^2 / M)^(s/2) f_hat||."""
    if tau < 1 or M < 1:
        raise ParameterError("tau and M must be at least 1")
    q_abs2 = np.abs(q_tau_symbol(f.grid, tau)) ** 2
    weight = (M * tau**2 + q_abs2 / M) ** (s / 2.0)
    value = _weighted(f, weight)
    return NormReport("ytm", value, {"all": value}, {"tau": tau, "M": M, "s": s})


def xzeta_norm(f: ComplexField, zeta, s: float, shift=None) -> NormReport:
    """||(|zeta| + |p_zeta|)^s f_hat||.

    With ``shift`` the spectrum of f is read as sitting on the lattice
    translated by that vector (f is the periodic factor of e^{i shift.x} f).
    """
    zeta = np.asarray(zeta, dtype=complex)
    size = float(np.sqrt(np.sum(np.abs(zeta) ** 2)))
    if not size > 0:
        raise ParameterError("zeta must be nonzero")
    weight = (size + np.abs(p_zeta_symbol(f.grid, zeta, shift))) ** s
    value = _weighted(f, weight)
    return NormReport("xzeta", value, {"all": value}, {"zeta": list(zeta), "s": s})
