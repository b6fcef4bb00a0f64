"""Littlewood-Paley projectors on the frequency lattice.

A profile phi equals 1 on [0, 1], vanishes on [2, inf) and decreases in
between; psi(t) = phi(t) - phi(2t) is the dyadic piece.  P_k multiplies the
spectrum by psi(|xi| / 2^k) and P_{<=k} by phi(|xi| / 2^k), so the blocks
telescope: P_{<=k} = P_{<=k-1} + P_k.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .spectral_core import ComplexField, Side, critical_index

__all__ = ["BasisKind", "LPBasis", "project", "project_leq", "project_below_I", "block_range"]


class BasisKind(str, enum.Enum):
    SMOOTH = "smooth"
    C2POLY = "c2poly"


def _smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity step from 1 at s<=0 to 0 at s>=1, built from exp(-1/t)."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        rise = np.where(s < 1.0, np.exp(-1.0 / np.where(s < 1.0, 1.0 - s, 1.0)), 0.0)
        fall = np.where(s > 0.0, np.exp(-1.0 / np.where(s > 0.0, s, 1.0)), 0.0)
    return rise / (rise + fall)


def _quintic_step(s: np.ndarray) -> np.ndarray:
    """C^2 polynomial step 1 - (10 s^3 - 15 s^4 + 6 s^5)."""
    s = np.clip(s, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


@dataclass(frozen=True)
class LPBasis:
    """Radial bump pair (phi, psi)."""

    kind: BasisKind = BasisKind.SMOOTH

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind(self.kind))

    @property
    def smoothness(self) -> float:
        return np.inf if self.kind is BasisKind.SMOOTH else 2

    def phi(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        step = _smooth_step if self.kind is BasisKind.SMOOTH else _quintic_step
        return step(t - 1.0)

    def psi(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.phi(t) - self.phi(2.0 * t)


DEFAULT_BASIS = LPBasis()


def _apply(f: ComplexField, multiplier: np.ndarray) -> ComplexField:
    spec = f.spectrum()
    out = ComplexField(f.grid, Side.FREQUENCY, spec * multiplier)
    return out if f.side is Side.FREQUENCY else out.to_physical()


def project(f: ComplexField, k: int, basis: LPBasis = DEFAULT_BASIS) -> ComplexField:
    """P_k f: spectrum times psi(|xi| / 2^k).  Output keeps the input's side."""
    return _apply(f, basis.psi(f.grid.xi_norm / 2.0**k))


def project_leq(f: ComplexField, k: int, basis: LPBasis = DEFAULT_BASIS) -> ComplexField:
    """P_{<=k} f: spectrum times phi(|xi| / 2^k)."""
    return _apply(f, basis.phi(f.grid.xi_norm / 2.0**k))


def project_below_I(f: ComplexField, lam: float, basis: LPBasis = DEFAULT_BASIS) -> ComplexField:
    """Projector onto frequencies below the four critical blocks of lam."""
    k_lam, _ = critical_index(lam)
    return project_leq(f, k_lam - 3, basis)


def block_range(grid, lam: float) -> tuple[int, tuple[int, ...], list[int]]:
    """Return (k_lam, critical blocks, high blocks whose support meets the lattice)."""
    k_lam, crit = critical_index(lam)
    high = []
    k = k_lam + 2
    while 2.0 ** (k - 1) < grid.max_frequency:
        high.append(k)
        k += 1
    return k_lam, crit, high
