"""Periodic-box discretization and its Fourier machinery.

The box is [-L, L)^d sampled with N points per axis.  Fourier transforms use
the symmetric convention

    f_hat(xi) = (2 pi)^(-d/2) * integral f(x) exp(-i x.xi) dx,
    f(x)      = (2 pi)^(-d/2) * integral f_hat(xi) exp(i x.xi) dxi,

approximated by the trapezoid rule on the grid and on the frequency lattice
{pi k / L : -N/2 <= k_i < N/2}.  Arrays on the frequency side are kept in the
unshifted FFT order; files always store the physically ordered layout.
"""

from __future__ import annotations

import enum
import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import scipy.fft

from .errors import FieldIOError, ParameterError

__all__ = [
    "Grid",
    "Side",
    "ComplexField",
    "SymbolKind",
    "SymbolSpec",
    "DFTProvider",
    "ScipyDFT",
    "make_grid",
    "eval_symbol",
    "critical_index",
    "annulus_mask",
    "annulus_range",
    "AnnulusTruncationWarning",
    "write_field",
    "read_field",
    "atomic_write_bytes",
    "atomic_write_text",
    "separable_analysis",
    "separable_synthesis",
    "fourier_eval",
    "q_tau_symbol",
    "p_zeta_symbol",
]


class DFTProvider(Protocol):
    """Unnormalized d-dimensional DFT pair acting on the trailing axes."""

    def forward(self, data: np.ndarray, ndim: int) -> np.ndarray: ...

    def inverse(self, data: np.ndarray, ndim: int) -> np.ndarray: ...


class ScipyDFT:
    """Default provider backed by :mod:`scipy.fft`."""

    def forward(self, data, ndim):
        return scipy.fft.fftn(data, axes=tuple(range(-ndim, 0)))

    def inverse(self, data, ndim):
        return scipy.fft.ifftn(data, axes=tuple(range(-ndim, 0)))


_DEFAULT_DFT = ScipyDFT()


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-L, L)^d with N samples per axis."""

    d: int
    L: float
    N: int

    def __post_init__(self):
        problems = []
        if self.d not in (2, 3):
            problems.append(f"d must be 2 or 3, got {self.d}")
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 8 and self.N % 2 == 0):
            problems.append(f"N must be an even integer >= 8, got {self.N}")
        if not (np.isfinite(self.L) and self.L > 0):
            problems.append(f"L must be positive, got {self.L}")
        if problems:
            raise ParameterError("; ".join(problems))

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def dk(self) -> float:
        """Frequency lattice spacing pi / L."""
        return math.pi / self.L

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def dual_cell_volume(self) -> float:
        return self.dk**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def max_frequency(self) -> float:
        """Largest resolvable |xi| on the lattice (a corner mode)."""
        return math.pi * self.N / (2.0 * self.L) * math.sqrt(self.d)

    @property
    def nyquist(self) -> float:
        return math.pi * self.N / (2.0 * self.L)

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.N)

    @cached_property
    def mode_index(self) -> np.ndarray:
        """Integer lattice index per axis in unshifted FFT order."""
        return np.fft.fftfreq(self.N, d=1.0 / self.N).astype(np.int64)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return self.dk * self.mode_index.astype(float)

    def coords(self) -> tuple[np.ndarray, ...]:
        """Sparse broadcastable physical coordinates, one array per axis."""
        return tuple(np.meshgrid(*([self.axis] * self.d), indexing="ij", sparse=True))

    def frequencies(self) -> tuple[np.ndarray, ...]:
        """Sparse broadcastable lattice frequencies (unshifted order)."""
        return tuple(np.meshgrid(*([self.wavenumbers] * self.d), indexing="ij", sparse=True))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.coords()))

    @cached_property
    def xi_squared(self) -> np.ndarray:
        return sum(k**2 for k in self.frequencies())

    @cached_property
    def xi_norm(self) -> np.ndarray:
        return np.sqrt(self.xi_squared)

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(i L xi) = (-1)^k accounts for the grid starting at -L
        sign_1d = np.where(self.mode_index % 2 == 0, 1.0, -1.0)
        grids = np.meshgrid(*([sign_1d] * self.d), indexing="ij", sparse=True)
        out = grids[0]
        for g in grids[1:]:
            out = out * g
        return out

    def forward(self, data: np.ndarray, dft: DFTProvider = _DEFAULT_DFT) -> np.ndarray:
        scale = (2.0 * math.pi) ** (-self.d / 2.0) * self.cell_volume
        return scale * self._phase * dft.forward(data, self.d)

    def inverse(self, data: np.ndarray, dft: DFTProvider = _DEFAULT_DFT) -> np.ndarray:
        scale = (2.0 * math.pi) ** (-self.d / 2.0) * self.dual_cell_volume * self.N**self.d
        return scale * dft.inverse(self._phase * data, self.d)

    def l2_physical(self, data: np.ndarray, mask: np.ndarray | None = None) -> float:
        weights = np.abs(data) ** 2
        if mask is not None:
            weights = weights * mask
        return math.sqrt(float(np.sum(weights)) * self.cell_volume)

    def l2_frequency(self, data: np.ndarray) -> float:
        return math.sqrt(float(np.sum(np.abs(data) ** 2)) * self.dual_cell_volume)

    def lp_physical(self, data: np.ndarray, p: float) -> float:
        """Trapezoid-rule L^p norm; p = inf takes the sample maximum."""
        mags = np.abs(data)
        if math.isinf(p):
            return float(mags.max())
        return float((np.sum(mags**p) * self.cell_volume) ** (1.0 / p))

    def padded(self, factor: int) -> "Grid":
        """Grid with the same spacing on a box ``factor`` times larger."""
        return Grid(self.d, self.L * factor, self.N * factor)

    def to_dict(self) -> dict:
        return {"d": self.d, "L": float(self.L), "N": int(self.N)}


def make_grid(d: int, L: float, N: int) -> Grid:
    """Validate parameters and build a :class:`Grid`."""
    return Grid(int(d), float(L), int(N) if float(N).is_integer() else N)


class Side(str, enum.Enum):
    PHYSICAL = "physical"
    FREQUENCY = "frequency"


@dataclass
class ComplexField:
    """Complex samples bound to a grid, on the physical or frequency side."""

    grid: Grid
    side: Side
    data: np.ndarray

    def __post_init__(self):
        self.side = Side(self.side)
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.shape != self.grid.shape:
            raise ParameterError(
                f"field shape {self.data.shape} does not match grid shape {self.grid.shape}"
            )

    @classmethod
    def physical(cls, grid: Grid, data) -> "ComplexField":
        return cls(grid, Side.PHYSICAL, np.broadcast_to(data, grid.shape).astype(np.complex128))

    @classmethod
    def frequency(cls, grid: Grid, data) -> "ComplexField":
        return cls(grid, Side.FREQUENCY, np.broadcast_to(data, grid.shape).astype(np.complex128))

    @classmethod
    def zeros(cls, grid: Grid, side: Side = Side.PHYSICAL) -> "ComplexField":
        return cls(grid, side, np.zeros(grid.shape, dtype=np.complex128))

    def to_frequency(self) -> "ComplexField":
        if self.side is Side.FREQUENCY:
            return self
        return ComplexField(self.grid, Side.FREQUENCY, self.grid.forward(self.data))

    def to_physical(self) -> "ComplexField":
        if self.side is Side.PHYSICAL:
            return self
        return ComplexField(self.grid, Side.PHYSICAL, self.grid.inverse(self.data))

    def spectrum(self) -> np.ndarray:
        return self.to_frequency().data

    def values(self) -> np.ndarray:
        return self.to_physical().data

    def copy(self) -> "ComplexField":
        return ComplexField(self.grid, self.side, self.data.copy())

    def l2(self) -> float:
        if self.side is Side.PHYSICAL:
            return self.grid.l2_physical(self.data)
        return self.grid.l2_frequency(self.data)

    def _binary(self, other, op):
        if isinstance(other, ComplexField):
            if other.grid != self.grid:
                raise ParameterError("fields live on different grids")
            other_data = other.to_physical().data if self.side is Side.PHYSICAL else other.to_frequency().data
            return ComplexField(self.grid, self.side, op(self.data, other_data))
        return ComplexField(self.grid, self.side, op(self.data, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        if isinstance(scalar, ComplexField):
            raise TypeError("pointwise products must be formed on the physical side explicitly")
        return ComplexField(self.grid, self.side, self.data * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return ComplexField(self.grid, self.side, -self.data)


class SymbolKind(str, enum.Enum):
    M_LAMBDA = "m_lambda"
    Q_TAU = "q_tau"
    P_ZETA = "p_zeta"
    LAMBDA_MINUS_XI2 = "lambda_minus_xi2"


@dataclass(frozen=True)
class SymbolSpec:
    kind: SymbolKind
    lam: float = 0.0
    tau: float = 0.0
    zeta: tuple[complex, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SymbolKind(self.kind))
        if not (np.isfinite(self.lam) and np.isfinite(self.tau)):
            raise ParameterError("symbol parameters must be finite")
        if self.lam < 0 or self.tau < 0:
            raise ParameterError("lambda and tau must be nonnegative")
        if self.kind is SymbolKind.P_ZETA:
            if self.zeta is None:
                raise ParameterError("p_zeta needs a complex vector zeta")
            if not np.all(np.isfinite(np.asarray(self.zeta, dtype=complex))):
                raise ParameterError("zeta must be finite")


def eval_symbol(spec: SymbolSpec, grid: Grid) -> ComplexField:
    """Evaluate a Fourier symbol pointwise on the frequency lattice."""
    xi2 = grid.xi_squared
    if spec.kind is SymbolKind.M_LAMBDA:
        values = np.abs(spec.lam - xi2)
    elif spec.kind is SymbolKind.LAMBDA_MINUS_XI2:
        values = spec.lam - xi2
    elif spec.kind is SymbolKind.Q_TAU:
        values = q_tau_symbol(grid, spec.tau)
    else:
        values = p_zeta_symbol(grid, np.asarray(spec.zeta, dtype=complex))
    return ComplexField.frequency(grid, values)


def q_tau_symbol(grid: Grid, tau: float) -> np.ndarray:
    xi_last = grid.frequencies()[-1]
    return -grid.xi_squared + 2j * tau * xi_last + tau**2


def p_zeta_symbol(grid: Grid, zeta: Sequence[complex], shift: Sequence[float] | None = None) -> np.ndarray:
    """-|xi|^2 + 2i zeta.xi, optionally on the lattice translated by ``shift``."""
    zeta = np.asarray(zeta, dtype=complex)
    if zeta.shape != (grid.d,):
        raise ParameterError(f"zeta must have {grid.d} components")
    freqs = grid.frequencies()
    if shift is not None:
        freqs = tuple(k + s for k, s in zip(freqs, shift))
    xi2 = sum(k**2 for k in freqs)
    dot = sum(z * k for z, k in zip(zeta, freqs))
    return -xi2 + 2j * dot


def critical_index(lam: float) -> tuple[int, tuple[int, int, int, int]]:
    """Return k with 2^(k-1) < sqrt(lam) <= 2^k and the four critical blocks."""
    if not (np.isfinite(lam) and lam > 0):
        raise ParameterError(f"lambda must be positive, got {lam}")
    # compare squares so powers of four stay exact in floating point
    k = math.ceil(0.5 * math.log2(lam))
    while 4.0 ** (k - 1) >= lam:
        k -= 1
    while 4.0**k < lam:
        k += 1
    return k, (k - 2, k - 1, k, k + 1)


class AnnulusTruncationWarning(UserWarning):
    """A dyadic annulus extends past the computational box."""


def annulus_range(grid: Grid) -> list[int]:
    """Annulus indices whose shells meet the box (every grid point is covered)."""
    reach = grid.L * math.sqrt(grid.d)
    js = [0]
    while 2.0 ** js[-1] < reach:
        js.append(js[-1] + 1)
    return js


def annulus_mask(grid: Grid, j: int, warn: bool = True) -> tuple[np.ndarray, bool]:
    """Indicator of D_j sampled on the grid, plus a truncation flag.

    D_0 is the closed unit ball and D_j = {2^(j-1) < |x| <= 2^j} for j >= 1.
    """
    if j < 0:
        raise ParameterError("annulus index must be nonnegative")
    r = grid.radius
    outer = 2.0**j
    if j == 0:
        mask = r <= outer
    else:
        mask = (r > outer / 2.0) & (r <= outer)
    truncated = outer > grid.L
    if truncated and warn:
        warnings.warn(
            f"annulus j={j} (outer radius {outer}) exceeds box half-width {grid.L}",
            AnnulusTruncationWarning,
            stacklevel=2,
        )
    return mask.astype(float), truncated


# ---------------------------------------------------------------- file IO


def atomic_write_bytes(path: str | os.PathLike, payload: bytes) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise FieldIOError(f"cannot write {path}: {exc}") from exc


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_field(path: str | os.PathLike, field: ComplexField) -> tuple[Path, Path]:
    """Store a field as raw interleaved little-endian float64 plus a JSON sidecar."""
    path = Path(path)
    data = field.data
    if field.side is Side.FREQUENCY:
        data = np.fft.fftshift(data)
    raw = np.ascontiguousarray(data).astype("<c16").tobytes()
    meta = dict(field.grid.to_dict(), side=field.side.value, dtype="c128-le")
    atomic_write_bytes(path, raw)
    atomic_write_text(_sidecar(path), json.dumps(meta, indent=2, sort_keys=True))
    return path, _sidecar(path)


def read_field(path: str | os.PathLike) -> ComplexField:
    path = Path(path)
    try:
        meta = json.loads(_sidecar(path).read_text())
        raw = path.read_bytes()
    except (OSError, json.JSONDecodeError) as exc:
        raise FieldIOError(f"cannot read field {path}: {exc}") from exc
    if meta.get("dtype") != "c128-le":
        raise FieldIOError(f"unsupported dtype {meta.get('dtype')!r} in {path}")
    grid = make_grid(meta["d"], meta["L"], meta["N"])
    if len(raw) != 16 * grid.N**grid.d:
        raise FieldIOError(f"{path} holds {len(raw)} bytes, expected {16 * grid.N ** grid.d}")
    values = np.frombuffer(raw, dtype="<c16")
    data = values.reshape(grid.shape).astype(np.complex128)
    side = Side(meta["side"])
    if side is Side.FREQUENCY:
        data = np.fft.ifftshift(data)
    return ComplexField(grid, side, data)


# ---------------------------------------------------------------- separable sums

_CHUNK = 256


def separable_analysis(array: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    """Return s_q = sum_j array[j_1..j_d] * prod_a factors[a][q, j_a].

    Each factor has shape (Q, N_a).  The contraction runs axis by axis, so the
    cost is O(N^d Q) instead of forming Q full d-dimensional kernels.
    """
    d = array.ndim
    Q = factors[0].shape[0]
    out = np.empty(Q, dtype=np.result_type(array, *factors))
    for start in range(0, Q, _CHUNK):
        sl = slice(start, start + _CHUNK)
        partial = array @ factors[-1][sl].T  # (..., q)
        for a in range(d - 2, -1, -1):
            # contract the current last spatial axis against factor a
            partial = np.einsum("...jq,qj->...q", partial, factors[a][sl])
        out[sl] = partial
    return out


def separable_synthesis(coef: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    """Return A[j_1..j_d] = sum_q coef_q * prod_a factors[a][q, j_a]."""
    d = len(factors)
    shape = tuple(f.shape[1] for f in factors)
    out = np.zeros(shape, dtype=np.result_type(coef, *factors))
    Q = coef.shape[0]
    for start in range(0, Q, _CHUNK):
        sl = slice(start, start + _CHUNK)
        lead = coef[sl][:, None] * factors[0][sl]  # (q, N_1)
        for a in range(1, d - 1):
            lead = (lead[..., None] * factors[a][sl].reshape((-1,) + (1,) * a + (shape[a],)))
        # lead has shape (q, N_1, ..., N_{d-1}); contract q against the last factor
        out += np.tensordot(lead, factors[-1][sl], axes=([0], [0]))
    return out


def fourier_eval(grid: Grid, spectrum: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate the band-limited interpolant with the given spectrum at points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != grid.d:
        raise ParameterError(f"points must have {grid.d} coordinates")
    k = grid.wavenumbers
    factors = [np.exp(1j * points[:, a, None] * k[None, :]) for a in range(grid.d)]
    scale = (2.0 * math.pi) ** (-grid.d / 2.0) * grid.dual_cell_volume
    return scale * separable_analysis(spectrum, factors)
