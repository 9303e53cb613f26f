"""Frozen-coefficient kernels and the generator on grid functions.

Frozen kernels p_{t,y} are obtained by discrete Fourier inversion of
e^{−t q(y,·)}.  Heavy (power-law) tails make a plain periodic inversion
useless: at |x| = R/2 a periodic Cauchy kernel carries ~10% wrapped mass
whatever R is.  The inversion is therefore done on an oversampled periodic
grid of ``oversample·N`` nodes, of which only the central window is
reported, and the generator is applied with the same spectral symbol so
that Z and L Z stay exactly consistent.

Sign convention: p_{t,y}(w) = (2π)^{-n} ∫ e^{i w·ξ − t q(y,ξ)} dξ, which is
the choice for which ∂_t Z = L_y(D_x) Z; it coincides with the e^{−iw·ξ}
form whenever q is real (symmetric kernel without drift).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from .errors import KernelError
from .model import LevyTypeModel


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid x_k = −R + k h, h = 2R/N, per axis, plus its padded twin.

    Parameters
    ----------
    dim : int
        1 or 2.
    R : float
        Half-width of the reported window.
    N : int
        Nodes per axis (power of two).
    oversample : int
        Padding factor P; transforms use M = P·N nodes per axis.
    """

    dim: int = 1
    R: float = 16.0
    N: int = 1024
    oversample: int = 32

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise KernelError("CONFIG_INVALID", "grid dimension must be 1 or 2")
        if self.N < 4 or self.N & (self.N - 1):
            raise KernelError("CONFIG_INVALID", "N must be a power of two")
        if self.oversample < 1 or self.R <= 0:
            raise KernelError("CONFIG_INVALID", "bad grid parameters")

    @property
    def h(self) -> float:
        return 2.0 * self.R / self.N

    @property
    def M(self) -> int:
        return self.oversample * self.N

    @property
    def x(self) -> np.ndarray:
        return -self.R + self.h * np.arange(self.N)

    @property
    def dual_spacing(self) -> float:
        return np.pi / self.R

    @property
    def xi_max(self) -> float:
        return np.pi / self.h

    def rfreq(self) -> np.ndarray:
        """Half-spectrum frequencies of the padded grid (last axis)."""
        return 2 * np.pi * np.fft.rfftfreq(self.M, d=self.h)

    def freq_mesh(self) -> np.ndarray:
        """Frequency vectors of the padded grid, shape (M, M//2+1, 2) in 2D."""
        kx = 2 * np.pi * np.fft.fftfreq(self.M, d=self.h)
        ky = self.rfreq()
        return np.stack(np.meshgrid(kx, ky, indexing="ij"), axis=-1)

    def mesh(self) -> np.ndarray:
        if self.dim == 1:
            return self.x
        return np.stack(np.meshgrid(self.x, self.x, indexing="ij"), axis=-1)

    def bulk_mask(self) -> np.ndarray:
        """Window nodes with ‖x‖ ≤ R/2."""
        if self.dim == 1:
            return np.abs(self.x) <= self.R / 2
        return np.linalg.norm(self.mesh(), axis=-1) <= self.R / 2

    def to_dict(self) -> dict:
        return {"dim": self.dim, "R": self.R, "N": self.N, "oversample": self.oversample}


@dataclass
class DensitySlice:
    """Values of p_{t,y}(x − y) on the window, with its padded-grid mass."""

    t: float
    y: np.ndarray
    x: np.ndarray
    values: np.ndarray
    mass: float
    min_ratio: float
    derivative: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        from .io import write_csv
        if self.values.ndim == 1:
            write_csv(path, ["x", "value"], np.column_stack([self.x, self.values]))
        else:
            X = np.stack(np.meshgrid(self.x, self.x, indexing="ij"), axis=-1).reshape(-1, 2)
            write_csv(path, ["x1", "x2", "value"], np.column_stack([X, self.values.ravel()]))


# ---------------------------------------------------------------------------
# Symbols on the padded dual grid
# ---------------------------------------------------------------------------

class SymbolBank:
    """Per-term base symbols q_r on the padded dual grid of ``grid``.

    The frozen exponent at y is q(y,ξ) = Σ_r c_r(y) q_r(ξ) − i a(y)·ξ.
    """

    def __init__(self, model: LevyTypeModel, grid: SpatialGrid):
        if model.dim != grid.dim:
            raise KernelError("CONFIG_INVALID", "model and grid dimensions differ")
        self.model, self.grid = model, grid
        self.xi = grid.rfreq() if grid.dim == 1 else grid.freq_mesh()
        self.terms = model.symbol_terms()
        self.sym = [model.base.symbol(self.xi, shell=shell) for _, shell in self.terms]
        if all(np.max(np.abs(s.imag)) == 0 for s in self.sym):
            self.sym = [s.real for s in self.sym]

    def coefficients(self, pts) -> np.ndarray:
        """Rows (c_1(y), ..., c_R(y), a(y)...) for the points ``pts``."""
        pts = np.asarray(pts, dtype=float)
        npts = pts.shape[0] if pts.ndim else 1
        cols = [np.broadcast_to(np.asarray(c(pts), dtype=float), (npts,)) for c, _ in self.terms]
        drift = self.model.drift(pts).reshape(npts, -1)
        return np.column_stack(cols + [drift])

    def exponent(self, coef_row) -> np.ndarray:
        nterm = len(self.terms)
        q = sum(c * s for c, s in zip(coef_row[:nterm], self.sym))
        a = np.asarray(coef_row[nterm:])
        if np.any(a != 0):
            dot = self.xi * a[0] if self.grid.dim == 1 else self.xi @ a
            q = q - 1j * dot
        return q


def _nyquist_check(bank: SymbolBank, coef_rows, t: float, tol: float = 1e-12):
    g = bank.grid
    xi_b = np.array([g.xi_max]) if g.dim == 1 else np.array([[g.xi_max, 0.0], [0.0, g.xi_max]])
    worst = 0.0
    for row in np.atleast_2d(coef_rows):
        q = sum(c * bank.model.base.symbol(xi_b, shell=sh).real
                for c, (_, sh) in zip(row[:len(bank.terms)], bank.terms))
        worst = max(worst, float(np.max(np.exp(-t * np.asarray(q)))))
    return worst, worst < tol


def wrap_estimate(ext: np.ndarray, grid: SpatialGrid) -> float:
    """Relative size of periodic images seen by the bulk window.

    Bulk nodes see images at distances ≈ kL (L = padded period).  With a
    tail no heavier than w^{-2} beyond the padded edge, p(kL) ≤ p(L/2)/(4k²),
    so the image sum is at most 2·ζ(2)·p(L/2)/4 in absolute terms.  The
    estimate is that bound divided by the smallest kernel value over the
    bulk offsets ‖w‖ ≤ R/2.
    """
    M, N = grid.M, grid.N
    a = np.abs(ext)
    if grid.dim == 1:
        edge = float(np.max(a[M // 2 - 2:M // 2 + 3]))
        off = np.arange(-N // 4, N // 4 + 1) % M
        bulk = float(np.min(a[off]))
    else:
        edge = float(max(np.max(a[M // 2 - 2:M // 2 + 3, :]), np.max(a[:, M // 2 - 2:M // 2 + 3])))
        off = np.arange(-N // 4, N // 4 + 1) % M
        bulk = float(np.min(a[np.ix_(off, off)]))
    if edge <= 1e-14 * float(np.max(a)):
        return 0.0
    return 0.5 * (np.pi**2 / 6) * edge / max(bulk, 1e-300)


def _padded_kernel(bank: SymbolBank, coef_row, t: float, deriv=()):
    """Kernel on the padded grid, indexed by offset w = k h (mod M)."""
    g = bank.grid
    E = np.exp(-t * bank.exponent(coef_row))
    if g.dim == 1:
        for k in deriv:
            E = E * (1j * bank.xi) ** k
        return np.fft.irfft(E, n=g.M) / g.h
    for axis, k in enumerate(deriv):
        E = E * (1j * bank.xi[..., axis]) ** k
    return np.fft.irfft2(E, s=(g.M, g.M)) / g.h**2


def _window_values(ext: np.ndarray, grid: SpatialGrid, y) -> np.ndarray:
    """Values p(x − y) for window nodes x, y on the grid lattice."""
    M, N, h = grid.M, grid.N, grid.h
    y = np.atleast_1d(np.asarray(y, dtype=float))
    shift = np.round((grid.x[0] - y) / h).astype(int)
    idx = [(np.arange(N) + s) % M for s in shift]
    if grid.dim == 1:
        return ext[idx[0]]
    return ext[np.ix_(idx[0], idx[1])]


def _check_on_lattice(grid: SpatialGrid, y):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    k = (y - grid.x[0]) / grid.h
    if np.any(np.abs(k - np.round(k)) > 1e-9):
        raise KernelError("CONFIG_INVALID", "frozen point y must be a grid node")


def frozen_density(model: LevyTypeModel, t: float, y, grid: SpatialGrid,
                   check: bool = True, wrap_tol: float = 1e-3,
                   nyquist_tol: float = 1e-12, bank: SymbolBank | None = None,
                   deriv: tuple = ()) -> DensitySlice:
    """Frozen kernel p_{t,y}(x − y) on the window of ``grid``.

    Raises GRID_UNDERRESOLVED when e^{−t Re q(y, ξ_max)} ≥ ``nyquist_tol``
    or when the periodic-image estimate exceeds ``wrap_tol``.
    """
    bank = SymbolBank(model, grid) if bank is None else bank
    _check_on_lattice(grid, y)
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    row = bank.coefficients(y_arr[None, :] if grid.dim == 2 else y_arr)[0]
    ext = _padded_kernel(bank, row, t, deriv)
    diag = {}
    if check:
        ny, ok = _nyquist_check(bank, row, t, nyquist_tol)
        diag["nyquist"] = ny
        if not ok:
            raise KernelError("GRID_UNDERRESOLVED", "spectrum not decayed at the dual boundary",
                              nyquist=ny, t=t)
        if not deriv:
            w = wrap_estimate(ext, grid)
            diag["wrap"] = w
            if w > wrap_tol:
                raise KernelError("GRID_UNDERRESOLVED", "periodic images too large; enlarge R or oversample",
                                  wrap=w, t=t)
    vals = _window_values(ext, grid, y_arr)
    mass = float(ext.sum() * grid.h**grid.dim)
    vmax = float(np.max(np.abs(ext)))
    min_ratio = float(np.min(ext) / vmax) if vmax > 0 else 0.0
    return DensitySlice(t=float(t), y=y_arr, x=grid.x, values=vals, mass=mass,
                        min_ratio=min_ratio, derivative=tuple(deriv), diagnostics=diag)


def frozen_gradient(model: LevyTypeModel, t: float, y, grid: SpatialGrid, k,
                    check: bool = True, bank: SymbolBank | None = None) -> DensitySlice:
    """Derivative ∂^k_x of p_{t,y}(x − y); ``k`` is an int (1D) or a multi-index."""
    k = (int(k),) if np.ndim(k) == 0 else tuple(int(v) for v in k)
    if sum(k) > 2 or min(k) < 0:
        raise KernelError("CONFIG_INVALID", "derivatives of order > 2 are not supported")
    if len(k) != grid.dim:
        raise KernelError("CONFIG_INVALID", "multi-index length must equal the dimension")
    return frozen_density(model, t, y, grid, check=check, bank=bank, deriv=k)


def apply_generator(model: LevyTypeModel, f, grid: SpatialGrid, x=None,
                    extension: str = "zero", bank: SymbolBank | None = None):
    """L(x,D) f on the window.

    Parameters
    ----------
    f : ndarray
        Grid function on the window (shape (N,) or (N, N)); extra trailing
        axes in 1D are treated as independent functions.
    x : int or None
        Window node index; when given only that value is returned.
    extension : {"zero", "periodic"}
        How f continues outside the window.  ``zero`` pads with zeros on the
        oversampled grid, ``periodic`` treats f as periodic on the window.
    """
    f = np.asarray(f, dtype=float)
    g = grid
    if extension == "periodic":
        g = SpatialGrid(grid.dim, grid.R, grid.N, 1)
        bank = None
    elif extension != "zero":
        raise ValueError("extension must be 'zero' or 'periodic'")
    bank = SymbolBank(model, g) if bank is None else bank
    coef = bank.coefficients(g.mesh().reshape(-1, g.dim) if g.dim == 2 else g.x)
    nterm = len(bank.terms)
    if g.dim == 1:
        pad = np.zeros((g.M,) + f.shape[1:])
        pad[:g.N] = f
        F = np.fft.rfft(pad, axis=0)
        expand = (slice(None),) + (None,) * (f.ndim - 1)
        out = np.zeros_like(f)
        for r in range(nterm):
            part = np.fft.irfft(-bank.sym[r][expand] * F, n=g.M, axis=0)[:g.N]
            out += coef[:, r][expand] * part
        if np.any(coef[:, nterm:] != 0):
            part = np.fft.irfft(1j * bank.xi[expand] * F, n=g.M, axis=0)[:g.N]
            out += coef[:, nterm][expand] * part
    else:
        pad = np.zeros((g.M, g.M))
        pad[:g.N, :g.N] = f
        F = np.fft.rfft2(pad)
        out = np.zeros_like(f)
        for r in range(nterm):
            part = np.fft.irfft2(-bank.sym[r] * F, s=(g.M, g.M))[:g.N, :g.N]
            out += coef[:, r].reshape(g.N, g.N) * part
        for ax in range(2):
            a = coef[:, nterm + ax].reshape(g.N, g.N)
            if np.any(a != 0):
                part = np.fft.irfft2(1j * bank.xi[..., ax] * F, s=(g.M, g.M))[:g.N, :g.N]
                out += a * part
    if x is None:
        return out
    return out[x]


__all__ = ["SpatialGrid", "DensitySlice", "SymbolBank", "frozen_density", "frozen_gradient",
           "apply_generator", "wrap_estimate"]
