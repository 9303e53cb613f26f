"""Levi parametrix: Φ = Σ_m (LZ)_m and p = Z + Z⋆Φ on a space–time lattice.

Time is discretised on a uniform lattice t_i = iΔ, Δ = T/Kt.  Every
space–time convolution

    (F ⋆ G)(t_i) = ∫_0^{t_i} F(t_i − σ) G(σ) dσ      (matrix or measure valued)

is evaluated by product integration in which the left operand F is known
at arbitrary lags (it is a frozen-kernel quantity) and the right operand
G is known on the lattice only:

* G is interpolated per column by σ^e (a + bσ), with e fitted from the first
  two lattice values, which reproduces pure power singularities exactly;
* F is interpolated quadratically through the lags t_i − t_j, t_i − t_j − Δ/2
  and t_i − t_{j+1} on intervals away from the diagonal;
* on the last interval (lag in [0, Δ]) F is sampled at graded Gauss–Legendre
  nodes τ = Δ v^{1/(1−δ)}, which removes the τ^{−δ} behaviour.

The space integral is the trapezoid rule on the grid (matrix product with
weight h) for kernels and a linear convolution for measures.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import fft as sp_fft, signal, special
from scipy.interpolate import CubicSpline

from .errors import KernelError
from .frozen import SpatialGrid, SymbolBank
from .model import LevyTypeModel

_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)
_S16 = 0.5 * (_GL16_X + 1)
_W16 = 0.5 * _GL16_W


def _lagrange3(s):
    """Quadratic Lagrange basis on s ∈ {0, 1/2, 1}."""
    s = np.asarray(s, dtype=float)
    return np.stack([2 * s**2 - 3 * s + 1, 4 * s - 4 * s**2, 2 * s**2 - s])


def _moment_integrals(z):
    """I_k(z) = ∫_0^1 u^k e^{−zu} du for k = 0, 1, 2 (complex z, Re z ≥ 0)."""
    z = np.asarray(z)
    small = np.abs(z) < 1.0
    zl = np.where(small, 1.0, z)
    ez = np.exp(-zl)
    I0 = (1 - ez) / zl
    I1 = (I0 - ez) / zl
    I2 = (2 * I1 - ez) / zl
    I = np.stack([I0, I1, I2])
    if np.any(small):
        zs = z[small]
        term = np.ones_like(zs)
        acc = np.zeros((3,) + zs.shape, dtype=I.dtype)
        for n in range(25):
            acc += term / (n + 1 + np.arange(3))[:, None]
            term = term * (-zs) / (n + 1)
        I[:, small] = acc
    return I


def _lagrange_laplace(q: int, z):
    """∫_0^1 ℓ_q(u) e^{−zu} du for the quadratic basis on {0, 1/2, 1}."""
    I0, I1, I2 = _moment_integrals(z)
    return [I0 - 3 * I1 + 2 * I2, 4 * I1 - 4 * I2, 2 * I2 - I1][q]


# ---------------------------------------------------------------------------
# Time ladder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeLadder:
    """Uniform computational lattice plus a reporting ladder of lattice times.

    Parameters
    ----------
    Kt : int
        Lattice steps on (0, T].
    delta : float
        Declared singularity exponent δ ∈ (0, 1) of the series terms.
    report : tuple of float
        Reporting times; each must be a lattice time.
    T : float
        Final time (≤ 1).
    n_graded : int
        Gauss–Legendre nodes on the singular last interval.
    """

    Kt: int = 40
    delta: float = 0.5
    report: tuple = (0.1, 0.25, 0.5, 1.0)
    T: float = 1.0
    n_graded: int = 6

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise KernelError("CONFIG_INVALID", "delta must lie in (0, 1)")
        if not 0 < self.T <= 1 or self.Kt < 2:
            raise KernelError("CONFIG_INVALID", "bad lattice")
        for t in self.report:
            k = t / self.dt
            if abs(k - round(k)) > 1e-9 or not 1 <= round(k) <= self.Kt:
                raise KernelError("CONFIG_INVALID", f"report time {t} is not a lattice time")

    @property
    def dt(self) -> float:
        return self.T / self.Kt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.Kt + 1)

    def index(self, t: float) -> int:
        """Zero-based lattice index of time t."""
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 or not 1 <= k <= self.Kt:
            raise KernelError("CONFIG_INVALID", f"{t} is not a lattice time")
        return k - 1

    @property
    def report_indices(self) -> list[int]:
        return [self.index(t) for t in self.report]

    def graded(self):
        """Nodes τ_g ∈ (0, Δ) and weights for ∫_0^Δ F(τ) dτ with F ~ τ^{−δ}."""
        v, w = np.polynomial.legendre.leggauss(self.n_graded)
        v, w = 0.5 * (v + 1), 0.5 * w
        p = 1.0 / (1.0 - self.delta)
        tau = self.dt * v**p
        return tau, w * self.dt * p * v ** (p - 1)

    def singular_weight_error(self, t: float | None = None) -> float:
        """Relative error of the graded rule on ∫_0^Δ s^{−δ} ds."""
        tau, w = self.graded()
        exact = self.dt ** (1 - self.delta) / (1 - self.delta)
        return abs(np.sum(w * tau ** (-self.delta)) - exact) / exact

    def to_dict(self) -> dict:
        return {"Kt": self.Kt, "delta": self.delta, "report": list(self.report), "T": self.T,
                "n_graded": self.n_graded}


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass
class KernelField:
    """Values K(t, x, y) on lattice × window rows × y-sample columns."""

    role: str
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9:
            raise KernelError("CONFIG_INVALID", f"time {t} not stored in field {self.role}")
        return self.values[k]

    def header(self) -> dict:
        return {"role": self.role, "times": self.times, "x0": float(self.x[0]),
                "hx": float(self.x[1] - self.x[0]), "nx": len(self.x), "y": self.y}

    def to_csv(self, path, times=None) -> None:
        from .io import write_csv
        times = self.times if times is None else times
        rows = []
        for t in times:
            v = self.at(t)
            X, Y = np.meshgrid(self.x, self.y, indexing="ij")
            rows.append(np.column_stack([np.full(X.size, t), X.ravel(), Y.ravel(), v.ravel()]))
        write_csv(path, ["t", "x", "y", "value"], np.vstack(rows))


class LagKernel:
    """Left operand F(τ) of ⋆, sampled where the product rule needs it.

    Attributes ``Fn[ℓ]`` (lag ℓΔ), ``Fm[ℓ]`` (lag (ℓ−½)Δ) for ℓ = 1..Kt,
    ``Fg[g]`` at the graded nodes of the last interval, and ``Fg_half``,
    ``F34`` for the first lattice step where both operands are singular.
    """

    def __init__(self, fn: Callable[[float], np.ndarray], ladder: TimeLadder):
        dt = ladder.dt
        self.ladder = ladder
        self.Fn = [None] + [fn(l * dt) for l in range(1, ladder.Kt + 1)]
        self.Fm = [None] + [fn((l - 0.5) * dt) for l in range(1, ladder.Kt + 1)]
        self.tau_g, self.w_g = ladder.graded()
        self.Fg = [fn(t) for t in self.tau_g]
        # first step: graded half [0, Δ/2] plus a quadratic piece on [Δ/2, Δ]
        self.Fg_half = [fn(0.5 * t) for t in self.tau_g]
        self.F34 = fn(0.75 * dt)

    @classmethod
    def from_lattice(cls, values: np.ndarray, ladder: TimeLadder, zero_at_origin: bool = True):
        """Cubic-spline interpolant in τ of a lattice field (smooth fields only)."""
        t = ladder.times
        if zero_at_origin:
            t = np.concatenate([[0.0], t])
            values = np.concatenate([np.zeros_like(values[:1]), values])
        spline = CubicSpline(t, values, axis=0)
        return cls(lambda tau: spline(tau), ladder)


def column_exponents(G: np.ndarray, lo: float = -0.95, hi: float = 3.0) -> np.ndarray:
    """Per-column power e with ‖G(2Δ)‖ ≈ 2^e ‖G(Δ)‖.

    The row ℓ¹ norm is used: sup norms of kernel columns inherit the
    ρ_t^n growth of the moving near-diagonal peak, which is not the
    pointwise behaviour in time.
    """
    n1 = np.sum(np.abs(G[0]), axis=0)
    n2 = np.sum(np.abs(G[1]), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.log2(n2 / n1)
    e = np.where(np.isfinite(e), e, 0.0)
    return np.clip(e, lo, hi), e


def _first_weights(e):
    """Δ^{-1} ∫_0^Δ ℓ_q(σ/Δ) (σ/Δ)^e dσ for q = 0, 1, 2."""
    return np.stack([2 / (e + 3) - 3 / (e + 2) + 1 / (e + 1),
                     4 / (e + 2) - 4 / (e + 3),
                     2 / (e + 3) - 1 / (e + 2)])


def _interior_weights(Kt: int, e: np.ndarray) -> np.ndarray:
    """ω[q, k, j, col] = ∫_0^1 ℓ_q(s) φ_k(j + s) ds for j = 1..Kt−1.

    φ_0 = ((j+s)/j)^e (1−s), φ_1 = ((j+s)/(j+1))^e s.
    """
    j = np.arange(1, Kt)[:, None, None]
    s = _S16[None, :, None]
    ee = e[None, None, :]
    phi0 = ((j + s) / j) ** ee * (1 - s)
    phi1 = ((j + s) / (j + 1)) ** ee * s
    L = _lagrange3(_S16)
    out = np.empty((3, 2, Kt - 1, e.size))
    for q in range(3):
        wq = (_W16 * L[q])[None, :, None]
        out[q, 0] = np.sum(wq * phi0, axis=1)
        out[q, 1] = np.sum(wq * phi1, axis=1)
    return out


class MatrixAlgebra:
    """Kernels: F (N×N) composed with G (N×C) as h·F@G."""

    def __init__(self, h: float):
        self.h = h

    def compose(self, F, S):
        # S: (B, N, C)
        B, N, C = S.shape
        flat = np.ascontiguousarray(S.transpose(1, 0, 2)).reshape(N, B * C)
        return (F @ flat).reshape(F.shape[0], B, C).transpose(1, 0, 2) * self.h


class MeasureAlgebra:
    """Measures on a symmetric node set of length L, shape (L, C).

    Convolution keeps the central L nodes; mass leaving the node range is
    clamped onto the boundary nodes so that total mass is preserved.
    """

    def compose(self, F, S):
        F = np.asarray(F, dtype=float).reshape(-1)
        L = F.size
        n = sp_fft.next_fast_len(2 * L - 1, real=True)
        full = sp_fft.irfft(sp_fft.rfft(F, n)[None, :, None] * sp_fft.rfft(S, n, axis=1),
                            n, axis=1)[:, :2 * L - 1]
        return _clamp_central(full, L, axis=1)


def _clamp_central(full: np.ndarray, L: int, axis: int = 0) -> np.ndarray:
    full = np.moveaxis(full, axis, 0)
    K = L // 2
    out = full[K:K + L].copy()
    out[0] += full[:K].sum(axis=0)
    out[-1] += full[K + L:].sum(axis=0)
    return np.moveaxis(out, 0, axis)


def conv_clamped(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Linear convolution of centred node measures with boundary clamping."""
    L = a.size
    full = signal.fftconvolve(a, b)
    if np.issubdtype(full.dtype, np.floating):
        full[np.abs(full) < 1e-300] = 0.0
    return _clamp_central(full, L)


def spacetime_convolution(F: LagKernel, G: np.ndarray, ladder: TimeLadder,
                          algebra=None, h: float | None = None,
                          declared_delta: float | None = None, exact=None) -> np.ndarray:
    """(F ⋆ G)(t_i) for all lattice times.

    Parameters
    ----------
    F : LagKernel
        Left operand with samples at lattice lags, half lags and graded nodes.
    G : ndarray, shape (Kt, N, C)
        Right operand on the lattice.
    algebra : MatrixAlgebra or MeasureAlgebra
        Spatial composition; defaults to matrices with trapezoid weight ``h``.
    declared_delta : float, optional
        When given, SINGULARITY_MISMATCH is raised if a column of G grows
        faster than σ^{−δ−0.25} at the origin.
    exact : object, optional
        Right operand known off the lattice, with ``moments(a, L)`` returning
        the quadratic-basis integrals over [a, a+L] and ``value(σ)``.  The
        interpolation of G is then replaced by exact time integrals.
    """
    algebra = MatrixAlgebra(h) if algebra is None else algebra
    Kt = ladder.Kt
    dt = ladder.dt
    if G.shape[0] != Kt:
        raise KernelError("GRID_MISMATCH", "right operand not on the lattice")
    e, e_raw = column_exponents(G)
    if declared_delta is not None and np.any(e_raw < -declared_delta - 0.25):
        raise KernelError("SINGULARITY_MISMATCH", "operand more singular than declared",
                          worst=float(np.min(e_raw)), declared=-declared_delta)
    out_rows = algebra.compose(F.Fn[1], np.zeros((1,) + G.shape[1:])).shape[1]
    out = np.zeros((Kt, out_rows) + G.shape[2:])
    V = np.zeros((3, Kt) + G.shape[1:])
    if exact is not None:
        for j in range(Kt - 1):
            V[:, j] = exact.moments(j * dt, dt)
    else:
        wf = _first_weights(e) * dt                      # (3, C)
        wi = _interior_weights(Kt, e) * dt               # (3, 2, Kt-1, C)
        for q in range(3):
            V[q, 0] = wf[q] * G[0]
            if Kt > 2:
                # j = 1..Kt-2; the final lattice interval is the graded one
                V[q, 1:Kt - 1] = (wi[q, 0, :Kt - 2, None, :] * G[0:Kt - 2]
                                  + wi[q, 1, :Kt - 2, None, :] * G[1:Kt - 1])
    for ell in range(1, Kt + 1):
        n_i = Kt - ell + 1                          # i = ell..Kt
        S = np.zeros((n_i,) + G.shape[1:])
        if ell >= 2:
            S += V[0, 0:n_i]
        if n_i > 1:
            S[1:] += V[2, 0:n_i - 1]
        if np.any(S):
            out[ell - 1:] += algebra.compose(F.Fn[ell], S)
        if ell >= 2:
            S1 = V[1, 0:n_i]
            if np.any(S1):
                out[ell - 1:] += algebra.compose(F.Fm[ell], S1)
    # last interval, lag in (0, Δ)
    s_g = 1.0 - F.tau_g / dt                         # position within [t_{i-1}, t_i]
    for i in range(2, Kt + 1):
        j = i - 1
        for g in range(len(s_g)):
            if exact is not None:
                rhs = exact.value((j + s_g[g]) * dt)
            else:
                c0 = ((j + s_g[g]) / j) ** e * (1 - s_g[g])
                c1 = ((j + s_g[g]) / (j + 1)) ** e * s_g[g]
                rhs = c0 * G[i - 2] + c1 * G[i - 1]
            out[i - 1] += F.w_g[g] * algebra.compose(F.Fg[g], rhs[None])[0]
    # first step: lag in [0, Δ/2] graded, σ in [0, Δ/2] power weighted
    for g in range(len(s_g)):
        sig = 1.0 - 0.5 * F.tau_g[g] / dt
        rhs = exact.value(sig * dt) if exact is not None else sig ** e * G[0]
        out[0] += 0.5 * F.w_g[g] * algebra.compose(F.Fg_half[g], rhs[None])[0]
    if exact is not None:
        mom = exact.moments(0.0, 0.5 * dt)
        for Fq, mq in zip((F.Fn[1], F.F34, F.Fm[1]), mom):
            out[0] += algebra.compose(Fq, mq[None])[0]
    else:
        wq = _first_weights(e) * (0.5 * dt) * 0.5 ** e
        for Fq, w in zip((F.Fn[1], F.F34, F.Fm[1]), wq):
            out[0] += algebra.compose(Fq, (w * G[0])[None])[0]
    return out


def space_convolution(f: np.ndarray, g: np.ndarray, grid: SpatialGrid,
                      translation_invariant: bool = False) -> np.ndarray:
    """(f * g)(x, y) = ∫ f(x, z) g(z, y) dz on the grid.

    With ``translation_invariant`` f and g are single grid functions of the
    offset and the result is their linear convolution (FFT), centred on the
    window; otherwise f is (N, N) and g is (N, C) and the composition is a
    trapezoid-weighted matrix product.
    """
    h = grid.h
    if translation_invariant:
        N = grid.N
        full = signal.fftconvolve(np.asarray(f, float), np.asarray(g, float)) * h
        # window node k sits at x_k = −R + k h; offsets combine around node N/2
        return full[N // 2:N // 2 + N]
    return np.asarray(f) @ np.asarray(g) * h


# ---------------------------------------------------------------------------
# Frozen family on the lattice
# ---------------------------------------------------------------------------

class FrozenFamily:
    """Z(τ, x, z) and LZ1(τ, x, z) for all window rows and selected columns.

    Columns are de-duplicated by their coefficient rows, so a model whose
    modulation takes few distinct values costs few transforms.
    """

    def __init__(self, model: LevyTypeModel, grid: SpatialGrid):
        if grid.dim != 1:
            raise KernelError("CONFIG_INVALID", "the variable-coefficient parametrix is one-dimensional")
        self.model, self.grid = model, grid
        self.bank = SymbolBank(model, grid)
        self.coef = self.bank.coefficients(grid.x)              # (N, R+1)
        self.nterm = len(self.bank.terms)
        self.uniq, self.inv = np.unique(self.coef, axis=0, return_inverse=True)
        self.inv = self.inv.ravel()
        N, M = grid.N, grid.M
        self.idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % M
        self.has_drift = bool(np.any(self.coef[:, self.nterm:] != 0))
        self.constant = len(self.uniq) == 1

    def padded(self, tau: float, rows=None, mult=None):
        """(b, [A_r b], D b) on the padded grid for the unique coefficient rows.

        ``mult`` replaces the heat multiplier e^{−τq} by an arbitrary function
        of the symbol values (used for exact time moments).
        """
        g, bank = self.grid, self.bank
        uniq = self.uniq if rows is None else self.uniq[rows]
        f = (lambda q: np.exp(-tau * q)) if mult is None else mult
        E = np.stack([f(bank.exponent(r)) for r in uniq])
        b = np.fft.irfft(E, n=g.M, axis=1) / g.h
        Ab = [np.fft.irfft(-bank.sym[r][None, :] * E, n=g.M, axis=1) / g.h for r in range(self.nterm)]
        Db = np.fft.irfft(1j * bank.xi[None, :] * E, n=g.M, axis=1) / g.h if self.has_drift else None
        return b, Ab, Db

    def evaluate(self, tau: float, cols=None, want_z: bool = True, want_lz: bool = True,
                 mult=None):
        """Z and LZ1 at lag τ, rows = all window nodes, columns = ``cols``."""
        cols = np.arange(self.grid.N) if cols is None else np.asarray(cols)
        used = np.unique(self.inv[cols])
        b, Ab, Db = self.padded(tau, used, mult)
        remap = np.full(len(self.uniq), -1)
        remap[used] = np.arange(len(used))
        u = remap[self.inv[cols]][None, :]
        idx = self.idx[:, cols]
        Z = b[u, idx] if want_z else None
        LZ = None
        if want_lz:
            LZ = np.zeros((self.grid.N, len(cols)))
            for r in range(self.nterm):
                dc = self.coef[:, r][:, None] - self.coef[cols, r][None, :]
                if np.any(dc):
                    LZ += dc * Ab[r][u, idx]
            if self.has_drift:
                da = self.coef[:, self.nterm][:, None] - self.coef[cols, self.nterm][None, :]
                if np.any(da):
                    LZ += da * Db[u, idx]
        return Z, LZ

    def outside_constant(self) -> bool:
        """Whether coefficients beyond the window equal the edge values."""
        g = self.grid
        far = np.concatenate([g.x[0] - g.h * np.array([1, 7, 50]), g.x[-1] + g.h * np.array([1, 7, 50])])
        c = self.bank.coefficients(far)
        return bool(np.allclose(c[:3], self.coef[0]) and np.allclose(c[3:], self.coef[-1]))

    def lz_row_integral(self, tau: float, mult=None) -> np.ndarray:
        """∫ LZ1(τ, z, y) dy over all y on the grid lattice, for every row z.

        Columns are grouped by coefficient class u, so the sum over y is one
        circular convolution per class of its indicator with A_r b_u.  Nodes
        beyond the window join the class of the nearest edge (coefficients
        there equal the edge values, see ``outside_constant``).
        """
        g, bank = self.grid, self.bank
        N, M = g.N, g.M
        K = (M - N) // 2
        member = np.empty(M, dtype=int)
        member[:N] = self.inv
        member[N:N + K] = self.inv[-1]
        member[N + K:] = self.inv[0]
        f = (lambda q: np.exp(-tau * q)) if mult is None else mult
        total = np.zeros(N)
        for u in np.unique(member):
            ind_hat = np.fft.rfft((member == u).astype(float))
            E = f(bank.exponent(self.uniq[u]))
            parts = [(r, -bank.sym[r]) for r in range(self.nterm)]
            if self.has_drift:
                parts.append((self.nterm, 1j * bank.xi))
            for r, sym in parts:
                dc = self.coef[:, r] - self.uniq[u, r]
                if not np.any(dc):
                    continue
                conv = np.fft.irfft(ind_hat * sym * E, n=M)[:N]
                total += dc * conv
        return total

    def lz_moments(self, a: float, L: float, cols) -> np.ndarray:
        """∫_a^{a+L} ℓ_q((σ−a)/L) LZ1(σ) dσ for the quadratic basis, shape (3, N, C)."""
        out = []
        for q in range(3):
            mult = lambda z, q=q: np.exp(-a * z) * L * _lagrange_laplace(q, L * z)
            out.append(self.evaluate(0.0, cols, want_z=False, mult=mult)[1])
        return np.stack(out)

    def extended_columns(self, tau: float, cols) -> np.ndarray:
        """Z(τ, x, y_c) on the whole padded period, window placed at [0, N)."""
        g = self.grid
        cols = np.asarray(cols)
        used = np.unique(self.inv[cols])
        b, _, _ = self.padded(tau, used)
        remap = np.full(len(self.uniq), -1)
        remap[used] = np.arange(len(used))
        k = np.arange(g.M)
        # padded node k represents x_0 + k h for k < M − M/4, else x_0 + (k − M) h
        offs = np.where(k < g.M - g.M // 4, k, k - g.M)
        return b[remap[self.inv[cols]][None, :], (offs[:, None] - cols[None, :]) % g.M]


class LZ1Operand:
    """LZ1 columns as an exact right operand of ⋆ (spectral time moments).

    With ``row_integral`` an extra last column carries ∫ LZ1(σ, z, y) dy.
    """

    def __init__(self, family: FrozenFamily, cols, row_integral: bool = False):
        self.family, self.cols, self.row_integral = family, np.asarray(cols), row_integral
        self._cache: dict = {}

    def moments(self, a: float, L: float) -> np.ndarray:
        key = ("m", round(a, 14), round(L, 14))
        if key not in self._cache:
            out = self.family.lz_moments(a, L, self.cols)
            if self.row_integral:
                rows = []
                for q in range(3):
                    mult = lambda z, q=q: np.exp(-a * z) * L * _lagrange_laplace(q, L * z)
                    rows.append(self.family.lz_row_integral(0.0, mult))
                out = np.concatenate([out, np.stack(rows)[:, :, None]], axis=2)
            self._cache[key] = out
        return self._cache[key]

    def value(self, sigma: float) -> np.ndarray:
        key = ("v", round(sigma, 14))
        if key not in self._cache:
            v = self.family.evaluate(sigma, self.cols, want_z=False)[1]
            if self.row_integral:
                v = np.column_stack([v, self.family.lz_row_integral(sigma)])
            self._cache[key] = v
        return self._cache[key]

    def lattice(self, times) -> np.ndarray:
        return np.stack([self.value(t) for t in times])


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def lz1(model: LevyTypeModel, t: float, grid: SpatialGrid, y_samples,
        family: FrozenFamily | None = None, profile=None) -> KernelField:
    """(L_x − L_y) Z(t, x, y) with its J₁ + J₂ + J₃ split.

    J₁ is the drift difference, J₃ the large-jump part (ρ_t‖u‖ > 1)
    evaluated by direct quadrature over grid offsets, and J₂ the remainder.
    """
    fam = FrozenFamily(model, grid) if family is None else family
    cols = _column_indices(grid, y_samples)
    _, total = fam.evaluate(t, cols, want_z=False)
    g = grid
    J1 = np.zeros_like(total)
    if fam.has_drift:
        _, _, Db = fam.padded(t)
        da = fam.coef[:, fam.nterm][:, None] - fam.coef[cols, fam.nterm][None, :]
        J1 = da * Db[fam.inv[cols][None, :], fam.idx[:, cols]]
    rho = None
    if profile is not None:
        rho = profile.rho(t)
    else:
        from .model import build_profile
        rho = build_profile(model).rho(t)
    cut = 1.0 / rho
    base = model.base
    Zext = fam.extended_columns(t, cols)                    # (M, C)
    k = np.arange(g.M)
    offs = np.where(k <= g.M // 2, k, k - g.M) * g.h          # jump u at padded offset k
    J3 = np.zeros_like(total)
    for r, (coef_fn, (lo, hi)) in enumerate(fam.bank.terms):
        dc = fam.coef[:, r][:, None] - fam.coef[cols, r][None, :]
        if not np.any(dc):
            continue
        a = np.abs(offs)
        lo_c = np.maximum(np.maximum(a - g.h / 2, cut), lo)
        hi_c = np.minimum(a + g.h / 2, hi)
        w = np.where((a > 0) & (hi_c > lo_c), 0.5 * base.radial_mass(lo_c, np.where(hi_c > lo_c, hi_c, lo_c + 1)), 0.0)
        w = np.where(hi_c > lo_c, w, 0.0)
        outside = 0.5 * float(base.radial_mass(max(g.M // 2 * g.h + g.h / 2, cut, lo), hi)) * 2 if hi > max(g.M // 2 * g.h, cut, lo) else 0.0
        for loc, mass in base.atoms:
            rr = abs(loc[0])
            if rr > cut and lo < rr <= hi:
                kk = int(round(loc[0] / g.h)) % g.M
                w[kk] += mass
        W = np.fft.rfft(w)
        # ∫ Z(x+u) w(du): correlation, i.e. convolution with the reflected weights
        conv = np.fft.irfft(np.conj(W)[:, None] * np.fft.rfft(Zext, axis=0), n=g.M, axis=0)[:g.N]
        J3 += dc * (conv - Zext[:g.N] * (w.sum() + outside))
    J2 = total - J1 - J3
    return KernelField(role="LZ1", times=np.array([t]), x=g.x, y=g.x[cols],
                       values=total[None], diagnostics={"J1": J1, "J2": J2, "J3": J3, "rho": rho})


def _column_indices(grid: SpatialGrid, y_samples) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y_samples, dtype=float))
    k = np.round((y - grid.x[0]) / grid.h).astype(int)
    if np.any(np.abs(grid.x[0] + k * grid.h - y) > 1e-9) or np.any((k < 0) | (k >= grid.N)):
        raise KernelError("CONFIG_INVALID", "y samples must be window nodes")
    return k


@dataclass
class ParametrixResult:
    """Everything produced by one parametrix solve."""

    ladder: TimeLadder
    grid: SpatialGrid
    cols: np.ndarray
    Z: np.ndarray
    Phi: np.ndarray
    ZPhi: np.ndarray
    term_norms: list
    stop_reason: str
    family: FrozenFamily = field(repr=False)
    timings: dict = field(default_factory=dict)
    corr_row_mass: np.ndarray | None = None
    term_l1: list = field(default_factory=list)

    @property
    def p(self) -> np.ndarray:
        return self.Z + self.ZPhi

    def field(self, role: str = "p") -> KernelField:
        vals = {"p": self.p, "Z": self.Z, "Phi": self.Phi, "ZPhi": self.ZPhi}[role]
        return KernelField(role=role, times=self.ladder.times, x=self.grid.x,
                           y=self.grid.x[self.cols], values=vals,
                           diagnostics={"term_norms": self.term_norms, "stop": self.stop_reason})


def k0_threshold(sigma: float, alpha: float, lam: float) -> int:
    """k₀ = [σ(α+1)/(αλ)] + 1."""
    return int(np.floor(sigma * (alpha + 1) / (alpha * lam))) + 1


def phi_series(model: LevyTypeModel, ladder: TimeLadder, grid: SpatialGrid,
               tol: float = 1e-4, M_max: int = 12, y_stride: int = 4,
               k0: int | None = None, family: FrozenFamily | None = None,
               min_terms: int | None = None, row_integral: bool = True) -> dict:
    """Φ = Σ_m (LZ)_m with (LZ)_1 = LZ1 and (LZ)_{m+1} = LZ1 ⋆ (LZ)_m.

    Terms are added until the sup norm of a term drops below tol·‖Φ‖ and at
    least ``min_terms`` (default k₀ + 2) terms are present, or ``M_max`` is
    reached.  SERIES_DIVERGING is raised when three consecutive ratios beyond
    k₀ exceed 1.

    With ``row_integral`` the series is also run for φ̄(s, z) = ∫Φ(s, z, y) dy,
    which satisfies φ̄ = ∫LZ1 dy + LZ1 ⋆ φ̄; it is carried as an extra last
    column and gives the exact y-mass of Z⋆Φ without tail extrapolation.

    Returns a dict with keys Phi, norms (sup norm per term), l1 (per term
    and lattice time, the largest column ℓ¹ norm in x), stop, lag (the LZ1
    lag kernel or None), family, cols, timings.
    """
    fam = FrozenFamily(model, grid) if family is None else family
    cols = np.arange(0, grid.N, y_stride)
    k0 = 1 if k0 is None else k0
    min_terms = k0 + 2 if min_terms is None else min_terms
    times = ladder.times
    t0 = time.perf_counter()
    exact = LZ1Operand(fam, cols, row_integral=row_integral)
    G = exact.lattice(times)
    timings = {"lz1_lattice": time.perf_counter() - t0}
    nk = len(cols)
    n1 = float(np.max(np.abs(G[..., :nk])))
    l1 = lambda T: grid.h * np.max(np.sum(np.abs(T[..., :nk]), axis=1), axis=1)
    out = {"family": fam, "cols": cols, "timings": timings, "exact": exact}
    if n1 <= 1e-300:
        out.update(Phi=np.zeros_like(G), norms=[0.0], l1=[l1(G)], stop="constant-coefficients",
                   lag=None)
        return out
    t0 = time.perf_counter()
    lagL = LagKernel(lambda tau: fam.evaluate(tau, want_z=False)[1], ladder)
    timings["lz1_lags"] = time.perf_counter() - t0
    Phi = G.copy()
    norms = [n1]
    l1_norms = [l1(G)]
    stop = "M_max"
    above = 0
    t0 = time.perf_counter()
    for m in range(2, M_max + 1):
        G = spacetime_convolution(lagL, G, ladder, h=grid.h, exact=exact if m == 2 else None)
        nm = float(np.max(np.abs(G[..., :nk])))
        norms.append(nm)
        l1_norms.append(l1(G))
        Phi += G
        if m - 1 > k0 and norms[-2] > 0 and nm / norms[-2] > 1:
            above += 1
            if above >= 3:
                raise KernelError("SERIES_DIVERGING", "term norms grow beyond k0", norms=norms)
        else:
            above = 0
        if m >= min_terms and nm < tol * float(np.max(np.abs(Phi[..., :nk]))):
            stop = "tolerance"
            break
    timings["series"] = time.perf_counter() - t0
    out.update(Phi=Phi, norms=norms, l1=l1_norms, stop=stop, lag=lagL)
    return out


def fundamental_solution(model: LevyTypeModel, ladder: TimeLadder, grid: SpatialGrid,
                         tol: float = 1e-4, M_max: int = 12, y_stride: int = 4,
                         k0: int | None = None, min_terms: int | None = None) -> ParametrixResult:
    """p = Z + Z⋆Φ on the lattice (rows: window nodes, columns: every ``y_stride``-th node)."""
    ser = phi_series(model, ladder, grid, tol=tol, M_max=M_max, y_stride=y_stride, k0=k0,
                     min_terms=min_terms)
    fam, cols, timings = ser["family"], ser["cols"], ser["timings"]
    nk = len(cols)
    t0 = time.perf_counter()
    Z = np.stack([fam.evaluate(t, cols, want_lz=False)[0] for t in ladder.times])
    Phi = ser["Phi"]
    if ser["lag"] is None:
        ZPhi = np.zeros_like(Phi)
    else:
        ser["lag"] = None
        lagZ = LagKernel(lambda tau: fam.evaluate(tau, want_lz=False)[0], ladder)
        exact = ser["exact"]
        G1 = exact.lattice(ladder.times)
        ZPhi = (spacetime_convolution(lagZ, G1, ladder, h=grid.h, exact=exact)
                + spacetime_convolution(lagZ, Phi - G1, ladder, h=grid.h))
    timings["assemble"] = time.perf_counter() - t0
    return ParametrixResult(ladder=ladder, grid=grid, cols=cols, Z=Z, Phi=Phi[..., :nk],
                            ZPhi=ZPhi[..., :nk], term_norms=ser["norms"], stop_reason=ser["stop"],
                            family=fam, timings=timings, corr_row_mass=ZPhi[..., nk],
                            term_l1=ser["l1"])


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def mass_in_y(res: ParametrixResult, t: float, rows=None) -> dict:
    """∫ p(t, x, y) dy over all y, per row, split as ∫Z dy + ∫Z⋆Φ dy.

    The Z part is summed over every grid node in the window (the
    coefficients may have kinks that a strided sum resolves only to O(h_y²))
    plus the frozen-kernel mass beyond it, with coefficients equal to their
    edge values there.  The Z⋆Φ part is Z⋆φ̄ with φ̄ = ∫Φ dy, carried through
    the series.  ``window`` is the strided trapezoid of the stored columns,
    kept as a diagnostic.
    """
    g = res.grid
    k = res.ladder.index(t)
    rows = np.where(g.bulk_mask())[0] if rows is None else np.asarray(rows)
    hy = g.h * (res.cols[1] - res.cols[0]) if len(res.cols) > 1 else g.h
    fam = res.family
    z_window = g.h * fam.evaluate(t, want_lz=False)[0][rows].sum(axis=1)
    z_tail = np.zeros(len(rows))
    kk = np.arange(g.M)
    w = np.where(kk <= g.M // 2, kk, kk - g.M) * g.h            # offset x − y
    for edge_col, side in ((0, -1), (g.N - 1, 1)):
        b = fam.padded(t, [fam.inv[edge_col]])[0][0]
        for n, r in enumerate(rows):
            yv = g.x[r] - w
            sel = yv < g.x[0] - g.h / 2 if side < 0 else yv > g.x[-1] + g.h / 2
            z_tail[n] += g.h * b[sel].sum()
    corr = (np.zeros(len(rows)) if res.corr_row_mass is None
            else res.corr_row_mass[k][rows])
    return {"mass": z_window + z_tail + corr, "z_mass": z_window + z_tail, "corr_mass": corr,
            "window": hy * res.p[k][rows].sum(axis=1),
            "outside_constant": fam.outside_constant()}


def chapman_kolmogorov_defect(res: ParametrixResult, t: float, s: float,
                              relative: bool = True) -> float:
    """sup over bulk (x, y) of |p(t+s) − ∫ p(t, x, z) p(s, z, y) dz|.

    The z integral runs over the sampled columns with trapezoid weight.
    """
    g = res.grid
    pt, ps, pts = res.p[res.ladder.index(t)], res.p[res.ladder.index(s)], res.p[res.ladder.index(t + s)]
    hy = g.h * (res.cols[1] - res.cols[0])
    comp = pt[:, :] @ ps[res.cols, :] * hy
    bulk_r = np.abs(g.x) <= g.R / 2
    bulk_c = np.abs(g.x[res.cols]) <= g.R / 2
    d = np.abs(pts - comp)[np.ix_(bulk_r, bulk_c)]
    scale = float(np.max(np.abs(pts[np.ix_(bulk_r, bulk_c)]))) if relative else 1.0
    return float(np.max(d) / scale)


def residual_check(res: ParametrixResult, t_values=None, use: str = "p") -> dict:
    """Relative sup residual of ∂_t p − L(x,D) p over the bulk.

    ∂_t Z is exact (spectral); ∂_t(Z⋆Φ) uses 5-point differences on the
    lattice (centred, or one-sided at the last lattice time).  L(x,D) acts on
    each column extended outside the window by the frozen kernel Z, which is
    where p − Z is negligible.
    """
    g, lad = res.grid, res.ladder
    fam = res.family
    field_vals = res.p if use == "p" else res.Z
    t_values = lad.report if t_values is None else t_values
    out = {}
    bulk_r = np.abs(g.x) <= g.R / 2
    for t in t_values:
        k = lad.index(t)
        corr = None if use == "Z" else res.ZPhi
        if corr is not None and 2 <= k <= lad.Kt - 3:
            dc = (-corr[k + 2] + 8 * corr[k + 1] - 8 * corr[k - 1] + corr[k - 2]) / (12 * lad.dt)
        elif corr is not None and 1 <= k <= lad.Kt - 2:
            dc = (corr[k + 1] - corr[k - 1]) / (2 * lad.dt)
        elif corr is not None and k >= 4:
            dc = (25 * corr[k] - 48 * corr[k - 1] + 36 * corr[k - 2] - 16 * corr[k - 3]
                  + 3 * corr[k - 4]) / (12 * lad.dt)
        elif corr is None:
            dc = 0.0
        else:
            continue
        # ∂_t Z = L_y Z exactly in Fourier space
        dZ = fam.evaluate(t, res.cols, want_lz=False, mult=lambda q: -q * np.exp(-t * q))[0]
        dp = dZ + dc
        ext = fam.extended_columns(t, res.cols)
        if use == "p":
            ext += _far_correction(res.ZPhi[k], fam, res.cols)
        ext[:g.N] = field_vals[k]
        Lp = _generator_on_padded(fam, ext)
        bulk = bulk_r[:, None] & (np.abs(g.x[:, None] - g.x[res.cols][None, :]) <= g.R / 2) \
            & (np.abs(g.x[res.cols])[None, :] <= g.R / 2)
        r = np.abs(dp - Lp)[bulk]
        out[float(t)] = float(np.max(r) / np.max(np.abs(dp)[bulk]))
    return out


def _far_correction(corr: np.ndarray, fam: FrozenFamily, cols) -> np.ndarray:
    """Z⋆Φ continued beyond the window in x by a per-column far-field fit.

    Uses c₁ν(x−y) + c₂ν(x−y)/|x−y| fitted on ‖x‖ ≥ R/2, |x−y| ≥ R/4.
    """
    g, base = fam.grid, fam.model.base
    k = np.arange(g.M)
    xp = g.x[0] + np.where(k < g.M - g.M // 4, k, k - g.M) * g.h
    out = np.zeros((g.M, len(cols)))
    outside = (k >= g.N)
    for c, yv in enumerate(g.x[cols]):
        for side in (-1, 1):
            band = (side * g.x >= g.R / 2) & (np.abs(g.x - yv) >= g.R / 4)
            if band.sum() < 3:
                continue
            d = np.abs(g.x[band] - yv)
            nu = base.radial_density(d)
            if not np.any(nu > 0):
                continue
            coef, *_ = np.linalg.lstsq(np.column_stack([nu, nu / d]), corr[band, c], rcond=None)
            sel = outside & (side * xp > 0)
            dd = np.abs(xp[sel] - yv)
            nn = base.radial_density(dd)
            out[sel, c] = coef[0] * nn + coef[1] * nn / dd
    return out


def _generator_on_padded(fam: FrozenFamily, ext: np.ndarray) -> np.ndarray:
    """L(x,D) of columns given on the padded period; window rows returned."""
    g, bank = fam.grid, fam.bank
    F = np.fft.rfft(ext, axis=0)
    out = np.zeros((g.N, ext.shape[1]))
    for r in range(fam.nterm):
        out += fam.coef[:, r][:, None] * np.fft.irfft(-bank.sym[r][:, None] * F, n=g.M, axis=0)[:g.N]
    if fam.has_drift:
        out += fam.coef[:, fam.nterm][:, None] * np.fft.irfft(1j * bank.xi[:, None] * F, n=g.M, axis=0)[:g.N]
    return out


def beta_identity_check(delta: float, k: int, Kt: int = 40) -> float:
    """Relative error of the singular quadrature on s^{k(1−δ)−1} ⋆ s^{−δ}.

    The exact value at t = 1 is B(k(1−δ), 1−δ).
    """
    ladder = TimeLadder(Kt=Kt, delta=delta, report=(1.0,))
    a = k * (1 - delta) - 1
    G = ladder.times[:, None, None] ** a
    F = LagKernel(lambda tau: np.array([[tau ** (-delta)]]), ladder)
    out = spacetime_convolution(F, G, ladder, h=1.0)
    exact = special.beta(k * (1 - delta), 1 - delta)
    return float(abs(out[-1, 0, 0] - exact) / exact)
