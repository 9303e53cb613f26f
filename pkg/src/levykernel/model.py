"""Lévy-type models and their symbol-level quantities.

A model is the triple (a, μ, m) defining

    L(x,D) f(x) = a(x)·∇f(x) + ∫ (f(x+u) − f(x) − u·∇f(x) 1{‖u‖≤1}) m(x,u) μ(du),

with a rotation-invariant base density plus finitely many atoms.  The
modulation is stored in separable form m(x,u) = Σ_r c_r(x) χ_r(u), where
each χ_r is the indicator of a radial shell; this keeps the frozen symbol
q(y,·) = Σ_r c_r(y) q_r(·) cheap to evaluate on a dual grid.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import KernelError

FAMILIES = ("power", "truncated-power", "tempered-power", "none")

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


def _unit_sphere_area(n: int) -> float:
    return 2.0 if n == 1 else 2.0 * np.pi


def _abs_cos_moment(alpha: float) -> float:
    """∫_0^{2π} |cos θ|^α dθ."""
    return 2.0 * np.sqrt(np.pi) * special.gamma((alpha + 1) / 2) / special.gamma(alpha / 2 + 1)


def fractional_symbol_constant(n: int, alpha: float) -> float:
    """∫_{ℝⁿ} (1 − cos ξ·u) ‖u‖^{−n−α} du / ‖ξ‖^α."""
    return (np.pi ** (n / 2) * special.gamma(1 - alpha / 2)
            / (alpha * 2 ** (alpha - 1) * special.gamma((n + alpha) / 2)))


def _angular_upper(s):
    """∫_0^{2π} min(s² cos²θ, 1) dθ for s ≥ 0."""
    s = np.asarray(s, dtype=float)
    out = np.pi * s**2
    big = s > 1
    th = np.arccos(1.0 / s[big])
    out[big] = 4.0 * (th + s[big]**2 * (np.pi / 4 - th / 2 - np.sin(2 * th) / 4))
    return out


def _angular_lower(s):
    """∫_0^{2π} s² cos²θ 1{s|cos θ| ≤ 1} dθ for s ≥ 0."""
    s = np.asarray(s, dtype=float)
    out = np.pi * s**2
    big = s > 1
    th = np.arccos(1.0 / s[big])
    out[big] = 4.0 * s[big]**2 * (np.pi / 4 - th / 2 - np.sin(2 * th) / 4)
    return out


# ---------------------------------------------------------------------------
# Base measure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LevyBaseMeasure:
    """Rotation-invariant density part plus atoms.

    Parameters
    ----------
    dim : int
        Space dimension, 1 or 2.
    family : str
        Density selector: ``power`` (c‖u‖^{−n−α}), ``truncated-power``
        (same on ‖u‖ ≤ cutoff), ``tempered-power`` (times e^{−temper‖u‖})
        or ``none``.
    alpha : float
        Power exponent of the density near the origin.
    scale : float
        Prefactor c.
    atoms : tuple of (location, mass)
        Point masses away from the origin.
    eps_in, r_out, n_geo : float, float, int
        Radial quadrature: geometric cells between ``eps_in`` and ``r_out``
        with analytic head/tail corrections.
    """

    dim: int = 1
    family: str = "power"
    alpha: float = 1.0
    scale: float = 1.0
    cutoff: float = 1.0
    temper: float = 1.0
    atoms: tuple = ()
    eps_in: float = 1e-8
    r_out: float = 1e4
    n_geo: int = 48

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise KernelError("CONFIG_INVALID", f"dimension {self.dim} not supported")
        if self.family not in FAMILIES:
            raise KernelError("CONFIG_INVALID", f"unknown density family {self.family!r}")
        if self.family != "none" and not 0 < self.alpha < 2:
            raise KernelError("CONFIG_INVALID", "alpha must lie in (0, 2)")
        if self.scale < 0:
            raise KernelError("CONFIG_INVALID", "density prefactor must be nonnegative")
        atoms = tuple((tuple(float(v) for v in np.atleast_1d(loc)), float(w)) for loc, w in self.atoms)
        for loc, w in atoms:
            if len(loc) != self.dim:
                raise KernelError("CONFIG_INVALID", "atom location has wrong dimension")
            if w <= 0:
                raise KernelError("CONFIG_INVALID", "atom masses must be positive")
            if not any(loc):
                raise KernelError("CONFIG_INVALID", "atoms must avoid the origin")
        object.__setattr__(self, "atoms", atoms)

    # -- density --------------------------------------------------------
    @property
    def has_density(self) -> bool:
        return self.family != "none" and self.scale > 0

    @property
    def support_radius(self) -> float:
        if self.family == "truncated-power":
            return self.cutoff
        if self.family == "tempered-power":
            return min(self.r_out, 60.0 / self.temper)
        return self.r_out

    def radial_density(self, r):
        """Density ν(u) as a function of r = ‖u‖."""
        r = np.asarray(r, dtype=float)
        if not self.has_density:
            return np.zeros_like(r)
        with np.errstate(divide="ignore"):
            out = self.scale * r ** (-self.dim - self.alpha)
        if self.family == "truncated-power":
            out = np.where(r <= self.cutoff, out, 0.0)
        elif self.family == "tempered-power":
            out = out * np.exp(-self.temper * r)
        return out

    def density(self, u):
        """Density at points ``u`` of shape (..., n) (or (...,) in 1D)."""
        u = np.asarray(u, dtype=float)
        r = np.abs(u) if self.dim == 1 and (u.ndim == 0 or u.shape[-1] != 1) else np.linalg.norm(u, axis=-1)
        return self.radial_density(r)

    def radial_mass(self, a, b):
        """∫_{a<‖u‖≤b} ν(u) du (density part only)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if not self.has_density:
            return np.zeros(np.broadcast(a, b).shape)
        S = _unit_sphere_area(self.dim)
        al = self.alpha
        if self.family == "power":
            with np.errstate(divide="ignore"):
                return S * self.scale * (a ** (-al) - b ** (-al)) / al
        if self.family == "truncated-power":
            bb = np.minimum(b, self.cutoff)
            aa = np.minimum(a, bb)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(aa < bb, S * self.scale * (aa ** (-al) - bb ** (-al)) / al, 0.0)
        # tempered: quadrature in log r
        def one(lo, hi):
            if hi <= lo:
                return 0.0
            hi = min(hi, self.support_radius)
            if hi <= lo:
                return 0.0
            f = lambda v: self.radial_density(np.exp(v)) * np.exp(v * self.dim) * S
            return integrate.quad(f, np.log(lo), np.log(hi), limit=200, epsabs=0, epsrel=1e-12)[0]
        return np.vectorize(one)(a, b)

    # -- radial quadrature ----------------------------------------------
    def _radial_rule(self, breaks: Sequence[float] = (), n_geo: int | None = None,
                     max_width: float | None = None):
        """Nodes and weights for ∫_{eps_in}^{r_hi} g(r) dr on geometric cells."""
        n_geo = self.n_geo if n_geo is None else n_geo
        lo, hi = self.eps_in, self.support_radius
        edges = np.geomspace(lo, hi, n_geo + 1)
        extra = [b for b in breaks if lo < b < hi]
        edges = np.unique(np.concatenate([edges, extra]))
        if max_width is not None:
            pieces = []
            for a, b in zip(edges[:-1], edges[1:]):
                k = max(1, int(np.ceil((b - a) / max_width)))
                pieces.append(np.linspace(a, b, k + 1)[:-1])
            edges = np.concatenate(pieces + [[edges[-1]]])
        a, b = edges[:-1, None], edges[1:, None]
        nodes = 0.5 * (a + b) + 0.5 * (b - a) * _GL_NODES[None, :]
        weights = 0.5 * (b - a) * _GL_WEIGHTS[None, :]
        return nodes.ravel(), weights.ravel()

    def _head_second_moment(self):
        """∫_{‖u‖≤eps_in} ‖u‖² ν(u) du / (angular factor), power behaviour near 0."""
        if not self.has_density:
            return 0.0
        e = self.eps_in
        return self.scale * e ** (2 - self.alpha) / (2 - self.alpha)

    def _tail_mass(self):
        """∫_{‖u‖>r_hi} ν(u) du."""
        if not self.has_density or self.family != "power":
            return 0.0
        return _unit_sphere_area(self.dim) * self.scale * self.support_radius ** (-self.alpha) / self.alpha

    # -- q^U, q^L ------------------------------------------------------
    def _density_upper_lower(self, r: float, n_geo: int | None = None):
        """Density contribution to (q^U, q^L) at ‖ξ‖ = r (direction-free)."""
        if not self.has_density or r == 0:
            return 0.0, 0.0
        if self.family == "power" and n_geo is None:
            al, c = self.alpha, self.scale
            ang = 2.0 if self.dim == 1 else _abs_cos_moment(al)
            return (c * ang * r**al * 2 / (al * (2 - al)), c * ang * r**al / (2 - al))
        nodes, w = self._radial_rule(breaks=(1.0 / r,), n_geo=n_geo)
        dens = self.radial_density(nodes) * nodes ** (self.dim - 1)
        s = r * nodes
        if self.dim == 1:
            up = 2.0 * np.minimum(s**2, 1.0)
            lowr = 2.0 * np.where(s <= 1, s**2, 0.0)
            head = 2.0 * r**2 * self._head_second_moment()
        else:
            up, lowr = _angular_upper(s), _angular_lower(s)
            head = np.pi * r**2 * self._head_second_moment()
        qu = float(np.sum(w * dens * up)) + head + self._tail_mass()
        ql = float(np.sum(w * dens * lowr)) + head
        return qu, ql

    def _atom_upper_lower(self, xi):
        qu = ql = 0.0
        for loc, w in self.atoms:
            d = float(np.dot(xi, loc))
            qu += w * min(d * d, 1.0)
            ql += w * d * d if abs(d) <= 1 else 0.0
        return qu, ql

    def upper_lower(self, xi, n_geo: int | None = None):
        """(q^U(ξ), q^L(ξ)) for a single frequency vector ξ."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        r = float(np.linalg.norm(xi))
        du, dl = self._density_upper_lower(r, n_geo)
        au, al = self._atom_upper_lower(xi)
        return du + au, dl + al

    def directions(self, n_angles: int = 64) -> np.ndarray:
        if self.dim == 1:
            return np.array([[1.0], [-1.0]])
        th = 2 * np.pi * np.arange(n_angles) / n_angles
        return np.stack([np.cos(th), np.sin(th)], axis=1)

    def q_star(self, r, n_angles: int = 64):
        """q*(r) = sup over directions of q^U(r l)."""
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r_arr)
        dirs = self.directions(n_angles)
        for k, rv in enumerate(r_arr):
            du, _ = self._density_upper_lower(rv)
            au = max(self._atom_upper_lower(rv * l)[0] for l in dirs) if self.atoms else 0.0
            out[k] = du + au
        return out if np.ndim(r) else float(out[0])

    def integrability(self) -> float:
        """∫ (1 ∧ ‖u‖²) μ(du)."""
        val = sum(w * min(1.0, float(np.dot(loc, loc))) for loc, w in self.atoms)
        if self.has_density:
            S = _unit_sphere_area(self.dim)
            nodes, wts = self._radial_rule(breaks=(1.0,))
            dens = self.radial_density(nodes) * nodes ** (self.dim - 1) * S
            val += float(np.sum(wts * dens * np.minimum(nodes**2, 1.0)))
            val += S * self._head_second_moment() + self._tail_mass()
        return val

    # -- characteristic exponent ------------------------------------------
    def symbol(self, xi, shell: tuple[float, float] = (0.0, np.inf), n_geo: int | None = None):
        """∫_{shell} (1 − e^{iξ·u} + iξ·u 1{‖u‖≤1}) μ(du) for unit modulation.

        Parameters
        ----------
        xi : array_like
            Frequencies, shape (...,) in 1D or (..., 2) in 2D.
        shell : (float, float)
            Radial window lo < ‖u‖ ≤ hi of the jumps that are included.

        Returns
        -------
        ndarray
            Complex symbol values (real when the atoms are symmetric).
        """
        xi = np.asarray(xi, dtype=float)
        if self.dim == 1:
            kabs = np.abs(xi)
            xv = xi[..., None]
        else:
            kabs = np.linalg.norm(xi, axis=-1)
            xv = xi
        lo, hi = shell
        out = np.zeros(kabs.shape, dtype=complex)
        if self.has_density:
            out += self._density_symbol(kabs, lo, hi, n_geo)
        for loc, w in self.atoms:
            rr = float(np.linalg.norm(loc))
            if not lo < rr <= hi:
                continue
            d = xv @ np.asarray(loc)
            out += w * (1 - np.cos(d)) - 1j * w * (np.sin(d) - d * (rr <= 1))
        return out

    def _closed_symbol(self, kabs):
        al, c = self.alpha, self.scale
        if self.family == "power":
            return c * fractional_symbol_constant(self.dim, al) * kabs**al
        if self.family == "tempered-power" and self.dim == 1:
            lam = self.temper
            if abs(al - 1) < 1e-12:
                return 2 * c * (kabs * np.arctan(kabs / lam) - 0.5 * lam * np.log1p((kabs / lam) ** 2))
            return -2 * c * special.gamma(-al) * (
                (lam**2 + kabs**2) ** (al / 2) * np.cos(al * np.arctan(kabs / lam)) - lam**al)
        return None

    def _density_symbol(self, kabs, lo, hi, n_geo):
        full = lo <= 0 and not np.isfinite(hi)
        if full and n_geo is None:
            closed = self._closed_symbol(kabs)
            if closed is not None:
                return closed
        kmax = float(np.max(kabs)) if kabs.size else 0.0
        nodes, w = self._radial_rule(breaks=[b for b in (lo, hi, 1.0) if np.isfinite(b) and b > 0],
                                     n_geo=n_geo, max_width=(0.5 / kmax if kmax > 0 else None))
        keep = (nodes > lo) & (nodes <= hi)
        nodes, w = nodes[keep], w[keep]
        dens = self.radial_density(nodes) * nodes ** (self.dim - 1)
        flat = kabs.ravel()
        out = np.empty(flat.shape)
        # chunk to bound memory
        step = max(1, 2_000_000 // max(1, nodes.size))
        for s0 in range(0, flat.size, step):
            kk = flat[s0:s0 + step, None] * nodes[None, :]
            if self.dim == 1:
                ker = 2.0 * (1 - np.cos(kk))
            else:
                ker = 2 * np.pi * (1 - special.j0(kk))
            out[s0:s0 + step] = ker @ (w * dens)
        head_ang = 1.0 if self.dim == 1 else np.pi / 2
        if lo <= 0:
            out += head_ang * flat**2 * self._head_second_moment()
        if not np.isfinite(hi):
            out += self._tail_mass()
        return out.reshape(kabs.shape)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        """True when ν(u) = ν(−u) (always for radial densities) and atoms pair up."""
        for loc, w in self.atoms:
            neg = tuple(-v for v in loc)
            if not any(np.allclose(neg, l2, atol=tol) and abs(w - w2) <= tol * max(1, w)
                       for l2, w2 in self.atoms):
                return False
        return True

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["atoms"] = [[list(loc), w] for loc, w in self.atoms]
        return d


# ---------------------------------------------------------------------------
# Modulation and drift
# ---------------------------------------------------------------------------

def _holder_profile(x, exponent: float):
    """(1 ∧ ‖x‖)^exponent, vectorised over trailing coordinate axis for n=2."""
    x = np.asarray(x, dtype=float)
    r = np.abs(x) if x.ndim <= 1 or x.shape[-1] != 2 else np.linalg.norm(x, axis=-1)
    return np.minimum(1.0, r) ** exponent


@dataclass(frozen=True)
class ModulationField:
    """m(x,u) = base + amp·(1∧‖x‖)^exponent·1{‖u‖ in shell}.

    ``kind`` is ``constant`` (amp = 0), ``holder`` (shell = all jumps) or
    ``holder-small`` (shell = ‖u‖ ≤ 1).  The declared constants b₁, b₂, b₃
    and λ are what A2/A3 are checked against.
    """

    kind: str = "constant"
    base: float = 1.0
    amp: float = 0.0
    exponent: float = 1.0
    b1: float = 1.0
    b2: float = 1.0
    b3: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "holder", "holder-small"):
            raise KernelError("CONFIG_INVALID", f"unknown modulation kind {self.kind!r}")
        if self.base <= 0:
            raise KernelError("CONFIG_INVALID", "modulation must be positive")

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or self.amp == 0

    def terms(self):
        """List of (coefficient function c_r(x), radial shell (lo, hi))."""
        base = self.base
        if self.is_constant:
            return [(lambda x: np.full(np.shape(x)[:1] if np.ndim(x) else (), base, dtype=float),
                     (0.0, np.inf))]
        amp, ex = self.amp, self.exponent
        var = lambda x: base + amp * _holder_profile(x, ex)
        if self.kind == "holder":
            return [(var, (0.0, np.inf))]
        const = lambda x: np.full(np.shape(x)[:1] if np.ndim(x) else (), base, dtype=float)
        return [(var, (0.0, 1.0)), (const, (1.0, np.inf))]

    def __call__(self, x, u):
        """Evaluate m(x,u) with broadcasting between x and u samples."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if self.is_constant:
            return np.full(np.broadcast(_holder_profile(x, 1.0), _holder_profile(u, 1.0)).shape,
                           self.base)
        prof = self.amp * _holder_profile(x, self.exponent)
        if self.kind == "holder":
            return self.base + prof + 0.0 * _holder_profile(u, 1.0)
        ru = np.abs(u) if u.ndim <= 1 or u.shape[-1] != 2 else np.linalg.norm(u, axis=-1)
        return self.base + prof * (ru <= 1)


@dataclass(frozen=True)
class DriftField:
    """a(x) = vec + amp·(1∧‖x‖)^exponent·vec_dir; ``kind`` zero/constant/holder."""

    kind: str = "zero"
    vec: tuple = (0.0,)
    amp: float = 0.0
    exponent: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "holder"):
            raise KernelError("CONFIG_INVALID", f"unknown drift kind {self.kind!r}")
        object.__setattr__(self, "vec", tuple(float(v) for v in self.vec))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (not any(self.vec) and self.amp == 0)

    @property
    def is_constant(self) -> bool:
        return self.kind != "holder" or self.amp == 0

    def __call__(self, x):
        """Drift values, shape (..., n)."""
        x = np.asarray(x, dtype=float)
        n = len(self.vec)
        shape = x.shape if n == 1 else x.shape[:-1]
        if self.is_zero:
            return np.zeros(shape + (n,))
        v = np.asarray(self.vec)
        if self.kind == "holder":
            return (1 + self.amp * _holder_profile(x, self.exponent))[..., None] * v
        return np.broadcast_to(v, shape + (n,)).copy()


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LevyTypeModel:
    """Lévy-type model (a, μ, m) with the A1 constant β."""

    base: LevyBaseMeasure = field(default_factory=LevyBaseMeasure)
    modulation: ModulationField = field(default_factory=ModulationField)
    drift: DriftField = field(default_factory=DriftField)
    beta: float = 2.0
    symmetric: bool = True
    name: str = "model"

    def __post_init__(self):
        if not self.beta > 1:
            raise KernelError("CONFIG_INVALID", "beta must exceed 1")
        lam = self.modulation.lam
        if not 0 < lam <= 2 / self.beta + 1e-12:
            raise KernelError("CONFIG_INVALID", "lambda must lie in (0, 2/beta]")
        if 2 / self.beta <= 1 and not (self.symmetric and self.drift.is_zero):
            raise KernelError("CONFIG_INVALID", "alpha <= 1 requires a symmetric kernel and zero drift")

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def alpha(self) -> float:
        return 2.0 / self.beta

    @property
    def has_constant_coefficients(self) -> bool:
        return self.modulation.is_constant and self.drift.is_constant

    def symbol_terms(self):
        """[(c_r, shell)] from the modulation, used by the frozen symbol."""
        return self.modulation.terms()

    def q_exponent(self, y, xi, n_geo: int | None = None):
        """Characteristic exponent q(y,ξ) of the frozen generator at y."""
        return q_exponent(self, y, xi, n_geo=n_geo)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "beta": self.beta,
            "symmetric": self.symmetric,
            "base": self.base.to_dict(),
            "modulation": dataclasses.asdict(self.modulation),
            "drift": dataclasses.asdict(self.drift),
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def model_from_dict(spec: dict) -> LevyTypeModel:
    """Build a model from its JSON-compatible description."""
    try:
        base_d = dict(spec.get("base", {}))
        atoms = tuple((tuple(np.atleast_1d(loc)), w) for loc, w in base_d.pop("atoms", []))
        base = LevyBaseMeasure(atoms=atoms, **base_d)
        mod = ModulationField(**spec.get("modulation", {}))
        drift_d = dict(spec.get("drift", {}))
        drift_d.setdefault("vec", (0.0,) * base.dim)
        drift = DriftField(**drift_d)
        return LevyTypeModel(base=base, modulation=mod, drift=drift,
                             beta=float(spec.get("beta", 2.0 / base.alpha)),
                             symmetric=bool(spec.get("symmetric", True)),
                             name=str(spec.get("name", "model")))
    except TypeError as exc:
        raise KernelError("CONFIG_INVALID", str(exc)) from exc


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def q_exponent(model: LevyTypeModel, y, xi, n_geo: int | None = None, tol: float = 1e-6):
    """q(y,ξ) = −i a(y)·ξ + ∫(1 − e^{iξ·u} + iξ·u 1{‖u‖≤1}) m(y,u) μ(du).

    With ``n_geo`` given the value is computed by radial quadrature at that
    node count and at twice that count; disagreement beyond ``tol``
    (relative) raises QUADRATURE_UNRESOLVED.
    """
    xi_arr = np.asarray(xi, dtype=float)
    y_arr = np.asarray(y, dtype=float)

    def evaluate(ng):
        val = np.zeros(xi_arr.shape[:-1] if model.dim == 2 else xi_arr.shape, dtype=complex)
        for coef, shell in model.symbol_terms():
            c = float(np.ravel(coef(y_arr[None] if model.dim == 1 else y_arr[None, :]))[0])
            val = val + c * model.base.symbol(xi_arr, shell=shell, n_geo=ng)
        a = model.drift(y_arr[None] if model.dim == 1 else y_arr[None, :])[0]
        dot = xi_arr * a[0] if model.dim == 1 else xi_arr @ a
        return val - 1j * dot

    if n_geo is None:
        out = evaluate(None)
    else:
        coarse, fine = evaluate(n_geo), evaluate(2 * n_geo)
        scale = max(1.0, float(np.max(np.abs(fine))))
        if np.max(np.abs(coarse - fine)) > tol * scale:
            raise KernelError("QUADRATURE_UNRESOLVED", "symbol changed under radial refinement",
                              diff=float(np.max(np.abs(coarse - fine))))
        out = fine
    return out if np.ndim(out) else complex(out)


def q_upper_lower(base: LevyBaseMeasure, xi, n_geo: int | None = None):
    """(q^U(ξ), q^L(ξ)); ``n_geo`` forces the quadrature path."""
    return base.upper_lower(xi, n_geo=n_geo)


def q_star(base: LevyBaseMeasure, r, n_angles: int = 64):
    """q*(r) = sup_l q^U(r l)."""
    return base.q_star(r, n_angles=n_angles)


@dataclass
class ValidationReport:
    assumptions: dict
    beta_hat: float
    integrability: float
    details: dict

    @property
    def passed(self) -> bool:
        return all(self.assumptions.values())

    def to_dict(self) -> dict:
        return {"assumptions": self.assumptions, "beta_hat": self.beta_hat,
                "integrability": self.integrability, "passed": self.passed,
                "details": self.details}


def default_sample_plan(model: LevyTypeModel, seed: int = 0) -> dict:
    """Deterministic r-grid, directions and (x, y, u) sample triples."""
    rng = np.random.default_rng(seed)
    n = model.dim
    shape = (400,) if n == 1 else (400, 2)
    return {
        "r_grid": np.geomspace(1.0, 1e4, 41),
        "n_angles": 64,
        "x": rng.uniform(-3, 3, shape),
        "y": rng.uniform(-3, 3, shape),
        "u": rng.standard_cauchy(shape),
    }


def validate_model(model: LevyTypeModel, sample_plan: dict | None = None,
                   raise_on_fail: bool = False) -> ValidationReport:
    """Check A1–A3 (and the symmetry hypothesis for α ≤ 1) on samples."""
    plan = default_sample_plan(model) if sample_plan is None else sample_plan
    base = model.base
    dirs = base.directions(plan.get("n_angles", 64))
    ratios = []
    for r in plan["r_grid"]:
        ups, lows = zip(*(base.upper_lower(r * l) for l in dirs))
        lo = min(lows)
        ratios.append(np.inf if lo <= 0 else max(ups) / lo)
    ratios = np.asarray(ratios)
    beta_hat = float(np.max(ratios))
    a1 = bool(np.isfinite(beta_hat) and beta_hat <= model.beta * (1 + 1e-6))

    x, y, u = plan["x"], plan["y"], plan["u"]
    mod = model.modulation
    mvals = np.concatenate([np.ravel(mod(x, u)), np.ravel(mod(y, u))])
    a2 = bool(np.all(mvals >= mod.b1 - 1e-12) and np.all(mvals <= mod.b2 + 1e-12))

    dist = np.abs(x - y) if model.dim == 1 else np.linalg.norm(x - y, axis=-1)
    ad = np.linalg.norm(np.atleast_2d(model.drift(x) - model.drift(y)).reshape(len(dist), -1), axis=-1)
    md = np.abs(mod(x, u) - mod(y, u))
    with np.errstate(divide="ignore", invalid="ignore"):
        holder = (ad + md) / np.minimum(dist ** mod.lam, 1.0)
    holder = holder[np.isfinite(holder)]
    b3_hat = float(np.max(holder)) if holder.size else 0.0
    a3 = bool(b3_hat <= mod.b3 * (1 + 1e-9))

    sym_needed = model.alpha <= 1
    sym_ok = base.is_symmetric() and model.drift.is_zero if sym_needed else True
    integ = base.integrability()
    report = ValidationReport(
        assumptions={"A1": a1, "A2": a2, "A3": a3, "symmetry": bool(sym_ok),
                     "integrability": bool(np.isfinite(integ))},
        beta_hat=beta_hat,
        integrability=float(integ),
        details={"ratio_ladder": [float(v) for v in ratios], "b3_hat": b3_hat,
                 "m_range": [float(mvals.min()), float(mvals.max())],
                 "declared_beta": model.beta},
    )
    if raise_on_fail:
        for key, code in (("A1", "FAILS_A1"), ("symmetry", "FAILS_SYMMETRY"),
                          ("A2", "FAILS_A2"), ("A3", "FAILS_A3")):
            if not report.assumptions[key]:
                raise KernelError(code, f"assumption {key} violated", report=report.to_dict())
    return report


# ---------------------------------------------------------------------------
# Scale profile
# ---------------------------------------------------------------------------

@dataclass
class ScaleProfile:
    """q* evaluator with a ρ_t table and fitted growth exponents.

    Beyond ``r_table_max`` q* is extended as a power law with the exponent
    measured on the last table decade, so that U(r) can be evaluated for
    r → 0 without evaluating quadratures at astronomically large radii.
    """

    q_star_fn: Callable
    dim: int
    t_ladder: np.ndarray
    rho_table: np.ndarray
    alpha: float
    sigma: float
    c1: float
    c2: float
    tol: float
    r_table_max: float = 1e6
    tail_exponent: float = float("nan")
    tail_value: float = float("nan")
    exact_power: tuple | None = None

    def q_star(self, r):
        r = np.asarray(r, dtype=float)
        if self.exact_power is not None:
            c, a = self.exact_power
            return c * r**a
        out = np.empty_like(r, dtype=float)
        flat, res = r.ravel(), out.ravel()
        big = flat > self.r_table_max
        if np.any(~big):
            res[~big] = np.atleast_1d(self.q_star_fn(flat[~big]))
        if np.any(big):
            res[big] = self.tail_value * (flat[big] / self.r_table_max) ** self.tail_exponent
        return out if r.ndim else float(out)

    def rho(self, t: float) -> float:
        return rho_from_q_star(self.q_star, t, self.tol)

    def to_dict(self) -> dict:
        return {"t": [float(v) for v in self.t_ladder], "rho": [float(v) for v in self.rho_table],
                "alpha": self.alpha, "sigma": self.sigma, "c1": self.c1, "c2": self.c2,
                "tol": self.tol, "tail_exponent": self.tail_exponent}


def rho_from_q_star(qs: Callable, t: float, tol: float = 1e-12, r_init: float = 1.0,
                    r_cap: float = 1e200) -> float:
    """ρ_t = inf{r : q*(r) = 1/t} by bracketed root finding on monotone q*."""
    if not 0 < t:
        raise ValueError("t must be positive")
    target = 1.0 / t
    lo, hi = r_init, r_init
    while float(qs(hi)) < target:
        hi *= 2.0
        if hi > r_cap:
            raise KernelError("RHO_UNDEFINED", f"q* saturates below 1/t = {target:g}",
                              q_star_sup=float(qs(hi)))
    while float(qs(lo)) >= target and lo > 1e-300:
        lo /= 2.0
    f = lambda r: float(qs(r)) - target
    if f(hi) == 0:
        return hi
    return optimize.brentq(f, lo, hi, xtol=1e-300, rtol=max(tol, 4 * np.finfo(float).eps),
                           maxiter=500)


def fit_exponents(t_ladder, rho_table, alpha: float, step: float = 0.05):
    """(α, σ, c₁, c₂) from a ρ_t table.

    σ is the least value on the ladder {α, α+step, ..., 2−step} for which
    ρ_t t^{1/σ} does not decay towards t → 0 (local log-log slope on the
    smallest decade at least −1e-3); c₁ = max ρ_t t^{1/α}, c₂ = min ρ_t t^{1/σ}.
    """
    t = np.asarray(t_ladder, dtype=float)
    rho = np.asarray(rho_table, dtype=float)
    order = np.argsort(t)
    t, rho = t[order], rho[order]
    low = t <= t[0] * 10 * (1 + 1e-9)
    if low.sum() < 2:
        low = slice(0, 2)
    slope = np.polyfit(np.log(t[low]), np.log(rho[low]), 1)[0]
    local = -1.0 / slope if slope < 0 else np.inf
    ladder = np.arange(alpha, 2.0 - step / 2, step)
    sigma = float(ladder[-1])
    for s in ladder:
        if s >= local - 1e-3:
            sigma = float(s)
            break
    c1 = float(np.max(rho * t ** (1 / alpha)))
    c2 = float(np.min(rho * t ** (1 / sigma)))
    return float(alpha), sigma, c1, c2


def build_profile(model_or_base, alpha: float | None = None, t_ladder=None,
                  tol: float = 1e-12, n_angles: int = 64) -> ScaleProfile:
    """Tabulate ρ_t on a geometric t-ladder (2 decades by default) and fit exponents."""
    base = model_or_base.base if isinstance(model_or_base, LevyTypeModel) else model_or_base
    if alpha is None:
        alpha = model_or_base.alpha if isinstance(model_or_base, LevyTypeModel) else base.alpha
    t_ladder = np.geomspace(1e-2, 1.0, 21) if t_ladder is None else np.asarray(t_ladder, float)
    exact = None
    if base.family == "power" and not base.atoms and base.has_density:
        qu, _ = base._density_upper_lower(1.0)
        exact = (qu, base.alpha)
    qs = (lambda r: base.q_star(r, n_angles=n_angles))
    if exact is not None:
        c, a = exact
        qs = lambda r: c * np.asarray(r, dtype=float) ** a
    rho = np.array([rho_from_q_star(qs, t, tol) for t in t_ladder])
    _, sigma, c1, c2 = fit_exponents(t_ladder, rho, alpha)
    r_max = 1e6
    q_hi, q_lo = float(qs(r_max)), float(qs(r_max / 10))
    tail_exp = math.log(q_hi / q_lo) / math.log(10.0) if q_lo > 0 else 0.0
    return ScaleProfile(q_star_fn=qs, dim=base.dim, t_ladder=t_ladder, rho_table=rho,
                        alpha=float(alpha), sigma=sigma, c1=c1, c2=c2, tol=tol,
                        r_table_max=r_max, tail_exponent=tail_exp, tail_value=q_hi,
                        exact_power=exact)
