"""Kato and Dynkin class membership of finite measures.

Two routes are compared:

* the criterion route, through U(r) = ∫_1^{1/r} s^{n−1}/q*(s) ds and the
  ball-mass function of the measure;
* the direct route, through ∫_0^t ∫ p(s, x, y) ϖ(dy) ds for a computed
  kernel p.

Divergence cannot be certified numerically; it is read off a refinement
ladder of inner cutoffs ε → 0 (see ``ladder_verdict``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .errors import KernelError
from .model import ScaleProfile

_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)

FINITE, DIVERGENT = "FINITE", "DIVERGENT"
IN_SK, IN_SD_ONLY, OUT, INCONCLUSIVE = "IN_SK", "IN_SD_ONLY", "OUT", "INCONCLUSIVE"


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------

def cantor_cdf(x, depth: int = 48):
    """Cantor function on [0, 1] (0 to the left, 1 to the right), exact to 2^{−depth}."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    out = np.zeros_like(x)
    frac = x.copy()
    done = np.zeros(x.shape, dtype=bool)
    w = 0.5
    for _ in range(depth):
        frac = frac * 3.0
        d = np.floor(frac)
        d = np.minimum(d, 2.0)
        frac = frac - d
        mid = (d == 1) & ~done
        out += np.where(mid, w, 0.0)
        done |= mid
        out += np.where((d == 2) & ~done, w, 0.0)
        w *= 0.5
    return np.where(x >= 1.0, 1.0, out)


@dataclass
class MeasureSpec:
    """Finite measure on ℝ: atoms plus uniform densities plus Cantor parts.

    Parameters
    ----------
    atoms : list of (x, w)
        Point masses w > 0 at x.
    uniform : list of (a, b, c)
        Density c ≥ 0 on [a, b].
    cantor : list of (a, b, mass)
        Cantor measure on [a, b] (mass 2^{−k}·mass on each level-k interval).
    name : str
        Label used in reports.
    """

    atoms: list = field(default_factory=list)
    uniform: list = field(default_factory=list)
    cantor: list = field(default_factory=list)
    name: str = "measure"

    def __post_init__(self):
        self.atoms = [(float(x), float(w)) for x, w in self.atoms]
        self.uniform = [(float(a), float(b), float(c)) for a, b, c in self.uniform]
        self.cantor = [(float(a), float(b), float(m)) for a, b, m in self.cantor]
        if any(w <= 0 for _, w in self.atoms):
            raise KernelError("CONFIG_INVALID", "atom weights must be positive")
        if any(b <= a or c < 0 for a, b, c in self.uniform + self.cantor):
            raise KernelError("CONFIG_INVALID", "density parts need a < b and nonnegative weight")

    @classmethod
    def from_dict(cls, d: dict) -> "MeasureSpec":
        return cls(atoms=d.get("atoms", []), uniform=d.get("uniform", []),
                   cantor=d.get("cantor", []), name=d.get("name", "measure"))

    def to_dict(self) -> dict:
        return {"name": self.name, "atoms": self.atoms, "uniform": self.uniform,
                "cantor": self.cantor}

    @property
    def total_mass(self) -> float:
        return (sum(w for _, w in self.atoms) + sum((b - a) * c for a, b, c in self.uniform)
                + sum(m for _, _, m in self.cantor))

    @property
    def is_zero(self) -> bool:
        return self.total_mass == 0

    def hull(self):
        pts = [x for x, _ in self.atoms] + [v for a, b, _ in self.uniform + self.cantor for v in (a, b)]
        return (min(pts), max(pts)) if pts else (0.0, 0.0)

    def ball_mass(self, x, r, closed: bool = True):
        """ϖ{y : |x − y| ≤ r} with broadcasting over x and r."""
        x, r = np.broadcast_arrays(np.asarray(x, float), np.asarray(r, float))
        out = np.zeros(x.shape)
        for a, w in self.atoms:
            d = np.abs(x - a)
            out += w * ((d <= r) if closed else (d < r))
        for a, b, c in self.uniform:
            out += c * np.maximum(np.minimum(x + r, b) - np.maximum(x - r, a), 0.0)
        for a, b, m in self.cantor:
            L = b - a
            out += m * (cantor_cdf((x + r - a) / L) - cantor_cdf((x - r - a) / L))
        return out

    def cantor_atoms(self, depth: int = 12):
        """Level-``depth`` discretisation: 2^depth atoms at interval midpoints per Cantor part."""
        xs, ws = [], []
        for a, b, m in self.cantor:
            left = np.zeros(1)
            for _ in range(depth):
                left = np.concatenate([left, left + 2.0 * 3.0 ** -(_ + 1)])
            mid = left + 0.5 * 3.0 ** -depth
            xs.append(a + (b - a) * mid)
            ws.append(np.full(mid.size, m / mid.size))
        if not xs:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(xs), np.concatenate(ws)

    def concentration_points(self, depth: int = 7) -> np.ndarray:
        """Atom locations, and endpoints and centres of Cantor intervals of level ≤ ``depth``."""
        pts = [x for x, _ in self.atoms]
        for a, b, _ in self.cantor:
            left = np.zeros(1)
            for k in range(depth + 1):
                size = 3.0 ** -k
                for off in (0.0, 0.5 * size, size):
                    pts.extend(a + (b - a) * (left + off))
                if k < depth:
                    left = np.concatenate([left, left + 2.0 * 3.0 ** -(k + 1)])
        return np.unique(np.asarray(pts, dtype=float))


def default_x_samples(measure: MeasureSpec, n: int = 401, depth: int = 7) -> np.ndarray:
    """Atoms and concentration points plus a uniform grid over the hull padded by 1."""
    lo, hi = measure.hull()
    grid = np.linspace(lo - 1.0, hi + 1.0, n)
    return np.unique(np.concatenate([grid, measure.concentration_points(depth)]))


# ---------------------------------------------------------------------------
# U-potential
# ---------------------------------------------------------------------------

class UPotential:
    """U(r) = ∫_1^{1/r} s^{n−1}/q*(s) ds for r ∈ (0, 1] and its limit U(0).

    With a pure power profile q* = c s^a the closed form is used; otherwise
    the integral is tabulated in v = ln s with 8-point Gauss panels up to the
    profile's table radius and continued with its power-law tail.
    """

    def __init__(self, profile: ScaleProfile, n: int | None = None, panel: float = 0.125):
        self.profile = profile
        self.n = profile.dim if n is None else n
        self.exact = profile.exact_power
        if self.exact is None:
            self.v_max = math.log(profile.r_table_max)
            self.v = np.arange(0.0, self.v_max + panel / 2, panel)
            cum = [0.0]
            for a, b in zip(self.v[:-1], self.v[1:]):
                cum.append(cum[-1] + self._panel(a, b))
            self.cum = np.asarray(cum)
            a_tail = profile.tail_exponent
            self.tail_exp = a_tail
            S = profile.r_table_max
            self._tail_const = profile.tail_value / S**a_tail

    def _integrand_v(self, v):
        s = np.exp(v)
        return s**self.n / np.asarray(self.profile.q_star(s), dtype=float)

    def _panel(self, a, b):
        x = 0.5 * (b - a) * _GL8_X + 0.5 * (a + b)
        return float(0.5 * (b - a) * np.sum(_GL8_W * self._integrand_v(x)))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0) or np.any(r > 1 + 1e-12):
            raise ValueError("U is defined on [0, 1]")
        with np.errstate(divide="ignore"):
            V = np.where(r > 0, -np.log(np.where(r > 0, r, 1.0)), np.inf)
        if self.exact is not None:
            c, a = self.exact
            e = self.n - a
            if abs(e) < 1e-14:
                out = V / c
            else:
                with np.errstate(over="ignore"):
                    out = (np.exp(e * np.minimum(V, 1e300)) - 1.0) / (c * e)
                if e < 0:
                    out = np.where(np.isinf(V), -1.0 / (c * e), out)
            return out if out.ndim else float(out)
        out = np.empty(V.shape)
        flat, res = V.ravel(), out.ravel()
        for i, vv in enumerate(flat):
            res[i] = self._at_v(vv)
        return out if r.ndim else float(out)

    def _at_v(self, vv: float) -> float:
        if vv <= self.v_max:
            j = int(np.searchsorted(self.v, vv, side="right") - 1)
            j = max(j, 0)
            return float(self.cum[j] + (self._panel(self.v[j], vv) if vv > self.v[j] else 0.0))
        # power tail q* = C s^a beyond the table: ∫ s^{n−1−a}/C ds
        S, a, C = self.profile.r_table_max, self.tail_exp, self._tail_const
        e = self.n - a
        top = math.exp(vv) if math.isfinite(vv) else math.inf
        if abs(e) < 1e-12:
            extra = (math.log(top) - math.log(S)) / C if math.isfinite(top) else math.inf
        elif e < 0:
            extra = (S**e - (top**e if math.isfinite(top) else 0.0)) / (C * -e)
        else:
            extra = (top**e - S**e) / (C * e) if math.isfinite(top) else math.inf
        return float(self.cum[-1] + extra)

    def derivative(self, r):
        """U'(r) = −1/(r^{n+1} q*(1/r))."""
        r = np.asarray(r, dtype=float)
        return -1.0 / (r ** (self.n + 1) * np.asarray(self.profile.q_star(1.0 / r), dtype=float))

    @property
    def at_zero(self) -> float:
        return float(self(0.0))


def u_potential(profile: ScaleProfile, r):
    """U(r) = ∫_1^{1/r} s^{n−1}/q*(s) ds; U(1) = 0, U(0) is the (possibly infinite) limit."""
    return UPotential(profile)(r)


def lhopital_ratio(U: UPotential, r) -> np.ndarray:
    """U(r)/(−rU'(r)) on a ladder of radii."""
    r = np.asarray(r, dtype=float)
    return np.asarray(U(r)) / (-r * U.derivative(r))


# ---------------------------------------------------------------------------
# Criterion route
# ---------------------------------------------------------------------------

EPS_LADDER = 10.0 ** -np.arange(1, 13)


def ladder_verdict(values, decay: float = 0.5, blowup: float = 10.0) -> str:
    """FINITE or DIVERGENT from values computed along a refinement ladder.

    Values are non-decreasing in the refinement.  DIVERGENT when the last
    value exceeds ``blowup`` times the median, or when the increment over
    the last rung is at least ``decay`` times the increment over the first
    (a logarithmic or power divergence keeps its increments; a convergent
    sequence sheds them geometrically).
    """
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        return DIVERGENT
    if v.size < 3:
        return FINITE
    med = float(np.median(v))
    if med > 0 and v[-1] > blowup * med:
        return DIVERGENT
    inc = np.diff(v)
    scale = max(abs(v[-1]), 1e-300)
    first = inc[0]
    if inc[-1] > 1e-9 * scale and first > 0 and inc[-1] >= decay * first:
        return DIVERGENT
    return FINITE


def _stieltjes_u(measure: MeasureSpec, U: UPotential, x: np.ndarray, delta: float, eps: float,
                 renormalise: bool, per_decade: int = 64) -> np.ndarray:
    """∫_{|x−y|≤δ} Ũ(|x−y|) ϖ(dy) with Ũ = U(max(·, ε)) (minus U(δ) when renormalised).

    Integration by parts against the ball mass B_x(r):
    U(δ)B(δ) + ∫_ε^δ B(r)(−U'(r)) dr, evaluated in log r.
    """
    out = np.zeros(x.shape)
    if delta <= eps:
        return out
    Bd = measure.ball_mass(x, delta)
    if not renormalise:
        out += float(U(min(delta, 1.0))) * Bd
    nd = max(1.0, math.log10(delta / eps))
    m = int(math.ceil(nd * per_decade / 8))
    edges = np.linspace(math.log(eps), math.log(delta), m + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        v = 0.5 * (b - a) * _GL8_X + 0.5 * (a + b)
        r = np.exp(v)
        w = 0.5 * (b - a) * _GL8_W * r * -U.derivative(r)
        out += measure.ball_mass(x[:, None], r[None, :]) @ w
    return out


def _atoms_and_rest(measure: MeasureSpec):
    cont = MeasureSpec(uniform=measure.uniform, cantor=measure.cantor, name=measure.name)
    return measure.atoms, cont


def _u_integral(measure: MeasureSpec, U: UPotential, x, delta: float, eps: float,
                renormalise: bool = False) -> np.ndarray:
    """Atoms by direct U evaluation, the non-atomic part by parts against its ball mass."""
    x = np.asarray(x, dtype=float)
    atoms, cont = _atoms_and_rest(measure)
    out = np.zeros(x.shape)
    Ud = float(U(min(delta, 1.0)))
    for a, w in atoms:
        d = np.abs(x - a)
        inside = d <= delta
        vals = np.asarray(U(np.clip(np.maximum(d, eps), 0, 1)))
        out += w * np.where(inside, vals - (Ud if renormalise else 0.0), 0.0)
    if cont.uniform or cont.cantor:
        out += _stieltjes_u(cont, U, x, delta, eps, renormalise)
    return out


@dataclass
class KatoReport:
    """Criterion and direct-route results for one measure and one profile."""

    measure: str
    dynkin_value: float
    dynkin_verdict: str
    dynkin_ladder: list
    kato_deltas: list
    kato_values: list
    kato_raw: list
    kato_verdict: str
    alt_value: float
    alt_ratio: float
    d_hat: float
    sufficient: str
    verdict: str
    direct: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def dynkin_criterion(profile: ScaleProfile, measure: MeasureSpec, x_samples=None,
                     eps_ladder=EPS_LADDER, U: UPotential | None = None):
    """sup_x ∫_{|y−x|≤1} U(|y−x|) ϖ(dy) with its refinement verdict.

    Returns (value, verdict, ladder) where ``ladder`` holds the values with
    U truncated at each inner cutoff ε; ``value`` is the limit (U(0) used
    for atoms hit exactly) when FINITE and ``inf`` otherwise.
    """
    U = UPotential(profile) if U is None else U
    if measure.is_zero:
        return 0.0, FINITE, [0.0] * len(eps_ladder)
    x = default_x_samples(measure) if x_samples is None else np.asarray(x_samples, float)
    ladder = [float(np.max(_u_integral(measure, U, x, 1.0, e))) for e in eps_ladder]
    verdict = ladder_verdict(ladder)
    if verdict == DIVERGENT:
        return math.inf, verdict, ladder
    value = float(np.max(_u_integral(measure, U, x, 1.0, 0.0))) if not (measure.uniform or measure.cantor) \
        else _extrapolate(ladder)
    return value, verdict, ladder


def _extrapolate(ladder) -> float:
    """Limit of a geometrically converging ladder (Aitken Δ² on the last three rungs)."""
    v = np.asarray(ladder, dtype=float)
    if v.size < 3:
        return float(v[-1])
    a, b, c = v[-3:]
    den = (c - b) - (b - a)
    if abs(den) < 1e-300 or (c - b) * (b - a) <= 0:
        return float(c)
    return float(c - (c - b) ** 2 / den)


def kato_criterion(profile: ScaleProfile, measure: MeasureSpec, x_samples=None,
                   delta_ladder=None, tol: float = 1e-3, U: UPotential | None = None):
    """Criterion values sup_x ∫_{|x−y|≤δ} (U(|x−y|) − U(δ)) ϖ(dy) along δ → 0.

    Returns (values, raw, verdict).  ``raw`` are the literal values without
    subtracting U(δ); for an atom and U(0) < ∞ they stay at U(0)·mass and
    never vanish, although the direct definition puts such a measure in
    S_K.  The verdict uses the renormalised values: IN_SK iff they are
    non-increasing and fall below ``tol`` times their first value (or are
    identically zero).  U is truncated at ε = min(10⁻¹⁴, 10⁻¹⁰δ), so a
    divergent U(0) shows up as large finite values; ``classify`` overrides
    the verdict with OUT when the Dynkin ladder diverges.
    """
    U = UPotential(profile) if U is None else U
    deltas = np.geomspace(1.0, 1e-8, 9) if delta_ladder is None else np.asarray(delta_ladder, float)
    if measure.is_zero:
        z = [0.0] * len(deltas)
        return z, z, IN_SK
    x = default_x_samples(measure) if x_samples is None else np.asarray(x_samples, float)
    vals, raw = [], []
    for d in deltas:
        e = min(1e-14, d * 1e-10)
        per_x = _u_integral(measure, U, x, d, e)
        raw.append(float(np.max(per_x)))
        shift = float(U(min(d, 1.0))) * measure.ball_mass(x, d)
        vals.append(float(max(np.max(per_x - shift), 0.0)))
    v = np.asarray(vals)
    if not np.all(np.isfinite(v)):
        verdict = OUT
    elif np.all(v == 0):
        verdict = IN_SK
    elif np.all(np.diff(v) <= 1e-12 * v[0]) and v[-1] <= tol * v[0]:
        verdict = IN_SK
    else:
        verdict = IN_SD_ONLY
    return vals, raw, verdict


def criterion_alt(profile: ScaleProfile, measure: MeasureSpec, x_samples=None,
                  eps: float = 1e-12, per_decade: int = 64) -> float:
    """sup_x ∫_0^1 ϖ{|x−y| ≤ r}/(r^{n+1} q*(1/r)) dr by direct quadrature in log r."""
    if measure.is_zero:
        return 0.0
    x = default_x_samples(measure) if x_samples is None else np.asarray(x_samples, float)
    n = profile.dim
    edges = np.linspace(math.log(eps), 0.0, int(math.ceil(-math.log10(eps) * per_decade / 8)) + 1)
    total = np.zeros(x.shape)
    for a, b in zip(edges[:-1], edges[1:]):
        v = 0.5 * (b - a) * _GL8_X + 0.5 * (a + b)
        r = np.exp(v)
        k = 1.0 / (r ** (n + 1) * np.asarray(profile.q_star(1.0 / r), dtype=float))
        total += measure.ball_mass(x[:, None], r[None, :]) @ (0.5 * (b - a) * _GL8_W * r * k)
    # below ε the ball mass is the atom mass at x; its integral has a closed form for powers
    if profile.exact_power is not None:
        c, a_ = profile.exact_power
        e = a_ - n
        if e > 0:
            total += measure.ball_mass(x, 0.0) * eps**e / (c * e)
        else:
            total += np.where(measure.ball_mass(x, 0.0) > 0, np.inf, 0.0)
    return float(np.max(total))


def sufficient_condition_check(measure: MeasureSpec, alpha: float, n: int = 1, x_samples=None,
                               r_ladder=None, margin: float = 0.05):
    """Fitted d̂ with sup_x ϖ(B(x, r)) ≈ c r^{d̂}; SUFFICIENT_HOLDS iff d̂ > n − α + margin.

    The default samples resolve Cantor parts down to intervals of length
    3^{−D} ≤ r_min; coarser samples miss the supremum at small r and bias
    d̂ upwards.
    """
    r = np.geomspace(1e-1, 1e-5, 81) if r_ladder is None else np.asarray(r_ladder, float)
    if x_samples is None:
        depth = int(math.ceil(math.log(1.0 / r.min(), 3))) + 1
        x = default_x_samples(measure, 2001, depth=depth)
    else:
        x = np.asarray(x_samples, float)
    if measure.is_zero:
        return math.inf, "SUFFICIENT_HOLDS"
    sup = np.array([float(np.max(measure.ball_mass(x, rr))) for rr in r])
    d_hat = float(np.polyfit(np.log(r), np.log(sup), 1)[0])
    return d_hat, "SUFFICIENT_HOLDS" if d_hat > n - alpha + margin else "NOT_ESTABLISHED"


# ---------------------------------------------------------------------------
# Direct route
# ---------------------------------------------------------------------------

class SelfSimilarKernel:
    """p(s, w) = s^{−1/α} p₁(w s^{−1/α}) from one computed slice p₁ = p(t_ref, ·).

    Inside the computed window p₁ is a cubic spline; beyond it the tail
    c|w|^{−1−α} is fitted to the outer quarter of the window.  Valid for
    constant-coefficient strictly α-stable models, whose kernels are exactly
    self-similar.
    """

    def __init__(self, w: np.ndarray, values: np.ndarray, alpha: float, t_ref: float = 1.0):
        w = np.asarray(w, float)
        v = np.asarray(values, float)
        s = t_ref ** (1.0 / alpha)
        self.w, self.v = w / s, v * s          # slice at t = 1
        self.alpha = alpha
        self.spline = CubicSpline(self.w, self.v)
        W = self.w.max()
        outer = np.abs(self.w) >= 0.75 * W
        self.c_tail = float(np.median(self.v[outer] * np.abs(self.w[outer]) ** (1 + alpha)))
        self.W = W
        cdf = integrate.cumulative_trapezoid(self.v, self.w, initial=0.0)
        left_tail = self.c_tail * W ** -alpha / alpha
        self.cdf_spline = CubicSpline(self.w, cdf + left_tail)
        self.total = float(cdf[-1] + 2 * left_tail)

    def unit(self, w):
        w = np.asarray(w, float)
        a = np.abs(w)
        inside = a <= self.W
        out = np.empty(w.shape)
        out[inside] = self.spline(w[inside])
        out[~inside] = self.c_tail * a[~inside] ** (-1 - self.alpha)
        return out

    def unit_cdf(self, w):
        w = np.asarray(w, float)
        out = np.empty(w.shape)
        lo, hi = w < -self.W, w > self.W
        mid = ~(lo | hi)
        out[mid] = self.cdf_spline(w[mid])
        out[lo] = self.c_tail * np.abs(w[lo]) ** -self.alpha / self.alpha
        out[hi] = self.total - self.c_tail * w[hi] ** -self.alpha / self.alpha
        return out

    def __call__(self, s: float, w):
        sc = s ** (1.0 / self.alpha)
        return self.unit(np.asarray(w, float) / sc) / sc

    def mass_between(self, s: float, lo, hi):
        """∫_lo^hi p(s, w) dw."""
        sc = s ** (1.0 / self.alpha)
        return self.unit_cdf(np.asarray(hi, float) / sc) - self.unit_cdf(np.asarray(lo, float) / sc)

    @classmethod
    def from_model(cls, model, grid=None, t_ref: float = 1.0):
        """Slice of the frozen kernel at y = 0 (constant-coefficient stable model)."""
        from .frozen import SpatialGrid, frozen_density
        if not model.has_constant_coefficients or model.base.family != "power" or model.dim != 1:
            raise KernelError("KERNEL_RANGE", "self-similar rescaling needs a 1D stable model")
        grid = SpatialGrid(dim=1, R=64.0, N=2048, oversample=32) if grid is None else grid
        sl = frozen_density(model, t_ref, 0.0, grid)
        return cls(grid.x, sl.values.ravel(), model.alpha, t_ref)

    @classmethod
    def from_field(cls, p, alpha: float, t: float | None = None, col: int | None = None):
        t = float(p.times[-1]) if t is None else t
        col = int(np.argmin(np.abs(p.y))) if col is None else col
        return cls(p.x - p.y[col], p.at(t)[:, col], alpha, t)


def _space_integral(kernel: SelfSimilarKernel, measure: MeasureSpec, s: float, x: np.ndarray,
                    cantor_depth: int) -> np.ndarray:
    out = np.zeros(x.shape)
    for a, w in measure.atoms:
        out += w * kernel(s, x - a)
    for a, b, c in measure.uniform:
        out += c * kernel.mass_between(s, x - b, x - a)
    if measure.cantor:
        xa, wa = measure.cantor_atoms(cantor_depth)
        for st in range(0, x.size, 64):
            xs = x[st:st + 64]
            out[st:st + 64] += kernel(s, xs[:, None] - xa[None, :]) @ wa
    return out


class _PanelCache:
    """∫ over log-s Gauss panels of ∫ p(s, x, y) ϖ(dy), memoised by panel ends."""

    def __init__(self, kernel, measure: MeasureSpec, x: np.ndarray, cantor_depth: int):
        self.kernel, self.measure, self.x, self.depth = kernel, measure, x, cantor_depth
        self.memo: dict = {}

    def panel(self, a: float, b: float) -> np.ndarray:
        key = (round(a, 9), round(b, 9))
        if key not in self.memo:
            v = 0.5 * (b - a) * _GL8_X + 0.5 * (a + b)
            out = np.zeros(self.x.shape)
            for vv, ww in zip(v, 0.5 * (b - a) * _GL8_W):
                s = math.exp(vv)
                out += ww * s * _space_integral(self.kernel, self.measure, s, self.x, self.depth)
            self.memo[key] = out
        return self.memo[key]

    def integral(self, eps: float, t: float, per_decade: int) -> np.ndarray:
        """∫_ε^t with panel ends on a 1/per_decade grid in log10 s where possible."""
        la, lb = math.log10(eps), math.log10(t)
        k0, k1 = math.ceil(la * per_decade - 1e-9), math.floor(lb * per_decade + 1e-9)
        ends = [la] + [k / per_decade for k in range(k0, k1 + 1)] + [lb]
        ends = sorted(set(round(e, 12) for e in ends))
        out = np.zeros(self.x.shape)
        ln10 = math.log(10.0)
        for a, b in zip(ends[:-1], ends[1:]):
            if b > a:
                out += self.panel(a * ln10, b * ln10)
        return out


def direct_integral(kernel: SelfSimilarKernel, measure: MeasureSpec, t: float, x, eps: float,
                    per_decade: int = 4, cantor_depth: int = 10) -> np.ndarray:
    """∫_ε^t ∫ p(s, x, y) ϖ(dy) ds for each x.

    Nodes are Gauss panels in log s, matching the on-diagonal behaviour
    p ≍ ρ_s ~ s^{−1/α} which is a power in s.
    """
    x = np.asarray(x, float)
    return _PanelCache(kernel, measure, x, cantor_depth).integral(eps, t, per_decade)


def direct_class_check(kernel, measure: MeasureSpec, t_ladder=None, x_samples=None,
                       eps_decades: int = 6, min_t: float = 1e-10, slope_min: float = 0.05,
                       per_decade: int = 4, cantor_depth: int = 10) -> dict:
    """Direct Kato/Dynkin verdict from ∫_0^t ∫ p(s, x, y) ϖ(dy) ds.

    For every t the inner cutoff runs over ε = t·10^{−j}, j = 1..eps_decades,
    and ``ladder_verdict`` decides divergence.  When all are finite, the
    measure is IN_SK if sup_x of the integral decreases with t with log-log
    slope ≥ ``slope_min`` and IN_SD_ONLY otherwise.  Cantor parts enter as
    2^``cantor_depth`` atoms.

    Parameters
    ----------
    kernel : SelfSimilarKernel or KernelField
        A field is converted through ``SelfSimilarKernel.from_field``, which
        requires its ``diagnostics['alpha']``.
    """
    if not isinstance(kernel, SelfSimilarKernel):
        alpha = kernel.diagnostics.get("alpha")
        if alpha is None:
            raise KernelError("KERNEL_RANGE", "direct check needs a self-similar kernel to reach s → 0")
        kernel = SelfSimilarKernel.from_field(kernel, alpha)
    t_ladder = np.geomspace(1e-3, 1e-1, 5) if t_ladder is None else np.asarray(t_ladder, float)
    if t_ladder.min() * 10.0 ** -eps_decades < min_t:
        raise KernelError("KERNEL_RANGE", "t ladder too small for the cutoff refinement",
                          smallest=float(t_ladder.min()))
    if measure.is_zero:
        return {"t": t_ladder.tolist(), "values": [0.0] * len(t_ladder), "verdict": IN_SK,
                "ladders": [], "slope": math.inf}
    x = default_x_samples(measure, 101, depth=4) if x_samples is None else np.asarray(x_samples, float)
    cache = _PanelCache(kernel, measure, x, cantor_depth)
    values, ladders, verdicts = [], [], []
    for t in t_ladder:
        eps = t * 10.0 ** -np.arange(1, eps_decades + 1)
        lad = [float(np.max(cache.integral(e, t, per_decade))) for e in eps]
        ladders.append(lad)
        verdicts.append(ladder_verdict(lad))
        values.append(_extrapolate(lad) if verdicts[-1] == FINITE else math.inf)
    if DIVERGENT in verdicts:
        return {"t": t_ladder.tolist(), "values": values, "verdict": OUT, "ladders": ladders,
                "slope": math.nan}
    slope = float(np.polyfit(np.log(t_ladder), np.log(values), 1)[0])
    verdict = IN_SK if slope >= slope_min else IN_SD_ONLY
    return {"t": t_ladder.tolist(), "values": values, "verdict": verdict, "ladders": ladders,
            "slope": slope}


def classify(profile: ScaleProfile, measure: MeasureSpec, x_samples=None, kernel=None,
             t_ladder=None) -> KatoReport:
    """Run every criterion, the sufficient condition and (optionally) the direct route."""
    U = UPotential(profile)
    dv, dverd, dlad = dynkin_criterion(profile, measure, x_samples, U=U)
    deltas = np.geomspace(1.0, 1e-8, 9)
    kv, kraw, kverd = kato_criterion(profile, measure, x_samples, deltas, U=U)
    if dverd == DIVERGENT:
        kverd = OUT
    alt = criterion_alt(profile, measure, x_samples)
    ratio = alt / dv if dv not in (0.0, math.inf) and math.isfinite(alt) else (
        1.0 if alt == dv else math.nan)
    d_hat, suff = sufficient_condition_check(measure, profile.alpha, profile.dim)
    direct = {}
    if kernel is not None:
        direct = direct_class_check(kernel, measure, t_ladder, x_samples=None)
    return KatoReport(measure=measure.name, dynkin_value=dv, dynkin_verdict=dverd,
                      dynkin_ladder=dlad, kato_deltas=deltas.tolist(), kato_values=kv,
                      kato_raw=kraw, kato_verdict=kverd, alt_value=alt, alt_ratio=ratio,
                      d_hat=d_hat, sufficient=suff, verdict=kverd, direct=direct)
