"""Measure hierarchy Λ_t, P_t, P_{t,γ}, G, Π, Q and the compound-kernel envelopes.

Measures live on the node set u_k = k h, |k| ≤ K (one-dimensional), the
same spacing as the spatial grid.  Spatial convolution ``*`` is a linear
convolution in which mass leaving the node range is clamped onto the
boundary nodes, so total masses are exact.  The space–time convolution
``⋆`` reuses the singular product rule of the parametrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import KernelError
from .frozen import SpatialGrid
from .io import write_csv
from .model import LevyTypeModel, ScaleProfile, build_profile
from .parametrix import (KernelField, LagKernel, MeasureAlgebra, TimeLadder, conv_clamped,
                         k0_threshold, spacetime_convolution)

LAMBDA, POISSON, TILTED, G1, GK, PI, QM = "Lambda", "P", "P_tilt", "G", "G_k", "Pi", "Q"


@dataclass
class GridMeasure:
    """Nonnegative atoms at u_k = (k − K) h, k = 0..2K.

    ``tail`` is a bound on mass omitted by series truncation and
    ``clipped`` the mass of negative round-off removed on construction.
    """

    weights: np.ndarray
    h: float
    tag: str
    t: float
    tail: float = 0.0
    clipped: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size % 2 == 0:
            raise KernelError("CONFIG_INVALID", "measure needs an odd symmetric node set")
        neg = w < 0
        if np.any(neg):
            self.clipped += float(-w[neg].sum())
            w = np.where(neg, 0.0, w)
        self.weights = w

    @property
    def K(self) -> int:
        return self.weights.size // 2

    @property
    def nodes(self) -> np.ndarray:
        return self.h * (np.arange(self.weights.size) - self.K)

    @property
    def mass(self) -> float:
        return float(math.fsum(self.weights))

    def scaled(self, c: float, tag: str | None = None) -> "GridMeasure":
        return GridMeasure(c * self.weights, self.h, tag or self.tag, self.t, c * self.tail)

    def convolve(self, other: "GridMeasure", tag: str | None = None) -> "GridMeasure":
        _same_nodes(self, other)
        return GridMeasure(conv_clamped(self.weights, other.weights), self.h,
                           tag or f"{self.tag}*{other.tag}", self.t)

    def ledger(self) -> dict:
        return {"tag": self.tag, "t": self.t, "mass": self.mass, "tail": self.tail,
                "clipped": self.clipped, "nodes": self.weights.size, "h": self.h}

    def to_csv(self, path) -> None:
        write_csv(path, ["node", "weight"], np.column_stack([self.nodes, self.weights]))


def _same_nodes(a: GridMeasure, b: GridMeasure):
    if a.weights.size != b.weights.size or abs(a.h - b.h) > 1e-15 * a.h:
        raise KernelError("GRID_MISMATCH", "measures live on different node sets")


@dataclass
class EnvelopeParams:
    """Constants of f_lower = a₁(1 − a₂|x|)₊ and f_upper = a₃e^{−a₄|x|}."""

    a1: float
    a2: float
    a3: float
    a4: float
    A: float = 1.0
    K_poisson: int = 20
    K_pi: int = 13
    margins: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.a1, self.a2, self.a3, self.a4, self.A) <= 0:
            raise KernelError("CONFIG_INVALID", "envelope constants must be positive")

    def to_dict(self) -> dict:
        return {"a1": self.a1, "a2": self.a2, "a3": self.a3, "a4": self.a4, "A": self.A,
                "K_poisson": self.K_poisson, "K_pi": self.K_pi, "margins": self.margins}


def _check_dim(model: LevyTypeModel):
    if model.dim != 1:
        raise KernelError("CONFIG_INVALID", "the measure hierarchy is implemented in one dimension")


# ---------------------------------------------------------------------------
# Single-time measures
# ---------------------------------------------------------------------------

def lambda_measure(model: LevyTypeModel, t: float, grid: SpatialGrid,
                   profile: ScaleProfile | None = None, K: int | None = None) -> GridMeasure:
    """Λ_t = t μ(du) 1{ρ_t|u| > 1} lumped onto nodes.

    Node k collects the mass of its cell [(|k|−½)h, (|k|+½)h]; the boundary
    nodes ±K also collect everything beyond.
    """
    _check_dim(model)
    profile = build_profile(model) if profile is None else profile
    rho = profile.rho(t)
    cut = 1.0 / rho
    base, h = model.base, grid.h
    K = grid.N if K is None else K
    k = np.arange(K + 1)
    lo = np.maximum((k - 0.5) * h, cut)
    lo[0] = cut
    hi = (k + 0.5) * h
    hi[-1] = np.inf
    side = np.zeros(K + 1)
    live = hi > lo
    if base.has_density and np.any(live):
        side[live] = 0.5 * base.radial_mass(lo[live], hi[live])
    w = np.zeros(2 * K + 1)
    w[K:] += side
    w[:K + 1] += side[::-1]
    for loc, mass in base.atoms:
        if abs(loc[0]) > cut:
            w[K + int(np.clip(round(loc[0] / h), -K, K))] += mass
    return GridMeasure(t * w, h, LAMBDA, t)


def poisson_exponential(lam: GridMeasure, K: int = 20) -> GridMeasure:
    """P = e^{−Λ(ℝ)} Σ_{k≤K} Λ^{*k}/k!, with tail bound Λ(ℝ)^{K+1}/(K+1)!."""
    m = lam.mass
    term = np.zeros_like(lam.weights)
    term[lam.K] = 1.0
    acc = term.copy()
    for k in range(1, K + 1):
        term = conv_clamped(term, lam.weights) / k
        acc += term
    tail = m ** (K + 1) / math.factorial(K + 1)
    return GridMeasure(math.exp(-m) * acc, lam.h, POISSON, lam.t, tail=tail)


def tilt_measure(P: GridMeasure, gamma: float, rho: float) -> GridMeasure:
    """(1 + ρ^γ(|w|^γ ∧ 1)) P(dw)."""
    if gamma <= 0:
        raise KernelError("CONFIG_INVALID", "tilt exponent must be positive")
    fac = 1.0 + rho**gamma * np.minimum(np.abs(P.nodes) ** gamma, 1.0)
    return GridMeasure(fac * P.weights, P.h, TILTED, P.t, tail=P.tail * (1 + rho**gamma))


def tilt_moment(P: GridMeasure, gamma: float, rho: float) -> float:
    """ρ^γ ∫(|w|^γ ∧ 1) P(dw), the quantity bounded by c₆e."""
    return float(rho**gamma * np.sum(np.minimum(np.abs(P.nodes) ** gamma, 1.0) * P.weights))


def g_measure(model: LevyTypeModel, t: float, grid: SpatialGrid, lam: float,
              profile: ScaleProfile, K_poisson: int = 20, K: int | None = None) -> dict:
    """Λ_t, P_t, P_{t,λ} and G_{t,λ} = t^{λ/σ−1}(P_{t,λ} + Λ_t * P_{t,λ})."""
    L = lambda_measure(model, t, grid, profile, K)
    P = poisson_exponential(L, K_poisson)
    rho = profile.rho(t)
    Pl = tilt_measure(P, lam, rho)
    G = L.convolve(Pl)
    G = GridMeasure(t ** (lam / profile.sigma - 1) * (Pl.weights + G.weights), L.h, G1, t,
                    tail=t ** (lam / profile.sigma - 1) * Pl.tail * (1 + L.mass))
    return {"Lambda": L, "P": P, "P_tilt": Pl, "G": G, "rho": rho}


# ---------------------------------------------------------------------------
# Hierarchy on the time lattice
# ---------------------------------------------------------------------------

@dataclass
class Hierarchy:
    """Per-lattice-time measures of the G/Π/Q hierarchy (arrays (Kt, L))."""

    ladder: TimeLadder
    h: float
    lam: float
    sigma: float
    alpha: float
    k0: int
    A: float
    rho: np.ndarray
    Lambda: np.ndarray
    P: np.ndarray
    P_tilt: np.ndarray
    G: np.ndarray
    G_star: list
    G_k: list
    Pi: np.ndarray
    Q: np.ndarray
    P_tails: np.ndarray
    clipped: float = 0.0

    @property
    def delta(self) -> float:
        return 1.0 - self.lam / self.sigma

    @property
    def times(self) -> np.ndarray:
        return self.ladder.times

    def measure(self, name: str, t: float, k: int | None = None) -> GridMeasure:
        i = self.ladder.index(t)
        if name in ("G_star", "G_k"):
            arr = getattr(self, name)[k - 1]
        else:
            arr = getattr(self, name)
        return GridMeasure(arr[i].copy(), self.h, name if k is None else f"{name}{k}", float(t))

    def masses(self, name: str, k: int | None = None) -> np.ndarray:
        arr = getattr(self, name) if k is None else getattr(self, name)[k - 1]
        return np.sum(arr, axis=-1)

    def p_star_pi_mass(self) -> np.ndarray:
        """(P ⋆ Π)(ℝ) on the lattice.

        Masses factor through the time convolution and P_τ(ℝ) = 1 up to the
        Poisson tail, so this is ∫_0^t Π_s(ℝ) ds by the singular product rule.
        """
        lad = self.ladder
        F = LagKernel(lambda tau: np.array([[1.0]]), lad)
        return spacetime_convolution(F, self.masses("Pi")[:, None, None], lad, h=1.0)[:, 0, 0]

    def ledger(self) -> dict:
        t = self.times
        rep = self.ladder.report_indices
        out = {"times": t[rep], "k0": self.k0, "A": self.A, "delta": self.delta,
               "Lambda_mass": self.masses("Lambda")[rep], "P_mass": self.masses("P")[rep],
               "P_tail": self.P_tails[rep], "G_mass": self.masses("G")[rep],
               "Pi_mass": self.masses("Pi")[rep], "Q_mass": self.masses("Q")[rep],
               "clipped": self.clipped}
        out["G_star_mass"] = [self.masses("G_star", k)[rep] for k in range(1, len(self.G_star) + 1)]
        return out


def g_hierarchy(model: LevyTypeModel, ladder: TimeLadder, grid: SpatialGrid, lam: float | None = None,
                K_pi: int | None = None, A: float = 1.0, profile: ScaleProfile | None = None,
                K_poisson: int = 20, K: int | None = None) -> Hierarchy:
    """G_{t,λ}, G^{⋆k}, G^{(k)} (k ≤ K_pi), Π_{t,λ} and Q_{t,λ} on every lattice time.

    G^{(k)} = G^{⋆k} for k ≤ k₀ and (ρ_t G^{(k₀)}) ⋆ G^{⋆(k−k₀)} beyond;
    Π = Σ_k A^k G^{(k)}; Q = Λ + Λ * Π.  ``ladder.delta`` must equal
    1 − λ/σ so that the graded nodes match the singularity of G.
    """
    _check_dim(model)
    profile = build_profile(model) if profile is None else profile
    lam = model.modulation.lam if lam is None else lam
    sigma, alpha = profile.sigma, profile.alpha
    if not 0 < lam < alpha:
        raise KernelError("CONFIG_INVALID", "λ must lie in (0, α)")
    delta = 1.0 - lam / sigma
    if abs(delta - ladder.delta) > 1e-12:
        raise KernelError("SINGULARITY_MISMATCH", "ladder δ differs from 1 − λ/σ",
                          ladder=ladder.delta, required=delta)
    k0 = k0_threshold(sigma, alpha, lam)
    K_pi = k0 + 8 if K_pi is None else K_pi
    times = ladder.times
    parts = [g_measure(model, t, grid, lam, profile, K_poisson, K) for t in times]
    stack = lambda key: np.stack([p[key].weights for p in parts])
    Lam, P, Pl, G = stack("Lambda"), stack("P"), stack("P_tilt"), stack("G")
    rho = np.array([p["rho"] for p in parts])
    tails = np.array([p["P"].tail for p in parts])
    h = grid.h
    algebra = MeasureAlgebra()
    lagG = LagKernel(lambda tau: g_measure(model, tau, grid, lam, profile, K_poisson, K)["G"].weights,
                     ladder)
    G_star = [G]
    cur = G[:, :, None]
    for _ in range(2, K_pi + 1):
        cur = spacetime_convolution(lagG, cur, ladder, algebra=algebra)
        G_star.append(cur[:, :, 0])
    G_k = list(G_star[:k0])
    if K_pi > k0:
        lagR = LagKernel.from_lattice(rho[:, None] * G_star[k0 - 1], ladder)
        for k in range(k0 + 1, K_pi + 1):
            right = G_star[k - k0 - 1][:, :, None]
            G_k.append(spacetime_convolution(lagR, right, ladder, algebra=algebra)[:, :, 0])
    clipped = 0.0
    for arr in G_star[1:] + G_k[k0:]:
        neg = arr < 0
        clipped = max(clipped, float(-np.min(arr, initial=0.0)))
        arr[neg] = 0.0
    Pi = sum(A**k * G_k[k - 1] for k in range(1, K_pi + 1))
    Q = Lam + np.stack([conv_clamped(Lam[i], Pi[i]) for i in range(len(times))])
    return Hierarchy(ladder=ladder, h=h, lam=lam, sigma=sigma, alpha=alpha, k0=k0, A=A, rho=rho,
                     Lambda=Lam, P=P, P_tilt=Pl, G=G, G_star=G_star, G_k=G_k, Pi=Pi, Q=Q,
                     P_tails=tails, clipped=clipped)


def gamma_bound_fit(hier: Hierarchy, k_max: int | None = None, growth: float = 1.5) -> dict:
    """Fit c in G^{⋆k}(ℝ) ≤ c^k Γ^k(1−δ)/Γ(k(1−δ)) t^{k−1−kδ}.

    c_k = max_t of the k-th root of the normalised mass; a single c is
    declared to hold when max_k c_k ≤ ``growth``·c_1, i.e. the constant
    needed does not drift with k.
    """
    d = hier.delta
    k_max = len(hier.G_star) if k_max is None else k_max
    t = hier.times
    ck = []
    for k in range(1, k_max + 1):
        m = hier.masses("G_star", k)
        logb = (k * special.gammaln(1 - d) - special.gammaln(k * (1 - d))
                + (k - 1 - k * d) * np.log(t))
        ck.append(float(np.max(np.exp((np.log(np.maximum(m, 1e-300)) - logb) / k))))
    c = max(ck)
    return {"c": c, "c_k": ck, "holds": bool(c <= growth * ck[0])}


def loglog_slope(t, values) -> float:
    t, v = np.asarray(t, float), np.asarray(values, float)
    return float(np.polyfit(np.log(t), np.log(v), 1)[0])


def q_domination(hier: Hierarchy, t: float, k_max: int = 4, rtol: float = 1e-9) -> dict:
    """Check Q^{*k} ≥ Λ^{*k} + Λ^{*k} * Π node-wise for k = 1..k_max."""
    i = hier.ladder.index(t)
    Lam, Q, Pi = hier.Lambda[i], hier.Q[i], hier.Pi[i]
    qk, lk = Q.copy(), Lam.copy()
    worst = np.inf
    for k in range(1, k_max + 1):
        if k > 1:
            qk = conv_clamped(qk, Q)
            lk = conv_clamped(lk, Lam)
        rhs = lk + conv_clamped(lk, Pi)
        scale = max(float(rhs.max()), 1e-300)
        worst = min(worst, float(np.min(qk - rhs)) / scale)
    return {"min_relative_gap": worst, "holds": bool(worst >= -rtol)}


#: Lattice searched by :func:`fit_series_weight`.
SERIES_WEIGHT_LATTICE = np.geomspace(1e-3, 1e2, 64)


def fit_series_weight(term_l1, hier: Hierarchy, lattice=SERIES_WEIGHT_LATTICE) -> dict:
    """Smallest lattice A with ‖(LZ)_k(t,·,y)‖₁ ≤ A^k G^{(k)}_t(ℝ) on the ladder.

    Parameters
    ----------
    term_l1 : sequence of ndarray
        Per-term L¹ norms over the time lattice (``ParametrixResult.term_l1``).
    hier : Hierarchy
        Hierarchy built on the same ladder; only the G^{(k)} masses are used.
    lattice : ndarray
        Candidate values, increasing.

    Returns
    -------
    dict
        ``A`` (lattice value), ``ratio`` (the exact maximum of the k-th roots)
        and ``argmax`` (k, t) where it is attained.  For constant
        coefficients every term vanishes and the smallest lattice value is
        returned.
    """
    best, where = 0.0, None
    for k, l1 in enumerate(term_l1[:len(hier.G_k)], start=1):
        gk = hier.masses("G_k", k)
        ok = gk > 0
        if not np.any(ok):
            continue
        r = np.zeros_like(gk)
        r[ok] = (np.asarray(l1)[ok] / gk[ok]) ** (1.0 / k)
        i = int(np.argmax(r))
        if r[i] > best:
            best, where = float(r[i]), (k, float(hier.times[i]))
    above = lattice[lattice >= best]
    if above.size == 0:
        raise KernelError("NO_FEASIBLE_PARAMS", f"series weight {best:.3g} exceeds the lattice")
    return {"A": float(above[0]), "ratio": best, "argmax": where}


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------

def f_upper(x, a3: float, a4: float):
    return a3 * np.exp(-a4 * np.abs(x))


def f_lower(x, a1: float, a2: float):
    return a1 * np.maximum(1.0 - a2 * np.abs(x), 0.0)


def exponential_series(Q: GridMeasure, M: int | None = None, tol: float = 1e-14) -> tuple:
    """Σ_{m≤M} Q^{*m}/m! and the omitted-mass bound Q(ℝ)^{M+1}/(M+1)!."""
    q = Q.mass
    if M is None:
        M = 0
        while q ** (M + 1) / math.factorial(M + 1) > tol * math.exp(q) and M < 200:
            M += 1
    term = np.zeros_like(Q.weights)
    term[Q.K] = 1.0
    acc = term.copy()
    for m in range(1, M + 1):
        term = conv_clamped(term, Q.weights) / m
        acc += term
    return acc, q ** (M + 1) / math.factorial(M + 1)


def eval_upper_envelope(x, t: float, params: EnvelopeParams, Q: GridMeasure, rho: float,
                        M: int | None = None, return_tail: bool = False):
    """Σ_m (1/m!) ∫ ρ f_upper(ρ(x − z)) Q^{*m}(dz) at offsets x.

    The omitted terms add at most Q(ℝ)^{M+1}/(M+1)! · ρ a₃.
    """
    x = np.asarray(x, dtype=float)
    E, tail = exponential_series(Q, M)
    nz = E > 0
    z, w = Q.nodes[nz], E[nz]
    flat = x.reshape(-1)
    out = np.empty(flat.size)
    for s in range(0, flat.size, 256):
        blk = flat[s:s + 256]
        out[s:s + 256] = (rho * f_upper(rho * (blk[:, None] - z[None, :]), params.a3, params.a4)) @ w
    out = out.reshape(x.shape)
    if return_tail:
        return out, tail * rho * params.a3
    return out


def eval_lower_bound(x, t: float, params: EnvelopeParams, rho: float):
    """a₁ρ_t(1 − a₂ρ_t|x|)₊."""
    return rho * f_lower(rho * np.asarray(x, dtype=float), params.a1, params.a2)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

UPPER_A3 = np.geomspace(1e-2, 1e2, 32)
UPPER_A4 = np.geomspace(1e-2, 1e1, 32)
LOWER_A1 = np.geomspace(1e-3, 1.0, 32)
LOWER_A2 = np.geomspace(1e-2, 1e1, 32)


def _offsets(p: KernelField):
    return p.x[:, None] - p.y[None, :]


def fit_envelope_constants(p: KernelField, hier: Hierarchy, fit_times=None, verify_times=None,
                           A: float | None = None, bulk: float | None = None) -> EnvelopeParams:
    """Lattice search for (a₁, a₂) and (a₃, a₄) such that both bounds hold on ``fit_times``.

    For each a₄ the least lattice a₃ dominating p is taken and the pair with
    the smallest a₃/a₄ is kept (tightest tail); for each a₂ the largest
    feasible lattice a₁ is taken and the pair with the largest a₁/a₂ kept.
    Margins min(env/p) and min(p − lower)/max p on ``verify_times`` are
    reported in ``margins``.

    Parameters
    ----------
    p : KernelField
        Computed kernel; rows are window nodes, columns sampled y.
    hier : Hierarchy
        Supplies Q_t and ρ_t on the same lattice.
    fit_times, verify_times : sequence of float
        Default: alternate entries of the reporting ladder.
    bulk : float, optional
        Restrict to |x|, |y| ≤ bulk (default: half the window).
    """
    rep = list(hier.ladder.report)
    fit_times = rep[0::2] if fit_times is None else list(fit_times)
    verify_times = rep[1::2] if verify_times is None else list(verify_times)
    if len(fit_times) + len(verify_times) < 4:
        raise KernelError("KERNEL_RANGE", "need at least four ladder times")
    half = (p.x[-1] - p.x[0]) / 4 if bulk is None else bulk
    rmask = np.abs(p.x) <= half + 1e-12
    cmask = np.abs(p.y) <= half + 1e-12
    W = _offsets(p)[np.ix_(rmask, cmask)]
    wq = np.unique(np.round(W / hier.h).astype(int))
    cache = {}

    def unit_envelopes(t):
        if t not in cache:
            i = hier.ladder.index(t)
            Q = hier.measure("Q", t)
            rho = hier.rho[i]
            E, _ = exponential_series(Q)
            cache[t] = (Q, rho, E)
        return cache[t]

    def upper_ratio(t, a4):
        Q, rho, E = unit_envelopes(t)
        env = eval_upper_envelope(wq * hier.h, t, EnvelopeParams(1, 1, 1.0, a4), Q, rho)
        vals = p.at(t)[np.ix_(rmask, cmask)]
        return vals, env[np.searchsorted(wq, np.round(W / hier.h).astype(int))]

    # upper: least a3 per a4
    best_up = None
    for a4 in UPPER_A4:
        need = 0.0
        for t in fit_times:
            vals, e = upper_ratio(t, a4)
            need = max(need, float(np.max(vals / e)))
        feas = UPPER_A3[UPPER_A3 >= need]
        if feas.size:
            a3 = float(feas[0])
            if best_up is None or a3 / a4 < best_up[0] / best_up[1]:
                best_up = (a3, float(a4))
    # lower: largest a1 per a2
    best_lo = None
    for a2 in LOWER_A2:
        allowed = np.inf
        for t in fit_times:
            rho = hier.rho[hier.ladder.index(t)]
            base = eval_lower_bound(W, t, EnvelopeParams(1.0, a2, 1, 1), rho)
            vals = p.at(t)[np.ix_(rmask, cmask)]
            pos = base > 0
            if np.any(pos):
                allowed = min(allowed, float(np.min(vals[pos] / base[pos])))
        feas = LOWER_A1[LOWER_A1 <= allowed]
        if feas.size:
            a1 = float(feas[-1])
            if best_lo is None or a1 / a2 > best_lo[0] / best_lo[1]:
                best_lo = (a1, float(a2))
    if best_up is None or best_lo is None:
        raise KernelError("NO_FEASIBLE_PARAMS", "no lattice point satisfies the bounds",
                          upper=best_up is not None, lower=best_lo is not None)
    params = EnvelopeParams(best_lo[0], best_lo[1], best_up[0], best_up[1],
                            A=hier.A if A is None else A, K_pi=len(hier.G_k))
    params.margins = {"fit_times": fit_times, "verify_times": verify_times,
                      **sandwich_margins(p, hier, params, verify_times, bulk=half)}
    return params


def sandwich_margins(p: KernelField, hier: Hierarchy, params: EnvelopeParams, times,
                     bulk: float | None = None) -> dict:
    """Upper margin min(env/p) and lower margin min(p − lower)/max p over ``times``."""
    half = (p.x[-1] - p.x[0]) / 4 if bulk is None else bulk
    rmask = np.abs(p.x) <= half + 1e-12
    cmask = np.abs(p.y) <= half + 1e-12
    W = _offsets(p)[np.ix_(rmask, cmask)]
    up, lo, ok = [], [], True
    for t in times:
        i = hier.ladder.index(t)
        rho = hier.rho[i]
        vals = p.at(t)[np.ix_(rmask, cmask)]
        env = eval_upper_envelope(W, t, params, hier.measure("Q", t), rho)
        low = eval_lower_bound(W, t, params, rho)
        up.append(float(np.min(env / vals)))
        lo.append(float(np.min(vals - low) / np.max(vals)))
        ok &= up[-1] >= 1.0 and lo[-1] >= 0.0
    return {"upper_margin": up, "lower_margin": lo, "sandwich_holds": bool(ok)}


def on_diagonal_band(p: KernelField, hier: Hierarchy, times=None, bulk: float | None = None) -> dict:
    """Range of p(t, x, x)/ρ_t over the ladder and the sampled diagonal."""
    times = hier.ladder.report if times is None else times
    half = (p.x[-1] - p.x[0]) / 4 if bulk is None else bulk
    cols = np.where(np.abs(p.y) <= half + 1e-12)[0]
    rows = np.searchsorted(p.x, p.y[cols] - 1e-12)
    ratios = []
    for t in times:
        rho = hier.rho[hier.ladder.index(t)]
        ratios.append(p.at(t)[rows, cols] / rho)
    r = np.concatenate(ratios)
    return {"min": float(r.min()), "max": float(r.max()), "band": float(r.max() / r.min())}
