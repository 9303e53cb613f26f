"""Scenario runner: validate → profile → solve → envelope → kato → oracle.

Every stage writes JSON/CSV/tensor artifacts under its own subdirectory of
the run directory.  ``manifest.json`` records the resolved configuration,
its hash, library versions and artifact digests; wall-clock timings live in
``timings.json`` so that all other artifacts are reproducible byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import KernelError
from .io import dumps, read_json, read_tensor, sha256_file, write_csv, write_json, write_tensor

STAGES = ("validate", "profile", "solve", "envelope", "kato", "oracle")
NEEDS_MODEL = {"validate", "profile", "solve", "envelope", "oracle"}

DEFAULT_TOLERANCES = {
    "oracle_rel_sup": 1e-3,
    "phi_zero": 1e-9,
    "rho_rel": 1e-8,
    "tq_one": 1e-10,
    "negativity": 1e-6,
    "mass": 1e-3,
    "ck": 1e-2,
    "residual": 1e-2,
    "zphi_slope": 0.15,
    "diag_band": 4.0,
    "p_mass": 1e-10,
    "pi_slope": 0.1,
    "gamma_growth": 1.5,
    "kato_value": 1e-4,
    "d_hat": 0.01,
    "ks": 0.02,
    "negative_ks": 0.05,
    "mass_2d": 1e-10,
    "diag_2d": 1e-3,
    "compare_rel_sup": 5e-3,
}

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_STAGE = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def bundled_scenarios() -> list[str]:
    root = resources.files("levykernel") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _load_raw(ref: str) -> tuple[dict, Path | None]:
    path = Path(ref)
    if path.is_file():
        return json.loads(path.read_text()), path.parent
    if ref in bundled_scenarios():
        text = (resources.files("levykernel") / "scenarios" / f"{ref}.json").read_text()
        return json.loads(text), None
    raise KernelError("CONFIG_INVALID", f"no config file or bundled scenario named {ref!r}")


@dataclass
class ScenarioConfig:
    """Resolved scenario: model, discretisation, stages, seed and tolerances."""

    name: str
    model: dict | None
    grid: dict
    ladder: dict
    solve: dict
    profile: dict
    envelope: dict
    oracle: dict
    kato: dict
    stages: list
    seed: int
    tolerances: dict
    model_file: str | None = None
    expect: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None, stages=None, seed=None,
                  tol_override: dict | None = None) -> "ScenarioConfig":
        raw = copy.deepcopy(raw)
        unknown = set(raw) - {"name", "model", "model_file", "grid", "ladder", "solve", "profile",
                              "envelope", "oracle", "kato", "stages", "seed", "tolerances"}
        if unknown:
            raise KernelError("CONFIG_INVALID", f"unknown config keys {sorted(unknown)}")
        model, model_file = raw.get("model"), raw.get("model_file")
        if isinstance(model, str):
            model_file, model = model, None
        if model_file is not None:
            mpath = Path(model_file)
            if not mpath.is_absolute() and base_dir is not None:
                mpath = base_dir / mpath
            if not mpath.is_file():
                raise KernelError("CONFIG_INVALID", f"model file {model_file} does not exist")
            model = json.loads(mpath.read_text())
        tols = dict(DEFAULT_TOLERANCES)
        tols.update(raw.get("tolerances", {}))
        for k, v in (tol_override or {}).items():
            if k not in tols:
                raise KernelError("CONFIG_INVALID", f"unknown tolerance {k!r}")
            tols[k] = float(v)
        kato = dict(raw.get("kato", {}))
        cfg = cls(name=str(raw.get("name", "scenario")), model=model,
                  grid=dict(raw.get("grid", {})), ladder=dict(raw.get("ladder", {})),
                  solve=dict(raw.get("solve", {})), profile=dict(raw.get("profile", {})),
                  envelope=dict(raw.get("envelope", {})), oracle=dict(raw.get("oracle", {})),
                  kato=kato, stages=list(stages if stages is not None else raw.get("stages", [])),
                  seed=int(seed if seed is not None else raw.get("seed", 0)),
                  tolerances=tols, model_file=model_file, expect=list(kato.get("expect", [])))
        cfg.check()
        return cfg

    def check(self):
        if not self.stages:
            raise KernelError("CONFIG_INVALID", "no stages requested")
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise KernelError("CONFIG_INVALID", f"unknown stages {bad}")
        if NEEDS_MODEL & set(self.stages) and self.model is None:
            raise KernelError("CONFIG_INVALID", "requested stages need a model (model or model_file)")
        if "kato" in self.stages and not self.kato.get("measures"):
            raise KernelError("CONFIG_INVALID", "kato stage needs a list of measures")

    @property
    def ordered_stages(self) -> list:
        return [s for s in STAGES if s in self.stages]

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.pop("model_file")
        d.pop("expect")
        return d

    def digest(self, keys=None) -> str:
        """SHA-256 of the resolved configuration without the stage list."""
        d = self.to_dict()
        d.pop("stages")
        if keys is not None:
            d = {k: d[k] for k in keys}
        return hashlib.sha256(dumps(d).encode()).hexdigest()

    @property
    def solve_key(self) -> str:
        return self.digest(["model", "grid", "ladder", "solve"])


def load_scenario(ref: str, stages=None, seed=None, tol_override: dict | None = None) -> ScenarioConfig:
    """Resolve a config file path or bundled scenario name into a checked config."""
    raw, base_dir = _load_raw(ref)
    return ScenarioConfig.from_dict(raw, base_dir, stages=stages, seed=seed, tol_override=tol_override)


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

def _check(value, tol, ok: bool, **extra) -> dict:
    return {"value": value, "tol": tol, "pass": bool(ok), **extra}


class Runner:
    """Executes the requested stages of one scenario into ``out``."""

    def __init__(self, cfg: ScenarioConfig, out: Path):
        self.cfg, self.out = cfg, Path(out)
        self.tol = cfg.tolerances
        self.checks: dict = {}
        self.status: dict = {}
        self.timings: dict = {}
        self._model = None
        self._profile = None
        self._solve = None  # dict with field, term_l1, ...

    # -- shared objects --------------------------------------------------
    @property
    def model(self):
        if self._model is None:
            from .model import model_from_dict
            self._model = model_from_dict(self.cfg.model)
        return self._model

    @property
    def profile(self):
        if self._profile is None:
            from .model import build_profile
            p = self.cfg.profile
            ladder = np.geomspace(p.get("t_min", 1e-2), p.get("t_max", 1.0), int(p.get("n", 21)))
            self._profile = build_profile(self.model, t_ladder=ladder)
        return self._profile

    def grid(self):
        from .frozen import SpatialGrid
        g = self.cfg.grid
        return SpatialGrid(dim=self.model.dim, R=float(g.get("R", 16.0)), N=int(g.get("N", 1024)),
                           oversample=int(g.get("oversample", 32)))

    def delta(self) -> float:
        if "delta" in self.cfg.ladder:
            return float(self.cfg.ladder["delta"])
        if self.model.has_constant_coefficients:
            return 0.5  # no series is built; the value only labels the lattice
        return 1.0 - self.model.modulation.lam / self.profile.sigma

    def ladder(self):
        from .parametrix import TimeLadder
        L = self.cfg.ladder
        return TimeLadder(Kt=int(L.get("Kt", 40)), delta=self.delta(),
                          report=tuple(L.get("report", (0.1, 0.25, 0.5, 1.0))),
                          T=float(L.get("T", 1.0)))

    def k0(self) -> int | None:
        from .parametrix import k0_threshold
        if "k0" in self.cfg.solve:
            return int(self.cfg.solve["k0"])
        if self.model.has_constant_coefficients:
            return None
        return k0_threshold(self.profile.sigma, self.model.alpha, self.model.modulation.lam)

    def path(self, *parts) -> Path:
        return self.out.joinpath(*parts)

    # -- stages ----------------------------------------------------------
    def run(self) -> int:
        self.out.mkdir(parents=True, exist_ok=True)
        code = EXIT_OK
        for stage in self.cfg.ordered_stages:
            t0 = time.perf_counter()
            try:
                getattr(self, f"stage_{stage}")()
                self.status[stage] = "ok"
            except KernelError as exc:
                self.status[stage] = f"failed: {exc.code}"
                write_json(self.path(stage, "error.json"),
                           {"stage": stage, "code": exc.code, "message": str(exc),
                            "details": getattr(exc, "details", {})})
                print(f"STAGE_FAILED [{stage}] {exc.code}: {exc}", file=sys.stderr)
                code = EXIT_STAGE
                break
            finally:
                self.timings[stage] = time.perf_counter() - t0
        if code == EXIT_OK and not all(c["pass"] for c in self.checks.values()):
            code = EXIT_CHECKS
        self._finish(code)
        return code

    def _finish(self, code: int):
        prev = self.path("summary.json")
        checks, status = {}, {}
        if prev.is_file():
            old = read_json(prev)
            if old.get("config_hash") == self.cfg.digest():
                checks, status = old.get("checks", {}), old.get("stages", {})
        checks.update(self.checks)
        status.update(self.status)
        summary = {"scenario": self.cfg.name, "config_hash": self.cfg.digest(),
                   "stages": status, "checks": checks,
                   "all_pass": bool(checks) and all(c["pass"] for c in checks.values())
                   and all(v == "ok" for v in status.values()),
                   "exit_code": code}
        write_json(prev, summary)
        tpath = self.path("timings.json")
        timings = read_json(tpath) if tpath.is_file() else {}
        timings.update(self.timings)
        write_json(tpath, timings)
        artifacts = {}
        for p in sorted(self.out.rglob("*")):
            rel = p.relative_to(self.out).as_posix()
            if p.is_file() and rel not in ("manifest.json", "timings.json"):
                artifacts[rel] = sha256_file(p)
        write_json(self.path("manifest.json"), {
            "scenario": self.cfg.name,
            "config": self.cfg.to_dict(),
            "config_hash": self.cfg.digest(),
            "solve_key": self.cfg.solve_key if self.cfg.model is not None else None,
            "versions": {"levykernel": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
            "stages": status,
            "artifacts": artifacts,
        })

    def stage_validate(self):
        from .model import default_sample_plan, validate_model
        rep = validate_model(self.model, default_sample_plan(self.model, self.cfg.seed))
        write_json(self.path("validate", "validation.json"), rep.to_dict())
        self.checks["assumptions"] = _check(rep.assumptions, True, rep.passed)
        if not rep.passed:
            key = next(k for k, v in rep.assumptions.items() if not v)
            code = {"A1": "FAILS_A1", "A2": "FAILS_A2", "A3": "FAILS_A3",
                    "symmetry": "FAILS_SYMMETRY"}.get(key, "CONFIG_INVALID")
            raise KernelError(code, f"assumption {key} violated")

    def stage_profile(self):
        prof = self.profile
        t = prof.t_ladder
        tq = np.array([ti * float(prof.q_star(r)) for ti, r in zip(t, prof.rho_table)])
        write_json(self.path("profile", "profile.json"), prof.to_dict())
        write_csv(self.path("profile", "rho.csv"), ["t", "rho", "t_qstar_rho"],
                  np.column_stack([t, prof.rho_table, tq]))
        err = float(np.max(np.abs(tq - 1)))
        self.checks["t_qstar_rho"] = _check(err, self.tol["tq_one"], err <= self.tol["tq_one"])
        base = self.model.base
        if base.dim == 1 and base.family == "power" and not base.atoms:
            # q*(r) = scale·2(1/(2−α) + 1/α) r^α for the pure power density
            al = base.alpha
            c = base.scale * 2 * (1 / (2 - al) + 1 / al)
            ref = (1.0 / (c * t)) ** (1 / al)
            rel = float(np.max(np.abs(prof.rho_table / ref - 1)))
            self.checks["rho_closed_form"] = _check(rel, self.tol["rho_rel"], rel <= self.tol["rho_rel"])

    def stage_solve(self):
        if self.model.dim == 2:
            return self._solve_2d()
        from .parametrix import (chapman_kolmogorov_defect, fundamental_solution, mass_in_y,
                                 residual_check)
        from .envelopes import loglog_slope
        model, grid, lad = self.model, self.grid(), self.ladder()
        s = self.cfg.solve
        k0 = self.k0()
        res = fundamental_solution(model, lad, grid, tol=float(s.get("tol", 1e-4)),
                                   M_max=int(s.get("M_max", 12)), y_stride=int(s.get("y_stride", 4)),
                                   k0=k0)
        rep = list(lad.report)
        ri = lad.report_indices
        P = res.p[ri]
        x, y = grid.x, grid.x[res.cols]
        header = {"times": rep, "x": x, "y": y, "solve_key": self.cfg.solve_key}
        write_tensor(self.path("solve", "p.lkt"), P, header)
        ix0 = int(np.argmin(np.abs(x)))
        write_csv(self.path("solve", "row_x0.csv"), ["t", "y", "p"],
                  np.vstack([np.column_stack([np.full(len(y), t), y, P[i, ix0]])
                             for i, t in enumerate(rep)]))
        write_csv(self.path("solve", "diagonal.csv"), ["t", "x", "p"],
                  np.vstack([np.column_stack([np.full(len(y), t), y, P[i, res.cols, np.arange(len(y))]])
                             for i, t in enumerate(rep)]))
        mass = {t: float(np.max(np.abs(mass_in_y(res, t)["mass"] - 1))) for t in rep}
        ratio = lambda k: float(np.min(res.p[k]) / np.max(np.abs(res.p[k])))
        neg = min(ratio(k) for k in ri)
        resid = residual_check(res)
        diag = {"term_norms": res.term_norms, "stop": res.stop_reason,
                "term_l1": [np.asarray(v).tolist() for v in res.term_l1],
                "mass_error": mass, "min_ratio": neg,
                "min_ratio_lattice": min(ratio(k) for k in range(lad.Kt)),
                "residual": resid, "delta": lad.delta}
        self.checks["nonnegativity"] = _check(neg, -self.tol["negativity"], neg >= -self.tol["negativity"])
        merr = max(mass.values())
        self.checks["mass"] = _check(merr, self.tol["mass"], merr < self.tol["mass"])
        rmax = max(resid.values())
        self.checks["residual"] = _check(rmax, self.tol["residual"], rmax < self.tol["residual"])
        try:
            ck = chapman_kolmogorov_defect(res, 0.25, 0.25)
            diag["ck_defect"] = ck
            self.checks["chapman_kolmogorov"] = _check(ck, self.tol["ck"], ck < self.tol["ck"])
        except KernelError:
            diag["ck_defect"] = None
        if model.has_constant_coefficients:
            phi = float(np.max(np.abs(res.Phi)))
            self.checks["phi_zero"] = _check(phi, self.tol["phi_zero"], phi <= self.tol["phi_zero"])
            err = self._oracle_error(res, grid, rep)
            if err is not None:
                diag["oracle_rel_sup"] = err
                e = max(err.values())
                self.checks["oracle_rel_sup"] = _check(e, self.tol["oracle_rel_sup"],
                                                       e < self.tol["oracle_rel_sup"])
        else:
            norms = np.asarray(res.term_norms)
            ratios = (norms[1:] / norms[:-1]).tolist()
            diag["term_ratios"] = ratios
            late = [r for k, r in enumerate(ratios, start=2) if k > k0]
            worst = max(late) if late else 0.0
            self.checks["term_ratio_beyond_k0"] = _check(worst, 1.0, worst < 1.0, k0=k0,
                                                         n_terms=len(norms))
            rho = np.array([self.profile.rho(t) for t in rep])
            zphi = np.array([np.max(np.abs(res.ZPhi[k])) for k in ri]) / rho ** model.dim
            slope = loglog_slope(rep, zphi)
            diag["zphi_over_rho"] = zphi
            target = 1 - lad.delta
            self.checks["zphi_slope"] = _check(slope, self.tol["zphi_slope"],
                                               abs(slope - target) <= self.tol["zphi_slope"],
                                               target=target)
        write_json(self.path("solve", "diagnostics.json"), diag)
        self.timings.update({f"solve.{k}": v for k, v in res.timings.items()})
        self._solve = {"P": P, "times": rep, "x": x, "y": y, "term_l1": res.term_l1}

    def _oracle_error(self, res, grid, rep):
        from .oracle import closed_form_stable
        base = self.model.base
        if base.family != "power" or base.atoms or not self.model.drift.is_zero:
            return None
        c = self.model.modulation.base
        x, y = grid.x, grid.x[res.cols]
        rb, cb = np.abs(x) <= grid.R / 2, np.abs(y) <= grid.R / 2
        W = x[rb][:, None] - y[cb][None, :]
        w, inv = np.unique(np.round(W / grid.h).astype(int), return_inverse=True)
        out = {}
        for t in rep:
            ref = closed_form_stable(base.alpha, base.scale * c, t, w * grid.h)[inv].reshape(W.shape)
            p = res.p[res.ladder.index(t)][np.ix_(rb, cb)]
            out[t] = float(np.max(np.abs(p - ref)) / np.max(ref))
        return out

    def _solve_2d(self):
        from .frozen import frozen_density
        from .oracle import closed_form_stable
        model, grid = self.model, self.grid()
        if not model.has_constant_coefficients:
            raise KernelError("CONFIG_INVALID", "two-dimensional solves need constant coefficients")
        rep = list(self.cfg.ladder.get("report", (0.1, 0.25, 0.5, 1.0)))
        slices, mass, diag_ratio, err = [], {}, [], {}
        X = grid.mesh()
        bulk = np.max(np.abs(X), axis=-1) <= grid.R / 2
        for t in rep:
            sl = frozen_density(model, t, [0.0, 0.0], grid)
            slices.append(sl.values)
            mass[t] = abs(sl.mass - 1)
            centre = sl.values[grid.N // 2, grid.N // 2]
            diag_ratio.append(centre / self.profile.rho(t) ** 2)
            base = model.base
            if base.family == "power" and not base.atoms:
                ref = closed_form_stable(base.alpha, base.scale * model.modulation.base, t, X[bulk], dim=2)
                err[t] = float(np.max(np.abs(sl.values[bulk] - ref)) / np.max(ref))
        P = np.stack(slices)
        write_tensor(self.path("solve", "p.lkt"), P,
                     {"times": rep, "x": grid.x, "y": [0.0, 0.0], "solve_key": self.cfg.solve_key})
        diag_ratio = np.asarray(diag_ratio)
        spread = float(diag_ratio.max() / diag_ratio.min() - 1)
        diag = {"mass_error": mass, "diag_over_rho2": diag_ratio, "oracle_rel_sup": err}
        write_json(self.path("solve", "diagnostics.json"), diag)
        m = max(mass.values())
        self.checks["mass_2d"] = _check(m, self.tol["mass_2d"], m <= self.tol["mass_2d"])
        self.checks["diag_scaling_2d"] = _check(spread, self.tol["diag_2d"], spread <= self.tol["diag_2d"])
        if err:
            e = max(err.values())
            self.checks["oracle_rel_sup"] = _check(e, self.tol["oracle_rel_sup"],
                                                   e < self.tol["oracle_rel_sup"])

    def _load_solve(self) -> dict:
        if self._solve is not None:
            return self._solve
        p = self.path("solve", "p.lkt")
        if not p.is_file():
            raise KernelError("CONFIG_INVALID", "stage needs solve artifacts; add 'solve' to the stages")
        P, head = read_tensor(p)
        if head.get("solve_key") != self.cfg.solve_key:
            raise KernelError("CONFIG_INVALID", "cached solve artifacts belong to another configuration")
        diag = read_json(self.path("solve", "diagnostics.json"))
        self._solve = {"P": P, "times": head["times"], "x": np.asarray(head["x"]),
                       "y": np.asarray(head["y"]),
                       "term_l1": [np.asarray(v) for v in diag.get("term_l1", [])]}
        return self._solve

    def _field(self):
        from .parametrix import KernelField
        s = self._load_solve()
        return KernelField(role="p", times=np.asarray(s["times"]), x=s["x"], y=s["y"], values=s["P"])

    def stage_envelope(self):
        from .envelopes import (fit_envelope_constants, fit_series_weight, g_hierarchy,
                                on_diagonal_band, sandwich_margins)
        model = self.model
        if model.dim != 1 or model.has_constant_coefficients:
            raise KernelError("CONFIG_INVALID", "envelopes are built for 1D variable-coefficient models")
        pf = self._field()
        sol = self._load_solve()
        lad, grid, prof = self.ladder(), self.grid(), self.profile
        rep = list(lad.report)
        h_unit = g_hierarchy(model, lad, grid, A=1.0, profile=prof)
        weight = fit_series_weight(sol["term_l1"], h_unit)
        hier = g_hierarchy(model, lad, grid, A=weight["A"], profile=prof)
        params = fit_envelope_constants(pf, hier)
        verify = rep[1::2]
        margins = sandwich_margins(pf, hier, params, verify, (grid.x[-1] - grid.x[0]) / 4)
        band = on_diagonal_band(pf, hier, rep)
        write_json(self.path("envelope", "params.json"),
                   {"params": params.to_dict(), "series_weight": weight,
                    "fit_times": rep[0::2], "verify_times": verify,
                    "margins": margins, "diagonal_band": band})
        ix0 = int(np.argmin(np.abs(pf.x)))
        from .envelopes import eval_lower_bound, eval_upper_envelope
        rows = []
        for t in rep:
            i = lad.index(t)
            w = pf.x[ix0] - pf.y
            up = eval_upper_envelope(w, t, params, hier.measure("Q", t), hier.rho[i])
            lo = eval_lower_bound(w, t, params, hier.rho[i])
            rows.append(np.column_stack([np.full(len(w), t), pf.y, pf.at(t)[ix0], lo, up]))
        write_csv(self.path("envelope", "bounds_x0.csv"), ["t", "y", "p", "lower", "upper"], np.vstack(rows))
        worst = {"upper_min": min(margins["upper_margin"]), "lower_min": min(margins["lower_margin"])}
        self.checks["envelope_sandwich"] = _check(worst, {"upper_min": 1.0, "lower_min": 0.0},
                                                  margins["sandwich_holds"])
        self.checks["diagonal_band"] = _check(band["band"], self.tol["diag_band"],
                                              band["band"] <= self.tol["diag_band"])
        self._hierarchy_ledger(hier, h_unit)

    def _hierarchy_ledger(self, hier_fit, hier_unit):
        """Ledger checks on the small-time ladder, plus the main-ladder values for disclosure."""
        from .envelopes import g_hierarchy, gamma_bound_fit, loglog_slope
        from .frozen import SpatialGrid
        from .parametrix import TimeLadder
        cfg = self.cfg.envelope.get("hierarchy_ladder", {})
        T = float(cfg.get("T", 1.0))
        frac = cfg.get("report_fraction", [0.1, 0.125, 0.175, 0.25, 0.35, 0.5, 0.7, 1.0])
        rep = tuple(T * f for f in frac)
        lad = TimeLadder(Kt=int(cfg.get("Kt", 40)), delta=self.delta(), report=rep, T=T)
        grid = SpatialGrid(dim=1, R=float(cfg.get("R_per_T", 25.0)) * T, N=int(cfg.get("N", 256)),
                           oversample=int(cfg.get("oversample", 1)))
        A = max(1.0, hier_fit.A)
        H = g_hierarchy(self.model, lad, grid, A=A, profile=self.profile)
        led = H.ledger()
        t = np.asarray(rep)
        ri = lad.report_indices
        lam_max = float(np.max(H.masses("Lambda")))
        p_err = float(np.max(np.abs(H.masses("P") - 1)))
        pi_slope = loglog_slope(t, H.masses("Pi")[ri])
        gb = gamma_bound_fit(H, growth=self.tol["gamma_growth"])
        main_t = np.asarray(hier_unit.ladder.report)
        mri = hier_unit.ladder.report_indices
        disclosure = {
            "ladder": list(main_t),
            "Pi_slope_A1": loglog_slope(main_t, hier_unit.masses("Pi")[mri]),
            "Pi_slope_fitted_A": loglog_slope(main_t, hier_fit.masses("Pi")[mri]),
            "G_slope": loglog_slope(main_t, hier_unit.masses("G")[mri]),
            "fitted_A": hier_fit.A,
        }
        write_json(self.path("envelope", "hierarchy_ledger.json"),
                   {"ladder": list(rep), "A": A, "ledger": led, "gamma_bound": gb,
                    "Pi_slope": pi_slope, "G_slope": loglog_slope(t, H.masses("G")[ri]),
                    "P_star_Pi_slope": loglog_slope(t, H.p_star_pi_mass()[ri]),
                    "main_ladder": disclosure})
        d = lad.delta
        self.checks["lambda_mass"] = _check(lam_max, 1.0, lam_max <= 1.0)
        self.checks["p_mass"] = _check(p_err, self.tol["p_mass"], p_err <= self.tol["p_mass"])
        self.checks["pi_slope"] = _check(pi_slope, self.tol["pi_slope"],
                                         abs(pi_slope + d) <= self.tol["pi_slope"], target=-d,
                                         ladder_T=T)
        self.checks["gamma_bound"] = _check(gb["c"], self.tol["gamma_growth"], gb["holds"],
                                            k_max=len(gb["c_k"]))

    def stage_kato(self):
        from .kato import MeasureSpec, SelfSimilarKernel, classify
        from .model import build_profile, model_from_dict
        kc = self.cfg.kato
        reports = []
        for al in kc.get("alphas", [1.5, 1.0]):
            m = model_from_dict({"name": f"stable-{al}",
                                 "base": {"dim": 1, "family": "power", "alpha": al, "scale": 1.0}})
            prof = build_profile(m)
            kernel = SelfSimilarKernel.from_model(m) if kc.get("direct", True) else None
            for md in kc["measures"]:
                meas = MeasureSpec.from_dict(md)
                r = classify(prof, meas, kernel=kernel).to_dict()
                r["alpha"] = al
                reports.append(r)
        write_json(self.path("kato", "report.json"), reports)
        rows = [[r["alpha"], i, r["dynkin_value"], r["alt_value"], r["d_hat"]]
                for i, r in enumerate(reports)]
        write_csv(self.path("kato", "values.csv"), ["alpha", "case", "dynkin", "alt", "d_hat"], rows)
        agree = all(not r["direct"] or r["direct"]["verdict"] == r["verdict"] for r in reports)
        self.checks["kato_routes_agree"] = _check(
            [[r["alpha"], r["measure"], r["verdict"], r["direct"].get("verdict")] for r in reports],
            True, agree)
        for ex in self.cfg.expect:
            r = next((r for r in reports if r["alpha"] == ex["alpha"] and r["measure"] == ex["measure"]), None)
            if r is None:
                raise KernelError("CONFIG_INVALID", f"no kato case for {ex}")
            key = f"kato_{ex['measure']}_{ex['alpha']}"
            if "dynkin_value" in ex:
                d = abs(r["dynkin_value"] - ex["dynkin_value"])
                self.checks[key + "_value"] = _check(r["dynkin_value"], self.tol["kato_value"],
                                                     d <= self.tol["kato_value"], target=ex["dynkin_value"])
            if "dynkin_verdict" in ex:
                self.checks[key + "_dynkin"] = _check(r["dynkin_verdict"], ex["dynkin_verdict"],
                                                      r["dynkin_verdict"] == ex["dynkin_verdict"])
            if "verdict" in ex:
                self.checks[key + "_verdict"] = _check(r["verdict"], ex["verdict"], r["verdict"] == ex["verdict"])
            if "d_hat" in ex:
                self.checks[key + "_d_hat"] = _check(r["d_hat"], self.tol["d_hat"],
                                                     abs(r["d_hat"] - ex["d_hat"]) <= self.tol["d_hat"],
                                                     target=ex["d_hat"])

    def stage_oracle(self):
        from .oracle import (empirical_vs_kernel, odd_statistic_mean, simulate_paths,
                             tabulated_stable_cdf)
        model = self.model
        if model.dim != 1:
            raise KernelError("CONFIG_INVALID", "the Monte Carlo oracle is one-dimensional")
        oc = self.cfg.oracle
        t, x0 = float(oc.get("t", 0.5)), float(oc.get("x0", 0.0))
        ens = simulate_paths(model, [t], x0, int(oc.get("n_paths", 100_000)),
                             eps=float(oc.get("eps", 1e-2)), seed=self.cfg.seed)
        ens.to_csv(self.path("oracle", "paths.csv"))
        pf = self._field()
        rep = empirical_vs_kernel(ens, pf, t, x0)
        rep["simulation"] = {"eps": ens.eps, "n_steps": ens.n_steps, "seed": ens.seed, **ens.params}
        ks_max = float(oc.get("ks_max", self.tol["ks"]))
        self.checks["mc_ks"] = _check(rep["ks"], ks_max, rep["ks"] < ks_max)
        base = model.base
        if base.family == "power" and not base.atoms:
            scale = base.scale * model.modulation.base
            if model.has_constant_coefficients:
                cdf = tabulated_stable_cdf(base.alpha, scale, t, x0)
                rep["ks_closed_form_line"] = float(empirical_vs_kernel(ens, pf, t, x0, cdf=cdf)["ks"])
            if "negative_alpha" in oc:
                cdf = tabulated_stable_cdf(float(oc["negative_alpha"]), scale, t, x0)
                neg = float(empirical_vs_kernel(ens, pf, t, x0, cdf=cdf)["ks"])
                rep["ks_negative_control"] = neg
                self.checks["mc_negative_control"] = _check(neg, self.tol["negative_ks"],
                                                            neg > self.tol["negative_ks"])
        if model.drift.is_zero and model.base.is_symmetric() and x0 == 0.0:
            mean, se = odd_statistic_mean(ens.at(t), x0)
            rep["odd_statistic"] = {"mean": mean, "stderr": se}
            self.checks["mc_symmetry"] = _check(mean, 3 * se, abs(mean) <= 3 * se)
        write_json(self.path("oracle", "report.json"), rep)


# ---------------------------------------------------------------------------
# Compare
# ---------------------------------------------------------------------------

def _common(a: np.ndarray, b: np.ndarray, tol: float = 1e-9):
    ia, ib = [], []
    j = 0
    for i, v in enumerate(a):
        while j < len(b) and b[j] < v - tol:
            j += 1
        if j < len(b) and abs(b[j] - v) <= tol:
            ia.append(i)
            ib.append(j)
    return np.array(ia, dtype=int), np.array(ib, dtype=int)


def _numeric_leaves(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _numeric_leaves(obj[k], f"{prefix}/{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _numeric_leaves(v, f"{prefix}[{i}]")
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        yield prefix, float(obj)


def compare(run_a, run_b, tol: float = DEFAULT_TOLERANCES["compare_rel_sup"]) -> dict:
    """Numeric differences between two run directories.

    Tensor artifacts are compared on their common (t, x, y) nodes, so a run
    on a refined grid can be compared with a coarse one.  GRID_MISMATCH is
    raised when the time ladders differ or no spatial nodes are shared.
    """
    a, b = Path(run_a), Path(run_b)
    ma, mb = read_json(a / "manifest.json"), read_json(b / "manifest.json")
    model_a = ma["config"].get("model")
    model_b = mb["config"].get("model")
    report = {"run_a": str(a), "run_b": str(b), "same_model": model_a == model_b,
              "tensors": {}, "json": {}}
    for rel in sorted(set(ma["artifacts"]) & set(mb["artifacts"])):
        if rel.endswith(".lkt"):
            A, ha = read_tensor(a / rel)
            B, hb = read_tensor(b / rel)
            if not np.allclose(ha["times"], hb["times"]):
                raise KernelError("GRID_MISMATCH", f"{rel}: time ladders differ")
            ix, jx = _common(np.asarray(ha["x"]), np.asarray(hb["x"]))
            if len(ha["y"]) == 2 and A.ndim == 3 and A.shape[1] == A.shape[2] == len(ha["x"]):
                iy, jy = ix, jx  # 2D slice: both axes are x
            else:
                iy, jy = _common(np.asarray(ha["y"]), np.asarray(hb["y"]))
            if ix.size == 0 or iy.size == 0:
                raise KernelError("GRID_MISMATCH", f"{rel}: no common grid nodes")
            Ac, Bc = A[:, ix][:, :, iy], B[:, jx][:, :, jy]
            d = float(np.max(np.abs(Ac - Bc)))
            scale = float(np.max(np.abs(Ac))) or 1.0
            report["tensors"][rel] = {"sup_abs": d, "sup_rel": d / scale,
                                      "common_nodes": [int(ix.size), int(iy.size)],
                                      "within_tol": d / scale <= tol}
        elif rel.endswith(".json"):
            la = dict(_numeric_leaves(read_json(a / rel)))
            lb = dict(_numeric_leaves(read_json(b / rel)))
            keys = sorted(set(la) & set(lb))
            diffs = {k: abs(la[k] - lb[k]) for k in keys if la[k] != lb[k]}
            worst = max(diffs.items(), key=lambda kv: kv[1]) if diffs else (None, 0.0)
            report["json"][rel] = {"n_compared": len(keys), "n_different": len(diffs),
                                   "max_abs": worst[1], "max_key": worst[0]}
    if not report["same_model"]:
        report["flag"] = "models differ"
    report["identical"] = (all(v["sup_abs"] == 0 for v in report["tensors"].values())
                           and all(v["n_different"] == 0 for v in report["json"].values()))
    report["within_tol"] = all(v["within_tol"] for v in report["tensors"].values())
    return report


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise KernelError("CONFIG_INVALID", f"--tol-override expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError as exc:
            raise KernelError("CONFIG_INVALID", f"tolerance {k} is not a number") from exc
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="levykernel", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run",) + STAGES:
        sp = sub.add_parser(name, help=f"run {'the configured stages' if name == 'run' else name}")
        sp.add_argument("--config", required=True, help="config file or bundled scenario name")
        sp.add_argument("--out", required=True, help="run directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--tol-override", action="append", metavar="KEY=VALUE")
        if name == "run":
            sp.add_argument("--stages", default=None, help="comma-separated stage list")
    cp = sub.add_parser("compare", help="diff two run directories")
    cp.add_argument("run_a")
    cp.add_argument("run_b")
    cp.add_argument("--out", default=None, help="write the diff report here")
    cp.add_argument("--tol-override", action="append", metavar="KEY=VALUE")
    sub.add_parser("scenarios", help="list bundled scenarios")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "scenarios":
            print("\n".join(bundled_scenarios()))
            return EXIT_OK
        overrides = _parse_overrides(args.tol_override)
        if args.command == "compare":
            tol = overrides.get("compare_rel_sup", DEFAULT_TOLERANCES["compare_rel_sup"])
            rep = compare(args.run_a, args.run_b, tol)
            if args.out:
                write_json(args.out, rep)
            print(dumps(rep), end="")
            return EXIT_OK if rep["within_tol"] else EXIT_CHECKS
        if args.command == "run":
            stages = args.stages.split(",") if args.stages else None
        else:
            stages = [args.command]
        cfg = load_scenario(args.config, stages=stages, seed=args.seed, tol_override=overrides)
    except KernelError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_STAGE if exc.code == "GRID_MISMATCH" else EXIT_CONFIG
    code = Runner(cfg, Path(args.out)).run()
    summary = read_json(Path(args.out) / "summary.json")
    for name, c in sorted(summary["checks"].items()):
        print(f"{'PASS' if c['pass'] else 'FAIL'} {name}")
    return code


if __name__ == "__main__":
    sys.exit(main())
