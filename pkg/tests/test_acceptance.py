"""End-to-end acceptance checks on the bundled scenarios.

Each criterion prints one PASS/FAIL line (collected into the terminal
summary as well) and then asserts it.  Scenario runs are session-scoped,
so the whole module costs a few minutes on one core.
"""

from __future__ import annotations

import time

import pytest

from levykernel.cli import EXIT_OK, Runner, load_scenario
from levykernel.io import read_json
from levykernel.parametrix import k0_threshold

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.slow


def record(n: int, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def run(name: str, out):
    cfg = load_scenario(name)
    t0 = time.perf_counter()
    code = Runner(cfg, out).run()
    wall = time.perf_counter() - t0
    return {"cfg": cfg, "code": code, "dir": out, "wall": wall,
            "summary": read_json(out / "summary.json"), "timings": read_json(out / "timings.json")}


@pytest.fixture(scope="session")
def const_run(tmp_path_factory):
    return run("stable-1d-const", tmp_path_factory.mktemp("const"))


@pytest.fixture(scope="session")
def mod_run(tmp_path_factory):
    return run("modulated-stable-1d", tmp_path_factory.mktemp("mod"))


@pytest.fixture(scope="session")
def mod_rerun(tmp_path_factory):
    return run("modulated-stable-1d", tmp_path_factory.mktemp("mod_again"))


@pytest.fixture(scope="session")
def kato_run(tmp_path_factory):
    return run("kato-suite", tmp_path_factory.mktemp("kato"))


def checks(r) -> dict:
    return r["summary"]["checks"]


def test_criterion_1_oracle_equivalence(const_run):
    c = checks(const_run)
    report = const_run["cfg"].ladder["report"]
    solve_time = sum(const_run["timings"][s] for s in ("validate", "profile", "solve"))
    err, phi = c["oracle_rel_sup"]["value"], c["phi_zero"]["value"]
    ok = (err < 1e-3 and phi <= 1e-9 and solve_time < 60
          and sorted(report) == [0.1, 0.25, 0.5, 1.0])
    record(1, ok, f"rel sup error {err:.3g} (< 1e-3), sup|Phi| {phi:.3g} (<= 1e-9), "
                  f"solve {solve_time:.1f} s (< 60 s)")


def test_criterion_2_scale_function(const_run):
    c = checks(const_run)
    prof = read_json(const_run["dir"] / "profile" / "profile.json")
    decades = max(prof["t"]) / min(prof["t"])
    rho_err, tq = c["rho_closed_form"]["value"], c["t_qstar_rho"]["value"]
    ok = rho_err <= 1e-8 and tq <= 1e-10 and decades >= 100
    record(2, ok, f"rho_t vs 1/(4t) rel {rho_err:.3g} (<= 1e-8), |t q*(rho_t) - 1| {tq:.3g} "
                  f"over {decades:.0f}x ladder")


def test_criterion_3_series_behaviour(mod_run):
    c = checks(mod_run)
    prof = read_json(mod_run["dir"] / "profile" / "profile.json")
    model = mod_run["cfg"].model
    k0 = k0_threshold(prof["sigma"], 2 / model["beta"], model["modulation"]["lam"])
    ratio, slope = c["term_ratio_beyond_k0"], c["zphi_slope"]
    ok = (k0 == 5 and ratio["k0"] == 5 and ratio["value"] < 1
          and abs(slope["value"] - slope["target"]) <= 0.15)
    record(3, ok, f"k0 {k0}, max term ratio beyond k0 {ratio['value']:.3g} (< 1), "
                  f"ZPhi/rho slope {slope['value']:.4f} vs 1-delta {slope['target']:.3g} +- 0.15")


def test_criterion_4_stochastic_kernel(const_run, mod_run):
    parts, ok = [], True
    for label, r in (("const", const_run), ("modulated", mod_run)):
        c = checks(r)
        neg, mass = c["nonnegativity"]["value"], c["mass"]["value"]
        ck, res = c["chapman_kolmogorov"]["value"], c["residual"]["value"]
        ok &= neg >= -1e-6 and mass < 1e-3 and ck < 1e-2 and res < 1e-2
        parts.append(f"{label}: min p/max {neg:.2g}, mass {mass:.2g}, CK {ck:.2g}, residual {res:.2g}")
    record(4, ok, "; ".join(parts))


def test_criterion_5_two_sided_bounds(mod_run):
    c = checks(mod_run)
    sw, band = c["envelope_sandwich"], c["diagonal_band"]["value"]
    ok = sw["pass"] and band <= 4.0
    v = sw["value"]
    record(5, ok, f"held-out sandwich lower margin {v['lower_min']:.3g} (>= 0), upper ratio "
                  f"{v['upper_min']:.3g} (>= 1), on-diagonal band {band:.3g} (<= 4)")


def test_criterion_6_measure_hierarchy(mod_run):
    c = checks(mod_run)
    led = read_json(mod_run["dir"] / "envelope" / "hierarchy_ledger.json")
    lam, pm = c["lambda_mass"]["value"], c["p_mass"]["value"]
    pi, gb = c["pi_slope"], c["gamma_bound"]
    ok = (lam <= 1.0 and pm <= 1e-10 and abs(pi["value"] - pi["target"]) <= 0.1
          and gb["pass"] and gb["k_max"] >= 5 + 8)
    main = led["main_ladder"]
    record(6, ok, f"Lambda mass {lam:.3g} (<= 1), |P mass - 1| {pm:.2g}, Pi slope "
                  f"{pi['value']:.4f} vs {pi['target']:.3g} on T={pi['ladder_T']:g} ladder, "
                  f"Gamma bound to k={gb['k_max']} (main ladder disclosed: Pi slope "
                  f"{main['Pi_slope_A1']:.3g} at A=1, {main['Pi_slope_fitted_A']:.3g} at fitted A)")


def test_criterion_7_kato_suite(kato_run):
    c = checks(kato_run)
    val = c["kato_delta0_1.5_value"]["value"]
    ok = kato_run["code"] == EXIT_OK and all(v["pass"] for v in c.values())
    failed = sorted(k for k, v in c.items() if not v["pass"])
    record(7, ok, f"delta0 alpha=1.5 value {val:.6g} (3/8 +- 1e-4), delta0 alpha=1 "
                  f"{c['kato_delta0_1.0_dynkin']['value']}, Lebesgue "
                  f"{c['kato_lebesgue_1.5_verdict']['value']}/{c['kato_lebesgue_1.0_verdict']['value']}, "
                  f"Cantor d_hat {c['kato_cantor_1.5_d_hat']['value']:.4f}, routes agree "
                  f"{c['kato_routes_agree']['pass']}" + (f"; failed {failed}" if failed else ""))


def test_criterion_8_monte_carlo(const_run, mod_run):
    ks_c, ks_m = checks(const_run)["mc_ks"]["value"], checks(mod_run)["mc_ks"]["value"]
    rep = read_json(mod_run["dir"] / "oracle" / "report.json")
    t_c, t_m = const_run["timings"]["oracle"], mod_run["timings"]["oracle"]
    ok = (ks_c < 0.01 and ks_m < 0.02 and rep["n_paths"] == 100000 and rep["t"] == 0.5
          and max(t_c, t_m) < 180)
    record(8, ok, f"KS const {ks_c:.4f} (< 0.01), modulated {ks_m:.4f} (< 0.02) with 1e5 paths; "
                  f"oracle time {t_c:.1f} s / {t_m:.1f} s (< 180 s)")


def test_criterion_9_determinism(mod_run, mod_rerun):
    a, b = mod_run["dir"], mod_rerun["dir"]
    ma, mb = read_json(a / "manifest.json"), read_json(b / "manifest.json")
    same = ma["artifacts"] == mb["artifacts"] and len(ma["artifacts"]) > 0
    same &= (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    record(9, same, f"{len(ma['artifacts'])} artifacts bit-identical across two seeded runs")


@pytest.mark.parametrize("name", ["truncated-stable-1d", "stable-2d-const"])
def test_other_bundled_scenarios_pass(tmp_path, name):
    r = run(name, tmp_path)
    failed = sorted(k for k, v in checks(r).items() if not v["pass"])
    assert r["code"] == EXIT_OK and not failed, failed
