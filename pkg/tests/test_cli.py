import json

import pytest

from levykernel.cli import (EXIT_CHECKS, EXIT_CONFIG, EXIT_OK, EXIT_STAGE, ScenarioConfig,
                            bundled_scenarios, compare, main)
from levykernel.errors import KernelError
from levykernel.io import read_json

SMALL = {
    "name": "small",
    "model": {"base": {"dim": 1, "family": "power", "alpha": 1.0}},
    "grid": {"R": 8, "N": 256, "oversample": 16},
    "ladder": {"Kt": 8, "report": [0.5, 1.0]},
    "stages": ["validate", "profile", "solve"],
}


def write_config(path, **changes):
    cfg = json.loads(json.dumps(SMALL))
    cfg.update(changes)
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def small_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root / "small.json")
    codes = [main(["run", "--config", cfg, "--out", str(root / name)]) for name in ("a", "b")]
    fine = write_config(root / "fine.json", grid={"R": 8, "N": 512, "oversample": 16})
    codes.append(main(["run", "--config", fine, "--out", str(root / "fine")]))
    stable = write_config(root / "stable.json",
                          model={"base": {"dim": 1, "family": "power", "alpha": 1.5}})
    codes.append(main(["run", "--config", stable, "--out", str(root / "stable")]))
    return root, codes


def test_bundled_scenarios_listed(capsys):
    assert main(["scenarios"]) == EXIT_OK
    names = capsys.readouterr().out.split()
    assert {"stable-1d-const", "modulated-stable-1d", "kato-suite"} <= set(names)
    assert names == bundled_scenarios()


def test_validate_only(tmp_path, capsys):
    code = main(["validate", "--config", "stable-1d-const", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert read_json(tmp_path / "validate" / "validation.json")["passed"] is True
    assert "PASS assumptions" in capsys.readouterr().out


def test_solve_without_model(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"name": "x", "stages": ["solve"]}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    with pytest.raises(KernelError) as exc:
        ScenarioConfig.from_dict({"stages": ["solve"]})
    assert exc.value.code == "CONFIG_INVALID"


@pytest.mark.parametrize("raw", [{"stages": ["validate"], "colour": 1, "model": {}},
                                 {"stages": ["bogus"], "model": {}},
                                 {"stages": ["kato"]},
                                 {"stages": []}])
def test_invalid_configs(raw):
    with pytest.raises(KernelError) as exc:
        ScenarioConfig.from_dict(raw)
    assert exc.value.code == "CONFIG_INVALID"


def test_unknown_tolerance_override(tmp_path):
    argv = ["run", "--config", "stable-1d-const", "--out", str(tmp_path), "--tol-override", "nope=1"]
    assert main(argv) == EXIT_CONFIG


def test_missing_scenario(tmp_path):
    assert main(["run", "--config", "no-such-scenario", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_envelope_needs_solve_artifacts(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    assert main(["envelope", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_STAGE
    err = read_json(tmp_path / "o" / "envelope" / "error.json")
    assert err["code"] == "CONFIG_INVALID"


def test_tight_tolerance_fails_check(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    argv = ["run", "--config", cfg, "--out", str(tmp_path / "o"), "--tol-override", "oracle_rel_sup=1e-12"]
    assert main(argv) == EXIT_CHECKS
    summary = read_json(tmp_path / "o" / "summary.json")
    assert summary["checks"]["oracle_rel_sup"]["pass"] is False
    assert summary["all_pass"] is False


def test_small_runs_succeed(small_runs):
    root, codes = small_runs
    assert codes == [EXIT_OK] * 4
    summary = read_json(root / "a" / "summary.json")
    assert summary["all_pass"] and summary["checks"]["phi_zero"]["value"] == 0


def test_identical_runs_compare_identical(small_runs):
    root, _ = small_runs
    rep = compare(root / "a", root / "b")
    assert rep["identical"] and rep["within_tol"]
    assert all(v["sup_abs"] == 0 for v in rep["tensors"].values())
    ma, mb = read_json(root / "a" / "manifest.json"), read_json(root / "b" / "manifest.json")
    assert ma["artifacts"] == mb["artifacts"]


def test_refined_grid_within_tolerance(small_runs):
    root, _ = small_runs
    rep = compare(root / "a", root / "fine")
    assert rep["within_tol"] and not rep["identical"]
    assert rep["tensors"]["solve/p.lkt"]["common_nodes"][0] == 256


def test_different_models_flagged(small_runs):
    root, _ = small_runs
    out = root / "diff.json"
    code = main(["compare", str(root / "a"), str(root / "stable"), "--out", str(out)])
    rep = read_json(out)
    assert rep["flag"] == "models differ"
    assert code == EXIT_CHECKS and not rep["within_tol"]


def test_compare_ladder_mismatch(tmp_path, small_runs):
    root, _ = small_runs
    cfg = write_config(tmp_path / "c.json", ladder={"Kt": 8, "report": [0.25, 1.0]})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    with pytest.raises(KernelError) as exc:
        compare(root / "a", tmp_path / "o")
    assert exc.value.code == "GRID_MISMATCH"
    assert main(["compare", str(root / "a"), str(tmp_path / "o")]) == EXIT_STAGE


def test_summary_merges_stage_runs(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    out = str(tmp_path / "o")
    assert main(["validate", "--config", cfg, "--out", out]) == EXIT_OK
    assert main(["profile", "--config", cfg, "--out", out]) == EXIT_OK
    summary = read_json(tmp_path / "o" / "summary.json")
    assert {"assumptions", "t_qstar_rho"} <= set(summary["checks"])
    assert summary["stages"] == {"validate": "ok", "profile": "ok"}
