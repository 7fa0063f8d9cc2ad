"""CLI tests: exit codes, config validation, artifacts, reproducibility."""

import json
import os

from memsde.cli import main


def _write(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f)
    return str(path)


def _base_cfg(section_key, section, problem="ornstein_uhlenbeck",
              scheme="tem", **extra):
    cfg = {
        "schema": "mem-sde/1",
        "problem": {"name": problem, "params": {}},
        "scheme": {"kind": scheme},
        "seed": 7,
        "x0": {"point": [0.5]},
        section_key: section,
    }
    cfg.update(extra)
    return cfg


def _run(tmp_path, command, cfg, out="out", **flags):
    cfg_path = _write(tmp_path / "cfg.json", cfg)
    out_dir = str(tmp_path / out)
    argv = [command, "--config", cfg_path, "--out", out_dir]
    for k, v in flags.items():
        argv += [f"--{k}", str(v)]
    rc = main(argv)
    return rc, out_dir


def test_no_command_is_usage_error(capsys):
    assert main([]) == 2


def test_missing_config_flag(capsys):
    assert main(["simulate"]) == 2


def test_unreadable_config(tmp_path):
    rc = main(["simulate", "--config", str(tmp_path / "nope.json")])
    assert rc == 2


def test_invalid_json_reports_line_and_column(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "schema": "mem-sde/1",\n  oops\n}\n')
    rc = main(["simulate", "--config", str(p)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "column" in err


def test_wrong_schema_rejected(tmp_path):
    cfg = _base_cfg("simulate", {"tau": 0.1, "T": 1.0, "M": 8})
    cfg["schema"] = "mem-sde/0"
    rc, _ = _run(tmp_path, "simulate", cfg)
    assert rc == 2


def test_missing_command_section(tmp_path):
    cfg = _base_cfg("simulate", {"tau": 0.1, "T": 1.0, "M": 8})
    del cfg["simulate"]
    rc, _ = _run(tmp_path, "simulate", cfg)
    assert rc == 2


def test_unknown_root_key_rejected(tmp_path):
    cfg = _base_cfg("simulate", {"tau": 0.1, "T": 1.0, "M": 8})
    cfg["extra"] = 1
    rc, _ = _run(tmp_path, "simulate", cfg)
    assert rc == 2


def test_unknown_section_key_rejected(tmp_path, capsys):
    cfg = _base_cfg("simulate", {"tau": 0.1, "T": 1.0, "M": 8, "bogus": 3})
    rc, _ = _run(tmp_path, "simulate", cfg)
    assert rc == 2
    assert "bogus" in capsys.readouterr().err


def test_custom_scheme_rejected(tmp_path):
    cfg = _base_cfg("simulate", {"tau": 0.1, "T": 1.0, "M": 8},
                    scheme="custom")
    rc, _ = _run(tmp_path, "simulate", cfg)
    assert rc == 2


def test_unknown_problem_is_config_error(tmp_path):
    cfg = _base_cfg("simulate", {"tau": 0.1, "T": 1.0, "M": 8},
                    problem="no_such_model")
    rc, _ = _run(tmp_path, "simulate", cfg)
    assert rc == 2


def test_x0_point_and_gaussian_together_rejected(tmp_path):
    cfg = _base_cfg("simulate", {"tau": 0.1, "T": 1.0, "M": 8})
    cfg["x0"] = {"point": [0.0], "gaussian": {"mean": [0.0], "sd": 1.0}}
    rc, _ = _run(tmp_path, "simulate", cfg)
    assert rc == 2


def test_tau_above_limit_is_config_error(tmp_path):
    cfg = _base_cfg("simulate", {"tau": 5.0, "T": 10.0, "M": 8},
                    problem="double_well")
    rc, _ = _run(tmp_path, "simulate", cfg)
    assert rc == 2


def test_nondivisible_horizon_is_runtime_error(tmp_path):
    cfg = _base_cfg("simulate", {"tau": 0.3, "T": 1.0, "M": 8},
                    problem="double_well")
    rc, _ = _run(tmp_path, "simulate", cfg)
    assert rc in (2, 3)


def test_simulate_artifacts_and_manifest(tmp_path):
    cfg = _base_cfg("simulate", {"tau": 0.0625, "T": 1.0, "M": 64})
    rc, out = _run(tmp_path, "simulate", cfg)
    assert rc == 0
    listed = sorted(os.listdir(out))
    assert listed == ["ensemble.bin", "ensemble.csv", "manifest.json",
                      "report.json"]
    with open(os.path.join(out, "manifest.json")) as f:
        man = json.load(f)
    assert man["schema"] == "mem-sde/1"
    assert sorted(man["files"]) == listed
    assert man["effective_config"]["seed"] == 7
    assert man["effective_config"]["workers"] == 1
    with open(os.path.join(out, "report.json")) as f:
        rep = json.load(f)
    assert rep["schema"] == "mem-sde/1"
    assert rep["n_diverged"] == 0


def test_format_json_skips_csv(tmp_path):
    cfg = _base_cfg("simulate", {"tau": 0.0625, "T": 1.0, "M": 64})
    rc, out = _run(tmp_path, "simulate", cfg, **{"format": "json"})
    assert rc == 0
    listed = sorted(os.listdir(out))
    assert "ensemble.csv" not in listed
    assert "ensemble.bin" in listed and "report.json" in listed


def test_seed_flag_overrides_config(tmp_path):
    cfg = _base_cfg("simulate", {"tau": 0.0625, "T": 1.0, "M": 64})
    rc, out_a = _run(tmp_path, "simulate", cfg, out="a", seed=7)
    assert rc == 0
    rc, out_b = _run(tmp_path, "simulate", cfg, out="b", seed=8)
    assert rc == 0
    with open(os.path.join(out_a, "ensemble.csv")) as f:
        csv_a = f.read()
    with open(os.path.join(out_b, "ensemble.csv")) as f:
        csv_b = f.read()
    assert csv_a != csv_b
    with open(os.path.join(out_b, "manifest.json")) as f:
        assert json.load(f)["effective_config"]["seed"] == 8


def test_check_command_reports_zero_violations(tmp_path):
    cfg = _base_cfg("check", {"n_points": 500, "radius": 5.0, "tau": 0.01},
                    problem="double_well")
    rc, out = _run(tmp_path, "check", cfg)
    assert rc == 0
    with open(os.path.join(out, "report.json")) as f:
        rep = json.load(f)
    assert rep["total_violations"] == 0
    names = {c["assumption_id"] for c in rep["checks"]}
    assert {"A1_mon", "A1_coe"} <= names


def test_weak_rate_writes_errors_and_rates_csv(tmp_path):
    cfg = _base_cfg(
        "weak_rate",
        {"T": 1.0, "taus": [0.25, 0.125, 0.0625], "M": 500,
         "ref_refinement": 8},
        problem="ornstein_uhlenbeck")
    rc, out = _run(tmp_path, "weak-rate", cfg)
    assert rc == 0
    listed = sorted(os.listdir(out))
    assert {"errors.csv", "rates.csv", "report.json",
            "manifest.json"} <= set(listed)
    with open(os.path.join(out, "errors.csv")) as f:
        lines = f.read().strip().splitlines()
    assert lines[0] == "tau,w1,se,n_effective"
    assert len(lines) == 4


def test_bel_grad_command(tmp_path):
    cfg = _base_cfg(
        "bel_grad",
        {"t": 0.5, "tau": 0.0125, "M": 2000, "x": [0.5], "v": [1.0],
         "phi": {"kind": "coordinate", "index": 0}})
    rc, out = _run(tmp_path, "bel-grad", cfg)
    assert rc == 0
    with open(os.path.join(out, "report.json")) as f:
        rep = json.load(f)
    assert rep["std_error"] > 0.0
    assert abs(rep["estimate"]) < 2.0


def test_bad_phi_kind_rejected(tmp_path):
    cfg = _base_cfg(
        "bel_grad",
        {"t": 0.5, "tau": 0.0125, "M": 100, "x": [0.5], "v": [1.0],
         "phi": {"kind": "cubic"}})
    rc, _ = _run(tmp_path, "bel-grad", cfg)
    assert rc == 2


def test_report_json_byte_identical_across_reruns(tmp_path):
    cfg = _base_cfg(
        "weak_rate",
        {"T": 1.0, "taus": [0.25, 0.125, 0.0625], "M": 400,
         "ref_refinement": 8})
    blobs = []
    for name in ("r1", "r2"):
        rc, out = _run(tmp_path, "weak-rate", cfg, out=name)
        assert rc == 0
        with open(os.path.join(out, "report.json"), "rb") as f:
            blobs.append(f.read())
    assert blobs[0] == blobs[1]


def test_report_json_identical_across_worker_counts(tmp_path):
    cfg = _base_cfg("simulate", {"tau": 0.0625, "T": 1.0, "M": 256})
    blobs = []
    for w in (1, 2, 8):
        rc, out = _run(tmp_path, "simulate", cfg, out=f"w{w}", workers=w)
        assert rc == 0
        with open(os.path.join(out, "ensemble.bin"), "rb") as f:
            blobs.append(f.read())
    assert blobs[0] == blobs[1] == blobs[2]


def test_moments_command(tmp_path):
    cfg = _base_cfg(
        "moments",
        {"tau": 0.05, "N": 40, "M": 300, "orders": [2, 4],
         "record_every": 4},
        problem="double_well")
    rc, out = _run(tmp_path, "moments", cfg)
    assert rc == 0
    with open(os.path.join(out, "report.json")) as f:
        rep = json.load(f)
    assert rep["report"]["diverged_fraction"] == 0.0
    assert rep["report"]["recursion_violations"] == 0


def test_blowup_command(tmp_path):
    cfg = _base_cfg("blowup", {"tau": 0.25, "N": 60, "M": 200},
                    problem="double_well")
    cfg["x0"] = {"point": [5.0]}
    rc, out = _run(tmp_path, "blowup", cfg)
    assert rc == 0
    with open(os.path.join(out, "report.json")) as f:
        rep = json.load(f)
    frac = rep["report"]["diverged_fraction"]
    assert frac["em"] > frac["tem"]
    assert frac["tem"] == 0.0 and frac["pem"] == 0.0


def test_contraction_command(tmp_path):
    cfg = _base_cfg(
        "contraction",
        {"x0_a": [2.0], "x0_b": [-2.0], "tau": 0.0125,
         "T_list": [1.0, 2.0, 3.0, 4.0], "M": 500})
    rc, out = _run(tmp_path, "contraction", cfg)
    assert rc == 0
    assert os.path.exists(os.path.join(out, "rates.csv"))
    with open(os.path.join(out, "report.json")) as f:
        rep = json.load(f)
    assert rep["report"]["lambda_hat"] > 0.0


def test_invariant_command(tmp_path):
    cfg = _base_cfg(
        "invariant",
        {"taus": [0.125, 0.0625], "M": 800, "N_long": 512,
         "ref_refinement": 4})
    rc, out = _run(tmp_path, "invariant", cfg)
    assert rc == 0
    with open(os.path.join(out, "report.json")) as f:
        rep = json.load(f)
    errs = rep["report"]["errors"]
    assert len(errs) == 2 and all(e > 0 for e in errs)
