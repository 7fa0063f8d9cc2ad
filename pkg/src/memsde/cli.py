"""Command-line front end.

Scientific parameters live in a JSON config (the reproducibility unit);
flags carry only operational overrides.  Exit codes: 0 success, 2 config
error, 3 runtime error.  Every successful run writes manifest.json with
the artifact list and the effective (post-override) config.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import experiments, reportio
from .errors import ConfigError, MemSdeError, UnknownProblem
from .noise import NoisePlan
from .problems import (
    check_coercivity,
    check_ellipticity,
    check_monotonicity,
    check_scheme_conditions,
    make_builtin,
)
from .schemes import make_scheme
from .simulate import (
    GaussianInitial,
    ensemble_to_binary,
    ensemble_to_csv,
    simulate_ensemble,
)

COMMANDS = ("simulate", "check", "weak-rate", "invariant", "moments",
            "blowup", "contraction", "bel-grad")

_COMMAND_KEYS = {
    "simulate": "simulate",
    "check": "check",
    "weak-rate": "weak_rate",
    "invariant": "invariant",
    "moments": "moments",
    "blowup": "blowup",
    "contraction": "contraction",
    "bel-grad": "bel_grad",
}


def _reject_unknown(section, allowed, where):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) {sorted(unknown)} in {where}; "
            f"allowed: {sorted(allowed)}")


def _load_config(path, command):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, "
            f"column {exc.colno}: {exc.msg}")
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    key = _COMMAND_KEYS[command]
    _reject_unknown(cfg, {"schema", "problem", "scheme", "seed", "x0", key},
                    "config root")
    if cfg.get("schema") != reportio.SCHEMA:
        raise ConfigError(
            f'config "schema" must be "{reportio.SCHEMA}", '
            f"got {cfg.get('schema')!r}")
    if key not in cfg:
        raise ConfigError(f'config must contain a "{key}" section for '
                          f"command {command}")
    return cfg


def _build_problem(cfg):
    sec = cfg.get("problem")
    if not isinstance(sec, dict):
        raise ConfigError('config must contain a "problem" object')
    _reject_unknown(sec, {"name", "params"}, '"problem"')
    if "name" not in sec:
        raise ConfigError('"problem" must have a "name"')
    try:
        return make_builtin(sec["name"], sec.get("params", {}))
    except UnknownProblem as exc:
        raise ConfigError(str(exc))


def _scheme_kind(cfg):
    sec = cfg.get("scheme", {"kind": "tem"})
    if not isinstance(sec, dict):
        raise ConfigError('"scheme" must be an object')
    _reject_unknown(sec, {"kind"}, '"scheme"')
    kind = sec.get("kind", "tem")
    if kind == "custom":
        raise ConfigError(
            "custom schemes require user callables and are library-only; "
            "config files accept kinds em, tem, pem")
    if kind not in ("em", "tem", "pem"):
        raise ConfigError(f"unknown scheme kind {kind!r}")
    return kind


def _build_x0(cfg, d):
    sec = cfg.get("x0", {"point": [0.0] * d})
    _reject_unknown(sec, {"point", "gaussian"}, '"x0"')
    if "point" in sec and "gaussian" in sec:
        raise ConfigError('"x0" must have exactly one of point/gaussian')
    if "point" in sec:
        x0 = np.asarray(sec["point"], dtype=np.float64)
        if x0.shape != (d,):
            raise ConfigError(f'"x0.point" must have length {d}')
        return x0
    g = sec["gaussian"]
    _reject_unknown(g, {"mean", "sd"}, '"x0.gaussian"')
    return GaussianInitial(np.asarray(g["mean"], dtype=np.float64),
                           float(g["sd"]))


def _section(cfg, command, allowed, required):
    sec = cfg[_COMMAND_KEYS[command]]
    if not isinstance(sec, dict):
        raise ConfigError(f'"{_COMMAND_KEYS[command]}" must be an object')
    _reject_unknown(sec, allowed, f'"{_COMMAND_KEYS[command]}"')
    for k in required:
        if k not in sec:
            raise ConfigError(
                f'"{_COMMAND_KEYS[command]}" requires key "{k}"')
    return sec


_PHI_KINDS = {"coordinate", "constant", "norm_squared"}


def _build_phi(spec):
    _reject_unknown(spec, {"kind", "index", "value"}, '"phi"')
    kind = spec.get("kind")
    if kind == "coordinate":
        idx = int(spec.get("index", 0))
        return lambda x: x[:, idx]
    if kind == "constant":
        val = float(spec.get("value", 1.0))
        return lambda x: np.full(x.shape[0], val)
    if kind == "norm_squared":
        return lambda x: np.sum(x * x, axis=1)
    raise ConfigError(f'"phi.kind" must be one of {sorted(_PHI_KINDS)}')


def _run_command(command, cfg, out_dir, seed, workers, fmt):
    problem = _build_problem(cfg)
    files = []
    want_csv = fmt in ("csv", "both")
    want_json = fmt in ("json", "both")

    def emit_csvs(rep):
        if want_csv and hasattr(rep, "errors"):
            taus = rep.taus
            errs = getattr(rep, "errors")
            ses = getattr(rep, "stderrs")
            neff = getattr(rep, "n_effective", [0] * len(errs))
            p = os.path.join(out_dir, "errors.csv")
            reportio.write_errors_csv(p, taus, errs, ses, neff)
            files.append("errors.csv")
        fits = []
        if getattr(rep, "slope_logtau", None) is not None:
            fits.append(("logtau", rep.slope_logtau, rep.intercept_logtau,
                         rep.residual_logtau))
            fits.append(("logtau_logcorrected", rep.slope_loglog,
                         rep.intercept_loglog, rep.residual_loglog))
        if getattr(rep, "lambda_hat", None) is not None:
            fits.append(("exp_decay_lambda", rep.lambda_hat, 0.0, 0.0))
        if want_csv and fits:
            p = os.path.join(out_dir, "rates.csv")
            reportio.write_rates_csv(p, fits)
            files.append("rates.csv")

    if command == "simulate":
        sec = _section(cfg, command, {"tau", "T", "M"}, {"tau", "T", "M"})
        kind = _scheme_kind(cfg)
        scheme = make_scheme(kind, problem)
        x0 = _build_x0(cfg, problem.d)
        tau, T, M = float(sec["tau"]), float(sec["T"]), int(sec["M"])
        plan = NoisePlan(seed, problem.m, tau, 1, int(round(T / tau)))
        ens = simulate_ensemble(problem, scheme, x0, tau, T, M, plan,
                                workers=workers)
        if want_csv:
            ensemble_to_csv(ens, os.path.join(out_dir, "ensemble.csv"))
            files.append("ensemble.csv")
        ensemble_to_binary(ens, os.path.join(out_dir, "ensemble.bin"))
        files.append("ensemble.bin")
        payload = {"command": command, "n_diverged": ens.n_diverged,
                   "M": M, "tau": tau, "T": T, "meta": ens.meta}
    elif command == "check":
        sec = _section(cfg, command,
                       {"n_points", "radius", "tau", "seed_points"}, ())
        n_points = int(sec.get("n_points", 10000))
        radius = float(sec.get("radius", 10.0))
        tau = float(sec.get("tau", 0.01))
        pseed = int(sec.get("seed_points", 0))
        kind = _scheme_kind(cfg)
        scheme = make_scheme(kind, problem)
        reports = [
            check_monotonicity(problem, n_points=n_points, radius=radius,
                               seed=pseed),
            check_coercivity(problem, n_points=n_points, radius=radius,
                             seed=pseed),
            check_ellipticity(problem, n_points=n_points, radius=radius,
                              seed=pseed),
        ]
        reports += check_scheme_conditions(
            problem, scheme, tau, n_points=n_points, radius=radius,
            seed=pseed)
        payload = {"command": command,
                   "checks": [r.as_dict() for r in reports],
                   "total_violations": sum(r.n_violations
                                           for r in reports)}
    elif command == "weak-rate":
        sec = _section(cfg, command,
                       {"T", "taus", "M", "ref_refinement",
                        "w1_estimator"},
                       {"T", "taus", "M"})
        study = experiments.ConvergenceStudyConfig(
            problem=problem, scheme_kind=_scheme_kind(cfg),
            x0=_build_x0(cfg, problem.d), T=float(sec["T"]),
            taus=tuple(sec["taus"]), M=int(sec["M"]),
            ref_refinement=int(sec.get("ref_refinement", 64)),
            w1_estimator=sec.get("w1_estimator", "sorted"), seed=seed)
        rep = experiments.weak_error_study(study, workers=workers)
        emit_csvs(rep)
        payload = {"command": command, "report": rep.as_dict()}
    elif command == "invariant":
        sec = _section(cfg, command,
                       {"taus", "M", "N_long", "ref_refinement",
                        "time_average_check"},
                       {"taus", "M", "N_long"})
        study = experiments.ConvergenceStudyConfig(
            problem=problem, scheme_kind=_scheme_kind(cfg),
            x0=_build_x0(cfg, problem.d),
            T=float(sec["N_long"]) * min(float(t) for t in sec["taus"]),
            taus=tuple(sec["taus"]), M=int(sec["M"]),
            ref_refinement=int(sec.get("ref_refinement", 16)), seed=seed)
        rep = experiments.invariant_measure_study(
            study, int(sec["N_long"]), workers=workers,
            time_average_check=bool(sec.get("time_average_check", False)))
        rep.n_effective = [int(sec["M"])] * len(rep.errors)
        emit_csvs(rep)
        payload = {"command": command, "report": rep.as_dict()}
    elif command == "moments":
        sec = _section(cfg, command,
                       {"tau", "N", "M", "orders", "record_every"},
                       {"tau", "N", "M"})
        rep = experiments.moment_stability_study(
            problem, _scheme_kind(cfg), _build_x0(cfg, problem.d),
            float(sec["tau"]), int(sec["N"]), int(sec["M"]),
            orders=tuple(sec.get("orders", [2, 4])), seed=seed,
            workers=workers,
            record_every=int(sec.get("record_every", 1)))
        payload = {"command": command, "report": rep.as_dict()}
    elif command == "blowup":
        sec = _section(cfg, command, {"tau", "N", "M"}, {"tau", "N", "M"})
        rep = experiments.blowup_study(
            problem, _build_x0(cfg, problem.d), float(sec["tau"]),
            int(sec["N"]), int(sec["M"]), seed=seed, workers=workers)
        payload = {"command": command, "report": rep.as_dict()}
    elif command == "contraction":
        sec = _section(cfg, command,
                       {"x0_a", "x0_b", "tau", "T_list", "M"},
                       {"x0_a", "x0_b", "tau", "T_list", "M"})
        rep = experiments.contraction_study(
            problem, _scheme_kind(cfg), sec["x0_a"], sec["x0_b"],
            float(sec["tau"]), [float(t) for t in sec["T_list"]],
            int(sec["M"]), seed=seed, workers=workers)
        emit_csvs(rep)
        payload = {"command": command, "report": rep.as_dict()}
    elif command == "bel-grad":
        sec = _section(cfg, command,
                       {"t", "tau", "M", "x", "v", "phi"},
                       {"t", "tau", "M", "x", "v", "phi"})
        phi = _build_phi(sec["phi"])
        est, se = experiments.bel_gradient(
            problem, phi, float(sec["t"]),
            np.asarray(sec["x"], dtype=np.float64),
            np.asarray(sec["v"], dtype=np.float64), int(sec["M"]),
            float(sec["tau"]), seed=seed)
        payload = {"command": command, "estimate": est, "std_error": se}
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown command {command!r}")

    if want_json or not files:
        reportio.write_report(os.path.join(out_dir, "report.json"),
                              payload)
        files.append("report.json")
    effective = dict(cfg)
    effective["seed"] = seed
    effective["workers"] = workers
    effective["format"] = fmt
    files.append("manifest.json")
    reportio.write_manifest(os.path.join(out_dir, "manifest.json"),
                            files, effective)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="memsde",
        description="Tamed/projected Euler schemes for superlinear SDEs: "
                    "simulation and convergence studies")
    parser.add_argument("command", choices=COMMANDS, nargs="?")
    parser.add_argument("--config", required=False)
    parser.add_argument("--out", default=".")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--format", choices=("csv", "json", "both"),
                        default="both")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    if args.config is None:
        print("error: --config is required", file=sys.stderr)
        return 2
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = _load_config(args.config, args.command)
        seed = (args.seed if args.seed is not None
                else int(cfg.get("seed", 0)))
        os.makedirs(args.out, exist_ok=True)
        return _run_command(args.command, cfg, args.out, seed,
                            args.workers, args.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MemSdeError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError, KeyError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
