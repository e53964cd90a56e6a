"""Command-line driver: ``sarxid {simulate,identify,experiment,theory} CONFIG``.

Each run is described by one YAML file (schema in `CONFIG_SCHEMA`); flags
only override the seed, the output directory and the worker count.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import rng as rngmod
from .bound import EXACT_WINDOW_CAP, McSchedule
from .errors import ConfigError, NumericalError, SarxError
from .evaluation import (
    ExperimentSetup,
    run_realizations,
    summarize,
    write_realizations_json,
    write_summary_csv,
)
from .identify import (
    ExactBound,
    Identifier,
    IdentifierConfig,
    MonteCarloBound,
    MultiWindowBound,
    NoBound,
    run,
    write_bound_trace_csv,
    write_records_csv,
)
from .model import (
    Explicit,
    FastSwitching,
    MinDwell,
    NoiseModel,
    SarxSystem,
    SlowSwitching,
    SystemOrder,
    Trajectory,
    random_system_from_poles,
    simulate,
)
from .theory import (
    TheoryInputs,
    constants_from_correlation,
    correlation_matrix_order3,
    curve_asymptotes,
    local_radius,
    local_success_probability,
    partial_bound_curves,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_NUMERICAL = 4

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}
_matrix = {"type": "array", "items": {"type": "array", "items": _num, "minItems": 1}, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_a": {"type": "integer", "minimum": 0},
                "n_c": {"type": "integer", "minimum": 0},
                "subsystems": _matrix,
                "random_poles": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["m"],
                    "properties": {"m": _posint, "c1": _num, "low": _num, "high": _num},
                },
            },
            "oneOf": [
                {"required": ["n_a", "n_c", "subsystems"], "not": {"required": ["random_poles"]}},
                {"required": ["random_poles"], "not": {"required": ["subsystems"]}},
            ],
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["none", "truncated-gaussian", "gaussian"]},
                "sigma": _nonneg,
                "n_max": _pos,
                "width": _pos,
            },
        },
        "input": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"std": _nonneg},
        },
        "switching": {
            "type": "object",
            "additionalProperties": False,
            "required": ["pattern"],
            "properties": {
                "pattern": {"enum": ["SS", "MD", "FS", "explicit"]},
                "block_length": _posint,
                "dwell": _posint,
                "geo_p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "sequence": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
        },
        "identifier": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N_R": _posint,
                "N_C": _posint,
                "alpha": _pos,
                "beta": _pos,
                "nu": _pos,
                "n_max": _nonneg,
                "gamma": {"type": ["number", "null"]},
                "init": {"oneOf": [{"enum": ["zeros", "gaussian"]}, _matrix]},
                "init_scale": _nonneg,
                "bound_mode": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["exact", "monte-carlo", "multi-window", "disabled"]},
                        "cap": _posint,
                        "zeta1": _num,
                        "zeta2": _num,
                        "samples_cap": _posint,
                        "windows": {"type": "array", "items": _posint, "minItems": 1},
                    },
                },
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "M": _posint,
                "T": _posint,
                "base_seed": {"type": "integer", "minimum": 0},
                "patterns": {"type": "array", "items": {"enum": ["SS", "MD", "FS"]}, "minItems": 1},
                "noise_levels": {"type": "array", "items": _nonneg, "minItems": 1},
                "threads": _posint,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "trace": {"type": "boolean"},
            },
        },
        "theory": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "a1": _num, "a2": _num, "c1": _num, "sigma_u": _pos,
                "lambda_min": _pos, "lambda_max": _pos,
                "n": _posint, "N_R": _posint, "steps": _posint,
                "sigma_n": _nonneg, "S_min": _pos, "S_max": _pos, "phi_max": _pos,
                "psi": _nonneg, "n_max": _nonneg, "eps0": _nonneg, "nu": _pos,
                "m": _posint, "gamma": _num,
            },
        },
    },
}

REQUIRED_SECTIONS = {
    "simulate": ["system"],
    "identify": ["system"],
    "experiment": ["system"],
    "theory": ["theory"],
}


# --- configuration ----------------------------------------------------------------------


def load_config(path, command: str) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    doc = {} if doc is None else doc
    schema = copy.deepcopy(CONFIG_SCHEMA)
    schema["required"] = REQUIRED_SECTIONS[command]
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config validation failed at {where}: {err.message}")
    return doc


def build_system(cfg: dict, seed) -> SarxSystem:
    sec = cfg["system"]
    if "random_poles" in sec:
        rp = sec["random_poles"]
        return random_system_from_poles(rp["m"], rp.get("c1", 1.0), rngmod.stream(seed, "system"),
                                        rp.get("low", -1.0), rp.get("high", 1.0))
    return SarxSystem.from_lists(sec["n_a"], sec["n_c"], sec["subsystems"])


def build_noise(cfg: dict) -> NoiseModel:
    sec = cfg.get("noise", {})
    kind = sec.get("kind", "none")
    sigma = sec.get("sigma", 0.0)
    if kind == "truncated-gaussian" and "n_max" not in sec:
        return NoiseModel.truncated(sigma, sec.get("width", 3.0))
    return NoiseModel(kind, sigma, sec.get("n_max"))


def build_pattern(cfg: dict, m: int, T: int):
    sec = cfg.get("switching", {"pattern": "SS"})
    tag = sec["pattern"]
    if tag == "SS":
        return SlowSwitching(sec.get("block_length", max(1, math.ceil(T / m))))
    if tag == "MD":
        return MinDwell(sec.get("dwell", 30), sec.get("geo_p", 1 / 16))
    if tag == "FS":
        return FastSwitching()
    return Explicit(tuple(sec.get("sequence", ())))


def build_identifier_config(cfg: dict, m: int, orders: SystemOrder, noise: NoiseModel, seed) -> IdentifierConfig:
    sec = cfg.get("identifier", {})
    bm = sec.get("bound_mode", {"kind": "exact"})
    kind = bm["kind"]
    if kind == "exact":
        mode = ExactBound(bm.get("cap", EXACT_WINDOW_CAP))
    elif kind == "monte-carlo":
        mode = MonteCarloBound(noise, McSchedule(bm.get("zeta1", 0.9), bm.get("zeta2", 0.5),
                                                 bm.get("samples_cap", 10_000)))
    elif kind == "multi-window":
        mode = MultiWindowBound(tuple(bm.get("windows", (sec.get("N_C", 12),))), bm.get("cap", EXACT_WINDOW_CAP))
    else:
        mode = NoBound()
    n_max = sec.get("n_max", noise.bound)
    if kind == "monte-carlo":
        n_max = sec.get("n_max")
    init = sec.get("init", "gaussian")
    if not isinstance(init, str):
        init = np.asarray(init, dtype=float)
    return IdentifierConfig(
        m=m, orders=orders, N_R=sec.get("N_R", 3), N_C=sec.get("N_C", 12),
        alpha=sec.get("alpha", 4.0), beta=sec.get("beta", 3.0), nu=sec.get("nu", 1e-4),
        n_max=n_max, gamma=sec.get("gamma"), init=init, init_scale=sec.get("init_scale", 1.0),
        bound_mode=mode, seed=seed,
    )


def _seed(cfg, args) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.get("experiment", {}).get("base_seed", 0)


def _outdir(cfg, args) -> Path:
    d = Path(args.output if args.output is not None else cfg.get("output", {}).get("directory", "."))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _horizon(cfg) -> int:
    return cfg.get("experiment", {}).get("T", 2000)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.integer):
        return int(x)
    return x


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=1, sort_keys=True)
        fh.write("\n")


# --- commands -------------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, "simulate")
    seed = _seed(cfg, args)
    system = build_system(cfg, seed)
    T = _horizon(cfg)
    traj = simulate(system, build_pattern(cfg, system.m, T), build_noise(cfg),
                    cfg.get("input", {}).get("std", 1.0), T, rngmod.stream(seed, "simulation"))
    out = _outdir(cfg, args) / "trajectory.csv"
    traj.to_csv(out)
    print(f"seed={seed} T={T} m={system.m} modes_used={len(np.unique(traj.modes))} "
          f"y_rms={np.sqrt(np.mean(traj.y ** 2)):.6g} -> {out}")
    return EXIT_OK


def cmd_identify(args) -> int:
    cfg = load_config(args.config, "identify")
    seed = _seed(cfg, args)
    system = build_system(cfg, seed)
    noise = build_noise(cfg)
    if args.trajectory:
        traj = Trajectory.from_csv(args.trajectory)
    else:
        T = _horizon(cfg)
        traj = simulate(system, build_pattern(cfg, system.m, T), noise,
                        cfg.get("input", {}).get("std", 1.0), T, rngmod.stream(seed, "simulation"))
    if traj.modes.max() >= system.m:
        raise ConfigError(f"trajectory uses mode {traj.modes.max()} but the system has {system.m} subsystems")
    icfg = build_identifier_config(cfg, system.m, system.orders, noise, seed)
    ident = Identifier(icfg)
    records = run(ident, traj, system.params)
    outdir = _outdir(cfg, args)
    write_records_csv(records, outdir / "records.csv", system.m)
    if icfg.bounds_enabled:
        write_bound_trace_csv(records, outdir / "bound_trace.csv", system.params)
    summary = summarize(records, traj, system.params)
    ident.save(outdir / "final_state.json")
    doc = {
        "seed": seed, "T": traj.T, "m": system.m,
        "baseline": not icfg.bounds_enabled,
        "FE": summary.fe, "CER": summary.cer, "relabel": list(summary.relabel),
        "skipped_steps": sum(r.skipped for r in records),
        "ill_conditioned_steps": sum(r.result.ill_conditioned for r in records),
        "final_estimates": records[-1].estimates,
        "true_params": system.params,
    }
    _write_json(outdir / "summary.json", doc)
    print(f"FE={summary.fe:.6g} CER={summary.cer:.6g} baseline={doc['baseline']} -> {outdir}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = load_config(args.config, "experiment")
    seed = _seed(cfg, args)
    ex = cfg.get("experiment", {})
    threads = args.threads if args.threads is not None else ex.get("threads", 1)
    sys_sec = cfg["system"]
    fixed = None if "random_poles" in sys_sec else build_system(cfg, seed)
    m = sys_sec["random_poles"]["m"] if fixed is None else fixed.m
    orders = SystemOrder(2, 1) if fixed is None else fixed.orders
    noise0 = build_noise(cfg)
    base_cfg = build_identifier_config(cfg, m, orders, noise0, seed)
    if base_cfg.n_max is None and not isinstance(base_cfg.bound_mode, (MonteCarloBound, NoBound)):
        base_cfg = replace(base_cfg, n_max=0.0)
    width = cfg.get("noise", {}).get("width", 3.0)
    outdir = _outdir(cfg, args)
    rows = []
    for pattern in ex.get("patterns", ["SS", "MD", "FS"]):
        for sigma in ex.get("noise_levels", [1e-1, 1e-2, 1e-3]):
            setup = ExperimentSetup(pattern, sigma, ex.get("M", 30), _horizon(cfg), base_cfg, fixed, m,
                                    cfg.get("input", {}).get("std", 1.0), width)
            row = run_realizations(setup, seed, threads)
            rows.append(row)
            write_realizations_json(row, outdir / f"realizations_{pattern}_{sigma:g}.json")
            print(f"{pattern} {sigma:g}: FE ours={row.fe_ours:.4g} base={row.fe_base:.4g} "
                  f"CER ours={row.cer_ours:.4g} base={row.cer_base:.4g} failed={row.failed}", flush=True)
    write_summary_csv(rows, outdir / "summary.csv")
    print(f"-> {outdir / 'summary.csv'}")
    return EXIT_OK


def cmd_theory(args) -> int:
    cfg = load_config(args.config, "theory")
    th = cfg["theory"]
    sigma_n = th.get("sigma_n", cfg.get("noise", {}).get("sigma", 0.0))
    doc = {}
    if "lambda_min" in th or "lambda_max" in th:
        if not ("lambda_min" in th and "lambda_max" in th):
            raise ConfigError("theory needs both lambda_min and lambda_max")
        lam_min, lam_max = th["lambda_min"], th["lambda_max"]
    else:
        a1, a2, c1 = th.get("a1"), th.get("a2"), th.get("c1")
        if a1 is None and "system" in cfg and "subsystems" in cfg["system"]:
            sec = cfg["system"]
            if (sec["n_a"], sec["n_c"]) != (2, 1) or len(sec["subsystems"]) != 1:
                raise ConfigError("theory from the system section needs one order-(2, 1) subsystem")
            a1, a2, c1 = sec["subsystems"][0]
        if a1 is None or a2 is None:
            raise ConfigError("theory needs lambda_min/lambda_max or a1/a2 coefficients")
        c1 = 1.0 if c1 is None else c1
        R, eig = correlation_matrix_order3(a1, a2, c1, th.get("sigma_u", 1.0), sigma_n)
        lam_min, lam_max = float(eig[0]), float(eig[-1])
        doc["correlation"] = {"R": R, "eigenvalues": eig}
    n = th.get("n", 3)
    N_R = th.get("N_R", 10)
    steps = th.get("steps", 1000)
    inputs = TheoryInputs(sigma_n=sigma_n, S_min=th.get("S_min"), S_max=th.get("S_max"),
                          phi_max=th.get("phi_max"), psi=th.get("psi"), n_max=th.get("n_max", 0.0),
                          eps0=th.get("eps0", 0.0), nu=th.get("nu", 1e-4), m=th.get("m", 1))
    constants = constants_from_correlation(lam_min, lam_max, n, N_R)
    gamma = th.get("gamma")
    gamma_tilde = 1.0 if gamma is None else gamma / (1.0 - gamma)
    S_min = inputs.S_min if sigma_n > 0 else None
    lower, upper = partial_bound_curves(constants, sigma_n, S_min, inputs.eps0 ** 2, steps,
                                        inputs.phi_max, gamma_tilde)
    lo_inf, up_inf = curve_asymptotes(constants, sigma_n, gamma_tilde)
    doc.update({
        "lambda_min": lam_min, "lambda_max": lam_max,
        "constants": constants.as_dict(),
        "asymptotes": {"lower": lo_inf, "upper": up_inf},
        "snr_ratio_ok": inputs.check_snr_ratio(constants),
    })
    if inputs.psi is not None and inputs.phi_max is not None:
        rad = local_radius(inputs.psi, inputs.phi_max, inputs.n_max, inputs.nu, inputs.S_min)
        doc["local_radius"] = {"eps_prime": rad.value, "applicable": rad.applicable}
        if rad.applicable:
            prob = local_success_probability(inputs.m, N_R, inputs.eps0, rad.value,
                                             inputs.S_min if inputs.n_max > 0 else None)
            doc["success_probability"] = {"probability": prob.probability,
                                          "precondition_met": prob.precondition_met}
    outdir = _outdir(cfg, args)
    _write_json(outdir / "theory.json", doc)
    with open(outdir / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "lower", "upper"])
        for r, (lo, up) in enumerate(zip(lower, upper), start=1):
            w.writerow([r, f"{lo:.17g}", f"{up:.17g}"])
    print(f"lambda_min={lam_min:.4g} lambda_max={lam_max:.4g} kappa_max={constants.kappa_max:.4g} -> {outdir}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "identify": cmd_identify,
    "experiment": cmd_experiment,
    "theory": cmd_theory,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sarxid", description="Switched ARX identification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override experiment.base_seed")
        p.add_argument("--output", default=None, help="override output.directory")
        p.add_argument("--threads", type=int, default=None, help="worker processes for experiments")
        if name == "identify":
            p.add_argument("--trajectory", default=None, help="trajectory CSV instead of simulating")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SarxError, RuntimeError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
