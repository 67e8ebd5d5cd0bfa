"""Command-line entry point.

Every command resolves its parameters from built-in defaults, then the
``--config`` JSON file (global keys plus a section named after the
command), then command-line flags. Outputs go to ``--out-dir`` with a
``<name>.meta.json`` sidecar per data file.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    ATTAINABLE_TWO_COPY,
    lu_wang_regret_check,
    region_curve,
)
from .encoding import RNG_NAME, ParamPoint, calibration_probs
from .errors import NumericalError
from .estimation import (
    DEFAULT_DELTAS,
    DEFAULT_PHIS,
    EncodingMode,
    records_to_csv,
    run_experiment,
)
from .information import (
    bell_merit_analytic,
    bell_ratios_analytic,
    classical_fim,
    equatorial_family,
    figure_of_merit,
    qfim,
)
from .measurement import (
    BELL_READOUT,
    WalkSpec,
    bell_walk_spec,
    bell_povm,
    complex_to_json,
    walk_to_povm,
)
from .optimizer import (
    analyze_povm,
    load_povm,
    load_reference_povm,
    objective,
    optimize_povm,
    povm_to_dict,
)

TWO_PI = 2 * np.pi


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- validation

def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _num_list(v):
    return isinstance(v, list) and len(v) > 0 and all(_num(x) for x in v)


def _grid(v):
    # either an explicit list or {"start", "stop", "num"[, "endpoint"]}
    if _num_list(v):
        return True
    return (isinstance(v, dict) and _num(v.get("start")) and _num(v.get("stop"))
            and _int(v.get("num")) and v["num"] >= 1)


def _expand(v, endpoint=True):
    if isinstance(v, list):
        return np.asarray(v, dtype=float)
    return np.linspace(v["start"], v["stop"], v["num"], endpoint=v.get("endpoint", endpoint))


GLOBAL_DEFAULTS = {"seed": 0, "out_dir": "out", "threads": 1}

COMMAND_DEFAULTS = {
    "sweep-merit": {
        "phi": {"start": 0.0, "stop": TWO_PI, "num": 100, "endpoint": False},
        "delta": {"start": 0.01, "stop": 1.0, "num": 100},
        "fd_step": 1e-5,
    },
    "experiment": {
        "settings": None,
        "nu": 10_000,
        "reps": 400,
        "resamples": 100,
        "mc_scheme": "pooled",
        "encoding": "analytic",
        "phase_samples": 200,
        "phase_scheme": "iid",
        "redraw_phases": False,
    },
    "regions": {
        "deltas": list(DEFAULT_DELTAS),
        "phis": list(DEFAULT_PHIS),
        "samples": 201,
        "experiment": False,
        "runs": 5,
        "nu": 10_000,
        "reps": 400,
        "resamples": 100,
    },
    "walk": {"spec": None, "readout": [list(p) for p in BELL_READOUT]},
    "optimize": {
        "phi": 0.0,
        "delta": 1.0,
        "k_outcomes": 4,
        "rank": 1,
        "restarts": 20,
        "max_iter": 2000,
        "povm": None,
        "reference": False,
    },
    "calibrate": {"n1": 100, "n2": 100},
}

# key -> (predicate, message)
RULES = {
    "seed": (lambda v: _int(v) and v >= 0, "must be a non-negative integer"),
    "out_dir": (lambda v: isinstance(v, str) and v != "", "must be a non-empty path string"),
    "threads": (lambda v: _int(v) and v >= 1, "must be an integer >= 1"),
    "fd_step": (lambda v: _num(v) and 0 < v < 1e-2, "must be a number in (0, 0.01)"),
    "nu": (lambda v: _int(v) and v >= 1, "must be an integer >= 1"),
    "reps": (lambda v: _int(v) and v >= 2, "must be an integer >= 2"),
    "resamples": (lambda v: _int(v) and (v == 0 or v >= 2), "must be 0 or an integer >= 2"),
    "mc_scheme": (lambda v: v in ("pooled", "per_rep"), "must be 'pooled' or 'per_rep'"),
    "encoding": (lambda v: v in ("analytic", "finite_sample"), "must be 'analytic' or 'finite_sample'"),
    "phase_samples": (lambda v: _int(v) and v >= 1, "must be an integer >= 1"),
    "phase_scheme": (lambda v: v in ("iid", "quantile"), "must be 'iid' or 'quantile'"),
    "redraw_phases": (lambda v: isinstance(v, bool), "must be true or false"),
    "deltas": (lambda v: _num_list(v) and all(x > 0 for x in v), "must be a non-empty list of deltas > 0"),
    "phis": (_num_list, "must be a non-empty list of numbers"),
    "samples": (lambda v: _int(v) and v >= 2, "must be an integer >= 2"),
    "experiment": (lambda v: isinstance(v, bool), "must be true or false"),
    "runs": (lambda v: _int(v) and v >= 1, "must be an integer >= 1"),
    "spec": (lambda v: v is None or isinstance(v, str), "must be a path string or null"),
    "readout": (
        lambda v: isinstance(v, list) and len(v) > 0
        and all(isinstance(p, list) and len(p) == 2 and all(_int(x) for x in p) for p in v),
        "must be a list of [x, coin] integer pairs",
    ),
    "k_outcomes": (lambda v: _int(v) and v >= 3, "must be an integer >= 3"),
    "rank": (lambda v: _int(v) and v >= 1, "must be an integer >= 1"),
    "restarts": (lambda v: _int(v) and v >= 1, "must be an integer >= 1"),
    "max_iter": (lambda v: _int(v) and v >= 1, "must be an integer >= 1"),
    "povm": (lambda v: v is None or isinstance(v, str), "must be a path string or null"),
    "reference": (lambda v: isinstance(v, bool), "must be true or false"),
    "n1": (lambda v: _int(v) and v >= 2, "must be an integer >= 2"),
    "n2": (lambda v: _int(v) and v >= 2, "must be an integer >= 2"),
}


def _key_line(text: str | None, key: str) -> str:
    if not text:
        return ""
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return f" (config line {i})"
    return ""


def _validate_settings(v):
    if v is None:
        return None
    if not isinstance(v, list) or not v:
        return "must be a non-empty list of {\"phi\", \"delta\"} objects"
    for i, s in enumerate(v):
        if not isinstance(s, dict) or not _num(s.get("phi")) or not _num(s.get("delta")):
            return f"entry {i} must be an object with numeric phi and delta"
        if s["delta"] <= 0:
            return f"entry {i}: delta must be > 0 for information quantities, got {s['delta']}"
    return None


def _validate(command: str, cfg: dict, text: str | None):
    for key, val in cfg.items():
        where = _key_line(text, key)
        if key == "settings":
            msg = _validate_settings(val)
            if msg:
                raise ConfigError(f"settings{where}: {msg}")
            continue
        if command in ("sweep-merit",) and key in ("phi", "delta"):
            if not _grid(val):
                raise ConfigError(f"{key}{where}: must be a list of numbers or {{start, stop, num}}")
            continue
        if command == "optimize" and key in ("phi", "delta"):
            if not _num(val) or (key == "delta" and val <= 0):
                raise ConfigError(f"{key}{where}: must be a number" + (" > 0" if key == "delta" else ""))
            continue
        rule = RULES.get(key)
        if rule is None:
            raise ConfigError(f"unknown key {key!r}{where} for command {command!r}")
        ok, msg = rule
        if not ok(val):
            raise ConfigError(f"{key}{where}: {msg}, got {val!r}")
    if command == "sweep-merit":
        phis = _expand(cfg["phi"], endpoint=False)
        deltas = _expand(cfg["delta"])
        if np.any(phis < 0) or np.any(phis >= TWO_PI):
            raise ConfigError(f"phi{_key_line(text, 'phi')}: grid must lie in [0, 2π)")
        if np.any(deltas <= 0) or np.any(deltas > 1):
            raise ConfigError(
                f"delta{_key_line(text, 'delta')}: grid must lie in (0, 1]; "
                "delta <= 0 has no defined quantum Fisher information"
            )


def load_config(path: str | None) -> tuple[dict, str | None]:
    if path is None:
        return {}, None
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path}: top level must be an object")
    return data, text


def resolve(command: str, file_cfg: dict, text: str | None, overrides: dict) -> dict:
    """Merge defaults, the config file and CLI overrides, then validate."""
    cfg = dict(GLOBAL_DEFAULTS)
    cfg.update(COMMAND_DEFAULTS[command])
    section = file_cfg.get(command, {})
    if not isinstance(section, dict):
        raise ConfigError(f"section {command!r}{_key_line(text, command)} must be an object")
    for key, val in file_cfg.items():
        if key in COMMAND_DEFAULTS:
            continue
        if key not in GLOBAL_DEFAULTS:
            raise ConfigError(f"unknown top-level key {key!r}{_key_line(text, key)}")
        cfg[key] = val
    for key, val in section.items():
        if key not in COMMAND_DEFAULTS[command]:
            raise ConfigError(f"unknown key {key!r}{_key_line(text, key)} for command {command!r}")
        cfg[key] = val
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    _validate(command, cfg, text)
    return cfg


# ------------------------------------------------------------------- output

def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def write_output(out_dir: Path, name: str, content: str, command: str, cfg: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(content)
    meta = {
        "command": command,
        "file": name,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "version": __version__,
        "rng": RNG_NAME,
    }
    (out_dir / f"{name}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# ----------------------------------------------------------------- commands

def cmd_sweep_merit(cfg: dict) -> dict:
    """Analytic and numeric Bell figure of merit on a (φ, Δ) grid."""
    phis = _expand(cfg["phi"], endpoint=False)
    deltas = _expand(cfg["delta"])
    fam = equatorial_family(copies=2, fd_step=cfg["fd_step"])
    povm = bell_povm()

    def point(pd):
        phi, delta = pd
        info = qfim(fam, (phi, delta))
        num = figure_of_merit(classical_fim(fam, povm, (phi, delta)), info.qfim)
        return (phi, delta, bell_merit_analytic((phi, delta)), num)

    rows = _map(point, [(p, d) for p in phis for d in deltas], cfg["threads"])
    content = _csv(("phi", "delta", "merit_analytic", "merit_numeric"), rows)
    path = write_output(Path(cfg["out_dir"]), "merit_sweep.csv", content, "sweep-merit", cfg)
    dev = max(abs(r[2] - r[3]) for r in rows)
    return {"files": [str(path)], "points": len(rows), "max_abs_deviation": dev}


def _encoding(cfg) -> EncodingMode:
    return EncodingMode(cfg["encoding"], cfg["phase_samples"], cfg["phase_scheme"], cfg["redraw_phases"])


def _settings(cfg):
    if cfg.get("settings") is None:
        return [ParamPoint(p, d) for d in DEFAULT_DELTAS for p in DEFAULT_PHIS]
    return [ParamPoint(s["phi"], s["delta"]) for s in cfg["settings"]]


def run_experiments(settings, cfg, mode=None, stream: int = 0):
    """One record per setting; setting ``i`` is seeded from child ``i`` of the root seed."""
    mode = _encoding(cfg) if mode is None else mode

    def one(i):
        ss = np.random.SeedSequence(cfg["seed"], spawn_key=(stream, i))
        return run_experiment(settings[i], cfg["nu"], cfg["reps"], mode, ss,
                              cfg["resamples"], cfg.get("mc_scheme", "pooled"))

    return _map(one, range(len(settings)), cfg["threads"])


def cmd_experiment(cfg: dict) -> dict:
    """Simulated Bell-measurement experiment at each setting."""
    settings = _settings(cfg)
    recs = run_experiments(settings, cfg)
    out = Path(cfg["out_dir"])
    payload = []
    for r in recs:
        d = r.to_dict(include_counts=False)
        d["seed"] = cfg["seed"]
        d["merit_theory"] = bell_merit_analytic(r.setting)
        payload.append(d)
    p1 = write_output(out, "experiment.json", _json(payload), "experiment", cfg)
    p2 = write_output(out, "experiment.csv", records_to_csv(recs), "experiment", cfg)
    summary = [
        {"phi": r.setting.phi, "delta": r.setting.delta, "merit": r.merit,
         "merit_error": r.merit_error, "merit_theory": bell_merit_analytic(r.setting)}
        for r in recs
    ]
    return {"files": [str(p1), str(p2)], "records": summary}


def distinct_points(points, tol: float = 1e-9) -> int:
    uniq = []
    for p in points:
        if not any(np.max(np.abs(np.subtract(p, q))) < tol for q in uniq):
            uniq.append(p)
    return len(uniq)


def experiment_point_checks(gp, gd, sp, sd, c_tilde):
    """Region checks for a noisy point, allowing three standard deviations.

    Ratios estimated from finite data can exceed 1, so the Lu-Wang relation
    is tested at the point moved 3σ towards the origin and clipped to
    [0, 1]; Region II is ``γ_φ + γ_Δ <= 1.5 + 3σ`` with σ the combined
    standard deviation of the sum.
    """
    g = (float(np.clip(gp - 3 * sp, 0, 1)), float(np.clip(gd - 3 * sd, 0, 1)))
    lw = lu_wang_regret_check(g, c_tilde)
    sigma = float(np.hypot(sp, sd))
    return {
        "lu_wang_satisfied": bool(lw.satisfied),
        "lu_wang_slack": lw.slack,
        "region_ii": bool(gp + gd <= ATTAINABLE_TWO_COPY + 3 * sigma),
        "sum": gp + gd,
        "sum_sigma": sigma,
    }


def cmd_regions(cfg: dict) -> dict:
    """Lu-Wang and attainable boundaries with theory and experiment points."""
    out = []
    for j, delta in enumerate(cfg["deltas"]):
        reg = region_curve(delta, cfg["samples"])
        d = reg.to_dict()
        d["lw_encloses_attainable"] = bool(np.all(reg.boundary_lw >= reg.boundary_attainable - 1e-9))
        theory = []
        for phi in cfg["phis"]:
            gp, gd = bell_ratios_analytic((phi, delta))
            lw = lu_wang_regret_check((gp, gd), reg.c_tilde)
            theory.append({
                "phi": phi, "gamma_phi": gp, "gamma_delta": gd,
                "lu_wang_satisfied": bool(lw.satisfied), "lu_wang_slack": lw.slack,
                "region_ii": bool(gp + gd <= ATTAINABLE_TWO_COPY + 1e-9),
            })
        d["theory_points"] = theory
        d["distinct_theory_points"] = distinct_points([(t["gamma_phi"], t["gamma_delta"]) for t in theory])
        if cfg["experiment"]:
            settings = [ParamPoint(phi, delta) for phi in cfg["phis"] for _ in range(cfg["runs"])]
            ecfg = dict(cfg, encoding="analytic", phase_samples=200, phase_scheme="iid",
                        redraw_phases=False, mc_scheme="pooled")
            recs = run_experiments(settings, ecfg, stream=j + 1)
            pts = []
            for r in recs:
                pt = {"phi": r.setting.phi, "gamma_phi": r.gamma_phi, "gamma_delta": r.gamma_delta,
                      "gamma_phi_error": r.gamma_phi_error, "gamma_delta_error": r.gamma_delta_error}
                pt.update(experiment_point_checks(r.gamma_phi, r.gamma_delta, r.gamma_phi_error,
                                                  r.gamma_delta_error, reg.c_tilde))
                pts.append(pt)
            d["experiment_points"] = pts
        out.append(d)
    path = write_output(Path(cfg["out_dir"]), "regions.json", _json(out), "regions", cfg)
    return {"files": [str(path)], "deltas": [
        {"delta": d["delta"], "distinct_theory_points": d["distinct_theory_points"],
         "lw_encloses_attainable": d["lw_encloses_attainable"]} for d in out]}


def cmd_walk(cfg: dict) -> dict:
    """Compile a walk spec and compare its port POVM with the Bell measurement."""
    spec = bell_walk_spec() if cfg["spec"] is None else WalkSpec.load(cfg["spec"])
    res = walk_to_povm(spec, [tuple(p) for p in cfg["readout"]])
    report = {
        "spec": spec.to_dict(),
        "unitary": complex_to_json(res.unitary),
        "port_labels": [list(p) for p in res.port_labels],
        "port_povm": [complex_to_json(e) for e in res.elements],
        "residual_norm": res.residual_norm,
        "deterministic": res.deterministic,
        "bell_equivalent": res.bell_permutation is not None,
        "bell_permutation": None if res.bell_permutation is None else list(res.bell_permutation),
        "bell_deviation": res.bell_deviation,
    }
    path = write_output(Path(cfg["out_dir"]), "walk.json", _json(report), "walk", cfg)
    return {"files": [str(path)], "bell_equivalent": report["bell_equivalent"],
            "bell_permutation": report["bell_permutation"], "residual_norm": res.residual_norm}


def cmd_optimize(cfg: dict) -> dict:
    """Optimise a two-copy POVM, or evaluate a stored one."""
    p = ParamPoint(cfg["phi"], cfg["delta"])
    if cfg["reference"] or cfg["povm"] is not None:
        povm = load_reference_povm() if cfg["reference"] else load_povm(cfg["povm"])
        # printed matrices carry 1e-4 rounding, so structure is judged at 1e-3
        tol = 1e-3 if cfg["reference"] else 1e-8
        value = objective(povm, p)
        report = {"objective": value, "povm": povm_to_dict(povm), "analysis": analyze_povm(povm, tol).to_dict()}
    else:
        tr = optimize_povm(p, cfg["k_outcomes"], cfg["restarts"], cfg["seed"], cfg["rank"],
                           cfg["max_iter"], workers=cfg["threads"])
        value = tr.final_objective
        report = {"objective": value, "trace": tr.to_dict(), "povm": povm_to_dict(tr.final_povm),
                  "analysis": analyze_povm(tr.final_povm).to_dict()}
    report["bell_objective"] = bell_merit_analytic(p) if p.delta > 0 else None
    path = write_output(Path(cfg["out_dir"]), "optimize.json", _json(report), "optimize", cfg)
    a = report["analysis"]
    return {"files": [str(path)], "objective": value, "ranks": a["ranks"],
            "projective": a["projective"], "all_overlaps_nonzero": a["all_overlaps_nonzero"]}


def cmd_calibrate(cfg: dict) -> dict:
    """Bell-port probabilities for two pure qubits over a phase grid."""
    g1 = np.linspace(0, TWO_PI, cfg["n1"], endpoint=False)
    g2 = np.linspace(0, TWO_PI, cfg["n2"], endpoint=False)
    rows = [(a, b) + calibration_probs(a, b) for a in g1 for b in g2]
    content = _csv(("phi1", "phi2", "p1", "p2", "p3", "p4"), rows)
    path = write_output(Path(cfg["out_dir"]), "calibration.csv", content, "calibrate", cfg)
    return {"files": [str(path)], "points": len(rows)}


COMMANDS = {
    "sweep-merit": cmd_sweep_merit,
    "experiment": cmd_experiment,
    "regions": cmd_regions,
    "walk": cmd_walk,
    "optimize": cmd_optimize,
    "calibrate": cmd_calibrate,
}


# ------------------------------------------------------------------- parser

def _float_list(s: str):
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a subcommand from resetting flags given before it
    sup = argparse.SUPPRESS
    common.add_argument("--seed", type=int, default=sup, help="root seed (default 0)")
    common.add_argument("--out-dir", dest="out_dir", default=sup, help="output directory (default ./out)")
    common.add_argument("--config", default=sup, help="JSON config file")
    common.add_argument("--threads", type=int, default=sup, help="worker threads (default 1)")

    ap = argparse.ArgumentParser(prog="phasediff", description=__doc__.splitlines()[0], parents=[common])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep-merit", parents=[common], help="figure of merit over a (phi, delta) grid")
    s.add_argument("--phi", type=_float_list, help="comma-separated phi values")
    s.add_argument("--delta", type=_float_list, help="comma-separated delta values")

    s = sub.add_parser("experiment", parents=[common], help="simulated Bell-measurement experiment")
    s.add_argument("--nu", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--resamples", type=int)
    s.add_argument("--encoding", choices=("analytic", "finite_sample"))
    s.add_argument("--phase-samples", dest="phase_samples", type=int)

    s = sub.add_parser("regions", parents=[common], help="trade-off regions with theory points")
    s.add_argument("--deltas", type=_float_list)
    s.add_argument("--experiment", action="store_true", default=None, help="add simulated points")
    s.add_argument("--runs", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--nu", type=int)

    s = sub.add_parser("walk", parents=[common], help="compile a quantum-walk Bell measurement")
    s.add_argument("--spec", help="walk spec JSON (default: built-in three-step walk)")
    s.add_argument("--dump-spec", dest="dump_spec", help="write the built-in spec to this path and exit")

    s = sub.add_parser("optimize", parents=[common], help="optimise a two-copy POVM")
    s.add_argument("--phi", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--k-outcomes", dest="k_outcomes", type=int)
    s.add_argument("--rank", type=int)
    s.add_argument("--restarts", type=int)
    s.add_argument("--povm", help="evaluate this POVM JSON instead of optimising")
    s.add_argument("--reference", action="store_true", default=None,
                   help="evaluate the bundled four-decimal reference POVM")

    s = sub.add_parser("calibrate", parents=[common], help="pure-state Bell-port probability surface")
    s.add_argument("--n1", type=int)
    s.add_argument("--n2", type=int)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "dump_spec")}
    try:
        if getattr(args, "dump_spec", None):
            bell_walk_spec().dump(args.dump_spec)
            print(args.dump_spec)
            return 0
        file_cfg, text = load_config(getattr(args, "config", None))
        cfg = resolve(args.command, file_cfg, text, overrides)
        result = COMMANDS[args.command](cfg)
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
