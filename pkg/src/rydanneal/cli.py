"""``rydanneal`` command-line front end.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure. Errors
are reported as a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from importlib import resources
from pathlib import Path

import jsonschema

from . import __version__
from .analysis import (DegenerateFitError, DegenerateGroundStateError, fidelity_report,
                       gap_scaling_fit, scan_gap)
from .dressing import DressingError, TailModel, j_at_distance, sweep
from .evolve import IntegrationError, IntegratorConfig, NoiseModel, run_anneal
from .hamiltonian import AnnealSpec, Schedule, ScheduleError
from .ising import ProblemError, benchmark_chain, problem_from_json, qubo_to_ising, IsingProblem

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
MODES = ("dressing-sweep", "anneal", "gap-scan", "benchmark-suite")

DEFAULTS = {
    "seed": 0,
    "schedule": "linear",
    "ramp_bias": True,
    "method": "auto",
    "n_traj": 10000,
    "confidence": 0.99,
    "integrator": {"rel_tol": 1e-8, "abs_tol": 1e-10},
    "gap_scan": {"grid_points": 201},
}
# an omitted noise block means noiseless; a given one is completed from these
NOISE_DEFAULTS = {"gamma_max_khz": 0.1, "time_profile": "schedule", "readout_split": 0.4375}
SUITE_DEFAULTS = {"n_values": [2, 3, 4], "t_per_qubit_us": 17.5}
CHAIN_DEFAULTS = {"ising_coupling_scale": 1.0}
# fields that stay integers when normalising
_INT_KEYS = {"seed", "n", "n_traj", "grid_points", "num", "n_values", "max_steps"}
# fields that never change results
_NON_SEMANTIC = {"threads"}


class ConfigError(ValueError):
    def __init__(self, message, pointer=""):
        super().__init__(message)
        self.pointer = pointer


def load_schema():
    return json.loads(resources.files("rydanneal").joinpath("schema/config.schema.json").read_text())


def load_preset(name):
    res = resources.files("rydanneal").joinpath(f"presets/{name}.json")
    if not res.is_file():
        raise ConfigError(f"unknown preset '{name}'", "")
    return json.loads(res.read_text())


def _pointer(path):
    return "".join(f"/{p}" for p in path)


def validate(cfg):
    v = jsonschema.Draft202012Validator(load_schema())
    errs = sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if not errs:
        return
    e = errs[0]
    ptr = _pointer(e.absolute_path)
    if e.validator == "additionalProperties" and isinstance(e.instance, dict):
        allowed = e.schema.get("properties", {})
        extra = sorted(k for k in e.instance if k not in allowed)
        if extra:
            hint = ""
            fits = [extra[0] + suf for suf in ("_khz", "_mhz", "_us", "_um") if extra[0] + suf in allowed]
            if fits:
                hint = f" (dimensional keys need a unit suffix; did you mean '{fits[0]}'?)"
            raise ConfigError(f"unexpected key '{extra[0]}'{hint}", f"{ptr}/{extra[0]}")
    raise ConfigError(e.message, ptr)


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(base[k], v) if isinstance(v, dict) and isinstance(base.get(k), dict) else v
    return out


def _floatify(x, key=None):
    if isinstance(x, dict):
        return {k: _floatify(v, k) for k, v in x.items()}
    if isinstance(x, list):
        return [_floatify(v, key) for v in x]
    if isinstance(x, int) and not isinstance(x, bool) and key not in _INT_KEYS:
        return float(x)
    return x


def normalize(cfg, base_dir=Path(".")):
    """Fill defaults, inline referenced files and unify number types."""
    cfg = _merge(DEFAULTS, cfg)
    cfg["noise"] = _merge(NOISE_DEFAULTS, cfg["noise"]) if "noise" in cfg else {
        **NOISE_DEFAULTS, "gamma_max_khz": 0.0}
    if "problem_file" in cfg:
        path = Path(cfg.pop("problem_file"))
        if not path.is_absolute():
            path = base_dir / path
        if not path.is_file():
            raise ConfigError(f"problem file not found: {path}", "/problem_file")
        cfg["problem"] = json.loads(path.read_text())
    if "benchmark_chain" in cfg:
        cfg["benchmark_chain"] = _merge(CHAIN_DEFAULTS, cfg["benchmark_chain"])
    if cfg.get("mode") == "benchmark-suite":
        cfg["suite"] = _merge(SUITE_DEFAULTS, cfg.get("suite", {}))
    return _floatify(cfg)


def config_hash(cfg):
    sem = {k: v for k, v in cfg.items() if k not in _NON_SEMANTIC}
    blob = json.dumps(sem, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()


# -- building objects from a normalised config --------------------------------


def _chain_coupling(ch):
    if "dressing" in ch:
        d = ch["dressing"]
        tail = TailModel(d.get("regime", "vdw"), d["reference_distance_um"], d["reference_coupling_mhz"])
        return abs(j_at_distance(tail, d["r_um"])) * 1e3
    if "coupling_khz" not in ch:
        raise ConfigError("benchmark_chain needs coupling_khz or dressing", "/benchmark_chain")
    return ch["coupling_khz"]


def _problem(cfg, n=None):
    if "problem" in cfg and "benchmark_chain" in cfg:
        raise ConfigError("give either problem/problem_file or benchmark_chain", "/problem")
    if "problem" in cfg:
        p = problem_from_json(cfg["problem"])
        return p if isinstance(p, IsingProblem) else qubo_to_ising(p)
    if "benchmark_chain" in cfg:
        ch = cfg["benchmark_chain"]
        n = ch.get("n") if n is None else n
        if n is None:
            raise ConfigError("benchmark_chain.n is required", "/benchmark_chain")
        kw = {"ising_coupling_scale": ch["ising_coupling_scale"]}
        if "delta_e_khz" in ch:
            kw["delta_e_khz"] = ch["delta_e_khz"]
        else:
            kw["delta_e_total_khz"] = ch.get("delta_e_total_khz", 118.5)
        return benchmark_chain(n, _chain_coupling(ch), **kw)
    raise ConfigError("no problem given (problem, problem_file or benchmark_chain)", "")


def _require(cfg, key):
    if key not in cfg:
        raise ConfigError(f"missing required key '{key}' for mode {cfg['mode']}", f"/{key}")
    return cfg[key]


def _spec(cfg, problem, t_total=None):
    T = t_total if t_total is not None else _require(cfg, "t_total_us")
    shape = cfg["schedule"]
    sched = Schedule(T) if shape == "linear" else Schedule(T, shape)
    return AnnealSpec(problem, _require(cfg, "b_x_khz"), sched, NoiseModel.from_json(cfg["noise"]),
                      cfg["ramp_bias"])


def _integrator(cfg):
    i = cfg["integrator"]
    return IntegratorConfig(i["rel_tol"], i["abs_tol"], i.get("max_step_us", math.inf),
                            i.get("max_steps", IntegratorConfig.max_steps))


# -- modes -------------------------------------------------------------------


def _mode_anneal(cfg, threads, plot_data):
    spec = _spec(cfg, _problem(cfg))
    res = run_anneal(spec, spec.noise, _integrator(cfg), cfg["method"], cfg["n_traj"], cfg["seed"],
                     threads)
    out = res.to_json()
    closed_dist = None
    if not spec.noise.is_off:
        closed_dist = run_anneal(spec, NoiseModel(0.0), _integrator(cfg), "closed").distribution
    out["fidelity"] = fidelity_report(res.distribution, spec.problem, cfg["confidence"],
                                      closed_dist if closed_dist is not None else res.distribution
                                      ).to_json()
    files = {"results.json": _json_bytes(out)}
    if plot_data:
        scan = scan_gap(spec, cfg["gap_scan"]["grid_points"])
        files["gaps.csv"] = _gap_csv([(None, spec, scan)], plot_data)
    return files


def _mode_gap_scan(cfg, threads, plot_data):
    spec = _spec(cfg, _problem(cfg))
    scan = scan_gap(spec, cfg["gap_scan"]["grid_points"])
    return {"results.json": _json_bytes({"spec": spec.to_json(), "gap_scan": scan.to_json()}),
            "gaps.csv": _gap_csv([(None, spec, scan)], plot_data)}


def _mode_suite(cfg, threads, plot_data):
    suite = cfg["suite"]
    cfg_i = _integrator(cfg)
    rows, scans = [], []
    for n in suite["n_values"]:
        spec = _spec(cfg, _problem(cfg, n), suite["t_per_qubit_us"] * n)
        res = run_anneal(spec, spec.noise, cfg_i, cfg["method"], cfg["n_traj"], cfg["seed"], threads)
        closed = run_anneal(spec, NoiseModel(0.0), cfg_i, "closed")
        rep = fidelity_report(res.distribution, spec.problem, cfg["confidence"], closed.distribution)
        scan = scan_gap(spec, cfg["gap_scan"]["grid_points"])
        scans.append((n, spec, scan))
        rows.append({"n": n, "t_total_us": spec.total_time, "ground_state": rep.ground_state,
                     "success_probability": rep.success_probability,
                     "fidelity_closed": rep.fidelity_closed, "leaked_mass": res.leaked_mass,
                     "trials_to_confidence": rep.to_json()["trials_to_confidence"],
                     "min_gap_khz": scan.min_gap, "min_gap_time_us": scan.min_gap_time})
    out = {"table": rows, "method": cfg["method"], "noise": cfg["noise"]}
    if len(rows) >= 3:
        by_n = {n: spec for n, spec, _ in scans}
        try:
            out["gap_fit"] = gap_scaling_fit(lambda n: by_n[n], list(by_n),
                                             cfg["gap_scan"]["grid_points"]).to_json()
        except DegenerateFitError as exc:
            out["gap_fit"] = {"error": str(exc)}
    return {"results.json": _json_bytes(out), "gaps.csv": _gap_csv(scans, plot_data)}


def _mode_sweep(cfg, threads, plot_data):
    grid = _require(cfg, "dressing_grid")
    rows = sweep(grid)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    from .dressing import SWEEP_COLUMNS

    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([repr(float(x)) for x in row])
    finite = [r for r in rows if not math.isnan(r[3])]
    summary = {"points": len(rows), "ambiguous_points": len(rows) - len(finite)}
    if finite:
        best = max(finite, key=lambda r: r[7])
        summary["max_kappa"] = {"omega_mhz": best[0], "delta_mhz": best[1], "vdd_mhz": best[2],
                                "kappa": best[7]}
    return {"results.json": _json_bytes({"dressing_sweep": summary}),
            "sweep.csv": buf.getvalue().encode()}


_MODES = {"anneal": _mode_anneal, "gap-scan": _mode_gap_scan, "benchmark-suite": _mode_suite,
          "dressing-sweep": _mode_sweep}


# -- output ------------------------------------------------------------------


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def _json_bytes(obj):
    return (json.dumps(_finite(obj), indent=2, sort_keys=True, allow_nan=False) + "\n").encode()


def _gap_csv(scans, plot_data):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["n", "time_us", "gap_khz"] + (["e0_khz", "e1_khz", "a", "b"] if plot_data else [])
    w.writerow(cols)
    for n, spec, scan in scans:
        n = spec.n if n is None else n
        for k, t in enumerate(scan.times):
            row = [n, repr(float(t)), repr(float(scan.gaps[k]))]
            if plot_data:
                row += [repr(float(scan.e0[k])), repr(float(scan.e1[k])),
                        repr(float(spec.schedule.a(t))), repr(float(spec.schedule.b(t)))]
            w.writerow(row)
    return buf.getvalue().encode()


def write_atomic(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fail(code, kind, message, pointer=None):
    err = {"error": kind, "exit_code": code, "message": message}
    if pointer is not None:
        err["pointer"] = pointer
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def build_parser():
    ap = argparse.ArgumentParser(prog="rydanneal", description="Rydberg-dressed annealing simulator")
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="experiment configuration (JSON)")
    src.add_argument("--preset", help="bundled configuration, e.g. paper-n2")
    ap.add_argument("--mode", choices=MODES, help="overrides the config's mode")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--threads", type=int, default=None, help="worker threads for trajectories")
    ap.add_argument("--plot-data", action="store_true", help="emit extra columns for plotting")
    return ap


def run(argv=None):
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        if args.config is not None:
            if not args.config.is_file():
                raise ConfigError(f"config file not found: {args.config}")
            try:
                raw = json.loads(args.config.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON: {exc}") from exc
            base = args.config.parent
        else:
            raw = load_preset(args.preset)
            base = Path(".")
        if args.mode:
            raw["mode"] = args.mode
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.threads is not None:
            raw["threads"] = args.threads
        validate(raw)
        if "mode" not in raw:
            raise ConfigError("no mode given (config 'mode' or --mode)", "/mode")
        cfg = normalize(raw, base)
        threads = int(cfg.get("threads", 1))
        files = _MODES[cfg["mode"]](cfg, threads, args.plot_data)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc), exc.pointer)
    except (ProblemError, ScheduleError) as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except (IntegrationError, DressingError, DegenerateGroundStateError, DegenerateFitError,
            ArithmeticError, ValueError, RuntimeError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", f"{type(exc).__name__}: {exc}")
    for name, data in files.items():
        write_atomic(args.out / name, data)
    manifest = {
        "version": __version__,
        "mode": cfg["mode"],
        "config_hash": config_hash(cfg),
        "config": _finite(cfg),
        "outputs": sorted(files),
        "threads": threads,
        "timing": {"wall_clock_s": time.perf_counter() - t0},
    }
    write_atomic(args.out / "manifest.json", _json_bytes(manifest))
    return EXIT_OK


def main():  # pragma: no cover
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
