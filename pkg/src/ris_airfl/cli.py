"""Command-line experiment runner: optimize, sweep, verify, flsim.

Outputs are a CSV (fixed column order, rows sorted) plus a JSON sidecar
with the parsed configuration and full traces. Identical configs and
seeds give byte-identical files; wall-clock timings are only written
with ``--timing``.
"""
import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .channel import calibrate_error_model, sample_channels, sample_estimate
from .config import IMPERFECT, PERFECT, PROFILES, REGIMES, SystemConfig, SystemGeometry, db_to_linear, sample_geometry
from .errors import InfeasibleInstanceError, InvalidInputError
from .metrics import order_devices

SWEEP_AXES = {"none": None, "receive-antennas": "Nr", "nmse": "iota", "gamma-min": "gamma_min", "ris-elements": "M"}
SCENARIOS = {"rician": "rician", "rician-db": "rician", "rayleigh": "rayleigh", "rayleigh-db": "rayleigh"}
SYSTEM_DB_KEYS = {"gamma_min_db": "gamma_min", "p_max_dbm": "p_max", "p_gap_dbm": "p_gap",
                  "p_gap_imperfect_dbm": "p_gap_imperfect", "sigma2_n_dbm": "sigma2_n"}
GEOMETRY_DB_KEYS = {"c0_db": "c0"}
GEOMETRY_KEYS = {f.name for f in fields(SystemGeometry)} - {"device_positions"} | {"area"}
SYSTEM_KEYS = {f.name for f in fields(SystemConfig)}
TOP_KEYS = {"profile", "system", "geometry", "scenario", "regime", "iota", "seeds", "sweep", "out", "workers",
            "flsim", "verify", "compare_naive"}
FLSIM_KEYS = {"rounds", "mode", "ao_iterations", "max_attempts", "task_seed_offset"}
VERIFY_KEYS = {"instances", "samples", "iota", "inject_j_sign_error"}

ROW_COLUMNS = ["axis", "value", "seed", "regime", "iota", "status", "mse", "min_sinr", "min_gap", "iterations",
               "initial_mse", "naive_min_sinr", "message"]
SUMMARY_COLUMNS = ["axis", "value", "regime", "runs", "successes", "mean_mse", "mean_min_sinr", "mean_min_gap",
                   "mean_iterations", "mean_naive_min_sinr"]
FL_COLUMNS = ["seed", "mode", "round", "loss", "aggregation_mse", "centralized_loss"]
OK_STATUSES = ("converged", "max-iterations", "unchanged")


@dataclass
class ExperimentConfig:
    profile: str = "desk"
    system: dict = field(default_factory=dict)
    geometry: dict = field(default_factory=dict)
    scenario: str = "rician"
    regime: str = PERFECT
    iota: float = 0.0
    seeds: list = field(default_factory=lambda: [0])
    sweep_axis: str = "none"
    sweep_values: list = field(default_factory=list)
    out: str = None
    workers: int = 1
    compare_naive: bool = True
    flsim: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    units: dict = field(default_factory=dict)

    def system_config(self, **overrides):
        params = dict(self.system)
        params.update(overrides)
        return PROFILES[self.profile](**params)

    def to_dict(self):
        return asdict(self)


@dataclass
class ResultRow:
    axis: str
    value: float
    seed: int
    regime: str
    iota: float
    status: str
    mse: float = float("nan")
    min_sinr: float = float("nan")
    min_gap: float = float("nan")
    iterations: int = 0
    initial_mse: float = float("nan")
    naive_min_sinr: float = float("nan")
    message: str = ""
    wall_time_ms: float = float("nan")
    trace: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status in OK_STATUSES


def _reject_unknown(d, allowed, where):
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise InvalidInputError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _convert_db(d, table, units):
    out = {}
    for key, val in d.items():
        if key in table:
            out[table[key]] = db_to_linear(val)
            units[key] = val
            units[table[key]] = out[table[key]]
        else:
            out[key] = val
    return out


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a JSON config document (unknown keys are rejected)."""
    if not isinstance(doc, dict):
        raise InvalidInputError("config must be a JSON object")
    _reject_unknown(doc, TOP_KEYS, "config")
    units = {}
    system = dict(doc.get("system", {}))
    _reject_unknown(system, SYSTEM_KEYS | set(SYSTEM_DB_KEYS), "system")
    system = _convert_db(system, SYSTEM_DB_KEYS, units)
    geometry = dict(doc.get("geometry", {}))
    _reject_unknown(geometry, GEOMETRY_KEYS | set(GEOMETRY_DB_KEYS), "geometry")
    geometry = _convert_db(geometry, GEOMETRY_DB_KEYS, units)
    sweep = dict(doc.get("sweep", {"axis": "none"}))
    _reject_unknown(sweep, {"axis", "values"}, "sweep")
    flsim = dict(doc.get("flsim", {}))
    _reject_unknown(flsim, FLSIM_KEYS, "flsim")
    verify = dict(doc.get("verify", {}))
    _reject_unknown(verify, VERIFY_KEYS, "verify")
    cfg = ExperimentConfig(
        profile=doc.get("profile", "desk"), system=system, geometry=geometry,
        scenario=doc.get("scenario", "rician"), regime=doc.get("regime", PERFECT),
        iota=float(doc.get("iota", 0.0)), seeds=list(doc.get("seeds", [0])),
        sweep_axis=sweep.get("axis", "none"), sweep_values=list(sweep.get("values", [])),
        out=doc.get("out"), workers=int(doc.get("workers", 1)), compare_naive=bool(doc.get("compare_naive", True)),
        flsim=flsim, verify=verify, units=units)
    if cfg.sweep_axis == "gamma-min":
        units["sweep_values_db"] = list(cfg.sweep_values)
        cfg.sweep_values = [db_to_linear(x) for x in cfg.sweep_values]
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    if cfg.profile not in PROFILES:
        raise InvalidInputError(f"unknown profile {cfg.profile!r}; choose from {sorted(PROFILES)}")
    if cfg.scenario not in SCENARIOS:
        raise InvalidInputError(f"unknown scenario {cfg.scenario!r}")
    if cfg.regime not in REGIMES:
        raise InvalidInputError(f"unknown regime {cfg.regime!r}")
    if cfg.sweep_axis not in SWEEP_AXES:
        raise InvalidInputError(f"unknown sweep axis {cfg.sweep_axis!r}; choose from {sorted(SWEEP_AXES)}")
    if cfg.sweep_axis != "none":
        if not cfg.sweep_values:
            raise InvalidInputError("sweep grid must be non-empty")
        if list(cfg.sweep_values) != sorted(cfg.sweep_values):
            raise InvalidInputError("sweep grid must be sorted ascending")
    if not cfg.seeds or len(set(cfg.seeds)) != len(cfg.seeds):
        raise InvalidInputError("seeds must be a non-empty list of distinct integers")
    cfg.seeds = [int(s) for s in cfg.seeds]
    if not 0 <= cfg.iota < 1:
        raise InvalidInputError("iota must be in [0, 1)")
    if cfg.workers < 1:
        raise InvalidInputError("workers must be >= 1")
    cfg.system_config()   # raises on bad system values
    sample_geometry(cfg.system_config().K, 0, SCENARIOS[cfg.scenario], **cfg.geometry)


def load_config(path):
    with open(path) as fh:
        return parse_config(json.load(fh))


# single runs -------------------------------------------------------------------

def _estimate_seed(seed):
    return int(np.random.SeedSequence([int(seed), 1]).generate_state(1)[0])


def _audit(state, source, cfg, regime):
    """Constraint values of a state in the regime's metric, in its SIC order."""
    from .optimizer import constraint_values, make_context
    ctx = make_context(source, cfg, regime)
    order = order_devices(ctx.H(state.v))
    return constraint_values(state.permuted(order), ctx.permuted(order))


def run_single(exp: ExperimentConfig, seed, axis="none", value=float("nan")):
    """One initialization + AO run. Never raises for infeasible instances."""
    from .optimizer import initialize_feasible, run_algorithm
    key = SWEEP_AXES[axis]
    over = {key: (int(value) if key in ("Nr", "M") else value)} if key and key != "iota" else {}
    iota = value if key == "iota" else exp.iota
    row = ResultRow(axis, float(value), int(seed), exp.regime, float(iota), "error")
    t0 = time.perf_counter()
    try:
        cfg = exp.system_config(**over)
        geo = sample_geometry(cfg.K, seed, SCENARIOS[exp.scenario], **exp.geometry)
        truth = sample_channels(geo, cfg, seed)
        est = sample_estimate(truth, calibrate_error_model(truth, iota), _estimate_seed(seed))
        source = truth if exp.regime == PERFECT else est
        if exp.regime == IMPERFECT and exp.compare_naive:
            row.naive_min_sinr = _naive_audit(est, cfg, seed)
        try:
            state0 = initialize_feasible(source, cfg, exp.regime, seed)
        except InfeasibleInstanceError as exc:
            row.status, row.message = "infeasible", str(exc)
            row.trace = {"diagnostic": _jsonable(exc.diagnostic)}
            return row
        state, trace = run_algorithm(state0, source, cfg, exp.regime)
        vals = _audit(state, source, cfg, exp.regime)
        row.status = trace.status
        row.message = trace.failure
        row.mse = float(vals["mse"])
        row.min_sinr = float(np.min(vals["sinr"]))
        row.min_gap = float(np.min(vals["gaps"])) if vals["gaps"].size else float("inf")
        row.iterations = trace.iterations
        row.initial_mse = float(trace.initial_mse)
        row.trace = {"ao": _strip_times(trace.to_dict()), "state": state.to_dict()}
    except Exception as exc:    # reported as an error row, never a partial row
        row.status, row.message = "error", f"{type(exc).__name__}: {exc}"
    finally:
        row.wall_time_ms = 1e3 * (time.perf_counter() - t0)
    return row


def _naive_audit(est, cfg, seed):
    """Min average SINR of the perfect-CSI design run on the estimate."""
    from .optimizer import initialize_feasible, run_algorithm
    try:
        s0 = initialize_feasible(est, cfg, PERFECT, seed)
    except InfeasibleInstanceError:
        return float("nan")
    s, _ = run_algorithm(s0, est, cfg, PERFECT)
    return float(np.min(_audit(s, est, cfg, IMPERFECT)["sinr"]))


def _strip_times(d):
    for rec in d.get("records", []):
        rec.pop("wall_time", None)
    return d


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def _run_job(args):
    return run_single(*args)


def run_grid(exp: ExperimentConfig):
    values = exp.sweep_values if exp.sweep_axis != "none" else [float("nan")]
    jobs = [(exp, s, exp.sweep_axis, v) for v in values for s in exp.seeds]
    if exp.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=exp.workers) as pool:
            rows = list(pool.map(_run_job, jobs))
    else:
        rows = [_run_job(j) for j in jobs]
    rows.sort(key=lambda r: (np.nan_to_num(r.value, nan=-np.inf), r.seed))
    return rows


def summarize(rows):
    out = []
    values = sorted({r.value for r in rows}, key=lambda v: np.nan_to_num(v, nan=-np.inf))
    for v in values:
        grp = [r for r in rows if r.value == v or (np.isnan(v) and np.isnan(r.value))]
        ok = [r for r in grp if r.ok]

        def mean(attr, rs=ok):
            vals = [getattr(r, attr) for r in rs if np.isfinite(getattr(r, attr))]
            return float(np.mean(vals)) if vals else float("nan")
        out.append({"axis": grp[0].axis, "value": v, "regime": grp[0].regime, "runs": len(grp), "successes": len(ok),
                    "mean_mse": mean("mse"), "mean_min_sinr": mean("min_sinr"), "mean_min_gap": mean("min_gap"),
                    "mean_iterations": mean("iterations"), "mean_naive_min_sinr": mean("naive_min_sinr", grp)})
    return out


# output --------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_json(path, doc):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _row_dict(r, timing):
    d = {c: getattr(r, c) for c in ROW_COLUMNS}
    if timing:
        d["wall_time_ms"] = r.wall_time_ms
    return d


def _emit_rows(exp, rows, out, timing, summary=True):
    cols = ROW_COLUMNS + (["wall_time_ms"] if timing else [])
    dicts = [_row_dict(r, timing) for r in rows]
    sidecar = {"config": exp.to_dict(), "linear_system": exp.system_config().to_dict(),
               "rows": dicts, "traces": [{"seed": r.seed, "value": r.value, **r.trace} for r in rows]}
    if summary:
        summ = summarize(rows)
        sidecar["summary"] = summ
    if out:
        out = Path(out)
        write_csv(out, cols, dicts)
        if summary:
            write_csv(out.with_suffix(".summary.csv"), SUMMARY_COLUMNS, summ)
        write_json(out.with_suffix(".json"), sidecar)
    return sidecar


def _print_rows(rows):
    for r in rows:
        where = "" if r.axis == "none" else f" {r.axis}={r.value:g}"
        print(f"seed={r.seed}{where} status={r.status} mse={r.mse:.6g} "
              f"min_sinr={r.min_sinr:.6g} min_gap={r.min_gap:.6g} iters={r.iterations} {r.message}".rstrip())


# subcommands -----------------------------------------------------------------------

def cmd_optimize(exp: ExperimentConfig, timing=False):
    exp.sweep_axis, exp.sweep_values = "none", []
    rows = run_grid(exp)
    _emit_rows(exp, rows, exp.out, timing, summary=False)
    _print_rows(rows)
    return 1 if any(r.status == "error" for r in rows) else 0


def cmd_sweep(exp: ExperimentConfig, timing=False):
    if exp.sweep_axis == "none":
        raise InvalidInputError("sweep needs a sweep axis in the config")
    rows = run_grid(exp)
    side = _emit_rows(exp, rows, exp.out, timing)
    _print_rows(rows)
    for s in side["summary"]:
        print(f"summary {s['axis']}={s['value']:g}: {s['successes']}/{s['runs']} ok, mean mse={s['mean_mse']:.6g}, "
              f"mean min sinr={s['mean_min_sinr']:.6g}")
    return 1 if any(r.status == "error" for r in rows) else 0


def cmd_verify(exp: ExperimentConfig, timing=False):
    from .verify import run_suite, sign_flipped_interference
    opts = exp.verify
    j_fn = sign_flipped_interference if opts.get("inject_j_sign_error") else None
    results = run_suite(seed=exp.seeds[0], iota=float(opts.get("iota", 0.1)),
                        instances=int(opts.get("instances", 3)), n_samples=int(opts.get("samples", 100_000)),
                        j_fn=j_fn)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if exp.out:
        write_json(Path(exp.out).with_suffix(".json"),
                   {"config": exp.to_dict(), "checks": [r.to_dict() for r in results]})
    return 1 if failed else 0


def _fl_job(args):
    from .airflsim import OptimizedProvider, ideal_provider, run_federated
    exp, seed, mode = args
    cfg = exp.system_config()
    opts = exp.flsim
    task_seed = seed + int(opts.get("task_seed_offset", 0))
    if mode == "ideal":
        provider = ideal_provider
    else:
        geo = sample_geometry(cfg.K, seed, SCENARIOS[exp.scenario], **exp.geometry)
        provider = OptimizedProvider(geo, cfg, seed, PERFECT, int(opts.get("ao_iterations", 3)),
                                     int(opts.get("max_attempts", 30)))
    tr = run_federated(task_seed, int(opts.get("rounds", 50)), provider, cfg)
    return seed, mode, tr


def cmd_flsim(exp: ExperimentConfig, timing=False):
    mode = exp.flsim.get("mode", "optimized")
    if mode not in ("ideal", "optimized"):
        raise InvalidInputError(f"unknown flsim mode {mode!r}")
    modes = ["ideal"] if mode == "ideal" else ["ideal", "optimized"]
    jobs = [(exp, s, m) for s in exp.seeds for m in modes]
    if exp.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=exp.workers) as pool:
            results = list(pool.map(_fl_job, jobs))
    else:
        results = [_fl_job(j) for j in jobs]
    rows, traces = [], []
    for seed, m, tr in sorted(results, key=lambda x: (x[0], x[1])):
        for i, (loss, mse) in enumerate(zip(tr.loss, tr.mse)):
            rows.append({"seed": seed, "mode": m, "round": i + 1, "loss": loss, "aggregation_mse": mse,
                         "centralized_loss": tr.centralized_loss})
        traces.append({"seed": seed, "mode": m, "final_loss": tr.loss[-1], "centralized_loss": tr.centralized_loss,
                       "initial_loss": tr.initial_loss, "channel_attempts": tr.channel_attempts})
        print(f"seed={seed} mode={m} rounds={len(tr.loss)} final_loss={tr.loss[-1]:.6g} "
              f"centralized={tr.centralized_loss:.6g}")
    if exp.out:
        write_csv(exp.out, FL_COLUMNS, rows)
        write_json(Path(exp.out).with_suffix(".json"), {"config": exp.to_dict(), "runs": traces})
    return 0


COMMANDS = {"optimize": cmd_optimize, "sweep": cmd_sweep, "verify": cmd_verify, "flsim": cmd_flsim}


def build_parser():
    p = argparse.ArgumentParser(prog="ris-airfl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON experiment config")
        s.add_argument("--out", help="output CSV path (JSON sidecar written next to it)")
        s.add_argument("--seeds", help="comma-separated seed list, overrides the config")
        s.add_argument("--workers", type=int, help="parallel worker processes")
        s.add_argument("--profile", choices=sorted(PROFILES), help="system profile")
        s.add_argument("--timing", action="store_true", help="add wall-clock columns (breaks byte-identity)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        exp = load_config(args.config) if args.config else parse_config({})
        if args.profile:
            exp.profile = args.profile
        if args.seeds:
            exp.seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        if args.workers:
            exp.workers = args.workers
        if args.out:
            exp.out = args.out
        validate_config(exp)
        return COMMANDS[args.command](exp, args.timing)
    except (InvalidInputError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
