"""Command-line experiment runner.

Verbs:
    run      train a network bundle (and solve the FEM reference) from a config
    fem      solve the finite-element reference only
    section  sample a fields CSV along a line x = c or y = c
    compare  error tables of two runs against a common reference
    sweep    layer and neuron studies with error tables and per-epoch timing
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from threadpoolctl import threadpool_limits

from . import fem
from . import physics as ph
from .config import ConfigError, ExperimentConfig, load_config, preset_names
from .domain import (CollocationSet, Geometry, MaterialField, Rect, build_geometry1, build_geometry2,
                     evaluation_grid, material_at, sample_collocation)
from .network import FieldNetworkBundle, MlpSpec
from .training import (TrainConfig, TrainingDiverged, TrainLog, material_for_ratio, train_coupled,
                       train_parametric, train_sequential)

log = logging.getLogger("mixedpinn")

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 2, 3
METRIC_FIELDS = ("u_x", "u_y", "sxx", "syy", "sxy", "T", "qx", "qy")
# references whose max magnitude is below this are round-off of an exactly zero field
ZERO_REFERENCE = 1e-12


# -- problem assembly ------------------------------------------------------------

@dataclass
class Problem:
    geometry: Geometry
    material: MaterialField
    collocation: CollocationSet
    grid: np.ndarray


def build_problem(cfg: ExperimentConfig) -> Problem:
    g, m = cfg["geometry"], cfg["material"]
    overrides = {k: v for k, v in m.items() if v is not None}
    name = g["name"]
    if name == "geometry1":
        geo, mat = build_geometry1(g["center"], g["radius"], **overrides)
    elif name == "geometry2":
        r = g["rectangles"]
        rects = [Rect((r[i], r[i + 1]), (r[i + 2], r[i + 3])) for i in range(0, len(r), 4)] or None
        geo, mat = build_geometry2(rects, **overrides)
    else:
        base = dict(E_mat=1.0, E_inc=1.0, k_mat=1.0, k_inc=1.0)
        base.update(overrides)
        geo, mat = Geometry(), MaterialField(**base)
    c = cfg["collocation"]
    coll = sample_collocation(geo, mat, c["interior"], c["n_edge"], c["refine"], c["extra"],
                              c["band"], c["smoothing"])
    _, grid = evaluation_grid(cfg["evaluation"]["grid"])
    return Problem(geo, mat, coll, grid)


def train_config(cfg: ExperimentConfig) -> TrainConfig:
    t = cfg["training"]
    return TrainConfig(optimizer=t["optimizer"], lr=t["lr"], history=t["history"],
                       schedule=t["schedule"], n_A=t["n_A"], n_T=t["n_T"], n_M=t["n_M"],
                       start=t["start"], seed=cfg["run"]["seed"], log_every=t["log_every"],
                       loss_threshold=t["loss_threshold"],
                       allow_sequential_lbfgs=t["allow_sequential_lbfgs"], jitter=t["jitter"])


def physics_options(cfg: ExperimentConfig) -> ph.PhysicsOptions:
    p = cfg["physics"]
    return ph.PhysicsOptions(thermal_energy=p["thermal_energy"], reduction=p["reduction"],
                             one_way_coupling=p["one_way_coupling"])


def make_bundle(cfg: ExperimentConfig, layers=None, neurons=None, n_inputs=2) -> FieldNetworkBundle:
    n = cfg["network"]
    spec = MlpSpec(n_inputs, layers or n["layers"], neurons or n["neurons"])
    dtype = np.float32 if cfg["run"]["dtype"] == "float32" else np.float64
    return FieldNetworkBundle(spec, hard_bc=n["hard_bc"], seed=cfg["run"]["seed"], dtype=dtype)


def material_inputs(geo: Geometry, mat: MaterialField, points: np.ndarray) -> np.ndarray:
    s = material_at(geo, mat, points[:, 0], points[:, 1])
    return np.column_stack([s.E, s.k])


def fem_reference(cfg: ExperimentConfig, geo: Geometry, mat: MaterialField) -> fem.FemSolution:
    f = cfg["fem"]
    return fem.solve(geo, mat, f["n"], f["sampling"])


def field_metrics(pred: dict, ref: dict) -> dict:
    """avg/max relative error per field; fields with a (numerically) zero reference report None."""
    out = {}
    for f in METRIC_FIELDS:
        if f not in pred or f not in ref:
            continue
        if np.max(np.abs(ref[f])) <= ZERO_REFERENCE:
            out[f] = {"avg_rel_pct": None, "max_rel_pct": None}
            continue
        m = fem.error_metrics({f: pred[f]}, {f: ref[f]})[f]
        out[f] = {"avg_rel_pct": m["avg_rel_pct"], "max_rel_pct": m["max_rel_pct"]}
    return out


def _train(cfg: ExperimentConfig, bundle: FieldNetworkBundle, coll: CollocationSet,
           tlog: TrainLog, ckpt: Path | None) -> None:
    tc = train_config(cfg)
    opts = physics_options(cfg)
    fn = train_sequential if tc.schedule == "sequential" else train_coupled
    fn(bundle, coll, tc, cfg.formulation, options=opts, log=tlog, checkpoint_dir=ckpt)


def _timing(tlog: TrainLog) -> dict:
    phases = sorted({r["phase"] for r in tlog})
    return {p: tlog.mean_seconds(p) for p in phases}


# -- verbs -------------------------------------------------------------------------

def cmd_run(cfg: ExperimentConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.cfg").write_text(cfg.resolved_text())
    if cfg["parametric"]["enabled"]:
        return _run_parametric(cfg, out)
    prob = build_problem(cfg)
    ref = None
    if cfg["fem"]["enabled"]:
        sol = fem_reference(cfg, prob.geometry, prob.material)
        ref = sol.interpolate(prob.grid)
        fem.write_fields_csv(out / "fem_reference.csv", prob.grid, ref)
    bundle = make_bundle(cfg)
    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    tlog = TrainLog(out / "loss_history.csv")
    status = EXIT_OK
    t0 = time.perf_counter()
    try:
        _train(cfg, bundle, prob.collocation, tlog, ckpt)
    except TrainingDiverged as exc:
        log.error("training diverged: %s", exc)
        status = EXIT_DIVERGED
    finally:
        tlog.close()
    wall = time.perf_counter() - t0
    bundle.save(ckpt / "final.txt")
    pred = bundle.evaluate(prob.grid)
    fem.write_fields_csv(out / "pinn_fields.csv", prob.grid, {f: pred[f] for f in fem.OUTPUT_FIELDS})
    report = {"status": tlog.status, "message": tlog.message, "epochs": len(tlog),
              "formulation": cfg.formulation, "seed": cfg["run"]["seed"],
              "final_loss": tlog.records[-1] if tlog.records else None}
    if report["final_loss"] is not None:
        report["final_loss"] = {k: v for k, v in report["final_loss"].items() if k != "seconds"}
    if ref is not None:
        report["metrics"] = field_metrics(pred, ref)
    _write_json(out / "metrics.json", report)
    _write_json(out / "timing.json", {"wall_seconds": wall, "mean_epoch_seconds": _timing(tlog)})
    _print_metrics(report.get("metrics"))
    return status


def _run_parametric(cfg: ExperimentConfig, out: Path) -> int:
    p = cfg["parametric"]
    prob = build_problem(cfg)
    coll = prob.collocation
    inner = coll.slices["interior"]
    refs = {}
    for r in p["ratios"]:
        mat_r = material_for_ratio(r, prob.material)
        sol = fem_reference(cfg, prob.geometry, mat_r)
        refs[r] = sol.interpolate(coll.points[inner])
    bundle = make_bundle(cfg, n_inputs=4)
    tlog = TrainLog(out / "loss_history.csv")
    status = EXIT_OK
    t0 = time.perf_counter()
    try:
        train_parametric(bundle, coll, p["ratios"], refs, p["w"], train_config(cfg), prob.material,
                         p["epochs_per_ratio"], options=physics_options(cfg), log=tlog)
    except TrainingDiverged as exc:
        log.error("training diverged: %s", exc)
        status = EXIT_DIVERGED
    finally:
        tlog.close()
    wall = time.perf_counter() - t0
    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    bundle.save(ckpt / "final.txt")
    q = p["query_ratio"]
    mat_q = material_for_ratio(q, prob.material)
    ref = fem_reference(cfg, prob.geometry, mat_q).interpolate(prob.grid)
    fem.write_fields_csv(out / "fem_reference.csv", prob.grid, ref)
    pred = bundle.evaluate(prob.grid, material_inputs(prob.geometry, mat_q, prob.grid).astype(bundle.theta.dtype))
    fem.write_fields_csv(out / "pinn_fields.csv", prob.grid, {f: pred[f] for f in fem.OUTPUT_FIELDS})
    report = {"status": tlog.status, "message": tlog.message, "epochs": len(tlog),
              "formulation": "mixed", "seed": cfg["run"]["seed"], "w": p["w"],
              "query_ratio": q, "metrics": field_metrics(pred, ref)}
    _write_json(out / "metrics.json", report)
    _write_json(out / "timing.json", {"wall_seconds": wall, "mean_epoch_seconds": _timing(tlog)})
    _print_metrics(report["metrics"])
    return status


def cmd_fem(cfg: ExperimentConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.cfg").write_text(cfg.resolved_text())
    prob = build_problem(cfg)
    sol = fem_reference(cfg, prob.geometry, prob.material)
    fem.write_fields_csv(out / "fem_reference.csv", prob.grid, sol.interpolate(prob.grid))
    sol.write_csv(out / "fem_nodes.csv")
    sol.write_vtk(out / "fem_fields.vtk")
    q_in, q_out = sol.heat_balance()
    report = {"n": cfg["fem"]["n"], "heat_in": q_in, "heat_out": q_out,
              "heat_balance_rel": abs(q_in - q_out) / abs(q_in)}
    sizes = cfg["fem"]["convergence"]
    if sizes:
        rows = fem.convergence_study(prob.geometry, prob.material, sizes)
        report["convergence"] = rows
        _write_rows_csv(out / "convergence.csv", rows)
        for row in rows:
            print(f"{row['coarse']:>5} -> {row['fine']:<5} " + " ".join(
                f"{f}={row[f]:.3e}" for f in ("T", "u_x", "u_y", "sxx", "qx")))
    _write_json(out / "fem_report.json", report)
    print(f"heat in {q_in:.12g}  heat out {q_out:.12g}")
    return EXIT_OK


def _grid_from_points(points: np.ndarray):
    xs, ys = np.unique(points[:, 0]), np.unique(points[:, 1])
    if xs.size * ys.size != points.shape[0]:
        raise ValueError("fields file is not sampled on a regular grid")
    order = np.lexsort((points[:, 0], points[:, 1]))   # y-major, x fastest
    return xs, ys, order


def cmd_section(fields_path: Path, axis: str, position: float, out: Path) -> int:
    if not 0.0 <= position <= 1.0:
        raise ValueError(f"section position {position} lies outside [0, 1]")
    points, values = fem.read_fields_csv(fields_path)
    xs, ys, order = _grid_from_points(points)
    along = ys if axis == "x" else xs
    cut = (np.column_stack([np.full(along.size, position), along]) if axis == "x"
           else np.column_stack([along, np.full(along.size, position)]))
    sampled = {}
    for f, v in values.items():
        grid = v[order].reshape(ys.size, xs.size)
        interp = RegularGridInterpolator((ys, xs), grid)
        sampled[f] = interp(cut[:, ::-1])
    coord = "y" if axis == "x" else "x"
    names = [coord] + list(sampled)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        fh.write(f"# section {axis} = {position!r}\n")
        fh.write(fem.csv_header(names) + "\n")
        np.savetxt(fh, np.column_stack([along] + [sampled[f] for f in sampled]), fmt="%.17g", delimiter=",")
    return EXIT_OK


def cmd_compare(run_a: Path, run_b: Path, reference: Path | None, out: Path) -> int:
    reference = reference or run_a / "fem_reference.csv"
    pts_r, ref = fem.read_fields_csv(reference)
    reports = {}
    out.mkdir(parents=True, exist_ok=True)
    for label, run in (("a", run_a), ("b", run_b)):
        pts, pred = fem.read_fields_csv(run / "pinn_fields.csv")
        if pts.shape != pts_r.shape or not np.array_equal(pts, pts_r):
            raise ValueError(f"grid mismatch between {run} and the reference {reference}")
        reports[label] = {"run": str(run), "metrics": field_metrics(pred, ref)}
        diff = {f: pred[f] - ref[f] for f in ref if f in pred}
        fem.write_fields_csv(out / f"difference_{label}.csv", pts, diff)
    _write_json(out / "comparison.json", {"reference": str(reference), **reports})
    print(f"{'field':<6} {'avg% a':>10} {'avg% b':>10} {'max% a':>10} {'max% b':>10}")
    for f in METRIC_FIELDS:
        if f not in reports["a"]["metrics"]:
            continue
        a, b = reports["a"]["metrics"][f], reports["b"]["metrics"][f]
        print(f"{f:<6} {_pct(a['avg_rel_pct']):>10} {_pct(b['avg_rel_pct']):>10} "
              f"{_pct(a['max_rel_pct']):>10} {_pct(b['max_rel_pct']):>10}")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.cfg").write_text(cfg.resolved_text())
    s = cfg["sweep"]
    prob = build_problem(cfg)
    ref = fem_reference(cfg, prob.geometry, prob.material).interpolate(prob.grid)
    fem.write_fields_csv(out / "fem_reference.csv", prob.grid, ref)
    cases = [("layers", n, s["fixed_neurons"]) for n in s["layers"]]
    cases += [("neurons", s["fixed_layers"], n) for n in s["neurons"]]
    rows, timing = [], []
    status = EXIT_OK
    for study, layers, neurons in cases:
        bundle = make_bundle(cfg, layers, neurons)
        tlog = TrainLog()
        try:
            _train(cfg, bundle, prob.collocation, tlog, None)
        except TrainingDiverged as exc:
            log.error("%s sweep L=%d N=%d diverged: %s", study, layers, neurons, exc)
            status = EXIT_DIVERGED
        pred = bundle.evaluate(prob.grid)
        for f, m in field_metrics(pred, ref).items():
            rows.append({"study": study, "layers": layers, "neurons": neurons, "field": f, **m})
        timing.append({"study": study, "layers": layers, "neurons": neurons,
                       "parameters": bundle.size, "epochs": len(tlog),
                       "mean_epoch_seconds": float(np.mean(tlog.column("seconds"))) if len(tlog) else 0.0})
        log.info("%s L=%d N=%d done (%d epochs)", study, layers, neurons, len(tlog))
    _write_rows_csv(out / "sweep_errors.csv", rows)
    _write_rows_csv(out / "sweep_timing.csv", timing)
    for study in ("layers", "neurons"):
        print(f"== {study} study: max / avg relative error [%] ==")
        for stat in ("max_rel_pct", "avg_rel_pct"):
            print(f"-- {stat}")
            print(f"{'L':>3} {'N':>4} " + " ".join(f"{f:>9}" for f in ("u_x", "u_y", "T", "sxx", "qx")))
            for _, layers, neurons in (c for c in cases if c[0] == study):
                vals = {r["field"]: r[stat] for r in rows
                        if r["study"] == study and r["layers"] == layers and r["neurons"] == neurons}
                print(f"{layers:>3} {neurons:>4} " + " ".join(f"{_pct(vals.get(f)):>9}"
                                                          for f in ("u_x", "u_y", "T", "sxx", "qx")))
    print("== per-epoch time ==")
    for t in timing:
        print(f"{t['study']:<8} L={t['layers']:<2} N={t['neurons']:<3} {t['mean_epoch_seconds']:.4f} s")
    return status


# -- helpers ---------------------------------------------------------------------

def _pct(v) -> str:
    return "n/a" if v is None else f"{v:.3f}"


def _print_metrics(metrics) -> None:
    if not metrics:
        return
    for f, m in metrics.items():
        print(f"{f:<5} avg {_pct(m['avg_rel_pct'])} %  max {_pct(m['max_rel_pct'])} %")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


def _write_rows_csv(path: Path, rows: list) -> None:
    if not rows:
        path.write_text("")
        return
    keys = list(rows[0])
    for r in rows[1:]:
        keys += [k for k in r if k not in keys]
    lines = [",".join(keys)]
    for r in rows:
        lines.append(",".join("" if r.get(k) is None else (repr(r[k]) if isinstance(r[k], float) else str(r[k]))
                              for k in keys))
    path.write_text("\n".join(lines) + "\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help="output directory (or file for 'section')")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--threads", type=int, help="limit BLAS threads")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mixedpinn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, help_ in (("run", "train and evaluate"), ("fem", "finite-element reference only"),
                        ("sweep", "layer and neuron studies")):
        sp = sub.add_parser(verb, parents=[common], help=help_)
        sp.add_argument("--config", required=True,
                        help=f"config file or preset name ({', '.join(preset_names())})")
    sp = sub.add_parser("section", parents=[common], help="sample a fields CSV along a line")
    sp.add_argument("--config", help="unused; accepted for uniformity")
    sp.add_argument("--fields", type=Path, required=True)
    sp.add_argument("--axis", choices=("x", "y"), required=True, help="cut at x = position or y = position")
    sp.add_argument("--position", type=float, required=True)
    sp = sub.add_parser("compare", parents=[common], help="compare two runs against a reference")
    sp.add_argument("--config", help="unused; accepted for uniformity")
    sp.add_argument("--run-a", type=Path, required=True)
    sp.add_argument("--run-b", type=Path, required=True)
    sp.add_argument("--reference", type=Path)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    limits = threadpool_limits(limits=args.threads) if args.threads else nullcontext()
    try:
        with limits:
            if args.verb in ("run", "fem", "sweep"):
                overrides = list(args.set)
                if args.seed is not None:
                    overrides.append(f"run.seed={args.seed}")
                cfg = load_config(args.config, overrides)
                out = args.out or Path("runs") / Path(args.config).stem
                return {"run": cmd_run, "fem": cmd_fem, "sweep": cmd_sweep}[args.verb](cfg, out)
            if args.verb == "section":
                out = args.out or args.fields.with_name(f"section_{args.axis}{args.position:g}.csv")
                return cmd_section(args.fields, args.axis, args.position, out)
            out = args.out or Path("comparison")
            return cmd_compare(args.run_a, args.run_b, args.reference, out)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"mixedpinn {args.verb}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
