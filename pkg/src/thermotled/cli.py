"""Command-line interface: ``thermotled run|check|verify|bench``.

Exit codes: 0 success, 1 config or validation error, 2 numerical
instability, 3 verification failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import engine, io, verify
from .engine import ConfigError, InstabilityError
from .materials import MaterialError
from .mesh import MeshError, box_mesh, critical_timestep, precompute

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_UNSTABLE = 2
EXIT_VERIFY = 3

log = logging.getLogger("thermotled")


def _err(msg: str) -> None:
    print(f"thermotled: error: {msg}", file=sys.stderr)


def _emit(data: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(data, indent=2, sort_keys=True))
        return
    for key, value in data.items():
        print(f"{key}: {value}")


def _load(args):
    overrides = list(args.override or [])
    if args.workers is not None:
        overrides.append(f"sim.workers={args.workers}")
    bundle = io.read_config(args.config, overrides)
    mesh = io.load_problem_mesh(bundle)
    return bundle, mesh, io.build_problem(bundle, mesh)


def _restart_state(path) -> engine.SimulationState:
    try:
        return engine.load_checkpoint(path)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"cannot restart from {path}: {exc}") from exc


def cmd_run(args) -> int:
    bundle, mesh, problem = _load(args)
    cfg = bundle.sim
    sim = engine.Simulation(problem, cfg)
    out = Path(args.out)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    sinks = [io.SnapshotWriter(out / "snapshots", mesh, cfg.n_steps)]
    if cfg.probe_nodes:
        sinks.append(io.ProbeWriter(out / "probes.csv", cfg.probe_nodes))
    sinks.append(io.AblationWriter(out / "ablation.csv", mesh, cfg.ablation_thresholds, cfg.solves_mechanics))
    start = _restart_state(args.restart) if args.restart else None
    if start is not None and start.temperatures.shape != (mesh.n_nodes,):
        raise ConfigError(f"{args.restart}: checkpoint has {start.temperatures.size} nodes, mesh has {mesh.n_nodes}")
    summary = sim.run(start, sinks=sinks)
    if args.checkpoint:
        engine.save_checkpoint(args.checkpoint, summary.state)
    data = summary.as_dict()
    (out / "summary.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    if args.json:
        _emit(data, True)
    else:
        print(f"steps: {data['steps']}  time: {data['time']:.6g} s")
        print(f"peak temperature: {data['peak_temperature']:.6f} C")
        for d, name in enumerate("xyz"):
            print(f"u{name} min/max: {data['disp_min'][d]:.6e} / {data['disp_max'][d]:.6e} m")
        print(f"median step time: {data['median_step_time']:.3e} s (IQR {data['step_time_iqr']:.2e})")
        for th, vol in data["ablation_volume"].items():
            print(f"volume >= {th} C: {vol:.6e} m^3")
        for w in data["warnings"]:
            print(f"warning: {w}")
    return EXIT_OK


def cmd_check(args) -> int:
    bundle, mesh, problem = _load(args)
    mat = bundle.material
    pre = precompute(mesh, mat.density, float(mat.thermal.specific_heat_at(mat.thermal.reference_temperature)))
    hg = bundle.sim.hourglass_stiffness if mesh.kind == "H8" else 0.0
    dt_th, dt_mech = critical_timestep(mesh, mat, pre=pre, hourglass_stiffness=hg)
    data = {
        "mesh_kind": mesh.kind,
        "nodes": mesh.n_nodes,
        "elements": mesh.n_elements,
        "dofs": 4 * mesh.n_nodes,
        "volume_m3": float(pre.ref_volume.sum()),
        "dt": bundle.sim.dt,
        "steps": bundle.sim.n_steps,
        "critical_dt_thermal": dt_th,
        "critical_dt_mechanical": dt_mech,
        "heat_source_elements": {s.name: int(len(s.elements)) for s in problem.sources.regional},
    }
    # constructing the simulation applies the time-step check
    engine.Simulation(problem, bundle.sim)
    _emit(data, args.json)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.list:
        for name in verify.case_names():
            print(name)
        return EXIT_OK
    names = args.case or None
    try:
        results = verify.run_cases(names, workers=args.workers)
    except KeyError as exc:
        _err(exc.args[0])
        return EXIT_CONFIG
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        verify.write_csv(results, out / "verify.csv")
    if args.json:
        print(json.dumps(
            [
                {
                    "case": r.case,
                    "passed": r.passed,
                    "seconds": r.seconds,
                    "metrics": [
                        {"metric": m.name, "value": m.value, "tolerance": m.tolerance, "pass": m.passed}
                        for m in r.metrics
                    ],
                }
                for r in results
            ],
            indent=2,
        ))
    else:
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.case} ({r.seconds:.2f} s)")
            for m in r.metrics:
                print(f"    {m.name} = {m.value:.3e} (tolerance {m.tolerance:.1e}) {'ok' if m.passed else 'FAIL'}")
    failed = [r.case for r in results if not r.passed]
    if failed:
        _err(f"verification failed: {', '.join(failed)}")
        return EXIT_VERIFY
    return EXIT_OK


def ladder(kind: str, min_elements: int, max_elements: int, points: int, size=(0.04, 0.04, 0.04)):
    """Structured box meshes with element counts spaced geometrically."""
    per_cell = 6 if kind == "T4" else 1
    targets = np.geomspace(min_elements, max_elements, points)
    cells = sorted({max(1, int(round((t / per_cell) ** (1.0 / 3.0)))) for t in targets})
    if len(cells) < points:
        raise MeshError(f"element range too narrow for {points} distinct mesh sizes")
    return [box_mesh(size, (n, n, n), kind) for n in cells]


def cmd_bench(args) -> int:
    bundle = io.read_config(args.config, args.override or [])
    kind = args.mesh_kind.upper()
    size = bundle.mesh.box or (0.04, 0.04, 0.04)
    meshes = ladder(kind, args.min_elements, args.max_elements, args.points, size)
    material = bundle.material
    if kind == "H8":
        log.info("H8 ladder uses hourglass stiffness %g", bundle.sim.hourglass_stiffness)
    rows = engine.bench(
        meshes, material, steps=args.steps, workers=args.workers, repeats=args.repeats
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bench.csv"
    engine.write_bench_csv(rows, path)
    slopes = {mode: engine.scaling_slope(rows, mode) for mode in engine.BENCH_MODES}
    if args.json:
        print(json.dumps({"csv": str(path), "slopes": slopes,
                          "rows": [r.__dict__ for r in rows]}, indent=2))
    else:
        table = engine.rows_by_size(rows)
        modes = list(engine.BENCH_MODES)
        print("elements," + ",".join(modes))
        for n, by_mode in sorted(table.items()):
            print(f"{n}," + ",".join(f"{by_mode[m]:.4e}" for m in modes))
        for mode, slope in slopes.items():
            print(f"log-log slope {mode}: {slope:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermotled", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="config file")
        sp.add_argument("--override", action="append", metavar="K=V",
                        help="override a config value, e.g. sim.coupling=thermal_only (repeatable)")
        sp.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: available cores)")
        sp.add_argument("--json", action="store_true", help="machine-readable output")

    sp = sub.add_parser("run", help="run a simulation")
    common(sp)
    sp.add_argument("--out", default="out", help="output directory")
    sp.add_argument("--checkpoint", help="write the final state to this .npz file")
    sp.add_argument("--restart", help="resume from a checkpoint written by --checkpoint")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("check", help="validate config and mesh without running")
    common(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("verify", help="run the oracle suite")
    sp.add_argument("--case", action="append", help="run only this case (repeatable)")
    sp.add_argument("--list", action="store_true", help="list case names")
    sp.add_argument("--out", default=None, help="write verify.csv here")
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("bench", help="per-step timing over a mesh ladder")
    common(sp)
    sp.add_argument("--out", default="out", help="output directory")
    sp.add_argument("--mesh-kind", choices=("t4", "h8"), default="t4")
    sp.add_argument("--min-elements", type=int, default=1000)
    sp.add_argument("--max-elements", type=int, default=64000)
    sp.add_argument("--points", type=int, default=5)
    sp.add_argument("--steps", type=int, default=20, help="timed steps per measurement")
    sp.add_argument("--repeats", type=int, default=1)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.workers is None:
        args.workers = os.cpu_count() or 1
    if args.workers is not None and args.workers < 1:
        _err("--workers must be at least 1")
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, MeshError, MaterialError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except InstabilityError as exc:
        _err(str(exc))
        return EXIT_UNSTABLE
    except OSError as exc:
        _err(str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
