"""Per-step wall time of the compiled kernels against the numpy fallback.

Runs the three bench modes on a small T4 and H8 mesh ladder with each
available backend and prints median seconds per step plus the speedup.

    python3 benchmarks/compare_backends.py --max-elements 50000 --csv backends.csv
"""
import argparse
import csv
import sys

from thermotled import cli, engine, kernels, presets


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kinds", default="T4,H8", help="comma-separated element kinds")
    ap.add_argument("--min-elements", type=int, default=2000)
    ap.add_argument("--max-elements", type=int, default=50000)
    ap.add_argument("--points", type=int, default=3)
    ap.add_argument("--steps", type=int, default=10)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--csv", help="write one row per kind, size, mode and backend")
    args = ap.parse_args(argv)

    names = kernels.available_backends()
    if "cython" not in names:
        print("compiled kernels not built; only the numpy backend is available", file=sys.stderr)
    material = presets.liver()
    table = []
    for kind in args.kinds.split(","):
        meshes = cli.ladder(kind.strip().upper(), args.min_elements, args.max_elements, args.points)
        for name in names:
            rows = engine.bench(meshes, material, steps=args.steps, repeats=args.repeats,
                                backend=kernels.load_backend(name))
            table += [(r.kind, r.n_elements, r.mode, name, r.median) for r in rows]

    times = {(k, n, m, b): t for k, n, m, b, t in table}
    print(f"{'kind':4} {'elements':>9} {'mode':16} " + " ".join(f"{b:>11}" for b in names) + "  speedup")
    for k, n, m in dict.fromkeys((k, n, m) for k, n, m, _, _ in table):
        cols = [times[(k, n, m, b)] for b in names]
        speed = f"{times[(k, n, m, 'numpy')] / times[(k, n, m, 'cython')]:7.2f}x" if len(names) > 1 else ""
        print(f"{k:4} {n:9d} {m:16} " + " ".join(f"{t * 1e3:9.3f}ms" for t in cols) + f"  {speed}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "elements", "mode", "backend", "median_s"])
            w.writerows((k, n, m, b, "%.6e" % t) for k, n, m, b, t in table)
    return 0


if __name__ == "__main__":
    sys.exit(main())
