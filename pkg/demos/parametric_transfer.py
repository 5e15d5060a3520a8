"""Networks that take the material as input: train over ratios, query outside the range.

Each network sees (x, y, E, k).  Training walks through the stiffness ratios
1, 2, ..., using FEM solutions as data plus the physics loss weighted by w,
and the result is evaluated at a ratio that was never seen.

Run:  python demos/parametric_transfer.py --epochs 200
"""
import argparse
import time

import numpy as np

from mixedpinn import domain as dm
from mixedpinn import fem
from mixedpinn.network import FieldNetworkBundle, MlpSpec
from mixedpinn.training import TrainConfig, material_for_ratio, train_parametric


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=200, help="Adam epochs per ratio")
    ap.add_argument("--ratios", type=int, default=5)
    ap.add_argument("--query", type=float, default=8.0)
    args = ap.parse_args()

    geo, base = dm.build_geometry1()
    coll = dm.sample_collocation(geo, base, 900)
    inner = coll.points[coll.slices["interior"]]
    ratios = [float(r) for r in range(1, args.ratios + 1)]
    refs = {r: fem.solve(geo, material_for_ratio(r, base), 40).interpolate(inner) for r in ratios}

    _, grid = dm.evaluation_grid(51)
    mat_q = material_for_ratio(args.query, base)
    ref_q = fem.solve(geo, mat_q, 40).interpolate(grid)
    s = dm.material_at(geo, mat_q, grid[:, 0], grid[:, 1])
    extra = np.column_stack([s.E, s.k])

    for w in (0.1, 0.0):
        b = FieldNetworkBundle(MlpSpec(4, 2, 20), seed=0)
        t0 = time.perf_counter()
        log = train_parametric(b, coll, ratios, refs, w, TrainConfig(optimizer="adam", lr=1e-3), base,
                               epochs_per_ratio=args.epochs)
        pred = b.evaluate(grid, extra)
        errs = {f: 100 * np.mean(np.abs(pred[f] - ref_q[f])) / np.max(np.abs(ref_q[f]))
                for f in ("u_x", "sxx", "T")}
        label = "data + physics" if w > 0 else "data only     "
        print(f"{label} (w={w:g}): {time.perf_counter() - t0:5.1f} s, "
              f"{log.mean_seconds() * 1e3:.1f} ms/epoch, error at ratio {args.query:g}: "
              + ", ".join(f"{f} {e:.2f}%" for f, e in errs.items()))


if __name__ == "__main__":
    main()
