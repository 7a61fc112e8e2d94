#!/usr/bin/env python3
"""Six-row ablation ladder on the pinned desk-scale benchmark.

Trains one teacher, then one student per (ladder row, seed), and prints
mean F1/IoU per row under sampled multi-degradation evaluation. With the
default three seeds this is an hours-scale CPU run; use --seeds 31 for a
quick single-seed pass.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from cdtk.benchmark import BenchmarkConfig, build_teacher, run_student
from cdtk.cli import ABLATION_ROWS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="ablation_out", help="output directory")
    ap.add_argument("--seeds", default="31,32,33", help="comma-separated student seeds")
    ap.add_argument("--steps", type=int, default=None, help="override student steps")
    args = ap.parse_args()

    bench = BenchmarkConfig()
    if args.steps:
        bench.student_steps = args.steps
    bench.student_seeds = tuple(int(s) for s in args.seeds.split(","))
    train, heldout = bench.datasets()
    teacher = build_teacher(bench, train)

    rows = []
    for name, weights in ABLATION_ROWS:
        reports = [run_student(bench, teacher, weights, seed, train, heldout)
                   for seed in bench.student_seeds]
        row = {"row": name,
               "iou": float(np.mean([r["iou"] for r in reports])),
               "f1": float(np.mean([r["f1"] for r in reports])),
               "per_seed": {str(r["seed"]): round(r["iou"], 4) for r in reports}}
        rows.append(row)
        print(f"{name:10s} mean IoU {row['iou']:.4f}  mean F1 {row['f1']:.4f}  {row['per_seed']}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation_ladder.json").write_text(json.dumps(rows, indent=2))
    lines = ["row,f1,iou"] + [f"{r['row']},{r['f1']!r},{r['iou']!r}" for r in rows]
    (out / "ablation_ladder.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out}/ablation_ladder.{{json,csv}}")


if __name__ == "__main__":
    main()
