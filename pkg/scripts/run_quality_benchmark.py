#!/usr/bin/env python3
"""Train a teacher/student pair and evaluate under the three quality settings.

Settings: clean pairs, resolution-only downsampling, and the sampled
blur+downsample+noise pipeline. Compares the distilled student against a
cross-entropy baseline trained under the same seed.
"""

import argparse
import json
from pathlib import Path

from cdtk.benchmark import BenchmarkConfig, build_teacher
from cdtk.degrade import resolution_only_spec
from cdtk.distill import LossWeights
from cdtk.train import SampledDegradation, evaluate, train_student


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="benchmark_out")
    ap.add_argument("--seed", type=int, default=31)
    args = ap.parse_args()

    bench = BenchmarkConfig()
    train, heldout = bench.datasets()
    teacher = build_teacher(bench, train)

    models = {"teacher": teacher}
    for name, weights in (("baseline", LossWeights.zeros()), ("distilled", LossWeights())):
        cfg = bench.student_config(args.seed, weights)
        models[name] = train_student(train, teacher if weights.any_active() else None,
                                     cfg, bench.model).model

    settings = {
        "clean": None,
        f"resolution-x{bench.scale}": resolution_only_spec(bench.scale),
        f"multi-degradation-x{bench.scale}": SampledDegradation(scale=bench.scale),
    }
    table = {}
    for model_name, model in models.items():
        table[model_name] = {}
        for setting_name, setting in settings.items():
            rep = evaluate(model, heldout, setting, seed=bench.eval_degradation_seed)
            table[model_name][setting_name] = {"f1": rep["f1"], "iou": rep["iou"]}
            print(f"{model_name:9s} {setting_name:24s} f1={rep['f1']:.4f} iou={rep['iou']:.4f}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "quality_benchmark.json").write_text(json.dumps(table, indent=2, sort_keys=True))
    print(f"wrote {out}/quality_benchmark.json")


if __name__ == "__main__":
    main()
