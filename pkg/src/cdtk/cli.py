"""Command-line surface for batch experiments.

Subcommands: synth-data, degrade, train-teacher, train-student, eval,
gradcheck, ablate. Flags override config-file values. Every run writes a
reproducibility record (config hash, seeds, versions) beside its outputs.
Exit codes: 0 success, 2 config error, 3 check failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import ImagePair, load_manifest, load_png, make_dataset, save_dataset, save_png
from .degrade import DegradationSpec, degrade, resolution_only_spec, sample_spec
from .distill import LossWeights
from .network import ModelConfig, load_checkpoint, save_checkpoint
from .train import (SampledDegradation, TrainConfig, evaluate, train_student, train_teacher)


class ConfigError(ValueError):
    pass


class CheckFailure(RuntimeError):
    pass


EXIT_CONFIG = 2
EXIT_CHECK = 3
EXIT_IO = 4


def worker_count() -> int:
    cap = os.environ.get("CDTK_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError as exc:
            raise ConfigError(f"CDTK_THREADS must be an integer, got {cap!r}") from exc
    return n


def _config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def write_run_record(out_dir: Path, command: str, config: dict, seed: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "command": command,
        "config_hash": _config_hash(config),
        "config": config,
        "seed": seed,
        "versions": {"cdtk": __version__, "numpy": np.__version__,
                     "python": sys.version.split()[0]},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    (out_dir / "run_record.json").write_text(json.dumps(record, indent=2, sort_keys=True))


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def _build_configs(args) -> tuple[dict, ModelConfig, TrainConfig]:
    raw = load_config(getattr(args, "config", None))
    try:
        model_cfg = ModelConfig.from_dict(raw.get("model", {}))
        train_dict = dict(raw.get("train", {}))
        if raw.get("weights"):
            train_dict["weights"] = raw["weights"]
        train_cfg = TrainConfig.from_dict(train_dict)
        if raw.get("seed") is not None:
            train_cfg = replace(train_cfg, seed=int(raw["seed"]))
        # flag overrides beat the file
        if getattr(args, "seed", None) is not None:
            train_cfg = replace(train_cfg, seed=args.seed)
        if getattr(args, "scale", None) is not None:
            train_cfg = replace(train_cfg, scale=args.scale)
        if getattr(args, "weights", None) is not None:
            train_cfg = replace(train_cfg, weights=LossWeights.from_csv(args.weights))
        if getattr(args, "steps", None) is not None:
            train_cfg = replace(train_cfg, total_steps=args.steps)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return raw, model_cfg, train_cfg


def _dataset_from_config(raw: dict, train_cfg: TrainConfig, split: str) -> list[ImagePair]:
    data = raw.get("data", {})
    manifest_key = f"{split}_manifest"
    if manifest_key in data:
        return load_manifest(data[manifest_key])
    count = data.get(f"{split}_count", 32 if split == "train" else 16)
    size = data.get("size", train_cfg.crop)
    seed = data.get(f"{split}_seed", 11 if split == "train" else 777)
    change_prob = data.get("change_prob", 0.6)
    return make_dataset(count, size, seed=seed, change_prob=change_prob)


# -- commands -------------------------------------------------------------------

def cmd_synth_data(args) -> int:
    raw = load_config(args.config)
    data = raw.get("data", {})
    count = args.count or data.get("train_count", 32)
    size = args.size or data.get("size", 64)
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    out = Path(args.out)
    pairs = make_dataset(count, size, seed=seed, change_prob=data.get("change_prob", 0.6))
    manifest = save_dataset(out, pairs, split=args.split)
    write_run_record(out, "synth-data", {"count": count, "size": size, "split": args.split},
                     seed)
    print(f"wrote {count} pairs to {manifest}")
    return 0


def _degrade_one(job):
    in_path, out_root, spec = job
    img = load_png(in_path)
    lq = degrade(img, spec)
    stem = Path(in_path).stem
    save_png(out_root / f"{stem}_lq.png", lq)
    (out_root / f"{stem}_spec.json").write_text(spec.to_json())
    return stem


def cmd_degrade(args) -> int:
    in_dir = Path(args.in_dir)
    pngs = sorted(p for p in in_dir.glob("*.png") if not p.stem.endswith("_label"))
    if not pngs:
        raise OSError(f"no PNG inputs found under {in_dir}")
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else 0
    fixed = None
    if args.spec:
        fixed = DegradationSpec.from_json(Path(args.spec).read_text())
    jobs = []
    for i, path in enumerate(pngs):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        if fixed is not None:
            spec = fixed.with_seed(int(rng.integers(2**63 - 1)))
        else:
            spec = sample_spec(rng, scale=args.scale or 8)
        jobs.append((path, out_root, spec))
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        done = list(pool.map(_degrade_one, jobs))
    manifest = {"entries": [f"{stem}_lq.png" for stem in done]}
    (out_root / "manifest_lq.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    write_run_record(out_root, "degrade", {"inputs": len(jobs), "scale": args.scale or 8,
                                           "spec": args.spec}, seed)
    print(f"degraded {len(done)} images into {out_root}")
    return 0


def cmd_train_teacher(args) -> int:
    raw, model_cfg, train_cfg = _build_configs(args)
    dataset = _dataset_from_config(raw, train_cfg, "train")
    result = train_teacher(dataset, train_cfg, model_cfg)
    out = Path(args.out)
    save_checkpoint(out / "teacher", result.model,
                    {"frozen": True, "role": "teacher", "seed": train_cfg.seed})
    _write_loss_curves(out, result.parts)
    write_run_record(out, "train-teacher", {"model": model_cfg.to_dict(),
                                            "train": train_cfg.to_dict()}, train_cfg.seed)
    print(f"teacher checkpoint at {out / 'teacher'}; final loss {result.losses[-1]:.4f}")
    return 0


def cmd_train_student(args) -> int:
    raw, model_cfg, train_cfg = _build_configs(args)
    dataset = _dataset_from_config(raw, train_cfg, "train")
    teacher = None
    if args.teacher:
        teacher, meta = load_checkpoint(args.teacher)
        teacher.set_requires_grad(False)
        if teacher.cfg != model_cfg:
            raise ConfigError(f"teacher config {teacher.cfg.to_dict()} does not match "
                              f"requested model {model_cfg.to_dict()}")
    elif train_cfg.weights.any_active():
        raise ConfigError("distillation weights are nonzero but no --teacher was given")
    result = train_student(dataset, teacher, train_cfg, model_cfg)
    out = Path(args.out)
    save_checkpoint(out / "student", result.model,
                    {"role": "student", "seed": train_cfg.seed,
                     "weights": vars(train_cfg.weights)})
    if result.bank is not None:
        result.bank.save(out / "bank.cdtk")
    _write_loss_curves(out, result.parts)
    write_run_record(out, "train-student", {"model": model_cfg.to_dict(),
                                            "train": train_cfg.to_dict()}, train_cfg.seed)
    print(f"student checkpoint at {out / 'student'}; final loss {result.losses[-1]:.4f}")
    return 0


def _write_loss_curves(out: Path, parts: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    keys = sorted(parts.keys())
    lines = ["step," + ",".join(keys)]
    for i in range(len(parts[keys[0]])):
        lines.append(f"{i}," + ",".join(repr(float(parts[k][i])) for k in keys))
    (out / "loss_curves.csv").write_text("\n".join(lines) + "\n")


def _eval_setting(args, train_cfg):
    name = args.setting
    if name == "clean":
        return None
    if name == "resolution":
        return resolution_only_spec(args.scale or train_cfg.scale)
    if name == "multi":
        return SampledDegradation(scale=args.scale or train_cfg.scale)
    raise ConfigError(f"unknown eval setting {name!r}")


def cmd_eval(args) -> int:
    raw, model_cfg, train_cfg = _build_configs(args)
    model, _ = load_checkpoint(args.ckpt)
    eval_set = _dataset_from_config(raw, train_cfg, "eval")
    setting = _eval_setting(args, train_cfg)
    seed = args.seed if args.seed is not None else 0
    report = evaluate(model, eval_set, setting, seed=seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    row = report
    csv = ("setting,f1,iou,precision,recall\n"
           f"{row['setting']},{row['f1']!r},{row['iou']!r},"
           f"{row['precision']!r},{row['recall']!r}\n")
    (out / "metrics.csv").write_text(csv)
    write_run_record(out, "eval", {"setting": args.setting, "ckpt": str(args.ckpt)}, seed)
    print(f"{row['setting']}: f1={row['f1']:.4f} iou={row['iou']:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import gradcheck
    from .tensor import Tensor
    from .distill import (change_distillation_loss, cross_correlation_loss,
                          global_correlation_loss, self_correlation_loss)

    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    shape = (2, 2, 3)
    fixed = {name: Tensor(rng.normal(size=shape)) for name in ("f2s", "f1t", "f2t")}
    bank = rng.normal(size=(5, 3))
    cases = {
        "self-correlation loss": lambda x: self_correlation_loss(x, fixed["f1t"]),
        "cross-correlation loss": lambda x: cross_correlation_loss(
            x, fixed["f2s"], fixed["f1t"], fixed["f2t"]),
        "global-correlation loss": lambda x: global_correlation_loss(
            x, fixed["f2s"], fixed["f1t"], fixed["f2t"], bank),
        "change-feature loss": lambda x: change_distillation_loss(x, fixed["f1t"]),
    }
    failures = 0
    for name, fn in cases.items():
        report = gradcheck(fn, Tensor(rng.normal(size=shape)), tol=args.tol)
        status = "PASS" if report.passed else "FAIL"
        print(f"[{status}] {name}: max relative error {report.max_rel_err:.3e}")
        failures += 0 if report.passed else 1
    if failures:
        raise CheckFailure(f"{failures} gradient checks failed at tol {args.tol}")
    return 0


ABLATION_ROWS = (
    ("baseline", LossWeights.zeros()),
    ("+self-t2", LossWeights(0, 1, 0, 0, 5.0, 0)),
    ("+self-t1", LossWeights(1, 1, 0, 0, 5.0, 0)),
    ("+cross", LossWeights(1, 1, 1, 0, 5.0, 0)),
    ("+global", LossWeights(1, 1, 1, 0.4, 5.0, 0)),
    ("+change", LossWeights(1, 1, 1, 0.4, 5.0, 0.25)),
)


def cmd_ablate(args) -> int:
    raw, model_cfg, train_cfg = _build_configs(args)
    dataset = _dataset_from_config(raw, train_cfg, "train")
    eval_set = _dataset_from_config(raw, train_cfg, "eval")
    if args.teacher:
        teacher, _ = load_checkpoint(args.teacher)
        teacher.set_requires_grad(False)
    else:
        teacher = train_teacher(dataset, train_cfg, model_cfg).model
    rows = []
    for name, weights in ABLATION_ROWS:
        cfg = replace(train_cfg, weights=weights)
        result = train_student(dataset, teacher if weights.any_active() else None,
                               cfg, model_cfg)
        report = evaluate(result.model, eval_set, SampledDegradation(scale=cfg.scale),
                          seed=cfg.seed)
        rows.append({"row": name, "f1": report["f1"], "iou": report["iou"],
                     "precision": report["precision"], "recall": report["recall"]})
        print(f"{name:10s} f1={report['f1']:.4f} iou={report['iou']:.4f}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(rows, indent=2, sort_keys=True))
    lines = ["row,f1,iou,precision,recall"]
    lines += [f"{r['row']},{r['f1']!r},{r['iou']!r},{r['precision']!r},{r['recall']!r}"
              for r in rows]
    (out / "ablation.csv").write_text("\n".join(lines) + "\n")
    write_run_record(out, "ablate", {"train": train_cfg.to_dict()}, train_cfg.seed)
    return 0


# -- argument wiring -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdtk",
                                     description="correlation-distillation change detection")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, teacher=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--scale", type=int, choices=(4, 8), help="degradation scale")
        p.add_argument("--weights", help="six comma-separated loss weights "
                                         "(self-t1,self-t2,cross,global,semantic,change)")
        p.add_argument("--steps", type=int, help="override total training steps")
        p.add_argument("--out", required=True, help="output directory")
        if teacher:
            p.add_argument("--teacher", help="teacher checkpoint directory")

    p = sub.add_parser("synth-data", help="generate a synthetic dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--split", default="train")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("degrade", help="degrade a directory of PNG images")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", type=int, choices=(4, 8))
    p.add_argument("--spec", help="JSON file with a fixed degradation spec")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train-teacher", help="train and freeze the teacher")
    common(p)
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("train-student", help="train the student under distillation")
    common(p, teacher=True)
    p.set_defaults(func=cmd_train_student)

    p = sub.add_parser("eval", help="evaluate a checkpoint under a degradation setting")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--setting", default="clean", choices=("clean", "resolution", "multi"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference checks over the loss stack")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="run the six-row ablation ladder")
    common(p, teacher=True)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailure as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
