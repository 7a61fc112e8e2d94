"""The pinned desk-scale multi-degradation benchmark.

One fixed synthetic dataset, one teacher recipe, and one student recipe
shared by the acceptance suite and the experiment scripts, so published
numbers and test numbers come from the same configuration. Seeds are
pinned; the sizes were calibrated once so the full suite fits a laptop
CPU budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import ImagePair, make_dataset
from .distill import LossWeights
from .network import ChangeDetector, ModelConfig
from .train import SampledDegradation, TrainConfig, evaluate, train_student, train_teacher


@dataclass
class BenchmarkConfig:
    scene_size: int = 48
    train_scenes: int = 32
    eval_scenes: int = 32
    train_seed: int = 11
    eval_seed: int = 777
    change_prob: float = 0.6
    teacher_steps: int = 1000
    teacher_seed: int = 21
    student_steps: int = 1000
    student_seeds: tuple[int, ...] = (31, 32, 33)
    scale: int = 8
    eval_degradation_seed: int = 99
    model: ModelConfig = field(default_factory=ModelConfig)
    bank_capacity: int = 4096
    bank_push: int = 8
    bank_sample: int = 512

    def datasets(self) -> tuple[list[ImagePair], list[ImagePair]]:
        train = make_dataset(self.train_scenes, self.scene_size, seed=self.train_seed,
                             change_prob=self.change_prob)
        heldout = make_dataset(self.eval_scenes, self.scene_size, seed=self.eval_seed,
                               change_prob=self.change_prob)
        return train, heldout

    def teacher_config(self) -> TrainConfig:
        return TrainConfig(total_steps=self.teacher_steps, batch_size=4,
                           crop=self.scene_size, seed=self.teacher_seed, scale=self.scale)

    def student_config(self, seed: int, weights: LossWeights) -> TrainConfig:
        return TrainConfig(total_steps=self.student_steps, batch_size=4,
                           crop=self.scene_size, seed=seed, scale=self.scale,
                           weights=weights, bank_capacity=self.bank_capacity,
                           bank_push=self.bank_push, bank_sample=self.bank_sample)


def build_teacher(bench: BenchmarkConfig, train=None):
    train = train if train is not None else bench.datasets()[0]
    return train_teacher(train, bench.teacher_config(), bench.model).model


def run_student(bench: BenchmarkConfig, teacher: ChangeDetector | None, weights: LossWeights,
                seed: int, train, heldout) -> dict:
    cfg = bench.student_config(seed, weights)
    result = train_student(train, teacher if weights.any_active() else None,
                           cfg, bench.model)
    report = evaluate(result.model, heldout, SampledDegradation(scale=bench.scale),
                      seed=bench.eval_degradation_seed)
    report["seed"] = seed
    return report


def seed_mean_iou(bench: BenchmarkConfig, teacher, weights: LossWeights,
                  train, heldout) -> tuple[float, list[dict]]:
    reports = [run_student(bench, teacher, weights, seed, train, heldout)
               for seed in bench.student_seeds]
    return float(np.mean([r["iou"] for r in reports])), reports
