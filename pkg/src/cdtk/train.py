"""Two-phase training: teacher on clean pairs, student on clean/degraded pairs.

The teacher trains with cross-entropy only and is frozen afterwards. The
student sees (t1, upsampled degraded t2) inputs while the frozen teacher
runs on the clean pair; correlation-matching losses pull the student's
feature affinities toward the teacher's. Four independent seeded rng
streams (data, augment, degrade, bank) guarantee that disabling the
distillation terms reproduces the cross-entropy baseline bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .data import ImagePair, augment, crop_batch
from .degrade import DegradationSpec, degrade, sample_spec, upsample_to
from .distill import (LossWeights, MemoryBank, change_distillation_loss,
                      semantic_distillation_loss, total_loss)
from .metrics import Confusion, accumulate, scores
from .network import ChangeDetector, ModelConfig, change_map
from .optim import AdamW, poly_lr
from .tensor import Tensor, add, backward, mul_scalar, slice0, softmax_cross_entropy
from .trainconfig import TrainConfig  # noqa: F401  (re-export for callers)


@dataclass
class TrainResult:
    model: ChangeDetector
    losses: np.ndarray                   # total loss per step
    parts: dict = field(default_factory=dict)  # named component curves
    bank: MemoryBank | None = None


@dataclass
class SampledDegradation:
    """Evaluation setting: a fresh random degradation per image."""
    scale: int = 8


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent child streams; replacing one never perturbs the others."""
    names = ("init", "data", "augment", "degrade", "bank")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(seq) for name, seq in zip(names, children)}


def _batch_arrays(pairs: list[ImagePair]):
    t1 = np.stack([p.t1 for p in pairs])
    t2 = np.stack([p.t2 for p in pairs])
    labels = np.stack([p.label for p in pairs]).astype(np.int64)
    return t1, t2, labels


def _next_batch(dataset, cfg, rngs):
    pairs = crop_batch(dataset, cfg.crop, cfg.batch_size, rngs["data"])
    return [augment(p, rngs["augment"]) for p in pairs]


def train_teacher(dataset: list[ImagePair], cfg: "TrainConfig",
                  model_cfg: ModelConfig | None = None) -> TrainResult:
    """Cross-entropy training on clean pairs; returned model is frozen."""
    model_cfg = model_cfg or ModelConfig()
    rngs = rng_streams(cfg.seed)
    model = ChangeDetector(model_cfg, rngs["init"])
    opt = AdamW(model.parameters(), betas=cfg.betas, weight_decay=cfg.weight_decay)
    losses = np.zeros(cfg.total_steps)
    for step in range(cfg.total_steps):
        batch = _next_batch(dataset, cfg, rngs)
        t1, t2, labels = _batch_arrays(batch)
        _, _, _, logits = model.forward(t1, t2, mode="train")
        ce = softmax_cross_entropy(logits, labels)
        if not np.isfinite(ce.data):
            raise RuntimeError(f"train_teacher: loss diverged at step {step}")
        opt.zero_grad()
        backward(ce)
        opt.step(poly_lr(step, cfg.lr0, cfg.total_steps, cfg.poly_power))
        losses[step] = ce.data.item()
    model.set_requires_grad(False)
    return TrainResult(model=model, losses=losses, parts={"ce": losses.copy()})


def _mean_chain(terms):
    acc = terms[0]
    for t in terms[1:]:
        acc = add(acc, t)
    return mul_scalar(acc, 1.0 / len(terms))


def train_student(dataset: list[ImagePair], teacher: ChangeDetector | None,
                  cfg: "TrainConfig", model_cfg: ModelConfig | None = None,
                  student_init: ChangeDetector | None = None) -> TrainResult:
    """Distillation training under sampled degradations of the second image.

    With every distillation weight zero the teacher (which may then be
    None) is never evaluated and the run reduces exactly to the
    cross-entropy baseline. Per step the bank is sampled before the loss
    and pushed afterwards; the global term is skipped while the bank is
    still empty.
    """
    model_cfg = model_cfg or ModelConfig()
    w = cfg.weights
    if teacher is not None and teacher.cfg != model_cfg:
        raise ValueError(f"train_student: teacher config {teacher.cfg} != student {model_cfg}")
    if teacher is None and w.any_active():
        raise ValueError("train_student: distillation weights set but no teacher given")
    rngs = rng_streams(cfg.seed)
    if student_init is not None:
        model = student_init
        model.set_requires_grad(True)
    else:
        model = ChangeDetector(model_cfg, rngs["init"])
    teacher_state = teacher.state() if teacher is not None else None

    use_semantic = w.semantic_active()
    use_change = w.change > 0
    use_teacher = use_semantic or use_change
    use_bank = use_semantic and w.global_corr > 0
    bank = MemoryBank(dim=model_cfg.feature_dim, capacity=cfg.bank_capacity,
                      push_count=cfg.bank_push, sample_count=cfg.bank_sample) if use_bank else None

    opt = AdamW(model.parameters(), betas=cfg.betas, weight_decay=cfg.weight_decay)
    losses = np.zeros(cfg.total_steps)
    parts = {k: np.zeros(cfg.total_steps) for k in ("ce", "sfd", "cfd")}
    for step in range(cfg.total_steps):
        batch = _next_batch(dataset, cfg, rngs)
        t1, t2, labels = _batch_arrays(batch)
        h, w_img = t1.shape[1], t1.shape[2]
        t2_in = np.empty_like(t2)
        for b in range(len(batch)):
            spec = sample_spec(rngs["degrade"], scale=cfg.scale)
            t2_in[b] = upsample_to(degrade(t2[b], spec), h, w_img)

        f1_s, f2_s, fc_s, logits = model.forward(t1, t2_in, mode="train")
        ce = softmax_cross_entropy(logits, labels)
        loss = ce
        if use_teacher:
            # frozen teacher: batch statistics, buffers untouched, no graph
            f1_t, f2_t, fc_t, _ = teacher.forward(t1, t2, mode="frozen")
            bank_rows = bank.sample(rngs["bank"]) if (use_bank and len(bank)) else None
            sfd_terms, cfd_terms = [], []
            for b in range(len(batch)):
                if use_semantic:
                    sfd_terms.append(semantic_distillation_loss(
                        slice0(f1_s, b), slice0(f2_s, b),
                        slice0(f1_t, b), slice0(f2_t, b), bank_rows, w))
                if use_change:
                    cfd_terms.append(change_distillation_loss(slice0(fc_s, b), slice0(fc_t, b)))
            sfd = _mean_chain(sfd_terms) if sfd_terms else None
            cfd = _mean_chain(cfd_terms) if cfd_terms else None
            loss = total_loss(ce, sfd, cfd, w)
            if use_bank:
                for b in range(len(batch)):
                    bank.push([f1_t.data[b], f2_t.data[b], f1_s.data[b]], rngs["bank"])
            parts["sfd"][step] = sfd.data.item() if sfd is not None else 0.0
            parts["cfd"][step] = cfd.data.item() if cfd is not None else 0.0
        if not np.isfinite(loss.data):
            raise RuntimeError(f"train_student: loss diverged at step {step}")
        opt.zero_grad()
        backward(loss)
        opt.step(poly_lr(step, cfg.lr0, cfg.total_steps, cfg.poly_power))
        losses[step] = loss.data.item()
        parts["ce"][step] = ce.data.item()
        if teacher_state is not None and step == 0:
            _assert_unchanged(teacher, teacher_state)
    if teacher_state is not None:
        _assert_unchanged(teacher, teacher_state)
    return TrainResult(model=model, losses=losses, parts=parts, bank=bank)


def train_baseline(dataset: list[ImagePair], cfg: "TrainConfig",
                   model_cfg: ModelConfig | None = None) -> TrainResult:
    """Cross-entropy-only student (no teacher, no distillation)."""
    from dataclasses import replace
    base_cfg = replace(cfg, weights=LossWeights.zeros())
    return train_student(dataset, None, base_cfg, model_cfg)


def _assert_unchanged(teacher: ChangeDetector, snapshot: dict) -> None:
    for key, value in teacher.state().items():
        if not np.array_equal(value, snapshot[key]):
            raise RuntimeError(f"teacher state mutated during student training: {key}")


# -- evaluation ----------------------------------------------------------------

def evaluate(model: ChangeDetector | None, pairs: list[ImagePair],
             degradation: DegradationSpec | SampledDegradation | None = None,
             seed: int = 0, predict_fn=None) -> dict:
    """Confusion-count evaluation under one degradation setting.

    degradation: None for clean pairs, a fixed DegradationSpec (its noise
    seed is re-derived per image), or SampledDegradation for a fresh
    random spec per image. predict_fn(t1, t2) -> binary map overrides the
    model (used for stub testing).
    """
    conf = Confusion()
    for i, pair in enumerate(pairs):
        t2_in = pair.t2
        if degradation is not None:
            rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
            if isinstance(degradation, SampledDegradation):
                spec = sample_spec(rng, scale=degradation.scale)
            else:
                spec = degradation.with_seed(int(rng.integers(2**63 - 1)))
            h, w = pair.t2.shape[:2]
            t2_in = upsample_to(degrade(pair.t2, spec), h, w)
        if predict_fn is not None:
            pred = predict_fn(pair.t1, t2_in)
        else:
            _, _, _, logits = model.forward(pair.t1[None], t2_in[None], mode="eval")
            pred = change_map(logits.data[0])
        accumulate(conf, pred, pair.label)
    report = scores(conf)
    report["counts"] = {"tp": conf.tp, "fp": conf.fp, "fn": conf.fn, "tn": conf.tn}
    if degradation is None:
        report["setting"] = "clean"
    elif isinstance(degradation, SampledDegradation):
        report["setting"] = f"multi-degradation-x{degradation.scale}"
    else:
        report["setting"] = f"fixed-degradation-x{degradation.scale}"
    return report
