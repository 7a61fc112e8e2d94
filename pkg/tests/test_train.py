"""Training protocol: reductions, determinism, freezing, evaluation accounting."""

import numpy as np
import pytest

from cdtk.data import make_dataset
from cdtk.degrade import resolution_only_spec
from cdtk.distill import LossWeights
from cdtk.metrics import Confusion, accumulate, scores
from cdtk.network import ChangeDetector, ModelConfig
from cdtk.train import (SampledDegradation, TrainConfig, evaluate, rng_streams,
                        train_baseline, train_student, train_teacher)

TINY_MODEL = ModelConfig(backbone_channels=(4, 6, 8), feature_dim=8, fusion_dim=8)


def tiny_cfg(**over):
    base = dict(total_steps=6, batch_size=2, crop=16, seed=5, scale=4,
                bank_capacity=64, bank_push=4, bank_sample=8)
    base.update(over)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def tiny_dataset():
    return make_dataset(6, 16, seed=3)


@pytest.fixture(scope="module")
def tiny_teacher(tiny_dataset):
    return train_teacher(tiny_dataset, tiny_cfg(total_steps=8), TINY_MODEL)


class TestStreams:
    def test_streams_are_independent(self):
        a = rng_streams(7)
        b = rng_streams(7)
        # consume "bank" heavily in a only; "degrade" must stay aligned
        a["bank"].normal(size=1000)
        assert np.array_equal(a["degrade"].normal(size=8), b["degrade"].normal(size=8))
        assert np.array_equal(a["augment"].normal(size=8), b["augment"].normal(size=8))

    def test_different_seeds_differ(self):
        assert not np.array_equal(rng_streams(1)["data"].normal(size=4),
                                  rng_streams(2)["data"].normal(size=4))


class TestTeacher:
    def test_deterministic_checkpoints(self, tiny_dataset):
        a = train_teacher(tiny_dataset, tiny_cfg(), TINY_MODEL)
        b = train_teacher(tiny_dataset, tiny_cfg(), TINY_MODEL)
        for key, value in a.model.state().items():
            assert np.array_equal(value, b.model.state()[key]), key
        assert np.array_equal(a.losses, b.losses)

    def test_loss_trend_decreases(self, tiny_dataset):
        res = train_teacher(tiny_dataset, tiny_cfg(total_steps=60), TINY_MODEL)
        first = res.losses[:10].mean()
        last = res.losses[-10:].mean()
        assert last < first

    def test_returned_model_is_frozen(self, tiny_teacher):
        assert all(not p.requires_grad for p in tiny_teacher.model.parameters().values())


class TestStudent:
    def test_zero_weights_reduce_to_baseline_bitwise(self, tiny_dataset, tiny_teacher):
        cfg = tiny_cfg(total_steps=10, weights=LossWeights.zeros())
        with_teacher = train_student(tiny_dataset, tiny_teacher.model, cfg, TINY_MODEL)
        baseline = train_baseline(tiny_dataset, tiny_cfg(total_steps=10), TINY_MODEL)
        assert np.array_equal(with_teacher.losses, baseline.losses)
        for key, value in with_teacher.model.state().items():
            assert np.array_equal(value, baseline.model.state()[key]), key

    def test_self_distillation_zero_at_step_zero(self, tiny_dataset, tiny_teacher):
        # student initialized to the teacher, identical (undegraded) inputs
        from cdtk.distill import (change_distillation_loss, cross_correlation_loss,
                                  global_correlation_loss, self_correlation_loss,
                                  total_loss)
        from cdtk.tensor import Tensor, slice0, softmax_cross_entropy
        teacher = tiny_teacher.model
        student = teacher.copy()
        pair = tiny_dataset[0]
        i1, i2 = pair.t1[None], pair.t2[None]
        f1_t, f2_t, fc_t, _ = teacher.forward(i1, i2, mode="frozen")
        f1_s, f2_s, fc_s, logits = student.forward(i1, i2, mode="train")
        l_s1 = self_correlation_loss(slice0(f1_s, 0), slice0(f1_t, 0))
        l_s2 = self_correlation_loss(slice0(f2_s, 0), slice0(f2_t, 0))
        l_c = cross_correlation_loss(slice0(f1_s, 0), slice0(f2_s, 0),
                                     slice0(f1_t, 0), slice0(f2_t, 0))
        bank = f1_t.data[0].reshape(-1, TINY_MODEL.feature_dim)[:4]
        l_g = global_correlation_loss(slice0(f1_s, 0), slice0(f2_s, 0),
                                      slice0(f1_t, 0), slice0(f2_t, 0), bank)
        l_cfd = change_distillation_loss(slice0(fc_s, 0), slice0(fc_t, 0))
        for name, loss in [("s1", l_s1), ("s2", l_s2), ("c", l_c), ("g", l_g),
                           ("cfd", l_cfd)]:
            assert loss.data < 1e-10, name
        ce = softmax_cross_entropy(logits, pair.label[None].astype(np.int64))
        sfd = Tensor(l_s1.data + l_s2.data + l_c.data + 0.4 * l_g.data)
        total = total_loss(ce, sfd, l_cfd, LossWeights())
        assert abs(total.data - ce.data) < 1e-10

    def test_teacher_unchanged_bitwise(self, tiny_dataset, tiny_teacher):
        before = tiny_teacher.model.state()
        train_student(tiny_dataset, tiny_teacher.model, tiny_cfg(total_steps=4), TINY_MODEL)
        after = tiny_teacher.model.state()
        for key, value in before.items():
            assert np.array_equal(value, after[key]), key

    def test_all_parameters_finite_after_training(self, tiny_dataset, tiny_teacher):
        res = train_student(tiny_dataset, tiny_teacher.model, tiny_cfg(total_steps=5),
                            TINY_MODEL)
        for key, p in res.model.parameters().items():
            assert np.isfinite(p.data).all(), key

    def test_student_determinism(self, tiny_dataset, tiny_teacher):
        a = train_student(tiny_dataset, tiny_teacher.model, tiny_cfg(total_steps=5), TINY_MODEL)
        b = train_student(tiny_dataset, tiny_teacher.model, tiny_cfg(total_steps=5), TINY_MODEL)
        for key, value in a.model.state().items():
            assert np.array_equal(value, b.model.state()[key]), key
        assert a.bank is not None
        assert np.array_equal(a.bank.rows(), b.bank.rows())

    def test_config_mismatch_rejected(self, tiny_dataset, tiny_teacher):
        other = ModelConfig(backbone_channels=(4, 6, 10), feature_dim=10, fusion_dim=8)
        with pytest.raises(ValueError, match="config"):
            train_student(tiny_dataset, tiny_teacher.model, tiny_cfg(), other)

    def test_missing_teacher_with_active_weights_rejected(self, tiny_dataset):
        with pytest.raises(ValueError, match="teacher"):
            train_student(tiny_dataset, None, tiny_cfg(), TINY_MODEL)


class TestEvaluate:
    def test_perfect_oracle_stub(self, tiny_dataset):
        captured = {}

        def perfect(t1, t2):
            return captured["label"]

        conf_total = Confusion()
        for pair in tiny_dataset:
            captured["label"] = pair.label
            accumulate(conf_total, perfect(None, None), pair.label)
        report = evaluate(None, tiny_dataset, None,
                          predict_fn=lambda t1, t2: _label_of(tiny_dataset, t1))
        assert report["f1"] == 1.0 and report["iou"] == 1.0

    def test_all_negative_stub_zero_recall(self, tiny_dataset):
        report = evaluate(None, tiny_dataset, None,
                          predict_fn=lambda t1, t2: np.zeros(t1.shape[:2], dtype=np.uint8))
        assert report["recall"] == 0.0

    def test_matches_confusion_oracle(self, tiny_dataset):
        rng = np.random.default_rng(0)
        preds = [rng.integers(0, 2, size=p.label.shape).astype(np.uint8)
                 for p in tiny_dataset]
        it = iter(preds)
        report = evaluate(None, tiny_dataset, None, predict_fn=lambda t1, t2: next(it))
        conf = Confusion()
        for pred, pair in zip(preds, tiny_dataset):
            accumulate(conf, pred, pair.label)
        expected = scores(conf)
        for key, value in expected.items():
            assert abs(report[key] - value) < 1e-12

    def test_degraded_settings_are_deterministic(self, tiny_dataset, tiny_teacher):
        for setting in (None, resolution_only_spec(4), SampledDegradation(scale=4)):
            a = evaluate(tiny_teacher.model, tiny_dataset[:2], setting, seed=5)
            b = evaluate(tiny_teacher.model, tiny_dataset[:2], setting, seed=5)
            assert a == b


def _label_of(dataset, t1):
    for pair in dataset:
        if np.array_equal(pair.t1, t1):
            return pair.label
    raise AssertionError("unknown image")
