"""Siamese change-detection model at desk scale.

A weight-sharing conv backbone (stride 2, stride 2, stride 1) maps each
temporal image to (H/4, W/4, d) features; the fusion module concatenates
both feature maps and applies conv-BN-relu-conv-relu to produce the
change feature; the head upsamples twice with transposed convolutions
followed by residual blocks and ends in a 1x1 conv to two logits.

Three normalization modes: "train" uses batch statistics and updates the
running buffers, "frozen" uses batch statistics without touching buffers
(how a frozen guidance model is run during distillation), "eval" uses
the running averages.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .tensor import (Tensor, ShapeMismatch, add, batchnorm_lite, concat, conv2d, relu,
                     transposed_conv2d)
from .tensorfile import read_tensor, write_tensor

MODES = ("train", "frozen", "eval")


@dataclass
class ModelConfig:
    backbone_channels: tuple[int, ...] = (16, 32, 64)
    feature_dim: int = 64
    fusion_dim: int = 32
    downsample_factor: int = 4

    def __post_init__(self):
        self.backbone_channels = tuple(self.backbone_channels)
        if len(self.backbone_channels) != 3:
            raise ValueError("ModelConfig: backbone needs exactly three stages")
        if self.backbone_channels[-1] != self.feature_dim:
            raise ValueError(
                f"ModelConfig: last backbone stage {self.backbone_channels[-1]} "
                f"must equal feature_dim {self.feature_dim}")
        if self.downsample_factor != 4:
            raise ValueError("ModelConfig: the two stride-2 stages fix downsample_factor at 4")
        if self.fusion_dim < 4:
            raise ValueError("ModelConfig: fusion_dim must be >= 4")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**d)


def _kaiming(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Conv:
    def __init__(self, rng, cin, cout, ksize, stride=1):
        self.stride = stride
        self.padding = (ksize - 1) // 2
        self.w = Tensor(_kaiming(rng, (ksize, ksize, cin, cout), ksize * ksize * cin),
                        requires_grad=True)
        self.b = Tensor(np.zeros(cout), requires_grad=True)

    def __call__(self, x):
        return add(conv2d(x, self.w, stride=self.stride, padding=self.padding), self.b)

    def params(self):
        return {"w": self.w, "b": self.b}


class Deconv:
    """Transposed conv, kernel 4, stride 2, padding 1: exact x2 upsampling."""

    def __init__(self, rng, cin, cout):
        self.w = Tensor(_kaiming(rng, (4, 4, cin, cout), 16 * cin), requires_grad=True)
        self.b = Tensor(np.zeros(cout), requires_grad=True)

    def __call__(self, x):
        return add(transposed_conv2d(x, self.w, stride=2, padding=1), self.b)

    def params(self):
        return {"w": self.w, "b": self.b}


class BatchNorm:
    MOMENTUM = 0.9
    EPS = 1e-5

    def __init__(self, channels):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def __call__(self, x, mode):
        if mode == "eval":
            return batchnorm_lite(x, self.gamma, self.beta, self.EPS,
                                  self.running_mean, self.running_var)
        if mode == "train":
            batch_mean = x.data.mean(axis=(0, 1, 2))
            batch_var = x.data.var(axis=(0, 1, 2))
            self.running_mean = self.MOMENTUM * self.running_mean + (1 - self.MOMENTUM) * batch_mean
            self.running_var = self.MOMENTUM * self.running_var + (1 - self.MOMENTUM) * batch_var
        return batchnorm_lite(x, self.gamma, self.beta, self.EPS)

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def set_buffers(self, bufs):
        self.running_mean = np.array(bufs["running_mean"])
        self.running_var = np.array(bufs["running_var"])


class ResidualBlock:
    """conv-BN-relu-conv-BN plus identity skip, relu after the sum."""

    def __init__(self, rng, channels):
        self.conv1 = Conv(rng, channels, channels, 3)
        self.bn1 = BatchNorm(channels)
        self.conv2 = Conv(rng, channels, channels, 3)
        self.bn2 = BatchNorm(channels)

    def __call__(self, x, mode):
        y = relu(self.bn1(self.conv1(x), mode))
        y = self.bn2(self.conv2(y), mode)
        return relu(add(x, y))

    def modules(self):
        return {"conv1": self.conv1, "bn1": self.bn1, "conv2": self.conv2, "bn2": self.bn2}


class ChangeDetector:
    """Teacher/student architecture; both roles share this single implementation."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        c1, c2, c3 = cfg.backbone_channels
        self.stem = [
            (Conv(rng, 3, c1, 3, stride=2), BatchNorm(c1)),
            (Conv(rng, c1, c2, 3, stride=2), BatchNorm(c2)),
            (Conv(rng, c2, c3, 3, stride=1), BatchNorm(c3)),
        ]
        f = cfg.fusion_dim
        self.fuse_conv1 = Conv(rng, 2 * cfg.feature_dim, f, 3)
        self.fuse_bn = BatchNorm(f)
        self.fuse_conv2 = Conv(rng, f, f, 3)
        h1, h2 = f // 2, f // 4
        self.deconv1 = Deconv(rng, f, h1)
        self.res1 = ResidualBlock(rng, h1)
        self.deconv2 = Deconv(rng, h1, h2)
        self.res2 = ResidualBlock(rng, h2)
        self.classifier = Conv(rng, h2, 2, 1)

    # -- forward pieces ----------------------------------------------------
    def extract(self, image: Tensor | np.ndarray, mode: str) -> Tensor:
        """Backbone features at (n, H/4, W/4, d); shared weights for both times."""
        x = image if isinstance(image, Tensor) else Tensor(image)
        if x.data.ndim != 4 or x.data.shape[1] % 4 or x.data.shape[2] % 4:
            raise ShapeMismatch(
                f"extract: need NHWC input with extents divisible by 4, got {x.data.shape}")
        for conv, bn in self.stem:
            x = relu(bn(conv(x), mode))
        return x

    def fuse(self, f1: Tensor, f2: Tensor, mode: str) -> Tensor:
        if f1.data.shape != f2.data.shape:
            raise ShapeMismatch(f"fuse: shapes differ {f1.data.shape} vs {f2.data.shape}")
        x = concat([f1, f2], axis=3)
        x = relu(self.fuse_bn(self.fuse_conv1(x), mode))
        return relu(self.fuse_conv2(x))

    def head(self, fc: Tensor, mode: str) -> Tensor:
        x = self.res1(self.deconv1(fc), mode)
        x = self.res2(self.deconv2(x), mode)
        return self.classifier(x)

    def forward(self, i1, i2, mode: str = "train"):
        """Returns (f1, f2, change_feature, logits)."""
        if mode not in MODES:
            raise ValueError(f"forward: unknown mode {mode!r}")
        f1 = self.extract(i1, mode)
        f2 = self.extract(i2, mode)
        fc = self.fuse(f1, f2, mode)
        logits = self.head(fc, mode)
        return f1, f2, fc, logits

    # -- parameter plumbing --------------------------------------------------
    def _named_modules(self):
        mods = {}
        for i, (conv, bn) in enumerate(self.stem):
            mods[f"stem{i}.conv"] = conv
            mods[f"stem{i}.bn"] = bn
        mods["fuse.conv1"] = self.fuse_conv1
        mods["fuse.bn"] = self.fuse_bn
        mods["fuse.conv2"] = self.fuse_conv2
        mods["head.deconv1"] = self.deconv1
        mods["head.deconv2"] = self.deconv2
        mods["head.classifier"] = self.classifier
        for name, blk in (("head.res1", self.res1), ("head.res2", self.res2)):
            for sub, m in blk.modules().items():
                mods[f"{name}.{sub}"] = m
        return mods

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for name, mod in self._named_modules().items():
            for pname, p in mod.params().items():
                out[f"{name}.{pname}"] = p
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for name, mod in self._named_modules().items():
            if isinstance(mod, BatchNorm):
                for bname, b in mod.buffers().items():
                    out[f"{name}.{bname}"] = b
        return out

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.parameters().values():
            p.requires_grad = flag

    def state(self) -> dict[str, np.ndarray]:
        st = {f"param.{k}": p.data.copy() for k, p in self.parameters().items()}
        st.update({f"buffer.{k}": b.copy() for k, b in self.buffers().items()})
        return st

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        for key, value in state.items():
            scope, _, name = key.partition(".")
            if scope == "param":
                if params[name].data.shape != value.shape:
                    raise ShapeMismatch(
                        f"load_state: {name} shape {value.shape} != {params[name].data.shape}")
                params[name].data = value.copy()
        for mod_name, mod in self._named_modules().items():
            if isinstance(mod, BatchNorm):
                mod.set_buffers({
                    "running_mean": state[f"buffer.{mod_name}.running_mean"],
                    "running_var": state[f"buffer.{mod_name}.running_var"],
                })

    def copy(self) -> "ChangeDetector":
        twin = ChangeDetector(self.cfg, np.random.default_rng(0))
        twin.load_state(self.state())
        return twin


def parameter_count(model: ChangeDetector) -> int:
    return sum(p.data.size for p in model.parameters().values())


def change_map(logits: np.ndarray) -> np.ndarray:
    """Argmax over the two logit channels -> {0,1} map."""
    logits = np.asarray(logits)
    return (logits[..., 1] > logits[..., 0]).astype(np.uint8)


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, model: ChangeDetector, meta: dict | None = None) -> None:
    """Directory of named .cdtk tensors plus a JSON config."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    info = {"model": model.cfg.to_dict(), "meta": meta or {}}
    (root / "config.json").write_text(json.dumps(info, indent=2, sort_keys=True))
    for key, value in model.state().items():
        write_tensor(root / f"{key}.cdtk", value)


def load_checkpoint(path) -> tuple[ChangeDetector, dict]:
    root = Path(path)
    info = json.loads((root / "config.json").read_text())
    cfg = ModelConfig.from_dict(info["model"])
    model = ChangeDetector(cfg, np.random.default_rng(0))
    state = {p.stem: read_tensor(p) for p in sorted(root.glob("*.cdtk"))}
    model.load_state(state)
    return model, info.get("meta", {})
