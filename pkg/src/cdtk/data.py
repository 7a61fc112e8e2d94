"""Image-pair datasets: synthetic scene generation, augmentation, PNG/manifest IO.

Synthetic scenes put bright rectangular "buildings" on a shared textured
background. Each building either persists or flips (appears/disappears)
between the two times with a configurable probability; the label marks
exactly the flipped buildings. Small dark distractor objects always
change but are excluded from the label, so task-irrelevant change exists
in every scene.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .resample import resize2d


@dataclass
class ImagePair:
    t1: np.ndarray            # (H, W, 3) float64 in [0, 1]
    t2: np.ndarray
    label: np.ndarray         # (H, W) uint8 in {0, 1}; 1 = change

    def validate(self) -> None:
        if self.t1.shape != self.t2.shape or self.t1.shape[:2] != self.label.shape:
            raise ValueError(
                f"ImagePair: extents disagree t1={self.t1.shape} t2={self.t2.shape} "
                f"label={self.label.shape}")
        for name, img in (("t1", self.t1), ("t2", self.t2)):
            if img.min() < 0.0 or img.max() > 1.0:
                raise ValueError(f"ImagePair: {name} outside [0, 1]")
        if not np.isin(self.label, (0, 1)).all():
            raise ValueError("ImagePair: label must be binary")


@dataclass
class SyntheticSceneSpec:
    size: int = 64
    texture_seed: int = 0
    building_count: tuple[int, int] = (3, 6)
    change_prob: float = 0.5
    distractor_count: tuple[int, int] = (2, 5)
    clutter_count: tuple[int, int] = (3, 7)
    rng_seed: int = 0


def _texture(rng: np.random.Generator, size: int) -> np.ndarray:
    coarse = rng.uniform(size=(size // 8 + 2, size // 8 + 2, 3))
    tex = resize2d(coarse, size, size, "bicubic")
    tex = (tex - tex.min()) / max(tex.max() - tex.min(), 1e-9)
    return 0.22 + 0.28 * tex


def _place_rect(rng, occupied, size, lo, hi, attempts=40):
    """Random free axis-aligned rectangle, or None if placement keeps colliding."""
    for _ in range(attempts):
        rh = int(rng.integers(lo, hi + 1))
        rw = int(rng.integers(lo, hi + 1))
        y = int(rng.integers(0, size - rh + 1))
        x = int(rng.integers(0, size - rw + 1))
        y0, y1 = max(y - 1, 0), min(y + rh + 1, size)
        x0, x1 = max(x - 1, 0), min(x + rw + 1, size)
        if not occupied[y0:y1, x0:x1].any():
            occupied[y:y + rh, x:x + rw] = True
            return (y, x, rh, rw)
    return None


def generate_synthetic_info(spec: SyntheticSceneSpec) -> tuple[ImagePair, dict]:
    """Deterministic bi-temporal pair plus the placed-object records."""
    rng = np.random.default_rng(np.random.SeedSequence((spec.rng_seed, spec.texture_seed)))
    size = spec.size
    background = _texture(rng, size)
    t1 = background.copy()
    t2 = background.copy()
    present1 = np.zeros((size, size), dtype=bool)
    present2 = np.zeros((size, size), dtype=bool)
    occupied = np.zeros((size, size), dtype=bool)
    info = {"buildings": [], "distractors": []}

    lo, hi = max(6, size // 8), max(8, size // 3)
    n_buildings = int(rng.integers(spec.building_count[0], spec.building_count[1] + 1))
    for _ in range(n_buildings):
        rect = _place_rect(rng, occupied, size, lo, hi)
        # contrast varies: some buildings barely rise above the background
        color = rng.uniform(0.48, 0.92) + rng.uniform(-0.05, 0.05, size=3)
        changed = rng.uniform() < spec.change_prob
        appears = rng.uniform() < 0.5
        if rect is None:
            continue
        y, x, rh, rw = rect
        in_t1 = (not changed) or (not appears)
        in_t2 = (not changed) or appears
        patch = np.clip(color + rng.normal(0.0, 0.015, size=(rh, rw, 3)), 0.0, 1.0)
        if in_t1:
            t1[y:y + rh, x:x + rw] = patch
            present1[y:y + rh, x:x + rw] = True
        if in_t2:
            t2[y:y + rh, x:x + rw] = patch
            present2[y:y + rh, x:x + rw] = True
        info["buildings"].append({"rect": rect, "in_t1": in_t1, "in_t2": in_t2})

    # persistent bright clutter: building-like, present at both times, unlabelled
    n_clutter = int(rng.integers(spec.clutter_count[0], spec.clutter_count[1] + 1))
    for _ in range(n_clutter):
        rect = _place_rect(rng, occupied, size, max(3, size // 16), max(5, size // 8))
        color = rng.uniform(0.5, 0.9) + rng.uniform(-0.05, 0.05, size=3)
        if rect is None:
            continue
        y, x, rh, rw = rect
        patch = np.clip(color + rng.normal(0.0, 0.015, size=(rh, rw, 3)), 0.0, 1.0)
        t1[y:y + rh, x:x + rw] = patch
        t2[y:y + rh, x:x + rw] = patch
        info["clutter"] = info.get("clutter", []) + [{"rect": rect}]

    n_distract = int(rng.integers(spec.distractor_count[0], spec.distractor_count[1] + 1))
    for _ in range(n_distract):
        rect = _place_rect(rng, occupied, size, 2, max(4, size // 10))
        # mid-tone shades: visually between background and buildings
        shade = rng.uniform(0.05, 0.45, size=3)
        in_t2 = rng.uniform() < 0.5  # distractors always flip; never labelled
        if rect is None:
            continue
        y, x, rh, rw = rect
        (t2 if in_t2 else t1)[y:y + rh, x:x + rw] = shade
        info["distractors"].append({"rect": rect, "in_t2": in_t2})

    # seasonal-style drift on the second time: texture change plus photometry
    drift = _texture(rng, size) - 0.36
    t2 = np.clip(t2 + 0.35 * drift, 0.0, 1.0)
    t2 = np.clip(t2 * (1.0 + rng.uniform(-0.08, 0.08)) + rng.uniform(-0.05, 0.05), 0.0, 1.0)
    t1 = np.clip(t1, 0.0, 1.0)
    label = (present1 ^ present2).astype(np.uint8)
    return ImagePair(t1=t1, t2=t2, label=label), info


def generate_synthetic(spec: SyntheticSceneSpec) -> ImagePair:
    return generate_synthetic_info(spec)[0]


def make_dataset(count: int, size: int, seed: int, change_prob: float = 0.6) -> list[ImagePair]:
    return [generate_synthetic(SyntheticSceneSpec(size=size, change_prob=change_prob,
                                                  rng_seed=seed * 100003 + i))
            for i in range(count)]


# -- geometric augmentation ---------------------------------------------------

_AUGMENT_OPS = ("identity", "hflip", "vflip", "rot90", "rot180", "rot270")


def _apply_geom(arr: np.ndarray, op: str) -> np.ndarray:
    if op == "identity":
        return arr.copy()
    if op == "hflip":
        return np.flip(arr, axis=1).copy()
    if op == "vflip":
        return np.flip(arr, axis=0).copy()
    k = {"rot90": 1, "rot180": 2, "rot270": 3}[op]
    return np.rot90(arr, k, axes=(0, 1)).copy()


def augment(pair: ImagePair, rng: np.random.Generator) -> ImagePair:
    """One of six flips/rotations applied identically to t1, t2, and label."""
    op = _AUGMENT_OPS[int(rng.integers(len(_AUGMENT_OPS)))]
    return ImagePair(t1=_apply_geom(pair.t1, op), t2=_apply_geom(pair.t2, op),
                     label=_apply_geom(pair.label, op))


def crop_batch(entries: list[ImagePair], crop: int, batch: int,
               rng: np.random.Generator) -> list[ImagePair]:
    """Aligned random crops from randomly drawn entries."""
    out = []
    for _ in range(batch):
        pair = entries[int(rng.integers(len(entries)))]
        h, w = pair.label.shape
        if crop > h or crop > w:
            raise ValueError(f"crop_batch: crop {crop} exceeds extents {(h, w)}")
        oy = int(rng.integers(0, h - crop + 1))
        ox = int(rng.integers(0, w - crop + 1))
        out.append(ImagePair(t1=pair.t1[oy:oy + crop, ox:ox + crop].copy(),
                             t2=pair.t2[oy:oy + crop, ox:ox + crop].copy(),
                             label=pair.label[oy:oy + crop, ox:ox + crop].copy()))
    return out


# -- PNG / manifest IO --------------------------------------------------------

def save_png(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim == 2:  # binary label -> {0, 255}
        Image.fromarray((img.astype(np.uint8) * 255), mode="L").save(path)
    else:
        Image.fromarray(np.round(np.clip(img, 0, 1) * 255).astype(np.uint8), mode="RGB").save(path)


def load_png(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode == "L":
                return (np.asarray(im) > 127).astype(np.uint8)
            return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, SyntaxError) as exc:
        raise OSError(f"cannot decode image {path}: {exc}") from exc


def save_dataset(dirpath, pairs: list[ImagePair], split: str = "train") -> Path:
    """PNG triplets plus a manifest; returns the manifest path."""
    root = Path(dirpath)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, pair in enumerate(pairs):
        names = {k: f"{split}_{i:04d}_{k}.png" for k in ("t1", "t2", "label")}
        save_png(root / names["t1"], pair.t1)
        save_png(root / names["t2"], pair.t2)
        save_png(root / names["label"], pair.label)
        entries.append(names)
    manifest = {"root": ".", "split": split, "entries": entries}
    path = root / f"manifest_{split}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_manifest(path) -> list[ImagePair]:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read manifest {path}: {exc}") from exc
    root = (path.parent / manifest.get("root", ".")).resolve()
    pairs = []
    for entry in manifest["entries"]:
        try:
            pair = ImagePair(t1=load_png(root / entry["t1"]), t2=load_png(root / entry["t2"]),
                             label=load_png(root / entry["label"]))
        except OSError as exc:
            raise OSError(f"manifest entry {entry}: {exc}") from exc
        pair.validate()
        pairs.append(pair)
    return pairs
