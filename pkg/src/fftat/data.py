"""Synthetic two-domain glyph datasets, an image-folder loader and paired batch streams.

Source images are dark grayscale glyphs on white. Target images draw the
same glyphs in a random saturated colour over a coloured texture, plus
Gaussian pixel noise. Target labels only ever live on :class:`EvalSet`;
training batches carry target images alone.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

GLYPHS = ("square", "circle", "triangle", "cross", "ring", "diamond", "x", "bars")
IMAGE_EXTS = (".png", ".ppm")


@dataclass
class LabeledSet:
    images: np.ndarray  # (n, C, H, W) float32 in [0, 1]
    labels: np.ndarray  # (n,) int64
    class_names: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.images)


@dataclass
class UnlabeledSet:
    images: np.ndarray

    def __len__(self) -> int:
        return len(self.images)


@dataclass
class EvalSet:
    """Labelled target data, for evaluation only."""
    images: np.ndarray
    labels: np.ndarray
    class_names: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.images)

    def unlabeled(self) -> UnlabeledSet:
        return UnlabeledSet(self.images)


@dataclass
class DomainBatch:
    source_images: np.ndarray
    source_labels: np.ndarray
    target_images: np.ndarray

    @property
    def domain_labels(self) -> np.ndarray:
        return np.concatenate([np.ones(len(self.source_images)), np.zeros(len(self.target_images))])


# ---------------------------------------------------------------- rendering


def glyph_mask(kind: str, size: int, cx: float, cy: float, r: float, angle: float = 0.0) -> np.ndarray:
    """Boolean (size, size) mask of a glyph centred at (cx, cy) with half-extent r."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    dx, dy = xx - cx, yy - cy
    c, s = np.cos(angle), np.sin(angle)
    u, v = c * dx + s * dy, -s * dx + c * dy
    w = max(1.5, 0.28 * r)  # stroke half-width
    if kind == "square":
        return (np.abs(u) <= r) & (np.abs(v) <= r)
    if kind == "circle":
        return u * u + v * v <= r * r
    if kind == "triangle":
        # apex up; inside all three half-planes
        h = 1.6 * r
        top = -h / 2
        return (v >= top) & (v <= h / 2) & (np.abs(u) <= (v - top) / h * r * 1.1)
    if kind == "cross":
        return ((np.abs(u) <= w) & (np.abs(v) <= r)) | ((np.abs(v) <= w) & (np.abs(u) <= r))
    if kind == "ring":
        d = np.sqrt(u * u + v * v)
        return (d <= r) & (d >= r - 2 * w)
    if kind == "diamond":
        return np.abs(u) + np.abs(v) <= r
    if kind == "x":
        a, b = (u + v) / np.sqrt(2), (u - v) / np.sqrt(2)
        return ((np.abs(a) <= w) | (np.abs(b) <= w)) & (np.abs(u) <= r) & (np.abs(v) <= r)
    if kind == "bars":
        return (np.abs(u) <= r) & (np.abs(v) <= r) & ((np.floor((v + r) / (2 * w)) % 2) == 0)
    raise ValueError(f"unknown glyph {kind!r}")


def _random_mask(rng: np.random.Generator, kind: str, size: int) -> np.ndarray:
    r = rng.uniform(0.24, 0.34) * size
    jitter = 0.12 * size
    cx = size / 2 + rng.uniform(-jitter, jitter)
    cy = size / 2 + rng.uniform(-jitter, jitter)
    return glyph_mask(kind, size, cx, cy, r, rng.uniform(-0.25, 0.25))


def render_source(rng: np.random.Generator, kind: str, size: int) -> np.ndarray:
    mask = _random_mask(rng, kind, size)
    bg = 1.0 - rng.uniform(0.0, 0.1)
    fg = rng.uniform(0.0, 0.3)
    img = np.where(mask, fg, bg)
    return np.repeat(img[None], 3, axis=0)


def _texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """Coloured sinusoidal grating blended with a coarse checkerboard, (3, size, size)."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    theta = rng.uniform(0, np.pi)
    freq = rng.uniform(0.15, 0.45)
    grating = 0.5 + 0.5 * np.sin(freq * (np.cos(theta) * xx + np.sin(theta) * yy) + rng.uniform(0, 2 * np.pi))
    cell = int(rng.integers(3, 9))
    checker = ((xx // cell + yy // cell) % 2).astype(np.float64)
    t = 0.6 * grating + 0.4 * checker
    c1 = np.array(colorsys.hsv_to_rgb(rng.uniform(), rng.uniform(0.2, 0.8), rng.uniform(0.55, 1.0)))
    c2 = np.array(colorsys.hsv_to_rgb(rng.uniform(), rng.uniform(0.2, 0.8), rng.uniform(0.55, 1.0)))
    return c1[:, None, None] * (1 - t) + c2[:, None, None] * t


def render_target(rng: np.random.Generator, kind: str, size: int, noise: float = 0.1) -> np.ndarray:
    mask = _random_mask(rng, kind, size)
    fg = np.array(colorsys.hsv_to_rgb(rng.uniform(), rng.uniform(0.6, 1.0), rng.uniform(0.1, 0.45)))
    img = np.where(mask[None], fg[:, None, None], _texture(rng, size))
    img = img + rng.normal(0.0, noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def _render_set(rng: np.random.Generator, render, n_per_class: int, num_classes: int, size: int):
    labels = np.repeat(np.arange(num_classes), n_per_class)
    labels = labels[rng.permutation(len(labels))]
    images = np.stack([render(rng, GLYPHS[k], size) for k in labels]).astype(np.float32)
    return images, labels.astype(np.int64)


def gen_synthetic_pair(seed: int, n_per_class: int, num_classes: int = 4,
                       image_size: int = 32) -> tuple[LabeledSet, EvalSet]:
    """Deterministic (source, target) pair; a pure function of its arguments."""
    if not 1 <= num_classes <= len(GLYPHS):
        raise ValueError(f"num_classes must be in [1, {len(GLYPHS)}], got {num_classes}")
    src_seq, tgt_seq = np.random.SeedSequence(seed).spawn(2)
    names = list(GLYPHS[:num_classes])
    xs, ys = _render_set(np.random.default_rng(src_seq), render_source, n_per_class, num_classes, image_size)
    xt, yt = _render_set(np.random.default_rng(tgt_seq), render_target, n_per_class, num_classes, image_size)
    return LabeledSet(xs, ys, names), EvalSet(xt, yt, names)


# ---------------------------------------------------------------- folders


def _load_image(path: Path, image_size: int) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if im.size != (image_size, image_size):
                im = im.resize((image_size, image_size), Image.NEAREST)
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except Exception as exc:  # PIL raises a zoo of exception types
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return arr.transpose(2, 0, 1)


def load_folder(path, image_size: int = 32) -> LabeledSet:
    """Load ``root/<class_name>/*.png|ppm``; labels follow sorted class names."""
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset folder {root} does not exist")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise ValueError(f"no class folders under {root}")
    images, labels = [], []
    for k, name in enumerate(classes):
        files = sorted(f for f in (root / name).iterdir() if f.suffix.lower() in IMAGE_EXTS)
        if not files:
            raise ValueError(f"class folder {root / name} has no .png/.ppm images")
        for f in files:
            images.append(_load_image(f, image_size))
            labels.append(k)
    return LabeledSet(np.stack(images), np.asarray(labels, dtype=np.int64), classes)


def write_folder(images: np.ndarray, labels: np.ndarray, class_names: list[str], path) -> Path:
    root = Path(path)
    for name in class_names:
        (root / name).mkdir(parents=True, exist_ok=True)
    counters = [0] * len(class_names)
    for img, y in zip(images, labels):
        arr = np.round(np.clip(img, 0, 1).transpose(1, 2, 0) * 255).astype(np.uint8)
        Image.fromarray(arr, "RGB").save(root / class_names[y] / f"{counters[y]:05d}.png")
        counters[y] += 1
    return root


# ---------------------------------------------------------------- batches


class _Shuffler:
    """Position stream over ``n`` items, reshuffled every epoch from (seed, stream, epoch)."""

    def __init__(self, n: int, seed: int, stream: int):
        self.n, self.seed, self.stream = n, seed, stream
        self._perms: dict[int, np.ndarray] = {}

    def perm(self, epoch: int) -> np.ndarray:
        if epoch not in self._perms:
            if len(self._perms) > 4:
                self._perms.pop(min(self._perms))
            rng = np.random.default_rng([self.seed, self.stream, epoch])
            self._perms[epoch] = rng.permutation(self.n)
        return self._perms[epoch]

    def take(self, start: int, count: int) -> np.ndarray:
        pos = np.arange(start, start + count)
        epochs, offsets = pos // self.n, pos % self.n
        return np.array([self.perm(e)[o] for e, o in zip(epochs, offsets)], dtype=np.int64)


class BatchStream:
    """Infinite, step-indexed stream of paired source/target batches.

    ``batch(step)`` is a pure function of (seed, step), so a resumed run
    continues with exactly the batches an uninterrupted one would see.
    """

    def __init__(self, source: LabeledSet, target, batch_size: int, seed: int):
        if batch_size > min(len(source), len(target)):
            raise ValueError(f"batch size {batch_size} exceeds a domain's sample count "
                             f"({len(source)} source, {len(target)} target)")
        self.source, self.target_images = source, np.asarray(target.images)
        self.batch_size = batch_size
        self._src = _Shuffler(len(source), seed, 0)
        self._tgt = _Shuffler(len(self.target_images), seed, 1)

    def batch(self, step: int) -> DomainBatch:
        b = self.batch_size
        si = self._src.take(step * b, b)
        ti = self._tgt.take(step * b, b)
        return DomainBatch(self.source.images[si], self.source.labels[si], self.target_images[ti])

    def __iter__(self) -> Iterator[DomainBatch]:
        step = 0
        while True:
            yield self.batch(step)
            step += 1


def batch_iter(set_s: LabeledSet, set_t, batch_size: int, seed: int) -> BatchStream:
    return BatchStream(set_s, set_t, batch_size, seed)
