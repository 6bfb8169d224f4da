"""Two-layer MLP source-only baseline, used to measure the synthetic domain gap."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .losses import classification_loss
from .numerics import Tensor


@dataclass
class MLPConfig:
    hidden: int = 128
    steps: int = 1500
    batch_size: int = 32
    lr: float = 0.02
    seed: int = 0


class MLP:
    def __init__(self, in_dim: int, num_classes: int, cfg: MLPConfig):
        rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.w1 = Tensor(rng.normal(0, 1 / np.sqrt(in_dim), (in_dim, cfg.hidden)), True)
        self.b1 = Tensor(np.zeros(cfg.hidden), True)
        self.w2 = Tensor(rng.normal(0, 1 / np.sqrt(cfg.hidden), (cfg.hidden, num_classes)), True)
        self.b2 = Tensor(np.zeros(num_classes), True)
        self._rng = rng

    @property
    def params(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]

    def logits(self, images: np.ndarray) -> Tensor:
        x = Tensor(images.reshape(len(images), -1) - 0.5)  # centred pixels
        return nx.relu(x @ self.w1 + self.b1) @ self.w2 + self.b2

    def fit(self, images: np.ndarray, labels: np.ndarray) -> "MLP":
        for _ in range(self.cfg.steps):
            idx = self._rng.integers(0, len(images), self.cfg.batch_size)
            classification_loss(self.logits(images[idx]), labels[idx]).backward()
            for p in self.params:
                p.data -= self.cfg.lr * p.grad
                p.grad = None
        return self

    def accuracy(self, images: np.ndarray, labels: np.ndarray) -> float:
        pred = self.logits(images).data.argmax(-1)
        return float(np.mean(pred == labels))


def train_mlp(source, num_classes: int, cfg: MLPConfig | None = None) -> MLP:
    cfg = cfg or MLPConfig()
    return MLP(int(np.prod(source.images.shape[1:])), num_classes, cfg).fit(source.images, source.labels)
