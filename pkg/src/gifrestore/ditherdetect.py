"""Dithered / non-dithered routing from three hand-built texture features.

Error diffusion leaves a fine, high-entropy dot pattern; plain quantization
leaves large flat regions separated by thin contours. A logistic regression
over the features below tells the two apart.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dequant import DITHERED, NON_DITHERED
from .metrics import image_gradients

FEATURE_NAMES = ("checkerboard_energy", "local_distinct_rate", "gradient_entropy")
ENTROPY_BINS = 32
DISTINCT_THRESHOLD = 4


@dataclass(frozen=True)
class DitherFeatures:
    checkerboard_energy: float
    local_distinct_rate: float
    gradient_entropy: float

    def as_array(self) -> np.ndarray:
        return np.array([self.checkerboard_energy, self.local_distinct_rate, self.gradient_entropy])


def extract_features(img: np.ndarray) -> DitherFeatures:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError("feature extraction needs an RGB image of at least 3x3")
    f = img.astype(np.float64)

    # half the 2x2 mixed difference, so a 0/255 checkerboard scores 255
    mixed = f[:-1, :-1] - f[:-1, 1:] - f[1:, :-1] + f[1:, 1:]
    checker = float(np.mean(np.abs(mixed))) / 2

    u8 = np.clip(np.round(f), 0, 255).astype(np.int64)
    keys = (u8[..., 0] << 16) | (u8[..., 1] << 8) | u8[..., 2]
    h, w = keys.shape
    hood = np.stack([keys[dy:h - 2 + dy, dx:w - 2 + dx] for dy in range(3) for dx in range(3)], axis=-1)
    hood = np.sort(hood, axis=-1)
    distinct = 1 + np.count_nonzero(np.diff(hood, axis=-1), axis=-1)
    rate = float(np.mean(distinct >= DISTINCT_THRESHOLD))

    gx, gy = image_gradients(f)
    mag = np.sqrt(gx * gx + gy * gy)
    hist, _ = np.histogram(mag, bins=ENTROPY_BINS, range=(0.0, 255.0 * math.sqrt(2)))
    p = hist[hist > 0] / hist.sum()
    entropy = float(-np.sum(p * np.log2(p))) + 0.0  # + 0.0 turns -0.0 into 0.0

    return DitherFeatures(checker, rate, entropy)


@dataclass
class LinearClassifier:
    """Logistic model in raw feature space: dithered iff w . f + b > 0."""

    weights: np.ndarray
    bias: float
    feature_means: np.ndarray
    feature_scales: np.ndarray

    def decision(self, feats: DitherFeatures) -> float:
        return float(np.dot(self.weights, feats.as_array()) + self.bias)

    def predict(self, feats: DitherFeatures) -> str:
        return DITHERED if self.decision(feats) > 0 else NON_DITHERED

    def to_json(self) -> str:
        return json.dumps({
            "features": list(FEATURE_NAMES),
            "weights": [float(x) for x in self.weights],
            "bias": float(self.bias),
            "feature_means": [float(x) for x in self.feature_means],
            "feature_scales": [float(x) for x in self.feature_scales],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "LinearClassifier":
        d = json.loads(text)
        if tuple(d.get("features", FEATURE_NAMES)) != FEATURE_NAMES:
            raise ValueError(f"model was trained on features {d['features']}")
        return cls(np.array(d["weights"], float), float(d["bias"]),
                   np.array(d["feature_means"], float), np.array(d["feature_scales"], float))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "LinearClassifier":
        return cls.from_json(Path(path).read_text())


def fit(pairs: list[tuple[DitherFeatures, str]], seed: int = 0, iterations: int = 20000,
        learning_rate: float = 1.0, l2: float = 1e-4) -> LinearClassifier:
    """Full-batch gradient descent on the logistic loss over standardized features."""
    labels = [lab for _, lab in pairs]
    for lab in labels:
        if lab not in (DITHERED, NON_DITHERED):
            raise ValueError(f"unknown label {lab!r}")
    if len(set(labels)) < 2:
        raise ValueError("training data must contain both dithered and non-dithered examples")

    x = np.array([f.as_array() for f, _ in pairs])
    y = np.array([1.0 if lab == DITHERED else 0.0 for lab in labels])
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    z = (x - mean) / scale

    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 0.01, z.shape[1])
    b = 0.0
    n = len(y)
    for _ in range(iterations):
        p = 1.0 / (1.0 + np.exp(-np.clip(z @ w + b, -500, 500)))
        err = p - y
        w -= learning_rate * (z.T @ err / n + l2 * w)
        b -= learning_rate * float(err.mean())

    return LinearClassifier(weights=w / scale, bias=b - float(np.sum(w * mean / scale)),
                            feature_means=mean, feature_scales=scale)


def classify(img: np.ndarray, model: LinearClassifier) -> str:
    return model.predict(extract_features(img))


def classify_clip(frames: list[np.ndarray], model: LinearClassifier) -> str:
    """Majority vote over frames; ties route to non-dithered."""
    votes = sum(classify(f, model) == DITHERED for f in frames)
    return DITHERED if votes * 2 > len(frames) else NON_DITHERED


def accuracy(model: LinearClassifier, pairs: list[tuple[DitherFeatures, str]]) -> float:
    return float(np.mean([model.predict(f) == lab for f, lab in pairs]))
