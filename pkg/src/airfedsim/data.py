"""Per-device sample streams: synthetic Gaussian-mixture tasks and IDX files.

Each (device, round) pair owns a keyed RNG stream, so the full sample
sequence is a pure function of (seed, device, round) and train/holdout
randomness never overlaps (distinct purpose labels in :mod:`.rng`).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .nn import Sample

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class SyntheticTaskSpec:
    """Gaussian mixture classification task: one spherical cloud per class."""

    class_means: np.ndarray  # (class_count, feature_dim)
    noise_std: float
    label_noise_prob: float = 0.0

    def __post_init__(self):
        self.class_means = np.ascontiguousarray(self.class_means, dtype=np.float64)
        if self.class_means.ndim != 2 or self.class_means.shape[0] < 2:
            raise ValueError("class_means must be (class_count >= 2, feature_dim)")
        if self.noise_std <= 0:
            raise ValueError("noise_std must be positive")
        if not 0.0 <= self.label_noise_prob < 1.0:
            raise ValueError("label_noise_prob must lie in [0, 1)")
        c = self.class_means.shape[0]
        for i in range(c):
            for j in range(i + 1, c):
                if np.array_equal(self.class_means[i], self.class_means[j]):
                    raise ValueError(f"class means {i} and {j} coincide")

    @property
    def class_count(self) -> int:
        return self.class_means.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.class_means.shape[1]


def make_task(
    class_count: int,
    feature_dim: int,
    seed: int,
    noise_std: float = 0.6,
    label_noise_prob: float = 0.0,
    min_separation: float = 1.0,
) -> SyntheticTaskSpec:
    """Unit-norm random class means with pairwise distance >= min_separation."""
    gen = rngmod.stream(seed, "task")
    for _ in range(1000):
        means = gen.standard_normal((class_count, feature_dim))
        means /= np.linalg.norm(means, axis=1, keepdims=True)
        dists = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)
        np.fill_diagonal(dists, np.inf)
        if dists.min() >= min_separation:
            return SyntheticTaskSpec(means, noise_std, label_noise_prob)
    raise RuntimeError(
        f"could not place {class_count} unit vectors in {feature_dim}-d at "
        f"separation {min_separation}"
    )


def _draw_synthetic(spec: SyntheticTaskSpec, gen: np.random.Generator, n: int):
    labels = gen.integers(0, spec.class_count, size=n)
    noise = gen.standard_normal((n, spec.feature_dim)) * spec.noise_std
    X = spec.class_means[labels] + noise
    if spec.label_noise_prob > 0.0:
        flip = gen.random(n) < spec.label_noise_prob
        resampled = gen.integers(0, spec.class_count, size=n)
        labels = np.where(flip, resampled, labels)
    return X, labels.astype(np.int64)


class SampleStream:
    """Synthetic stream for one (device, round); draws advance the stream."""

    def __init__(self, spec: SyntheticTaskSpec, seed: int, device: int,
                 round_index: int = 0, repeat: int = 0, purpose: str = "train"):
        self.spec = spec
        self.device = device
        self.stream_id = (purpose, repeat, device, round_index)
        self._gen = rngmod.stream(
            seed, purpose, repeat=repeat, device=device, round_index=round_index
        )

    def draw_arrays(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        if n < 1:
            raise ValueError("n must be >= 1")
        return _draw_synthetic(self.spec, self._gen, n)

    def draw(self, n: int) -> list[Sample]:
        X, y = self.draw_arrays(n)
        return [Sample(X[i], int(y[i])) for i in range(n)]


class IdxStream:
    """File-backed stream: a per-device keyed shuffle consumed sequentially.

    Raises once the underlying pool is exhausted; file data is never reused
    within one run.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray, seed: int, device: int,
                 repeat: int = 0):
        self.X = X
        self.y = y
        self.device = device
        self.stream_id = ("train-idx", repeat, device)
        order_gen = rngmod.stream(seed, "train", repeat=repeat, device=device)
        self._order = order_gen.permutation(X.shape[0])
        self._cursor = 0

    def draw_arrays(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        if n < 1:
            raise ValueError("n must be >= 1")
        if self._cursor + n > self._order.shape[0]:
            raise RuntimeError(
                f"file-backed stream exhausted: device {self.device} needs {n} more "
                f"samples but only {self._order.shape[0] - self._cursor} remain"
            )
        idx = self._order[self._cursor : self._cursor + n]
        self._cursor += n
        return self.X[idx], self.y[idx]

    def draw(self, n: int) -> list[Sample]:
        X, y = self.draw_arrays(n)
        return [Sample(X[i], int(y[i])) for i in range(n)]


def holdout(spec: SyntheticTaskSpec, n: int, seed: int) -> list[Sample]:
    """Evaluation samples from the reserved holdout stream (n = 0 is allowed)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return []
    gen = rngmod.stream(seed, "holdout")
    X, y = _draw_synthetic(spec, gen, n)
    return [Sample(X[i], int(y[i])) for i in range(n)]


def _read_exact(fh, count: int, path: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise ValueError(f"{path}: truncated file (wanted {count} bytes, got {len(buf)})")
    return buf


def load_idx_arrays(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Parse an IDX image/label file pair; pixels scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, str(images_path)))
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
        payload = fh.read()
    expected = count * rows * cols
    if len(payload) != expected:
        raise ValueError(
            f"{images_path}: header promises {count} images of {rows}x{cols} "
            f"({expected} bytes) but payload has {len(payload)}"
        )
    X = np.frombuffer(payload, dtype=np.uint8).astype(np.float64).reshape(count, rows * cols)
    X /= 255.0

    with open(labels_path, "rb") as fh:
        magic, label_count = struct.unpack(">II", _read_exact(fh, 8, str(labels_path)))
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
        label_payload = fh.read()
    if len(label_payload) != label_count:
        raise ValueError(
            f"{labels_path}: header promises {label_count} labels, payload has {len(label_payload)}"
        )
    if label_count != count:
        raise ValueError(f"image count {count} != label count {label_count}")
    y = np.frombuffer(label_payload, dtype=np.uint8).astype(np.int64)
    return X, y


def load_idx(images_path, labels_path) -> list[Sample]:
    X, y = load_idx_arrays(images_path, labels_path)
    return [Sample(X[i], int(y[i])) for i in range(X.shape[0])]
