"""Dense 3D/4D arrays and the handful of array algorithms everything else builds on.

Volumes are (channel, z, y, x) float32, label maps are (z, y, x) uint8.
All randomness flows through :class:`SeededRng`, which forks independent
substreams from string/int tags so call order elsewhere never perturbs a
stream.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage


class Shape3D(NamedTuple):
    depth: int
    height: int
    width: int

    def validate(self) -> "Shape3D":
        if min(self) < 1:
            raise ValueError(f"all dimensions must be >= 1, got {tuple(self)}")
        return self

    @property
    def voxels(self) -> int:
        return self.depth * self.height * self.width


@dataclass
class Volume:
    """Multi-channel 3D scalar field, data laid out (channel, z, y, x) row-major."""

    shape: Shape3D
    data: np.ndarray  # float32, (channels, depth, height, width)

    def __post_init__(self):
        self.shape = Shape3D(*self.shape).validate()
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.shape[1:] != tuple(self.shape):
            raise ValueError(
                f"data shape {self.data.shape} does not match volume shape {tuple(self.shape)}"
            )

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @classmethod
    def zeros(cls, channels: int, shape: Shape3D) -> "Volume":
        shape = Shape3D(*shape)
        return cls(shape, np.zeros((channels, *shape), dtype=np.float32))

    def require_finite(self, what: str = "volume") -> "Volume":
        if not np.all(np.isfinite(self.data)):
            raise ValueError(f"{what} contains non-finite values")
        return self

    def channel(self, k: int) -> np.ndarray:
        return self.data[k]


@dataclass
class LabelMap:
    """Per-voxel integer labels 0..num_labels, 0 = background."""

    shape: Shape3D
    labels: np.ndarray  # uint8, (depth, height, width)
    num_labels: int

    def __post_init__(self):
        self.shape = Shape3D(*self.shape).validate()
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if self.labels.shape != tuple(self.shape):
            raise ValueError(
                f"labels shape {self.labels.shape} does not match {tuple(self.shape)}"
            )
        if self.num_labels < 1:
            raise ValueError("num_labels must be >= 1")
        top = int(self.labels.max()) if self.labels.size else 0
        if top > self.num_labels:
            raise ValueError(f"label value {top} exceeds num_labels={self.num_labels}")

    @classmethod
    def zeros(cls, shape: Shape3D, num_labels: int) -> "LabelMap":
        shape = Shape3D(*shape)
        return cls(shape, np.zeros(tuple(shape), dtype=np.uint8), num_labels)


def _tag_words(tag) -> tuple[int, ...]:
    """Map a fork tag to uint32 words, independent of PYTHONHASHSEED."""
    if isinstance(tag, (int, np.integer)):
        v = int(tag) & 0xFFFFFFFFFFFFFFFF
        return (v & 0xFFFFFFFF, v >> 32)
    digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 8, 4))


@dataclass
class SeededRng:
    """Deterministic PCG64 stream; fork() derives independent substreams.

    Forking is a pure function of (seed, tag path), never of draw history,
    so evaluation order or concurrency cannot change a substream.
    """

    seed: int
    path: tuple = ()
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def fork(self, *tags) -> "SeededRng":
        words: tuple = ()
        for t in tags:
            words = words + _tag_words(t)
        return SeededRng(self.seed, self.path + words)

    # thin delegation; keep the surface small and explicit
    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def random(self, size=None):
        return self._gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice_index(self, n: int) -> int:
        """Uniform index in [0, n)."""
        return int(self._gen.integers(0, n))


def concat_channels(parts: Sequence[Volume]) -> Volume:
    """Stack volumes along the channel axis, first part's channels first."""
    if not parts:
        raise ValueError("concat_channels requires at least one volume")
    shape = parts[0].shape
    for p in parts[1:]:
        if p.shape != shape:
            raise ValueError(f"shape mismatch: {tuple(p.shape)} vs {tuple(shape)}")
    return Volume(shape, np.concatenate([p.data for p in parts], axis=0))


def softmax_channels(logits: Volume) -> Volume:
    """Per-voxel softmax over channels, stabilized by max subtraction."""
    if logits.channels < 2:
        raise ValueError("softmax needs at least 2 channels")
    logits.require_finite("logits")
    z = logits.data
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return Volume(logits.shape, e / e.sum(axis=0, keepdims=True))


def argmax_channels(prob: Volume) -> LabelMap:
    """Voxel label = index of maximal channel; ties go to the smaller index."""
    lab = np.argmax(prob.data, axis=0).astype(np.uint8)
    return LabelMap(prob.shape, lab, num_labels=prob.channels - 1)


_SIX_CONN = ndimage.generate_binary_structure(3, 1)


def connected_components(mask: np.ndarray) -> list[np.ndarray]:
    """6-connected components of a binary mask.

    Returns flat (z,y,x linearized) voxel indices per component, each sorted
    ascending; components ordered by decreasing size, ties by smallest index.
    """
    mask = np.asarray(mask).astype(bool)
    labeled, n = ndimage.label(mask, structure=_SIX_CONN)
    if n == 0:
        return []
    flat = labeled.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_labels = flat[order]
    # boundaries between runs of equal component ids in the sorted view
    edges = np.searchsorted(sorted_labels, np.arange(1, n + 2))
    comps = [order[edges[i] : edges[i + 1]] for i in range(n)]
    comps.sort(key=lambda idx: (-idx.size, int(idx[0])))
    return comps


def whiten(image: Volume) -> Volume:
    """Per-image intensity whitening: subtract mean, divide by std (floor 1e-6)."""
    x = image.data
    std = float(x.std())
    return Volume(image.shape, (x - x.mean()) / max(std, 1e-6))
