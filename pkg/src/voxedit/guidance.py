"""Clicks and everything derived from them: rasterization, Gaussian guidance
channels, prediction/ground-truth discrepancies, and simulated interaction.

Guidance channel layout is fixed so files and models interoperate: foreground
labels 1..L occupy channels 0..L-1, background clicks occupy channel L.

Smoothing is evaluated by splatting the truncated Gaussian kernel around each
click and summing per-voxel contributions in sorted order. Contribution sets
are mirror-invariant, so axis flips commute with smoothing bit-exactly, which
a separable convolution would not guarantee.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tensorops import (
    LabelMap,
    SeededRng,
    Shape3D,
    Volume,
    concat_channels,
    connected_components,
)

UNIFORM_IN_MASK = "uniform-in-mask"
UNIFORM_IN_LARGEST = "uniform-in-largest-component"


@dataclass(frozen=True)
class Click:
    label: int  # 0 = background
    z: int
    y: int
    x: int

    def in_bounds(self, shape: Shape3D) -> bool:
        return 0 <= self.z < shape.depth and 0 <= self.y < shape.height and 0 <= self.x < shape.width


@dataclass
class ClickSet:
    num_labels: int
    clicks: list[Click] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.clicks)

    def append(self, c: Click) -> None:
        self.clicks.append(c)

    def extend(self, other: "ClickSet") -> None:
        self.clicks.extend(other.clicks)

    def to_json(self) -> dict:
        return {
            "num_labels": self.num_labels,
            "clicks": [{"label": c.label, "z": c.z, "y": c.y, "x": c.x} for c in self.clicks],
        }

    @classmethod
    def from_json(cls, d: dict) -> "ClickSet":
        clicks = [Click(int(c["label"]), int(c["z"]), int(c["y"]), int(c["x"])) for c in d.get("clicks", [])]
        return cls(num_labels=int(d["num_labels"]), clicks=clicks)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass
class GuidanceConfig:
    sigma: float = 2.0
    truncation_radius: int = 5

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.truncation_radius < int(np.ceil(2 * self.sigma)):
            raise ValueError("truncation_radius must be >= ceil(2*sigma)")


@dataclass
class Discrepancy:
    """Per foreground label: false-negative and false-positive voxel masks."""

    false_negative: np.ndarray  # bool, (L, D, H, W)
    false_positive: np.ndarray  # bool, (L, D, H, W)

    @property
    def empty(self) -> bool:
        return not (self.false_negative.any() or self.false_positive.any())


def _channel_of(label: int, num_labels: int) -> int:
    return num_labels if label == 0 else label - 1


def zero_guidance(shape: Shape3D, num_labels: int) -> Volume:
    """(L+1)-channel all-zero guidance: the click-free network input."""
    if num_labels < 1:
        raise ValueError("num_labels must be >= 1")
    return Volume.zeros(num_labels + 1, shape)


def rasterize_clicks(clicks: ClickSet, shape: Shape3D) -> Volume:
    """Binary (L+1)-channel volume with 1 at every clicked voxel."""
    shape = Shape3D(*shape)
    out = Volume.zeros(clicks.num_labels + 1, shape)
    for c in clicks.clicks:
        if not 0 <= c.label <= clicks.num_labels:
            raise ValueError(f"click label {c.label} outside 0..{clicks.num_labels}")
        if not c.in_bounds(shape):
            raise ValueError(f"click {c} outside volume shape {tuple(shape)}")
        out.data[_channel_of(c.label, clicks.num_labels), c.z, c.y, c.x] = 1.0
    return out


def gaussian_kernel_value(dz: float, dy: float, dx: float, cfg: GuidanceConfig) -> float:
    """Truncated isotropic Gaussian, unnormalized (peak 1 at distance 0).

    Support is the cube max(|dz|,|dy|,|dx|) <= truncation_radius.
    """
    r = cfg.truncation_radius
    if max(abs(dz), abs(dy), abs(dx)) > r:
        return 0.0
    return float(np.exp(-(dz * dz + dy * dy + dx * dx) / (2.0 * cfg.sigma**2)))


def smooth_guidance(raster: Volume, cfg: GuidanceConfig) -> Volume:
    """Convolve each binary channel with the truncated Gaussian, then
    peak-normalize so any channel with clicks has maximum exactly 1."""
    d, h, w = raster.shape
    r = cfg.truncation_radius
    # kernel patch evaluated once; float32 to match the tensor dtype
    ax = np.arange(-r, r + 1, dtype=np.float32)
    zz, yy, xx = np.meshgrid(ax, ax, ax, indexing="ij")
    patch = np.exp(-(zz**2 + yy**2 + xx**2) / np.float32(2.0 * cfg.sigma**2)).astype(np.float32)

    out = Volume.zeros(raster.channels, raster.shape)
    for c in range(raster.channels):
        pts = np.argwhere(raster.data[c] > 0)
        if len(pts) == 0:
            continue
        contribs = np.zeros((len(pts), d, h, w), dtype=np.float32)
        for i, (z, y, x) in enumerate(pts):
            z0, z1 = max(0, z - r), min(d, z + r + 1)
            y0, y1 = max(0, y - r), min(h, y + r + 1)
            x0, x1 = max(0, x - r), min(w, x + r + 1)
            contribs[i, z0:z1, y0:y1, x0:x1] = patch[
                z0 - z + r : z1 - z + r, y0 - y + r : y1 - y + r, x0 - x + r : x1 - x + r
            ]
        if len(pts) == 1:
            chan = contribs[0]
        else:
            # sorted accumulation: per-voxel contribution multisets are
            # mirror-invariant, so flips/rotations commute bit-exactly
            chan = np.sort(contribs, axis=0).sum(axis=0, dtype=np.float32)
        out.data[c] = chan / chan.max()
    return out


def compute_discrepancy(pred: LabelMap, gt: LabelMap) -> Discrepancy:
    """FN_k = gt=k & pred!=k, FP_k = pred=k & gt!=k, per foreground label."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    if pred.num_labels != gt.num_labels:
        raise ValueError(f"num_labels mismatch: {pred.num_labels} vs {gt.num_labels}")
    L = gt.num_labels
    fn = np.zeros((L, *gt.shape), dtype=bool)
    fp = np.zeros((L, *gt.shape), dtype=bool)
    for k in range(1, L + 1):
        gk = gt.labels == k
        pk = pred.labels == k
        fn[k - 1] = gk & ~pk
        fp[k - 1] = pk & ~gk
    return Discrepancy(fn, fp)


def sample_click(mask: np.ndarray, label: int, strategy: str, rng: SeededRng) -> Click | None:
    """Uniform click inside a binary mask (optionally its largest component).

    Empty mask is a valid no-click outcome.
    """
    mask = np.asarray(mask).astype(bool)
    if strategy not in (UNIFORM_IN_MASK, UNIFORM_IN_LARGEST):
        raise ValueError(f"unknown strategy {strategy!r}")
    if not mask.any():
        return None
    if strategy == UNIFORM_IN_LARGEST:
        flat = connected_components(mask)[0]
    else:
        flat = np.flatnonzero(mask.ravel())
    idx = int(flat[rng.choice_index(len(flat))])
    z, y, x = np.unravel_index(idx, mask.shape)
    return Click(label, int(z), int(y), int(x))


def _discrepancy_components(disc: Discrepancy) -> list[tuple[int, bool, np.ndarray]]:
    """All 6-connected discrepancy components as (label, is_fp, flat indices),
    ordered largest first; deterministic tie-breaks."""
    entries = []
    L = disc.false_negative.shape[0]
    for k in range(1, L + 1):
        for is_fp, masks in ((False, disc.false_negative), (True, disc.false_positive)):
            for comp in connected_components(masks[k - 1]):
                entries.append((k, is_fp, comp))
    entries.sort(key=lambda e: (-e[2].size, int(e[2][0]), e[0], e[1]))
    return entries


def simulate_interaction_clicks(
    gt: LabelMap,
    pred: LabelMap | None,
    k: int,
    rng: SeededRng,
) -> ClickSet:
    """Simulate an annotator adding k clicks.

    Session start (no prediction): round-robin over foreground labels
    ascending, one uniform click inside each label's ground-truth region,
    until k clicks are placed. Labels with empty regions are skipped.

    Corrective (prediction given): each click targets the largest remaining
    discrepancy component; a false-negative component yields a click with
    that label, a false-positive component a background click. Components
    are consumed largest-first and wrap around if k exceeds their count.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    out = ClickSet(num_labels=gt.num_labels)
    shape = tuple(gt.shape)

    if pred is None:
        regions = {
            lab: np.flatnonzero((gt.labels == lab).ravel())
            for lab in range(1, gt.num_labels + 1)
        }
        active = [lab for lab in sorted(regions) if len(regions[lab])]
        if not active:
            return out
        i = 0
        while len(out) < k:
            lab = active[i % len(active)]
            flat = regions[lab]
            idx = int(flat[rng.choice_index(len(flat))])
            z, y, x = np.unravel_index(idx, shape)
            out.append(Click(lab, int(z), int(y), int(x)))
            i += 1
        return out

    comps = _discrepancy_components(compute_discrepancy(pred, gt))
    if not comps:
        return out
    for i in range(k):
        label, is_fp, flat = comps[i % len(comps)]
        idx = int(flat[rng.choice_index(len(flat))])
        z, y, x = np.unravel_index(idx, shape)
        out.append(Click(0 if is_fp else label, int(z), int(y), int(x)))
    return out


def build_input(image: Volume, guidance: Volume) -> Volume:
    """Network input tensor: image channels first, then the L+1 guidance channels."""
    if image.shape != guidance.shape:
        raise ValueError(f"shape mismatch: {tuple(image.shape)} vs {tuple(guidance.shape)}")
    if guidance.channels < 2:
        raise ValueError("guidance must have at least 2 channels (L+1 with L>=1)")
    return concat_channels([image, guidance])
