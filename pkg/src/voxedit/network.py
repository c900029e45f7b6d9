"""The segmentation backbone: a small U-Net-style 3D encoder-decoder with
explicit parameters, forward cache, and exact hand-derived backward pass.

Per level there are two 3x3x3 convs on both the encoder and decoder paths;
downsampling is a 2x2x2 stride-2 conv, upsampling is nearest-neighbor 2x
followed by a 1x1x1 conv, skip connections concatenate channels, and a final
1x1x1 conv maps to class logits. Dropout sits after each decoder level and
doubles as the stochastic source for epistemic uncertainty.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import layers
from .tensorops import SeededRng, Shape3D, Volume
from .volio import FormatError

TRAIN = "train"
EVAL = "eval"


@dataclass
class ArchConfig:
    in_channels: int
    num_classes: int
    base_width: int = 8
    levels: int = 3
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.in_channels < 2:
            raise ValueError("in_channels must be >= 2 (image + guidance)")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.base_width < 1:
            raise ValueError("base_width must be >= 1")
        if self.levels < 2:
            raise ValueError("levels must be >= 2")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @property
    def spatial_divisor(self) -> int:
        return 2 ** (self.levels - 1)

    def width(self, level: int) -> int:
        return self.base_width * 2**level


def layer_specs(cfg: ArchConfig) -> list[tuple[str, int, int, int]]:
    """Manifest order: (name, kernel, cin, cout) for every weighted layer."""
    specs = []
    for l in range(cfg.levels):
        w = cfg.width(l)
        cin = cfg.in_channels if l == 0 else cfg.width(l)
        specs.append((f"enc{l}.conv1", 3, cin, w))
        specs.append((f"enc{l}.conv2", 3, w, w))
        if l < cfg.levels - 1:
            specs.append((f"down{l}", 2, w, cfg.width(l + 1)))
    for l in range(cfg.levels - 2, -1, -1):
        w = cfg.width(l)
        specs.append((f"up{l}", 1, cfg.width(l + 1), w))
        specs.append((f"dec{l}.conv1", 3, 2 * w, w))
        specs.append((f"dec{l}.conv2", 3, w, w))
    specs.append(("head", 1, cfg.base_width, cfg.num_classes))
    return specs


def _weight_shape(kernel: int, cin: int, cout: int) -> tuple:
    if kernel == 1:
        return (cin, cout)
    return (kernel, kernel, kernel, cin, cout)


@dataclass
class ModelParams:
    config: ArchConfig
    tensors: dict[str, np.ndarray]  # "<layer>.w" / "<layer>.b", manifest order

    def require_finite(self) -> "ModelParams":
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise ValueError(f"parameter {name} contains non-finite values")
        return self


@dataclass
class ForwardCache:
    """Everything the backward pass needs, in forward execution order."""

    mode: str
    in_shape: Shape3D
    enc: list = field(default_factory=list)   # per level: (cols1, z1, cols2, z2)
    down: list = field(default_factory=list)  # per level: (cols, z)
    dec: list = field(default_factory=list)   # per decoder step (deep->shallow):
    #   (u, zu, cols1, z1, cols2, z2, dropout_mask_or_None)
    head_in: np.ndarray | None = None


def init_model(cfg: ArchConfig, rng: SeededRng) -> ModelParams:
    """Glorot-uniform weights, zero biases; deterministic given the rng seed."""
    tensors: dict[str, np.ndarray] = {}
    for name, kernel, cin, cout in layer_specs(cfg):
        fan_in = kernel**3 * cin
        fan_out = kernel**3 * cout
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        shape = _weight_shape(kernel, cin, cout)
        tensors[name + ".w"] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        tensors[name + ".b"] = np.zeros(cout, dtype=np.float32)
    return ModelParams(cfg, tensors)


def _validate_input(cfg: ArchConfig, vol: Volume) -> None:
    if vol.channels != cfg.in_channels:
        raise ValueError(f"input has {vol.channels} channels, model expects {cfg.in_channels}")
    div = cfg.spatial_divisor
    if any(s % div for s in vol.shape):
        raise ValueError(f"spatial dims {tuple(vol.shape)} must be divisible by {div}")


def forward(
    params: ModelParams, vol: Volume, mode: str = EVAL, rng: SeededRng | None = None
) -> tuple[Volume, ForwardCache]:
    """Run the network. Train mode applies dropout (needs rng) and records
    masks in the cache; eval mode is deterministic."""
    cfg = params.config
    if mode not in (TRAIN, EVAL):
        raise ValueError(f"mode must be {TRAIN!r} or {EVAL!r}")
    _validate_input(cfg, vol)
    use_dropout = mode == TRAIN and cfg.dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ValueError("train-mode forward with dropout requires an rng")
    t = params.tensors
    cache = ForwardCache(mode=mode, in_shape=vol.shape)

    x = np.ascontiguousarray(vol.data.transpose(1, 2, 3, 0))
    skips = []
    for l in range(cfg.levels):
        z1, cols1 = layers.conv3_forward(x, t[f"enc{l}.conv1.w"], t[f"enc{l}.conv1.b"])
        a1 = layers.silu(z1)
        z2, cols2 = layers.conv3_forward(a1, t[f"enc{l}.conv2.w"], t[f"enc{l}.conv2.b"])
        x = layers.silu(z2)
        cache.enc.append((cols1, z1, cols2, z2))
        if l < cfg.levels - 1:
            skips.append(x)
            zd, colsd = layers.down2_forward(x, t[f"down{l}.w"], t[f"down{l}.b"])
            x = layers.silu(zd)
            cache.down.append((colsd, zd))

    for l in range(cfg.levels - 2, -1, -1):
        u = layers.upsample2(x)
        zu = layers.pointwise_forward(u, t[f"up{l}.w"], t[f"up{l}.b"])
        au = layers.silu(zu)
        xcat = np.concatenate([au, skips[l]], axis=-1)
        z1, cols1 = layers.conv3_forward(xcat, t[f"dec{l}.conv1.w"], t[f"dec{l}.conv1.b"])
        a1 = layers.silu(z1)
        z2, cols2 = layers.conv3_forward(a1, t[f"dec{l}.conv2.w"], t[f"dec{l}.conv2.b"])
        x = layers.silu(z2)
        mask = None
        if use_dropout:
            mask = layers.dropout_mask(x.shape, cfg.dropout_rate, rng)
            x = x * mask
        cache.dec.append((u, zu, cols1, z1, cols2, z2, mask))

    cache.head_in = x
    logits = layers.pointwise_forward(x, t["head.w"], t["head.b"])
    out = Volume(vol.shape, np.ascontiguousarray(logits.transpose(3, 0, 1, 2)))
    return out, cache


def backward(params: ModelParams, cache: ForwardCache, dlogits: Volume) -> dict[str, np.ndarray]:
    """Exact parameter gradients under the dropout masks recorded in cache."""
    cfg = params.config
    if cache.mode != TRAIN:
        raise ValueError("backward requires a cache from a train-mode forward")
    if dlogits.shape != cache.in_shape:
        raise ValueError("dlogits shape does not match the cached forward")
    t = params.tensors
    grads: dict[str, np.ndarray] = {}

    g = np.ascontiguousarray(dlogits.data.transpose(1, 2, 3, 0))
    g, grads["head.w"], grads["head.b"] = layers.pointwise_backward(g, cache.head_in, t["head.w"])

    skip_grads: dict[int, np.ndarray] = {}
    # decoder steps were recorded deepest-first; undo shallow-first
    for i in range(len(cache.dec) - 1, -1, -1):
        l = cfg.levels - 2 - i
        u, zu, cols1, z1, cols2, z2, mask = cache.dec[i]
        if mask is not None:
            g = g * mask
        g = layers.silu_backward(g, z2)
        g, grads[f"dec{l}.conv2.w"], grads[f"dec{l}.conv2.b"] = layers.conv3_backward(
            g, cols2, t[f"dec{l}.conv2.w"]
        )
        g = layers.silu_backward(g, z1)
        g, grads[f"dec{l}.conv1.w"], grads[f"dec{l}.conv1.b"] = layers.conv3_backward(
            g, cols1, t[f"dec{l}.conv1.w"]
        )
        w_l = cfg.width(l)
        g, skip_grads[l] = g[..., :w_l], g[..., w_l:]
        g = layers.silu_backward(g, zu)
        g, grads[f"up{l}.w"], grads[f"up{l}.b"] = layers.pointwise_backward(g, u, t[f"up{l}.w"])
        g = layers.upsample2_backward(g)

    for l in range(cfg.levels - 1, -1, -1):
        if l < cfg.levels - 1:
            colsd, zd = cache.down[l]
            g = layers.silu_backward(g, zd)
            g, grads[f"down{l}.w"], grads[f"down{l}.b"] = layers.down2_backward(
                g, colsd, t[f"down{l}.w"]
            )
            g = g + skip_grads[l]
        cols1, z1, cols2, z2 = cache.enc[l]
        g = layers.silu_backward(g, z2)
        g, grads[f"enc{l}.conv2.w"], grads[f"enc{l}.conv2.b"] = layers.conv3_backward(
            g, cols2, t[f"enc{l}.conv2.w"]
        )
        g = layers.silu_backward(g, z1)
        g, grads[f"enc{l}.conv1.w"], grads[f"enc{l}.conv1.b"] = layers.conv3_backward(
            g, cols1, t[f"enc{l}.conv1.w"]
        )
    return {name: grads[name].astype(np.float32, copy=False) for name in params.tensors}


def save_params(params: ModelParams, path: str | Path) -> None:
    """Single file: u32 little-endian header length, JSON header (arch +
    layer manifest), then the float32 payloads concatenated in manifest order."""
    params.require_finite()
    path = Path(path)
    manifest = [{"name": n, "shape": list(t.shape)} for n, t in params.tensors.items()]
    header = json.dumps(
        {"version": 1, "arch": asdict(params.config), "layers": manifest}, sort_keys=True
    ).encode("utf-8")
    payload = b"".join(t.astype("<f4").tobytes() for t in params.tensors.values())
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(struct.pack("<I", len(header)) + header + payload)


def load_params(path: str | Path, expect: ArchConfig | None = None) -> ModelParams:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError("parameter file too short for header length")
    (hlen,) = struct.unpack("<I", raw[:4])
    if len(raw) < 4 + hlen:
        raise FormatError("parameter file truncated inside header")
    header = json.loads(raw[4 : 4 + hlen].decode("utf-8"))
    if header.get("version") != 1:
        raise FormatError(f"unsupported parameter file version {header.get('version')}")
    cfg = ArchConfig(**header["arch"])
    if expect is not None and asdict(cfg) != asdict(expect):
        raise ValueError(f"model config {asdict(cfg)} does not match expected {asdict(expect)}")
    offset = 4 + hlen
    tensors: dict[str, np.ndarray] = {}
    for entry in header["layers"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 4
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(f"payload truncated at layer {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"trailing {len(raw) - offset} bytes after last layer")
    expected_names = [n + s for n, *_ in layer_specs(cfg) for s in (".w", ".b")]
    if list(tensors) != expected_names:
        raise FormatError("layer manifest does not match architecture")
    return ModelParams(cfg, tensors)
