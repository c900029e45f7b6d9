"""Mixed training loop: click-free iterations interleaved with simulated-click
iterations chosen per-iteration by a Bernoulli draw, plus the augmentation
pipeline (flips, 90-degree rotation, intensity shift, whitening)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import network, optim
from .evaluate import dice, predict_auto
from .guidance import (
    GuidanceConfig,
    build_input,
    rasterize_clicks,
    simulate_interaction_clicks,
    smooth_guidance,
    zero_guidance,
)
from .losses import loss_and_grad
from .tensorops import (
    LabelMap,
    SeededRng,
    Volume,
    argmax_channels,
    softmax_channels,
    whiten,
)
from .volio import CaseRecord, load_labels, load_volume

MODE_CLICKFREE = "click-free"
MODE_INTERACTIVE = "interactive"


class ConfigError(ValueError):
    """Training-config schema violation with a field-level message."""


@dataclass
class TrainConfig:
    p_clickfree: float = 0.25
    clicks_per_iteration: int = 3
    interaction_rounds: int = 2
    epochs: int = 10
    lr: float = 1e-4
    sigma: float = 2.0
    truncation_radius: int = 5
    seed: int = 0
    base_width: int = 8
    levels: int = 3
    dropout_rate: float = 0.1
    augment_flip_y: bool = True
    augment_flip_x: bool = True
    augment_rotate: bool = True
    augment_intensity_shift: bool = True

    def __post_init__(self):
        checks = [
            ("p_clickfree", 0.0 <= self.p_clickfree <= 1.0, "must be within [0, 1]"),
            ("clicks_per_iteration", self.clicks_per_iteration >= 1, "must be >= 1"),
            ("interaction_rounds", self.interaction_rounds >= 1, "must be >= 1"),
            ("epochs", self.epochs >= 1, "must be >= 1"),
            ("lr", self.lr > 0, "must be > 0"),
            ("sigma", self.sigma > 0, "must be > 0"),
            ("truncation_radius", self.truncation_radius >= 1, "must be >= 1"),
            ("base_width", self.base_width >= 1, "must be >= 1"),
            ("levels", self.levels >= 2, "must be >= 2"),
            ("dropout_rate", 0.0 <= self.dropout_rate < 1.0, "must be in [0, 1)"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{name}: {msg} (got {getattr(self, name)!r})")

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        numeric = {"p_clickfree", "lr", "sigma", "dropout_rate"}
        integral = {
            "clicks_per_iteration",
            "interaction_rounds",
            "epochs",
            "truncation_radius",
            "seed",
            "base_width",
            "levels",
        }
        for k, v in d.items():
            if k in numeric and not isinstance(v, (int, float)):
                raise ConfigError(f"{k}: expected a number, got {type(v).__name__}")
            if k in integral and (isinstance(v, bool) or not isinstance(v, int)):
                raise ConfigError(f"{k}: expected an integer, got {v!r}")
            if k.startswith("augment_") and not isinstance(v, bool):
                raise ConfigError(f"{k}: expected a boolean, got {v!r}")
        return cls(**d)

    def guidance(self) -> GuidanceConfig:
        return GuidanceConfig(self.sigma, self.truncation_radius)


@dataclass
class LoadedCase:
    case_id: str
    image: Volume
    gt: LabelMap


def load_labeled_cases(records: list[CaseRecord]) -> list[LoadedCase]:
    return [
        LoadedCase(r.case_id, load_volume(r.image_path), load_labels(r.label_path))
        for r in records
        if r.labeled
    ]


@dataclass
class TrainReport:
    epoch_mean_loss: list[float]
    epoch_clickfree: list[int]
    epoch_interactive: list[int]
    final_val_dice: list[float]  # one entry per foreground label
    config: dict

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"


def choose_clickfree(rng: SeededRng, p_clickfree: float) -> bool:
    """The per-iteration mode draw: u ~ uniform(0,1), click-free iff u < p."""
    return float(rng.uniform()) < p_clickfree


def augment(
    image: Volume,
    gt: LabelMap,
    rng: SeededRng,
    flip_y: bool = True,
    flip_x: bool = True,
    rotate: bool = True,
    intensity_shift: bool = True,
) -> tuple[Volume, LabelMap]:
    """Each enabled transform fires independently with probability 0.5;
    geometric transforms hit image and labels alike, the intensity shift only
    the image; per-image whitening always runs last."""
    img = image.data
    lab = gt.labels
    if rotate and gt.shape.height != gt.shape.width:
        raise ValueError("90-degree rotation requires height == width")
    if flip_y and rng.uniform() < 0.5:
        img = img[:, :, ::-1, :]
        lab = lab[:, ::-1, :]
    if flip_x and rng.uniform() < 0.5:
        img = img[:, :, :, ::-1]
        lab = lab[:, :, ::-1]
    if rotate and rng.uniform() < 0.5:
        k = int(rng.integers(1, 4))
        img = np.rot90(img, k, axes=(2, 3))
        lab = np.rot90(lab, k, axes=(1, 2))
    if intensity_shift and rng.uniform() < 0.5:
        img = img + np.float32(rng.uniform(-0.1, 0.1))
    out_img = whiten(Volume(image.shape, np.ascontiguousarray(img)))
    return out_img, LabelMap(gt.shape, np.ascontiguousarray(lab), gt.num_labels)


def _interactive_guidance(
    params: network.ModelParams,
    image: Volume,
    gt: LabelMap,
    cfg: TrainConfig,
    rng: SeededRng,
) -> Volume:
    gcfg = cfg.guidance()
    clicks = simulate_interaction_clicks(gt, None, cfg.clicks_per_iteration, rng)
    for _round in range(2, cfg.interaction_rounds + 1):
        guidance = smooth_guidance(rasterize_clicks(clicks, gt.shape), gcfg)
        logits, _ = network.forward(params, build_input(image, guidance), network.EVAL)
        pred = argmax_channels(softmax_channels(logits))
        corrective = simulate_interaction_clicks(gt, pred, cfg.clicks_per_iteration, rng)
        if not len(corrective):
            break
        clicks.extend(corrective)
    return smooth_guidance(rasterize_clicks(clicks, gt.shape), gcfg)


def train_iteration(
    params: network.ModelParams,
    state: optim.AdamState,
    case: LoadedCase,
    cfg: TrainConfig,
    rng: SeededRng,
) -> tuple[network.ModelParams, optim.AdamState, float, str]:
    """One batch-size-1 step: mode draw, augmentation, (optional) simulated
    clicks, then a single forward/backward/Adam update."""
    clickfree = choose_clickfree(rng, cfg.p_clickfree)
    image, gt = augment(
        case.image,
        case.gt,
        rng,
        flip_y=cfg.augment_flip_y,
        flip_x=cfg.augment_flip_x,
        rotate=cfg.augment_rotate,
        intensity_shift=cfg.augment_intensity_shift,
    )
    if clickfree:
        guidance = zero_guidance(gt.shape, gt.num_labels)
        mode = MODE_CLICKFREE
    else:
        guidance = _interactive_guidance(params, image, gt, cfg, rng)
        mode = MODE_INTERACTIVE
    logits, cache = network.forward(params, build_input(image, guidance), network.TRAIN, rng)
    loss, dlogits = loss_and_grad(logits, gt)
    grads = network.backward(params, cache, dlogits)
    params, state = optim.adam_step(params, grads, state, cfg.lr)
    return params, state, loss, mode


def train(cases: list[LoadedCase], cfg: TrainConfig) -> tuple[network.ModelParams, TrainReport]:
    """epochs x cases iterations in seeded shuffled order; deterministic:
    identical (cases, cfg) reproduce the identical report."""
    if not cases:
        raise ValueError("need at least one labeled case")
    num_labels = cases[0].gt.num_labels
    img_channels = cases[0].image.channels
    for c in cases:
        if c.gt.num_labels != num_labels:
            raise ValueError(f"case {c.case_id} declares a different num_labels")

    root = SeededRng(cfg.seed)
    arch = network.ArchConfig(
        in_channels=img_channels + num_labels + 1,
        num_classes=num_labels + 1,
        base_width=cfg.base_width,
        levels=cfg.levels,
        dropout_rate=cfg.dropout_rate,
    )
    params = network.init_model(arch, root.fork("init"))
    state = optim.AdamState.for_params(params)

    epoch_mean_loss, epoch_clickfree, epoch_interactive = [], [], []
    for epoch in range(cfg.epochs):
        order = root.fork("shuffle", epoch).permutation(len(cases))
        losses = []
        n_free = 0
        for pos, idx in enumerate(order):
            it_rng = root.fork("iter", epoch, pos)
            params, state, loss, mode = train_iteration(params, state, cases[int(idx)], cfg, it_rng)
            losses.append(loss)
            n_free += mode == MODE_CLICKFREE
        epoch_mean_loss.append(float(np.mean(losses)))
        epoch_clickfree.append(n_free)
        epoch_interactive.append(len(cases) - n_free)

    preds = [predict_auto(params, c.image) for c in cases]
    per_label = [
        float(np.mean([dice(p, c.gt, k) for p, c in zip(preds, cases)]))
        for k in range(1, num_labels + 1)
    ]

    report = TrainReport(
        epoch_mean_loss=epoch_mean_loss,
        epoch_clickfree=epoch_clickfree,
        epoch_interactive=epoch_interactive,
        final_val_dice=per_label,
        config=asdict(cfg),
    )
    return params, report
