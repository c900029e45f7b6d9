"""Inference modes, the click-budget Dice protocol, and uncertainty scoring
for the active-learning queue.

Per-case randomness is forked from (seed, case_id, repetition), so cases and
repetitions can be evaluated in any order (or concurrently) without changing
a single number.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import network
from .guidance import (
    ClickSet,
    GuidanceConfig,
    build_input,
    rasterize_clicks,
    simulate_interaction_clicks,
    smooth_guidance,
    zero_guidance,
)
from .tensorops import (
    LabelMap,
    SeededRng,
    Volume,
    argmax_channels,
    softmax_channels,
    whiten,
)

KEY_EPISTEMIC = "epistemic"
KEY_ALEATORIC = "aleatoric"
KEY_COMBINED = "combined"
RANK_KEYS = (KEY_EPISTEMIC, KEY_ALEATORIC, KEY_COMBINED)


def dice(pred: LabelMap, gt: LabelMap, label: int) -> float:
    """2|P∩G| / (|P|+|G|) for one label; 1.0 when both masks are empty."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    p = pred.labels == label
    g = gt.labels == label
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / total


def _both_empty(pred: LabelMap, gt: LabelMap, label: int) -> bool:
    return not (pred.labels == label).any() and not (gt.labels == label).any()


def _num_labels_of(params: network.ModelParams) -> int:
    return params.config.num_classes - 1


def predict_with_clicks(
    params: network.ModelParams,
    image: Volume,
    clicks: ClickSet,
    guidance_cfg: GuidanceConfig | None = None,
) -> LabelMap:
    """Whiten, build Gaussian guidance from the clicks, eval-mode forward, argmax."""
    gcfg = guidance_cfg or GuidanceConfig()
    L = _num_labels_of(params)
    if clicks.num_labels != L:
        raise ValueError(f"clicks declare {clicks.num_labels} labels, model has {L}")
    guidance = smooth_guidance(rasterize_clicks(clicks, image.shape), gcfg)
    inp = build_input(whiten(image), guidance)
    logits, _ = network.forward(params, inp, network.EVAL)
    return argmax_channels(softmax_channels(logits))


def predict_auto(
    params: network.ModelParams,
    image: Volume,
    guidance_cfg: GuidanceConfig | None = None,
) -> LabelMap:
    """Click-free inference: all guidance channels zero."""
    inp = build_input(whiten(image), zero_guidance(image.shape, _num_labels_of(params)))
    logits, _ = network.forward(params, inp, network.EVAL)
    return argmax_channels(softmax_channels(logits))


@dataclass
class EvalConfig:
    click_budgets: tuple[int, ...] = (0, 1, 5, 10)
    repetitions: int = 3
    seed: int = 0

    def __post_init__(self):
        b = tuple(int(v) for v in self.click_budgets)
        if any(v < 0 for v in b):
            raise ValueError("budgets must be non-negative")
        if list(b) != sorted(set(b)):
            raise ValueError("budgets must be sorted ascending and distinct")
        self.click_budgets = b
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass
class EvalRow:
    case_id: str
    label: int
    budget: int
    dice_mean: float
    dice_std: float
    empty_convention_used: bool


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def budgets(self) -> list[int]:
        return sorted({r.budget for r in self.rows})

    def labels(self) -> list[int]:
        return sorted({r.label for r in self.rows})

    def mean_dice(self, budget: int, label: int | None = None) -> float:
        vals = [
            r.dice_mean
            for r in self.rows
            if r.budget == budget and (label is None or r.label == label)
        ]
        return float(np.mean(vals))

    def to_json(self) -> dict:
        grand = {
            str(b): {
                "overall": self.mean_dice(b),
                "per_label": {str(k): self.mean_dice(b, k) for k in self.labels()},
            }
            for b in self.budgets()
        }
        return {"rows": [asdict(r) for r in self.rows], "grand_mean": grand}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case_id", "label", "budget", "dice_mean", "dice_std", "empty_convention_used"])
        for r in self.rows:
            w.writerow(
                [r.case_id, r.label, r.budget, repr(r.dice_mean), repr(r.dice_std),
                 str(r.empty_convention_used).lower()]
            )
        return buf.getvalue()


def evaluate_click_budget(
    params: network.ModelParams,
    case_id: str,
    image: Volume,
    gt: LabelMap,
    cfg: EvalConfig,
    guidance_cfg: GuidanceConfig | None = None,
) -> list[EvalRow]:
    """Simulated-click budget protocol for one case.

    Per repetition the ClickSet grows monotonically: predict with the current
    clicks, append one corrective click at the largest discrepancy component,
    re-predict, until the budget is reached or nothing is wrong; Dice is
    recorded per foreground label at every budget.
    """
    L = gt.num_labels
    per_budget: dict[int, list[list[float]]] = {b: [] for b in cfg.click_budgets}
    empty_flag: dict[tuple[int, int], bool] = {
        (b, k): False for b in cfg.click_budgets for k in range(1, L + 1)
    }
    for rep in range(cfg.repetitions):
        rng = SeededRng(cfg.seed).fork("eval", case_id, rep)
        clicks = ClickSet(num_labels=L)
        pred = predict_with_clicks(params, image, clicks, guidance_cfg)
        for budget in cfg.click_budgets:
            while len(clicks) < budget:
                corrective = simulate_interaction_clicks(gt, pred, 1, rng)
                if not len(corrective):
                    break
                clicks.extend(corrective)
                pred = predict_with_clicks(params, image, clicks, guidance_cfg)
            per_budget[budget].append([dice(pred, gt, k) for k in range(1, L + 1)])
            for k in range(1, L + 1):
                if _both_empty(pred, gt, k):
                    empty_flag[(budget, k)] = True

    rows = []
    for budget in cfg.click_budgets:
        arr = np.array(per_budget[budget])  # (reps, L)
        for k in range(1, L + 1):
            rows.append(
                EvalRow(
                    case_id=case_id,
                    label=k,
                    budget=budget,
                    dice_mean=float(arr[:, k - 1].mean()),
                    dice_std=float(arr[:, k - 1].std()),
                    empty_convention_used=empty_flag[(budget, k)],
                )
            )
    return rows


@dataclass
class UncertaintyScore:
    case_id: str
    epistemic: float
    aleatoric: float

    @property
    def combined(self) -> float:
        return self.epistemic + self.aleatoric

    def value(self, key: str) -> float:
        if key not in RANK_KEYS:
            raise ValueError(f"key must be one of {RANK_KEYS}")
        return getattr(self, key)

    def to_json(self) -> dict:
        return {
            "case_id": self.case_id,
            "epistemic": self.epistemic,
            "aleatoric": self.aleatoric,
            "combined": self.combined,
        }


def _max_prob(params: network.ModelParams, inp: Volume, mode: str, rng=None) -> np.ndarray:
    logits, _ = network.forward(params, inp, mode, rng)
    return softmax_channels(logits).data.max(axis=0)


def epistemic_uncertainty(
    params: network.ModelParams, image: Volume, passes: int, rng: SeededRng
) -> float:
    """Voxel-mean variance of the max-class probability over dropout-active
    forward passes (zero guidance). Fewer than 2 passes scores 0 by definition."""
    if passes < 2:
        return 0.0
    inp = build_input(whiten(image), zero_guidance(image.shape, _num_labels_of(params)))
    stack = np.stack(
        [_max_prob(params, inp, network.TRAIN, rng) for _ in range(passes)], axis=0
    )
    return float(stack.var(axis=0).mean())


_FLIP_AXES = {"z": 1, "y": 2, "x": 3}


def aleatoric_uncertainty(params: network.ModelParams, image: Volume) -> float:
    """Voxel-mean variance of the max-class probability across eight aligned
    test-time transforms: identity, the three axis flips, and the four
    90-degree in-plane rotations (k=0..3; k=0 repeats the identity)."""
    if image.shape.height != image.shape.width:
        raise ValueError("rotation-based test-time transforms require height == width")
    L = _num_labels_of(params)
    base = whiten(image)

    def run(tf, inv) -> np.ndarray:
        timg = Volume(base.shape, np.ascontiguousarray(tf(base.data)))
        inp = build_input(timg, zero_guidance(timg.shape, L))
        logits, _ = network.forward(params, inp, network.EVAL)
        prob = softmax_channels(logits).data
        return np.ascontiguousarray(inv(prob)).max(axis=0)

    passes = [run(lambda a: a, lambda a: a)]
    for ax in _FLIP_AXES.values():
        passes.append(run(lambda a, ax=ax: np.flip(a, ax), lambda a, ax=ax: np.flip(a, ax)))
    for k in range(4):
        passes.append(
            run(
                lambda a, k=k: np.rot90(a, k, axes=(2, 3)),
                lambda a, k=k: np.rot90(a, -k, axes=(2, 3)),
            )
        )
    stack = np.stack(passes, axis=0)
    return float(stack.var(axis=0).mean())


def score_case(
    params: network.ModelParams, case_id: str, image: Volume, passes: int, seed: int
) -> UncertaintyScore:
    rng = SeededRng(seed).fork("mc", case_id)
    return UncertaintyScore(
        case_id=case_id,
        epistemic=epistemic_uncertainty(params, image, passes, rng),
        aleatoric=aleatoric_uncertainty(params, image),
    )


def rank_unlabeled(scores: list[UncertaintyScore], key: str = KEY_COMBINED) -> list[str]:
    """Case ids sorted most-uncertain first; ties broken by case_id ascending."""
    if key not in RANK_KEYS:
        raise ValueError(f"key must be one of {RANK_KEYS}")
    return [s.case_id for s in sorted(scores, key=lambda s: (-s.value(key), s.case_id))]
