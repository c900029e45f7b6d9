"""Command-line entry points: gen-data, train, eval, rank, serve.

Every run prints its resolved configuration and seed; all randomness descends
from the run's single seed through purpose-tagged forks, so reruns with
identical flags reproduce identical outputs byte for byte.

Exit codes: 0 success, 2 usage/config error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import evaluate, network, reports, volio
from .tensorops import SeededRng, Shape3D
from .trainer import ConfigError, TrainConfig, load_labeled_cases, train

DEFAULT_LEVELS = 3


def _parse_shape(text: str) -> Shape3D:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"shape must be D,H,W (got {text!r})")
    try:
        return Shape3D(*(int(p) for p in parts)).validate()
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _parse_budgets(text: str) -> tuple[int, ...]:
    try:
        budgets = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"budgets must be integers (got {text!r})")
    if list(budgets) != sorted(set(budgets)) or any(b < 0 for b in budgets):
        raise argparse.ArgumentTypeError(
            f"budgets must be distinct, ascending, non-negative (got {text!r})"
        )
    return budgets


def _parse_offsets(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"offsets must be floats (got {text!r})")


def _print_resolved(name: str, cfg: dict) -> None:
    print(f"[{name}] resolved config: {json.dumps(cfg, sort_keys=True)}")


def cmd_gen_data(args) -> int:
    cfg = volio.SynthConfig(
        shape=args.shape,
        num_labels=args.labels,
        noise_std=args.noise_std,
        intensity_offsets=args.offsets,
        min_blob_radius=args.blob_radius[0] if args.blob_radius else 2,
        max_blob_radius=args.blob_radius[1] if args.blob_radius else 5,
        blobs_per_label=args.blobs,
    )
    _print_resolved("gen-data", {**cfg.to_json(), "seed": args.seed, "cases": args.cases,
                                 "unlabeled": args.unlabeled})
    div = 2 ** (DEFAULT_LEVELS - 1)
    if any(s % div for s in cfg.shape):
        print(
            f"warning: shape {tuple(cfg.shape)} is not divisible by {div}; "
            f"the default {DEFAULT_LEVELS}-level model will reject it",
            file=sys.stderr,
        )
    if args.unlabeled > args.cases:
        raise ValueError("--unlabeled cannot exceed --cases")
    root = Path(args.out)
    rng = SeededRng(args.seed)
    case_ids, unlabeled_ids = [], []
    for i in range(args.cases):
        case_id = f"case_{i:03d}"
        vol, lab = volio.generate_synthetic_case(cfg, rng.fork("case", i))
        volio.save_volume(vol, root / "images" / f"{case_id}.vol")
        labeled = i < args.cases - args.unlabeled
        if labeled:
            volio.save_labels(lab, root / "labels" / f"{case_id}.lab")
        else:
            unlabeled_ids.append(case_id)
        case_ids.append(case_id)
    volio.write_manifest(root, cfg, case_ids, unlabeled_ids)
    print(f"wrote {args.cases} cases ({args.unlabeled} unlabeled) to {root}")
    return 0


def cmd_train(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    cfg = TrainConfig.from_json(raw)
    _print_resolved("train", asdict(cfg))
    records = volio.scan_dataset(args.data)
    cases = load_labeled_cases(records)
    if not cases:
        raise ValueError(f"no labeled cases under {args.data}")
    params, report = train(cases, cfg)
    out = Path(args.out)
    network.save_params(params, out)
    report_path = Path(str(out) + ".report.json")
    report_path.write_text(report.dumps())
    reports.save_train_figure(report, str(out) + ".loss.png")
    print(f"model -> {out}")
    print(f"report -> {report_path}")
    print(f"final click-free validation dice per label: {report.final_val_dice}")
    return 0


def cmd_eval(args) -> int:
    cfg = evaluate.EvalConfig(click_budgets=args.budgets, repetitions=args.reps, seed=args.seed)
    _print_resolved("eval", {"budgets": list(cfg.click_budgets), "reps": cfg.repetitions,
                             "seed": cfg.seed, "model": str(args.model)})
    params = network.load_params(args.model)
    records = volio.scan_dataset(args.data)
    labeled = [r for r in records if r.labeled]
    if not labeled:
        raise ValueError(f"no labeled cases under {args.data}")
    report = evaluate.EvalReport()
    for rec in labeled:
        image = volio.load_volume(rec.image_path)
        gt = volio.load_labels(rec.label_path)
        report.rows.extend(
            evaluate.evaluate_click_budget(params, rec.case_id, image, gt, cfg)
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.dumps())
    csv_path = out.with_suffix(".csv")
    csv_path.write_text(report.to_csv())
    fig_path = out.with_suffix(".png")
    reports.save_eval_figure(report, fig_path)

    budgets = report.budgets()
    print(f"{'':>10}" + "".join(f"{b:>10}" for b in budgets) + "   (simulated clicks)")
    for k in report.labels():
        print(f"label {k:>4}" + "".join(f"{report.mean_dice(b, k):>10.3f}" for b in budgets))
    print(f"{'mean':>10}" + "".join(f"{report.mean_dice(b):>10.3f}" for b in budgets))
    print(f"report -> {out}, {csv_path}, {fig_path}")
    return 0


def cmd_rank(args) -> int:
    _print_resolved("rank", {"key": args.key, "passes": args.passes, "seed": args.seed,
                             "model": str(args.model)})
    if args.passes < 2 and args.key in (evaluate.KEY_EPISTEMIC, evaluate.KEY_COMBINED):
        print(
            f"warning: passes={args.passes} < 2 makes every epistemic score 0",
            file=sys.stderr,
        )
    params = network.load_params(args.model)
    records = volio.scan_dataset(args.data)
    unlabeled = [r for r in records if not r.labeled]
    if not unlabeled:
        raise ValueError(f"no unlabeled cases under {args.data}")
    scores = []
    for rec in unlabeled:
        image = volio.load_volume(rec.image_path)
        scores.append(evaluate.score_case(params, rec.case_id, image, args.passes, args.seed))
    order = evaluate.rank_unlabeled(scores, args.key)
    by_id = {s.case_id: s for s in scores}
    ranking = [by_id[cid].to_json() for cid in order]
    payload = {"key": args.key, "passes": args.passes, "seed": args.seed, "ranking": ranking}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    reports.save_rank_figure(ranking, out.with_suffix(".png"))
    for entry in ranking:
        print(f"{entry['case_id']}: {args.key}={entry[args.key]:.6g}")
    print(f"ranking -> {out}")
    return 0


def cmd_serve(args) -> int:
    from .server import create_app

    ui_dir = Path(args.ui) if args.ui else Path(__file__).resolve().parents[2] / "frontend" / "dist"
    app = create_app(args.data, args.model, rank_path=args.rank, ui_dir=ui_dir)
    _print_resolved("serve", {"data": str(args.data), "model": str(args.model),
                              "port": args.port, "rank": args.rank and str(args.rank)})
    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxedit",
        description="Click-editable 3D segmentation: data, training, evaluation, ranking, serving.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="dataset root to create")
    p.add_argument("--cases", type=int, required=True, help="number of cases")
    p.add_argument("--shape", type=_parse_shape, default=Shape3D(32, 32, 32),
                   help="volume shape D,H,W (default 32,32,32)")
    p.add_argument("--labels", type=int, default=1, help="foreground labels L (default 1)")
    p.add_argument("--seed", type=int, default=0, help="generation seed (default 0)")
    p.add_argument("--unlabeled", type=int, default=0,
                   help="leave the last N cases without labels (default 0)")
    p.add_argument("--noise-std", type=float, default=0.8,
                   help="additive Gaussian noise std (default 0.8)")
    p.add_argument("--offsets", type=_parse_offsets, default=None,
                   help="per-label intensity offsets, comma-separated")
    p.add_argument("--blob-radius", type=lambda s: tuple(int(v) for v in s.split(",")),
                   default=None, metavar="MIN,MAX", help="blob semi-axis range (default 2,5)")
    p.add_argument("--blobs", type=lambda s: tuple(int(v) for v in s.split(",")),
                   default=(1, 1), metavar="MIN,MAX", help="blobs per label (default 1,1)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--config", required=True, help="TrainConfig JSON file")
    p.add_argument("--out", required=True, help="output parameter file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="click-budget Dice evaluation")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--model", required=True, help="parameter file")
    p.add_argument("--budgets", type=_parse_budgets, default=(0, 1, 5, 10),
                   help="click budgets, ascending (default 0,1,5,10)")
    p.add_argument("--reps", type=int, default=3, help="repetitions (default 3)")
    p.add_argument("--seed", type=int, default=0, help="evaluation seed (default 0)")
    p.add_argument("--out", required=True, help="output report JSON (CSV/PNG siblings)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rank", help="rank unlabeled cases by uncertainty")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--model", required=True, help="parameter file")
    p.add_argument("--key", choices=list(evaluate.RANK_KEYS), default=evaluate.KEY_COMBINED,
                   help="ranking key (default combined)")
    p.add_argument("--passes", type=int, default=10,
                   help="dropout passes for the epistemic score (default 10)")
    p.add_argument("--seed", type=int, default=0, help="scoring seed (default 0)")
    p.add_argument("--out", required=True, help="output ranking JSON")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("serve", help="serve the HTTP API and UI")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--model", required=True, help="parameter file")
    p.add_argument("--rank", default=None, help="precomputed ranking JSON (optional)")
    p.add_argument("--port", type=int, default=8765, help="port (default 8765)")
    p.add_argument("--host", default="127.0.0.1", help="bind address (default 127.0.0.1)")
    p.add_argument("--ui", default=None, help="directory of built UI assets (optional)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
