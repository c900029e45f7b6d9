import json
import sys
from pathlib import Path

import pytest

from voxedit.cli import main
from voxedit.volio import scan_dataset


def run_cli(*args):
    return main([str(a) for a in args])


def train_config(tmp_path, **overrides):
    cfg = {"p_clickfree": 0.5, "clicks_per_iteration": 2, "epochs": 2, "seed": 0,
           "base_width": 2, "levels": 2}
    cfg.update(overrides)
    path = tmp_path / "train.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture
def small_root(tmp_path):
    root = tmp_path / "data"
    rc = run_cli("gen-data", "--out", root, "--cases", 3, "--shape", "8,8,8",
                 "--labels", 1, "--seed", 0, "--noise-std", 0.5)
    assert rc == 0
    return root


def test_gen_data_files(small_root):
    assert len(list((small_root / "images").glob("*.vol"))) == 3
    assert len(list((small_root / "labels").glob("*.lab"))) == 3
    assert (small_root / "dataset.json").exists()


def test_gen_data_deterministic(tmp_path):
    for sub in ("a", "b"):
        rc = run_cli("gen-data", "--out", tmp_path / sub, "--cases", 2, "--shape", "8,8,8",
                     "--labels", 1, "--seed", 3, "--noise-std", 0.5)
        assert rc == 0
    for rel in ["images/case_000.vol", "images/case_001.vol", "labels/case_000.lab"]:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_gen_data_divisibility_warning(tmp_path, capsys):
    run_cli("gen-data", "--out", tmp_path / "w", "--cases", 1, "--shape", "30,30,30",
            "--labels", 1, "--seed", 0, "--noise-std", 0.5)
    assert "not divisible by 4" in capsys.readouterr().err


def test_gen_data_unlabeled_split(tmp_path):
    root = tmp_path / "u"
    run_cli("gen-data", "--out", root, "--cases", 4, "--shape", "8,8,8", "--labels", 1,
            "--seed", 0, "--unlabeled", 2, "--noise-std", 0.5)
    records = scan_dataset(root)
    assert [r.labeled for r in records] == [True, True, False, False]


def test_train_eval_rank_pipeline(tmp_path, small_root, capsys):
    model = tmp_path / "model.par"
    cfg = train_config(tmp_path)
    assert run_cli("train", "--data", small_root, "--config", cfg, "--out", model) == 0
    assert model.exists()
    report = json.loads(Path(str(model) + ".report.json").read_text())
    assert len(report["epoch_mean_loss"]) == 2
    assert (Path(str(model) + ".loss.png")).exists()

    out = tmp_path / "report.json"
    assert run_cli("eval", "--data", small_root, "--model", model, "--budgets", "0,1",
                   "--reps", 2, "--seed", 0, "--out", out) == 0
    assert out.exists() and out.with_suffix(".csv").exists() and out.with_suffix(".png").exists()
    blob = json.loads(out.read_text())
    assert set(blob["grand_mean"]) == {"0", "1"}
    csv_lines = out.with_suffix(".csv").read_text().splitlines()
    assert csv_lines[0] == "case_id,label,budget,dice_mean,dice_std,empty_convention_used"
    assert len(csv_lines) == 1 + 3 * 2  # 3 cases x 2 budgets x 1 label


def test_train_clickfree_accounting(tmp_path, small_root):
    model = tmp_path / "m0.par"
    cfg = train_config(tmp_path, p_clickfree=0.0)
    assert run_cli("train", "--data", small_root, "--config", cfg, "--out", model) == 0
    report = json.loads(Path(str(model) + ".report.json").read_text())
    assert sum(report["epoch_clickfree"]) == 0


def test_train_rerun_identical_report(tmp_path, small_root):
    cfg = train_config(tmp_path)
    reports = []
    for name in ("m1.par", "m2.par"):
        model = tmp_path / name
        assert run_cli("train", "--data", small_root, "--config", cfg, "--out", model) == 0
        reports.append(Path(str(model) + ".report.json").read_bytes())
    assert reports[0] == reports[1]


def test_train_config_schema_error_exit_2(tmp_path, small_root, capsys):
    cfg = train_config(tmp_path, p_clickfree=1.5)
    rc = run_cli("train", "--data", small_root, "--config", cfg, "--out", tmp_path / "x.par")
    assert rc == 2
    assert "p_clickfree" in capsys.readouterr().err


def test_eval_bad_budgets_usage_error(tmp_path, small_root):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--data", str(small_root), "--model", "m", "--budgets", "5,1",
              "--out", str(tmp_path / "r.json")])
    assert exc.value.code == 2


def test_rank_outputs_sorted(tmp_path):
    root = tmp_path / "d"
    run_cli("gen-data", "--out", root, "--cases", 4, "--shape", "8,8,8", "--labels", 1,
            "--seed", 1, "--unlabeled", 3, "--noise-std", 0.5)
    model = tmp_path / "m.par"
    run_cli("train", "--data", root, "--config", train_config(tmp_path), "--out", model)
    out = tmp_path / "rank.json"
    assert run_cli("rank", "--data", root, "--model", model, "--key", "combined",
                   "--passes", 3, "--seed", 0, "--out", out) == 0
    blob = json.loads(out.read_text())
    vals = [e["combined"] for e in blob["ranking"]]
    assert vals == sorted(vals, reverse=True)
    assert len(vals) == 3
    assert out.with_suffix(".png").exists()


def test_rank_single_pass_warns(tmp_path, small_root, capsys):
    root = tmp_path / "d1"
    run_cli("gen-data", "--out", root, "--cases", 2, "--shape", "8,8,8", "--labels", 1,
            "--seed", 1, "--unlabeled", 1, "--noise-std", 0.5)
    model = tmp_path / "m.par"
    run_cli("train", "--data", root, "--config", train_config(tmp_path), "--out", model)
    out = tmp_path / "rank.json"
    assert run_cli("rank", "--data", root, "--model", model, "--key", "epistemic",
                   "--passes", 1, "--seed", 0, "--out", out) == 0
    assert "epistemic score" in capsys.readouterr().err
    blob = json.loads(out.read_text())
    assert all(e["epistemic"] == 0.0 for e in blob["ranking"])


def test_rank_no_unlabeled_is_runtime_error(tmp_path, small_root, capsys):
    model = tmp_path / "m.par"
    run_cli("train", "--data", small_root, "--config", train_config(tmp_path), "--out", model)
    rc = run_cli("rank", "--data", small_root, "--model", model, "--out", tmp_path / "r.json")
    assert rc == 1


def test_serve_label_mismatch_exit_1(tmp_path, small_root, capsys):
    # model trained for a different label count than the dataset declares
    from voxedit.network import ArchConfig, init_model, save_params
    from voxedit.tensorops import SeededRng

    bad = tmp_path / "bad.par"
    save_params(init_model(ArchConfig(in_channels=5, num_classes=4, base_width=2, levels=2),
                           SeededRng(0)), bad)
    rc = run_cli("serve", "--data", small_root, "--model", bad, "--port", "9")
    assert rc == 1
    assert "declares" in capsys.readouterr().err


def test_resolved_config_printed(tmp_path, capsys):
    run_cli("gen-data", "--out", tmp_path / "p", "--cases", 1, "--shape", "8,8,8",
            "--labels", 1, "--seed", 5, "--noise-std", 0.5)
    out = capsys.readouterr().out
    assert "resolved config" in out and '"seed": 5' in out


def test_help_lists_flags():
    for sub in ("gen-data", "train", "eval", "rank", "serve"):
        with pytest.raises(SystemExit) as exc:
            main([sub, "--help"])
        assert exc.value.code == 0


def test_unknown_flag_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["gen-data", "--out", "x", "--cases", "1", "--bogus", "1"])
    assert exc.value.code == 2
