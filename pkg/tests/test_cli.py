import json

import numpy as np
import pandas as pd
import pytest

from bhpsensor import training
from bhpsensor.cli import main, read_partition, sha256
from bhpsensor.models import load_model

GEN1 = {"n_wells": 12, "n_days": 150, "seed": 3, "field_id": "F1",
        "fault_rates": {"null": 0.005, "shut_in": 0.004, "short_open": 0.003, "frozen": 0.002, "outlier": 0.002}}
GEN2 = {"n_wells": 8, "n_days": 150, "seed": 4, "field_id": "F2", "field_profile": "field2"}
COND = {"n_heldout": 3, "test_days": 30}
TRAIN = {"k": 3, "runs": 1, "top_n": 1, "spaces": [
    {"family": "lr", "grids": {"alpha": [0.1]}},
    {"family": "lstm", "grids": {"hidden_size": [20], "n_layers": [1], "p": [2], "epochs": [2],
                                 "learning_rate": [3e-3], "batch_size": [128]}},
]}


def dump(obj, path):
    path.write_text(json.dumps(obj))
    return str(path)


def cli(*argv):
    return main([str(a) for a in argv])


def out_hashes(directory):
    manifest = json.loads((directory / "manifest.json").read_text())
    return manifest["outputs"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = {name: dump(obj, root / f"{name}.json") for name, obj in
           [("gen1", GEN1), ("gen2", GEN2), ("cond", COND), ("train", TRAIN), ("eval", {"series_wells": 1}),
            ("tl", {"input_adapter": ["q_gaslift"], "strategies": [{"strategy": "new_layer"},
                                                                     {"strategy": "fine_tune"}]})]}
    steps = [
        ("generate", "--config", cfg["gen1"], "--out", root / "g1"),
        ("condition", "--config", cfg["cond"], "--input", root / "g1/F1.csv", "--out", root / "c1"),
        ("train", "--config", cfg["train"], "--input", root / "c1", "--out", root / "t1"),
        ("evaluate", "--config", cfg["eval"], "--input", root / "c1", "--model", root / "t1/models",
         "--out", root / "e1"),
        ("generate", "--config", cfg["gen2"], "--out", root / "g2"),
        ("condition", "--config", cfg["cond"], "--input", root / "g2/F2.csv", "--out", root / "c2"),
        ("transfer", "--config", cfg["tl"], "--input", root / "c2", "--model", root / "t1/models/LSTM1.json",
         "--out", root / "x2"),
    ]
    for step in steps:
        assert cli(*step) == 0, step
    return root, cfg, steps


def test_generate_outputs_and_manifest(pipeline):
    root, _, _ = pipeline
    outputs = out_hashes(root / "g1")
    assert {"F1.csv", "F1_faults.json", "generate_config.json"} <= set(outputs)
    for name, digest in outputs.items():
        assert sha256(root / "g1" / name) == digest
    manifest = json.loads((root / "g1/manifest.json").read_text())
    assert manifest["command"] == "generate" and manifest["counts"]["wells"] == 12


def test_condition_report_matches_ledger(pipeline):
    root, _, _ = pipeline
    ledger = json.loads((root / "g1/F1_faults.json").read_text())
    report = json.loads((root / "c1/conditioning_report.json").read_text())
    removed = report["removed_counts"]
    assert sum(ledger["counts"].values()) > 0
    for cls in ("null", "shut_in", "short_open", "frozen"):
        assert removed[cls] == ledger["counts"][cls], cls
    assert removed["outlier"] >= ledger["counts"]["outlier"]


@pytest.mark.parametrize("idx", [0, 1, 2, 3, 6])
def test_rerun_is_hash_identical(pipeline, tmp_path, idx):
    root, _, steps = pipeline
    step = list(steps[idx])
    original = step[step.index("--out") + 1]
    step[step.index("--out") + 1] = tmp_path / "again"
    assert cli(*step) == 0
    assert out_hashes(tmp_path / "again") == out_hashes(original)


def test_train_outputs(pipeline):
    root, _, _ = pipeline
    assert sorted(p.name for p in (root / "t1/models").iterdir()) == ["LR1.json", "LSTM1.json"]
    lines = (root / "t1/cv_table.csv").read_text(encoding="utf-8").splitlines()
    assert lines[1] == "Model,MAPE,SMAPE,nRMSE"
    assert len(lines) == 4
    assert not list(root.glob("t1/**/*.tmp"))


def test_evaluate_outputs(pipeline):
    root, _, _ = pipeline
    names = {p.name for p in (root / "e1").iterdir()}
    for label in ("LR1", "LSTM1"):
        for ds in ("test1", "test2"):
            assert f"F1_{ds}_{label}_scatter.csv" in names
            assert f"F1_{ds}_{label}_scatter.svg" in names
            assert f"F1_{ds}_{label}_table.csv" in names
            assert any(n.startswith(f"F1_{ds}-") and n.endswith(f"_{label}_series.csv") for n in names)
    table = (root / "e1/F1_test2_all_table.csv").read_text(encoding="utf-8").splitlines()
    assert table[1] == "Model,MAPE,SMAPE,nRMSE" and len(table) == 4


def test_test2_has_no_pre_cutoff_sample(pipeline):
    root, _, _ = pipeline
    cutoff = pd.Timestamp(json.loads((root / "c1/split.json").read_text())["split"]["temporal_cutoff"])
    assert (read_partition(root / "c1/test2.csv")["date"] >= cutoff).all()
    series = list((root / "e1").glob("F1_test2-*_series.csv"))
    assert series
    for path in series:
        assert (pd.to_datetime(pd.read_csv(path)["date"]) >= cutoff).all()
    assert (read_partition(root / "c1/test1.csv")["date"] < cutoff).all()


def test_serialized_model_matches_in_memory(pipeline):
    root, _, _ = pipeline
    trainval = read_partition(root / "c1/trainval.csv")
    test1 = read_partition(root / "c1/test1.csv")
    for label in ("LR1", "LSTM1"):
        saved = load_model(root / f"t1/models/{label}.json")
        cfg = training.ModelConfig.from_dict(saved.meta["config"])
        fresh = training.fit_model(cfg, trainval, seed=json.loads((root / "t1/cv_results.json").read_text())["seed"])
        data = training.windows_for(saved, test1)
        np.testing.assert_allclose(saved.predict(data.x), fresh.predict(data.x), rtol=1e-12, atol=0)
        pairs = pd.read_csv(root / f"e1/F1_test1_{label}_scatter.csv", float_precision="round_trip")
        np.testing.assert_allclose(pairs["pred"].to_numpy(), saved.predict(data.x), rtol=1e-12, atol=0)


def test_transfer_rows(pipeline):
    root, _, _ = pipeline
    lines = (root / "x2/F2_test1_transfer_table.csv").read_text(encoding="utf-8").splitlines()
    labels = [ln.split(",")[0] for ln in lines[2:]]
    assert labels == ["LSTM1 w/o TL (1 run)", "LSTM1 w/ New Layer (1 run)", "LSTM1 w/ Fine Tuning (1 run)",
                      "LSTM1 F2 only (1 run)"]
    report = json.loads((root / "x2/transfer_report.json").read_text())
    assert report["frozen_base_checks"] and all(report["frozen_base_checks"].values())


def test_usage_errors(tmp_path, capsys):
    assert cli("generate", "--config", tmp_path / "missing.json", "--out", tmp_path / "o") == 2
    assert cli("generate", "--out", tmp_path / "o") == 2
    assert cli("condition", "--out", tmp_path / "o") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli("generate", "--config", bad, "--out", tmp_path / "o") == 2
    with pytest.raises(SystemExit) as exc:
        main(["generate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--out", str(tmp_path), "--seed", "-1"])
    assert exc.value.code == 2


def test_domain_errors(tmp_path, pipeline):
    root, _, _ = pipeline
    header = (root / "g1/F1.csv").read_text().splitlines()[0]
    empty = tmp_path / "empty.csv"
    empty.write_text(header + "\n")
    assert cli("condition", "--input", empty, "--out", tmp_path / "c") == 1
    bad = dump({"n_wells": 0}, tmp_path / "g.json")
    assert cli("generate", "--config", bad, "--out", tmp_path / "g") == 1
    assert cli("train", "--config", dump({"family": "lr", "grids": {"alpha": [-1]}}, tmp_path / "t.json"),
               "--input", root / "c1", "--out", tmp_path / "t") == 1


def test_seed_override_changes_output(pipeline, tmp_path):
    root, cfg, _ = pipeline
    assert cli("generate", "--config", cfg["gen1"], "--seed", 99, "--out", tmp_path / "s") == 0
    assert sha256(tmp_path / "s/F1.csv") != sha256(root / "g1/F1.csv")
