import json

import pytest

from conftest import SMALL_WORLD
from deskaid.cli import apply_overrides, load_config, main
from deskaid.errors import ConfigError

CONFIG = {
    "catalog": "world/catalog.json",
    "output_dir": "run",
    "seed": 1,
    "world": SMALL_WORLD,
    "sampling": {"mix": "hybrid", "buffers": [50, 500], "hybrid_shares": {"hn50": 1, "hn500": 1, "random": 1}},
    "model": {"kind": "RF", "params": {"rf_n_trees": 15}},
    "riskmap": {"grid_spacing_m": 2000},
}
CHAIN = ("synth", "sample", "featurize", "train", "evaluate", "predict", "riskmap", "report")


def last_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "run.json").write_text(json.dumps(CONFIG))
    mp = pytest.MonkeyPatch()
    mp.chdir(root)
    codes = {stage: main([stage, "--config", "run.json"]) for stage in CHAIN}
    mp.undo()
    return root, codes


def test_full_chain_succeeds(pipeline):
    root, codes = pipeline
    assert codes == dict.fromkeys(CHAIN, 0)
    run = root / "run"
    for rel in ("samples/train.csv", "samples/test_random.csv", "samples/test_hn50.csv",
                "features/train.csv", "features/train.schema.json", "model/model.json",
                "eval/report_random.json", "eval/roc_hn500.csv", "eval/summary.json",
                "predictions/test_random.csv", "riskmap/risk.geojson", "riskmap/summary.csv",
                "report/correlation.csv", "report/summary.json"):
        assert (run / rel).is_file(), rel
    summary = json.loads((run / "eval/summary.json").read_text())
    assert set(summary["test_sets"]) == {"random", "hn50", "hn500"}
    assert 0.0 <= summary["test_sets"]["random"]["macro_f1"] <= 1.0


def test_run_logs_record_inputs_outputs_and_environment(pipeline):
    root, _ = pipeline
    log = json.loads((root / "run/logs/train.json").read_text())
    assert log["stage"] == "train" and log["seed"] == 1
    assert log["config"]["model"]["params"] == {"rf_n_trees": 15}
    assert any(k.endswith("features/train.csv") for k in log["inputs"])
    assert all(len(v) == 64 for v in log["outputs"].values())
    assert {"deskaid", "python", "numpy", "scipy", "threads"} <= set(log["environment"])


def test_hybrid_train_set_respects_shares(pipeline):
    root, _ = pipeline
    rows = (root / "run/samples/train.csv").read_text().splitlines()[1:]
    strategies = [r.split(",")[4] for r in rows]
    n_pos = strategies.count("positive")
    assert n_pos == len(strategies) - n_pos
    counts = sorted(strategies.count(s) for s in ("hn50", "hn500", "random"))
    assert counts[-1] - counts[0] <= 1


def test_existing_outputs_need_force(pipeline, monkeypatch, capsys):
    root, _ = pipeline
    monkeypatch.chdir(root)
    assert main(["train", "--config", "run.json"]) == 2
    assert "--force" in last_error(capsys)["message"]
    assert main(["train", "--config", "run.json", "--force"]) == 0


def test_run_log_can_be_replayed_as_config(pipeline, monkeypatch):
    root, _ = pipeline
    monkeypatch.chdir(root)
    assert main(["report", "--config", "run/logs/report.json", "--force"]) == 0


def test_set_override_changes_the_model(pipeline, monkeypatch):
    root, _ = pipeline
    monkeypatch.chdir(root)
    # a fresh output_dir has no training features yet
    assert main(["train", "--config", "run.json", "--set", "output_dir=run_gbt"]) == 2
    assert not (root / "run_gbt/model/model.json").exists()
    assert main(["train", "--config", "run.json", "--force", "--set", "model.kind=GBT",
                 "--set", "model.params={\"gbt_n_rounds\": 5}"]) == 0
    assert json.loads((root / "run/model/model.json").read_text())["kind"] == "GBT"


def test_missing_catalog_exits_2(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(["sample", "--set", "catalog=nowhere/catalog.json"]) == 2
    err = last_error(capsys)
    assert err["exit_code"] == 2 and err["error"] == "ConfigError"


def test_bad_enumerations_exit_2(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["synth", "--set", "model.kind=SVM"]) == 2
    assert main(["synth", "--set", "sampling.mix=hn42"]) == 2
    assert main(["synth", "--set", "riskmap.thresholds=[0.5,0.2,0.3,0.4]"]) == 2
    assert main(["synth", "--set", "model.params={\"no_such\": 1}"]) == 2


def test_data_errors_exit_3(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "hz.geojson").write_text('{"type": "FeatureCollection", "features": []}')
    (tmp_path / "b.geojson").write_text('{"type": "FeatureCollection", "features": []}')
    (tmp_path / "catalog.json").write_text(json.dumps({"layers": {
        "hazard": {"path": "hz.geojson", "kind": "polygon"}, "border": {"path": "b.geojson", "kind": "polygon"}}}))
    assert main(["sample", "--set", "catalog=catalog.json"]) == 3
    assert last_error(capsys)["error"] == "EmptyLayer"


def test_argparse_errors_and_version(capsys):
    assert main(["fly"]) == 2
    assert main(["--version"]) == 0


def test_override_parsing():
    cfg = apply_overrides({"a": {"b": 1}}, ["a.b=2", "a.c=[1,2]", "d=text"])
    assert cfg == {"a": {"b": 2, "c": [1, 2]}, "d": "text"}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])
    with pytest.raises(ConfigError):
        load_config(None, ["seed.x=1"])
