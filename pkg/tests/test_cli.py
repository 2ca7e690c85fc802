import csv
import json

import pytest

from netgraph_event.cli import main

CONFIG = {
    "synth": {"n_interfaces": 4, "F": 2, "num_ticks": 2500, "num_events": 10, "anomaly_lead_ticks": 20},
    "samples": {"T": 24, "stride": 6},
    "encoder": {"K": 3, "C": 4, "D": 8},
    "train": {"max_epochs": 3, "patience": 2, "batch_size": 16},
    "experiment": {"repeats": 1},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "config.json").write_text(json.dumps(CONFIG))
    return d


def cli(workdir, *args):
    return main([*args, "--config", str(workdir / "config.json")])


def test_pipeline(workdir, capsys):
    w = str(workdir)
    assert cli(workdir, "synth", "--seed", "1", "--out-dir", w, "--logs-csv") == 0
    assert cli(workdir, "ingest", "--logs", f"{w}/logs.csv", "--out-dir", f"{w}/ing") == 0
    assert (workdir / "ing" / "panel" / "meta.json").exists()
    assert cli(workdir, "build-samples", "--panel", f"{w}/panel", "--events", f"{w}/events.csv", "--out-dir", w) == 0
    assert cli(workdir, "train", "--panel", f"{w}/panel", "--samples", f"{w}/samples.csv", "--out-dir", w) == 0
    ck = f"{w}/checkpoint"
    assert cli(workdir, "eval", "--panel", f"{w}/panel", "--samples", f"{w}/samples.csv", "--checkpoint", ck,
               "--out-dir", w) == 0
    report = json.loads((workdir / "report.json").read_text())
    assert 0 <= report["f1"] <= 1
    capsys.readouterr()
    assert cli(workdir, "predict", "--panel", f"{w}/panel", "--checkpoint", ck, "--end-tick", "200") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "end_tick,timestamp,prediction" and lines[1].startswith("200,")
    assert cli(workdir, "export-embeddings", "--panel", f"{w}/panel", "--samples", f"{w}/samples.csv",
               "--checkpoint", ck, "--out-dir", w) == 0
    with open(workdir / "embeddings.csv") as fh:
        assert len(next(csv.reader(fh))) == 2 + 8


def test_experiment_with_variant(workdir):
    out = workdir / "exp"
    assert cli(workdir, "experiment", "--variant", "only_kl", "--seed", "5", "--out-dir", str(out)) == 0
    table = list(csv.reader(open(out / "table.csv")))
    assert table[0][2:] == ["precision_only_kl", "recall_only_kl", "f1_only_kl"]
    assert table[1][1] == "5"


def test_config_error_exit_code(tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"train": {"batch_size": 1}}))
    assert main(["synth", "--config", str(tmp_path / "bad.json"), "--out-dir", str(tmp_path)]) == 2


def test_data_error_exit_code(tmp_path, capsys):
    assert main(["ingest", "--logs", str(tmp_path / "missing.csv"), "--out-dir", str(tmp_path)]) == 3


@pytest.mark.filterwarnings("ignore:invalid value encountered:RuntimeWarning")
def test_divergence_exit_code(workdir, tmp_path):
    import numpy as np

    from netgraph_event.ingest import load_panel, save_panel

    panel = load_panel(workdir / "panel")
    panel.values[:] = np.inf
    save_panel(panel, tmp_path / "panel")
    assert cli(workdir, "train", "--panel", str(tmp_path / "panel"), "--samples", str(workdir / "samples.csv"),
               "--out-dir", str(tmp_path)) == 4


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["dance"])
