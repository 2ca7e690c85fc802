import filecmp
from dataclasses import replace

import numpy as np
import pytest
import torch

from netgraph_event.config import Config, EncoderSection, SampleConfig
from netgraph_event.encoder import EncoderConfig, embed
from netgraph_event.errors import CheckpointError, ConfigError, SplitError, TrainingDivergence
from netgraph_event.evaluation import encoder_config_for, prepare
from netgraph_event.ingest import SynthConfig, synthesize
from netgraph_event.objective import LossConfig
from netgraph_event.samples import labels_of, stack_windows
from netgraph_event.trainer import (
    ClassifierHead,
    TrainConfig,
    fit_head,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)

SMALL = Config(
    synth=SynthConfig(n_interfaces=4, F=2, num_ticks=2500, num_events=10, anomaly_lead_ticks=20, seed=1),
    samples=SampleConfig(T=24, stride=6),
    encoder=EncoderSection(K=3, C=4, D=8),
    train=TrainConfig(max_epochs=4, patience=2, batch_size=16),
)


@pytest.fixture(scope="module")
def data():
    panel, events = synthesize(SMALL.synth)
    return prepare(panel, events, SMALL, seed=1)


def run(data, **overrides):
    cfg = replace(SMALL.train, **overrides)
    return train(data.train_x, labels_of(data.train), data.val_x, labels_of(data.val),
                 encoder_config_for(SMALL, data.panel), cfg, replace(SMALL.loss, lam=cfg.lam))


class TestHead:
    def test_separable_toy(self):
        rng = np.random.default_rng(0)
        X = np.concatenate([rng.normal(-3, 0.5, (20, 2)), rng.normal(3, 0.5, (20, 2))])
        y = np.repeat([0, 1], 20)
        head = fit_head(X, y)
        assert (head.predict(X) == y).mean() == 1.0

    def test_matches_sklearn_decision(self):
        from sklearn.pipeline import make_pipeline
        from sklearn.preprocessing import StandardScaler
        from sklearn.svm import SVC

        rng = np.random.default_rng(1)
        X = rng.normal(size=(40, 3)) * [1, 10, 100] + 5
        y = (X[:, 0] + rng.normal(0, 0.5, 40) > 5).astype(int)
        ref = make_pipeline(StandardScaler(), SVC(kernel="rbf")).fit(X, y)
        probe = rng.normal(size=(15, 3)) * [1, 10, 100] + 5
        np.testing.assert_allclose(fit_head(X, y).decision_function(probe), ref.decision_function(probe), atol=1e-8)

    def test_json_roundtrip(self):
        rng = np.random.default_rng(2)
        X, y = rng.normal(size=(30, 4)), np.tile([0, 1], 15)
        head = fit_head(X, y)
        back = ClassifierHead.from_json(head.to_json())
        np.testing.assert_array_equal(back.decision_function(X), head.decision_function(X))

    def test_single_class(self):
        with pytest.raises(SplitError, match="split"):
            fit_head(np.zeros((5, 2)), np.zeros(5))


class TestTrain:
    def test_history_and_early_stopping(self, data):
        result = run(data, max_epochs=6, patience=2)
        f1s = [h["val_f1"] for h in result.history]
        assert result.best_epoch == int(np.argmax(f1s))
        best = [h["best_f1"] for h in result.history]
        assert best == list(np.maximum.accumulate(f1s))
        assert result.history[0]["phase"] == "warmup"
        assert result.centers.shape == (2, 8)

    def test_deterministic(self, data, tmp_path):
        a, b = run(data), run(data)
        assert a.history == b.history
        for name, res in (("a", a), ("b", b)):
            save_checkpoint(res, data.norm, tmp_path / name, SMALL.train, SMALL.loss)
        for f in ("encoder.bin", "state.bin", "head.json", "manifest.json"):
            assert filecmp.cmp(tmp_path / "a" / f, tmp_path / "b" / f, shallow=False)

    def test_only_cc_equals_full_without_lambda(self, data):
        keep = labels_of(data.train) >= 0
        x, y = data.train_x[keep], labels_of(data.train)[keep]
        results = []
        for variant in ("full", "only_cc"):
            cfg = replace(SMALL.train, variant=variant, lam=0.0)
            results.append(train(x, y, data.val_x, labels_of(data.val), encoder_config_for(SMALL, data.panel),
                                 cfg, LossConfig(lam=0.0)))
        assert results[0].history == results[1].history
        for p, q in zip(results[0].encoder.parameters(), results[1].encoder.parameters()):
            assert torch.equal(p, q)

    def test_only_cc_ignores_unknown(self, data):
        y = labels_of(data.train)
        keep = y >= 0
        assert (~keep).any()
        a = run(data, variant="only_cc")
        b = train(data.train_x[keep], y[keep], data.val_x, labels_of(data.val),
                  encoder_config_for(SMALL, data.panel), replace(SMALL.train, variant="only_cc"), SMALL.loss)
        assert a.history == b.history

    def test_predict_consistent_with_head(self, data):
        result = run(data)
        lab = labels_of(data.train) >= 0
        windows = data.train_x[lab][:10]
        direct = result.head.predict(embed(result.encoder, windows, result.adjacency))
        np.testing.assert_array_equal(predict(result.head, result.encoder, windows, result.adjacency), direct)

    def test_divergence(self, data):
        bad = data.train_x.copy()
        bad[0, 0, 0, 0] = np.nan
        with pytest.raises(TrainingDivergence, match="batch"):
            train(bad, labels_of(data.train), data.val_x, labels_of(data.val),
                  encoder_config_for(SMALL, data.panel), SMALL.train, SMALL.loss)

    def test_needs_both_classes(self, data):
        y = np.zeros(len(data.train), dtype=int)
        with pytest.raises(SplitError):
            train(data.train_x, y, data.val_x, labels_of(data.val), encoder_config_for(SMALL, data.panel))

    @pytest.mark.parametrize("kwargs", [dict(batch_size=1), dict(patience=0), dict(variant="gat_lstm")])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)


class TestCheckpoint:
    def test_roundtrip_predictions(self, data, tmp_path):
        result = run(data)
        save_checkpoint(result, data.norm, tmp_path / "ck", SMALL.train, SMALL.loss, extra={"variant": "full"})
        ckpt = load_checkpoint(tmp_path / "ck")
        ours = result.head.predict(embed(result.encoder, data.test_x, result.adjacency))
        np.testing.assert_array_equal(ckpt.head.predict(ckpt.embed_normalized(data.test_x)), ours)
        # Raw panel windows go through the stored normalization.
        raw = stack_windows(data.panel.values, data.test, 24)
        np.testing.assert_array_equal(ckpt.predict(raw), ours)
        assert ckpt.manifest["variant"] == "full"
        np.testing.assert_array_equal(ckpt.norm.mean, data.norm.mean)

    def test_window_mismatch(self, data, tmp_path):
        save_checkpoint(run(data, max_epochs=1), data.norm, tmp_path / "ck", SMALL.train, SMALL.loss)
        ckpt = load_checkpoint(tmp_path / "ck")
        with pytest.raises(CheckpointError):
            ckpt.predict(np.zeros((1, 24, 5, 2)))

    def test_missing_dir(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "none")

    def test_encoder_manifest_mismatch(self, data, tmp_path):
        import json

        save_checkpoint(run(data, max_epochs=1), data.norm, tmp_path / "ck", SMALL.train, SMALL.loss)
        path = tmp_path / "ck" / "manifest.json"
        manifest = json.loads(path.read_text())
        manifest["encoder_config"]["D"] = 99
        path.write_text(json.dumps(manifest))
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "ck")


def test_encoder_config_matches_panel(data):
    assert encoder_config_for(SMALL, data.panel) == EncoderConfig(n=4, F=2, T=24, K=3, C=4, D=8)
