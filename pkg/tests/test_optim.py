import numpy as np
import pytest

import gradcheck
from spoofkit.classifier import LossConfig, ModelConfig, ModelParams, init_params, loss_and_grad
from spoofkit.optim import (
    AdamState,
    AugmentConfig,
    EarlyStopping,
    GradAccumulator,
    TrainConfig,
    adam_step,
    read_history_csv,
    train_loop,
    write_history_csv,
)
from spoofkit.toyfeat import LayeredFeatures, ToyExtractor, ToyExtractorConfig, save_features

NO_AUG = AugmentConfig(enabled=False)
SMALL_EX = ToyExtractorConfig(num_layers=2, feature_dim=6)
SMALL_MODEL = ModelConfig(num_layers_plus_one=3, feature_dim=6, hidden_dim=5, attn_dim=4, embed_dim=4)


def feature_rows(tmp_path, n, prefix="u", seed=0):
    """Manifest rows backed only by LFT1 files (no audio)."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        label = "genuine" if i % 2 == 0 else "spoof"
        shift = 0.8 if label == "genuine" else -0.8
        data = (rng.standard_normal((3, 5, 6)) + shift * np.arange(6)).astype(np.float32)
        path = tmp_path / f"{prefix}{i}.lft"
        save_features(path, LayeredFeatures(data))
        rows.append({"id": f"{prefix}{i}", "label": label, "features": str(path)})
    return rows


def fresh_params(seed=0):
    return init_params(SMALL_MODEL, np.random.default_rng(seed))


class TestAdam:
    def test_zero_gradient_is_a_no_op(self):
        p = fresh_params()
        before = p.flat().copy()
        adam_step(p, p.zeros_like(), AdamState.fresh(p), TrainConfig())
        assert np.array_equal(p.flat(), before)

    def test_first_step_closed_form(self):
        p = fresh_params().zeros_like()
        g = p.zeros_like()
        g.attn_k[...] = 1.0
        state = AdamState.fresh(p)
        adam_step(p, g, state, TrainConfig())
        expected = -1e-3 * 1.0 / (1.0 + 1e-8)
        assert float(p.attn_k) == pytest.approx(expected, rel=1e-15)
        assert float(p.attn_k) == pytest.approx(-9.99999995e-4, abs=1e-11)
        assert state.step == 1

    def test_moment_shapes_and_errors(self):
        p = fresh_params()
        state = AdamState.fresh(p)
        for name, arr in p.items():
            assert getattr(state.m, name).shape == arr.shape
        bad = p.zeros_like()
        bad.ff1_b = np.zeros(3)
        with pytest.raises(ValueError):
            adam_step(p, bad, state, TrainConfig())
        nan = p.zeros_like()
        nan.embed_b[0] = np.nan
        with pytest.raises(FloatingPointError):
            adam_step(p, nan, state, TrainConfig())
        assert state.step == 0

    def test_two_utterance_descent_is_monotone(self):
        p, feats, _ = gradcheck.random_problem(0)
        batch = [(feats, "genuine"), (feats[:, ::-1] + 1.0, "spoof")]
        state, cfg = AdamState.fresh(p), TrainConfig()
        losses = []
        for _ in range(30):
            loss, g = loss_and_grad(batch, p, LossConfig(), 0.0, [None, None])
            losses.append(loss)
            adam_step(p, g, state, cfg)
        assert np.all(np.diff(losses[1:]) < 0)


class TestBookkeeping:
    def test_accumulator_weights_by_size(self):
        like = fresh_params()
        acc = GradAccumulator(like)
        a, b = like.map(lambda x: np.ones_like(x)), like.map(lambda x: 4 * np.ones_like(x))
        acc.add(a, 3)
        acc.add(b, 1)
        assert np.allclose(acc.mean().flat(), 7 / 4)
        acc.reset()
        with pytest.raises(ValueError):
            acc.mean()

    def test_early_stopping_strict(self):
        es = EarlyStopping(3)
        assert es.update(1, 1.0)
        assert not es.update(2, 1.0)
        assert not es.update(3, 2.0)
        assert not es.should_stop
        assert not es.update(4, 1.0)
        assert es.should_stop and es.best_epoch == 1

    def test_config_invariants(self):
        for kw in ({"batch_size": 0}, {"accumulation_steps": 0}, {"patience_epochs": 0}, {"dropout_p": 1.0}):
            with pytest.raises(ValueError):
                TrainConfig(**kw)

    def test_history_csv_roundtrip(self, tmp_path):
        hist = [{"epoch": 1, "train_loss": 0.5, "dev_loss": 0.25, "alpha": [0.2, 0.8]}]
        write_history_csv(tmp_path / "h.csv", hist)
        assert (tmp_path / "h.csv").read_text().splitlines()[0] == "epoch,train_loss,dev_loss,alpha_0,alpha_1"
        assert read_history_csv(tmp_path / "h.csv") == hist


class TestLoop:
    def run(self, rows, dev, cfg, **kw):
        return train_loop(rows, dev, fresh_params(), ToyExtractor(SMALL_EX), NO_AUG, cfg, LossConfig(), **kw)

    def test_one_step_per_epoch_for_64(self, tmp_path):
        rows = feature_rows(tmp_path, 64)
        res = self.run(rows, rows[:4], TrainConfig(max_epochs=3))
        assert [h["steps"] for h in res.history] == [1, 2, 3]

    def test_partial_window_is_flushed(self, tmp_path):
        rows = feature_rows(tmp_path, 70)
        res = self.run(rows, rows[:4], TrainConfig(max_epochs=2))
        assert res.history[-1]["steps"] == 4

    def test_improving_dev_runs_to_max(self, tmp_path):
        rows = feature_rows(tmp_path, 8)
        res = self.run(rows, rows, TrainConfig(max_epochs=15, batch_size=4, accumulation_steps=1),
                       dev_loss_fn=lambda epoch, p: 1.0 / epoch)
        assert res.epochs_run == 15 and res.best_epoch == 15

    def test_best_params_snapshot(self, tmp_path):
        rows = feature_rows(tmp_path, 8)
        seen = {}

        def dev(epoch, p):
            seen[epoch] = p.flat().copy()
            return [5, 3, 4, 4, 4][epoch - 1]

        res = self.run(rows, rows, TrainConfig(max_epochs=5, patience_epochs=3, batch_size=4, accumulation_steps=1),
                       dev_loss_fn=dev)
        assert res.best_epoch == 2 and res.epochs_run == 5
        assert np.array_equal(res.best_params.flat(), seen[2])

    def test_bit_identical_reruns(self, tmp_path):
        rows = feature_rows(tmp_path, 16)
        cfg = TrainConfig(max_epochs=3, batch_size=4, accumulation_steps=2)
        a = self.run(rows, rows[:4], cfg)
        b = self.run(rows, rows[:4], cfg)
        assert np.array_equal(a.params.flat(), b.params.flat())
        assert a.history == b.history

    def test_empty_manifest(self, tmp_path):
        with pytest.raises(ValueError):
            self.run([], feature_rows(tmp_path, 2), TrainConfig())


def test_params_container_helpers():
    p = fresh_params()
    q = p.copy()
    q.ff1_w[0, 0] += 1
    assert p.ff1_w[0, 0] != q.ff1_w[0, 0]
    assert p.flat().size == sum(a.size for _, a in p.items())
    assert isinstance(p.zeros_like(), ModelParams)
