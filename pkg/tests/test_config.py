import json

import pytest

from spoofkit.config import ConfigError, RunConfig, from_dict, load_config, parse_override


def test_defaults_fill_missing():
    cfg = from_dict({"train": {"max_epochs": 3}})
    assert cfg.train.max_epochs == 3
    assert cfg.train.learning_rate == 1e-3
    assert cfg.augment == RunConfig().augment


def test_to_dict_roundtrip():
    cfg = RunConfig()
    assert from_dict(json.loads(cfg.dumps())) == cfg


@pytest.mark.parametrize(
    "doc",
    [
        {"bogus": {}},
        {"train": {"lr": 1}},
        {"train": {"max_epochs": "ten"}},
        {"augment": {"enabled": 1}},
        {"train": {"batch_size": 0}},
        {"data": {"duration_s": "long"}},
        [],
    ],
)
def test_rejections(doc):
    with pytest.raises(ConfigError):
        from_dict(doc)


def test_overrides_and_seed(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"train": {"max_epochs": 4}}))
    cfg = load_config(path, ["train.max_epochs=6", "augment.fir_band=WB", "data.duration_s=[1, 2]"], seed=9)
    assert cfg.train.max_epochs == 6
    assert cfg.augment.fir_band == "WB"
    assert cfg.data.duration_s == (1.0, 2.0)
    assert cfg.data.seed == cfg.train.seed == 9


def test_parse_override():
    assert parse_override("loss.scale=30") == ("loss", "scale", 30)
    assert parse_override("augment.fir_band=NB") == ("augment", "fir_band", "NB")
    with pytest.raises(ConfigError):
        parse_override("nodot=1")


def test_model_config_follows_extractor():
    mc = from_dict({"extractor": {"num_layers": 24, "feature_dim": 1024}}).model_config()
    assert (mc.num_layers_plus_one, mc.feature_dim, mc.hidden_dim) == (25, 1024, 128)
