import pytest

from jagan.config import AppConfig, CurationSettings, load_config
from jagan.errors import UsageError


def test_defaults_without_file():
    cfg = load_config()
    assert cfg.model.resolution == 256
    assert cfg.train.lr_g == 1e-4
    assert cfg.train.lr_d == 4e-4
    assert cfg.loss.w_fm == 10.0
    assert cfg.inference.n_frames == 6
    assert cfg.curation.min_track_frames == 30


def test_file_values(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text("""
[model]
resolution = 128
coarse_channels = [8, 16, 32, 48, 64, 80, 100]

[train]
max_steps = 7
adam_betas = [0.0, 0.9]

[curation]
max_hamming = 4
""")
    cfg = load_config(p)
    assert cfg.model.resolution == 128
    assert cfg.model.coarse_channels == (8, 16, 32, 48, 64, 80, 100)
    assert cfg.train.max_steps == 7
    assert cfg.train.adam_betas == (0.0, 0.9)
    assert cfg.curation.max_hamming == 4
    assert cfg.loss.w_adv == 1.0  # untouched section keeps defaults


def test_overrides_beat_file(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text("[train]\nseed = 1\nmax_steps = 5\n")
    cfg = load_config(p, {"train": {"seed": 9, "max_steps": None}})
    assert cfg.train.seed == 9
    assert cfg.train.max_steps == 5  # None override is dropped


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text("[train]\nlearning_rate = 0.1\n")
    with pytest.raises(UsageError, match="learning_rate"):
        load_config(p)
    with pytest.raises(UsageError, match="valid keys"):
        load_config(p)


def test_unknown_section_rejected(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text("[optimizer]\nlr = 0.1\n")
    with pytest.raises(UsageError, match="optimizer"):
        load_config(p)


def test_invalid_value_reported_as_usage_error(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text("[model]\nresolution = 100\n")
    with pytest.raises(UsageError, match="model"):
        load_config(p)


def test_missing_file(tmp_path):
    with pytest.raises(UsageError, match="not found"):
        load_config(tmp_path / "nope.toml")


def test_unparseable_file(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text("[train\nbroken")
    with pytest.raises(UsageError, match="parse"):
        load_config(p)


def test_app_config_sections():
    cfg = AppConfig()
    assert isinstance(cfg.curation, CurationSettings)
    assert not cfg.model.video_mode
