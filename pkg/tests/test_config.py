import json

import pytest

from physaudit.config import DEFAULT_JND, ConfigError, RunConfig, config_from_mapping, load_config


class TestDefaults:
    def test_published_constants(self):
        cfg = RunConfig()
        assert cfg.seeds == 10
        assert cfg.audit.tau_mean_fraction == 0.02
        assert cfg.audit.tau_std_fraction == 0.25
        assert cfg.onset.threshold_mads == 3.0
        assert (cfg.onset.fft_size, cfg.onset.hop) == (512, 53)
        assert (cfg.metrics.window_min, cfg.metrics.window_max) == (0.2, 2.0)
        assert cfg.metrics.rolloff_fraction == 0.85
        assert DEFAULT_JND["f0"] == 0.01

    def test_validates(self):
        assert RunConfig().validate() is not None


class TestLoading:
    def test_toml(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('seeds = 5\n[audit]\ntau_eq_multiplier = 2\njnd = {f0 = 0.02}\n'
                        '[metrics]\ndecay_ranges = [[-5, -25]]\n', encoding="utf-8")
        cfg = load_config(path)
        assert cfg.seeds == 5
        assert cfg.audit.tau_eq_multiplier == 2.0
        assert cfg.audit.jnd["f0"] == 0.02
        assert cfg.audit.jnd["rt60"] == DEFAULT_JND["rt60"]
        assert cfg.metrics.decay_ranges == ((-5, -25),)

    def test_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"onset": {"min_separation": 0.05}}), encoding="utf-8")
        assert load_config(path).onset.min_separation == 0.05

    def test_env_fallback(self, tmp_path, monkeypatch):
        path = tmp_path / "c.json"
        path.write_text('{"jobs": 3}', encoding="utf-8")
        monkeypatch.setenv("PHYSAUDIT_CONFIG", str(path))
        assert load_config().jobs == 3

    def test_no_config(self, monkeypatch):
        monkeypatch.delenv("PHYSAUDIT_CONFIG", raising=False)
        assert load_config() == RunConfig().validate()

    @pytest.mark.parametrize("data,match", [
        ({"bogus": 1}, "unknown config key"),
        ({"onset": {"hop": 2.5}}, "integer"),
        ({"onset": 3}, "table"),
        ({"seeds": 0}, "seeds"),
        ({"metrics": {"f0_octave_check": "maybe"}}, "octave"),
        ({"audit": {"jnd": {"loudness": 0.1}}}, "unknown metrics"),
        ({"audit": {"jnd": {"f0": 0}}}, "positive"),
        ({"audit": {"tau_eq_multiplier": 0.5}}, "tau_eq"),
        ({"onset": {"tolerance_min": 0.3}}, "tolerance"),
    ])
    def test_invalid(self, data, match):
        with pytest.raises(ConfigError, match=match):
            config_from_mapping(data)

    def test_unparseable(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text("seeds = = 3", encoding="utf-8")
        with pytest.raises(ConfigError, match="cannot parse"):
            load_config(path)

    def test_to_dict_round_trip(self):
        cfg = config_from_mapping({"seeds": 4, "audit": {"jnd": {"drr": 2.0}}})
        assert config_from_mapping(cfg.to_dict()) == cfg
