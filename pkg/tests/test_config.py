import datetime as dt
import math

import pytest

from seirda.config import (
    RunConfig,
    format_config,
    load_config,
    load_preset,
    parse_config,
    preset_names,
)
from seirda.errors import ConfigError


def test_defaults():
    cfg = RunConfig()
    assert cfg.ensemble_size == 50
    assert cfg.obs_sd == pytest.approx(math.log(1.3))
    assert (cfg.k_ratio, cfg.symptomatic_fraction, cfg.jitter) == (0.58, 0.83, 0.1)
    assert cfg.spinup_days == 14
    assert (cfg.spinup_seed_e, cfg.spinup_seed_ia, cfg.spinup_seed_is) == (10, 10, 1)


def test_parse_values():
    cfg = parse_config("""
        # comment
        population = 1e6
        obs_sd = log(1.5)   # trailing comment
        start_date = 2020-03-06
        end_date = none
        ensemble_size = 20
        spinup_beta_grid = 0.1, 0.2
        emergency_periods = 2020-04-07/2020-05-25, 2021-01-08/2021-03-21
    """)
    assert cfg.population == 1e6
    assert cfg.obs_sd == pytest.approx(math.log(1.5))
    assert cfg.start_date == dt.date(2020, 3, 6) and cfg.end_date is None
    assert cfg.spinup_beta_grid == (0.1, 0.2)
    assert cfg.emergency_periods[1] == (dt.date(2021, 1, 8), dt.date(2021, 3, 21))


@pytest.mark.parametrize("text,fragment", [
    ("colour = red", "unknown key"),
    ("seed = 1\nseed = 2", "duplicate"),
    ("seed", "expected"),
    ("ensemble_size = many", "bad value"),
    ("ensemble_size = 1", "ensemble_size"),
    ("obs_sd = 0", "obs_sd"),
    ("k_ratio = 1.2", "k_ratio"),
    ("start_date = 2020-05-01\nend_date = 2020-04-01", "precede"),
    ("ci_method = median", "ci_method"),
])
def test_rejects(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_round_trip():
    cfg = load_preset("tokyo").replace(seed=7, obs_sd=math.log(2.0))
    assert parse_config(format_config(cfg)) == cfg


def test_presets():
    assert preset_names() == ["japan", "kanagawa", "osaka", "tokyo"]
    tokyo = load_preset("tokyo")
    assert tokyo.population == 13_955_000
    assert tokyo.start_date == dt.date(2020, 3, 6)
    assert load_preset("osaka").start_date == dt.date(2020, 3, 26)
    assert load_preset("kanagawa").start_date == dt.date(2020, 3, 18)
    assert load_preset("japan").start_date == dt.date(2020, 3, 1)
    assert load_preset("osaka").population is None
    with pytest.raises(ConfigError):
        load_preset("paris")


def test_load_config_file_and_preset(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("seed = 4\n")
    assert load_config(p).seed == 4
    assert load_config("tokyo").region == "tokyo"
    with pytest.raises(ConfigError, match="nothere"):
        load_config(tmp_path / "nothere.cfg")


def test_to_dict_jsonable():
    import json
    json.dumps(load_preset("tokyo").to_dict())
