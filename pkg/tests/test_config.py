import dataclasses

import pytest

from tabanogan.config import ConfigError, RunConfig, load_config, parse_config


def test_empty_text_gives_defaults():
    assert parse_config("") == RunConfig()
    assert parse_config("# only a comment\n\n") == RunConfig()


def test_demo_is_the_default_run():
    assert load_config("demo") == RunConfig()
    assert load_config(None) == RunConfig()


def test_values_parse_by_type():
    c = parse_config("train.epochs = 12\ntrain.generator_dims = 8, 4\ninvert.lr = 0.5\n"
                     "data.drop = a\npreprocess.scale_before_gmm = true  # trailing comment\n")
    assert c.train.epochs == 12 and c.train.generator_dims == (8, 4)
    assert c.invert.lr == 0.5 and c.data.drop == ("a",) and c.preprocess.scale_before_gmm is True


def test_round_trip_through_text():
    c = parse_config("seed = 4\ntrain.epochs = 7\ninvert.seed = 9\ndata.anomaly_value = bad\n")
    assert parse_config(c.to_text()) == c
    assert parse_config(RunConfig().to_text()) == RunConfig()


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError, match=r"<config>:2: unknown key 'train.epoch'"):
        parse_config("seed = 1\ntrain.epoch = 3\n")
    with pytest.raises(ConfigError, match=r":1: unknown section"):
        parse_config("nope.x = 1")


def test_malformed_lines():
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        parse_config("train.epochs 5")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("seed = 1\nseed = 2")
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config("train.epochs = many")
    with pytest.raises(ConfigError, match="invalid"):
        parse_config("train.epochs = 0")


def test_global_seed_reaches_unpinned_stages():
    c = parse_config("seed = 5\ntrain.seed = 1\n")
    assert c.synth.seed == c.preprocess.seed == c.invert.seed == c.eval.seed == 5
    assert c.train.seed == 1
    d = c.with_seed(8)
    assert d.seed == 8 and d.invert.seed == 8 and d.train.seed == 1
    assert c.invert.seed == 5  # the original is unchanged


def test_with_seed_leaves_other_fields():
    c = parse_config("train.epochs = 3").with_seed(2)
    assert c.train.epochs == 3
    assert dataclasses.replace(c.train, seed=0) == dataclasses.replace(parse_config("train.epochs = 3").train)


def test_data_path_resolved_and_checked(tmp_path):
    (tmp_path / "d.csv").write_text("a,label\n1,1\n")
    c = parse_config("data.path = d.csv", base_dir=tmp_path)
    assert c.data.path == str(tmp_path / "d.csv")
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config("data.path = missing.csv", base_dir=tmp_path)
    assert parse_config("data.path = missing.csv", check_paths=False).data.path == "missing.csv"


def test_load_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("train.epochs = 2\n")
    assert load_config(p).train.epochs == 2
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.cfg")
