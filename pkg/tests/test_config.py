import json

import pytest
from hypothesis import given, strategies as st

from mvlab.config import ConfigError, canonical_json, config_hash, parse_config, resolve_config
from mvlab.errors import ContractError


def test_defaults_fill_in():
    cfg = resolve_config({"experiment": "solution_dependence"})
    assert cfg.replicates == 10
    assert cfg.family == {"name": "example1", "values": [0.5, 0.8, 0.9, 0.99], "limit": 1.0}
    assert cfg.integrator.N == 10_000 and cfg.integrator.T == 0.5
    assert cfg.outputs == {"dir": None, "snapshots": False}


def test_counterexample_records_only_start_and_end():
    cfg = resolve_config({"experiment": "counterexample", "integrator": {"T": 1.0, "dt": 0.01}})
    assert cfg.integrator.record_every == 100
    assert cfg.settings["times"] == [1.0]


@pytest.mark.parametrize(
    "raw,path",
    [
        ({"experiment": "picard", "colour": 1}, "colour"),
        ({"experiment": "picard", "integrator": {"steps": 3}}, "integrator.steps"),
        ({"experiment": "picard", "integrator": {"dt": 0}}, "integrator.dt"),
        ({"experiment": "picard", "integrator": {"N": 1.5}}, "integrator.N"),
        ({"experiment": "solution_dependence", "family": {"values": []}}, "family.values"),
        ({"experiment": "solution_dependence", "family": {"name": "example7"}}, "family.name"),
        ({"experiment": "solution_dependence", "settings": {"times": [0.9]}}, "settings.times[0]"),
        ({"experiment": "simulate", "model": {"name": "example1"}}, "model.params.lambda"),
        ({"experiment": "counterexample", "settings": {"eps": -1}}, "settings.eps"),
        ({"experiment": "check", "settings": {"suites": ["nope"]}}, "settings.suites[0]"),
        ({"experiment": "nothing"}, "experiment"),
        ({}, "experiment"),
        ({"experiment": "picard", "seed": -1}, "seed"),
        ({"experiment": "picard", "init": {"kind": "gaussian", "sd": 1}}, "init.sd"),
        ({"experiment": "picard", "outputs": {"snapshots": "yes"}}, "outputs.snapshots"),
        ({"experiment": "picard", "family": {}}, "family"),
    ],
)
def test_schema_violations_name_the_key(raw, path):
    with pytest.raises(ConfigError, match=path.replace("[", r"\[").replace("]", r"\]")):
        resolve_config(raw)
    assert issubclass(ConfigError, ContractError)


def test_hash_stable_under_key_order():
    a = {"experiment": "picard", "seed": 3, "integrator": {"N": 10, "dt": 0.1}}
    b = {"integrator": {"dt": 0.1, "N": 10}, "seed": 3, "experiment": "picard"}
    assert resolve_config(a).config_hash == resolve_config(b).config_hash
    assert resolve_config(a).config_hash != resolve_config({**a, "seed": 4}).config_hash


@given(st.dictionaries(st.text(max_size=5), st.integers(), max_size=6))
def test_canonical_json_ignores_insertion_order(d):
    rev = dict(reversed(list(d.items())))
    assert canonical_json(d) == canonical_json(rev)
    assert config_hash(d) == config_hash(rev)


def test_parse_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"experiment": "picard", "integrator": {"N": 5}}))
    assert parse_config(p).integrator.N == 5
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        parse_config(bad)
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.json")


def test_init_kind_switch_takes_its_own_defaults():
    cfg = resolve_config({"experiment": "simulate", "init": {"kind": "uniform", "high": 2.0}})
    assert cfg.resolved["init"] == {"kind": "uniform", "low": 0.0, "high": 2.0}


def test_minimal_counterexample_config_defaults():
    cfg = resolve_config({"experiment": "counterexample", "seed": 1})
    assert (cfg.integrator.N, cfg.integrator.dt, cfg.integrator.T) == (10_000, 1e-3, 1.0)
    assert cfg.settings["eps"] == 0.5 and cfg.settings["k_list"] == [10, 100, 1000]


def test_misspelled_key_is_named():
    with pytest.raises(ConfigError, match="modle"):
        resolve_config({"experiment": "simulate", "modle": {"name": "example1"}})
