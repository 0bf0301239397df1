from __future__ import annotations

import copy
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brlab.config import ConfigError, load_config, parse_config
from conftest import CONFIGS

BASE = {
    "schema": "brlab.config/1",
    "grid": {"n": 1, "h": "1/32"},
    "potential": "quartic",
    "scenario": {"kind": "two-phase"},
    "epsilons": [0.2, 0.1],
}


def with_(path: str, value):
    raw = copy.deepcopy(BASE)
    node = raw
    keys = path.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value
    return raw


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json") if p.name != "acceptance.json"))
def test_shipped_configs_parse(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.source.endswith(name)
    assert parse_config(json.loads(json.dumps(cfg.to_dict()))).to_dict() == cfg.to_dict()


def test_minimal_config_defaults():
    cfg = parse_config(BASE)
    assert cfg.grid.h == pytest.approx(1 / 32)
    assert cfg.epsilons == (0.2, 0.1)
    assert cfg.output is None


@pytest.mark.parametrize(
    "path, value, field",
    [
        ("grid.n", 3, "grid.n"),
        ("grid.h", -0.1, "grid.h"),
        ("grid.h", "one", "grid.h"),
        ("potential", "sextic", "potential"),
        ("scenario.kind", "zigzag", "scenario.kind"),
        ("epsilons", [], "epsilons"),
        ("epsilons", [0.1, 0.2], "epsilons"),
        ("epsilons", [0.2, -0.1], "epsilons[1]"),
        ("seed", -1, "seed"),
        ("seed", 2**64, "seed"),
        ("workers", 0, "workers"),
        ("schema", "brlab.config/9", "schema"),
        ("bogus", 1, "bogus"),
        ("solver.method", "multigrid", "solver"),
        ("analysis.radii", [0.5, 0.25], "analysis.radii"),
        ("analysis.radii", [0.5, 2.0], "analysis.radii"),
        ("analysis.sigma_r", "1/32", "analysis.sigma_r"),
        ("analysis.eta0", -1.0, "analysis.eta0"),
    ],
)
def test_field_errors_name_the_field(path, value, field):
    with pytest.raises(ConfigError) as info:
        parse_config(with_(path, value))
    assert info.value.field == field


def test_epsilon_guard_message():
    with pytest.raises(ConfigError, match="epsilon >= 2h guard") as info:
        parse_config(with_("epsilons", [0.2, 1 / 32]))
    assert info.value.field == "epsilons[1]"


def test_battery_must_stay_inside():
    raw = with_("analysis.battery", {"scales": [0.3], "centers": [[0.6]]})
    with pytest.raises(ConfigError, match="Dirichlet face"):
        parse_config(raw)


def test_overrides():
    cfg = parse_config(BASE).with_overrides(out="/tmp/x", seed=5, workers=2)
    assert (str(cfg.output), cfg.seed, cfg.workers) == ("/tmp/x", 5, 2)
    with pytest.raises(ConfigError):
        parse_config(BASE).with_overrides(seed=-3)


def test_invalid_json_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"grid": {"n": 1,,}}')
    with pytest.raises(ConfigError, match="line 1 column"):
        load_config(p)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.json")


@settings(max_examples=40, deadline=None)
@given(k=st.integers(5, 8), eps=st.floats(min_value=1e-3, max_value=0.5))
def test_epsilon_guard_property(k, eps):
    h = 1 / 2**k
    raw = with_("grid.h", h)
    raw["epsilons"] = [eps]
    if eps >= 2 * h:
        assert parse_config(raw).epsilons == (eps,)
    else:
        with pytest.raises(ConfigError, match="guard"):
            parse_config(raw)
