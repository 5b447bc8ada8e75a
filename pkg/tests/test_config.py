import pytest
from hypothesis import given
from hypothesis import strategies as st

from morphwalk.config import DEFAULTS, SCHEMA, load_config, parse_config, validate
from morphwalk.errors import ConfigError, InputError


def test_defaults():
    cfg = validate({})
    assert cfg["grid"]["h"] == 0.02
    assert cfg["chain"]["lazy"] is False
    assert cfg["diagnostics"]["diameter_factor"] == 1.1


def test_merge_keeps_defaults():
    cfg = validate({"grid": {"h": 0.01}, "pde": {"tol": 1e-6}})
    assert cfg["grid"] == {**DEFAULTS["grid"], "h": 0.01}
    assert cfg["pde"] == {"tol": 1e-6}


@pytest.mark.parametrize(
    "raw,name",
    [
        ({"seeed": 1}, "'seeed'"),
        ({"chain": {"rr": 1}}, "'chain.rr'"),
        ({"diagnostics": {"oracle": {"statess": 3}}}, "'diagnostics.oracle.statess'"),
        ({"chain": {"warm_start": {"M": 2, "zone": {}}}}, "'chain.warm_start.zone'"),
        ({"pde": {"iters": 3}}, "'pde.iters'"),
    ],
)
def test_unknown_keys_named(raw, name):
    with pytest.raises(ConfigError, match=name):
        validate(raw)


@pytest.mark.parametrize(
    "raw",
    [{"seed": 1.5}, {"seed": True}, {"grid": {"h": "x"}}, {"chain": {"lazy": 1}}, {"grid": 3}],
)
def test_type_errors(raw):
    with pytest.raises(ConfigError):
        validate(raw)


def test_parse_and_load(tmp_path):
    with pytest.raises(ConfigError):
        parse_config("a = ")
    p = tmp_path / "c.toml"
    p.write_text('seed = 5\n[chain]\nr = 0.3\n')
    cfg, raw = load_config(p)
    assert raw == {"seed": 5, "chain": {"r": 0.3}}
    assert cfg["chain"]["r"] == 0.3 and cfg["chain"]["steps"] == 1000
    with pytest.raises(InputError):
        load_config(tmp_path / "missing.toml")


@given(st.dictionaries(st.text(min_size=1, max_size=8), st.integers(), max_size=3))
def test_validate_never_accepts_unknown_top_level(raw):
    if set(raw) <= set(SCHEMA):
        return
    with pytest.raises(ConfigError):
        validate(raw)
