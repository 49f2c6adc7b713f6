import json

import pytest

from nlifem.config import ConfigError, apply_overrides, build_config, load_raw, parse_config, parse_value, table_raw


def write(tmp_path, doc, name="c.json"):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return p


def test_minimal_config_valid(tmp_path):
    cfg = parse_config(write(tmp_path, {"example": "ex1", "k": 2, "delta": [0.25, 0.5]}))
    assert cfg.k == 2 and cfg.delta == [0.25, 0.5] and cfg.levels == [2, 3, 4, 5]


def test_empty_config_uses_defaults():
    cfg, out = build_config({})
    assert cfg.example == "ex1" and out["svg"] is True and out["png"] is False


def test_incommensurate_delta_rejected():
    with pytest.raises(ConfigError, match="integer multiple"):
        build_config({"delta": [0.3, 0.5], "levels": [2, 3]})


@pytest.mark.parametrize("raw, key", [({"mesh_size": 1}, "mesh_size"),
                                      ({"mesh": {"size": 1}}, "size"),
                                      ({"quad": {"points": 3}}, "points")])
def test_unknown_key_named(raw, key):
    with pytest.raises(ConfigError, match=key):
        build_config(raw)


def test_json_error_reports_line(tmp_path):
    p = write(tmp_path, '{\n  "k": 2,\n  "levels": [2, 3\n}')
    with pytest.raises(ConfigError, match=r"line 4"):
        load_raw(p)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_raw("/nonexistent/config.json")


def test_parse_value():
    assert parse_value("2^-4") == 0.0625
    assert parse_value("[1, 2]") == [1, 2]
    assert parse_value("ex2") == "ex2"
    assert parse_value("true") is True


def test_overrides(tmp_path):
    p = write(tmp_path, {"k": 1, "delta": [0.25, 0.5]})
    cfg = parse_config(p, ["--k=3", "--quad.error_order=14", "--study.seeds=4"])
    assert cfg.k == 3 and cfg.quad.error_order == 14 and cfg.seeds == 4
    with pytest.raises(ConfigError):
        apply_overrides({}, ["--k"])
    with pytest.raises(ConfigError):
        apply_overrides({}, ["--a.b.c=1"])


def test_overrides_do_not_mutate():
    raw = {"mesh": {"h": 0.25}}
    apply_overrides(raw, ["--mesh.h=2^-4"])
    assert raw == {"mesh": {"h": 0.25}}


def test_mesh_h_single_level():
    cfg, _ = build_config({"mesh": {"h": 2.0 ** -4}}, min_levels=1)
    assert cfg.levels == [4]
    with pytest.raises(ConfigError, match="2\\^-e"):
        build_config({"mesh": {"h": 0.3}}, min_levels=1)
    with pytest.raises(ConfigError, match="at least 2"):
        build_config({"mesh": {"h": 2.0 ** -4}})


@pytest.mark.parametrize("raw, match", [
    ({"kind": "banana"}, "kind"),
    ({"k": 0}, "k must"),
    ({"coupling": "glued"}, "coupling"),
    ({"example": "ex9"}, "ex9"),
    ({"delta": [0.25]}, "2 values"),
    ({"levels": [4, 3]}, "increasing"),
    ({"kind": "coupled", "levels": [3, 4]}, "delta_multiples"),
    ({"delta_multiples": [1.5, 2], "levels": [3, 4]}, "integers"),
    ({"delta": [0.5, 0.25]}, "horizons"),
    ({"study": {"boundary": "wrong"}}, "boundary"),
    ({"kind": "local_limit", "study": {"halvings": 0}}, "halvings"),
    ({"kind": "local_limit", "study": {"ratios": [1.0]}}, "ratios"),
    ({"mesh": {"h": 0.25, "levels": [2, 3]}}, "either"),
    ({"quad": {"bogus_order": 3}}, "bogus_order"),
    ({"kernel": {"kind": "cubic"}}, "cubic"),
    ([], "object"),
])
def test_invalid_configs(raw, match):
    with pytest.raises(ConfigError, match=match):
        build_config(raw)


def test_kernel_section():
    cfg, _ = build_config({"kernel": {"kind": "parabolic", "delta": 0.25}, "levels": [2, 3]})
    assert cfg.delta == [0.25, 0.25]
    assert cfg.problem().kernel == "parabolic"


def test_custom_example():
    raw = {"example": "custom", "delta": [0.125, 0.125], "levels": [3, 4],
           "custom": {"a": 0.0, "b": 1.0, "interfaces": [0.5], "kernel": "constant",
                      "branches": ["x", "1 + x"]}}
    cfg, _ = build_config(raw)
    assert cfg.problem().nfields == 2


def test_table_raw():
    assert table_raw("table2", 2)["delta_multiples"] == [2, 4]
    with pytest.raises(ConfigError):
        table_raw("table0", 1)
