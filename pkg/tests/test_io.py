import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ineqgp.io import (DEFAULT_CONFIG, InputError, load_config, read_csv, read_dataset,
                       read_table, write_csv, write_json, write_table)


def test_read_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y\n0,1\n0.5, -2e-3\n\n")
    header, data = read_csv(p)
    assert header == ["x", "y"]
    np.testing.assert_array_equal(data, [[0, 1], [0.5, -2e-3]])


@pytest.mark.parametrize("text,match", [
    ("", "no observations"),
    ("x,y\n", "no observations"),
    ("0,1\n1,2\n", "line 1"),
    ("x,x\n0,1\n", "line 1"),
    ("x,y\n0,1,2\n", "line 2"),
    ("x,y\n0,abc\n", "line 2, column 2"),
])
def test_read_csv_errors(tmp_path, text, match):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(InputError, match=match):
        read_csv(p)


def test_read_dataset(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x1,x2,f\n0,1,2\n3,4,5\n")
    x, y, header = read_dataset(p)
    assert x.shape == (2, 2) and y.tolist() == [2, 5] and header[-1] == "f"
    p.write_text("y\n1\n")
    with pytest.raises(InputError):
        read_dataset(p)
    p.write_text("x,y\n0,inf\n")
    with pytest.raises(InputError, match="non-finite"):
        read_dataset(p)


@given(values=st.lists(st.floats(allow_nan=False, allow_infinity=True, width=64),
                       min_size=1, max_size=30))
def test_csv_round_trip(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("rt") / "v.csv"
    v = np.array(values)
    write_csv(p, ["a", "b"], [v, -v])
    _, data = read_csv(p)
    np.testing.assert_array_equal(data[:, 0], v)
    np.testing.assert_array_equal(data[:, 1], -v)


def test_write_csv_validation(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "a.csv", ["a"], [np.ones(2), np.ones(2)])
    with pytest.raises(ValueError):
        write_csv(tmp_path / "a.csv", ["a", "b"], [np.ones(2), np.ones(3)])


def test_table_round_trip(tmp_path):
    rows = [{"name": "rsm", "rate": 0.25, "n": 3.0}, {"name": "hmc", "rate": np.nan, "n": 1.0}]
    write_table(tmp_path / "t.csv", rows)
    back = read_table(tmp_path / "t.csv")
    assert back[0] == {"name": "rsm", "rate": 0.25, "n": 3.0}
    assert back[1]["name"] == "hmc" and np.isnan(back[1]["rate"])
    with pytest.raises(ValueError):
        write_table(tmp_path / "e.csv", [])


def test_config_defaults_carry_protocol_constants():
    cfg = load_config()
    assert cfg["burn_in"] == 100
    assert cfg["thinning"] == 200
    assert cfg["n_samples"] == 10_000
    assert cfg["quantiles"] == [0.025, 0.975]
    assert cfg["schema_version"] == 1


def test_config_layering(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"schema_version": 1, "kernel": "se", "n_samples": 50}))
    cfg = load_config(p, {"n_samples": 20, "kernel": None, "constraints": []})
    assert cfg["kernel"] == "se"
    assert cfg["n_samples"] == 20
    assert cfg["constraints"] == []
    assert DEFAULT_CONFIG["kernel"] == "matern52"


@pytest.mark.parametrize("payload,match", [
    ("{", "invalid JSON"),
    ("[1]", "JSON object"),
    ('{"kernel": "se"}', "schema_version"),
    ('{"schema_version": 2}', "schema_version"),
    ('{"schema_version": 1, "colour": 3}', "unknown"),
])
def test_config_errors(tmp_path, payload, match):
    p = tmp_path / "c.json"
    p.write_text(payload)
    with pytest.raises(InputError, match=match):
        load_config(p)


def test_write_json_sorted(tmp_path):
    write_json(tmp_path / "a" / "x.json", {"b": 1, "a": 2})
    text = (tmp_path / "a" / "x.json").read_text()
    assert text.index('"a"') < text.index('"b"') and text.endswith("\n")
