import json

import numpy as np
import pytest

from stablelab import output


def test_csv_roundtrip(tmp_path):
    rows = [(0, 0.1, 1 / 3), (1, 2.5e-17, -4.0)]
    p = output.write_csv(tmp_path / "t.csv", "demo", ("i", "a", "b"), rows)
    kind, header, data = output.read_csv(p)
    assert kind == "demo" and header == ["i", "a", "b"]
    np.testing.assert_array_equal(data, np.array(rows, dtype=float))
    assert p.read_text().splitlines()[0] == "# stablelab-csv v1 demo"


def test_read_csv_requires_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        output.read_csv(p)


def test_json_is_sorted_and_plain(tmp_path):
    p = output.write_json(tmp_path / "x.json", {"b": np.arange(2), "a": np.float64(np.inf), "c": np.bool_(True)})
    text = p.read_text()
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert json.loads(text) == {"a": "inf", "b": [0, 1], "c": True}


def test_table_formats(tmp_path):
    rows = [(1.0, 2.0)]
    assert output.write_table(tmp_path, "t", "k", ("x", "y"), rows, "csv").suffix == ".csv"
    j = output.write_table(tmp_path, "t", "k", ("x", "y"), rows, "json")
    assert json.loads(j.read_text())["rows"] == [[1.0, 2.0]]
    with pytest.raises(ValueError):
        output.write_table(tmp_path, "t", "k", ("x",), rows, "xml")


def test_manifest_feeds_back_as_config(tmp_path):
    m = output.write_manifest(tmp_path, "simulate", {"seed": 3, "T": 0.5}, [tmp_path / "paths.csv"], 1.23456)
    assert output.load_config(m) == {"seed": 3, "T": 0.5}
    toml = tmp_path / "c.toml"
    toml.write_text("seed = 4\n[measure]\natoms = [{x = 0.0, w = 1.0}]\n")
    assert output.load_config(toml)["measure"]["atoms"][0]["w"] == 1.0
