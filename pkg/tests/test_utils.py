import math

import numpy as np

from utils import canonical_json, config_hash, format_value, read_csv, write_csv, write_json


def test_float_format_round_trips():
    value = 0.1 + 0.2
    assert float(format_value(value)) == value
    assert format_value(np.float64(1.5)) == "1.5"
    assert format_value(3) == "3"
    assert format_value("fourier") == "fourier"


def test_csv(tmp_path):
    path = tmp_path / "table.csv"
    write_csv(str(path), ["t", "value"], [(0.0, math.pi), (0.5, np.float64(-1e-300))])
    text = path.read_text()
    assert text.splitlines()[0] == "t,value"
    assert "\r" not in text
    rows = read_csv(str(path))
    assert rows[0]["value"] == math.pi
    assert rows[1]["value"] == -1e-300


def test_json_accepts_numpy(tmp_path):
    path = tmp_path / "out.json"
    write_json(str(path), {"a": np.arange(3), "b": np.float32(0.5), "z": 1 + 2j})
    text = path.read_text()
    assert text.endswith("\n")
    assert '"z": [\n    1.0,\n    2.0\n  ]' in text


def test_hash_ignores_key_order():
    first = {"experiment": {"p": 2, "c0": 1.0}, "grid": {"n": 2048}}
    second = {"grid": {"n": 2048}, "experiment": {"c0": 1.0, "p": 2}}
    assert canonical_json(first) == canonical_json(second)
    assert config_hash(first) == config_hash(second)
    assert config_hash(first) != config_hash({**first, "grid": {"n": 4096}})
