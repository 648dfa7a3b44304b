import json
from fractions import Fraction as F

import numpy as np
import pytest

from weakbellman.report import canonical_json, config_hash, csv_text, make_report, write_json


def test_canonical_json():
    text = canonical_json({"b": F(1, 3), "a": np.float64(0.1), "c": np.int64(2), "d": np.bool_(True)})
    assert text == '{"a":0.1,"b":"1/3","c":2,"d":true}'
    with pytest.raises(ValueError):
        canonical_json({"x": float("nan")})
    with pytest.raises(TypeError):
        canonical_json({"x": object()})


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    rep = make_report("cmd", {"a": 1}, {"r": 1})
    assert rep["version"].startswith("v") and rep["violations"] == []


def test_csv_formats():
    assert csv_text(["p", "q"], [(F(-3, 2), 0.1)]) == "p,q\n-3/2,0.1\n"


def test_write_json_reports_path(tmp_path):
    write_json(tmp_path / "ok.json", {"a": 1})
    assert json.loads((tmp_path / "ok.json").read_text()) == {"a": 1}
    with pytest.raises(OSError, match="missing"):
        write_json(tmp_path / "missing" / "x.json", {})
