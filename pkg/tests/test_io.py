import json
import math

import numpy as np
import pytest

from coarse_op import io as cio
from coarse_op.lp_op import random_band
from coarse_op.pou import grid_folner_pou
from coarse_op.space import explicit_space, grid_space, path_space


def test_space_round_trip():
    for s in (grid_space(2, 4), path_space(7), explicit_space([[0, 1, 2], [1, 0, 1], [2, 1, 0]])):
        again = cio.space_from_json(json.loads(json.dumps(cio.space_to_json(s))))
        assert np.array_equal(again.dist, s.dist)


@pytest.mark.parametrize("p", [1, 2.5, math.inf])
def test_operator_round_trip(p):
    b = random_band(path_space(12), 2, seed=3, p=p, k=2)
    doc = json.loads(json.dumps(cio.operator_to_json(b)))
    again = cio.operator_from_json(doc)
    assert again.p == b.p and again.k == 2
    assert (again.matrix != b.matrix).nnz == 0


def test_partition_round_trip():
    s = grid_space(1, 20)
    pou = grid_folner_pou(s, 4, 2)
    again = cio.partition_from_json(json.loads(json.dumps(cio.partition_to_json(pou))), s)
    assert abs(again.values - pou.values).max() == 0


def test_load_json_arg(tmp_path):
    assert cio.load_json_arg('{"a": 1}') == {"a": 1}
    f = tmp_path / "x.json"
    f.write_text("[1, 2]")
    assert cio.load_json_arg(str(f)) == [1, 2]


def test_format_value():
    assert cio.format_value(0.1) == "0.1"
    assert cio.format_value(True) == "true"
    assert cio.format_value(np.bool_(False)) == "false"
    assert cio.format_value(None) == ""
    assert cio.format_value(math.inf) == "inf"
    assert cio.format_value(np.int64(3)) == "3"
    assert cio.format_value((1, 2)) == "1 2"


def test_csv_columns_and_float_round_trip(tmp_path):
    rows = [{"a": 1 / 3, "b": 2}, {"b": 3, "c": "x"}]
    text = cio.rows_to_csv(rows)
    lines = text.splitlines()
    assert lines[0] == "a,b,c"
    assert float(lines[1].split(",")[0]) == 1 / 3
    path = cio.write_csv(tmp_path / "sub" / "t.csv", rows)
    assert path.read_text() == text


def test_write_json_sorted(tmp_path):
    path = cio.write_json(tmp_path / "m.json", {"b": np.float64(1.5), "a": np.arange(2)})
    assert path.read_text().index('"a"') < path.read_text().index('"b"')
    assert json.loads(path.read_text()) == {"a": [0, 1], "b": 1.5}
