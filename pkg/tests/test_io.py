"""Grid-spec and manifest files and deterministic JSON."""
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from forestlab.io import (
    Float17, dumps, grid_spec_dict, load_grid_spec, load_manifest, parse_direction, parse_grid_spec,
)


def test_honeycomb_preset():
    F = load_grid_spec("honeycomb")
    assert F.k == 1 and F.n == 2
    assert np.array_equal(F.grids[0].matrix.values, [[1, 0.5], [0, 0.8660254037844386]])


def test_honeycomb_written_with_17_digits():
    text = dumps(grid_spec_dict(load_grid_spec("honeycomb")))
    assert "0.8660254037844386" in text
    assert json.loads(text)["grids"][0]["matrix"][1][1] == 0.8660254037844386


def test_rational_entries_roundtrip(tmp_path):
    spec = {"dimension": 2, "grids": [
        {"matrix": [["1/3", 2], [0, "5/7"]], "translation": ["1/2", 0.25]},
        {"matrix": "identity"},
    ]}
    path = tmp_path / "g.json"
    path.write_text(json.dumps(spec))
    F = load_grid_spec(str(path))
    assert F.k == 2
    m = F.grids[0].matrix
    assert m.exact[0][0] == Fraction(1, 3) and m.exact[1][1] == Fraction(5, 7)
    assert np.allclose(F.grids[0].translation, [0.5, 0.25])
    again = parse_grid_spec(json.loads(dumps(grid_spec_dict(F))))
    assert again.grids[0].matrix.exact == m.exact
    assert np.array_equal(again.grids[0].translation, F.grids[0].translation)


def test_float_matrices_roundtrip_exactly(rng):
    M = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    spec = {"dimension": 3, "grids": [{"matrix": M.tolist(), "translation": rng.random(3).tolist()}]}
    F = parse_grid_spec(spec)
    again = parse_grid_spec(json.loads(dumps(grid_spec_dict(F))))
    assert np.array_equal(again.grids[0].matrix.values, M)


@pytest.mark.parametrize("spec", [
    {}, {"grids": []},
    {"dimension": 2, "grids": [{"matrix": [[1, 0]]}]},
    {"dimension": 2, "grids": [{"matrix": [[1, 0], [0, 1]], "translation": [0]}]},
    {"dimension": 2, "grids": [{"matrix": "penrose"}]},
    {"dimension": 3, "grids": [{"matrix": "honeycomb"}]},
    {"dimension": 2, "grids": [{"matrix": [[1, 2], [2, 4]]}]},
])
def test_grid_spec_rejects(spec):
    with pytest.raises(ValueError):
        parse_grid_spec(spec)


def test_dumps_is_deterministic_and_strict():
    obj = {"b": math.inf, "a": [np.float64(0.1), np.int64(3), np.bool_(True)], "c": Float17(1 / 3)}
    text = dumps(obj)
    assert text == dumps(dict(reversed(list(obj.items()))))
    data = json.loads(text)
    assert data["b"] is None and data["a"] == [0.1, 3, True]
    assert "0.33333333333333331" in text
    assert list(data) == ["a", "b", "c"]


def test_load_manifest_plain_and_from_artifact(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"d": 1, "k": 3, "samples": 2, "epsilons": [0.125, 0.0625]}))
    m = load_manifest(str(p))
    assert m.levels == [3, 4] and m.samples == 2
    art = tmp_path / "summary.json"
    art.write_text(json.dumps({"config": m.to_dict(), "samples": []}))
    assert load_manifest(str(art)).to_dict() == m.to_dict()


def test_parse_direction():
    g = parse_direction("golden")
    assert np.allclose(g, np.array([1, (1 + 5 ** 0.5) / 2]) / np.linalg.norm([1, (1 + 5 ** 0.5) / 2]))
    assert np.array_equal(parse_direction("axis", 3), [0.0, 0.0, 1.0])
    assert np.allclose(parse_direction("3,4"), [0.6, 0.8])
    for bad in ("0,0", "1,nan", "x,y"):
        with pytest.raises(ValueError):
            parse_direction(bad)
    with pytest.raises(ValueError):
        parse_direction("golden", 3)
