import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lyapcrit.gridfn import Affine, Constant, GridFunction, Zero
from lyapcrit.persistence import (IntegrityError, ParseError, ResultBundle, RunManifest, Table, dumps_json,
                                  fmt, load, load_gridfunction, load_table, save, save_gridfunction, table_csv)


def _fn(n=10_000, seed=0):
    v = np.random.default_rng(seed).standard_normal(n).cumsum() * 1e-3
    return GridFunction(-30.0, 0.01, v, Zero(), Affine(1.0, -1.2669650067820797), "CDF")


def test_gridfunction_roundtrip_is_bit_exact(tmp_path):
    F = _fn()
    p = str(tmp_path / "F.csv")
    save_gridfunction(p, F, {"c": 1.0, "d": -1.25})
    G, extra = load_gridfunction(p)
    assert np.array_equal(F.values, G.values)
    assert (G.x0, G.dx, G.role) == (F.x0, F.dx, F.role)
    assert G.left_ext == F.left_ext and G.right_ext == F.right_ext
    assert extra == {"c": 1.0, "d": -1.25}


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=2, max_size=50), st.floats(-100, 100), st.floats(1e-6, 10))
def test_gridfunction_roundtrip_property(tmp_path_factory, values, x0, dx):
    d = tmp_path_factory.mktemp("rt")
    F = GridFunction(x0, dx, values, Constant(0.5), Zero(), "Signed")
    p = str(d / "g.csv")
    save_gridfunction(p, F)
    G, extra = load_gridfunction(p)
    assert np.array_equal(F.values, G.values) and extra is None
    assert G.x0 == F.x0 and G.dx == F.dx


def test_truncated_csv_names_the_line(tmp_path):
    p = str(tmp_path / "F.csv")
    save_gridfunction(p, _fn(100))
    lines = open(p).read().splitlines()
    with open(p, "w") as fh:
        fh.write("\n".join(lines[:51]) + "\n")
    with pytest.raises(ParseError) as e:
        load_gridfunction(p)
    assert e.value.line == 52 and "truncated" in str(e.value)
    assert str(e.value).startswith(p + ":52:")


@pytest.mark.parametrize("bad, line", [("1.0,abc", 4), ("1.0", 4), ("1.0,2.0,3.0", 4)])
def test_malformed_row(tmp_path, bad, line):
    p = str(tmp_path / "F.csv")
    save_gridfunction(p, _fn(10))
    lines = open(p).read().splitlines()
    lines[line - 1] = bad
    with open(p, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as e:
        load_gridfunction(p)
    assert e.value.line == line


def test_bad_header_and_missing_files(tmp_path):
    p = str(tmp_path / "F.csv")
    save_gridfunction(p, _fn(10))
    text = open(p).read().replace("x,value", "x,y", 1)
    open(p, "w").write(text)
    with pytest.raises(ParseError):
        load_gridfunction(p)
    os.remove(p)
    with pytest.raises(IntegrityError):
        load_gridfunction(p)
    with pytest.raises(IntegrityError):
        load_gridfunction(str(tmp_path / "nothing.csv"))
    with pytest.raises(IntegrityError):
        load(str(tmp_path / "no_run"))


def test_fmt():
    assert fmt(True) == "true" and fmt(False) == "false"
    assert fmt(np.int64(3)) == "3"
    assert float(fmt(0.1)) == 0.1
    assert float(fmt(math.pi)) == math.pi
    assert fmt("a") == "a"


def test_table_roundtrip(tmp_path):
    t = Table(["gamma", "estimate", "ok", "law"],
              [[8, 0.037093025992854356, True, "gaussian:sigma=1.0"], [12, 1e-300, False, "logistic"]])
    p = str(tmp_path / "t.csv")
    with open(p, "w") as fh:
        fh.write(table_csv(t))
    back = load_table(p)
    assert back == t
    assert back.column("estimate")[0] == 0.037093025992854356
    assert back.column("ok") == [True, False]
    with open(p, "a") as fh:
        fh.write("1,2\n")
    with pytest.raises(ParseError) as e:
        load_table(p)
    assert e.value.line == 4


def test_bundle_roundtrip(tmp_path):
    F = _fn(200)
    m = RunManifest({"gamma": 10.0, "law": "gaussian:sigma=1.0"}, 2024, "0.1.0", "s", "f")
    b = ResultBundle(m, {"inv": (F, {"c": 1.0}), "plain": F,
                         "tab": Table(["a", "b"], [[1, 2.5]]), "summary": {"x": 0.1, "y": [1, 2]}})
    d = str(tmp_path / "run")
    paths = save(b, d)
    assert set(paths) == {"inv", "plain", "tab", "summary"}
    back = load(d)
    assert back.manifest.seed == 2024 and back.manifest.config == m.config
    Fi, extra = back.artifacts["inv"]
    assert np.array_equal(Fi.values, F.values) and extra == {"c": 1.0}
    assert np.array_equal(back.artifacts["plain"].values, F.values)
    assert back.artifacts["tab"] == b.artifacts["tab"]
    assert back.artifacts["summary"] == {"x": 0.1, "y": [1, 2]}
    os.remove(paths["tab"])
    with pytest.raises(IntegrityError):
        load(d)


def test_json_is_canonical():
    a = dumps_json({"b": 1, "a": np.float64(0.1), "c": np.array([1.0, 2.0])})
    b = dumps_json({"c": [1.0, 2.0], "a": 0.1, "b": 1})
    assert a == b
    assert json.loads(a)["a"] == 0.1


def test_unknown_artifact_type(tmp_path):
    with pytest.raises(TypeError):
        save(ResultBundle(RunManifest({}, 1, "v"), {"x": object()}), str(tmp_path))
