from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmctube import io
from cmctube.config import build_config, dump_config, load_config, parse_text
from cmctube.errors import ConfigError, ValidationError
from cmctube.spectral import FormFamily, find_gap_intervals
from cmctube.tube import TubeState, embed_tube

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize(
    "text,value",
    [("pi/2", math.pi / 2), ("pi/3", math.pi / 3), ("2pi", 2 * math.pi), ("2*pi/3", 2 * math.pi / 3), ("1.25", 1.25)],
)
def test_pi_forms(text, value):
    assert build_config({"curve.length": text})["curve.length"] == pytest.approx(value, rel=1e-15)


def test_shipped_configs_load():
    for name in ("flat", "sphere", "ellipsoid"):
        cfg = load_config(CONFIGS / f"{name}.cfg")
        again = build_config(parse_text(dump_config(cfg)))
        assert again.resolved() == cfg.resolved()


@settings(max_examples=25, deadline=None)
@given(
    eps=st.floats(1e-3, 0.5),
    gamma=st.floats(0.05, 3.0),
    order=st.integers(0, 3),
    grid=st.tuples(st.floats(1e-3, 0.1), st.floats(0.11, 0.5), st.integers(2, 200)),
)
def test_dump_parse_round_trip(eps, gamma, order, grid):
    cfg = build_config({
        "run.eps": repr(eps),
        "cap.gamma": repr(gamma),
        "run.order": str(order),
        "spectral.eps_grid": f"{grid[0]!r}:{grid[1]!r}:{grid[2]}",
        "domain.params": "a=1.0, b=1.2",
    })
    again = build_config(parse_text(dump_config(cfg)))
    assert again.resolved() == cfg.resolved()


def test_unknown_and_duplicate_keys():
    with pytest.raises(ConfigError, match="unknown"):
        build_config({"run.epsilon": "0.1"})
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("run.eps = 0.1\nrun.eps = 0.2\n")
    with pytest.raises(ConfigError):
        parse_text("run.eps 0.1\n")


@pytest.mark.parametrize(
    "key,value",
    [("cap.gamma", "pi"), ("run.eps", "-1"), ("run.order", "4"), ("spectral.s", "0.5"),
     ("spectral.eps_grid", "0.2:0.1:8"), ("solve.mode", "bisect"), ("solve.check_gap", "maybe"),
     ("curve.kind", "csv")],
)
def test_invalid_values_rejected(key, value):
    with pytest.raises(ConfigError):
        build_config({key: value})


def test_overrides_beat_file_and_missing_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nrun.eps = 0.1  # trailing\n\n")
    assert load_config(path)["run.eps"] == 0.1
    assert load_config(path, {"run.eps": "0.05"})["run.eps"] == 0.05
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_json_is_deterministic_and_rounded(tmp_path):
    obj = {"b": np.float64(1 / 3), "a": [np.int64(2), np.bool_(True), float("nan")], "c": np.arange(2.0)}
    text = io.dumps_json(obj)
    assert text == io.dumps_json(dict(reversed(list(obj.items()))))
    data = json.loads(text)
    assert list(data) == ["a", "b", "c"]
    assert data["b"] == float(f"{1 / 3:.12g}")
    assert data["a"] == [2, True, None]
    with pytest.raises(ValidationError):
        io.read_json(tmp_path / "missing.json")


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), rows=st.integers(1, 9), cols=st.integers(1, 5))
def test_field_csv_round_trip_is_exact(tmp_path_factory, seed, rows, cols):
    values = np.random.default_rng(seed).standard_normal((rows, cols)) * 10.0 ** np.arange(cols)
    path = tmp_path_factory.mktemp("f") / "field.csv"
    io.write_field_csv(path, values)
    back = io.read_field_csv(path)
    np.testing.assert_array_equal(back.reshape(values.shape), values)


def test_curve_csv_round_trip(tmp_path, ellipse_k):
    io.write_curve_csv(tmp_path / "k.csv", ellipse_k.nodes)
    np.testing.assert_array_equal(io.read_curve_csv(tmp_path / "k.csv"), ellipse_k.nodes)
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValidationError):
        io.read_curve_csv(tmp_path / "bad.csv")


def test_obj_face_count_and_sidecar(tmp_path, flat_ctx):
    mesh = embed_tube(TubeState.zero(flat_ctx, 0.1))
    n_y, n_t = mesh.shape
    io.write_mesh_obj(tmp_path / "open.obj", mesh, scale=0.1, wrap=False)
    io.write_mesh_obj(tmp_path / "closed.obj", mesh, scale=0.1, wrap=True)
    for name, rows in (("open.obj", n_y - 1), ("closed.obj", n_y)):
        lines = (tmp_path / name).read_text().splitlines()
        assert sum(ln.startswith("v ") for ln in lines) == n_y * n_t
        faces = [ln for ln in lines if ln.startswith("f ")]
        assert len(faces) == 2 * rows * (n_t - 1)
        idx = np.array([[int(t) for t in f.split()[1:]] for f in faces])
        assert idx.min() == 1 and idx.max() <= n_y * n_t
    io.write_mesh_sidecar(tmp_path / "side.csv", mesh)
    header, rows = io.read_csv(tmp_path / "side.csv")
    assert header[:3] == ["vertex", "i_y", "i_theta"]
    assert len(rows) == n_y * n_t
    assert max(abs(float(r[4])) for r in rows) < 1e-12
    # the contact-angle column is filled only on the two boundary columns
    assert sum(r[5] != "" for r in rows) == 2 * n_y


def test_correctors_round_trip(tmp_path, ellipse_correctors, flat_ctx):
    io.write_correctors(tmp_path / "corr", ellipse_correctors)
    back = io.read_correctors(tmp_path / "corr", ellipse_correctors.context)
    assert back.order == ellipse_correctors.order
    for a, b in zip(back.w_fields + back.phi_fields, ellipse_correctors.w_fields + ellipse_correctors.phi_fields):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(ValidationError):
        io.read_correctors(tmp_path / "corr", flat_ctx)


def test_gap_report_round_trip(tmp_path, ellipse_correctors):
    fam = FormFamily(ellipse_correctors, order=2, modes=4)
    rep = find_gap_intervals(fam, 0.1, 0.2, points=12)
    io.write_json(tmp_path / "gaps.json", {"report": rep.to_dict()})
    back = io.read_gap_report(tmp_path / "gaps.json")
    assert len(back.intervals) == len(rep.intervals)
    for a, b in zip(back.intervals, rep.intervals):
        assert a.lower == pytest.approx(b.lower, rel=1e-11)
        assert a.upper == pytest.approx(b.upper, rel=1e-11)
        assert a.index == b.index
    assert back.first_interval().upper == pytest.approx(rep.first_interval().upper, rel=1e-11)
    (tmp_path / "bad.json").write_text('{"intervals": [{"lower": 1}]}')
    with pytest.raises(ValidationError):
        io.read_gap_report(tmp_path / "bad.json")
