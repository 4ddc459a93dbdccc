import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import circle4, circle_square_map, clamp_system, fan3, segment, triangle, unit_square
from polyiso import MetricComplex, PLMap, StretchConfig, embed_polyhedron, validate_system
from polyiso import io
from polyiso.maps import evaluate_many


def same_complex(a, b):
    assert a.n_vertices == b.n_vertices
    assert a.top_simplices == b.top_simplices
    assert a.edge_lengths == b.edge_lengths
    if a.coords is None:
        assert b.coords is None
    else:
        np.testing.assert_array_equal(a.coords, b.coords)


@pytest.mark.parametrize("make", [segment, fan3, unit_square, circle4, lambda: triangle(3, 4, 5)])
def test_complex_round_trip(tmp_path, make):
    c = make()
    io.save_complex(c, tmp_path / "c.json")
    same_complex(c, io.load_complex(tmp_path / "c.json"))


@settings(max_examples=40, deadline=None)
@given(lengths=st.lists(st.floats(1e-6, 1e6, allow_nan=False), min_size=3, max_size=3))
def test_lengths_round_trip_exactly(lengths):
    a, b, c = sorted(lengths)
    c = min(c, 0.999 * (a + b))
    cx = triangle(a, b, c)
    d = json.loads(io.dumps(io.complex_to_dict(cx)))
    assert io.complex_from_dict(d).edge_lengths == cx.edge_lengths


def test_empty_complex_round_trip(tmp_path):
    c = MetricComplex.from_simplices(0, [])
    io.save_complex(c, tmp_path / "e.json")
    same_complex(c, io.load_complex(tmp_path / "e.json"))


@pytest.mark.parametrize("bad", ["NaN", "Infinity", "-Infinity"])
def test_non_finite_literals_rejected(tmp_path, bad):
    p = tmp_path / "c.json"
    p.write_text('{"vertices": 2, "simplices": [[0, 1]], "edge_lengths": [[0, 1, %s]]}' % bad)
    with pytest.raises(io.FormatError, match="non-finite"):
        io.load_complex(p)


@pytest.mark.parametrize("length", [0, -1.5, "x"])
def test_bad_lengths_rejected(length):
    with pytest.raises(io.FormatError):
        io.complex_from_dict({"vertices": 2, "simplices": [[0, 1]], "edge_lengths": [[0, 1, length]]})


def test_malformed_documents(tmp_path):
    with pytest.raises(io.FormatError):
        io.complex_from_dict({"simplices": [[0, 1]]})
    with pytest.raises(io.FormatError):
        io.complex_from_dict([1, 2])
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(io.FormatError, match="invalid JSON"):
        io.read_json(p)


def test_ambient_map_round_trip(tmp_path):
    c = fan3()
    io.save_complex(c, tmp_path / "c.json")
    rng = np.random.default_rng(0)
    base = PLMap.chart_embedding(c, 5).refined(2).images
    f = PLMap(c, 2, base + rng.normal(size=base.shape))
    io.save_map(f, tmp_path / "f.json", domain_ref=tmp_path / "c.json")
    doc = io.read_json(tmp_path / "f.json")
    assert doc["domain"] == "c.json" and doc["ambient_dim"] == 5
    g = io.load_map(tmp_path / "f.json")
    assert g.level == 2
    np.testing.assert_array_equal(g.images, f.images)
    same_complex(c, g.domain)


def test_inline_domain_and_override(tmp_path):
    c = unit_square()
    f = PLMap.chart_embedding(c, 5, 0.5)
    io.save_map(f, tmp_path / "f.json")
    g = io.load_map(tmp_path / "f.json")
    np.testing.assert_array_equal(g.images, f.images)
    assert io.load_map(tmp_path / "f.json", domain=c).domain is c


def test_codomain_map_round_trip(tmp_path):
    s = clamp_system(2)
    b = s.bondings[1]
    io.save_complex(s.stages[1], tmp_path / "p1.json")
    io.save_complex(s.stages[2], tmp_path / "p2.json")
    io.save_map(b, tmp_path / "b.json", domain_ref=tmp_path / "p2.json", codomain_ref=tmp_path / "p1.json")
    g = io.load_map(tmp_path / "b.json")
    assert g.cod_points == b.cod_points


def test_system_round_trip(tmp_path):
    s = clamp_system(3)
    io.save_system(s, tmp_path / "sys" / "s.json")
    t = io.load_system(tmp_path / "sys" / "s.json")
    assert t.truncation == 3 and t.rank == 1
    for a, b in zip(s.stages, t.stages):
        same_complex(a, b)
    for a, b in zip(s.bondings, t.bondings):
        assert a.cod_points == b.cod_points
    assert validate_system(t).ok


def test_constant_system_shares_stage_files(tmp_path):
    from polyiso import InverseSystem

    s = InverseSystem.constant(circle4(), 2)
    io.save_system(s, tmp_path / "s.json")
    doc = io.read_json(tmp_path / "s.json")
    assert doc["stages"] == ["p0.json"] * 3
    t = io.load_system(tmp_path / "s.json")
    assert t.stages[0] is t.stages[2]


def test_system_errors(tmp_path):
    s = clamp_system(1)
    io.save_system(s, tmp_path / "s.json")
    doc = io.read_json(tmp_path / "s.json")
    doc["bondings"] = []
    io.write_json(tmp_path / "bad.json", doc)
    with pytest.raises(io.FormatError, match="bondings"):
        io.load_system(tmp_path / "bad.json")
    doc["bondings"] = ["missing.json"]
    io.write_json(tmp_path / "bad.json", doc)
    with pytest.raises(io.FormatError, match="not found"):
        io.load_system(tmp_path / "bad.json")


def test_map_row_errors(tmp_path):
    c = segment()
    io.save_complex(c, tmp_path / "c.json")
    for rows in ([[0, [0, 0]]], [[0, [0, 0]], [0, [1, 0]]], [[0, [0, "a"]], [1, [1, 0]]], [[0]]):
        io.write_json(tmp_path / "f.json", {"domain": "c.json", "level": 0, "vertex_images": rows})
        with pytest.raises(io.FormatError):
            io.load_map(tmp_path / "f.json")
    io.write_json(tmp_path / "f.json", {"domain": "nope.json", "level": 0, "vertex_images": []})
    with pytest.raises(io.FormatError, match="not found"):
        io.load_map(tmp_path / "f.json")


def test_points_and_pairs(tmp_path):
    c = unit_square()
    assert io.point_from_json(2, c) == c.vertex_point(2)
    p = io.point_from_json([1, [0.25, 0.25, 0.5]], c)
    assert p.simplex == 1 and io.point_label(p) == "1:0.25|0.25|0.5"
    for bad in (7, [0, [0.5, 0.6, 0.1]], [5, [1, 0, 0]], "x", [0, [0.5, float("nan"), 0.5]]):
        with pytest.raises(io.FormatError):
            io.point_from_json(bad, c)
    io.write_json(tmp_path / "pairs.json", {"pairs": [[0, 2], [[0, [0.5, 0.5, 0]], 3]]})
    pairs = io.load_pairs(tmp_path / "pairs.json", c)
    assert len(pairs) == 2 and pairs[0] == (c.vertex_point(0), c.vertex_point(2))
    io.write_json(tmp_path / "pairs.json", [[0, 1, 2]])
    with pytest.raises(io.FormatError):
        io.load_pairs(tmp_path / "pairs.json", c)


def test_off_export_of_sawtooth_circle():
    c = circle4()
    f0 = circle_square_map(c)
    h, _ = embed_polyhedron(c, f0, StretchConfig(eta=1e-9, epsilon=0.1))
    verts, faces = io.read_off(io.to_off(h))
    np.testing.assert_array_equal(verts, h.images)
    assert len(faces) == len(h.cells) and all(len(f) == 2 for f in faces)
    # a closed polyline: every vertex lies on exactly two edges
    deg = np.bincount(np.array(faces).ravel(), minlength=len(verts))
    assert (deg == 2).all()


def test_off_of_triangles_and_limits():
    c = unit_square()
    verts, faces = io.read_off(io.to_off(PLMap.chart_embedding(c, 3)))
    assert faces == [(0, 1, 2), (0, 2, 3)]
    np.testing.assert_array_equal(verts[:, :2], c.coords)
    with pytest.raises(io.FormatError, match="json or csv"):
        io.to_off(PLMap.chart_embedding(c, 5))
    assert json.loads(io.dumps(io.map_to_dict(PLMap.chart_embedding(c, 5))))["ambient_dim"] == 5


def test_csv_rows():
    c = unit_square()
    text = io.to_csv(PLMap.chart_embedding(c, 5, 0.5))
    lines = text.splitlines()
    assert lines[0] == "u,v,target,achieved"
    assert len(lines) == 1 + len(c.edges)
    for row in lines[1:]:
        _, _, t, a = row.split(",")
        assert float(a) == pytest.approx(0.5 * float(t), rel=1e-15)


def test_empty_map_exports():
    c = MetricComplex.from_simplices(0, [])
    f = PLMap(c, 0, np.zeros((0, 3)))
    verts, faces = io.read_off(io.to_off(f))
    assert verts.shape == (0, 3) and faces == []
    assert io.to_csv(f) == "u,v,target,achieved\n"
    d = json.loads(io.dumps(io.map_to_dict(f)))
    assert d["vertex_images"] == []


def test_dumps_is_deterministic_and_round_trips_floats():
    x = [0.1, 1 / 3, 2.0**-60, 1e300]
    text = io.dumps({"b": x, "a": 1})
    assert json.loads(text)["b"] == x
    assert text == io.dumps({"b": x, "a": 1})
    with pytest.raises(ValueError):
        io.dumps({"x": float("inf")})


def test_evaluate_after_reload(tmp_path):
    c = fan3()
    f = PLMap.chart_embedding(c, 5, 0.7).refined(1)
    io.save_map(f, tmp_path / "f.json")
    g = io.load_map(tmp_path / "f.json")
    rng = np.random.default_rng(2)
    from helpers import random_points

    pts = random_points(g.domain, 10, rng)
    np.testing.assert_array_equal(evaluate_many(g, pts), evaluate_many(PLMap(g.domain, 1, f.images), pts))
