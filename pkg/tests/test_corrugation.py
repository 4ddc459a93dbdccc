import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from helpers import circle4, circle_square_map, glued_segments, segment, triangle, unit_square
from polyiso import (
    BaryPoint,
    CorrugationError,
    MapError,
    MetricComplex,
    PLMap,
    StretchConfig,
    embed_polyhedron,
    injectivity_check,
    measure_defect,
    sawtooth_1d,
    shortness_certificate,
    stretch_round,
    sup_displacement,
)
from polyiso.corrugation import sawtooth_teeth
from polyiso.maps import evaluate_many


def polyline_length(pts):
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def deviation(pts, p, d):
    """Largest distance from the line through p with unit direction d."""
    rel = pts - p
    return float(np.linalg.norm(rel - np.outer(rel @ d, d), axis=1).max())


def original_edge_lengths(f):
    """Image length of every original edge, summed over its level-L pieces."""
    t = np.linspace(0, 1, 2**f.level + 1)
    out = {}
    for top, e in enumerate(f.domain.top_simplices):
        pts = [BaryPoint(top, (1 - s, s)) for s in t]
        out[e] = polyline_length(np.asarray(evaluate_many(f, pts)))
    return out


# -- sawtooth -------------------------------------------------------------------

E1, E2 = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])


def test_sawtooth_identity_case():
    pts = sawtooth_1d(1.0, np.zeros(3), E1, E2, 0.1)
    np.testing.assert_array_equal(pts, [np.zeros(3), E1])


def test_sawtooth_length_two():
    assert sawtooth_teeth(2.0, 1.0, 0.1) == (9, pytest.approx(math.sqrt(3) / 18, rel=1e-15))
    pts = sawtooth_1d(2.0, np.zeros(3), E1, E2, 0.1)
    assert len(pts) == 19
    assert polyline_length(pts) == pytest.approx(2.0, rel=1e-12)
    assert deviation(pts, np.zeros(3), E1) == pytest.approx(math.sqrt(3) / 18, rel=1e-14)


def test_sawtooth_single_tooth():
    m, a = sawtooth_teeth(math.sqrt(2), 1.0, 0.5)
    assert (m, a) == (1, pytest.approx(0.5, rel=1e-15))
    pts = sawtooth_1d(math.sqrt(2), np.zeros(3), E1, E2, 0.5)
    np.testing.assert_allclose(pts, [[0, 0, 0], [0.5, 0.5, 0], [1, 0, 0]], atol=1e-15)
    assert polyline_length(pts) == pytest.approx(math.sqrt(2), rel=1e-15)


def test_sawtooth_errors():
    with pytest.raises(CorrugationError):
        sawtooth_1d(1.0, np.zeros(3), 2 * E1, E2, 0.1)
    with pytest.raises(ValueError):
        sawtooth_1d(2.0, np.zeros(3), E1, 2 * E2, 0.1)
    with pytest.raises(ValueError):
        sawtooth_1d(2.0, np.zeros(3), E1, E1, 0.1)
    with pytest.raises(ValueError):
        sawtooth_1d(2.0, np.zeros(3), E1, E2, 0.0)


@settings(max_examples=300, deadline=None)
@given(
    ell=st.floats(1e-3, 10.0),
    ratio=st.floats(0.0, 1.0),
    eps=st.floats(1e-3, 5.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_sawtooth_closed_form(ell, ratio, eps, seed):
    chord = ell * ratio
    assume(chord > 0)
    assume(math.sqrt(max(ell**2 - chord**2, 0)) / (2 * eps) < 5000)
    rng = np.random.default_rng(seed)
    p = rng.normal(size=4)
    d = rng.normal(size=4)
    d /= np.linalg.norm(d)
    n = rng.normal(size=4)
    n -= (n @ d) * d
    n /= np.linalg.norm(n)
    pts = sawtooth_1d(ell, p, p + chord * d, n, eps)
    assert polyline_length(pts) == pytest.approx(ell, rel=1e-12)
    assert deviation(pts, p, d) <= eps * (1 + 1e-12)
    np.testing.assert_array_equal(pts[0], p)
    np.testing.assert_allclose(pts[-1], p + chord * d, rtol=0, atol=1e-14 * (1 + np.abs(p).max()))


# -- config and measurement -----------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        StretchConfig(eta=0, epsilon=0.1)
    with pytest.raises(ValueError):
        StretchConfig(eta=0.1, epsilon=-1)
    with pytest.raises(ValueError):
        StretchConfig(eta=0.1, epsilon=0.1, rho=1.0)
    cfg = StretchConfig(eta=0.1, epsilon=0.1, seed=4)
    assert cfg.with_epsilon(0.3).epsilon == 0.3 and cfg.with_epsilon(0.3).seed == 4


def test_isometric_chart_has_zero_defect():
    c = unit_square()
    f = PLMap.chart_embedding(c, 5)
    rep = measure_defect(f, f, StretchConfig(eta=0.01, epsilon=0.1))
    assert rep.length_defect == pytest.approx(0.0, abs=1e-12)
    assert rep.displacement == 0.0
    assert rep.max_stretch == pytest.approx(1.0)
    assert rep.pairs_measured == len(c.edges) + 50


def test_scaled_square_defect_bounds():
    # edge defect is exactly half the longest edge; sampled pairs cannot exceed half the diameter
    c = unit_square()
    f = PLMap.chart_embedding(c, 5, 0.5)
    rep = measure_defect(f, f, StretchConfig(eta=0.01, epsilon=0.1))
    assert 0.5 * math.sqrt(2) - 1e-12 <= rep.length_defect <= 0.5 * math.sqrt(2) + 1e-12


# -- stretch_round --------------------------------------------------------------

def _edge_defect(f):
    cx = f.refinement.complex
    e = np.array(cx.edges)
    t = np.array([cx.edge_lengths[tuple(x)] for x in cx.edges])
    return float(np.max(t - np.linalg.norm(f.images[e[:, 0]] - f.images[e[:, 1]], axis=1)))


def test_stretch_round_fixed_point():
    f = PLMap.chart_embedding(unit_square(), 5)
    g, info = stretch_round(f, StretchConfig(eta=0.01, epsilon=0.2))
    assert g is f and info.blend == 0.0


def test_stretch_round_half_segment():
    c = segment()
    f = PLMap.chart_embedding(c, 3, 0.5)
    cfg = StretchConfig(eta=0.01, epsilon=2.0)
    g, info = stretch_round(f, cfg)
    assert _edge_defect(g) < 0.5 * 1.0
    assert shortness_certificate(g).max_stretch <= 1 + 1e-9
    assert sup_displacement(g, f) <= info.eps_round


def test_stretch_round_scaled_square():
    c = unit_square()
    f = PLMap.chart_embedding(c, 5, 0.8)
    cfg = StretchConfig(eta=0.01, epsilon=0.4)
    before = measure_defect(f, f, cfg).length_defect
    g, info = stretch_round(f, cfg)
    after = measure_defect(g, f, cfg).length_defect
    assert after < before
    assert info.short
    assert sup_displacement(g, f) < info.eps_round


def test_stretch_round_rejects_long_map():
    c = segment()
    with pytest.raises(CorrugationError):
        stretch_round(PLMap(c, 0, np.array([[0.0, 0, 0], [1.5, 0, 0]])), StretchConfig(eta=0.1, epsilon=0.1))


# -- embed_polyhedron -----------------------------------------------------------

def test_circle_embedding():
    c = circle4()
    f0 = circle_square_map(c)
    cfg = StretchConfig(eta=1e-9, epsilon=0.1)
    res = embed_polyhedron(c, f0, cfg)
    assert res.success, res.message
    for e, length in original_edge_lengths(res.map).items():
        assert length == pytest.approx(1.0, rel=1e-9), e
    assert sup_displacement(res.map, f0) < 0.1
    assert injectivity_check(res.map).ok
    assert res.report.min_separation > 0


def test_single_simplex_unchanged():
    c = triangle(3, 4, 5)
    f0 = PLMap.chart_embedding(c, 5)
    h, rep = embed_polyhedron(c, f0, StretchConfig(eta=0.01, epsilon=0.1))
    assert h is f0
    assert rep.length_defect == pytest.approx(0.0, abs=1e-12)


def test_isometric_segment_unchanged():
    c = glued_segments()
    f0 = PLMap.chart_embedding(c, 3)
    res = embed_polyhedron(c, f0, StretchConfig(eta=1e-9, epsilon=0.1))
    assert res.success
    assert sup_displacement(res.map, f0) == 0.0


def test_tiny_epsilon_fails_with_flag():
    c = circle4()
    f0 = circle_square_map(c)
    res = embed_polyhedron(c, f0, StretchConfig(eta=1e-9, epsilon=1e-9))
    assert not res.success
    assert "too small" in res.message
    assert sup_displacement(res.map, f0) < 1e-9


def test_embed_preconditions():
    c = unit_square()
    with pytest.raises(CorrugationError):
        embed_polyhedron(c, PLMap.chart_embedding(c, 4, 0.5), StretchConfig(eta=0.1, epsilon=0.1))
    with pytest.raises(CorrugationError):
        embed_polyhedron(c, PLMap.chart_embedding(c, 5, 1.1), StretchConfig(eta=0.1, epsilon=0.1))
    with pytest.raises(MapError):
        embed_polyhedron(unit_square(), PLMap.chart_embedding(c, 5, 0.5), StretchConfig(eta=0.1, epsilon=0.1))


def test_square_embedding_history_monotone():
    c = unit_square()
    f0 = PLMap.chart_embedding(c, 5, 0.5)
    cfg = StretchConfig(eta=0.05, epsilon=0.2)
    res = embed_polyhedron(c, f0, cfg)
    assert res.success, res.message
    assert res.report.length_defect <= 0.05
    assert res.report.max_stretch <= 1 + 1e-9
    assert sup_displacement(res.map, f0) < 0.2
    accepted = [h["report"]["length_defect"] for h in res.history if h.get("accepted")]
    assert accepted == sorted(accepted, reverse=True)


def random_short_polygon(rng, n):
    """Closed n-gon with unit intrinsic edges and a strictly short generic image in E^3."""
    e = {(i, (i + 1) % n) if i + 1 < n else (0, n - 1): 1.0 for i in range(n)}
    c = MetricComplex.from_simplices(n, list(e), e)
    Y = rng.normal(size=(n, 3))
    longest = max(np.linalg.norm(Y[u] - Y[v]) for u, v in e)
    return c, PLMap(c, 0, Y * rng.uniform(0.3, 0.95) / longest)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 7), eps=st.floats(0.02, 0.5))
def test_one_dimensional_exactness(seed, n, eps):
    rng = np.random.default_rng(seed)
    c, f0 = random_short_polygon(rng, n)
    res = embed_polyhedron(c, f0, StretchConfig(eta=1e-9, epsilon=eps, seed=seed % 1000))
    # displacement budget holds even on failure
    assert sup_displacement(res.map, f0) < eps
    if res.success:
        for length in original_edge_lengths(res.map).values():
            assert length == pytest.approx(1.0, rel=1e-9)
        assert injectivity_check(res.map).ok
