import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fhlab.setmodel import DimensionMismatch, InvalidSpec, SetSpec, build_set, diameter, distance, sample_points

from conftest import make


def test_sphere_handle_is_analytic_with_diameter_two():
    E = make("Sphere", {"center": [0, 0, 0], "radius": 1})
    assert E.oracle == "Analytic"
    assert E.diameter == pytest.approx(2.0)
    assert E.bounded


def test_subspace_is_unbounded():
    E = make("Subspace", {"m": 1, "n": 3})
    assert E.oracle == "Analytic"
    assert math.isinf(diameter(E))
    assert not E.bounded


def test_cantor_cloud_mesh_and_size(gal):
    E = gal("cantor")
    assert E.oracle == "SampledCloud"
    assert E.n == 2 and E.samples.shape == (2**14, 2)
    assert E.mesh <= 3.0**-14 * (1 + 1e-9)
    # diameter is a sample lower bound within the mesh of 1
    assert 1 - E.mesh - 1e-12 <= E.diameter <= 1


@pytest.mark.parametrize(
    "spec, point, expected",
    [
        (("Points", {"points": [[0, 0]]}), [3, 4], 5.0),
        (("Subspace", {"m": 1, "n": 3}), [1, 2, 2], math.sqrt(8)),
        (("Sphere", {"center": [0, 0, 0], "radius": 1}), [0, 0, 0], 1.0),
    ],
)
def test_distance_examples(spec, point, expected):
    E = make(*spec)
    assert distance(E, point) == pytest.approx(expected, rel=1e-14)


def test_distance_rejects_wrong_dimension():
    E = make("Points", {"points": [[0, 0]]})
    with pytest.raises(DimensionMismatch):
        distance(E, [1, 2, 3])


@pytest.mark.parametrize(
    "spec",
    [
        SetSpec("IFS", {"maps": [[1.2, 0.0]]}),
        SetSpec("Points", {"points": []}),
        SetSpec("Subspace", {"m": 3, "n": 3}),
        SetSpec("Union", {}, (SetSpec("Points", {"points": [[0, 0]]}), SetSpec("Points", {"points": [[0, 0, 0]]}))),
        SetSpec("Nope"),
    ],
)
def test_invalid_specs(spec):
    with pytest.raises(InvalidSpec):
        build_set(spec)


def test_sample_points_on_sphere():
    E = make("Sphere", {"center": [0, 0, 0], "radius": 1})
    x = sample_points(E, 1, seed=3)
    assert x.shape == (1, 3)
    assert np.linalg.norm(x[0]) == pytest.approx(1.0)


def test_sample_points_reciprocal_sequence_members(gal):
    x = sample_points(gal("e0"), 5, seed=0)
    assert len({tuple(p) for p in x}) == 5
    for t, y in x:
        assert y == 0
        assert t == 0 or abs(1 / t - round(1 / t)) < 1e-9


def test_sample_points_deterministic(gal):
    a = sample_points(gal("cantor"), 100, seed=11)
    b = sample_points(gal("cantor"), 100, seed=11)
    assert np.array_equal(a, b)
    assert np.all(gal("cantor").distance(a) <= gal("cantor").mesh + 1e-12)


def test_spec_json_roundtrip(tmp_path, gal):
    from fhlab import gallery

    sp = gallery.spec("tiled_e0")
    path = tmp_path / "s.json"
    sp.save(path)
    assert SetSpec.load(path) == sp


pts3 = st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=3)


@settings(max_examples=60, deadline=None)
@given(pts3, pts3, st.sampled_from(["line3", "sphere", "tiled_e0", "origin3", "hyperplane3"]))
def test_distance_is_1_lipschitz(x, y, name):
    from conftest import _load

    E = _load(name)
    dx, dy = E.distance(np.array(x)), E.distance(np.array(y))
    assert abs(dx - dy) <= np.linalg.norm(np.subtract(x, y)) + 1e-12


@settings(max_examples=40, deadline=None)
@given(pts3, st.integers(-3, 3))
def test_tile_distance_is_periodic(x, k):
    from conftest import _load

    E = _load("tiled_e0")
    shifted = np.array(x) + k * np.array([1.0, 0, 0])
    assert E.distance(shifted) == pytest.approx(E.distance(np.array(x)), abs=1e-12)


def test_distance_zero_on_set(gal):
    for name in ("sphere", "line3", "e0", "segment"):
        E = gal(name)
        assert np.all(E.distance(sample_points(E, 10, seed=1)) <= E.mesh + 1e-12)
