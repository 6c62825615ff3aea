import math

import numpy as np
import pytest

from fhlab.field import (
    Ball, Box, Divergent, GridField, gradient, integrate_weighted, rasterize_distance,
    read_binary, sample_field, write_binary, write_csv,
)


def test_rasterize_corner_cell(gal):
    # 8 cells per axis puts a centre at (7/8, 7/8)
    f = rasterize_distance(gal("origin2"), Box([-1, -1], [1, 1]), 8)
    c = f.centers()
    i = int(np.argmin(np.sum((c - [7 / 8, 7 / 8]) ** 2, axis=1)))
    assert f.values[i] == pytest.approx(1.2374, abs=1e-4)


def test_rasterize_sphere_origin_cell(gal):
    f = rasterize_distance(gal("sphere"), Box([-1.5] * 3, [1.5] * 3), 3)
    assert f.array()[1, 1, 1] == pytest.approx(1.0)


def test_distance_transform_close_to_exact(gal):
    E = gal("cantor")
    box = Box([-0.1, -0.5], [1.1, 0.5])
    exact = rasterize_distance(E, box, 128, method="exact")
    edt = rasterize_distance(E, box, 128, method="transform")
    assert np.max(np.abs(exact.values - edt.values)) <= math.sqrt(2) * exact.h + E.mesh


def test_gradient_affine_exact():
    f = sample_field(lambda x: x[:, 0], Box([-1, -1], [1, 1]), 16)
    g = gradient(f)
    assert np.allclose(g.values, [1.0, 0.0], atol=1e-12)
    c = sample_field(lambda x: np.full(len(x), 3.0), Box([0, 0, 0], [1, 1, 1]), 5)
    assert np.allclose(gradient(c).values, 0.0)


def test_gradient_second_order():
    errs = []
    for res in (32, 64, 128):
        f = sample_field(lambda x: np.sum(x * x, axis=1), Box([-1, -1], [1, 1]), res)
        g = gradient(f)
        errs.append(np.max(np.abs(g.values - 2 * f.centers())))
    # |x|^2 is quadratic: the stencils are exact up to rounding
    assert max(errs) < 1e-10


def test_gradient_second_order_on_smooth_field():
    errs = []
    for res in (32, 64, 128):
        f = sample_field(lambda x: np.sin(2 * x[:, 0]) * np.cos(x[:, 1]), Box([-1, -1], [1, 1]), res)
        c = f.centers()
        exact = np.stack([2 * np.cos(2 * c[:, 0]) * np.cos(c[:, 1]), -np.sin(2 * c[:, 0]) * np.sin(c[:, 1])], axis=1)
        errs.append(np.max(np.abs(gradient(f).values - exact)))
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(r > 1.8 for r in rates)


def test_point_singularity_in_disc(gal):
    I = integrate_weighted(gal("origin2"), Ball([0, 0], 1), -1.0, resolution=16)
    assert I.value == pytest.approx(2 * math.pi, rel=0.02)


def test_disc_area(gal):
    I = integrate_weighted(gal("origin2"), Ball([0, 0], 1), 0.0, resolution=16)
    assert I.value == pytest.approx(math.pi, rel=0.02)


def test_nonintegrable_weight_diverges(gal):
    with pytest.raises(Divergent):
        integrate_weighted(gal("origin3"), Ball([0, 0, 0], 1), -3.0, resolution=8)


def test_scaling_law_point(gal):
    base = integrate_weighted(gal("origin3"), Ball([0, 0, 0], 1), -2.0, resolution=8).value
    for r in (0.25, 0.5, 2.0):
        v = integrate_weighted(gal("origin3"), Ball([0, 0, 0], r), -2.0, resolution=8).value
        assert v == pytest.approx(base * r, rel=0.03)


def test_region_monotone(gal):
    E = gal("hyperplane2")
    vals = [integrate_weighted(E, Ball([0.1, 0], r), -0.5, resolution=12).value for r in (0.25, 0.5, 1.0)]
    assert vals[0] <= vals[1] <= vals[2]


def test_refinement_is_cauchy(gal):
    E = gal("origin2")
    vals = [integrate_weighted(E, Ball([0.3, 0.1], 1), 0.0, resolution=r, max_subdiv=0).value for r in (8, 16, 32, 64)]
    changes = [abs(b - a) for a, b in zip(vals, vals[1:])]
    assert changes[2] < changes[0]


def test_threads_do_not_change_the_sum(gal):
    E = gal("sphere")
    a = integrate_weighted(E, Ball([1, 0, 0], 0.5), -0.5, resolution=8, threads=1).value
    b = integrate_weighted(E, Ball([1, 0, 0], 0.5), -0.5, resolution=8, threads=4).value
    assert a == b


def test_gridfield_io_roundtrip(tmp_path):
    f = sample_field(lambda x: x[:, 0] * 2 + x[:, 1], Box([0, 0], [1, 2]), 6)
    write_binary(f, tmp_path / "f.bin")
    g = read_binary(tmp_path / "f.bin")
    assert g.shape == f.shape and np.array_equal(g.values, f.values)
    write_csv(f, tmp_path / "f.csv")
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert len(rows) == 1 + len(f.values)


def test_gridfield_rejects_nonfinite():
    with pytest.raises(ValueError):
        GridField(Box([0], [1]), (2,), 0.5, np.array([1.0, np.inf]))
