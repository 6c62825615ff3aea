import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fhlab.field import Box
from fhlab.whitney import DILATION, WhitneyCube, probe_coverage, whitney_decompose, whitney_validate, write_csv

from conftest import make

SQ = Box([-1, -1], [1, 1])


def _ratios(dec, E):
    out = []
    for q in dec:
        # exact distance from a square to the origin / the line x2 = 0
        c = np.asarray(q.center)
        gap = np.maximum(np.abs(c) - q.side / 2, 0)
        d = float(np.linalg.norm(gap)) if E.spec.kind == "Points" else float(gap[1])
        out.append(d / q.diameter)
    return np.array(out)


def test_point_annuli(gal):
    E = gal("origin2")
    dec = whitney_decompose(E, SQ, 8)
    r = _ratios(dec, E)
    assert np.all((r >= 1 - 1e-12) & (r <= 4 + 1e-12))
    counts = [dec.counts[g] for g in sorted(dec.counts)]
    assert max(counts) == min(counts)
    assert whitney_validate(dec, E) == []


def test_hyperplane_counts_double(gal):
    E = gal("hyperplane2")
    dec = whitney_decompose(E, SQ, 8)
    r = _ratios(dec, E)
    assert np.all((r >= 1 - 1e-12) & (r <= 4 + 1e-12))
    gens = sorted(dec.counts)
    for a, b in zip(gens, gens[1:]):
        assert dec.counts[b] == 2 * dec.counts[a]


def test_far_set_gives_one_generation():
    E = make("Points", {"points": [[20, 0]]})
    dec = whitney_decompose(E, SQ, 8)
    assert len({q.generation for q in dec}) == 1
    assert whitney_validate(dec, E) == []
    assert probe_coverage(dec, E)["ok"]


@pytest.mark.parametrize("name", ["origin3", "sphere", "line3", "tiled_e0"])
def test_valid_on_gallery_sets(gal, name):
    E = gal(name)
    dec = whitney_decompose(E, Box([-1.5] * 3, [1.5] * 3), 5)
    assert whitney_validate(dec, E) == []
    assert probe_coverage(dec, E, probes=500)["ok"]


def test_hand_built_far_cube():
    E = make("Points", {"points": [[0, 0]]})
    q = WhitneyCube((10.0, 0.0), 1.0, 0)
    kinds = [v["kind"] for v in whitney_validate([q], E)]
    assert kinds == ["too_far"]


def test_duplicate_cubes_overlap():
    E = make("Points", {"points": [[0, 0]]})
    q = WhitneyCube((2.5, 0.5), 1.0, 0)
    kinds = [v["kind"] for v in whitney_validate([q, q], E)]
    assert kinds == ["overlap"]


def test_face_neighbours_do_not_overlap():
    E = make("Points", {"points": [[0, 0]]})
    cubes = [WhitneyCube((2.5, 0.5), 1.0, 0), WhitneyCube((3.5, 0.5), 1.0, 0), WhitneyCube((2.25, 1.25), 0.5, 1)]
    assert [v for v in whitney_validate(cubes, E) if v["kind"] == "overlap"] == []


def test_dilation_constant():
    assert DILATION == 10.0


def test_csv(tmp_path, gal):
    dec = whitney_decompose(gal("origin2"), SQ, 4)
    write_csv(dec, tmp_path / "w.csv")
    assert len((tmp_path / "w.csv").read_text().splitlines()) == 1 + len(dec)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(3, 7))
def test_random_point_sets_valid(a, b, depth):
    E = make("Points", {"points": [[a, b]]})
    dec = whitney_decompose(E, SQ, depth)
    assert whitney_validate(dec, E) == []
    assert all(math.isclose(q.side, dec.base_side * 2.0**-q.generation) for q in dec)
