import math

import pytest

from fhlab.conditions import (
    ConditionReport, a1_check, aikawa_check, aikawa_threshold, equiv_check, equiv_ratio, ps_check,
    shell_volume, trend_slope,
)
from fhlab.field import Ball

from conftest import assouad, make


def test_point_aikawa_s1_flat_at_two_pi(gal):
    rep = aikawa_check(gal("origin2"), 1.0)
    assert rep.verdict == "Pass"
    for _, c in rep.constant_profile:
        assert c == pytest.approx(2 * math.pi, rel=0.02)


def test_point_aikawa_s_equals_n_is_ball_volume(gal):
    rep = aikawa_check(gal("origin2"), 2.0)
    assert rep.verdict == "Pass"
    assert rep.max_constant == pytest.approx(math.pi, rel=0.02)


def test_hyperplane_aikawa_small_s_fails(gal):
    rep = aikawa_check(gal("hyperplane3"), 0.5)
    assert rep.verdict == "Fail"
    assert rep.divergent or rep.trend_slope > rep.slope_tol


def test_aikawa_rejects_nonpositive_s(gal):
    with pytest.raises(ValueError):
        aikawa_check(gal("origin2"), 0.0)


@pytest.mark.parametrize("name, s", [("segment", 1.2), ("segment", 0.8), ("sphere", 2.1), ("cantor", 0.8), ("cantor", 0.5)])
def test_aikawa_verdict_independent_of_radius_cap(gal, name, s):
    E = gal(name)
    a = aikawa_check(E, s, radius_cap=0.5 * E.diameter)
    b = aikawa_check(E, s, radius_cap=4 * E.diameter)
    assert a.verdict == b.verdict


def test_aikawa_threshold_on_hyperplane(gal):
    s, calls = aikawa_threshold(gal("hyperplane2"))
    assert abs(s - assouad("hyperplane2")[0].value) <= 0.2
    assert len(calls) <= 6


@pytest.mark.parametrize("name", ["hyperplane2", "hyperplane3"])
def test_hyperplane_ps1_passes_with_slab_constant(gal, name):
    rep = ps_check(gal(name), 1.0)
    assert rep.verdict == "Pass"
    assert rep.max_constant <= 2 + 1e-9


def test_null_set_has_p0(gal):
    assert ps_check(gal("origin2"), 0.0).verdict == "Pass"
    assert ps_check(gal("cantor"), 0.0).verdict == "Pass"


def test_hyperplane_ps_above_codimension_fails(gal):
    rep = ps_check(gal("hyperplane2"), 1.5)
    assert rep.verdict == "Fail"
    assert rep.trend_slope == pytest.approx(0.5, abs=0.1)


def test_shell_volume_slab():
    E = make("Subspace", {"m": 1, "n": 2})
    # strip 0.1 <= |y| < 0.3 inside the unit disc, both sides
    V = shell_volume(E, Ball([0, 0], 1), 0.1, 0.3, 1e-3)
    exact = 2 * sum(
        (math.asin(b) + b * math.sqrt(1 - b * b)) - (math.asin(a) + a * math.sqrt(1 - a * a)) for a, b in [(0.1, 0.3)]
    )
    assert V == pytest.approx(exact, rel=0.01)


def test_equiv_far_ball(gal):
    r = equiv_ratio(gal("origin2"), Ball([2, 0], 0.5), 1.0)
    assert 0.25 <= r <= 4


def test_equiv_centered_ball_is_pi(gal):
    assert equiv_ratio(gal("origin2"), Ball([0, 0], 1), 1.0) == pytest.approx(math.pi, rel=0.02)


@pytest.mark.parametrize("name, center, radius", [("origin2", [30, 0], 1.0), ("sphere", [0, 0, 25], 1.0), ("hyperplane2", [0, 12], 0.5)])
def test_equiv_far_balls_nearly_exact(gal, name, center, radius):
    r = equiv_ratio(gal(name), Ball(center, radius), 1.5 if gal(name).n == 2 else 2.5)
    assert 0.5 <= r <= 2


def test_equiv_gate(gal):
    rep = equiv_check(gal("hyperplane3"), 0.5, dim_upper=assouad("hyperplane3")[0].value)
    assert rep.verdict == "Inconclusive"


def test_equiv_point_passes(gal):
    rep = equiv_check(gal("origin2"), 1.0)
    assert rep.verdict == "Pass"


def test_a1_trivial_weight(gal):
    rep = a1_check(gal("origin2"), 2.0)
    assert rep.verdict == "Pass"
    assert rep.max_constant == 1.0


def test_a1_point_s1(gal):
    rep = a1_check(gal("origin2"), 1.0)
    assert rep.verdict == "Pass"
    assert rep.max_constant == pytest.approx(2.0, rel=0.03)


def test_a1_hyperplane(gal):
    assert a1_check(gal("hyperplane3"), 2.5).verdict == "Pass"
    assert a1_check(gal("hyperplane3"), 1.5).verdict == "Fail"


def test_trend_slope_recovers_power():
    scales = [2.0**-k for k in range(6)]
    assert trend_slope(scales, [s**-0.5 for s in scales]) == pytest.approx(0.5)
    assert trend_slope(scales, [3.0] * 6) == pytest.approx(0.0)


def test_report_csv(tmp_path, gal):
    rep = aikawa_check(gal("origin2"), 1.0)
    rep.write_csv(tmp_path / "c.csv")
    assert len((tmp_path / "c.csv").read_text().splitlines()) == 1 + len(rep.constant_profile)
    d = rep.to_dict()
    assert d["condition"] == "Aikawa" and isinstance(rep, ConditionReport)
