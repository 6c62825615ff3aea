import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from fhlab.field import Divergent
from fhlab.hardy import (
    DegenerateExponent, HardyParams, ResolutionTooCoarse, custom_function, estimate_constant,
    evaluate_functional, exponent_algebra, family_bump, family_radial_power, family_sphere_fj,
    growth_slope, holder_step_check, interpolation_bound, sweep_family, weighted_integral, write_trace,
)

from conftest import make

P322 = HardyParams(3, 2, 2, 0)


# --- exponents -------------------------------------------------------------


def test_exponents_n4_p2_q3():
    ex = exponent_algebra(HardyParams(4, 2, 3, 0))
    assert ex.p_star == 4
    assert ex.alpha == pytest.approx(2) and ex.alpha_prime == pytest.approx(2)
    assert 1 / (3 * ex.alpha) + 2 / (3 * ex.alpha_prime) == pytest.approx(0.5, abs=1e-15)


def test_exponents_n4_p2_q4():
    ex = exponent_algebra(HardyParams(4, 2, 4, 0))
    assert ex.q_hat == pytest.approx(4 / 3)
    assert ex.beta_hat == pytest.approx(0, abs=1e-12)


def test_extra_bound_at_q_equal_p():
    assert exponent_algebra(HardyParams(3, 2, 2, 0)).extra_bound == pytest.approx(1.0)


def test_degenerate_alpha_at_sobolev_exponent():
    ex = exponent_algebra(HardyParams(4, 2, 4, 0))
    assert any("alpha undefined" in f for f in ex.flags)
    with pytest.raises(DegenerateExponent):
        exponent_algebra(HardyParams(4, 2, 4, 0), strict=True)


def test_violations_flagged_not_raised():
    ex = exponent_algebra(HardyParams(3, 2, 1.5, 0))
    assert "need 1 <= p <= q" in ex.flags


@settings(max_examples=200)
@given(st.integers(2, 8), st.floats(1.0, 7.9), st.floats(0.01, 0.99))
def test_interpolation_identity(n, p, t):
    assume(p < n - 0.05)
    ps = n * p / (n - p)
    q = p + t * (ps - p)
    assume(p * (1 + 1e-9) < q < ps * (1 - 1e-9))
    ex = exponent_algebra(HardyParams(n, p, q, 0))
    assert ex.alpha > 1
    assert abs(ex.identity_residual) <= 1e-12
    assert 1 <= ex.q_hat <= n / (n - 1) + 1e-12 or p > 1


# --- functional ------------------------------------------------------------


def test_tent_at_point_ratio_one(gal):
    sv = evaluate_functional(family_bump([0, 0, 0], 1.0, profile="tent"), gal("origin3"), P322)
    assert sv.lhs_integral == pytest.approx(4 * math.pi / 3, rel=0.03)
    assert sv.rhs_integral == pytest.approx(4 * math.pi / 3, rel=0.03)
    assert sv.ratio == pytest.approx(1.0, rel=0.03)


def test_tent_grid_path_agrees(gal):
    sv = evaluate_functional(family_bump([0, 0, 0], 1.0, profile="tent"), gal("origin3"), P322,
                             method="grid", resolution=16)
    assert sv.ratio == pytest.approx(1.0, rel=0.03)


def test_zero_function_flagged(gal):
    f = custom_function(lambda x: np.zeros(len(x)), lambda x: np.zeros(len(x)), [0, 0, 0], 1.0)
    sv = evaluate_functional(f, gal("origin3"), P322, resolution=8)
    assert sv.lhs_integral == 0 and sv.rhs_integral == 0
    assert math.isnan(sv.ratio) and sv.flags


def test_far_bump_scale_invariant(gal):
    E = gal("hyperplane3")
    f = family_bump([0, 0, 1.5], 0.25)
    a = evaluate_functional(f, E, P322, resolution=16)
    b = evaluate_functional(f.scaled(2.0), E, P322, resolution=16)
    assert np.isfinite(a.ratio) and a.ratio > 0
    assert b.ratio == pytest.approx(a.ratio, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100), st.floats(0.2, 1.5), st.sampled_from(["tent", "quintic"]))
def test_homogeneity(c, r, profile):
    from conftest import _load

    E = _load("origin3")
    f = family_bump([0, 0, 0], r, profile=profile)
    a = evaluate_functional(f, E, P322)
    b = evaluate_functional(f.scaled(c), E, P322)
    assert b.ratio == pytest.approx(a.ratio, rel=1e-10)


def test_lhs_divergence_reported(gal):
    # weight d^-2 near a line in R^3 is not integrable
    with pytest.raises(Divergent, match="lhs"):
        evaluate_functional(family_bump([0, 0, 0], 0.5), gal("line3"), P322)


# --- families --------------------------------------------------------------


def test_sphere_fj_j2():
    f = family_sphere_fj(2)
    x = np.array([[0, 0, 0], [0.49, 0, 0], [0.6, 0, 0], [0.76, 0, 0]], dtype=float)
    assert np.allclose(f.value(x), [1, 1, 1 - 0.1 * 4, 0])
    assert np.allclose(f.grad_norm(np.array([[0.6, 0, 0]])), 4)
    assert f.support == pytest.approx(0.75)


def test_sphere_fj_needs_resolution():
    with pytest.raises(ResolutionTooCoarse):
        family_sphere_fj(6, resolution=64)
    family_sphere_fj(6, resolution=16 * 2**6)


def test_sphere_fj_sides(gal):
    E = gal("sphere")
    prm = HardyParams(3, 2, 2, 2)
    vals = [evaluate_functional(family_sphere_fj(j, prm), E, prm) for j in range(2, 9)]
    lhs = [v.lhs_integral for v in vals]
    rhs = [v.rhs_integral for v in vals]
    assert all(b >= a for a, b in zip(lhs, lhs[1:]))
    for j in range(3, 8):
        assert 0.3 <= rhs[j - 1] / rhs[j - 2] <= 0.8


def test_bump_values_and_gradient_cap():
    f = family_bump([0, 0, 0], 1.0)
    assert f.value(np.array([[0.0, 0, 0]]))[0] == 1.0
    assert f.value(np.array([[2.1, 0, 0]]))[0] == 0.0
    r = 0.3
    g = family_bump([0, 0], r)
    t = np.linspace(0, 3 * r, 2001)
    pts = np.stack([t, 0 * t], axis=1)
    assert np.max(g.grad_norm(pts)) <= 2 / r


def test_bump_gradient_integral_bound(gal):
    r = 0.5
    f = family_bump([0, 0, 0], r)
    for p in (1.5, 2.0, 3.0):
        # weight exponent 0: the plain integral of |grad f|^p
        val, _, _ = weighted_integral(f, gal("origin3"), "grad", p, 0.0)
        assert 0 < val <= (2 / r) ** p * 4 / 3 * math.pi * (2 * r) ** 3


def test_bump_lhs_lower_bound(gal):
    for r in (0.125, 0.25, 0.5):
        sv = evaluate_functional(family_bump([0, 0, 0], r), gal("origin3"), P322)
        assert sv.lhs_integral >= 4 * math.pi * r * (1 - 1e-9)


def test_radial_power_reduced_vs_grid(gal):
    f = family_radial_power([0, 0, 0], 0.25)
    a = evaluate_functional(f, gal("origin3"), P322, method="reduced")
    b = evaluate_functional(f, gal("origin3"), P322, method="grid", resolution=16)
    assert b.ratio == pytest.approx(a.ratio, rel=0.05)


# --- optimisation ----------------------------------------------------------


def test_point_best_constant_lower_bound(gal):
    best, trace = estimate_constant(gal("origin3"), P322, budget=24)
    assert best.ratio**2 >= 3.2
    assert best.ratio**2 <= 4 * 1.03
    assert all(np.isfinite(t.kappa) for t in trace)


@pytest.mark.parametrize("strategy, budgets", [("FamilySweep", (4, 8, 16)), ("GridAscent", (2, 6, 12))])
def test_budget_monotone(gal, strategy, budgets):
    E = make("Points", {"points": [[0.0, 0.0]]})
    prm = HardyParams(2, 1.5, 2.0, 0.0)
    vals = []
    for b in budgets:
        kw = {"resolution": 8} if strategy == "GridAscent" else {}
        best, _ = estimate_constant(E, prm, strategy=strategy, budget=b, **kw)
        vals.append(best.ratio)
    assert all(y >= x * (1 - 1e-12) for x, y in zip(vals, vals[1:]))


def test_sphere_fj_growth(gal):
    prm = HardyParams(3, 2, 2, 2)
    tr = sweep_family(gal("sphere"), prm, "sphere-fj", range(3, 9))
    steps = [b / a for a, b in zip(tr.kappa, tr.kappa[1:])]
    assert all(s > 1 for s in steps)
    assert steps[-1] == pytest.approx(math.sqrt(2), rel=0.05)


def test_trace_csv(tmp_path, gal):
    _, trace = estimate_constant(gal("origin3"), P322, budget=4, trace_path=tmp_path / "t.csv")
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0].split(",")[:4] == ["iteration", "kappa", "lhs", "rhs"]
    assert len(rows) == 1 + len(trace)
    write_trace(trace, tmp_path / "u.csv")


def test_growth_slope():
    x = [2.0**k for k in range(5)]
    assert growth_slope(x, [v**0.5 for v in x]) == pytest.approx(0.5)


# --- interpolation and Hoelder --------------------------------------------


def test_interpolation_bound_value():
    assert interpolation_bound(2, 1, HardyParams(4, 2, 3, 0)) == pytest.approx(2 ** (1 / 3))
    assert interpolation_bound(1, 1, HardyParams(4, 2, 3, 0)) == pytest.approx(1.0)


@settings(max_examples=50)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10), st.floats(-1, 1))
def test_interpolation_bound_monotone(k1, dk, ks, beta):
    prm = HardyParams(4, 2, 3, beta)
    assert interpolation_bound(k1 + dk, ks, prm) >= interpolation_bound(k1, ks, prm)


def test_interpolation_bound_needs_interior_q():
    with pytest.raises(DegenerateExponent):
        interpolation_bound(1, 1, HardyParams(4, 2, 2, 0))


P423 = HardyParams(4, 2, 3, 0)


@pytest.mark.parametrize(
    "f",
    [family_bump([0] * 4, 0.5), family_bump([0] * 4, 1.0, profile="tent"), family_radial_power([0] * 4, 0.3),
     family_bump([0.3, 0, 0, 0], 0.2)],
    ids=["bump", "tent", "power", "offcentre"],
)
def test_holder_step_nonpositive(f):
    E = make("Points", {"points": [[0.0] * 4]})
    hc = holder_step_check(f, E, P423)
    assert hc.relative <= 0.02


def test_holder_zero_function():
    E = make("Points", {"points": [[0.0] * 4]})
    f = custom_function(lambda x: np.zeros(len(x)), lambda x: np.zeros(len(x)), [0] * 4, 1.0)
    assert holder_step_check(f, E, P423, method="grid", resolution=4, max_subdiv=1).residual == 0


def test_holder_far_bump():
    E = make("Points", {"points": [[0.0] * 4]})
    hc = holder_step_check(family_bump([2, 0, 0, 0], 0.25), E, P423)
    assert hc.relative <= 0.02
