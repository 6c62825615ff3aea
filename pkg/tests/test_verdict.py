import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from fhlab import gallery
from fhlab.hardy import FamilyTrace, HardyParams
from fhlab.verdict import DimSet, DimValue, cross_check, dims_from_estimates, evaluate_rules, predict

CANTOR = math.log(2) / math.log(3)


def _dims(up, lo=None, mk=None, dim_h=None, tol=0.0, **flags):
    f = lambda v: None if v is None else DimValue(v, tol)
    return DimSet(f(up), f(lo), f(mk), None if dim_h is None else DimValue(dim_h, 0.0, "metadata"), **flags)


def _meta_dims(name):
    from conftest import _load

    return dims_from_estimates(E=_load(name), meta=gallery.metadata(name))


def test_cantor_thin_complement_holds():
    v = predict(HardyParams(3, 2, 2, 0), _dims(CANTOR, CANTOR, CANTOR, tol=0.07, porous=True, compact=True, unbounded=False))
    assert (v.prediction, v.rule) == ("Holds", "R1")
    assert v.quote


def test_sphere_beta0_global_failure_and_no_thick_rule():
    v = predict(HardyParams(3, 2, 2, 0), _meta_dims("sphere"))
    # a bounded E has a bounded complement of G, so the thick-complement rule is out
    assert (v.prediction, v.rule, v.scope) == ("Fails", "R7", "global")
    assert not any(f["rule"] == "R3" for f in v.fired)


def test_thick_rule_fires_when_complement_unbounded():
    d = _dims(2, 2, None, porous=True, compact=False, unbounded=True)
    fired, _ = evaluate_rules(HardyParams(3, 2, 2, 0), d)
    assert "R3" in [f.rule for f in fired]


def test_tiled_e0_dichotomy_failure():
    from conftest import assouad

    up, lo = assouad("tiled_e0")
    ds = dims_from_estimates(up, lo, E=gallery.load("tiled_e0"), meta={"dim_H": 0.0, "porous": True})
    v = predict(HardyParams(3, 2.5, 2.5, 0), ds)
    assert (v.prediction, v.rule) == ("Fails", "R5")


def test_dichotomy_excluded_at_equality():
    # q(n - p + beta)/p = n: 2 * (3 - 2 + 2) / 2 = 3
    v = predict(HardyParams(3, 2, 2, 2), _meta_dims("sphere"))
    assert v.prediction == "Unknown"
    assert any("R5: excluded" in c for c in v.caveats)


def test_within_margin_is_unknown():
    v = predict(HardyParams(3, 2, 2, 0), _dims(0.95, 0.95, tol=0.15, porous=True, unbounded=True))
    assert v.prediction == "Unknown"
    assert v.caveats


def test_r7_flips_once_on_line():
    ds = _meta_dims("line3")
    preds = [predict(HardyParams(3, 2, q, 0), ds) for q in (2.0, 2.25, 2.5, 3.0, 4.0, 5.0, 5.9)]
    r7 = [next(f["prediction"] for f in v.fired if f["rule"] == "R7") for v in preds]
    flips = sum(a != b for a, b in zip(r7, r7[1:]))
    assert r7[0] == "Fails" and flips == 1


def test_r7_flips_once_sweeping_p():
    # p = q, threshold (n - p) crosses dim = 1 at p = 2
    ds = _meta_dims("line3")
    ps = [1.2, 1.5, 1.8, 1.95, 2.05, 2.3, 2.6, 2.9]
    r7 = []
    for p in ps:
        v = predict(HardyParams(3, p, p, 0), ds)
        r7.append(next(f["prediction"] for f in v.fired if f["rule"] == "R7"))
    assert r7[0] == "HoldsGlobal" and r7[-1] == "Fails"
    assert sum(a != b for a, b in zip(r7, r7[1:])) == 1


@pytest.mark.parametrize("beta", [-2, -1, 0, 1, 2])
def test_regular_set_holds_for_every_beta(beta):
    v = predict(HardyParams(3, 2, 2.5, beta), _meta_dims("line3"))
    assert v.prediction.startswith("Holds")


@pytest.mark.parametrize("name", gallery.names())
def test_rules_never_disagree_on_gallery_metadata(name):
    ds = _meta_dims(name)
    from conftest import _load

    n = _load(name).n
    for prm in gallery.VERDICT_GRID.get(n, []):
        assert not predict(HardyParams(*prm), ds).conflict


@settings(max_examples=300, deadline=None)
@given(
    st.integers(2, 4), st.floats(1.0, 3.9), st.floats(0, 1), st.floats(-2, 2),
    st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.booleans(),
)
def test_rules_sound_on_consistent_dimensions(n, p, t, beta, a, b, c, bounded):
    if p >= n:
        return
    q = p + t * (n * p / (n - p) - p)
    # consistent ordering: dim_H <= lower Minkowski, lower Assouad <= upper Assouad
    up = a * (n - 1e-3)
    lo = b * up
    mk = lo + c * (up - lo)
    h = min(mk, lo + c * (mk - lo))
    ds = DimSet(DimValue(up), DimValue(lo), DimValue(mk) if bounded else None, DimValue(h, 0.0, "metadata"),
                porous=up < n, compact=bounded, unbounded=not bounded)
    v = predict(HardyParams(n, p, q, beta), ds)
    assert not v.conflict, v.fired


def test_verdict_json_roundtrip():
    v = predict(HardyParams(3, 2, 2, 0), _meta_dims("sphere"))
    d = json.loads(v.to_json())
    assert d["schema_version"] == 1 and d["prediction"] == "Fails"


def test_cross_check_sphere_growth_consistent():
    v = predict(HardyParams(3, 2, 2, 2), _meta_dims("sphere"))
    tr = FamilyTrace("sphere-fj", [2.0**j for j in range(3, 8)], [2.0 ** (j / 2) for j in range(3, 8)])
    assert cross_check(v, [tr]).status == "Consistent"


def test_cross_check_point_flat_consistent():
    v = predict(HardyParams(3, 2, 2, 0), _meta_dims("origin3"))
    assert v.rule == "R1"
    tr = FamilyTrace("bump", [2.0**k for k in range(5)], [1.4, 1.45, 1.44, 1.45, 1.45])
    assert cross_check(v, [tr]).status == "Consistent"


def test_cross_check_single_point_inconclusive():
    v = predict(HardyParams(3, 2, 2, 0), _meta_dims("origin3"))
    assert cross_check(v, [FamilyTrace("bump", [1.0], [1.0])]).status == "Inconclusive"


def test_cross_check_mismatch():
    v = predict(HardyParams(3, 2, 2, 0), _meta_dims("origin3"))
    tr = FamilyTrace("bump", [2.0**k for k in range(5)], [2.0 ** (k / 2) for k in range(5)])
    assert cross_check(v, [tr]).status == "Mismatch"
