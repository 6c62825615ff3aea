"""Predicted status of a (q, p, beta) Hardy-Sobolev inequality from dimension
estimates, and consistency of that prediction with numeric kappa evidence.

Rules, in precedence order (sufficient conditions first):

    R1  upper dim_A < min{(q/p)(n-p+beta), n-1}                    Holds in G
    R2  E porous, upper dim_A < (q/p)(n-p+beta) and
        (upper dim_A < n-1 or beta <= extra_bound)                  HoldsGlobal
    R3  1 < p, beta < p-1, lower dim_A > n-p+beta, E unbounded      Holds in G
    R4  beta <= 0, 1 < p < q < p*, lower dim_A > n-p+beta,
        E unbounded                                                 HoldsForVanishing
    R7h beta = 0, q < p*, upper dim_A < (q/p)(n-p)                  HoldsGlobal
    R5  beta >= 0, q < p*, q(n-p+beta)/p != n,
        upper dim_A >= (q/p)(n-p+beta), dim_H < n-p+beta            Fails in G
    R6  beta < 0, q < p*, E compact and porous,
        upper dim_A >= (q/p)(n-p+beta), lower dim_M < n-p+beta      Fails in G
    R7f beta = 0, q < p*, upper dim_A >= (q/p)(n-p)                 Fails globally

G is the complement of E.  The "E unbounded" requirement is the price for
G being unbounded, which it always is here.  A dimension comparison counts
only when it clears the estimate's tolerance; otherwise the rule is
undecided and contributes a caveat.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .hardy import FamilyTrace, HardyParams, exponent_algebra

SCHEMA_VERSION = 1

HOLDS_SLOPE = 0.1
FAILS_SLOPE = 0.2
MIN_POINTS = 4

RULES = {
    "R1": "thin complement: upper Assouad dimension below min{(q/p)(n-p+beta), n-1}",
    "R2": "porous E with upper Assouad dimension below (q/p)(n-p+beta), global form",
    "R3": "thick complement: lower Assouad dimension above n-p+beta, beta < p-1",
    "R4": "thick complement, beta <= 0 and p < q: functions vanishing on E",
    "R5": "dimensional dichotomy, beta >= 0: large Assouad and small Hausdorff dimension",
    "R6": "dimensional dichotomy, beta < 0, compact porous E: large Assouad and small lower Minkowski dimension",
    "R7": "unweighted characterisation: global inequality iff upper Assouad dimension < (q/p)(n-p)",
}

@dataclass
class DimValue:
    value: float
    tol: float = 0.0
    source: str = "estimate"  # estimate | metadata


@dataclass
class DimSet:
    """Dimension information about E plus the structural flags the rules need."""

    upper_assouad: DimValue | None = None
    lower_assouad: DimValue | None = None
    lower_minkowski: DimValue | None = None
    hausdorff: DimValue | None = None  # only from metadata
    porous: bool | None = None
    compact: bool | None = None
    unbounded: bool | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RuleOutcome:
    rule: str
    prediction: str  # Holds | HoldsGlobal | HoldsForVanishing | Fails
    scope: str  # G | global | vanishing


@dataclass
class Verdict:
    prediction: str
    rule: str
    quote: str
    scope: str
    inputs: dict
    caveats: list = field(default_factory=list)
    fired: list = field(default_factory=list)  # every rule that applied
    conflict: bool = False
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    try:
        return float(x)
    except (TypeError, ValueError):
        return str(x)


def dims_from_estimates(upper=None, lower=None, minkowski_lower=None, porosity=None, E=None, meta=None) -> DimSet:
    """DimSet from DimEstimate objects (fhlab.dimension), a PorosityReport,
    the set's boundedness, and optional metadata overrides
    {dim_A, ldim_A, ldim_M, dim_H}."""
    meta = meta or {}

    def pick(key, est):
        if key in meta and meta[key] is not None:
            return DimValue(float(meta[key]), 0.0, "metadata")
        if est is None:
            return None
        return DimValue(float(est.value), float(est.tol), "estimate")

    ds = DimSet(
        upper_assouad=pick("dim_A", upper),
        lower_assouad=pick("ldim_A", lower),
        lower_minkowski=pick("ldim_M", minkowski_lower),
        hausdorff=DimValue(float(meta["dim_H"]), 0.0, "metadata") if meta.get("dim_H") is not None else None,
    )
    if porosity is not None:
        ds.porous = bool(porosity.porous)
    if "porous" in meta:
        ds.porous = bool(meta["porous"])
    if E is not None:
        ds.unbounded = not E.bounded
        ds.compact = bool(E.bounded)
    return ds


class _Compare:
    """Margin-aware comparisons that log undecided cases."""

    def __init__(self):
        self.caveats: list[str] = []

    def below(self, d: DimValue | None, theta: float, what: str, rule: str):
        if d is None:
            self.caveats.append(f"{rule}: {what} not available")
            return None
        if d.value + d.tol < theta:
            return True
        if d.value - d.tol >= theta:
            return False
        self.caveats.append(
            f"{rule}: {what} = {d.value:.4g} within tolerance {d.tol:.3g} of threshold {theta:.4g}"
        )
        return None

    def above(self, d: DimValue | None, theta: float, what: str, rule: str):
        if d is None:
            self.caveats.append(f"{rule}: {what} not available")
            return None
        if d.value - d.tol > theta:
            return True
        if d.value + d.tol <= theta:
            return False
        self.caveats.append(
            f"{rule}: {what} = {d.value:.4g} within tolerance {d.tol:.3g} of threshold {theta:.4g}"
        )
        return None

    def above_or_equal(self, d: DimValue | None, theta: float, what: str, rule: str):
        if d is None:
            self.caveats.append(f"{rule}: {what} not available")
            return None
        if d.value - d.tol >= theta:
            return True
        if d.value + d.tol < theta:
            return False
        self.caveats.append(
            f"{rule}: {what} = {d.value:.4g} within tolerance {d.tol:.3g} of threshold {theta:.4g}"
        )
        return None


def _all(*conds):
    """Three-valued and: False beats None beats True."""
    if any(c is False for c in conds):
        return False
    if any(c is None for c in conds):
        return None
    return True


def _flag(value, name, rule, cmp: _Compare):
    if value is None:
        cmp.caveats.append(f"{rule}: flag '{name}' unknown")
    return value


def evaluate_rules(params: HardyParams, dims: DimSet) -> tuple[list[RuleOutcome], list[str]]:
    """Every rule whose hypotheses are met, in precedence order, plus caveats
    from undecided comparisons."""
    n, p, q, b = params.n, params.p, params.q, params.beta
    ex = exponent_algebra(params)
    cmp = _Compare()
    thick = n - p + b
    thin = (q / p) * thick
    ps = params.p_star
    in_range = 1 <= p <= q and p < n
    below_ps = in_range and q < ps
    upto_ps = in_range and q <= ps + 1e-12
    up, lo = dims.upper_assouad, dims.lower_assouad
    out: list[RuleOutcome] = []

    # sufficient conditions
    if upto_ps and cmp.below(up, min(thin, n - 1), "upper dim_A", "R1"):
        out.append(RuleOutcome("R1", "Holds", "G"))
    if upto_ps:
        extra = True if b <= ex.extra_bound else cmp.below(up, n - 1, "upper dim_A", "R2")
        c = _all(_flag(dims.porous, "porous", "R2", cmp), cmp.below(up, thin, "upper dim_A", "R2"), extra)
        if c:
            out.append(RuleOutcome("R2", "HoldsGlobal", "global"))
    if upto_ps and p > 1 and b < p - 1:
        c = _all(cmp.above(lo, thick, "lower dim_A", "R3"), _flag(dims.unbounded, "unbounded", "R3", cmp))
        if c:
            out.append(RuleOutcome("R3", "Holds", "G"))
    if b <= 0 and 1 < p < q < ps:
        c = _all(cmp.above(lo, thick, "lower dim_A", "R4"), _flag(dims.unbounded, "unbounded", "R4", cmp))
        if c:
            out.append(RuleOutcome("R4", "HoldsForVanishing", "vanishing"))
    if b == 0 and below_ps and cmp.below(up, thin, "upper dim_A", "R7"):
        out.append(RuleOutcome("R7", "HoldsGlobal", "global"))

    # necessary conditions
    if b >= 0 and below_ps:
        if abs(q * thick / p - n) < 1e-12:
            cmp.caveats.append("R5: excluded because q(n-p+beta)/p = n")
        else:
            h = dims.hausdorff
            if h is None and dims.lower_minkowski is not None:
                # lower Minkowski dimension bounds the Hausdorff dimension from above
                h = dims.lower_minkowski
            c = _all(cmp.above_or_equal(up, thin, "upper dim_A", "R5"), cmp.below(h, thick, "dim_H bound", "R5"))
            if c:
                out.append(RuleOutcome("R5", "Fails", "G"))
    if b < 0 and below_ps:
        c = _all(
            _flag(dims.compact, "compact", "R6", cmp),
            _flag(dims.porous, "porous", "R6", cmp),
            cmp.above_or_equal(up, thin, "upper dim_A", "R6"),
            cmp.below(dims.lower_minkowski, thick, "lower dim_M", "R6"),
        )
        if c:
            out.append(RuleOutcome("R6", "Fails", "G"))
    if b == 0 and below_ps and cmp.above_or_equal(up, thin, "upper dim_A", "R7"):
        out.append(RuleOutcome("R7", "Fails", "global"))
    return out, cmp.caveats


def _contradicts(a: RuleOutcome, b: RuleOutcome) -> bool:
    """A global inequality implies the one in G and the one for functions
    vanishing on E; a Fails in G contradicts any of them."""
    holds, fails = (a, b) if a.prediction != "Fails" else (b, a)
    if holds.prediction == "Fails" or fails.prediction != "Fails":
        return False
    if fails.scope == "global":
        return holds.scope == "global"
    return True


def predict(params: HardyParams, dims: DimSet) -> Verdict:
    fired, caveats = evaluate_rules(params, dims)
    inputs = {"params": asdict(params), "dims": dims.to_dict()}
    conflict = False
    for i, a in enumerate(fired):
        for b in fired[i + 1:]:
            if _contradicts(a, b):
                conflict = True
                caveats.append(f"rules {a.rule} ({a.prediction}) and {b.rule} ({b.prediction}) disagree")
    if not fired:
        return Verdict("Unknown", "", "", "", inputs, caveats, [], False)
    first = fired[0]
    return Verdict(
        first.prediction, first.rule, RULES[first.rule], first.scope, inputs, caveats,
        [asdict(o) for o in fired], conflict,
    )


# ---------------------------------------------------------------------------
# consistency with numeric evidence


@dataclass
class ConsistencyReport:
    status: str  # Consistent | Mismatch | Inconclusive
    prediction: str
    slopes: dict
    notes: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)


def cross_check(v: Verdict, evidence: list[FamilyTrace]) -> ConsistencyReport:
    """Holds-type predictions need every usable family flat (slope <= 0.1);
    Fails needs at least one family growing (slope > 0.2).  Families with
    fewer than four finite points are ignored; an Unknown prediction is
    consistent with any usable evidence."""
    slopes = {}
    notes = []
    for tr in evidence:
        if tr.usable() < MIN_POINTS:
            notes.append(f"{tr.family}: only {tr.usable()} usable points")
            continue
        slopes[tr.family] = float(tr.slope)
    if not slopes:
        return ConsistencyReport("Inconclusive", v.prediction, slopes, notes + ["no usable family trace"])
    worst = max(slopes.values())
    growing = [k for k, s in slopes.items() if s > FAILS_SLOPE]
    if v.prediction == "Unknown":
        notes.append("no rule fired; " + (f"growth along {growing}" if growing else "no growth observed"))
        return ConsistencyReport("Consistent", v.prediction, slopes, notes)
    if v.prediction == "Fails":
        if growing:
            return ConsistencyReport("Consistent", v.prediction, slopes, notes)
        notes.append(f"predicted failure but the largest slope is {worst:.3g}")
        return ConsistencyReport("Mismatch", v.prediction, slopes, notes)
    if worst <= HOLDS_SLOPE:
        return ConsistencyReport("Consistent", v.prediction, slopes, notes)
    if growing:
        notes.append(f"predicted {v.prediction} ({v.rule}) but kappa grows along {growing}")
        return ConsistencyReport("Mismatch", v.prediction, slopes, notes)
    notes.append(f"largest slope {worst:.3g} between the flat and growth thresholds")
    return ConsistencyReport("Inconclusive", v.prediction, slopes, notes)
