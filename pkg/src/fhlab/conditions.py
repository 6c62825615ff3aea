"""Numeric checkers for distance-weight integrability conditions: the Aikawa
integral bound, the annular shell-volume property, the ball-integral
comparability estimate and the A1 condition for powers of the distance."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dimension import DEFAULT_TOL, estimate_assouad_upper, porosity_check
from .field import Ball, BudgetExceeded, Divergent, integrate_weighted, make_grid, grid_centers
from .setmodel import SetHandle, sample_points

SLOPE_TOL = 0.1


@dataclass
class ConditionReport:
    condition: str  # Aikawa | Ps | Equiv | A1
    s: float
    verdict: str  # Pass | Fail | Inconclusive
    constant_profile: list = field(default_factory=list)  # (scale, constant)
    trend_slope: float = float("nan")
    worst_witness: dict = field(default_factory=dict)
    divergent: bool = False
    slope_tol: float = SLOPE_TOL
    notes: list = field(default_factory=list)

    @property
    def max_constant(self) -> float:
        vals = [c for _, c in self.constant_profile if np.isfinite(c)]
        return max(vals) if vals else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["constant_profile"] = [[float(a), float(b)] for a, b in self.constant_profile]
        d["max_constant"] = self.max_constant
        return d

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["log_scale", "log_constant"])
            for a, b in self.constant_profile:
                if a > 0 and b > 0:
                    w.writerow([repr(math.log(a)), repr(math.log(b))])


def trend_slope(scales, consts) -> float:
    """Slope of log(constant) against log(1/scale); constants are first
    maximised within dyadic bins of the scale."""
    bins: dict[int, float] = {}
    for sc, c in zip(scales, consts):
        if not (sc > 0 and c > 0 and np.isfinite(c)):
            continue
        k = int(round(-math.log2(sc)))
        bins[k] = max(bins.get(k, 0.0), c)
    if len(bins) < 2:
        return float("nan")
    ks = np.array(sorted(bins), dtype=float)
    y = np.log([bins[int(k)] for k in ks])
    return float(np.polyfit(ks * math.log(2), y, 1)[0])


def _radius_cap(E: SetHandle, cap: float | None) -> float:
    if cap is not None:
        return float(cap)
    if E.bounded and E.diameter > 0:
        return 0.5 * E.diameter
    return 1.0


def _verdict(slope: float, divergent: bool, tol: float, levels: int) -> str:
    if divergent:
        return "Fail"
    if not np.isfinite(slope) or levels < 4:
        return "Inconclusive"
    return "Pass" if slope <= tol else "Fail"


def aikawa_check(
    E: SetHandle,
    s: float,
    samples: int = 3,
    r_levels: int = 4,
    seed: int = 0,
    resolution: int = 8,
    max_subdiv: int = 5,
    radius_cap: float | None = None,
    slope_tol: float = SLOPE_TOL,
    threads: int = 1,
) -> ConditionReport:
    """C(x, r) = r^-s * integral over B(x, r) of dist(., E)^(s - n), for
    sampled x in E and dyadic r below the radius cap.

    For a bounded set, radii above diam(E)/2 only enter the maximum: the
    ladder continues until r_levels radii lie below diam(E)/2, and the trend
    is fitted on those, so the verdict does not depend on the cap."""
    if s <= 0:
        raise ValueError("Aikawa exponent must be positive")
    n = E.n
    R0 = _radius_cap(E, radius_cap)
    small = 0.5 * E.diameter if E.bounded and E.diameter > 0 else math.inf
    radii = []
    r = R0
    while sum(1 for t in radii if t <= small * (1 + 1e-12)) < r_levels:
        radii.append(r)
        r *= 0.5
    cts = sample_points(E, samples, seed)
    profile = []
    worst = {}
    for r in radii:
        for x in cts:
            try:
                # balls wider than the set get deeper refinement, so the
                # finest cells keep the same absolute size
                extra = max(0, math.ceil(math.log2(r / small))) if r > small else 0
                I = integrate_weighted(
                    E, Ball(x, r), s - n, resolution=resolution, max_subdiv=max_subdiv + extra, threads=threads
                )
            except Divergent as exc:
                return ConditionReport(
                    "Aikawa", s, "Fail", profile, float("inf"),
                    {"x": x.tolist(), "r": r, "reason": str(exc)}, True, slope_tol,
                )
            c = I.value / r**s
            profile.append((r, c))
            if not worst or c > worst["C"]:
                worst = {"x": x.tolist(), "r": r, "C": c}
    fit = [(a, b) for a, b in profile if a <= small * (1 + 1e-12)]
    slope = trend_slope([a for a, _ in fit], [b for _, b in fit])
    return ConditionReport("Aikawa", s, _verdict(slope, False, slope_tol, r_levels), profile, slope, worst,
                           False, slope_tol)


def aikawa_threshold(
    E: SetHandle,
    step: float = 0.1,
    s_max: float | None = None,
    **kw,
) -> tuple[float, list]:
    """Smallest s on the grid step, 2 step, ... where aikawa_check passes,
    found by bisection (passing is monotone in s).  Returns (s, calls)."""
    n = E.n
    top = s_max if s_max is not None else float(n)
    grid = [round(step * i, 10) for i in range(1, int(round(top / step)) + 1)]
    calls = []

    def ok(i):
        rep = aikawa_check(E, grid[i], **kw)
        calls.append((grid[i], rep.verdict, rep.trend_slope))
        return rep.verdict == "Pass"

    lo, hi = -1, len(grid) - 1
    if not ok(hi):
        return float("nan"), calls
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return grid[hi], calls


def shell_volume(
    E: SetHandle,
    ball: Ball,
    eta1: float,
    eta2: float,
    h_target: float,
    base: int = 8,
    cell_cap: int = 20_000_000,
) -> float:
    """|ball n {eta1 <= dist(., E) < eta2}| by midpoint counting.

    Cells that may cross a level set or the sphere of the ball are split
    until their side is at most h_target; the rest are classified whole."""
    n = ball.n
    gbox, shape, h = make_grid(ball.bounding_box(), base)
    centers = grid_centers(gbox, shape)
    offs = np.array(list(np.ndindex(*(2,) * n)), dtype=float) - 0.5
    side = h
    vol = 0.0
    total = 0
    while len(centers):
        total += len(centers)
        if total > cell_cap:
            raise BudgetExceeded("shell volume exceeded cell cap")
        hd = 0.5 * side * math.sqrt(n)
        rr = np.sqrt(np.sum((centers - ball.center) ** 2, axis=1))
        d = np.asarray(E.distance(centers), dtype=float) + 0.0
        # inflate by the cloud mesh so sampled sets are treated conservatively
        slack = hd + E.mesh
        outside = (rr - hd >= ball.radius) | (d + slack < eta1) | (d - slack >= eta2)
        whole = (rr + hd <= ball.radius) & (d - slack >= eta1) & (d + slack < eta2)
        undecided = ~(outside | whole)
        vol += np.count_nonzero(whole) * side**n
        if side <= h_target:
            mid = undecided & (rr <= ball.radius) & (d >= eta1) & (d < eta2)
            vol += np.count_nonzero(mid) * side**n
            break
        par = centers[undecided]
        side *= 0.5
        centers = (par[:, None, :] + offs[None] * side).reshape(-1, n)
    return float(vol)


def ps_check(
    E: SetHandle,
    s: float,
    ball_samples: int = 3,
    eta_levels: int = 4,
    seed: int = 0,
    radius_cap: float | None = None,
    eta1_fractions=(0.0, 0.5, 0.75),
    refine: float = 8.0,
    slope_tol: float = SLOPE_TOL,
) -> ConditionReport:
    """Observed constants of the shell-volume bound.

    For s >= 1 the bound is C eta2^(s-1) (eta2 - eta1) diam(B)^(n-s) and the
    scale is eta2/diam(B); for s < 1 it is C (eta2 - eta1)^s diam(B)^(n-s)
    and the scale is (eta2 - eta1)/diam(B)."""
    n = E.n
    if not 0 <= s <= n:
        raise ValueError("need 0 <= s <= n")
    R0 = _radius_cap(E, radius_cap)
    cts = sample_points(E, ball_samples, seed)
    profile = []
    worst = {}
    for x in cts:
        ball = Ball(x, R0)
        D = 2 * R0
        # eta2 from diam/4 down: wider shells feel the curvature of the ball
        for k in range(2, eta_levels + 2):
            eta2 = D * 2.0**-k
            for frac in eta1_fractions:
                eta1 = frac * eta2
                gap = eta2 - eta1
                V = shell_volume(E, ball, eta1, eta2, gap / refine)
                if s >= 1:
                    bound = eta2 ** (s - 1) * gap * D ** (n - s)
                    scale = eta2 / D
                else:
                    bound = gap**s * D ** (n - s)
                    scale = gap / D
                c = V / bound
                profile.append((scale, c))
                if not worst or c > worst["C"]:
                    worst = {"x": x.tolist(), "radius": R0, "eta1": eta1, "eta2": eta2, "C": c}
    slope = trend_slope([a for a, _ in profile], [b for _, b in profile])
    if s == 0:
        # every null set qualifies; the constant is a volume ratio at most the ball's
        slope = min(slope, 0.0) if np.isfinite(slope) else 0.0
    levels = len({int(round(-math.log2(a))) for a, _ in profile if a > 0})
    return ConditionReport("Ps", s, _verdict(slope, False, slope_tol, levels), profile, slope, worst,
                           False, slope_tol)


def _probe_balls(E: SetHandle, x: np.ndarray, r: float, factors, rng) -> list:
    """Balls of radius r whose distance to E is roughly factor * 2r."""
    n = E.n
    out = []
    for fct in factors:
        if fct == 0:
            out.append(Ball(x, r))
            continue
        want = fct * 2 * r + r
        best = None
        for _ in range(16):
            u = rng.normal(size=n)
            u /= np.linalg.norm(u)
            c = x + want * u
            d = float(E.distance(c))
            if best is None or d > best[0]:
                best = (d, c)
        out.append(Ball(best[1], r))
    return out


def equiv_ratio(E: SetHandle, ball: Ball, s: float, resolution: int = 8, max_subdiv: int = 5) -> float:
    """integral over the ball of dist^(s-n), divided by
    diam(B)^n (diam(B) + dist(B, E))^(s-n)."""
    n = ball.n
    D = 2 * ball.radius
    dist = max(float(E.distance(ball.center)) - ball.radius, 0.0)
    lhs = integrate_weighted(E, ball, s - n, resolution=resolution, max_subdiv=max_subdiv).value
    return lhs / (D**n * (D + dist) ** (s - n))


def equiv_check(
    E: SetHandle,
    s: float,
    ball_samples: int = 3,
    seed: int = 0,
    r_levels: int = 4,
    resolution: int = 8,
    max_subdiv: int = 5,
    radius_cap: float | None = None,
    dim_upper: float | None = None,
    porous: bool | None = None,
    tol: float = DEFAULT_TOL,
    slope_tol: float = SLOPE_TOL,
) -> ConditionReport:
    """Ratio of the ball integral of dist^(s-n) to
    diam(B)^n (diam(B) + dist(B, E))^(s-n) over touching, near and far balls.

    Precondition: E porous and s above its Assouad dimension by the
    tolerance; otherwise Inconclusive."""
    if porous is None:
        porous = porosity_check(E, seed=seed).porous
    if dim_upper is None:
        dim_upper = estimate_assouad_upper(E, seed=seed).value
    if not porous or not s > dim_upper + tol:
        return ConditionReport(
            "Equiv", s, "Inconclusive", notes=[f"precondition: porous={porous}, dim_A~{dim_upper:.3g}, s={s}"]
        )
    rng = np.random.default_rng(seed)
    R0 = _radius_cap(E, radius_cap)
    cts = sample_points(E, ball_samples, seed)
    profile = []
    band = 1.0
    worst = {}
    for j in range(r_levels):
        r = R0 * 2.0**-j
        kj = 1.0
        for x in cts:
            for B in _probe_balls(E, x, r, (0, 0.5, 10), rng):
                dist = max(float(E.distance(B.center)) - r, 0.0)
                ratio = equiv_ratio(E, B, s, resolution, max_subdiv)
                k = max(ratio, 1 / ratio)
                kj = max(kj, k)
                if k >= band:
                    band = k
                    worst = {"center": B.center.tolist(), "radius": r, "dist": dist, "ratio": ratio}
        profile.append((r, kj))
    slope = trend_slope([a for a, _ in profile], [b for _, b in profile])
    rep = ConditionReport("Equiv", s, _verdict(slope, False, slope_tol, r_levels), profile, slope, worst,
                          False, slope_tol)
    rep.notes.append(f"band K = {band:.4g}")
    return rep


def a1_check(
    E: SetHandle,
    s: float,
    ball_samples: int = 3,
    seed: int = 0,
    r_levels: int = 4,
    resolution: int = 8,
    max_subdiv: int = 5,
    radius_cap: float | None = None,
    slope_tol: float = SLOPE_TOL,
) -> ConditionReport:
    """Ratio of the ball average of w = dist^(s-n) to its minimum over the
    ball's quadrature cells, on balls centred on E and beside it."""
    n = E.n
    rng = np.random.default_rng(seed)
    R0 = _radius_cap(E, radius_cap)
    cts = sample_points(E, ball_samples, seed)
    profile = []
    worst = {}
    for j in range(r_levels):
        r = R0 * 2.0**-j
        cj = 0.0
        for x in cts:
            for B in _probe_balls(E, x, r, (0, 0.5), rng):
                if s == n:
                    ratio = 1.0
                else:
                    try:
                        I = integrate_weighted(E, B, s - n, resolution=resolution, max_subdiv=max_subdiv)
                    except Divergent as exc:
                        return ConditionReport(
                            "A1", s, "Fail", profile, float("inf"),
                            {"center": B.center.tolist(), "radius": r, "reason": str(exc)}, True, slope_tol,
                        )
                    gbox, shape, _ = make_grid(B.bounding_box(), 2 * resolution)
                    c = grid_centers(gbox, shape)
                    c = c[np.sum((c - B.center) ** 2, axis=1) <= r * r]
                    d = np.asarray(E.distance(c), dtype=float)
                    # w decreases in dist when s < n, increases when s > n
                    wmin = d.max() ** (s - n) if s < n else max(d.min(), 0.0) ** (s - n)
                    ratio = (I.value / B.volume()) / wmin if wmin > 0 else float("inf")
                cj = max(cj, ratio)
                if not worst or ratio > worst["ratio"]:
                    worst = {"center": B.center.tolist(), "radius": r, "ratio": ratio}
        profile.append((r, cj))
    slope = trend_slope([a for a, _ in profile], [b for _, b in profile])
    return ConditionReport("A1", s, _verdict(slope, False, slope_tol, r_levels), profile, slope, worst,
                           False, slope_tol)
