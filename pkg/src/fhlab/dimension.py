"""Covering numbers and dimension estimators (Assouad, Minkowski), Hausdorff
content bounds and a porosity probe."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .field import Box
from .setmodel import SetHandle, sample_points

DEFAULT_TOL = 0.15


class EmptyIntersection(ValueError):
    pass


class InsufficientScales(ValueError):
    pass


@dataclass
class DimEstimate:
    value: float
    kind: str  # AssouadUpper | AssouadLower | MinkowskiUpper | MinkowskiLower
    scale_window: tuple
    slope_residual: float
    n_samples: int
    tol: float = DEFAULT_TOL
    witness: dict = field(default_factory=dict)
    profiles: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scale_window"] = list(self.scale_window)
        return d


@dataclass
class ContentEstimate:
    exponent: float
    bound: float
    radii: list = field(repr=False, default_factory=list)
    count: int = 0


@dataclass
class PorosityReport:
    c: float
    worst: dict
    porous: bool
    threshold: float
    profile: list = field(default_factory=list, repr=False)


def greedy_net(points: np.ndarray, r: float, order: np.ndarray | None = None) -> np.ndarray:
    """Indices of a maximal r-separated subset picked greedily.

    Balls are open: a point at distance exactly r is left for a new centre.
    The balls B(c, r) around the returned centres cover `points`."""
    m = len(points)
    if m == 0:
        return np.zeros(0, dtype=int)
    if order is None:
        order = np.arange(m)
    tree = cKDTree(points)
    rr = r * (1 - 1e-9)
    covered = np.zeros(m, dtype=bool)
    picked = []
    for i in order:
        if covered[i]:
            continue
        picked.append(i)
        covered[tree.query_ball_point(points[i], rr)] = True
    return np.array(picked, dtype=int)


def thin(points: np.ndarray, spacing: float) -> np.ndarray:
    """One representative per grid cell of the given spacing (first in order)."""
    if len(points) == 0 or spacing <= 0:
        return points
    keys = np.floor(points / spacing).astype(np.int64)
    _, idx = np.unique(keys, axis=0, return_index=True)
    return points[np.sort(idx)]


def covering_number(
    E: SetHandle,
    center,
    R: float,
    r: float,
    seed: int = 0,
    mesh_factor: float = 0.5,
) -> int:
    """Greedy r-net size of E within B(center, R).

    E is sampled at mesh r*mesh_factor (never below the cloud mesh); the
    net size N satisfies N(E', r) <= N <= N(E', r/2) for the sample E'."""
    if not 0 < r < R:
        raise ValueError("need 0 < r < R")
    center = np.asarray(center, dtype=float)
    pts = thin(E.local_points(center, R, r * mesh_factor), r * mesh_factor)
    if len(pts) == 0:
        raise EmptyIntersection(f"no points of E in B({center.tolist()}, {R})")
    order = np.random.default_rng(seed).permutation(len(pts)) if seed else None
    return int(len(greedy_net(pts, r, order)))


def _fit(k: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    a, b = np.polyfit(k, y, 1)
    res = y - (a * k + b)
    return float(a), float(np.sqrt(np.mean(res**2)))


def _window_slopes(k: np.ndarray, y: np.ndarray, width: int):
    out = []
    for i in range(0, len(k) - width + 1):
        s, res = _fit(k[i:i + width], y[i:i + width])
        out.append((s, res, i))
    return out


def _assouad_scales(E: SetHandle, R_levels: int):
    lo, hi = E.box
    ext = float(np.max(hi - lo))
    Rmax = 0.5 * min(E.diameter, ext)
    if not Rmax > 0:
        raise InsufficientScales("set has zero diameter")
    return [Rmax * 4.0**-i for i in range(R_levels)]


def _assouad_profiles(E, centers, R_levels, k_range, seed, window):
    k0, k1 = k_range
    ks_all = np.arange(k0, k1 + 1)
    if window is None:
        # the whole range: short dyadic windows alias against non-dyadic
        # self-similarity (the Cantor set doubles every log2(3) levels)
        window = max(4, len(ks_all))
    if len(ks_all) < window or window < 4:
        raise InsufficientScales(f"k range {k_range} shorter than window {window}")
    if E.diameter == 0:
        return window, [], 0
    cts = sample_points(E, centers, seed)
    profiles = []
    n_samples = 0
    for x in cts:
        for R in _assouad_scales(E, R_levels):
            ks = ks_all[R * 2.0**-ks_all >= 4 * E.mesh]
            if len(ks) < window:
                continue
            counts = []
            for k in ks:
                counts.append(covering_number(E, x, R, R * 2.0**-k))
                n_samples += 1
            y = np.log2(np.array(counts, dtype=float))
            profiles.append({"center": x.tolist(), "R": R, "k": ks.tolist(), "logN": y.tolist()})
    if not profiles:
        raise InsufficientScales("no (x, R) pair admits the requested scales above the mesh")
    return window, profiles, n_samples


def _select(E, window, profiles, n_samples, upper, tol):
    kind = "AssouadUpper" if upper else "AssouadLower"
    if E.diameter == 0:
        # a single point: every covering number is 1
        return DimEstimate(0.0, kind, (0.0, 1.0), 0.0, 0, tol, {"note": "single point"})
    best = None
    for prof in profiles:
        ks = np.array(prof["k"], dtype=float)
        R = prof["R"]
        for s, res, i in _window_slopes(ks, np.array(prof["logN"]), window):
            if best is None or (s > best[0] if upper else s < best[0]):
                win = (float(R * 2.0 ** -ks[i + window - 1]), float(R * 2.0 ** -ks[i]))
                best = (s, res, win, {"center": prof["center"], "R": R})
    return DimEstimate(
        value=float(min(max(best[0], 0.0), E.n)),
        kind=kind,
        scale_window=best[2],
        slope_residual=best[1],
        n_samples=n_samples,
        tol=tol,
        witness=best[3],
        profiles=profiles,
    )


def _assouad(E, centers, R_levels, k_range, seed, window, upper, tol):
    window, profiles, m = _assouad_profiles(E, centers, R_levels, k_range, seed, window)
    return _select(E, window, profiles, m, upper, tol)


def estimate_assouad(
    E: SetHandle,
    centers: int = 8,
    R_levels: int = 4,
    k_range=(2, 7),
    seed: int = 0,
    window: int | None = None,
    tol: float = DEFAULT_TOL,
) -> tuple[DimEstimate, DimEstimate]:
    """(upper, lower) from one pass over the covering profiles."""
    window, profiles, m = _assouad_profiles(E, centers, R_levels, k_range, seed, window)
    return _select(E, window, profiles, m, True, tol), _select(E, window, profiles, m, False, tol)


def estimate_assouad_upper(
    E: SetHandle,
    centers: int = 8,
    R_levels: int = 4,
    k_range=(2, 7),
    seed: int = 0,
    window: int | None = None,
    tol: float = DEFAULT_TOL,
) -> DimEstimate:
    """Largest log-log slope of the covering profile k -> log2 N(E n B(x,R), R 2^-k)
    over sampled centres, radii and sliding k-windows."""
    return _assouad(E, centers, R_levels, k_range, seed, window, True, tol)


def estimate_assouad_lower(
    E: SetHandle,
    centers: int = 8,
    R_levels: int = 4,
    k_range=(2, 7),
    seed: int = 0,
    window: int | None = None,
    tol: float = DEFAULT_TOL,
) -> DimEstimate:
    """Smallest slope counterpart of :func:`estimate_assouad_upper`."""
    return _assouad(E, centers, R_levels, k_range, seed, window, False, tol)


def box_counts(
    E: SetHandle, box: Box, k_max: int, k_min: int = 0, cell_cap: int = 50_000_000, strict: bool = True
) -> dict[int, int]:
    """Dyadic cells of side side0*2^-k whose circumscribed ball meets E.

    Cells are refined only where they can meet E, so the work tracks the
    counts themselves.  side0 is the longest side of `box`.  When the next
    level would exceed `cell_cap` cells this raises MemoryError, or with
    strict=False returns the levels counted so far."""
    n = E.n
    side0 = float(np.max(box.sides))
    centers = (box.lower + 0.5 * side0)[None, :]
    offs = np.array(list(np.ndindex(*(2,) * n)), dtype=float) - 0.5
    counts = {}
    for k in range(k_max + 1):
        s = side0 * 2.0**-k
        hd = 0.5 * s * math.sqrt(n)
        d = E.distance(centers)
        keep = d <= hd * (1 + 1e-12) + E.mesh
        centers = centers[keep]
        if k >= k_min:
            counts[k] = int(len(centers))
        if k == k_max or len(centers) == 0:
            break
        centers = (centers[:, None, :] + offs[None] * (0.5 * s)).reshape(-1, n)
        if len(centers) > cell_cap:
            if strict:
                raise MemoryError("box counting exceeds cell cap")
            break
    return counts


def estimate_minkowski(
    E: SetHandle,
    box: Box | None = None,
    k_range=(4, 20),
    window: int | None = None,
    tol: float = DEFAULT_TOL,
    cell_cap: int = 4_000_000,
) -> tuple[DimEstimate, DimEstimate]:
    """Upper/lower box-counting dimension from the max/min slope window of
    log2 N_k against k.  Levels past `cell_cap` cells are dropped; the
    default window is half of the levels actually counted."""
    if box is None:
        box = Box(*E.box)
    k0, k1 = k_range
    if E.mesh > 0:
        side0 = float(np.max(box.sides))
        k1 = min(k1, int(math.floor(math.log2(side0 / (4 * E.mesh)))))
    if k1 - k0 + 1 < 4:
        raise InsufficientScales(f"only {k1 - k0 + 1} scales available above the mesh")
    counts = box_counts(E, box, k1, k0, cell_cap=cell_cap, strict=False)
    ks = np.array([k for k in range(k0, k1 + 1) if counts.get(k, 0) > 0], dtype=float)
    if window is None:
        window = max(4, (len(ks) + 1) // 2)
    if len(ks) < window:
        raise InsufficientScales("set misses the box at the requested scales")
    y = np.log2([counts[int(k)] for k in ks])
    slopes = _window_slopes(ks, y, window)
    side0 = float(np.max(box.sides))
    profile = [{"k": ks.tolist(), "logN": y.tolist()}]

    def mk(sel, kind):
        s, res, i = sel
        win = (side0 * 2.0 ** -ks[i + window - 1], side0 * 2.0 ** -ks[i])
        return DimEstimate(
            value=float(min(max(s, 0.0), E.n)),
            kind=kind,
            scale_window=win,
            slope_residual=res,
            n_samples=len(ks),
            tol=tol,
            profiles=profile,
        )

    hi = max(slopes, key=lambda t: t[0])
    lo = min(slopes, key=lambda t: t[0])
    return mk(hi, "MinkowskiUpper"), mk(lo, "MinkowskiLower")


def content_upper(E: SetHandle, lam: float, box: Box | None = None, scale: float = 0.1) -> ContentEstimate:
    """Upper bound on the lambda-dimensional Hausdorff content of E n box
    from a greedy cover by balls of radius `scale`."""
    if not 0 <= lam <= E.n:
        raise ValueError("exponent must lie in [0, n]")
    if box is None:
        box = Box(*E.box)
    center = 0.5 * (box.lower + box.upper)
    R = 0.5 * float(np.linalg.norm(box.sides))
    pts = E.local_points(center, R, scale * 0.25)
    inside = np.all((pts >= box.lower) & (pts <= box.upper), axis=1)
    pts = thin(pts[inside], scale * 0.25)
    if len(pts) == 0:
        return ContentEstimate(lam, 0.0, [], 0)
    net = greedy_net(pts, scale)
    return ContentEstimate(lam, float(len(net) * scale**lam), [scale] * len(net), len(net))


def porosity_check(
    E: SetHandle,
    samples: int = 8,
    seed: int = 0,
    r_levels: int = 4,
    grid: int = 12,
    threshold: float = 0.05,
) -> PorosityReport:
    """For sampled x in E and dyadic r, the largest c with B(y, c r) inside
    B(x, r) minus E over a local grid of candidate centres y; the report
    holds the minimum over all samples."""
    n = E.n
    cts = sample_points(E, samples, seed)
    lo, hi = E.box
    Rmax = 0.5 * min(E.diameter, float(np.max(hi - lo)))
    if Rmax <= 0:
        Rmax = 1.0
    offs = np.stack(
        np.meshgrid(*[np.linspace(-1, 1, 2 * grid + 1)] * n, indexing="ij"), axis=-1
    ).reshape(-1, n)
    offs = offs[np.sum(offs**2, axis=1) <= 1]
    worst = None
    profile = []
    for i in range(r_levels):
        r = Rmax * 2.0**-i
        level_min = math.inf
        for x in cts:
            y = x + r * offs
            d = E.distance(y)
            room = r - r * np.sqrt(np.sum(offs**2, axis=1))
            c = float(np.max(np.minimum(d, room)) / r)
            level_min = min(level_min, c)
            if worst is None or c < worst[0]:
                worst = (c, {"x": x.tolist(), "r": r})
        profile.append((r, level_min))
    c = max(worst[0], 0.0)
    return PorosityReport(c=c, worst=worst[1], porous=c >= threshold, threshold=threshold, profile=profile)


def write_profile_csv(est: DimEstimate, path) -> None:
    """Rows (profile index, center, R, k, log2 N) for plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["profile", "center", "R", "k", "log2N"])
        for i, p in enumerate(est.profiles):
            c = " ".join(repr(float(v)) for v in p.get("center", []))
            for k, y in zip(p["k"], p["logN"]):
                w.writerow([i, c, repr(float(p.get("R", float("nan")))), k, repr(float(y))])
