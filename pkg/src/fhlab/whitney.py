"""Whitney decomposition of the complement of a closed set inside a box."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .field import Box, BudgetExceeded
from .setmodel import SetHandle

# dilation factor used by pointwise Hardy arguments over Whitney cubes: L = 10 sqrt(n)
DILATION = 10.0

ACCEPT_LOW = 1.5  # accept when 1.5 d(Q) <= dist(centre, E) <= 4 d(Q)
ACCEPT_HIGH = 4.0


@dataclass(frozen=True)
class WhitneyCube:
    center: tuple
    side: float
    generation: int

    @property
    def diameter(self) -> float:
        return self.side * math.sqrt(len(self.center))

    def contains(self, x, closed: bool = False) -> bool:
        gap = np.abs(np.asarray(x, dtype=float) - np.asarray(self.center)) - 0.5 * self.side
        return bool(np.all(gap <= 0) if closed else np.all(gap < 0))


@dataclass
class WhitneyDecomposition:
    cubes: list
    box: Box
    base_side: float
    max_generation: int
    truncated_cubes: int = 0
    uncovered_volume: float = 0.0
    root_generation: int = 0
    counts: dict = field(default_factory=dict)  # generation -> accepted cubes

    def __len__(self):
        return len(self.cubes)

    def __iter__(self):
        return iter(self.cubes)

    def __getitem__(self, i):
        return self.cubes[i]

    def lookup(self, points: np.ndarray) -> list[list[int]]:
        """Indices of cubes whose half-open cell contains each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = [[] for _ in pts]
        if not self.cubes:
            return out
        C = np.array([c.center for c in self.cubes])
        S = np.array([c.side for c in self.cubes])
        for side, idx in _side_groups(S):
            tree = cKDTree(C[idx])
            for k, cand in enumerate(tree.query_ball_point(pts, 0.5 * side, p=np.inf)):
                for j in cand:
                    i = idx[j]
                    lo = C[i] - 0.5 * side
                    if np.all(pts[k] >= lo) and np.all(pts[k] < lo + side):
                        out[k].append(int(i))
        return out


def _side_groups(S: np.ndarray):
    for side in np.unique(S):
        yield float(side), np.flatnonzero(S == side)


def _morton_keys(corner_int: np.ndarray, bits: int) -> list[int]:
    """Bit-interleaved keys of non-negative integer coordinates (rows)."""
    m, n = corner_int.shape
    keys = [0] * m
    for b in range(bits):
        planes = (corner_int >> b) & 1
        word = np.zeros(m, dtype=object)
        for a in range(n):
            word = word + (planes[:, a].astype(object) << (b * n + a))
        keys = [k | int(w) for k, w in zip(keys, word)]
    return keys


def whitney_decompose(
    E: SetHandle,
    box: Box,
    max_generation: int = 8,
    cell_cap: int = 5_000_000,
) -> WhitneyDecomposition:
    """Dyadic cubes Q covering box minus E up to the truncation depth, with
    d(Q) <= dist(Q, E) <= 4 d(Q).

    The root is the cube of side max(box sides) at the lower corner of the
    box.  A cube is accepted when its centre distance lies in
    [1.5 d(Q), 4 d(Q)] (so dist(Q, E) >= d(Q) follows from the triangle
    inequality), split when below and dropped at max_generation.  When E is
    far from the box the root is doubled until it is close enough to accept
    or split; only cubes meeting the box are kept."""
    n = box.n
    if E.n != n:
        raise ValueError("box and set dimensions differ")
    base = float(np.max(box.sides))
    sq = math.sqrt(n)
    lower = box.lower.copy()
    side = base
    g0 = 0
    # grow the root until it is not too far from E
    while True:
        c = lower + 0.5 * side
        d = float(E.distance(c))
        if d <= ACCEPT_HIGH * side * sq or not np.isfinite(d):
            break
        side *= 2
        g0 -= 1
    offs = np.array(list(np.ndindex(*(2,) * n)), dtype=float) - 0.5
    centers = (lower + 0.5 * side)[None, :]
    accepted_c, accepted_g = [], []
    truncated = 0
    uncovered = 0.0
    total = 0
    g = g0
    while len(centers):
        total += len(centers)
        if total > cell_cap:
            raise BudgetExceeded(f"Whitney decomposition exceeded {cell_cap} cubes")
        s = base * 2.0**-g
        # drop cubes that miss the box
        meet = np.all((centers + 0.5 * s > box.lower) & (centers - 0.5 * s < box.upper), axis=1)
        centers = centers[meet]
        d = np.asarray(E.distance(centers), dtype=float)
        diam = s * sq
        acc = (d >= ACCEPT_LOW * diam) & (d <= ACCEPT_HIGH * diam)
        low = d < ACCEPT_LOW * diam
        if np.any(d > ACCEPT_HIGH * diam):
            raise RuntimeError("Whitney cube farther than the acceptance band; root growth failed")
        accepted_c.append(centers[acc])
        accepted_g.extend([g] * int(np.count_nonzero(acc)))
        if g >= max_generation:
            truncated = int(np.count_nonzero(low))
            lo = np.maximum(centers[low] - 0.5 * s, box.lower)
            hi = np.minimum(centers[low] + 0.5 * s, box.upper)
            uncovered = float(np.sum(np.prod(np.clip(hi - lo, 0, None), axis=1)))
            break
        par = centers[low]
        centers = (par[:, None, :] + offs[None] * (0.5 * s)).reshape(-1, n)
        g += 1
    C = np.concatenate(accepted_c) if accepted_c else np.zeros((0, n))
    G = np.array(accepted_g, dtype=int)
    # canonical Morton order on the finest integer lattice
    if len(C):
        fine = base * 2.0**-max_generation
        corner = np.rint((C - 0.5 * (base * 2.0 ** -G)[:, None] - lower) / fine).astype(np.int64)
        bits = int(max_generation - g0 + 2)
        mk = _morton_keys(corner - corner.min(axis=0), bits)
        order = sorted(range(len(C)), key=lambda i: (mk[i], int(G[i])))
        C, G = C[order], G[order]
    cubes = [WhitneyCube(tuple(map(float, C[i])), base * 2.0 ** -int(G[i]), int(G[i])) for i in range(len(C))]
    counts: dict[int, int] = {}
    for q in cubes:
        counts[q.generation] = counts.get(q.generation, 0) + 1
    return WhitneyDecomposition(cubes, box, base, max_generation, truncated, uncovered, g0, counts)


def _cube_distance_bounds(E: SetHandle, cubes) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper bounds for dist(Q, E): centre distance minus half the
    diameter, and the least distance over corners and centre."""
    if not cubes:
        return np.zeros(0), np.zeros(0)
    n = len(cubes[0].center)
    C = np.array([q.center for q in cubes], dtype=float)
    S = np.array([q.side for q in cubes], dtype=float)
    dc = np.asarray(E.distance(C), dtype=float)
    lower = dc - 0.5 * S * math.sqrt(n)
    offs = np.array(list(np.ndindex(*(2,) * n)), dtype=float) - 0.5
    corners = (C[:, None, :] + offs[None] * S[:, None, None]).reshape(-1, n)
    dk = np.asarray(E.distance(corners), dtype=float).reshape(len(C), -1)
    upper = np.minimum(dk.min(axis=1), dc)
    return lower, upper


def whitney_validate(cubes, E: SetHandle, rel: float = 1e-12) -> list[dict]:
    """Cubes that break d(Q) <= dist(Q, E) <= 4 d(Q) or overlap another
    cube's interior.  The distance check is conservative: it uses the bounds
    of `_cube_distance_bounds`."""
    cubes = list(cubes)
    out = []
    if not cubes:
        return out
    lower, upper = _cube_distance_bounds(E, cubes)
    for i, q in enumerate(cubes):
        d = q.diameter
        if lower[i] < d * (1 - rel):
            out.append({"index": i, "kind": "too_close", "bound": float(lower[i]), "diameter": d})
        if upper[i] > 4 * d * (1 + rel):
            out.append({"index": i, "kind": "too_far", "bound": float(upper[i]), "diameter": d})
    C = np.array([q.center for q in cubes], dtype=float)
    S = np.array([q.side for q in cubes], dtype=float)
    groups = list(_side_groups(S))
    for a, (sa, ia) in enumerate(groups):
        for sb, ib in groups[a:]:
            tree = cKDTree(C[ib])
            reach = 0.5 * (sa + sb) * (1 - rel)
            for k, cand in enumerate(tree.query_ball_point(C[ia], reach, p=np.inf)):
                for j in cand:
                    i, o = int(ia[k]), int(ib[j])
                    if sa == sb and o <= i:
                        continue
                    if np.all(np.abs(C[i] - C[o]) < reach):
                        out.append({"index": i, "other": o, "kind": "overlap"})
    return out


def probe_coverage(dec: WhitneyDecomposition, E: SetHandle, probes: int = 2000, seed: int = 0) -> dict:
    """Random points of the box far enough from E must lie in exactly one cube."""
    rng = np.random.default_rng(seed)
    box = dec.box
    x = box.lower + rng.random((probes, box.n)) * box.sides
    d = np.asarray(E.distance(x), dtype=float)
    diam_box = float(np.linalg.norm(box.sides))
    keep = d > 2.0 ** (-dec.max_generation + 2) * diam_box
    hits = dec.lookup(x[keep])
    bad = [i for i, h in enumerate(hits) if len(h) != 1]
    return {"probes": int(np.count_nonzero(keep)), "bad": len(bad), "ok": not bad}


def write_csv(dec, path) -> None:
    """Rows (generation, center..., side)."""
    cubes = list(dec)
    n = len(cubes[0].center) if cubes else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["generation"] + [f"x{i + 1}" for i in range(n)] + ["side"])
        for q in cubes:
            w.writerow([q.generation] + [repr(v) for v in q.center] + [repr(q.side)])
