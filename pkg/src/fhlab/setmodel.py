"""Closed sets in R^n with distance oracles, point sampling and diameters.

A set is described by a small constructor tree (:class:`SetSpec`) that is
compiled into a :class:`SetHandle`.  Analytic constructors answer distance
queries exactly; IFS attractors are realized as finite address clouds and
answer with a one-sided error bounded by the recorded mesh.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

KINDS = (
    "Points",
    "Subspace",
    "Sphere",
    "AxisBox",
    "IFS",
    "ReciprocalSequence",
    "Union",
    "Product",
    "Translate",
    "Tile",
)

# hard cap on the number of points any local enumeration may return
MAX_LOCAL_POINTS = 2_000_000


class InvalidSpec(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SetSpec:
    kind: str
    params: dict = field(default_factory=dict)
    children: tuple = ()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": _jsonable(self.params),
            "children": [c.to_dict() for c in self.children],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SetSpec":
        if "kind" not in d:
            raise InvalidSpec("set spec without 'kind'")
        children = tuple(cls.from_dict(c) for c in d.get("children", []))
        return cls(d["kind"], dict(d.get("params", {})), children)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "SetSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


# ---------------------------------------------------------------------------
# compiled nodes


class _Node:
    dim: int
    bounded: bool = True
    sampled: bool = False
    eps: float = 0.0

    def dist(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bbox(self) -> tuple[np.ndarray, np.ndarray] | None:
        raise NotImplementedError

    def diameter(self) -> float:
        raise NotImplementedError

    def farthest(self, x: np.ndarray) -> np.ndarray:
        """Largest distance from each row of x to the set (inf if unbounded)."""
        raise NotImplementedError

    def local(self, center: np.ndarray, R: float, mesh: float) -> np.ndarray:
        """Points of E within B(center, R), every point of that piece being
        within `mesh` of a returned point (up to the cloud mesh)."""
        raise NotImplementedError

    def landmarks(self) -> np.ndarray:
        return np.zeros((0, self.dim))


def _ball_filter(pts: np.ndarray, center: np.ndarray, R: float) -> np.ndarray:
    if len(pts) == 0:
        return pts
    keep = np.sum((pts - center) ** 2, axis=1) <= R * R * (1 + 1e-12)
    return pts[keep]


def _lattice(lo: np.ndarray, hi: np.ndarray, h: float) -> np.ndarray:
    """Points of the global lattice hZ^d inside [lo, hi], plus a point per
    axis when the box is thinner than h."""
    axes = []
    for a, b in zip(lo, hi):
        i0 = math.ceil(a / h - 1e-9)
        i1 = math.floor(b / h + 1e-9)
        if i1 < i0:
            axes.append(np.array([0.5 * (a + b)]))
        else:
            axes.append(np.arange(i0, i1 + 1) * h)
    count = int(np.prod([len(a) for a in axes]))
    if count > MAX_LOCAL_POINTS:
        raise MemoryError(f"lattice of {count} points exceeds cap")
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


class _Points(_Node):
    def __init__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if pts.size == 0:
            raise InvalidSpec("Points: empty point list")
        self.pts = pts
        self.dim = pts.shape[1]
        self.tree = cKDTree(pts)

    def dist(self, x):
        d, _ = self.tree.query(x)
        return np.asarray(d, dtype=float)

    def bbox(self):
        return self.pts.min(axis=0), self.pts.max(axis=0)

    def diameter(self):
        return _point_diameter(self.pts)

    def farthest(self, x):
        out = np.zeros(len(x))
        for chunk in range(0, len(self.pts), 4096):
            p = self.pts[chunk:chunk + 4096]
            d = np.sqrt(((x[:, None, :] - p[None]) ** 2).sum(-1)).max(axis=1)
            out = np.maximum(out, d)
        return out

    def local(self, center, R, mesh):
        idx = self.tree.query_ball_point(center, R * (1 + 1e-12))
        return self.pts[sorted(idx)]

    def landmarks(self):
        return self.pts[:64]


def _point_diameter(pts: np.ndarray) -> float:
    if len(pts) < 2:
        return 0.0
    if len(pts) > 3000:
        centred = pts - pts.mean(axis=0)
        _, s, vt = np.linalg.svd(centred, full_matrices=False)
        rank = int(np.sum(s > 1e-12 * max(s[0], 1e-300)))
        if rank == 0:
            return 0.0
        proj = centred @ vt[:rank].T
        if rank == 1:
            return float(proj.max() - proj.min())
        try:
            hull = ConvexHull(proj)
            pts = pts[hull.vertices]
        except QhullError:
            pass
    best = 0.0
    for i in range(0, len(pts), 2048):
        blk = pts[i:i + 2048]
        d = np.sqrt(((blk[:, None, :] - pts[None]) ** 2).sum(-1)).max()
        best = max(best, float(d))
    return best


class _Subspace(_Node):
    def __init__(self, m, n, offset=None):
        m, n = int(m), int(n)
        if not 0 <= m < n:
            raise InvalidSpec(f"Subspace: need 0 <= m < n, got m={m}, n={n}")
        self.m, self.dim = m, n
        self.offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
        if self.offset.shape != (n,):
            raise InvalidSpec("Subspace: offset has wrong dimension")
        self.bounded = m == 0

    def dist(self, x):
        return np.sqrt(np.sum((x[:, self.m:] - self.offset[self.m:]) ** 2, axis=1))

    def bbox(self):
        if self.m == 0:
            return self.offset.copy(), self.offset.copy()
        return None

    def diameter(self):
        return 0.0 if self.m == 0 else math.inf

    def farthest(self, x):
        if self.m == 0:
            return np.sqrt(np.sum((x - self.offset) ** 2, axis=1))
        return np.full(len(x), math.inf)

    def local(self, center, R, mesh):
        perp = float(self.dist(center[None])[0])
        if perp > R:
            return np.zeros((0, self.dim))
        rho = math.sqrt(max(R * R - perp * perp, 0.0))
        if self.m == 0:
            return self.offset[None].copy()
        h = 2.0 * mesh / math.sqrt(self.m)
        c = center[: self.m]
        lat = _lattice(c - rho, c + rho, h)
        pts = np.tile(self.offset, (len(lat), 1))
        pts[:, : self.m] = lat
        return _ball_filter(pts, center, R)

    def landmarks(self):
        return self.offset[None].copy()


class _Sphere(_Node):
    def __init__(self, center, radius):
        self.c = np.asarray(center, dtype=float)
        self.rho = float(radius)
        if self.rho <= 0:
            raise InvalidSpec("Sphere: radius must be positive")
        self.dim = len(self.c)
        if self.dim < 2:
            raise InvalidSpec("Sphere: ambient dimension must be >= 2")

    def dist(self, x):
        return np.abs(np.sqrt(np.sum((x - self.c) ** 2, axis=1)) - self.rho)

    def bbox(self):
        return self.c - self.rho, self.c + self.rho

    def diameter(self):
        return 2.0 * self.rho

    def farthest(self, x):
        return np.sqrt(np.sum((x - self.c) ** 2, axis=1)) + self.rho

    def local(self, center, R, mesh):
        v = center - self.c
        nv = float(np.linalg.norm(v))
        u = v / nv if nv > 0 else np.eye(self.dim)[0]
        d = abs(nv - self.rho)
        if d > R:
            return np.zeros((0, self.dim))
        ratio = min(1.0, (R + d) / (2 * self.rho))
        theta = min(math.pi, 2 * math.asin(ratio) * 1.0001)
        g = self.rho * theta
        k = self.dim - 1
        h = 2.0 * mesh / math.sqrt(k)
        tang = _lattice(np.full(k, -g), np.full(k, g), h)
        r = np.sqrt(np.sum(tang**2, axis=1))
        tang = tang[r <= g + 1e-12]
        r = r[r <= g + 1e-12]
        # orthonormal basis of the tangent space at u
        q, _ = np.linalg.qr(np.column_stack([u, np.eye(self.dim)]))
        basis = q[:, 1: self.dim]
        if np.dot(q[:, 0], u) < 0:
            basis = -basis
        ang = r / self.rho
        with np.errstate(invalid="ignore", divide="ignore"):
            dirs = np.where(r[:, None] > 0, (tang @ basis.T) / r[:, None], 0.0)
        pts = self.c + self.rho * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * dirs)
        return _ball_filter(pts, center, R)

    def landmarks(self):
        return (self.c + self.rho * np.eye(self.dim)[0])[None]


class _AxisBox(_Node):
    def __init__(self, lower, upper):
        self.lo = np.asarray(lower, dtype=float)
        self.hi = np.asarray(upper, dtype=float)
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise InvalidSpec("AxisBox: need upper > lower componentwise")
        self.dim = len(self.lo)

    def dist(self, x):
        gap = np.maximum(np.maximum(self.lo - x, 0.0), x - self.hi)
        return np.sqrt(np.sum(gap**2, axis=1))

    def bbox(self):
        return self.lo.copy(), self.hi.copy()

    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def farthest(self, x):
        far = np.maximum(np.abs(x - self.lo), np.abs(x - self.hi))
        return np.sqrt(np.sum(far**2, axis=1))

    def local(self, center, R, mesh):
        lo = np.maximum(self.lo, center - R)
        hi = np.minimum(self.hi, center + R)
        if np.any(hi < lo):
            return np.zeros((0, self.dim))
        pts = _lattice(lo, hi, 2.0 * mesh / math.sqrt(self.dim))
        return _ball_filter(pts, center, R)

    def landmarks(self):
        return (0.5 * (self.lo + self.hi))[None]


class _Reciprocal(_Node):
    """{0} u {1/j : j >= 1} on the first axis of R^dim."""

    def __init__(self, dim=1):
        self.dim = int(dim)

    def dist(self, x):
        t = x[:, 0]
        perp2 = np.sum(x[:, 1:] ** 2, axis=1)
        inside = (t > 0) & (t < 1)
        tt = np.where(inside, t, 0.5)
        j = np.floor(1.0 / tt)
        c1 = 1.0 / j
        c2 = 1.0 / (j + 1.0)
        best = np.minimum(np.abs(t - c1), np.abs(t - c2))
        best = np.minimum(best, np.abs(t))
        best = np.where(t <= 0, -t, best)
        best = np.where(t >= 1, t - 1, best)
        return np.sqrt(best**2 + perp2)

    def bbox(self):
        lo = np.zeros(self.dim)
        hi = np.zeros(self.dim)
        hi[0] = 1.0
        return lo, hi

    def diameter(self):
        return 1.0

    def farthest(self, x):
        z = np.zeros(self.dim)
        o = np.zeros(self.dim)
        o[0] = 1.0
        return np.maximum(np.linalg.norm(x - z, axis=1), np.linalg.norm(x - o, axis=1))

    def local(self, center, R, mesh):
        perp2 = float(np.sum(center[1:] ** 2))
        if perp2 > R * R:
            return np.zeros((0, self.dim))
        half = math.sqrt(R * R - perp2)
        a, b = center[0] - half, min(center[0] + half, 1.0)
        ts = []
        if a <= 0 <= b:
            ts.append(0.0)
        if b > 0:
            lo = max(a, 0.0)
            j = max(1, math.ceil(1.0 / b - 1e-12))
            while 1.0 / j >= lo and 1.0 / j > 0:
                t = 1.0 / j
                if t <= b + 1e-15:
                    ts.append(t)
                gap = t - 1.0 / (j + 1)
                if gap >= 0.5 * mesh:
                    j += 1
                else:
                    target = t - 0.5 * mesh
                    if target <= lo or target <= 0:
                        break
                    j = max(j + 1, math.ceil(1.0 / target))
                if len(ts) > MAX_LOCAL_POINTS:
                    raise MemoryError("reciprocal enumeration exceeds cap")
            if lo > 0 and lo not in ts:
                # last element at or above lo keeps the mesh guarantee on the tail
                jl = math.floor(1.0 / lo)
                if jl >= 1 and 1.0 / jl <= b:
                    ts.append(1.0 / jl)
        pts = np.zeros((len(ts), self.dim))
        pts[:, 0] = ts
        pts = np.unique(pts, axis=0)
        return _ball_filter(pts, center, R)

    def landmarks(self):
        pts = np.zeros((2, self.dim))
        pts[1, 0] = 1.0
        return pts


class _Cloud(_Node):
    """Depth-d address cloud of a similarity IFS."""

    def __init__(self, maps, depth):
        ratios = []
        offsets = []
        for mp in maps:
            if len(mp) != 2:
                raise InvalidSpec("IFS: each map must be a (ratio, offset) pair")
            r = float(mp[0])
            if not 0.0 < r < 1.0:
                raise InvalidSpec(f"IFS: contraction ratio {r} not in (0,1)")
            ratios.append(r)
            offsets.append(np.atleast_1d(np.asarray(mp[1], dtype=float)))
        if not ratios:
            raise InvalidSpec("IFS: no maps")
        d = {len(o) for o in offsets}
        if len(d) != 1:
            raise InvalidSpec("IFS: offsets of differing dimension")
        self.dim = d.pop()
        self.ratios = np.array(ratios)
        self.offsets = np.array(offsets)
        self.depth = int(depth)
        self.fixed = self.offsets / (1.0 - self.ratios[:, None])
        pts = self.fixed[:1].copy()
        for _ in range(self.depth):
            pts = np.concatenate([r * pts + o for r, o in zip(self.ratios, self.offsets)])
        self.pts = pts
        self.tree = cKDTree(pts)
        self.sampled = True
        self._diam = _point_diameter(pts)
        self.eps = self._diam * float(self.ratios.max()) ** self.depth

    def dist(self, x):
        d, _ = self.tree.query(x)
        return np.asarray(d, dtype=float)

    def bbox(self):
        return self.pts.min(axis=0), self.pts.max(axis=0)

    def diameter(self):
        return self._diam

    def farthest(self, x):
        return _Points.farthest(self, x)

    def local(self, center, R, mesh):
        idx = self.tree.query_ball_point(center, R * (1 + 1e-12))
        return self.pts[sorted(idx)]

    def landmarks(self):
        return self.fixed.copy()


class _Embed(_Node):
    """Child in R^d placed in the first d coordinates of R^dim."""

    def __init__(self, child, dim):
        self.child = child
        self.dim = int(dim)
        self.bounded = child.bounded
        self.sampled = child.sampled
        self.eps = child.eps

    def dist(self, x):
        d = self.child.dist(np.ascontiguousarray(x[:, : self.child.dim]))
        return np.sqrt(d**2 + np.sum(x[:, self.child.dim:] ** 2, axis=1))

    def bbox(self):
        bb = self.child.bbox()
        if bb is None:
            return None
        pad = np.zeros(self.dim - self.child.dim)
        return np.concatenate([bb[0], pad]), np.concatenate([bb[1], pad])

    def diameter(self):
        return self.child.diameter()

    def farthest(self, x):
        f = self.child.farthest(np.ascontiguousarray(x[:, : self.child.dim]))
        return np.sqrt(f**2 + np.sum(x[:, self.child.dim:] ** 2, axis=1))

    def local(self, center, R, mesh):
        perp2 = float(np.sum(center[self.child.dim:] ** 2))
        if perp2 > R * R:
            return np.zeros((0, self.dim))
        sub = self.child.local(center[: self.child.dim], math.sqrt(R * R - perp2), mesh)
        out = np.zeros((len(sub), self.dim))
        out[:, : self.child.dim] = sub
        return out

    def landmarks(self):
        lm = self.child.landmarks()
        out = np.zeros((len(lm), self.dim))
        out[:, : self.child.dim] = lm
        return out


class _Union(_Node):
    def __init__(self, children):
        if not children:
            raise InvalidSpec("Union: no children")
        dims = {c.dim for c in children}
        if len(dims) != 1:
            raise InvalidSpec(f"Union: inconsistent ambient dimensions {sorted(dims)}")
        self.children = children
        self.dim = dims.pop()
        self.bounded = all(c.bounded for c in children)
        self.sampled = any(c.sampled for c in children)
        self.eps = max(c.eps for c in children)

    def dist(self, x):
        return np.min([c.dist(x) for c in self.children], axis=0)

    def bbox(self):
        bbs = [c.bbox() for c in self.children]
        if any(b is None for b in bbs):
            return None
        return np.min([b[0] for b in bbs], axis=0), np.max([b[1] for b in bbs], axis=0)

    def farthest(self, x):
        return np.max([c.farthest(x) for c in self.children], axis=0)

    def diameter(self):
        if not self.bounded:
            return math.inf
        lo, hi = self.bbox()
        ext = float(np.linalg.norm(hi - lo))
        mesh = max(ext / 64, self.eps, 1e-12)
        pts = np.concatenate(
            [c.local(0.5 * (lo + hi), ext, mesh) for c in self.children]
            + [c.landmarks() for c in self.children]
        )
        return float(self.farthest(pts).max())

    def local(self, center, R, mesh):
        parts = [c.local(center, R, mesh) for c in self.children]
        return np.concatenate(parts) if parts else np.zeros((0, self.dim))

    def landmarks(self):
        return np.concatenate([c.landmarks() for c in self.children])


class _Product(_Node):
    def __init__(self, children):
        if len(children) < 2:
            raise InvalidSpec("Product: need at least two factors")
        self.children = children
        self.dims = [c.dim for c in children]
        self.cuts = np.cumsum([0] + self.dims)
        self.dim = int(self.cuts[-1])
        self.bounded = all(c.bounded for c in children)
        self.sampled = any(c.sampled for c in children)
        self.eps = math.sqrt(sum(c.eps**2 for c in children))

    def _split(self, x):
        return [np.ascontiguousarray(x[..., a:b]) for a, b in zip(self.cuts[:-1], self.cuts[1:])]

    def dist(self, x):
        return np.sqrt(sum(c.dist(p) ** 2 for c, p in zip(self.children, self._split(x))))

    def bbox(self):
        bbs = [c.bbox() for c in self.children]
        if any(b is None for b in bbs):
            return None
        return np.concatenate([b[0] for b in bbs]), np.concatenate([b[1] for b in bbs])

    def diameter(self):
        return math.sqrt(sum(c.diameter() ** 2 for c in self.children))

    def farthest(self, x):
        return np.sqrt(sum(c.farthest(p) ** 2 for c, p in zip(self.children, self._split(x))))

    def local(self, center, R, mesh):
        sub_mesh = mesh / math.sqrt(len(self.children))
        parts = [c.local(p, R, sub_mesh) for c, p in zip(self.children, self._split(center))]
        if any(len(p) == 0 for p in parts):
            return np.zeros((0, self.dim))
        count = int(np.prod([len(p) for p in parts]))
        if count > MAX_LOCAL_POINTS:
            raise MemoryError(f"product enumeration of {count} points exceeds cap")
        idx = np.meshgrid(*[np.arange(len(p)) for p in parts], indexing="ij")
        pts = np.concatenate([p[i.ravel()] for p, i in zip(parts, idx)], axis=1)
        return _ball_filter(pts, center, R)

    def landmarks(self):
        lms = [c.landmarks() for c in self.children]
        if any(len(l) == 0 for l in lms):
            return np.zeros((0, self.dim))
        combos = itertools.islice(itertools.product(*lms), 64)
        return np.array([np.concatenate(c) for c in combos])


class _Translate(_Node):
    def __init__(self, child, offset):
        self.child = child
        self.v = np.asarray(offset, dtype=float)
        if self.v.shape != (child.dim,):
            raise InvalidSpec("Translate: offset dimension mismatch")
        self.dim = child.dim
        self.bounded = child.bounded
        self.sampled = child.sampled
        self.eps = child.eps

    def dist(self, x):
        return self.child.dist(x - self.v)

    def bbox(self):
        bb = self.child.bbox()
        return None if bb is None else (bb[0] + self.v, bb[1] + self.v)

    def diameter(self):
        return self.child.diameter()

    def farthest(self, x):
        return self.child.farthest(x - self.v)

    def local(self, center, R, mesh):
        return self.child.local(center - self.v, R, mesh) + self.v

    def landmarks(self):
        return self.child.landmarks() + self.v


class _Tile(_Node):
    """Union of translates child + k*period, k in Z."""

    def __init__(self, child, period):
        if not child.bounded:
            raise InvalidSpec("Tile: child must be bounded")
        self.child = child
        self.v = np.asarray(period, dtype=float)
        if self.v.shape != (child.dim,) or not np.any(self.v):
            raise InvalidSpec("Tile: period must be a nonzero vector of the child's dimension")
        self.dim = child.dim
        self.bounded = False
        self.sampled = child.sampled
        self.eps = child.eps
        self.vv = float(self.v @ self.v)
        lo, hi = child.bbox()
        corners = np.array(list(itertools.product(*zip(lo, hi))))
        proj = corners @ self.v / self.vv
        self.a, self.b = float(proj.min()), float(proj.max())

    def dist(self, x):
        t = x @ self.v / self.vv
        k = np.round(t - 0.5 * (self.a + self.b))
        best = self.child.dist(x - k[:, None] * self.v)
        lv = math.sqrt(self.vv)
        for step in range(1, 100000):
            done = True
            for kk in (k - step, k + step):
                s = t - kk
                gap = np.maximum(np.maximum(self.a - s, s - self.b), 0.0) * lv
                todo = gap < best
                if np.any(todo):
                    done = False
                    d = self.child.dist(x[todo] - kk[todo, None] * self.v)
                    best[todo] = np.minimum(best[todo], d)
            if done:
                break
        return best

    def bbox(self):
        return None

    def diameter(self):
        return math.inf

    def farthest(self, x):
        return np.full(len(x), math.inf)

    def _ks(self, center, R):
        t = float(center @ self.v / self.vv)
        r = R / math.sqrt(self.vv)
        return range(math.floor(t - r - self.b) - 1, math.ceil(t + r - self.a) + 2)

    def local(self, center, R, mesh):
        parts = []
        for k in self._ks(center, R):
            off = k * self.v
            pts = self.child.local(center - off, R, mesh)
            if len(pts):
                parts.append(pts + off)
        return np.concatenate(parts) if parts else np.zeros((0, self.dim))

    def landmarks(self):
        lm = self.child.landmarks()
        return np.concatenate([lm + k * self.v for k in range(-2, 3)])


def _natural_leaf(spec: SetSpec, budget: int, mesh: float | None) -> _Node:
    p = spec.params
    k = spec.kind
    if k == "Points":
        return _Points(p.get("points", []))
    if k == "Subspace":
        return _Subspace(p.get("m", 0), p.get("n", 2), p.get("offset"))
    if k == "Sphere":
        return _Sphere(p.get("center"), p.get("radius", 1.0))
    if k == "AxisBox":
        return _AxisBox(p.get("lower"), p.get("upper"))
    if k == "ReciprocalSequence":
        return _Reciprocal(1)
    if k == "IFS":
        maps = p.get("maps", [])
        if not maps:
            raise InvalidSpec("IFS: no maps")
        for mp in maps:
            if not 0.0 < float(mp[0]) < 1.0:
                raise InvalidSpec(f"IFS: contraction ratio {mp[0]} not in (0,1)")
        depth = p.get("depth")
        rmax = max(float(mp[0]) for mp in maps)
        if depth is None:
            if budget < 1:
                raise InvalidSpec("IFS: sample_budget must be >= 1")
            depth = max(1, int(math.floor(math.log(budget) / math.log(len(maps)) + 1e-9)))
            if mesh is not None:
                need = max(1, math.ceil(math.log(mesh) / math.log(rmax)))
                depth = min(depth, need)
        return _Cloud(maps, depth)
    raise InvalidSpec(f"unknown set kind {k!r}")


def _compile(spec: SetSpec, budget: int, mesh: float | None, in_product: bool) -> _Node:
    if spec.kind not in KINDS:
        raise InvalidSpec(f"unknown set kind {spec.kind!r}")
    k = spec.kind
    if k in ("Union", "Product", "Translate", "Tile"):
        if not spec.children:
            raise InvalidSpec(f"{k}: needs children")
        kids = [_compile(c, budget, mesh, in_product=(k == "Product")) for c in spec.children]
        if k == "Union":
            node = _Union(kids)
        elif k == "Product":
            node = _Product(kids)
        elif k == "Translate":
            if len(kids) != 1:
                raise InvalidSpec("Translate: exactly one child")
            node = _Translate(kids[0], spec.params.get("offset"))
        else:
            if len(kids) != 1:
                raise InvalidSpec("Tile: exactly one child")
            node = _Tile(kids[0], spec.params.get("period"))
    else:
        node = _natural_leaf(spec, budget, mesh)
    ambient = spec.params.get("ambient")
    if ambient is not None:
        ambient = int(ambient)
        if ambient < node.dim:
            raise InvalidSpec(f"{k}: ambient {ambient} below natural dimension {node.dim}")
        if ambient > node.dim:
            node = _Embed(node, ambient)
    elif not in_product and node.dim < 2:
        node = _Embed(node, 2)
    return node


# ---------------------------------------------------------------------------
# handle


@dataclass(frozen=True, eq=False)
class SetHandle:
    spec: SetSpec
    oracle: str  # "Analytic" or "SampledCloud"
    n: int
    diameter: float
    bounded: bool
    mesh: float
    box: tuple  # (lower, upper) arrays used by all grid operations
    samples: np.ndarray | None = None
    _node: Any = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def distance(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[-1] != self.n:
            raise DimensionMismatch(f"point of dimension {x2.shape[-1]}, set lives in R^{self.n}")
        d = self._node.dist(np.ascontiguousarray(x2))
        return float(d[0]) if single else d

    def local_points(self, center, R: float, mesh: float) -> np.ndarray:
        center = np.asarray(center, dtype=float)
        return self._node.local(center, float(R), max(float(mesh), self.mesh))

    def landmarks(self) -> np.ndarray:
        return self._node.landmarks()

    def farthest(self, x) -> np.ndarray:
        return self._node.farthest(np.atleast_2d(np.asarray(x, dtype=float)))


def build_set(
    spec: SetSpec | dict,
    sample_budget: int = 2**14,
    seed: int = 0,
    box=None,
    mesh: float | None = None,
) -> SetHandle:
    """Compile a spec into a handle.

    `box` is the bounding box used by grid operations; unbounded sets get
    [-2, 2]^n around the origin unless one is given (or `params.box` is set
    on the root spec).  `seed` is recorded only: construction is
    deterministic.
    """
    if isinstance(spec, dict):
        spec = SetSpec.from_dict(spec)
    node = _compile(spec, int(sample_budget), mesh, in_product=False)
    n = node.dim
    if n < 2:
        raise InvalidSpec("ambient dimension must be >= 2")
    if box is None and "box" in spec.params:
        b = spec.params["box"]
        box = (b["lower"], b["upper"])
    if box is None:
        bb = node.bbox()
        if bb is None:
            box = (np.full(n, -2.0), np.full(n, 2.0))
        else:
            lo, hi = bb
            pad = max(0.1 * float(np.max(hi - lo)), 0.1)
            box = (lo - pad, hi + pad)
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    if lo.shape != (n,) or hi.shape != (n,) or np.any(hi <= lo):
        raise InvalidSpec("bounding box must have upper > lower in R^n")
    lo.setflags(write=False)
    hi.setflags(write=False)
    oracle = "SampledCloud" if node.sampled else "Analytic"
    samples = None
    if node.sampled:
        samples = _collect_clouds(node)
    diam = float(node.diameter()) if node.bounded else math.inf
    return SetHandle(
        spec=spec,
        oracle=oracle,
        n=n,
        diameter=diam,
        bounded=node.bounded,
        mesh=float(node.eps),
        box=(lo, hi),
        samples=samples,
        _node=node,
        meta={"seed": seed, "diameter_is_lower_bound": bool(node.sampled)},
    )


def _collect_clouds(node: _Node) -> np.ndarray | None:
    """Cloud points in ambient coordinates, when the set is a bare cloud or an
    embedded one; None for composites whose points are not a single cloud."""
    if isinstance(node, _Cloud):
        return node.pts
    if isinstance(node, _Embed):
        inner = _collect_clouds(node.child)
        if inner is None:
            return None
        return np.hstack([inner, np.zeros((len(inner), node.dim - inner.shape[1]))])
    return None


def distance(E: SetHandle, point) -> float | np.ndarray:
    return E.distance(point)


def diameter(E: SetHandle) -> float:
    return E.diameter


def _dedupe(pts: np.ndarray) -> np.ndarray:
    """Drop repeated rows, keeping first occurrences in order."""
    if len(pts) == 0:
        return pts
    _, idx = np.unique(np.round(pts, 12), axis=0, return_index=True)
    return pts[np.sort(idx)]


def sample_points(E: SetHandle, count: int, seed: int = 0, pool_target: int = 20000) -> np.ndarray:
    """`count` well-spread points of E inside the handle's box.

    Landmarks (accumulation points, fixed points, ...) are taken first,
    the rest by farthest-point sampling over a dense candidate pool.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    pool = candidate_pool(E, pool_target)
    pool = pool[rng.permutation(len(pool))]
    lm = E.landmarks()
    lm = _dedupe(lm[_in_box(lm, E.box)]) if len(lm) else lm
    pool = _dedupe(np.concatenate([lm, pool]))
    if len(pool) <= count:
        return pool.copy()
    chosen = list(range(max(1, min(len(lm), count))))
    d = np.full(len(pool), np.inf)
    for i in chosen:
        d = np.minimum(d, np.sqrt(((pool - pool[i]) ** 2).sum(-1)))
    while len(chosen) < count:
        i = int(np.argmax(d))
        if d[i] <= 0:
            break
        chosen.append(i)
        d = np.minimum(d, np.sqrt(((pool - pool[i]) ** 2).sum(-1)))
    return pool[chosen]


def _in_box(pts, box):
    lo, hi = box
    return np.all((pts >= lo - 1e-12) & (pts <= hi + 1e-12), axis=1)


def candidate_pool(E: SetHandle, target: int = 20000) -> np.ndarray:
    """Dense sample of E inside the handle's box, roughly `target` points."""
    lo, hi = E.box
    center = 0.5 * (lo + hi)
    R = 0.5 * float(np.linalg.norm(hi - lo))
    mesh = R / 2
    pool = np.zeros((0, E.n))
    prev = -1
    while True:
        try:
            pts = E.local_points(center, R, mesh)
        except MemoryError:
            break
        pts = pts[_in_box(pts, E.box)]
        if len(pts) >= target or len(pts) == prev or mesh <= max(E.mesh, 1e-9):
            pool = pts if len(pts) <= 4 * target else pool if len(pool) else pts
            break
        pool, prev = pts, len(pts)
        mesh /= 2
    if len(pool) > 4 * target:
        idx = np.linspace(0, len(pool) - 1, 4 * target).astype(int)
        pool = pool[idx]
    return pool
