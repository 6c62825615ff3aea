"""Uniform grids, distance rasterization, gradients and singular-weight quadrature."""
from __future__ import annotations

import csv
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from .setmodel import SetHandle

DEFAULT_CELL_CAP = 40_000_000
# top-level cells per work unit; fixed so sums do not depend on thread count
CHUNK = 4096

_MAGIC = b"FHLG"


class BudgetExceeded(RuntimeError):
    pass


class Divergent(ArithmeticError):
    """The weighted integral does not converge near the set."""

    def __init__(self, msg, partial=None, witness=None):
        super().__init__(msg)
        self.partial = partial
        self.witness = witness


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi <= lo):
            raise ValueError("Box needs upper > lower componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    @classmethod
    def cube(cls, center, half: float) -> "Box":
        c = np.asarray(center, dtype=float)
        return cls(c - half, c + half)


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.radius <= 0:
            raise ValueError("Ball radius must be positive")

    @property
    def n(self) -> int:
        return len(self.center)

    def bounding_box(self) -> Box:
        return Box(self.center - self.radius, self.center + self.radius)

    def volume(self) -> float:
        n = self.n
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius**n


@dataclass(frozen=True)
class GridField:
    """Cell-centre samples on an isotropic grid.  `values` has shape
    (prod(shape),) for scalars or (prod(shape), k) for vector fields."""

    box: Box
    shape: tuple
    h: float
    values: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("GridField values must be finite")

    @property
    def n(self) -> int:
        return len(self.shape)

    def centers(self) -> np.ndarray:
        return grid_centers(self.box, self.shape)

    def array(self) -> np.ndarray:
        tail = self.values.shape[1:]
        return self.values.reshape(tuple(self.shape) + tail)

    def axes(self) -> list[np.ndarray]:
        return [self.box.lower[i] + (np.arange(k) + 0.5) * self.h for i, k in enumerate(self.shape)]

    def interpolator(self) -> Callable[[np.ndarray], np.ndarray]:
        """Multilinear interpolation of a scalar field (zero outside the box)."""
        rgi = RegularGridInterpolator(
            self.axes(), self.array(), method="linear", bounds_error=False, fill_value=None
        )
        lo, hi = self.box.lower, self.box.upper

        def f(x):
            x = np.atleast_2d(x)
            out = rgi(x)
            inside = np.all((x >= lo) & (x <= hi), axis=1)
            return np.where(inside, out, 0.0)

        return f


def make_grid(box: Box, resolution: int) -> tuple[Box, tuple, float]:
    """Isotropic grid with `resolution` cells along the longest side; the box
    is widened on its upper faces so every axis holds a whole number of cells."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    h = float(np.max(box.sides)) / resolution
    counts = tuple(int(max(1, math.ceil(s / h - 1e-9))) for s in box.sides)
    grown = Box(box.lower, box.lower + np.array(counts) * h)
    return grown, counts, h


def grid_centers(box: Box, shape) -> np.ndarray:
    h = (box.upper - box.lower) / np.array(shape)
    axes = [box.lower[i] + (np.arange(k) + 0.5) * h[i] for i, k in enumerate(shape)]
    g = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in g], axis=1)


def rasterize_distance(
    E: SetHandle,
    box: Box,
    resolution: int,
    method: str = "exact",
    cell_cap: int = DEFAULT_CELL_CAP,
) -> GridField:
    """Distance to E at every cell centre.

    method="exact" queries the oracle per cell; method="transform" (clouds)
    marks the cells holding cloud points and runs a Euclidean distance
    transform, which is within sqrt(n)*h + mesh of the per-cell values.
    """
    box, shape, h = make_grid(box, resolution)
    if int(np.prod(shape)) > cell_cap:
        raise BudgetExceeded(f"{int(np.prod(shape))} cells exceed cap {cell_cap}")
    if method == "exact" or E.samples is None:
        vals = E.distance(grid_centers(box, shape))
        return GridField(box, shape, h, np.asarray(vals, dtype=float))
    if method != "transform":
        raise ValueError(f"unknown method {method!r}")
    # cells that contain a cloud point (clipped onto the grid)
    idx = np.floor((E.samples - box.lower) / h).astype(int)
    occupied = np.zeros(shape, dtype=bool)
    inside = np.all((idx >= 0) & (idx < np.array(shape)), axis=1)
    occupied[tuple(idx[inside].T)] = True
    if not occupied.any():
        vals = E.distance(grid_centers(box, shape))
        return GridField(box, shape, h, np.asarray(vals, dtype=float))
    edt = ndimage.distance_transform_edt(~occupied, sampling=h)
    return GridField(box, shape, h, edt.ravel().astype(float))


def gradient(f: GridField) -> GridField:
    """Central differences inside, second-order one-sided differences on the faces."""
    if min(f.shape) < 3:
        raise ValueError("gradient needs at least 3 cells per axis")
    arr = f.array()
    parts = np.gradient(arr, f.h, edge_order=2)
    if f.n == 1:
        parts = [parts]
    vec = np.stack([p.ravel() for p in parts], axis=1)
    return GridField(f.box, f.shape, f.h, vec)


def sample_field(fun: Callable[[np.ndarray], np.ndarray], box: Box, resolution: int) -> GridField:
    box, shape, h = make_grid(box, resolution)
    vals = np.asarray(fun(grid_centers(box, shape)), dtype=float)
    return GridField(box, shape, h, vals)


# ---------------------------------------------------------------------------
# adaptive quadrature


@dataclass
class Integral:
    value: float
    error: float  # size of the last refinement step (plus any tail estimate)
    cells: int
    levels: list = field(default_factory=list)  # value with max depth k, k = 0..D
    tail: float = 0.0  # geometric tail added to the raw midpoint value
    ratio: float = float("nan")  # fitted decay ratio of refinement increments
    truncated: bool = False

    def __float__(self):
        return float(self.value)


DIVERGENCE_RATIO = 0.97


def _decay_ratio(levels, span: int = 4) -> float | None:
    """Geometric decay ratio of the last `span` refinement increments, from
    a log-linear fit; None when they are too few or not all positive."""
    inc = np.diff(np.asarray(levels, dtype=float))[-span:]
    if len(inc) < 2 or np.any(inc <= 0):
        return None
    k = np.arange(len(inc), dtype=float)
    return float(np.exp(np.polyfit(k, np.log(inc), 1)[0]))


def _children_offsets(n: int) -> np.ndarray:
    return np.array(list(np.ndindex(*(2,) * n)), dtype=float) - 0.5


def _integrate_chunk(
    E: SetHandle,
    centers: np.ndarray,
    side: np.ndarray,
    gamma: float,
    fvals: Callable | None,
    power: float,
    ball: Ball | None,
    max_subdiv: int,
    cell_cap: int,
):
    """Per-level sums for one block of top-level cells.

    Returns (leaf, whole, cells, touched): leaf[k] is the mass of cells
    accepted at level k, whole[k] the midpoint mass of every cell present
    at level k, and touched whether a near-set cell survived to the last
    level."""
    n = centers.shape[1]
    offs = _children_offsets(n)
    leaf = np.zeros(max_subdiv + 1)
    whole = np.zeros(max_subdiv + 1)
    cells = 0
    touched = False
    singular = gamma < 0
    for level in range(max_subdiv + 1):
        if len(centers) == 0:
            break
        cells += len(centers)
        if cells > cell_cap:
            raise BudgetExceeded(f"quadrature exceeded {cell_cap} cells")
        s = side * 0.5**level
        vol = float(np.prod(s))
        smax = float(s.max())
        d = np.asarray(E.distance(centers), dtype=float)
        near = d < 2.0 * smax if singular else d <= 0.0
        if ball is not None:
            rr = np.sqrt(np.sum((centers - ball.center) ** 2, axis=1))
            # planar estimate of the cell fraction inside the ball
            frac = np.clip(0.5 + (ball.radius - rr) / smax, 0.0, 1.0)
            inside = frac > 0
        else:
            frac = np.ones(len(centers))
            inside = np.ones(len(centers), dtype=bool)
        with np.errstate(divide="ignore", invalid="ignore"):
            if gamma != 0:
                w = np.where(d > 0, d**gamma, 0.0)
            else:
                w = np.where(d > 0, 1.0, 0.0)
        if fvals is not None:
            w = w * np.abs(np.asarray(fvals(centers), dtype=float)) ** power
        contrib = w * vol * frac
        whole[level] = float(np.sum(contrib))
        if level == max_subdiv:
            leaf[level] = whole[level]
            touched = bool(np.any(near & inside & (contrib > 0)))
            break
        split = near & inside
        leaf[level] = float(np.sum(contrib[~split]))
        if not split.any():
            whole[level + 1:] = 0.0
            break
        par = centers[split]
        centers = (par[:, None, :] + offs[None, :, :] * (s * 0.5)[None, None, :]).reshape(-1, n)
    return leaf, whole, cells, touched


def integrate_weighted(
    E: SetHandle,
    region,
    gamma: float,
    f=None,
    power: float = 1.0,
    resolution: int = 32,
    max_subdiv: int = 6,
    cell_cap: int = DEFAULT_CELL_CAP,
    threads: int = 1,
    extrapolate: bool = True,
    check_divergence: bool = True,
) -> Integral:
    """Integral of |f|^power * dist(., E)^gamma over a Box or Ball.

    Midpoint rule on a `resolution`-cell grid.  A cell is split into 2^n
    children while its centre lies within two cell sides of E (singular
    weights only); cells cut by the sphere of a Ball are weighted by a
    planar estimate of their inside fraction.  Cells whose centre lies on
    E contribute zero at the deepest level.

    The values obtained with depth limits 0..D give refinement increments.
    If the last few decay geometrically the remaining tail is added
    (`extrapolate`); if they do not decay the integral is reported as
    Divergent, as it is whenever gamma <= -n and the region meets E.

    `f` is a callable on (N, n) points or a scalar GridField.
    """
    n = E.n
    if isinstance(region, Ball):
        ball = region
        box = region.bounding_box()
    else:
        ball = None
        box = region
    if box.n != n:
        raise ValueError("region dimension differs from the set's")
    fvals = f.interpolator() if isinstance(f, GridField) else f
    gbox, shape, h = make_grid(box, resolution)
    centers = grid_centers(gbox, shape)
    side = np.full(n, h)
    chunks = [centers[i:i + CHUNK] for i in range(0, len(centers), CHUNK)]

    def run(c):
        return _integrate_chunk(E, c, side, gamma, fvals, power, ball, max_subdiv, cell_cap)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    cells = sum(r[2] for r in results)
    if cells > cell_cap:
        raise BudgetExceeded(f"quadrature used {cells} cells, cap {cell_cap}")
    leaf = [math.fsum(r[0][k] for r in results) for k in range(max_subdiv + 1)]
    whole = [math.fsum(r[1][k] for r in results) for k in range(max_subdiv + 1)]
    touched = any(r[3] for r in results)
    levels = [math.fsum(leaf[:k]) + whole[k] for k in range(max_subdiv + 1)]
    value = levels[-1]
    d1 = levels[-1] - levels[-2] if max_subdiv >= 1 else 0.0
    res = Integral(value=value, error=abs(d1), cells=cells, levels=levels)
    if gamma < 0 and touched:
        res.truncated = True
        if gamma <= -n:
            raise Divergent(f"weight exponent {gamma} <= -{n} on a region meeting E", partial=res)
        rho = _decay_ratio(levels)
        if rho is not None:
            res.ratio = rho
            # constant increments mean a logarithmic blow-up; allow fit noise
            if check_divergence and rho >= DIVERGENCE_RATIO and d1 > 1e-3 * abs(value):
                raise Divergent(f"refinement increments do not decay (ratio {rho:.3f})", partial=res)
            if extrapolate and rho < DIVERGENCE_RATIO:
                res.tail = d1 * rho / (1 - rho)
                res.value = value + res.tail
                res.error = abs(d1) + res.tail
    return res


# ---------------------------------------------------------------------------
# export


def write_csv(f: GridField, path) -> None:
    centers = f.centers()
    vals = f.values if f.values.ndim == 2 else f.values[:, None]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["index"] + [f"x{i}" for i in range(f.n)] + [f"v{j}" for j in range(vals.shape[1])]
        )
        for i, (c, v) in enumerate(zip(centers, vals)):
            w.writerow([i] + [repr(float(x)) for x in c] + [repr(float(x)) for x in v])


def write_binary(f: GridField, path) -> None:
    """Little-endian layout: b"FHLG", uint32 version=1, uint32 n,
    uint32 shape[n], float64 lower[n], float64 upper[n], float64 h,
    uint32 ncomp, then float64 values in C order (components innermost)."""
    vals = f.values if f.values.ndim == 2 else f.values[:, None]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", 1, f.n))
        fh.write(struct.pack(f"<{f.n}I", *f.shape))
        fh.write(struct.pack(f"<{f.n}d", *f.box.lower))
        fh.write(struct.pack(f"<{f.n}d", *f.box.upper))
        fh.write(struct.pack("<d", f.h))
        fh.write(struct.pack("<I", vals.shape[1]))
        fh.write(np.ascontiguousarray(vals, dtype="<f8").tobytes())


def read_binary(path) -> GridField:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError("not a GridField binary")
    version, n = struct.unpack_from("<II", data, 4)
    if version != 1:
        raise ValueError(f"unsupported version {version}")
    off = 12
    shape = struct.unpack_from(f"<{n}I", data, off)
    off += 4 * n
    lo = struct.unpack_from(f"<{n}d", data, off)
    off += 8 * n
    hi = struct.unpack_from(f"<{n}d", data, off)
    off += 8 * n
    (h,) = struct.unpack_from("<d", data, off)
    off += 8
    (k,) = struct.unpack_from("<I", data, off)
    off += 4
    vals = np.frombuffer(data, dtype="<f8", offset=off).reshape(-1, k).astype(float)
    if k == 1:
        vals = vals[:, 0]
    return GridField(Box(np.array(lo), np.array(hi)), tuple(shape), h, vals)
