"""Slow, independent reference computations used to cross-check the fast
paths: exact minimal covers, plain midpoint sums and exhaustive small-grid
maximisation of the Hardy-Sobolev ratio."""
from __future__ import annotations

import itertools
import math

import numpy as np

from .field import Ball
from .hardy import HardyParams
from .setmodel import SetHandle


class TooLarge(ValueError):
    pass


MAX_POINTS = 2000
EXACT_LIMIT = 25


def brute_covering(points, center, R: float, r: float, flagged: list | None = None) -> int:
    """Minimal number of open r-balls centred at points of the set that cover
    its part inside the closed ball B(center, R).

    Exact (branch and bound) for at most 25 points in the ball; above that
    the greedy-plus-search result is an upper bound and a note is appended
    to `flagged`."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) > MAX_POINTS:
        raise TooLarge(f"{len(pts)} points; the limit is {MAX_POINTS}")
    if len(pts) == 0:
        return 0
    c = np.asarray(center, dtype=float)
    inside = pts[np.sqrt(np.sum((pts - c) ** 2, axis=1)) <= R * (1 + 1e-12)]
    m = len(inside)
    if m == 0:
        return 0
    D = np.sqrt(np.sum((inside[:, None, :] - inside[None, :, :]) ** 2, axis=2))
    # covers[i] = bitmask of ball points within distance < r of candidate centre i
    covers = []
    for i in range(m):
        mask = 0
        for j in range(m):
            if D[i, j] < r:
                mask |= 1 << j
        covers.append(mask)
    full = (1 << m) - 1

    # greedy upper bound
    left, greedy = full, 0
    while left:
        best = max(covers, key=lambda s: bin(s & left).count("1"))
        left &= ~best
        greedy += 1
    if m > EXACT_LIMIT:
        if flagged is not None:
            flagged.append(f"{m} points in the ball: greedy value, not certified minimal")
        return greedy

    best = [greedy]

    def search(left, used):
        if not left:
            best[0] = min(best[0], used)
            return
        if used + 1 >= best[0]:
            return
        # branch on the covers of the lowest uncovered point
        j = (left & -left).bit_length() - 1
        for i in range(m):
            if covers[i] >> j & 1:
                search(left & ~covers[i], used + 1)

    search(full, 0)
    return best[0]


def riemann_integral(gamma: float, E: SetHandle, ball: Ball, subdivisions: int = 256) -> float:
    """Midpoint sum of dist(y, E)^gamma over the ball, on a uniform grid of
    the bounding cube with `subdivisions` cells per axis; cells count when
    their centre lies in the ball."""
    n = ball.n
    if n > 3:
        raise TooLarge("at most three dimensions")
    if subdivisions > 512:
        raise TooLarge("at most 512 cells per axis")
    h = 2 * ball.radius / subdivisions
    axis = -ball.radius + h * (np.arange(subdivisions) + 0.5)
    total = 0.0
    # one slab at a time keeps memory flat in 3D
    for x0 in axis:
        rest = list(np.meshgrid(*([axis] * (n - 1)), indexing="ij"))
        y = np.stack([np.full(rest[0].shape, x0)] + rest, axis=-1).reshape(-1, n) + ball.center
        y = y[np.sum((y - ball.center) ** 2, axis=1) < ball.radius**2]
        if len(y) == 0:
            continue
        d = np.asarray(E.distance(y), dtype=float)
        with np.errstate(divide="ignore"):
            total += float(np.sum(d**gamma)) if gamma != 0 else float(len(y))
    return total * h**n


class _TinyFunctional:
    """The same discrete ratio as fhlab.hardy.DiscreteFunctional, written out
    with loops so the two can be compared."""

    def __init__(self, E: SetHandle, params: HardyParams, lower, upper, shape):
        self.params = params
        self.shape = tuple(shape)
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        self.h = float((upper[0] - lower[0]) / shape[0])
        self.cells = list(itertools.product(*[range(s) for s in shape]))
        self.free = {}
        self.w = {}
        self.v = {}
        for idx in self.cells:
            c = lower + self.h * (np.array(idx) + 0.5)
            d = float(E.distance(c))
            self.free[idx] = d >= 0.5 * self.h
            if self.free[idx]:
                self.w[idx] = d**params.lhs_weight
                self.v[idx] = d**params.beta

    def value(self, f: dict) -> float:
        p, q = self.params.p, self.params.q
        vol = self.h ** len(self.shape)
        A = B = 0.0
        for idx in self.cells:
            if not self.free[idx]:
                continue
            fi = f.get(idx, 0.0)
            A += self.w[idx] * abs(fi) ** q * vol
            g2 = 0.0
            for ax in range(len(self.shape)):
                nb = list(idx)
                nb[ax] += 1
                nb = tuple(nb)
                fn = f.get(nb, 0.0) if nb in self.free and self.free[nb] else 0.0
                g2 += ((fn - fi) / self.h) ** 2
            B += self.v[idx] * g2 ** (p / 2) * vol
        if B <= 0:
            return float("nan")
        return A ** (1 / q) / B ** (1 / p)


def brute_rayleigh_max(
    E: SetHandle,
    params: HardyParams,
    lower,
    upper,
    cells: int = 3,
    starts: int = 20,
    seed: int = 0,
    steps=(0.5, 0.25, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001),
) -> float:
    """Largest discrete ratio over nonnegative grid functions with values in
    [0, 1], found by exhaustive coordinate search (every cell, every step
    size, both directions, until no move helps) from `starts` seeded random
    starts.  At most 9^n cells and n <= 2."""
    n = params.n
    if n > 2 or cells**n > 9**n or cells > 9:
        raise TooLarge("tiny grids only: n <= 2 and at most 9 cells per axis")
    J = _TinyFunctional(E, params, lower, upper, (cells,) * n)
    free = [c for c in J.cells if J.free[c]]
    if not free:
        return float("nan")
    rng = np.random.default_rng(seed)
    best = -math.inf
    for s in range(starts):
        f = {c: float(v) for c, v in zip(free, rng.random(len(free)))} if s else {c: 1.0 for c in free}
        val = J.value(f)
        for step in steps:
            moved = True
            while moved:
                moved = False
                for c in free:
                    for sgn in (1, -1):
                        old = f[c]
                        f[c] = min(max(old + sgn * step, 0.0), 1.0)
                        if f[c] == old:
                            continue
                        nv = J.value(f)
                        if np.isfinite(nv) and nv > val * (1 + 1e-13):
                            val, moved = nv, True
                        else:
                            f[c] = old
            # rescale so the largest value is 1 (the ratio is scale free)
            top = max(f.values())
            if top > 0:
                f = {c: v / top for c, v in f.items()}
        if np.isfinite(val):
            best = max(best, val)
    return best


def single_cell_ratio(E: SetHandle, params: HardyParams, lower, upper, cells: int, cell) -> float:
    """Discrete ratio of the function that is 1 on one cell and 0 elsewhere."""
    J = _TinyFunctional(E, params, lower, upper, (cells,) * params.n)
    return J.value({tuple(cell): 1.0})
