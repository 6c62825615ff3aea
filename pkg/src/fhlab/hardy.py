"""Weighted Hardy-Sobolev functionals: exponent bookkeeping, evaluation of
both sides for a test function, bundled test-function families and lower
bounds for the best constant.

For exponents (n, p, q, beta) and a closed set E the functional is

    kappa(f) = (int |f|^q d^w)^(1/q) / (int |grad f|^p d^beta)^(1/p),
    w = (q/p)(n - p + beta) - n,   d = dist(., E).

Integrals of radial or axially symmetric data over a point, a sphere or a
line are reduced to one- or two-dimensional quadrature (scipy.integrate.quad
with algebraic end-point weights); everything else goes through the adaptive
grid quadrature in :mod:`fhlab.field`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize
from scipy.special import gamma as gamma_fn

from .field import Box, Divergent, GridField, integrate_weighted, grid_centers, make_grid
from .setmodel import SetHandle, _Points, _Sphere, _Subspace, sample_points


class DegenerateExponent(ValueError):
    pass


class ResolutionTooCoarse(ValueError):
    pass


# ---------------------------------------------------------------------------
# exponents


@dataclass(frozen=True)
class HardyParams:
    n: int
    p: float
    q: float
    beta: float = 0.0

    def violations(self) -> list[str]:
        out = []
        if not 1 <= self.p <= self.q:
            out.append("need 1 <= p <= q")
        if not self.p < self.n:
            out.append("need p < n")
        elif self.q > self.n * self.p / (self.n - self.p) + 1e-12:
            out.append("q above the Sobolev exponent np/(n-p)")
        return out

    @property
    def p_star(self) -> float:
        return self.n * self.p / (self.n - self.p) if self.p < self.n else math.inf

    @property
    def lhs_weight(self) -> float:
        return (self.q / self.p) * (self.n - self.p + self.beta) - self.n


@dataclass
class DerivedExponents:
    p_star: float
    lhs_weight: float
    alpha: float
    alpha_prime: float
    q_hat: float
    beta_hat: float
    extra_bound: float
    thin_threshold: float
    identity_residual: float = float("nan")
    flags: list = field(default_factory=list)


def exponent_algebra(params: HardyParams, strict: bool = False) -> DerivedExponents:
    """All derived exponents of `params`.

    alpha = p^2/(np - nq + qp) is infinite at q = p* and alpha' = alpha/(alpha - 1)
    is infinite at q = p; such values are flagged, and raised as
    DegenerateExponent when `strict`."""
    n, p, q, b = params.n, params.p, params.q, params.beta
    flags = list(params.violations())
    ps = params.p_star
    den = n * p - n * q + q * p
    if den == 0:
        alpha = math.inf
        flags.append("alpha undefined: np - nq + qp = 0 (q = p*)")
    else:
        alpha = p * p / den
    if alpha == 1:
        alpha_p = math.inf
        flags.append("alpha' degenerate: alpha = 1 (q = p)")
    elif math.isinf(alpha):
        alpha_p = 1.0
    else:
        alpha_p = alpha / (alpha - 1)
    q_hat = 1.0 / (1 - 1 / p + 1 / q)
    beta_hat = q * (n - p + b) / (q_hat * p) - n + 1
    extra = (p - 1) * (q * p + n * p - n * q) / (q * p + p - q)
    thin = min((q / p) * (n - p + b), n - 1)
    resid = float("nan")
    if p < n and p < q < ps:
        resid = 1 / (q * alpha) + (n / (n - p)) / (q * alpha_p) - 1 / p
        if abs(resid) > 1e-12:
            raise AssertionError(f"interpolation identity off by {resid}")
    if strict and any(f.startswith("alpha") for f in flags):
        raise DegenerateExponent("; ".join(flags))
    return DerivedExponents(ps, params.lhs_weight, alpha, alpha_p, q_hat, beta_hat, extra, thin, resid, flags)


# ---------------------------------------------------------------------------
# test functions


@dataclass
class RadialProfile:
    """f(x) = r^a g(r), r = |x - center|; dg(r) = |f'(r)| / r^(a-1) (a != 0)
    or |f'(r)| (a == 0).  g vanishes for r >= support."""

    g: Callable
    dg: Callable
    a: float
    support: float
    kinks: tuple = ()


@dataclass
class AxialProfile:
    """f(x) = rho^a F(t, rho) about the line through `center` along e1, with
    t = x1 - c1 and rho the distance to that line; G = |grad f| / rho^(a-1)
    (a != 0) or |grad f| (a == 0).  f vanishes for |x - center| >= support."""

    F: Callable
    G: Callable
    a: float
    support: float
    kinks: tuple = ()  # radii |x - center| where the profile has kinks


@dataclass
class TestFunction:
    family: str  # Bump | SphereFj | RadialPower | Custom
    params: dict
    center: np.ndarray
    support: float
    value: Callable
    grad_norm: Callable
    radial: RadialProfile | None = None
    axial: AxialProfile | None = None
    scale: float = 1.0

    def scaled(self, c: float) -> "TestFunction":
        """c * f."""
        out = TestFunction(
            self.family, dict(self.params), self.center, self.support,
            lambda x, v=self.value: c * v(x), lambda x, g=self.grad_norm: abs(c) * g(x),
            self.radial, self.axial, self.scale * c,
        )
        return out

    def box(self, pad: float = 1.0) -> Box:
        return Box.cube(self.center, self.support * pad)

    def realize(self, box: Box | None = None, resolution: int = 64) -> tuple[GridField, GridField]:
        """Cell-centre samples of f and |grad f|."""
        box = box or self.box()
        gbox, shape, h = make_grid(box, resolution)
        c = grid_centers(gbox, shape)
        f = GridField(gbox, shape, h, self.value(c).reshape(shape))
        g = GridField(gbox, shape, h, self.grad_norm(c).reshape(shape))
        return f, g


def _quintic_step(u):
    """1 at u <= 0, 0 at u >= 1, C^2 in between."""
    u = np.clip(u, 0.0, 1.0)
    return 1 - u**3 * (10 - 15 * u + 6 * u * u)


def _quintic_step_slope(u):
    u = np.clip(u, 0.0, 1.0)
    return 30 * u * u * (1 - u) ** 2


def _radial_function(family, params, center, prof: RadialProfile) -> TestFunction:
    center = np.asarray(center, dtype=float)

    def r_of(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.sqrt(np.sum((x - center) ** 2, axis=1))

    a = prof.a

    def value(x):
        r = r_of(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = prof.g(r) * (r**a if a != 0 else 1.0)
        return np.where(r < prof.support, np.nan_to_num(out, posinf=0.0), 0.0)

    def grad(x):
        r = r_of(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = prof.dg(r) * (r ** (a - 1) if a != 0 else 1.0)
        return np.where(r < prof.support, np.nan_to_num(out, posinf=0.0), 0.0)

    return TestFunction(family, params, center, prof.support, value, grad, radial=prof)


def family_bump(center, r: float, resolution: int | None = None, profile: str = "quintic") -> TestFunction:
    """phi(|x - center| / r) with phi = 1 on [0, 1] and 0 beyond 2 (quintic
    ramp, |grad f| <= 1.875/r), or the tent max(0, 1 - |x - center|/r) when
    profile == "tent"."""
    if r <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=float)
    if profile == "tent":
        prof = RadialProfile(
            g=lambda t: np.clip(1 - np.asarray(t) / r, 0.0, None),
            dg=lambda t: np.where(np.asarray(t) < r, 1.0 / r, 0.0),
            a=0.0, support=r, kinks=(),
        )
    elif profile == "quintic":
        prof = RadialProfile(
            g=lambda t: _quintic_step(np.asarray(t) / r - 1),
            dg=lambda t: _quintic_step_slope(np.asarray(t) / r - 1) / r,
            a=0.0, support=2 * r, kinks=(r,),
        )
    else:
        raise ValueError(f"unknown bump profile {profile!r}")
    params = {"center": center.tolist(), "r": r, "profile": profile}
    tf = _radial_function("Bump", params, center, prof)
    _attach_axial_from_radial(tf)
    return tf


def _attach_axial_from_radial(tf: TestFunction) -> None:
    """Radial functions with a = 0 are also axial about the e1 line through
    their centre."""
    prof = tf.radial
    if prof is None or prof.a != 0:
        return
    tf.axial = AxialProfile(
        F=lambda t, rho: prof.g(np.sqrt(t * t + rho * rho)),
        G=lambda t, rho: prof.dg(np.sqrt(t * t + rho * rho)),
        a=0.0, support=prof.support, kinks=prof.kinks,
    )


def family_sphere_fj(
    j: int,
    params: HardyParams | None = None,
    resolution: int | None = None,
    center=None,
    radius: float = 1.0,
) -> TestFunction:
    """Radial f_j for the sphere |x - center| = radius: 1 inside
    (1 - 2^(1-j)) radius, 0 outside (1 - 2^-j) radius, linear between."""
    if j < 2:
        raise ValueError("j must be at least 2")
    n = params.n if params is not None else 3
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    r1 = (1 - 2.0 ** (1 - j)) * radius
    r2 = (1 - 2.0**-j) * radius
    if resolution is not None:
        cells = (r2 - r1) / (2 * radius / resolution)
        if cells < 8:
            raise ResolutionTooCoarse(
                f"{cells:.2g} cells across the ramp; need resolution >= {16 * 2**j}"
            )
    slope = 1.0 / (r2 - r1)
    prof = RadialProfile(
        g=lambda t: np.clip((r2 - np.asarray(t)) * slope, 0.0, 1.0),
        dg=lambda t: np.where((np.asarray(t) > r1) & (np.asarray(t) < r2), slope, 0.0),
        a=0.0, support=r2, kinks=(r1,),
    )
    tf = _radial_function("SphereFj", {"j": j, "center": center.tolist(), "radius": radius}, center, prof)
    _attach_axial_from_radial(tf)
    return tf


def family_radial_power(center, gamma: float, R: float = 1.0, mode: str = "point") -> TestFunction:
    """d^-gamma * phi(|x - center| / R), phi the quintic cutoff (1 on [0,1],
    0 beyond 2); d is |x - center| (mode "point") or the distance to the e1
    line through center (mode "axis")."""
    center = np.asarray(center, dtype=float)
    a = -float(gamma)
    params = {"center": center.tolist(), "gamma": gamma, "R": R, "mode": mode}
    if mode == "point":
        phi = lambda t: _quintic_step(np.asarray(t) / R - 1)
        dphi = lambda t: -_quintic_step_slope(np.asarray(t) / R - 1) / R
        if a != 0:
            # f' = r^(a-1) (a phi + r phi')
            prof = RadialProfile(phi, lambda t: np.abs(a * phi(t) + np.asarray(t) * dphi(t)), a, 2 * R, (R,))
        else:
            prof = RadialProfile(phi, lambda t: np.abs(dphi(t)), 0.0, 2 * R, (R,))
        tf = _radial_function("RadialPower", params, center, prof)
        _attach_axial_from_radial(tf)
        return tf
    if mode != "axis":
        raise ValueError(f"unknown mode {mode!r}")

    def phi(t, rho):
        return _quintic_step(np.sqrt(t * t + rho * rho) / R - 1)

    def grad_smooth(t, rho):
        r = np.sqrt(t * t + rho * rho)
        dp = -_quintic_step_slope(r / R - 1) / R
        with np.errstate(divide="ignore", invalid="ignore"):
            ur = np.where(r > 0, rho / r, 0.0)
            ut = np.where(r > 0, t / r, 0.0)
        if a != 0:
            # grad f = rho^(a-1) [a phi e_rho + rho phi' x/r]
            c_rho = a * phi(t, rho) + rho * dp * ur
            c_t = rho * dp * ut
        else:
            c_rho = dp * ur
            c_t = dp * ut
        return np.sqrt(c_rho * c_rho + c_t * c_t)

    ax = AxialProfile(phi, grad_smooth, a, 2 * R, (R,))

    def split(x):
        x = np.atleast_2d(np.asarray(x, dtype=float)) - center
        return x[:, 0], np.sqrt(np.sum(x[:, 1:] ** 2, axis=1)), np.sqrt(np.sum(x**2, axis=1))

    def value(x):
        t, rho, r = split(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = phi(t, rho) * (rho**a if a != 0 else 1.0)
        return np.where(r < 2 * R, np.nan_to_num(out, posinf=0.0), 0.0)

    def grad(x):
        t, rho, r = split(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = grad_smooth(t, rho) * (rho ** (a - 1) if a != 0 else 1.0)
        return np.where(r < 2 * R, np.nan_to_num(out, posinf=0.0), 0.0)

    return TestFunction("RadialPower", params, center, 2 * R, value, grad, axial=ax)


def custom_function(value: Callable, grad_norm: Callable, center, support: float, params=None) -> TestFunction:
    return TestFunction("Custom", dict(params or {}), np.asarray(center, dtype=float), support, value, grad_norm)


# ---------------------------------------------------------------------------
# reduced quadrature


def _sphere_area(k: int) -> float:
    """Surface area of the unit sphere in R^k."""
    return 2 * math.pi ** (k / 2) / gamma_fn(k / 2)


def _geometry(E: SetHandle):
    node = E._node
    if isinstance(node, _Points) and len(node.pts) == 1:
        return ("point", np.asarray(node.pts[0], dtype=float))
    if isinstance(node, _Sphere):
        return ("sphere", node.c, node.rho)
    if isinstance(node, _Subspace) and node.m == 0:
        return ("point", node.offset)
    if isinstance(node, _Subspace) and node.m == 1:
        return ("line", node.offset)
    return None


def _seg_quad(S, a, b, ea, eb):
    """int_a^b S(r) (r - a)^ea (b - r)^eb dr."""
    if b <= a:
        return 0.0, 0.0
    for e, at in ((ea, a), (eb, b)):
        if e <= -1:
            probe = at + (b - a) * 1e-9 * (1 if at == a else -1)
            if abs(float(S(probe))) > 0:
                raise Divergent(f"non-integrable singularity of order {e:.3g} at {at:.6g}")
            e = 0.0
    ea = ea if ea > -1 else 0.0
    eb = eb if eb > -1 else 0.0
    if ea == 0 and eb == 0:
        v, err = quad(S, a, b, limit=200)
    else:
        v, err = quad(S, a, b, weight="alg", wvar=(ea, eb), limit=200)
    return v, err


def _radial_integral(S, e_origin: float, rho0: float | None, e_rho0: float, R: float, kinks) -> tuple[float, float]:
    """int_0^R S(r) r^e_origin |r - rho0|^e_rho0 dr, breaking at kinks."""
    pts = {0.0, R}
    pts.update(k for k in kinks if 0 < k < R)
    if rho0 is not None and 0 < rho0 < R:
        pts.add(rho0)
    pts = sorted(pts)
    total = err = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        ea = e_origin if a == 0 else (e_rho0 if rho0 is not None and a == rho0 else 0.0)
        eb = e_rho0 if rho0 is not None and b == rho0 else 0.0

        def h(r, a=a, b=b):
            v = S(r)
            if a != 0 and e_origin != 0:
                v = v * r**e_origin
            if rho0 is not None and e_rho0 != 0 and a != rho0 and b != rho0:
                v = v * abs(r - rho0) ** e_rho0
            return v

        v, e = _seg_quad(h, a, b, ea, eb)
        total += v
        err += e
    return total, err


def _axial_integral(S, e_rho: float, R: float, kinks, n: int) -> tuple[float, float]:
    """omega_{n-2} int int_{t^2 + rho^2 < R^2} S(t, rho) rho^(n-2+e_rho) drho dt."""
    errs = [0.0]

    def inner(t):
        top = math.sqrt(max(R * R - t * t, 0.0))
        if top <= 0:
            return 0.0
        cuts = sorted({math.sqrt(k * k - t * t) for k in kinks if abs(t) < k < R} | {0.0, top})
        tot = 0.0
        for i, (a, b) in enumerate(zip(cuts[:-1], cuts[1:])):
            ea = n - 2 + e_rho if i == 0 else 0.0
            if i == 0:
                v, e = _seg_quad(lambda rho: S(t, rho), a, b, ea, 0.0)
            else:
                v, e = _seg_quad(lambda rho: S(t, rho) * rho ** (n - 2 + e_rho), a, b, 0.0, 0.0)
            tot += v
            errs[0] += e
        return tot

    brk = sorted({-k for k in kinks if k < R} | {k for k in kinks if k < R})
    total, e = quad(inner, -R, R, points=brk or None, limit=200)
    return _sphere_area(n - 1) * total, _sphere_area(n - 1) * (e + errs[0])


def reduced_integral(f: TestFunction, E: SetHandle, which: str, k: float, e: float):
    """int |f|^k d^e (which == "f") or int |grad f|^k d^e (which == "grad")
    through a 1-D or 2-D reduction; None when no reduction applies."""
    geo = _geometry(E)
    if geo is None:
        return None
    n = E.n
    kind = geo[0]
    prof = f.radial
    if prof is not None and kind in ("point", "sphere") and np.allclose(geo[1], f.center):
        a = prof.a
        pw = (a if which == "f" else (a - 1 if a != 0 else 0.0)) * k
        fun = prof.g if which == "f" else prof.dg
        S = lambda r: np.abs(fun(r)) ** k
        if kind == "point":
            v, err = _radial_integral(S, pw + e + n - 1, None, 0.0, prof.support, prof.kinks)
        else:
            v, err = _radial_integral(S, pw + n - 1, geo[2], e, prof.support, prof.kinks)
        return _sphere_area(n) * v, _sphere_area(n) * err
    ax = f.axial
    if ax is None:
        return None
    if kind == "line":
        off = np.asarray(geo[1], dtype=float)
        if not np.allclose(off[1:], f.center[1:]):
            return None
        a = ax.a
        pw = (a if which == "f" else (a - 1 if a != 0 else 0.0)) * k
        fun = ax.F if which == "f" else ax.G
        S = lambda t, rho: abs(float(fun(t, rho))) ** k
        return _axial_integral(S, pw + e, ax.support, ax.kinks, n)
    if kind == "point" and ax.a == 0:
        # radial data about a point that is not E: axis through both
        L = float(np.linalg.norm(geo[1] - f.center))
        if L < ax.support or n < 2:
            return None
        fun = ax.F if which == "f" else ax.G

        def S(t, rho):
            d = math.sqrt((t - L) ** 2 + rho * rho)
            return abs(float(fun(t, rho))) ** k * d**e

        return _axial_integral(S, 0.0, ax.support, ax.kinks, n)
    return None


# ---------------------------------------------------------------------------
# functional


@dataclass
class SideValues:
    lhs_integral: float
    rhs_integral: float
    lhs_root: float
    rhs_root: float
    ratio: float
    lhs_error: float = 0.0
    rhs_error: float = 0.0
    method: str = ""
    flags: list = field(default_factory=list)
    label: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _sides(lhs, rhs, params, lerr=0.0, rerr=0.0, method="", label="") -> SideValues:
    lr = max(lhs, 0.0) ** (1 / params.q)
    rr = max(rhs, 0.0) ** (1 / params.p)
    flags = []
    if rr > 0:
        ratio = lr / rr
    else:
        ratio = float("nan")
        flags.append("zero rhs: ratio undefined")
    return SideValues(lhs, rhs, lr, rr, ratio, lerr, rerr, method, flags, label)


def weighted_integral(f: TestFunction, E: SetHandle, which: str, k: float, e: float, method: str = "auto",
                      resolution: int = 32, max_subdiv: int = 5, threads: int = 1):
    """(value, error, method) of int |f|^k d^e or int |grad f|^k d^e."""
    if method in ("auto", "reduced"):
        red = reduced_integral(f, E, which, k, e)
        if red is not None:
            return red[0], red[1], "reduced"
        if method == "reduced":
            raise ValueError("no symmetry reduction for this set and function")
    fun = f.value if which == "f" else f.grad_norm
    I = integrate_weighted(E, f.box(1.0 + 1e-9), e, f=fun, power=k, resolution=resolution,
                           max_subdiv=max_subdiv, threads=threads)
    return I.value, I.error, "grid"


def evaluate_functional(
    f: TestFunction,
    E: SetHandle,
    params: HardyParams,
    resolution: int = 32,
    max_subdiv: int = 5,
    method: str = "auto",
    threads: int = 1,
) -> SideValues:
    """Both sides of the (q, p, beta) inequality for f.  Raises Divergent
    with the offending side in the message."""
    if E.n != params.n:
        raise ValueError("set dimension differs from params.n")
    kw = dict(method=method, resolution=resolution, max_subdiv=max_subdiv, threads=threads)
    try:
        lhs, le, m1 = weighted_integral(f, E, "f", params.q, params.lhs_weight, **kw)
    except Divergent as exc:
        raise Divergent(f"lhs: {exc}", getattr(exc, "partial", None)) from exc
    try:
        rhs, re_, m2 = weighted_integral(f, E, "grad", params.p, params.beta, **kw)
    except Divergent as exc:
        raise Divergent(f"rhs: {exc}", getattr(exc, "partial", None)) from exc
    return _sides(lhs, rhs, params, le, re_, m1 if m1 == m2 else f"{m1}/{m2}", f.family)


# ---------------------------------------------------------------------------
# discrete functional on a grid (used by GridAscent)


class DiscreteFunctional:
    """kappa of nonnegative cell values f on a grid:

        A = sum w_i f_i^q h^n,  B = sum v_i |D+ f|_i^p h^n,
        w = d^lhs_weight, v = d^beta at cell centres,

    with forward differences and zero values outside the grid.  Cells whose
    centre is within h/2 of E are pinned to zero."""

    def __init__(self, E: SetHandle, params: HardyParams, box: Box, resolution: int):
        gbox, shape, h = make_grid(box, resolution)
        self.shape, self.h, self.params, self.box = shape, h, params, gbox
        c = grid_centers(gbox, shape)
        d = np.asarray(E.distance(c), dtype=float).reshape(shape)
        self.free = d >= 0.5 * h
        dd = np.where(self.free, d, 1.0)
        self.w = np.where(self.free, dd**params.lhs_weight, 0.0)
        self.v = np.where(self.free, dd**params.beta, 0.0)
        self.centers = c
        self.vol = h**params.n

    def _diffs(self, f):
        out = []
        for ax in range(f.ndim):
            pad = [(0, 0)] * f.ndim
            pad[ax] = (0, 1)
            fp = np.pad(f, pad)
            out.append((np.take(fp, range(1, f.shape[ax] + 1), axis=ax) - f) / self.h)
        return out

    def sides(self, x):
        f = np.where(self.free, x.reshape(self.shape), 0.0)
        q, p = self.params.q, self.params.p
        A = float(np.sum(self.w * np.abs(f) ** q)) * self.vol
        D = self._diffs(f)
        g2 = sum(di * di for di in D)
        B = float(np.sum(self.v * g2 ** (p / 2))) * self.vol
        return A, B

    def log_kappa_and_grad(self, x):
        q, p = self.params.q, self.params.p
        f = np.where(self.free, np.maximum(x.reshape(self.shape), 0.0), 0.0)
        A = float(np.sum(self.w * f**q)) * self.vol
        D = self._diffs(f)
        g2 = sum(di * di for di in D) + 1e-300
        B = float(np.sum(self.v * g2 ** (p / 2))) * self.vol
        if A <= 0 or B <= 0:
            return 0.0, np.zeros_like(x)
        dA = q * self.w * f ** (q - 1) * self.vol
        # dB/df: B = sum v (g2)^(p/2), d g2 / d D_k = 2 D_k, D_k = (f[i+e_k] - f[i]) / h
        coef = self.v * p * g2 ** (p / 2 - 1) * self.vol
        dB = np.zeros_like(f)
        for ax, Dk in enumerate(D):
            t = coef * Dk / self.h
            dB -= t
            # contribution to f[i+e_k] from cell i
            shifted = np.zeros_like(t)
            sl_dst = [slice(None)] * f.ndim
            sl_src = [slice(None)] * f.ndim
            sl_dst[ax] = slice(1, None)
            sl_src[ax] = slice(0, -1)
            shifted[tuple(sl_dst)] = t[tuple(sl_src)]
            dB += shifted
        val = math.log(A) / q - math.log(B) / p
        grad = dA / (q * A) - dB / (p * B)
        grad = np.where(self.free, grad, 0.0)
        return val, grad.ravel()

    def kappa(self, x) -> float:
        A, B = self.sides(x)
        return A ** (1 / self.params.q) / B ** (1 / self.params.p) if B > 0 else float("nan")


# ---------------------------------------------------------------------------
# best-constant estimation


@dataclass
class TraceRow:
    iteration: int
    kappa: float
    lhs: float
    rhs: float
    label: str = ""


def critical_power(E: SetHandle, params: HardyParams) -> tuple[float, str] | None:
    """Largest gamma for which d^-gamma near E keeps both sides finite, with
    d the distance to a point or a line; None for other sets."""
    geo = _geometry(E)
    if geo is None or geo[0] == "sphere":
        return None
    n_eff = params.n - (0 if geo[0] == "point" else 1)
    w, b, p, q = params.lhs_weight, params.beta, params.p, params.q
    return min((w + n_eff) / q, (b + n_eff) / p - 1), geo[0]


def family_members(E: SetHandle, params: HardyParams, budget: int, seed: int = 0, radius: float | None = None):
    """Deterministic candidate list; a larger budget yields a superset."""
    geo = _geometry(E)
    lists = []
    R0 = radius if radius is not None else (0.5 * E.diameter if E.bounded and E.diameter > 0 else 1.0)
    levels = range(0, 12)
    if geo is not None and geo[0] == "sphere":
        lists.append([("SphereFj", {"j": j}) for j in range(2, 14)])
    cp = critical_power(E, params)
    if cp is not None:
        gc, kind = cp
        mode = "point" if kind == "point" else "axis"
        lists.append([("RadialPower", {"gamma": gc - 2.0**-k, "mode": mode}) for k in range(1, 14)])
    pts = sample_points(E, 4, seed)
    lists.append([("Bump", {"center": pts[i % len(pts)].tolist(), "r": R0 * 2.0 ** -(i // len(pts))})
                  for i in range(4 * len(levels))])
    out = []
    i = 0
    while len(out) < budget and any(i < len(l) for l in lists):
        for l in lists:
            if i < len(l) and len(out) < budget:
                out.append(l[i])
        i += 1
    return out, geo, R0


def _make_member(name, prm, E, params, geo, R0) -> TestFunction:
    if name == "SphereFj":
        return family_sphere_fj(prm["j"], params, center=geo[1], radius=geo[2])
    if name == "RadialPower":
        return family_radial_power(geo[1], prm["gamma"], R=min(R0, 1.0), mode=prm["mode"])
    return family_bump(prm["center"], prm["r"])


def estimate_constant(
    E: SetHandle,
    params: HardyParams,
    strategy: str = "FamilySweep",
    budget: int = 24,
    seed: int = 0,
    resolution: int = 16,
    max_subdiv: int = 5,
    box: Box | None = None,
    starts: int = 8,
    trace_path=None,
) -> tuple[SideValues | None, list[TraceRow]]:
    """Best kappa found (a lower bound for the best constant, up to
    quadrature error) and the trace of evaluations or ascent iterations."""
    if strategy == "FamilySweep":
        members, geo, R0 = family_members(E, params, budget, seed)
        best, trace = None, []
        for it, (name, prm) in enumerate(members):
            f = _make_member(name, prm, E, params, geo, R0)
            try:
                sv = evaluate_functional(f, E, params, resolution=resolution, max_subdiv=max_subdiv)
            except Divergent:
                continue
            sv.label = f"{name} {prm}"
            if not np.isfinite(sv.ratio):
                continue  # zero rhs: not a ratio
            trace.append(TraceRow(it, sv.ratio, sv.lhs_integral, sv.rhs_integral, sv.label))
            if best is None or sv.ratio > best.ratio:
                best = sv
        if trace_path:
            write_trace(trace, trace_path)
        return best, trace
    if strategy == "GridAscent":
        return _grid_ascent(E, params, budget, seed, resolution, box, starts, trace_path)
    raise ValueError(f"unknown strategy {strategy!r}")


def _grid_ascent(E, params, budget, seed, resolution, box, starts, trace_path):
    if box is None:
        lo, hi = E.box
        box = Box(lo, hi)
    J = DiscreteFunctional(E, params, box, resolution)
    rng = np.random.default_rng(seed)
    size = int(np.prod(J.shape))
    inits = []
    # seed from the best family member sampled on the grid
    fam, _ = estimate_constant(E, params, "FamilySweep", budget=8, seed=seed)
    if fam is not None:
        members, geo, R0 = family_members(E, params, 8, seed)
        for name, prm in members:
            if fam.label.startswith(name) and str(prm) in fam.label:
                f = _make_member(name, prm, E, params, geo, R0)
                inits.append(np.nan_to_num(f.value(J.centers)))
                break
    inits.append(np.ones(size))
    for _ in range(starts):
        inits.append(rng.random(size))
    bounds = [(0.0, None)] * size
    best_x, best_val = None, -math.inf
    trace = []
    it = 0
    for x0 in inits:
        x0 = np.where(J.free.ravel(), x0, 0.0)
        if not np.any(x0 > 0):
            continue
        x0 = x0 / np.max(x0)
        res = minimize(_negated(J), x0, jac=True,
                       method="L-BFGS-B", bounds=bounds, options={"maxiter": max(budget, 1) * 20})
        x = np.maximum(res.x, 0.0)
        x = x / max(np.max(x), 1e-300)
        x, val = _polish(J, x, sweeps=2)
        A, B = J.sides(x)
        it += 1
        k = J.kappa(x)
        if np.isfinite(k) and k > best_val:
            best_val, best_x = k, x
        trace.append(TraceRow(it, best_val, A, B, "GridAscent"))
    if best_x is None:
        return None, trace
    A, B = J.sides(best_x)
    sv = _sides(A, B, params, method="discrete", label="GridAscent")
    sv.flags.append(f"grid {J.shape}, h={J.h:.4g}")
    if trace_path:
        write_trace(trace, trace_path)
    return sv, trace


def _negated(J: DiscreteFunctional):
    def fun(x):
        v, g = J.log_kappa_and_grad(x)
        return -v, -g
    return fun


def _polish(J: DiscreteFunctional, x: np.ndarray, sweeps: int = 2):
    """Coordinate search on the normalised values; accepts only improvements."""
    x = x.copy()
    best = J.kappa(x)
    if not np.isfinite(best):
        return x, best
    free = np.flatnonzero(J.free.ravel())
    for _ in range(sweeps):
        improved = False
        for i in free:
            for step in (0.1, -0.1, 0.01, -0.01):
                old = x[i]
                x[i] = max(old + step, 0.0)
                k = J.kappa(x)
                if k > best * (1 + 1e-12):
                    best, improved = k, True
                else:
                    x[i] = old
        if not improved:
            break
    return x, best


def write_trace(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "kappa", "lhs", "rhs", "label"])
        for r in trace:
            w.writerow([r.iteration, repr(r.kappa), repr(r.lhs), repr(r.rhs), r.label])


def growth_slope(x, kappa) -> float:
    """Slope of log kappa against log x (x grows along the family)."""
    x = np.asarray(x, dtype=float)
    k = np.asarray(kappa, dtype=float)
    ok = (x > 0) & (k > 0) & np.isfinite(k)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(k[ok]), 1)[0])


# ---------------------------------------------------------------------------
# interpolation


def interpolation_bound(kappa_ppb: float, kappa_sob: float, params: HardyParams) -> float:
    """Upper bound kappa_ppb^(p/(q alpha)) * (kappa_sob (1 + |beta|/p kappa_ppb))^(p*/(q alpha'))
    for the (q, p, beta) constant in terms of the two end-point constants."""
    p, q, b = params.p, params.q, params.beta
    if not p < q < params.p_star:
        raise DegenerateExponent("interpolation needs p < q < p*")
    ex = exponent_algebra(params)
    first = kappa_ppb ** (p / (q * ex.alpha))
    second = (kappa_sob * (1 + abs(b) / p * kappa_ppb)) ** (ex.p_star / (q * ex.alpha_prime))
    return float(first * second)


@dataclass
class HolderCheck:
    middle: float
    first: float  # (int |f|^p d^(beta-p))^(1/(q alpha))
    second: float  # (int |f|^p* d^(n beta/(n-p)))^(1/(q alpha'))
    residual: float
    relative: float
    method: str = ""


def holder_step_check(f: TestFunction, E: SetHandle, params: HardyParams, method: str = "auto",
                      resolution: int = 32, max_subdiv: int = 5) -> HolderCheck:
    """Middle q-norm minus the product of the two interpolating factors;
    nonpositive up to quadrature error."""
    n, p, q, b = params.n, params.p, params.q, params.beta
    if not p < q < params.p_star:
        raise DegenerateExponent("the Hölder step needs p < q < p*")
    ex = exponent_algebra(params)
    kw = dict(method=method, resolution=resolution, max_subdiv=max_subdiv)
    mid, _, m = weighted_integral(f, E, "f", q, ex.lhs_weight, **kw)
    I1, _, _ = weighted_integral(f, E, "f", p, b - p, **kw)
    I2, _, _ = weighted_integral(f, E, "f", ex.p_star, n * b / (n - p), **kw)
    middle = mid ** (1 / q)
    first = I1 ** (1 / (q * ex.alpha))
    second = I2 ** (1 / (q * ex.alpha_prime))
    right = first * second
    resid = middle - right
    rel = resid / right if right > 0 else 0.0
    return HolderCheck(middle, first, second, resid, rel, m)


# ---------------------------------------------------------------------------
# one-parameter sweeps


@dataclass
class FamilyTrace:
    """kappa along a family; x grows as the family concentrates (1/r for
    bumps, 2^j for SphereFj, 1/(gamma_c - gamma) for powers)."""

    family: str
    x: list
    kappa: list
    skipped: list = field(default_factory=list)

    @property
    def slope(self) -> float:
        return growth_slope(self.x, self.kappa)

    def usable(self) -> int:
        return int(sum(1 for k in self.kappa if np.isfinite(k) and k > 0))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slope"] = self.slope
        return d


def sweep_family(
    E: SetHandle,
    params: HardyParams,
    family: str,
    values,
    center=None,
    method: str = "auto",
    resolution: int = 32,
    max_subdiv: int = 5,
) -> FamilyTrace:
    """kappa for each member of `family`:

    bump / tent      values are radii, centred at `center` (default: a landmark of E)
    sphere-fj        values are j; E must be a sphere
    radial-power     values are k with gamma = gamma_c - 2^-k (point or line E)
    """
    geo = _geometry(E)
    if center is None:
        lm = E.landmarks()
        center = lm[0] if len(lm) else sample_points(E, 1, 0)[0]
    xs, ks, skipped = [], [], []
    for v in values:
        if family in ("bump", "tent"):
            f = family_bump(center, v, profile="tent" if family == "tent" else "quintic")
            x = 1.0 / v
        elif family == "sphere-fj":
            if geo is None or geo[0] != "sphere":
                raise ValueError("sphere-fj needs a sphere")
            f = family_sphere_fj(int(v), params, center=geo[1], radius=geo[2])
            x = 2.0 ** int(v)
        elif family == "radial-power":
            cp = critical_power(E, params)
            if cp is None:
                raise ValueError("radial-power needs a point or a line")
            gc, kind = cp
            f = family_radial_power(geo[1], gc - 2.0**-v, mode="point" if kind == "point" else "axis")
            x = 2.0**v
        else:
            raise ValueError(f"unknown family {family!r}")
        try:
            sv = evaluate_functional(f, E, params, resolution=resolution, max_subdiv=max_subdiv, method=method)
        except Divergent as exc:
            skipped.append(f"{v}: {exc}")
            continue
        if not np.isfinite(sv.ratio):
            skipped.append(f"{v}: zero rhs")
            continue
        xs.append(x)
        ks.append(float(sv.ratio))
    return FamilyTrace(family, xs, ks, skipped)
