"""Figures for CLI reports (matplotlib, Agg backend, PNG files)."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def covering_profiles(est, path):
    """log2 N against k for every sampled (centre, R), with the winning window."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for prof in est.profiles or []:
        ax.plot(prof["k"], prof["logN"], color="0.6", lw=0.8)
    ax.set_xlabel("k  (r = R 2^-k)")
    ax.set_ylabel("log2 N(E n B(x,R), r)")
    ax.set_title(f"{est.kind}: {est.value:.3f} +- {est.tol:.2f}")
    return _save(fig, path)


def constant_profile(rep, path):
    """Condition constants against scale with the fitted trend."""
    scales = np.array([r[0] for r in rep.constant_profile], dtype=float)
    consts = np.array([r[1] for r in rep.constant_profile], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ok = (scales > 0) & (consts > 0) & np.isfinite(consts)
    ax.loglog(scales[ok], consts[ok], "o", ms=4)
    ax.set_xlabel("scale")
    ax.set_ylabel("constant")
    ax.set_title(f"{rep.condition} s={rep.s:g}: {rep.verdict} (slope {rep.trend_slope:.3g})")
    return _save(fig, path)


def family_traces(traces, path):
    """kappa along each family against the concentration parameter."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for tr in traces:
        if tr.x:
            ax.loglog(tr.x, tr.kappa, "o-", ms=4, label=f"{tr.family} (slope {tr.slope:.2f})")
    ax.set_xlabel("concentration")
    ax.set_ylabel("kappa")
    ax.legend(fontsize=8)
    return _save(fig, path)


def ascent_trace(trace, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot([r.iteration for r in trace], [r.kappa for r in trace], "o-", ms=3)
    ax.set_xlabel("iteration")
    ax.set_ylabel("best kappa")
    return _save(fig, path)


def whitney_cubes(dec, path, E=None):
    """Outline of a planar decomposition, shaded by generation."""
    from matplotlib.patches import Rectangle

    cubes = list(dec)
    if not cubes or len(cubes[0].center) != 2:
        raise ValueError("only planar decompositions can be drawn")
    gens = [q.generation for q in cubes]
    g0, g1 = min(gens), max(gens)
    cmap = plt.get_cmap("viridis")
    fig, ax = plt.subplots(figsize=(5, 5))
    for q in cubes:
        t = 0.0 if g1 == g0 else (q.generation - g0) / (g1 - g0)
        ax.add_patch(Rectangle(
            (q.center[0] - q.side / 2, q.center[1] - q.side / 2), q.side, q.side,
            facecolor=cmap(t), edgecolor="k", lw=0.2,
        ))
    ax.set_xlim(dec.box.lower[0], dec.box.upper[0])
    ax.set_ylim(dec.box.lower[1], dec.box.upper[1])
    ax.set_aspect("equal")
    ax.set_title(f"{len(cubes)} cubes, generations {g0}..{g1}")
    return _save(fig, path)


def gallery_dimensions(report, path):
    """Estimated upper and lower Assouad dimensions per gallery set."""
    from .gallery import metadata

    rows = report["sets"]
    names = [r["set"] for r in rows]
    up = [r["assouad_upper"]["value"] for r in rows]
    lo = [r["assouad_lower"]["value"] for r in rows]
    truth_up = [metadata(nm)["dim_A"] for nm in names]
    truth_lo = [metadata(nm)["ldim_A"] for nm in names]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(max(5, 0.7 * len(names)), 4))
    ax.bar(x - 0.2, up, 0.4, label="upper estimate")
    ax.bar(x + 0.2, lo, 0.4, label="lower estimate")
    ax.plot(x - 0.2, truth_up, "k_", ms=14, mew=2, label="known")
    ax.plot(x + 0.2, truth_lo, "k_", ms=14, mew=2)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=45, ha="right")
    ax.set_ylabel("dimension")
    ax.set_ylim(0, max(3.0, math.ceil(max(up + [0]))))
    ax.legend(fontsize=8)
    return _save(fig, path)
