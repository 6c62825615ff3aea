"""Bundled example sets with their known dimensions, and the gallery sweep.

Each entry holds a set spec plus ground-truth metadata:

    dim_A    upper Assouad dimension
    ldim_A   lower Assouad dimension
    dim_H    Hausdorff dimension
    ldim_M   lower Minkowski dimension (bounded sets; for tiled sets, of one tile)
    regular  lambda when the set is lambda-regular, else None
    porous
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .setmodel import SetHandle, SetSpec, build_set

CANTOR_DIM = math.log(2) / math.log(3)


def _spec(kind, params=None, children=()):
    return SetSpec(kind, dict(params or {}), tuple(children))


def _meta(dim_A, ldim_A, dim_H, ldim_M, regular=None, porous=True):
    return {"dim_A": dim_A, "ldim_A": ldim_A, "dim_H": dim_H, "ldim_M": ldim_M, "regular": regular, "porous": porous}


GALLERY = {
    "origin2": (_spec("Points", {"points": [[0.0, 0.0]]}), _meta(0, 0, 0, 0, 0)),
    "origin3": (_spec("Points", {"points": [[0.0, 0.0, 0.0]]}), _meta(0, 0, 0, 0, 0)),
    "line3": (_spec("Subspace", {"m": 1, "n": 3}), _meta(1, 1, 1, None, 1)),
    "hyperplane2": (_spec("Subspace", {"m": 1, "n": 2}), _meta(1, 1, 1, None, 1)),
    "hyperplane3": (_spec("Subspace", {"m": 2, "n": 3}), _meta(2, 2, 2, None, 2)),
    "sphere": (_spec("Sphere", {"center": [0.0, 0.0, 0.0], "radius": 1.0}), _meta(2, 2, 2, 2, 2)),
    "cantor": (
        _spec("IFS", {"maps": [[1 / 3, 0.0], [1 / 3, 2 / 3]]}),
        _meta(CANTOR_DIM, CANTOR_DIM, CANTOR_DIM, CANTOR_DIM, CANTOR_DIM),
    ),
    "segment": (
        _spec("Product", {}, [_spec("AxisBox", {"lower": [0.0], "upper": [1.0]}), _spec("Points", {"points": [[0.0]]})]),
        _meta(1, 1, 1, 1, 1),
    ),
    "e0": (_spec("ReciprocalSequence"), _meta(1, 0, 0, 0.5, None, porous=True)),
    "tiled_e0": (
        _spec("Tile", {"period": [1.0, 0.0, 0.0]}, [_spec("ReciprocalSequence", {"ambient": 3})]),
        _meta(1, 0, 0, 0.5, None, porous=True),
    ),
}

BOUNDED = ("origin2", "origin3", "sphere", "cantor", "segment", "e0")


def names() -> list[str]:
    return list(GALLERY)


def spec(name: str) -> SetSpec:
    return GALLERY[name][0]


def metadata(name: str) -> dict:
    return dict(GALLERY[name][1])


def load(name: str, sample_budget: int = 2**14) -> SetHandle:
    if name not in GALLERY:
        raise KeyError(f"unknown gallery set {name!r}; choose from {', '.join(GALLERY)}")
    return build_set(GALLERY[name][0], sample_budget)


def export(directory) -> list[Path]:
    """Write every gallery spec as <name>.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for name, (sp, _) in GALLERY.items():
        p = d / f"{name}.json"
        sp.save(p)
        out.append(p)
    return out


# ---------------------------------------------------------------------------
# sweep

# (n, p, q, beta) combinations checked for every set of matching dimension
VERDICT_GRID = {
    2: [(2, 1.5, q, b) for q in (1.5, 2.0, 3.0) for b in (-0.5, 0.0, 0.5, 1.0)],
    3: [(3, 2.0, q, b) for q in (2.0, 2.5, 3.0) for b in (-1.0, 0.0, 0.5, 1.0, 2.0)]
    + [(3, 2.5, 2.5, 0.0)],
}


# flat sets of dimension >= 2 are costly to cover and statistically uniform,
# so they get fewer centres and radii in the sweep
LIGHT = {"hyperplane3": dict(centers=4, R_levels=2)}


def _dims_for(name: str, seed: int) -> dict:
    from .dimension import estimate_assouad, estimate_minkowski

    E = load(name)
    row = {"set": name, "n": E.n}
    kw = dict(LIGHT.get(name, {}), seed=seed)
    up, lo = estimate_assouad(E, **kw)
    row["assouad_upper"] = up.to_dict()
    row["assouad_lower"] = lo.to_dict()
    mk = None
    if E.bounded and E.diameter > 0:
        mk_up, mk_lo = estimate_minkowski(E)
        row["minkowski_upper"] = mk_up.to_dict()
        row["minkowski_lower"] = mk_lo.to_dict()
        mk = mk_lo
    return {"row": row, "estimates": (up, lo, mk), "E": E}


def run_gallery(seed: int = 0, threads: int = 1, sets=None) -> dict:
    """Dimension estimates for every gallery set, the verdict of each rule
    set on a parameter grid (from estimates, and from metadata), and the
    rule-soundness summary.  Results are ordered by set name, so the report
    does not depend on `threads`."""
    from .hardy import HardyParams
    from .verdict import dims_from_estimates, predict

    chosen = list(sets or GALLERY)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda nm: _dims_for(nm, seed), chosen))
    else:
        parts = [_dims_for(nm, seed) for nm in chosen]
    report = {"seed": seed, "sets": [], "verdicts": [], "conflicts": 0}
    for name, part in zip(chosen, parts):
        report["sets"].append(part["row"])
        up, lo, mk = part["estimates"]
        E = part["E"]
        meta = metadata(name)
        for prm in VERDICT_GRID.get(E.n, []):
            params = HardyParams(*prm)
            for source in ("estimate", "metadata"):
                given = meta if source == "metadata" else {"porous": meta["porous"], "dim_H": meta["dim_H"]}
                ds = dims_from_estimates(up, lo, mk, E=E, meta=given)
                v = predict(params, ds)
                report["verdicts"].append({
                    "set": name, "source": source, "n": prm[0], "p": prm[1], "q": prm[2], "beta": prm[3],
                    "prediction": v.prediction, "rule": v.rule, "fired": [f["rule"] + ":" + f["prediction"] for f in v.fired],
                    "conflict": v.conflict,
                })
                report["conflicts"] += int(v.conflict)
    return report
