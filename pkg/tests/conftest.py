from __future__ import annotations

import functools

import pytest

from fhlab import gallery
from fhlab.setmodel import SetSpec, build_set


@functools.lru_cache(maxsize=None)
def _load(name):
    return gallery.load(name)


@pytest.fixture(scope="session")
def gal():
    """gal("sphere") -> cached SetHandle of a bundled set."""
    return _load


def make(kind, params=None, children=(), **kw):
    return build_set(SetSpec(kind, dict(params or {}), tuple(children)), **kw)


@functools.lru_cache(maxsize=None)
def assouad(name, seed=0):
    """(upper, lower) estimates for a gallery set, computed once per session."""
    from fhlab.dimension import estimate_assouad

    return estimate_assouad(_load(name), seed=seed, **gallery.LIGHT.get(name, {}))


@functools.lru_cache(maxsize=None)
def minkowski(name):
    from fhlab.dimension import estimate_minkowski

    return estimate_minkowski(_load(name))
