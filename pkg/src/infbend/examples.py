"""Built-in analytic examples, sampled at a requested resolution.

Every example carries exact jets, so finite differences only enter where the
library itself differentiates sampled data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_calculus import Grid, ScalarField, VecField, make_grid, make_grid3
from .hypersurface import (
    GaussPair, HypersurfaceSample, gauss_parametrize, pair_from_jets, pair_from_phi,
    sample_from_embedding,
)
from .pde_solvers import PhiFamily

KEYS = ("u", "v", "uu", "uv", "vv")


@dataclass(frozen=True, eq=False)
class Example:
    name: str
    hyp: HypersurfaceSample
    pair: GaussPair | None = None
    family: PhiFamily | None = None
    expected: str = ""


def _family(grid: Grid, kind: str, comps: dict, rotation=None) -> PhiFamily:
    """``comps`` maps jet keys ("" and KEYS) to arrays stacked (phi0, phi1, ...)."""
    comps = {k: np.asarray(v, float) for k, v in comps.items()}
    if rotation is not None:
        Q = np.asarray(rotation, float)
        comps = {k: np.concatenate([v[..., :1], v[..., 1:] @ Q.T], -1) for k, v in comps.items()}
    st = comps[""]
    M = ScalarField(grid, np.zeros(grid.shape))
    return PhiFamily(ScalarField(grid, st[..., 0]), VecField(grid, st[..., 1:]), kind, M,
                     {k: comps[k] for k in KEYS})


def clifford_family(grid: Grid, phi0: str = "quadratic", rotation=None) -> PhiFamily:
    """``phi = (cos u, sin u, cos v, sin v)``, ``M = 0``; ``|phi|^2 = 2``."""
    U, V = grid.mesh()
    z = np.zeros_like(U)
    c, s = np.cos, np.sin
    if phi0 == "quadratic":
        p0 = {"": U**2 + V**2, "u": 2 * U, "v": 2 * V, "uu": z + 2, "uv": z, "vv": z + 2}
    elif phi0 == "zero":
        p0 = {k: z for k in ("",) + KEYS}
    else:
        raise ValueError(f"unknown phi0 choice {phi0!r}")
    vec = {"": [c(U), s(U), c(V), s(V)], "u": [-s(U), c(U), z, z], "v": [z, z, -s(V), c(V)],
           "uu": [-c(U), -s(U), z, z], "uv": [z, z, z, z], "vv": [z, z, -c(V), -s(V)]}
    comps = {k: np.stack([p0[k]] + vec[k], -1) for k in vec}
    return _family(grid, "real", comps, rotation)


def elliptic_family(grid: Grid, rotation=None) -> PhiFamily:
    """Harmonic family ``phi = (1, u, v, u^2 - v^2)``, ``phi0 = uv`` (complex kind, ``M = 0``)."""
    U, V = grid.mesh()
    z, o = np.zeros_like(U), np.ones_like(U)
    comps = {"": np.stack([U * V, o, U, V, U**2 - V**2], -1),
             "u": np.stack([V, z, o, z, 2 * U], -1),
             "v": np.stack([U, z, z, o, -2 * V], -1),
             "uu": np.stack([z, z, z, z, 2 * o], -1),
             "uv": np.stack([o, z, z, z, z], -1),
             "vv": np.stack([z, z, z, z, -2 * o], -1)}
    return _family(grid, "complex", comps, rotation)


def nonbendable_family(grid: Grid) -> PhiFamily:
    """``phi = (1, u, v, u + v)`` with ``M = 0``: ``|phi|^2`` has ``(|phi|^2)_uv = 2``."""
    U, V = grid.mesh()
    z, o = np.zeros_like(U), np.ones_like(U)
    comps = {"": np.stack([z, o, U, V, U + V], -1),
             "u": np.stack([z, z, o, z, o], -1),
             "v": np.stack([z, z, z, o, o], -1),
             "uu": np.zeros(U.shape + (5,)), "uv": np.zeros(U.shape + (5,)),
             "vv": np.zeros(U.shape + (5,))}
    return _family(grid, "real", comps)


def _rot(rotation, *arrays):
    if rotation is None:
        return arrays
    Q = np.asarray(rotation, float)
    return tuple(a @ Q.T for a in arrays)


def clifford(n: int = 33, ns: int = 9, rotation=None) -> Example:
    grid = make_grid((-0.5, 0.5), (-0.5, 0.5), n, n)
    fam = clifford_family(grid, rotation=rotation)
    pair = pair_from_phi(fam)
    return Example("clifford", gauss_parametrize(pair, (-0.5, 0.5), ns), pair, fam, "hyperbolic")


def cone(n: int = 33, ns: int = 9, rotation=None) -> Example:
    """Clifford pair with ``gamma = 0``: the cone over a torus in the sphere."""
    grid = make_grid((-0.5, 0.5), (-0.5, 0.5), n, n)
    fam = clifford_family(grid, phi0="zero", rotation=rotation)
    pair = pair_from_phi(fam)
    return Example("cone", gauss_parametrize(pair, (0.2, 0.6), ns), pair, fam, "surface-like")


def elliptic_demo(n: int = 33, ns: int = 9, rotation=None) -> Example:
    grid = make_grid((-0.5, 0.5), (-0.5, 0.5), n, n)
    fam = elliptic_family(grid, rotation=rotation)
    pair = pair_from_phi(fam)
    return Example("elliptic-demo", gauss_parametrize(pair, (-0.3, 0.3), ns), pair, fam, "elliptic")


def cylinder(n: int = 33, ns: int = 9, rotation=None) -> Example:
    """``g`` in the equatorial two-sphere, ``gamma = 1``: a round cylinder over S^2."""
    grid = make_grid((-0.5, 0.5), (-0.5, 0.5), n, n)
    U, V = grid.mesh()
    z = np.zeros_like(U)
    cu, su, cv, sv = np.cos(U), np.sin(U), np.cos(V), np.sin(V)
    h = {"": [cu * cv, su * cv, sv, z], "u": [-su * cv, cu * cv, z, z],
         "v": [-cu * sv, -su * sv, cv, z], "uu": [-cu * cv, -su * cv, z, z],
         "uv": [su * sv, -cu * sv, z, z], "vv": [-cu * cv, -su * cv, -sv, z]}
    h = {k: _rot(rotation, np.stack(v, -1))[0] for k, v in h.items()}
    gam = {"": z + 1.0, **{k: z for k in KEYS}}
    pair = pair_from_jets(grid, h, gam)
    return Example("cylinder", gauss_parametrize(pair, (-0.5, 0.5), ns), pair, None, "surface-like")


def ruled_curves(t: np.ndarray) -> dict:
    """Orthonormal ``n1, n2`` and the curve ``c`` with two derivatives each."""
    z = np.zeros_like(t)
    ct, st = np.cos(t), np.sin(t)
    n1 = [np.stack([ct, st, z, z], -1), np.stack([-st, ct, z, z], -1), np.stack([-ct, -st, z, z], -1)]
    n2 = [np.stack([z, z, ct, st], -1), np.stack([z, z, -st, ct], -1), np.stack([z, z, -ct, -st], -1)]
    c = [np.stack([z + 1.0, 0.5 * t, 0.5 * t**2, z], -1), np.stack([z, z + 0.5, t, z], -1),
         np.stack([z, z, z + 1.0, z], -1)]
    return {"n1": n1, "n2": n2, "c": c}


def ruled_demo(n: int = 33, ns: int = 9, rotation=None) -> Example:
    """``g(t, a) = cos a n1(t) + sin a n2(t)`` and ``gamma = <c(t), g>``.

    For fixed ``t`` every hyperplane of the family contains the affine plane
    ``c(t) + span{n1, n2}^perp``, so the envelope is ruled by planes.
    """
    grid = make_grid((-0.4, 0.4), (-0.4, 0.4), n, n)
    T, Aa = grid.mesh()
    cur = ruled_curves(T)
    n1, n2, c = cur["n1"], cur["n2"], cur["c"]
    ca, sa = np.cos(Aa)[..., None], np.sin(Aa)[..., None]
    g = {"": ca * n1[0] + sa * n2[0], "u": ca * n1[1] + sa * n2[1], "v": -sa * n1[0] + ca * n2[0],
         "uu": ca * n1[2] + sa * n2[2], "uv": -sa * n1[1] + ca * n2[1]}
    g["vv"] = -g[""]
    dot = lambda x, y: np.einsum("...d,...d", x, y)  # noqa: E731
    gam = {"": dot(c[0], g[""]), "u": dot(c[1], g[""]) + dot(c[0], g["u"]), "v": dot(c[0], g["v"]),
           "uu": dot(c[2], g[""]) + 2 * dot(c[1], g["u"]) + dot(c[0], g["uu"]),
           "uv": dot(c[1], g["v"]) + dot(c[0], g["uv"]), "vv": -dot(c[0], g[""])}
    g = {k: _rot(rotation, v)[0] for k, v in g.items()}
    pair = pair_from_jets(grid, g, gam)
    return Example("ruled-demo", gauss_parametrize(pair, (0.8, 1.6), ns), pair, None, "ruled")


def sphere_patch(n: int = 17, ns: int = 9, rotation=None) -> Example:
    """Unit three-sphere in spherical coordinates; rank three everywhere."""
    chart = make_grid3((-0.4, 0.4), (-0.4, 0.4), (-0.4, 0.4), n, n, ns)
    U, V, S = chart.mesh()
    cu, su, cv, sv, cs, ss = np.cos(U), np.sin(U), np.cos(V), np.sin(V), np.cos(S), np.sin(S)
    z = np.zeros_like(U)
    psi = np.stack([cs * cv * cu, cs * cv * su, cs * sv, ss], -1)
    fu = np.stack([-cs * cv * su, cs * cv * cu, z, z], -1)
    fv = np.stack([-cs * sv * cu, -cs * sv * su, cs * cv, z], -1)
    fs = np.stack([-ss * cv * cu, -ss * cv * su, -ss * sv, cs], -1)
    psi, fu, fv, fs = _rot(rotation, psi, fu, fv, fs)
    frame = np.stack([fu, fv, fs], -2)
    hyp = sample_from_embedding(chart, psi, frame, psi, frame)
    return Example("sphere-patch", hyp, None, None, "rank-3")


REGISTRY = {
    "clifford": clifford,
    "cone": cone,
    "cylinder": cylinder,
    "elliptic-demo": elliptic_demo,
    "ruled-demo": ruled_demo,
    "sphere-patch": sphere_patch,
}


def build_example(name: str, n: int | None = None, ns: int | None = None, rotation=None) -> Example:
    try:
        fn = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown example {name!r}; choose from {sorted(REGISTRY)}") from None
    kw = {}
    if n is not None:
        kw["n"] = n
    if ns is not None:
        kw["ns"] = ns
    return fn(rotation=rotation, **kw)


def random_rotation(dim: int = 4, seed: int = 0) -> np.ndarray:
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
