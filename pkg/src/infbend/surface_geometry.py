"""Jets of surfaces in the unit sphere, conjugate-coordinate checks and the
integrating factor / reduced potential of the characteristic equation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_calculus import (
    Grid, OneForm2, ScalarField, VecField, d1, d2, exactness_residual, path_integrate,
)
from .grid_calculus import NonClosedFormError


class NotSphericalError(ValueError):
    pass


class NotImmersedError(ValueError):
    pass


class IllConditionedMetricError(ValueError):
    pass


class NoSolutionError(ValueError):
    """The integrating-factor system has no solution (integrability fails)."""


DERIV_KEYS = ("u", "v", "uu", "uv", "vv")


@dataclass(frozen=True, eq=False)
class SurfaceJet:
    grid: Grid
    h: np.ndarray
    h_u: np.ndarray
    h_v: np.ndarray
    h_uu: np.ndarray
    h_uv: np.ndarray
    h_vv: np.ndarray
    kind: str = "unknown"

    @property
    def E(self) -> np.ndarray:
        return np.einsum("...i,...i", self.h_u, self.h_u)

    @property
    def F_metric(self) -> np.ndarray:
        return np.einsum("...i,...i", self.h_u, self.h_v)

    @property
    def G_metric(self) -> np.ndarray:
        return np.einsum("...i,...i", self.h_v, self.h_v)

    def metric(self) -> np.ndarray:
        """Per-node 2x2 metric matrix."""
        E, F, G = self.E, self.F_metric, self.G_metric
        return np.stack([np.stack([E, F], -1), np.stack([F, G], -1)], -2)

    def second(self) -> np.ndarray:
        """Per-node 2x2 array of second derivative vectors, shape (nu, nv, 2, 2, d)."""
        return np.stack([np.stack([self.h_uu, self.h_uv], -2),
                         np.stack([self.h_uv, self.h_vv], -2)], -3)

    def frame(self) -> np.ndarray:
        """Tangent vectors (h_u, h_v) stacked on axis -2."""
        return np.stack([self.h_u, self.h_v], -2)

    @property
    def ambient_dim(self) -> int:
        return self.h.shape[-1]


def build_jet(h_samples, derivatives: dict | None = None, kind: str = "unknown",
              tol: float = 1e-8) -> SurfaceJet:
    """Jet of ``h = i o g`` from unit-norm samples.

    Derivatives default to finite differences of the renormalised samples;
    tangent vectors are then projected onto ``h^perp``.
    """
    grid = h_samples.grid
    h = np.asarray(h_samples.values, float)
    r = np.linalg.norm(h, axis=-1)
    bad = np.max(np.abs(r - 1))
    if bad > tol:
        raise NotSphericalError(f"samples deviate from the unit sphere by {bad:.3e}")
    h = h / r[..., None]
    if derivatives is None:
        hu, hv = d1(h, 0, grid.hu), d1(h, 1, grid.hv)
        d = {"u": hu, "v": hv, "uu": d2(h, 0, grid.hu),
             "uv": 0.5 * (d1(hu, 1, grid.hv) + d1(hv, 0, grid.hu)), "vv": d2(h, 1, grid.hv)}
    else:
        d = {k: np.asarray(derivatives[k], float) for k in DERIV_KEYS}
    for k in ("u", "v"):
        d[k] = d[k] - np.einsum("...i,...i", d[k], h)[..., None] * h
    jet = SurfaceJet(grid, h, d["u"], d["v"], d["uu"], d["uv"], d["vv"], kind)
    E, F, G = jet.E, jet.F_metric, jet.G_metric
    det = E * G - F**2
    scale = np.maximum(E * G, 1e-300)
    if np.min(det / scale) <= 1e-12:
        idx = np.unravel_index(np.argmin(det / scale), det.shape)
        raise NotImmersedError(f"degenerate induced metric at node {tuple(int(i) for i in idx)}")
    return jet


def christoffel_symbols(jet: SurfaceJet, cond_max: float = 1e8) -> np.ndarray:
    """``Gam[..., k, i, j]`` of the induced metric, from ``<h_ij, h_l> = Gam^k_ij g_kl``."""
    G = jet.metric()
    cond = np.linalg.cond(G)
    if np.max(cond) > cond_max:
        idx = np.unravel_index(np.argmax(cond), cond.shape)
        raise IllConditionedMetricError(
            f"metric condition number {np.max(cond):.3e} at node {tuple(int(i) for i in idx)}")
    proj = np.einsum("...ijd,...ld->...ijl", jet.second(), jet.frame())
    return np.einsum("...kl,...ijl->...kij", np.linalg.inv(G), proj)


def normal_projector(jet: SurfaceJet) -> np.ndarray:
    """Orthogonal projector onto ``span{h, h_u, h_v}^perp`` per node."""
    basis = np.stack([jet.h, jet.h_u, jet.h_v], -1)  # (..., d, 3)
    q, _ = np.linalg.qr(basis)
    d = jet.ambient_dim
    return np.eye(d) - np.einsum("...ik,...jk->...ij", q, q)


def conjugate_residual(jet: SurfaceJet, kind: str) -> ScalarField:
    P = normal_projector(jet)
    if kind == "real":
        vec = jet.h_uv
    elif kind == "complex":
        vec = jet.h_uu + jet.h_vv
    else:
        raise ValueError(f"kind must be 'real' or 'complex', not {kind!r}")
    return ScalarField(jet.grid, np.linalg.norm(np.einsum("...ij,...j->...i", P, vec), axis=-1))


@dataclass(frozen=True, eq=False)
class ConjugateData:
    kind: str
    Gamma1: ScalarField
    Gamma2: ScalarField
    GammaC_re: ScalarField
    GammaC_im: ScalarField
    conj_residual: ScalarField
    integ_residual: ScalarField

    def omega(self) -> OneForm2:
        """One-form with ``d mu + 2 mu omega = 0``."""
        if self.kind == "real":
            return OneForm2(self.Gamma2, self.Gamma1)
        return OneForm2(2 * self.GammaC_re, 2 * self.GammaC_im)


def christoffels(jet: SurfaceJet, kind: str = "real") -> ConjugateData:
    """Christoffel data of a jet in (real or complex) conjugate coordinates.

    Real: ``nabla_u d_v = Gamma1 d_u + Gamma2 d_v``.  Complex: with
    ``d = (d_u - i d_v)/2``, ``nabla_d dbar = Gamma d + conj(Gamma) dbar`` gives
    ``Re Gamma = (Gam^u_uu + Gam^u_vv)/4`` and ``Im Gamma = (Gam^v_uu + Gam^v_vv)/4``.
    """
    g = jet.grid
    Gam = christoffel_symbols(jet)
    g1 = Gam[..., 0, 0, 1]
    g2 = Gam[..., 1, 0, 1]
    re = 0.25 * (Gam[..., 0, 0, 0] + Gam[..., 0, 1, 1])
    im = 0.25 * (Gam[..., 1, 0, 0] + Gam[..., 1, 1, 1])
    if kind == "real":
        integ = d1(g1, 0, g.hu) - d1(g2, 1, g.hv)
    elif kind == "complex":
        # Im(Gamma_z) with d_z = (d_u - i d_v)/2
        integ = 0.5 * (d1(im, 0, g.hu) - d1(re, 1, g.hv))
    else:
        raise ValueError(f"kind must be 'real' or 'complex', not {kind!r}")
    S = lambda a: ScalarField(g, a)  # noqa: E731
    return ConjugateData(kind, S(g1), S(g2), S(re), S(im), conjugate_residual(jet, kind), S(integ))


def integrability_tolerance(cdata: ConjugateData) -> float:
    g = cdata.Gamma1.grid
    sup = max(cdata.Gamma1.sup(), cdata.Gamma2.sup(), cdata.GammaC_re.sup(), cdata.GammaC_im.sup())
    return 50 * g.h**2 * (1 + sup)


def solve_mu(jet: SurfaceJet, cdata: ConjugateData, c: float = 1.0, base=(0, 0),
             tol: float | None = None) -> ScalarField:
    """Positive solution of ``d mu + 2 mu omega = 0`` with ``mu(base) = c``."""
    if c <= 0:
        raise ValueError("scale c must be positive")
    tol = integrability_tolerance(cdata) if tol is None else tol
    res = cdata.integ_residual.sup()
    if res > tol:
        raise NoSolutionError(
            f"integrability residual {res:.3e} exceeds {tol:.3e}; the integrating-factor system has no solution")
    try:
        pot = path_integrate(cdata.omega(), base=base, tol=np.inf)
    except NonClosedFormError as e:  # pragma: no cover - tol=inf
        raise NoSolutionError(str(e)) from e
    return ScalarField(jet.grid, c * np.exp(-2 * pot.values))


@dataclass(frozen=True, eq=False)
class ReducedData:
    mu: ScalarField
    M: ScalarField
    k: VecField
    form_residual: ScalarField


def reduced_potential(jet: SurfaceJet, cdata: ConjugateData, mu: ScalarField) -> ReducedData:
    """Potential ``M`` with ``k = sqrt(mu) h`` solving ``k_{z zbar} + M k = 0``."""
    g = jet.grid
    m = mu.values
    if np.min(m) <= 0:
        raise ValueError("mu must be positive")
    mu_u, mu_v = d1(m, 0, g.hu), d1(m, 1, g.hv)
    k = np.sqrt(m)[..., None] * jet.h
    if cdata.kind == "real":
        mu_uv = 0.5 * (d1(mu_u, 1, g.hv) + d1(mu_v, 0, g.hu))
        M = jet.F_metric - mu_uv / (2 * m) + mu_u * mu_v / (4 * m**2)
        lhs = d1(d1(k, 0, g.hu), 1, g.hv)
    else:
        F = 0.25 * (jet.E + jet.G_metric)
        mu_zzb = 0.25 * (d2(m, 0, g.hu) + d2(m, 1, g.hv))
        mu_z_mu_zb = 0.25 * (mu_u**2 + mu_v**2)
        M = F - mu_zzb / (2 * m) + mu_z_mu_zb / (4 * m**2)
        lhs = 0.25 * (d2(k, 0, g.hu) + d2(k, 1, g.hv))
    res = np.linalg.norm(lhs + M[..., None] * k, axis=-1)
    return ReducedData(mu, ScalarField(g, M), VecField(g, k), ScalarField(g, res))
