"""Rank-two hypersurfaces from Gauss pairs and envelopes of hyperplanes.

Conventions
-----------
* Chart ``(u, v, s)``: ``psi(u, v, s) = gamma h + h_* grad gamma + s xi`` where
  ``xi`` is the unit normal of ``g`` in the sphere (ambient dimension 4).
* ``A_chart`` is the shape operator as a 3x3 matrix acting on chart coordinate
  vectors, ``dN(d_i) = -psi_*(A d_i)``.
* ``j``: the quotient vector ``e`` goes to the chart vector ``j(e)`` with
  ``psi_* j(e) = h_* e``; stored as a 3x2 matrix per node.  Its (u, v) rows are
  ``P_w^{-1}``.
* Endomorphisms of the horizontal space are written in the basis of horizontal
  lifts ``X_a = d_a - <d_a, T> T`` (``T`` the unit nullity field), which project
  to ``d_u, d_v``; so they are literally the 2x2 matrices of their quotients.
* Elliptic orientation: ``J d_u`` has a positive ``d_v`` component.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid_calculus import (
    Grid, OneForm2, ScalarField, VecField, d1, d1_4, exactness_residual, make_grid3,
    path_integrate,
)
from .pde_solvers import PhiFamily, validate_family
from .surface_geometry import SurfaceJet, build_jet, christoffel_symbols


class NowhereRegularError(ValueError):
    pass


class InconsistentGeometryError(ValueError):
    pass


class DegenerateEnvelopeError(ValueError):
    pass


class RankError(ValueError):
    pass


class UnclassifiableError(ValueError):
    """No projectable trace-free tensor commutes with the splitting tensor."""


EPS_RANK = 1e-6
SPAN_GATE = 1e-3


def gate(h: float, scale: float = 0.0, factor: float = 100.0) -> float:
    return factor * h**2 * (1.0 + scale)


# -- small per-node linear algebra -----------------------------------------------

def cross4(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Generalised cross product in R^4: orthogonal to a, b, c; norm = 3-volume."""
    m = np.stack([a, b, c], axis=-2)
    out = np.empty(a.shape)
    for i in range(4):
        cols = [k for k in range(4) if k != i]
        out[..., i] = (-1) ** (i + 3) * np.linalg.det(m[..., cols])
    return out


def _ortho_factor(G: np.ndarray) -> np.ndarray:
    """``R`` with ``G = R^T R`` (upper Cholesky factor)."""
    return np.swapaxes(np.linalg.cholesky(G), -1, -2)


def to_orthonormal(E: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Matrix of an endomorphism in a G-orthonormal basis."""
    R = _ortho_factor(G)
    return R @ E @ np.linalg.inv(R)


def metric_adjoint(E: np.ndarray, G: np.ndarray) -> np.ndarray:
    return np.linalg.inv(G) @ np.swapaxes(E, -1, -2) @ G


# -- Gauss pairs ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussPair:
    jet: SurfaceJet
    gamma: ScalarField
    gamma_d: dict            # "u", "v", "uu", "uv", "vv" arrays
    grad_gamma: np.ndarray   # (nu, nv, 2) coordinate components
    hess_gamma: np.ndarray   # (nu, nv, 2, 2) endomorphism
    hess_lower: np.ndarray   # (nu, nv, 2, 2) bilinear form
    normal_frame: list       # VecFields
    christoffel: np.ndarray  # Gam[..., k, i, j] of g

    @property
    def grid(self) -> Grid:
        return self.jet.grid

    @property
    def n(self) -> int:
        return self.jet.ambient_dim - 1

    def second_form(self, a: int = 0) -> np.ndarray:
        """Lowered second fundamental form of g along the frame field ``a``."""
        xi = self.normal_frame[a].values
        return np.einsum("...ijd,...d->...ij", self.jet.second(), xi)

    def shape_operator(self, a: int = 0) -> np.ndarray:
        return np.linalg.inv(self.jet.metric()) @ self.second_form(a)

    def frame_residual(self) -> float:
        vecs = [f.values for f in self.normal_frame]
        base = [self.jet.h, self.jet.h_u, self.jet.h_v]
        worst = 0.0
        for i, x in enumerate(vecs):
            worst = max(worst, np.max(np.abs(np.einsum("...d,...d", x, x) - 1)))
            for y in base + vecs[:i]:
                worst = max(worst, np.max(np.abs(np.einsum("...d,...d", x, y))))
        return float(worst)


def normal_frame(jet: SurfaceJet) -> list[VecField]:
    """Orthonormal frame of the normal bundle of g in the sphere.

    In R^4 the frame is the normalised generalised cross product of
    (h, h_u, h_v).  Otherwise Gram-Schmidt of the ambient complement, carried
    along the grid by nearest-neighbour (Procrustes) alignment from node (0, 0).
    """
    d = jet.ambient_dim
    if d < 4:
        raise ValueError("ambient dimension must be at least 4")
    if d == 4:
        xi = cross4(jet.h, jet.h_u, jet.h_v)
        xi /= np.linalg.norm(xi, axis=-1)[..., None]
        return [VecField(jet.grid, xi)]
    basis = np.stack([jet.h, jet.h_u, jet.h_v], -1)
    q, _ = np.linalg.qr(basis, mode="complete")
    comp = q[..., 3:]  # (nu, nv, d, d-3)
    nu, nv = jet.grid.shape
    out = np.empty_like(comp)

    def align(frame, ref):
        U, _, Vt = np.linalg.svd(frame.T @ ref)
        return frame @ (U @ Vt)

    out[0, 0] = comp[0, 0]
    for i in range(1, nu):
        out[i, 0] = align(comp[i, 0], out[i - 1, 0])
    for i in range(nu):
        for j in range(1, nv):
            out[i, j] = align(comp[i, j], out[i, j - 1])
    return [VecField(jet.grid, out[..., a]) for a in range(d - 3)]


def _quotient_jet(f: dict, r: dict) -> dict:
    """Jet of ``f / r`` from jets of ``f`` (trailing component axis) and ``r``."""
    def R(k):
        return r[k][..., None]
    f0, r0 = f[""], R("")
    out = {"": f0 / r0}
    for a in ("u", "v"):
        out[a] = f[a] / r0 - f0 * R(a) / r0**2
    for ab in ("uu", "uv", "vv"):
        a, b = ab[0], ab[1]
        out[ab] = (f[ab] / r0 - (f[a] * R(b) + f[b] * R(a)) / r0**2
                   - f0 * R(ab) / r0**2 + 2 * f0 * R(a) * R(b) / r0**3)
    return out


def _norm_jet(phi: dict) -> dict:
    dot = lambda x, y: np.einsum("...d,...d", x, y)  # noqa: E731
    r = np.sqrt(dot(phi[""], phi[""]))
    out = {"": r}
    for a in ("u", "v"):
        out[a] = dot(phi[""], phi[a]) / r
    for ab in ("uu", "uv", "vv"):
        a, b = ab[0], ab[1]
        out[ab] = (dot(phi[a], phi[b]) + dot(phi[""], phi[ab])) / r - out[a] * out[b] / r
    return out


def pair_from_jets(grid: Grid, h_jet: dict, gamma_jet: dict, kind: str = "unknown",
                   frame: list | None = None) -> GaussPair:
    """Assemble a pair from exact jets of ``h`` (vectors) and ``gamma`` (scalars)."""
    jet = build_jet(VecField(grid, h_jet[""]), {k: h_jet[k] for k in ("u", "v", "uu", "uv", "vv")},
                    kind=kind)
    Gam = christoffel_symbols(jet)
    Ginv = np.linalg.inv(jet.metric())
    dg = np.stack([gamma_jet["u"], gamma_jet["v"]], -1)
    grad = np.einsum("...kl,...l->...k", Ginv, dg)
    second = np.stack([np.stack([gamma_jet["uu"], gamma_jet["uv"]], -1),
                       np.stack([gamma_jet["uv"], gamma_jet["vv"]], -1)], -2)
    hess_low = second - np.einsum("...kij,...k->...ij", Gam, dg)
    hess_low = 0.5 * (hess_low + np.swapaxes(hess_low, -1, -2))
    hess = Ginv @ hess_low
    frame = normal_frame(jet) if frame is None else frame
    gd = {k: np.asarray(gamma_jet[k], float) for k in ("u", "v", "uu", "uv", "vv")}
    return GaussPair(jet, ScalarField(grid, gamma_jet[""]), gd, grad, hess, hess_low, frame, Gam)


def pair_from_phi(family: PhiFamily) -> GaussPair:
    """``g = phi / |phi|`` and ``gamma = phi_0 / |phi|``, jets by the quotient rule."""
    validate_family(family)
    d = family.derivatives()
    keys = ("", "u", "v", "uu", "uv", "vv")
    phi = {k: d[k][..., 1:] for k in keys}
    phi0 = {k: d[k][..., :1] for k in keys}
    r = _norm_jet(phi)
    hj = _quotient_jet(phi, r)
    gj = {k: v[..., 0] for k, v in _quotient_jet(phi0, r).items()}
    kind = {"real": "hyperbolic-candidate", "complex": "elliptic-candidate"}.get(family.kind, "unknown")
    return pair_from_jets(family.grid, hj, gj, kind)


# -- hypersurface samples -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HypersurfaceSample:
    chart: Grid
    psi: np.ndarray          # (nu, nv, ns, d)
    frame: np.ndarray        # (nu, nv, ns, 3, d): psi_u, psi_v, psi_s
    N: np.ndarray            # (nu, nv, ns, d)
    A_chart: np.ndarray      # (nu, nv, ns, 3, 3)
    induced_metric: np.ndarray
    nullity_dir: np.ndarray | None   # (nu, nv, ns, 3), unit, or None when rank 3
    regular_mask: np.ndarray
    Pw: np.ndarray | None = None
    pair: GaussPair | None = None
    j_map: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def psi_u(self):
        return self.frame[..., 0, :]

    @property
    def psi_v(self):
        return self.frame[..., 1, :]

    @property
    def psi_s(self):
        return self.frame[..., 2, :]

    @property
    def stencil_mask(self) -> np.ndarray:
        """Regular nodes whose five-point stencils in every chart direction stay regular."""
        ok = self.regular_mask
        for axis in range(ok.ndim):
            ok = _stencil_support(ok, axis)
        return ok

    @property
    def safe_metric(self) -> np.ndarray:
        """Induced metric with the identity substituted at singular nodes."""
        return np.where(self.regular_mask[..., None, None], self.induced_metric, np.eye(3))

    def second_form(self) -> np.ndarray:
        """Lowered second fundamental form ``<A d_i, d_j>``."""
        b = np.einsum("...ik,...kj->...ij", self.induced_metric, self.A_chart)
        return 0.5 * (b + np.swapaxes(b, -1, -2))


def _stencil_support(mask: np.ndarray, axis: int) -> np.ndarray:
    """Nodes whose five-point stencil along ``axis`` (as in ``d1_4``) lies in ``mask``."""
    m = np.moveaxis(mask, axis, 0)
    n = m.shape[0]
    start = np.clip(np.arange(n) - 2, 0, n - 5)
    out = np.ones_like(m)
    for k in range(5):
        out &= m[start + k]
    return np.moveaxis(out, 0, axis)


def _frame_solve(frame: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Chart coordinates of ambient vectors in the span of ``frame`` (least squares)."""
    F = np.swapaxes(frame, -1, -2)            # (..., d, 3)
    G = np.swapaxes(F, -1, -2) @ F
    rhs = np.swapaxes(F, -1, -2) @ vecs       # (..., 3, m)
    return np.linalg.solve(G, rhs)


def _independent_normal(chart: Grid, psi: np.ndarray, ref: np.ndarray) -> np.ndarray:
    fu = d1(psi, 0, chart.hu)
    fv = d1(psi, 1, chart.hv)
    fs = d1(psi, 2, chart.hs)
    n = cross4(fu, fv, fs)
    n /= np.maximum(np.linalg.norm(n, axis=-1), 1e-300)[..., None]
    sign = np.sign(np.einsum("...d,...d", n, ref))
    return n * sign[..., None]


def nullity_from_A(A: np.ndarray, G: np.ndarray, prefer: np.ndarray | None = None) -> np.ndarray:
    """Unit (metric) kernel direction of a rank-2 shape operator, signed towards ``prefer``."""
    R = _ortho_factor(G)
    Ao = R @ A @ np.linalg.inv(R)
    Ao = 0.5 * (Ao + np.swapaxes(Ao, -1, -2))
    w, V = np.linalg.eigh(Ao)
    k = np.argmin(np.abs(w), axis=-1)
    vo = np.take_along_axis(V, k[..., None, None], axis=-1)[..., 0]
    t = np.linalg.solve(R, vo[..., None])[..., 0]
    if prefer is not None:
        sgn = np.sign(np.einsum("...i,...i", t, prefer))
        sgn[sgn == 0] = 1
        t = t * sgn[..., None]
    return t


def gauss_parametrize(pair: GaussPair, s_range, ns: int, check: bool = True) -> HypersurfaceSample:
    """Sample ``psi(x, s xi) = gamma h + h_* grad gamma + s xi`` on the chart (u, v, s)."""
    if pair.n != 3 or len(pair.normal_frame) != 1:
        raise ValueError("the (u, v, s) chart needs a one-dimensional fibre (ambient R^4)")
    g2 = pair.grid
    chart = make_grid3(g2.ranges[0], g2.ranges[1], s_range, *g2.counts, ns)
    jet = pair.jet
    s = chart.axis("s")
    xi = pair.normal_frame[0].values
    G2 = jet.metric()
    a_xi = pair.second_form(0)
    A_xi = np.linalg.inv(G2) @ a_xi
    gam = pair.gamma.values
    grad = pair.grad_gamma
    I2 = np.eye(2)
    base = gam[..., None, None] * I2 + pair.hess_gamma
    Pw = base[:, :, None] - s[None, None, :, None, None] * A_xi[:, :, None]
    Hf = jet.frame()                                           # (nu, nv, 2, d)
    c = np.einsum("...k,...ki->...i", grad, a_xi)              # alpha_xi(grad gamma, d_i)
    point0 = gam[..., None] * jet.h + np.einsum("...k,...kd->...d", grad, Hf)
    psi = point0[:, :, None] + s[None, None, :, None] * xi[:, :, None]
    # psi_a = h_*(P d_a) + c_a xi ; psi_s = xi
    tang = np.einsum("...ka,...kd->...ad", Pw, Hf[:, :, None])  # (nu, nv, ns, 2, d)
    tang = tang + c[:, :, None, :, None] * xi[:, :, None, None, :]
    xi3 = np.broadcast_to(xi[:, :, None], psi.shape)
    frame = np.concatenate([tang, xi3[..., None, :]], axis=-2)
    N = np.broadcast_to(jet.h[:, :, None], psi.shape).copy()
    Gm = np.einsum("...id,...jd->...ij", frame, frame)

    detP = np.linalg.det(Pw)
    eps_reg = 1e-6 * (1 + np.max(np.abs(gam)) + np.max(np.abs(pair.hess_gamma)))
    mask = np.abs(detP) > eps_reg
    # keep the sheet through the central fibre slice: a sign change of det P_w
    # between nodes means the singular locus passes between them
    ref = np.sign(detP[:, :, ns // 2])
    ref = np.where(ref == 0, np.sign(np.sum(np.sign(detP))) or 1.0, ref)
    mask &= np.sign(detP) == ref[:, :, None]
    if not mask.any():
        raise NowhereRegularError("det P_w vanishes at every node of the chart")

    safe_frame = frame.copy()
    safe_frame[~mask] = np.broadcast_to(np.eye(3, psi.shape[-1]), safe_frame[~mask].shape)
    dN = np.concatenate([-Hf, np.zeros(Hf.shape[:-2] + (1, Hf.shape[-1]))], axis=-2)
    dN = np.broadcast_to(dN[:, :, None], frame.shape)
    A = _frame_solve(safe_frame, np.swapaxes(dN, -1, -2))     # columns: A d_i
    j_map = _frame_solve(safe_frame, np.swapaxes(np.broadcast_to(Hf[:, :, None], tang.shape), -1, -2))
    A[~mask] = 0.0
    j_map[~mask] = 0.0

    diag = {}
    Pinv = np.where(mask[..., None, None], np.linalg.inv(np.where(mask[..., None, None], Pw, I2)), 0.0)
    cross = np.einsum("...ij,...jk->...ik", A, j_map) + j_map @ Pinv
    amb = np.einsum("...id,...ik->...kd", safe_frame, cross)
    diag["shape-crosscheck"] = float(np.max(np.linalg.norm(amb, axis=(-1, -2))[mask]))
    diag["j-projection"] = float(np.max(np.abs(j_map[..., :2, :] - Pinv)[mask]))
    diag["normal-tangent"] = float(np.max(np.abs(np.einsum("...id,...d->...i", frame, N))))
    nfd = _independent_normal(chart, psi, N)
    smask = mask
    for axis in range(3):
        smask = _stencil_support(smask, axis)
    smask = smask if smask.any() else mask
    diag["normal-independent"] = float(np.max(np.linalg.norm(nfd - N, axis=-1)[smask]))
    hgate = gate(g2.h, 0.0)
    diag["gate"] = hgate
    if check and diag["shape-crosscheck"] > hgate * (1 + np.max(np.abs(Pinv))):
        raise InconsistentGeometryError(
            f"Weingarten and P_w shape operators disagree by {diag['shape-crosscheck']:.3e}")
    T = np.zeros(psi.shape[:-1] + (3,))
    T[..., 2] = 1.0
    Gs = np.where(mask[..., None, None], Gm, np.eye(3))
    T = nullity_from_A(np.where(mask[..., None, None], A, np.diag([1.0, 1.0, 0.0])), Gs, prefer=T)
    return HypersurfaceSample(chart, psi, frame, N, A, Gm, T, mask, Pw, pair, j_map, diag)


def sample_from_embedding(chart: Grid, psi: np.ndarray, frame: np.ndarray, N: np.ndarray,
                          dN: np.ndarray) -> HypersurfaceSample:
    """Sample of an arbitrary immersed chart with known tangent frame and Gauss map derivative.

    ``frame`` and ``dN`` have shape (..., 3, d), rows indexed by chart direction.
    """
    A = _frame_solve(frame, np.swapaxes(-dN, -1, -2))
    Gm = np.einsum("...id,...jd->...ij", frame, frame)
    hyp = HypersurfaceSample(chart, psi, frame, N, A, Gm, None, np.ones(chart.shape, bool))
    rk = rank_profile(hyp)
    T = None
    if np.all(rk["rank"] == 2):
        pref = np.zeros(A.shape[:-1])
        pref[..., 2] = 1.0
        T = nullity_from_A(A, Gm, prefer=pref)
    return HypersurfaceSample(chart, psi, frame, N, A, Gm, T, np.ones(chart.shape, bool),
                              diagnostics={"source": "embedding"})


# -- envelopes -------------------------------------------------------------------

def envelope_solve(family: PhiFamily, node, derivatives: dict | None = None):
    """Leaf of the envelope ``G = G_u = G_v = 0`` over a grid node.

    Returns ``(point, basis)``: the minimum-norm solution and an orthonormal basis
    of the kernel (n-2 vectors, as rows).
    """
    d = family.derivatives() if derivatives is None else derivatives
    i, j = node
    rows = np.stack([d[""][i, j, 1:], d["u"][i, j, 1:], d["v"][i, j, 1:]])
    rhs = np.array([d[""][i, j, 0], d["u"][i, j, 0], d["v"][i, j, 0]])
    U, sv, Vt = np.linalg.svd(rows)
    if sv[-1] <= 1e-10 * max(sv[0], 1.0):
        raise DegenerateEnvelopeError(
            f"rows (phi, phi_u, phi_v) have rank < 3 at node {(int(i), int(j))}")
    point = Vt[:3].T @ ((U.T @ rhs) / sv)
    basis = Vt[3:]
    return point, basis


# -- rank and splitting tensor -------------------------------------------------------

def rank_profile(hyp: HypersurfaceSample, eps_rank: float = EPS_RANK) -> dict:
    mask = hyp.regular_mask
    A = np.where(mask[..., None, None], hyp.A_chart, 0.0)
    Gs = hyp.safe_metric
    Ao = to_orthonormal(A, Gs)
    sv = np.linalg.svd(Ao, compute_uv=False)
    thresh = eps_rank * max(1.0, float(np.max(sv)))
    rank = np.sum(sv > thresh, axis=-1)
    rank = np.where(mask, rank, -1)
    values, counts = np.unique(rank[mask], return_counts=True)
    return {"singular_values": sv, "rank": rank,
            "histogram": {int(v): int(c) for v, c in zip(values, counts)},
            "nullity_dir": hyp.nullity_dir, "threshold": thresh}


def chart_christoffels(hyp: HypersurfaceSample) -> np.ndarray:
    """``Gam[..., k, i, j]`` of the induced metric on the chart (finite differences)."""
    G = hyp.induced_metric
    c = hyp.chart
    dG = np.stack([d1_4(G, 0, c.hu), d1_4(G, 1, c.hv), d1_4(G, 2, c.hs)], axis=-3)  # [..., l, i, j] = d_l G_ij
    # Gamma_{l,ij} = (d_i G_jl + d_j G_il - d_l G_ij)/2
    low = 0.5 * (np.einsum("...ijl->...lij", dG) + np.einsum("...jil->...lij", dG) - dG)
    Ginv = np.linalg.inv(hyp.safe_metric)
    return np.einsum("...kl,...lij->...kij", Ginv, low)


def horizontal_basis(hyp: HypersurfaceSample) -> np.ndarray:
    """Chart matrix with columns ``X_u, X_v, T`` (horizontal lifts and unit nullity)."""
    G = hyp.safe_metric
    T = hyp.nullity_dir
    GT = np.einsum("...ij,...j->...i", G, T)
    cols = []
    for a in range(2):
        e = np.zeros(T.shape)
        e[..., a] = 1.0
        cols.append(e - GT[..., a][..., None] * T)
    cols.append(T)
    return np.stack(cols, axis=-1)


def splitting_tensor(hyp: HypersurfaceSample, Gam: np.ndarray | None = None) -> dict:
    """``C_T X = -(nabla_X T)_{Delta^perp}`` in the horizontal-lift basis, plus the
    residual of ``nabla_T A = A C_T`` on ``Delta^perp``."""
    if hyp.nullity_dir is None:
        raise RankError("splitting tensor needs a rank-2 hypersurface with a nullity direction")
    rk = rank_profile(hyp)
    if np.any(rk["rank"][hyp.regular_mask] != 2):
        raise RankError("nullity direction ill-defined: rank differs from 2")
    c = hyp.chart
    Gam = chart_christoffels(hyp) if Gam is None else Gam
    T = hyp.nullity_dir
    dT = np.stack([d1_4(T, 0, c.hu), d1_4(T, 1, c.hv), d1_4(T, 2, c.hs)], axis=-1)  # [..., k, i] = d_i T^k
    nablaT = dT + np.einsum("...kij,...j->...ki", Gam, T)                     # [..., k, i] = (nabla_i T)^k
    Hb = horizontal_basis(hyp)
    Hinv = np.linalg.inv(Hb)
    cols = np.einsum("...ki,...ia->...ka", nablaT, Hb[..., :2])                # nabla_{X_a} T
    C = -(Hinv @ cols)[..., :2, :]

    A = hyp.A_chart
    dA = np.stack([d1_4(A, 0, c.hu), d1_4(A, 1, c.hv), d1_4(A, 2, c.hs)], axis=-1)    # [..., k, j, i]
    nA = (np.einsum("...kji,...i->...kj", dA, T)
          + np.einsum("...kil,...lj,...i->...kj", Gam, A, T)
          - np.einsum("...lij,...kl,...i->...kj", Gam, A, T))
    A_h = (Hinv @ A @ Hb)[..., :2, :2]
    nA_h = (Hinv @ nA @ Hb)[..., :2, :2]
    res = np.linalg.norm(nA_h - A_h @ C, axis=(-1, -2)) / (
        1 + np.linalg.norm(A_h, axis=(-1, -2)) * (1 + np.linalg.norm(C, axis=(-1, -2))))
    mask = hyp.stencil_mask if hyp.stencil_mask.any() else hyp.regular_mask
    out = {"C": C, "A_h": A_h, "codazzi": float(np.max(res[mask])), "codazzi_field": res}
    if hyp.pair is not None and hyp.Pw is not None:
        # along the fibre d xi = -h_* A_xi, so C_T = P_w^{-1} A_xi exactly
        A_xi = hyp.pair.shape_operator(0)[:, :, None]
        Ps = np.where(mask[..., None, None], hyp.Pw, np.eye(2))
        closed = np.linalg.solve(Ps, np.broadcast_to(A_xi, Ps.shape))
        dev = np.linalg.norm(C - closed, axis=(-1, -2)) / (np.linalg.norm(closed, axis=(-1, -2)) + 1)
        out["closed_form"] = closed
        out["closed_form_residual"] = float(np.max(dev[mask]))
    return out


# -- classification -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Classification:
    verdict: str
    J_bar: np.ndarray | None     # (nu, nv, 2, 2)
    D_bar: np.ndarray | None
    mu_bar: ScalarField | None
    residuals: dict
    node_verdicts: np.ndarray | None = None
    C: np.ndarray | None = None

    RESIDUAL_NAMES = ("splitting-span", "commutation", "fiber-parallel", "trace",
                      "codazzi-D", "gamma-compat", "det-D", "codazzi-splitting")


def _horizontal_metric(hyp: HypersurfaceSample) -> np.ndarray:
    Hb = horizontal_basis(hyp)[..., :2]
    G = hyp.safe_metric
    return np.swapaxes(Hb, -1, -2) @ G @ Hb


def mu_from_J(pair: GaussPair, J: np.ndarray, c: float = 1.0, base=(0, 0)):
    """Solve the quotient Codazzi equation for ``D = mu J``: returns (mu, exactness residual).

    ``(nabla'_u D) d_v = (nabla'_v D) d_u`` reduces to ``d log mu = omega`` with
    ``omega_u = -(J^{-1} W)_v``, ``omega_v = (J^{-1} W)_u`` and
    ``W = (nabla'_u J) d_v - (nabla'_v J) d_u``.
    """
    g = pair.grid
    Gam = pair.christoffel
    dJ = np.stack([d1_4(J, 0, g.hu), d1_4(J, 1, g.hv)], axis=-3)      # [..., a, k, b]
    nJ = (dJ + np.einsum("...kal,...lb->...akb", Gam, J)
          - np.einsum("...lab,...kl->...akb", Gam, J))            # (nabla_a J)^k_b
    W = nJ[..., 0, :, 1] - nJ[..., 1, :, 0]
    x = np.linalg.solve(J, W[..., None])[..., 0]
    omega = OneForm2(ScalarField(g, -x[..., 1]), ScalarField(g, x[..., 0]))
    res = exactness_residual(omega).sup(interior=True)
    logmu = path_integrate(omega, base=base, tol=np.inf)
    return ScalarField(g, c * np.exp(logmu.values)), res, omega


def classify(hyp: HypersurfaceSample, span_gate: float = SPAN_GATE, ruled_gate: float | None = None,
             fiber_gate: float | None = None, c: float = 1.0, raise_unclassifiable: bool = True
             ) -> Classification:
    """Surface-like / ruled / hyperbolic / elliptic verdict from the splitting tensor."""
    st = splitting_tensor(hyp)
    C = st["C"]
    mask = hyp.stencil_mask if hyp.stencil_mask.any() else hyp.regular_mask
    Gh = _horizontal_metric(hyp)
    Co = to_orthonormal(C, Gh)
    tr = np.trace(Co, axis1=-2, axis2=-1)
    Ko = Co - 0.5 * tr[..., None, None] * np.eye(2)
    kn = np.linalg.norm(Ko, axis=(-1, -2))
    span = kn / (np.linalg.norm(Co, axis=(-1, -2)) + 1)
    h2 = hyp.chart.plane().h ** 2
    ruled_gate = 100 * h2 if ruled_gate is None else ruled_gate
    fiber_gate = max(1e-3, 100 * h2) if fiber_gate is None else fiber_gate
    residuals = {name: 0.0 for name in Classification.RESIDUAL_NAMES}
    residuals["codazzi-splitting"] = st["codazzi"]
    if "closed_form_residual" in st:
        residuals["splitting-closed-form"] = st["closed_form_residual"]
    residuals["splitting-span"] = float(np.max(span[mask]))

    surf = span <= span_gate
    rel_det = np.linalg.det(Ko) / np.maximum(0.5 * kn**2, 1e-300)
    node = np.full(mask.shape, "", dtype=object)
    node[surf] = "surface-like"
    node[~surf & (np.abs(rel_det) <= ruled_gate)] = "ruled"
    node[~surf & (rel_det < -ruled_gate)] = "hyperbolic"
    node[~surf & (rel_det > ruled_gate)] = "elliptic"
    kinds = set(node[mask])
    if kinds == {"surface-like"}:
        return Classification("surface-like", None, None, None, residuals, node, C)
    if len(kinds) > 1:
        return Classification("mixed", None, None, None, residuals, node, C)
    verdict = kinds.pop()

    K = C - 0.5 * np.trace(C, axis1=-2, axis2=-1)[..., None, None] * np.eye(2)
    detK = np.linalg.det(K)
    if verdict == "ruled":
        residuals["det-D"] = float(np.max(np.abs(rel_det[mask])))
    else:
        J = K / np.sqrt(np.abs(detK))[..., None, None]
    # fibre comparisons use an s-independent metric: the quotient one when known
    Gq = np.broadcast_to(hyp.pair.jet.metric()[:, :, None], Gh.shape) if hyp.pair is not None else Gh
    if verdict == "ruled":
        J = K / np.linalg.norm(to_orthonormal(K, Gq), axis=(-1, -2))[..., None, None]
    J = _orient(J, verdict, mask)
    # fibre average (D projectable) and its deviation
    w = mask[..., None, None].astype(float)
    Jbar = np.sum(J * w, axis=2) / np.maximum(np.sum(w, axis=2), 1)
    if verdict != "ruled":
        Jbar = Jbar / np.sqrt(np.abs(np.linalg.det(Jbar)))[..., None, None]
    else:
        Jbar = Jbar / np.linalg.norm(to_orthonormal(Jbar, Gq[:, :, 0]), axis=(-1, -2))[..., None, None]
    dev = to_orthonormal(J - Jbar[:, :, None], Gq)
    residuals["fiber-parallel"] = float(np.max(np.linalg.norm(dev, axis=(-1, -2))[mask]))
    comm = Jbar[:, :, None] @ C - C @ Jbar[:, :, None]
    comm_o = np.linalg.norm(to_orthonormal(comm, Gh), axis=(-1, -2)) / (np.linalg.norm(Co, axis=(-1, -2)) + 1)
    residuals["commutation"] = float(np.max(comm_o[mask]))
    residuals["trace"] = float(np.max(np.abs(np.trace(Jbar, axis1=-2, axis2=-1))))
    if raise_unclassifiable and residuals["fiber-parallel"] > fiber_gate:
        raise UnclassifiableError(
            f"trace-free tensors commuting with C_T are not parallel along the nullity leaves "
            f"(deviation {residuals['fiber-parallel']:.3e} > {fiber_gate:.3e}); not infinitesimally bendable")

    mu_bar = D_bar = None
    pair = hyp.pair
    if pair is not None and verdict in ("hyperbolic", "elliptic"):
        mu_bar, res_b, _ = mu_from_J(pair, Jbar, c=c)
        residuals["codazzi-D"] = res_b
        D_bar = mu_bar.values[..., None, None] * Jbar
    if pair is not None:
        S = pair.hess_lower + pair.gamma.values[..., None, None] * pair.jet.metric()
        SJ = S @ Jbar
        gc = np.linalg.norm(SJ - np.swapaxes(SJ, -1, -2), axis=(-1, -2)) / (np.linalg.norm(S, axis=(-1, -2)) + 1)
        residuals["gamma-compat"] = float(np.max(gc))
    return Classification(verdict, Jbar, D_bar, mu_bar, residuals, node, C)


def _orient(J: np.ndarray, verdict: str, mask: np.ndarray) -> np.ndarray:
    if verdict == "elliptic":
        sgn = np.sign(J[..., 1, 0])
    else:
        idx = tuple(np.argwhere(mask)[0])
        ref = J[idx]
        if ref[0, 0] - ref[1, 1] < 0 or (np.isclose(ref[0, 0], ref[1, 1]) and ref[0, 1] + ref[1, 0] < 0):
            ref = -ref
        sgn = np.sign(np.einsum("...ij,ij->...", J, ref))
    sgn[sgn == 0] = 1
    return J * sgn[..., None, None]


def hyperbolic_check(J: np.ndarray, verdict: str) -> float:
    """Sup of ``|J^2 - I|`` (hyperbolic) or ``|J^2 + I|`` (elliptic)."""
    sign = 1.0 if verdict == "hyperbolic" else -1.0
    return float(np.max(np.abs(J @ J - sign * np.eye(2))))


GAUSS_RESIDUALS = ("shape-crosscheck", "j-projection", "normal-tangent", "normal-independent")
HYPERSURFACE_RESIDUALS = GAUSS_RESIDUALS + Classification.RESIDUAL_NAMES + ("splitting-closed-form",)


def _entry(value, tol, ok=None) -> dict:
    if value is None:
        return {"value": None, "gate": None, "pass": None}
    ok = value <= tol if ok is None else ok
    return {"value": float(value), "gate": float(tol), "pass": bool(ok)}


def gauss_residuals(hyp: HypersurfaceSample, gate_scale: float = 1.0) -> dict:
    """Gated table of the Gauss-parametrization consistency checks."""
    d = hyp.diagnostics
    if "shape-crosscheck" not in d:
        return {k: _entry(None, None) for k in GAUSS_RESIDUALS}
    tol = gate_scale * gate(hyp.pair.grid.h if hyp.pair is not None else hyp.chart.h)
    Pi = hyp.j_map[..., :2, :]
    scale = float(np.max(np.abs(Pi[hyp.regular_mask])))
    return {"shape-crosscheck": _entry(d["shape-crosscheck"], tol * (1 + scale)),
            "j-projection": _entry(d["j-projection"], tol * (1 + scale)),
            "normal-tangent": _entry(d["normal-tangent"], 1e-8),
            "normal-independent": _entry(d["normal-independent"], tol)}


def classification_residuals(hyp: HypersurfaceSample, cls: Classification, gate_scale: float = 1.0) -> dict:
    """Gated table of the classification residuals; absent entries are reported as null."""
    r = cls.residuals
    h2 = hyp.chart.plane().h ** 2
    chart_tol = gate_scale * gate(hyp.chart.h)
    plane_tol = gate_scale * gate(hyp.chart.plane().h)
    surf = cls.verdict == "surface-like"
    out = {"splitting-span": _entry(r["splitting-span"], SPAN_GATE,
                                    (r["splitting-span"] <= SPAN_GATE) == surf)}
    if surf or cls.verdict == "mixed":
        for name in HYPERSURFACE_RESIDUALS:
            if name not in out and name not in GAUSS_RESIDUALS:
                v = r.get(name) if name in ("codazzi-splitting", "splitting-closed-form") else None
                out[name] = _entry(v, chart_tol)
        return out
    ruled = cls.verdict == "ruled"
    out["commutation"] = _entry(r["commutation"], chart_tol)
    out["fiber-parallel"] = _entry(r["fiber-parallel"], max(1e-3, 100 * h2))
    out["trace"] = _entry(r["trace"], plane_tol)
    out["codazzi-D"] = _entry(None if ruled or hyp.pair is None else r["codazzi-D"], plane_tol)
    out["gamma-compat"] = _entry(r["gamma-compat"] if hyp.pair is not None else None, plane_tol)
    out["det-D"] = _entry(r["det-D"] if ruled else None, 100 * h2)
    out["codazzi-splitting"] = _entry(r["codazzi-splitting"], chart_tol)
    out["splitting-closed-form"] = _entry(r.get("splitting-closed-form"), chart_tol)
    return out


def envelope_crosscheck(hyp: HypersurfaceSample, family, count: int = 5) -> dict:
    """Distance from the envelope leaves over ``count x count`` probe nodes to the sampled points."""
    d = family.derivatives()
    nu, nv = family.grid.shape
    iu = np.linspace(0, nu - 1, count).round().astype(int)
    iv = np.linspace(0, nv - 1, count).round().astype(int)
    pts = hyp.psi[hyp.regular_mask]
    worst = 0.0
    for i in iu:
        for j in iv:
            point, basis = envelope_solve(family, (i, j), d)
            # leaf distance to every sampled point on the fibre over (i, j), and to the whole image
            fib = hyp.psi[i, j] - point
            off = fib - (fib @ basis.T) @ basis
            rel = pts - point
            dist_img = np.min(np.linalg.norm(rel - (rel @ basis.T) @ basis, axis=-1))
            worst = max(worst, float(np.max(np.linalg.norm(off, axis=-1))), float(dist_img))
    return {"max_distance": worst, "nodes": int(count * count)}
