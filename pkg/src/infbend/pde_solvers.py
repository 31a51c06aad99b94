"""Solvers for the characteristic equation ``phi_{z1 z2} + M phi = 0``.

Hyperbolic branch ``(z1, z2) = (u, v)``: Goursat problem with data on the
characteristics through the base corner, marched cell by cell.  Elliptic
branch ``(z1, z2) = (u + iv, u - iv)``: ``phi_uu + phi_vv + 4 M phi = 0`` with
Dirichlet data, five-point stencil and a direct sparse solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid_calculus import Grid, ScalarField, VecField, d1, d2, interior_view


class ResonanceError(RuntimeError):
    def __init__(self, sigma_min: float, norm: float):
        super().__init__(
            f"elliptic system is numerically singular: smallest singular value ~{sigma_min:.3e} "
            f"(matrix norm {norm:.3e})"
        )
        self.sigma_min = sigma_min


class NotAnImmersionError(ValueError):
    pass


class OriginCrossingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GoursatProblem:
    M: ScalarField
    a: np.ndarray  # phi(u, v0)
    b: np.ndarray  # phi(u0, v)

    def __post_init__(self):
        nu, nv = self.M.grid.shape
        a = np.asarray(self.a, float)
        b = np.asarray(self.b, float)
        if a.shape != (nu,) or b.shape != (nv,):
            raise ValueError(f"edge data must have lengths {nu} and {nv}")
        if abs(a[0] - b[0]) > 1e-12:
            raise ValueError(f"incompatible corner data: a(u0)={a[0]!r}, b(v0)={b[0]!r}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


def solve_goursat(prob: GoursatProblem) -> ScalarField:
    """Box-rule march for ``phi_uv + M phi = 0`` from the corner (u0, v0).

    Each cell uses ``phi_ij = phi_{i-1,j} + phi_{i,j-1} - phi_{i-1,j-1} - hu hv avg(M phi)``
    with the corner average taken implicitly in the unknown corner.
    """
    g = prob.M.grid
    M = prob.M.values
    nu, nv = g.shape
    c = 0.25 * g.hu * g.hv
    phi = np.zeros((nu, nv))
    phi[:, 0] = prob.a
    phi[0, :] = prob.b
    denom = 1.0 + c * M
    # march anti-diagonals would allow vectorising; rows are enough at desk scale
    for i in range(1, nu):
        prev = phi[i - 1]
        Mp = M[i - 1]
        Mi = M[i]
        row = phi[i]
        for j in range(1, nv):
            rhs = row[j - 1] + prev[j] - prev[j - 1] - c * (
                Mp[j - 1] * prev[j - 1] + Mp[j] * prev[j] + Mi[j - 1] * row[j - 1])
            row[j] = rhs / denom[i, j]
    return ScalarField(g, phi)


def _laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h**2


def dirichlet_operator(M: ScalarField) -> sp.csc_matrix:
    """Interior operator ``Lap_h + 4M`` acting on interior unknowns (u fastest)."""
    g = M.grid
    nu, nv = g.shape
    mu, mv = nu - 2, nv - 2
    Lu = _laplacian_1d(mu, g.hu)
    Lv = _laplacian_1d(mv, g.hv)
    lap = sp.kron(sp.identity(mv), Lu) + sp.kron(Lv, sp.identity(mu))
    m_int = interior_view(M.values, 2).T.ravel()  # index = i + mu*j
    return (lap + sp.diags(4 * m_int)).tocsc()


def _sigma_min_estimate(lu, n: int, iters: int = 30) -> float:
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    growth = 0.0
    for _ in range(iters):
        y = lu.solve(x)
        z = lu.solve(y, trans="T")  # (A^T A)^{-1} x
        growth = np.linalg.norm(z)
        if not np.isfinite(growth) or growth == 0:
            return 0.0
        x = z / growth
    return 1.0 / np.sqrt(growth)


def solve_elliptic(M: ScalarField, boundary: np.ndarray, guard: float = 1e-10) -> ScalarField:
    """Dirichlet solve of ``phi_uu + phi_vv + 4 M phi = 0``.

    ``boundary`` is a full nodal array; only its edge values are used.
    """
    g = M.grid
    nu, nv = g.shape
    bnd = np.asarray(boundary, dtype=float)
    if bnd.shape != (nu, nv):
        raise ValueError(f"boundary array must have shape {(nu, nv)}")
    A = dirichlet_operator(M)
    norm = spla.norm(A, 1)
    # move boundary contributions to the right-hand side
    rhs = np.zeros((nu - 2, nv - 2))
    rhs[0, :] -= bnd[0, 1:-1] / g.hu**2
    rhs[-1, :] -= bnd[-1, 1:-1] / g.hu**2
    rhs[:, 0] -= bnd[1:-1, 0] / g.hv**2
    rhs[:, -1] -= bnd[1:-1, -1] / g.hv**2
    try:
        lu = spla.splu(A)
    except RuntimeError:
        raise ResonanceError(0.0, norm) from None
    sigma = _sigma_min_estimate(lu, A.shape[0])
    if sigma < guard * norm:
        raise ResonanceError(sigma, norm)
    x = lu.solve(rhs.T.ravel())
    phi = bnd.copy()
    phi[1:-1, 1:-1] = x.reshape(nv - 2, nu - 2).T
    return ScalarField(g, phi)


def dirichlet_eigenvalues(grid: Grid, count: int = 4) -> np.ndarray:
    """Smallest eigenvalues of ``-Lap_h`` with zero Dirichlet data (closed form)."""
    nu, nv = grid.shape
    p = np.arange(1, nu - 1)
    q = np.arange(1, nv - 1)
    lu = 4 / grid.hu**2 * np.sin(p * np.pi / (2 * (nu - 1))) ** 2
    lv = 4 / grid.hv**2 * np.sin(q * np.pi / (2 * (nv - 1))) ** 2
    return np.sort((lu[:, None] + lv[None, :]).ravel())[:count]


def pde_residual(phi, M: ScalarField, kind: str) -> ScalarField:
    """Pointwise ``|phi_uv + M phi|`` (real) or ``|(phi_uu + phi_vv)/4 + M phi|`` (complex).

    Boundary nodes are set to zero so ``sup`` reports the interior only.
    """
    g = M.grid
    vals = phi.values if hasattr(phi, "values") else np.asarray(phi)
    if kind == "real":
        r = d1(d1(vals, 0, g.hu), 1, g.hv) + M.values * vals
    elif kind == "complex":
        r = 0.25 * (d2(vals, 0, g.hu) + d2(vals, 1, g.hv)) + M.values * vals
    else:
        raise ValueError(f"kind must be 'real' or 'complex', not {kind!r}")
    out = np.zeros(g.shape)
    out[1:-1, 1:-1] = np.abs(r[1:-1, 1:-1])
    return ScalarField(g, out)


@dataclass(frozen=True, eq=False)
class PhiFamily:
    """Solutions ``phi_0 .. phi_{n+1}`` of one characteristic equation.

    ``jet`` optionally carries exact derivatives: a dict mapping ``"u"``,
    ``"v"``, ``"uu"``, ``"uv"``, ``"vv"`` to arrays of shape (nu, nv, n+2) stacked
    as ``(phi0, phi1, ..., phi_{n+1})``.  Without it derivatives are taken by
    finite differences.
    """

    phi0: ScalarField
    phi: VecField
    kind: str
    M: ScalarField
    jet: dict | None = field(default=None)

    @property
    def n(self) -> int:
        return self.phi.ambient_dim - 1

    @property
    def grid(self) -> Grid:
        return self.M.grid

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.phi0.values[..., None], self.phi.values], axis=-1)

    def derivatives(self) -> dict:
        """Nodal jet ``{"": values, "u": ..., "uv": ...}`` of the stacked components."""
        if self.jet is not None:
            out = {k: np.asarray(v, float) for k, v in self.jet.items()}
            out[""] = self.stacked()
            return out
        g = self.grid
        f = self.stacked()
        fu = d1(f, 0, g.hu)
        fv = d1(f, 1, g.hv)
        return {"": f, "u": fu, "v": fv, "uu": d2(f, 0, g.hu),
                "uv": 0.5 * (d1(fu, 1, g.hv) + d1(fv, 0, g.hu)), "vv": d2(f, 1, g.hv)}

    def residual_sup(self) -> float:
        st = self.stacked()
        return max(pde_residual(st[..., c], self.M, self.kind).sup() for c in range(st.shape[-1]))


def validate_family(fam: PhiFamily, rank_tol: float = 1e-8) -> None:
    """Check the immersion and origin-avoidance hypotheses of a family."""
    d = fam.derivatives()
    phi = d[""][..., 1:]
    r = np.linalg.norm(phi, axis=-1)
    scale = max(1.0, float(r.max()))
    if np.min(r) <= 1e-12 * scale:
        idx = np.unravel_index(np.argmin(r), r.shape)
        raise OriginCrossingError(f"phi vanishes at node {tuple(int(i) for i in idx)}")
    jac = np.stack([d["u"][..., 1:], d["v"][..., 1:]], axis=-1)
    sv = np.linalg.svd(jac, compute_uv=False)
    ratio = sv[..., -1] / np.maximum(sv[..., 0], 1e-300)
    if np.min(ratio) < rank_tol:
        idx = np.unravel_index(np.argmin(ratio), ratio.shape)
        raise NotAnImmersionError(
            f"(phi_1..phi_n+1) has Jacobian rank < 2 at node {tuple(int(i) for i in idx)}")


def build_phi_family(M: ScalarField, kind: str, seeds: list, n: int = 3,
                     jet: dict | None = None) -> PhiFamily:
    """Solve every component with the shared potential ``M``.

    Real kind: each seed is ``(a, b)``, the edge data on ``v = v0`` and ``u = u0``.
    Complex kind: each seed is a nodal array whose boundary supplies Dirichlet
    data (or a 4-tuple of edges ``(u=u0, u=u1, v=v0, v=v1)``).
    """
    if len(seeds) != n + 2:
        raise ValueError(f"need n+2 = {n + 2} seeds, got {len(seeds)}")
    g = M.grid
    comps = []
    for seed in seeds:
        if kind == "real":
            a, b = seed
            comps.append(solve_goursat(GoursatProblem(M, a, b)).values)
        elif kind == "complex":
            comps.append(solve_elliptic(M, _boundary_array(g, seed)).values)
        else:
            raise ValueError(f"kind must be 'real' or 'complex', not {kind!r}")
    st = np.stack(comps, axis=-1)
    fam = PhiFamily(ScalarField(g, st[..., 0]), VecField(g, st[..., 1:]), kind, M, jet)
    validate_family(fam)
    return fam


def _boundary_array(grid: Grid, seed) -> np.ndarray:
    if isinstance(seed, (tuple, list)) and len(seed) == 4:
        left, right, bottom, top = (np.asarray(e, float) for e in seed)
        arr = np.zeros(grid.shape)
        arr[:, 0], arr[:, -1] = bottom, top
        arr[0, :], arr[-1, :] = left, right
        return arr
    return np.asarray(seed, float)


def bessel_series(x: float, terms: int = 20) -> float:
    """``sum_k (-x)^k / (k!)^2``: the solution of ``phi_uv + phi = 0`` with unit data at ``uv = x``."""
    total, term = 0.0, 1.0
    for k in range(terms):
        if k:
            term *= -x / (k * k)
        total += term
    return total
