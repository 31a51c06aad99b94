"""Infinitesimal bendings of rank-two hypersurfaces: synthesis and verification.

Chart conventions follow :mod:`infbend.hypersurface`: endomorphisms act on chart
coordinate vectors (index order ``[k, i]`` = component ``k`` of ``E d_i``) and
lowered forms are ``b_ij = <B d_i, d_j>``.  ``L`` is stored as its columns
``L_j = L d_j = d_j T`` (ambient vectors).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .grid_calculus import Grid, VecField, d1_4, march_integrate
from .hypersurface import (
    EPS_RANK, Classification, HypersurfaceSample, RankError, chart_christoffels, gate,
    horizontal_basis, rank_profile,
)
from .pde_solvers import PhiFamily


class FrameDegeneracyError(ValueError):
    pass


class NonIntegrableError(ValueError):
    def __init__(self, name: str, residual: float, tolerance: float):
        super().__init__(f"{name} residual {residual:.3e} exceeds gate {tolerance:.3e}")
        self.name = name
        self.residual = residual
        self.tolerance = tolerance


class ClassificationError(ValueError):
    pass


class SingularChartError(ValueError):
    pass


class ProbeSizeError(ValueError):
    pass


BENDING_RESIDUALS = ("symmetry", "wedge-5", "codazzi-B", "kernel", "S-compat", "T-path", "Y-equation",
                     "iif", "var", "tau", "theta", "beta", "recovered-B")


def _chart_derivs(arr: np.ndarray, chart: Grid) -> list[np.ndarray]:
    return [d1_4(arr, a, h) for a, h in enumerate(chart.spacing)]


def lower(hyp: HypersurfaceSample, E: np.ndarray) -> np.ndarray:
    """``<E d_i, d_j>`` as an ``[i, j]`` matrix."""
    return np.swapaxes(E, -1, -2) @ hyp.induced_metric


def codazzi_field(hyp: HypersurfaceSample, E: np.ndarray, Gam: np.ndarray | None = None) -> np.ndarray:
    """Per-node norm of ``(nabla_i E) d_j - (nabla_j E) d_i`` over all chart pairs."""
    Gam = chart_christoffels(hyp) if Gam is None else Gam
    dE = np.stack(_chart_derivs(E, hyp.chart), axis=-1)                       # [k, j, i] = d_i E^k_j
    nE = (dE + np.einsum("...kil,...lj->...kji", Gam, E)
          - np.einsum("...lij,...kl->...kji", Gam, E))                        # (nabla_i E)^k_j at [k, j, i]
    C = nE - np.swapaxes(nE, -1, -2)                                         # antisymmetric in (j, i)
    return np.sqrt(np.sum(C**2, axis=(-1, -2, -3)) / 2)


def _orthonormal_ops(hyp: HypersurfaceSample, *Es: np.ndarray) -> list[np.ndarray]:
    R = np.swapaxes(np.linalg.cholesky(hyp.safe_metric), -1, -2)
    Rinv = np.linalg.inv(R)
    return [R @ E @ Rinv for E in Es]


def wedge_field(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Norm of ``B e_a ^ A e_b - B e_b ^ A e_a`` over basis pairs (orthonormal input)."""
    n = A.shape[-1]
    total = np.zeros(A.shape[:-2])
    for a, b in itertools.combinations(range(n), 2):
        w = (np.einsum("...p,...q->...pq", B[..., :, a], A[..., :, b])
             - np.einsum("...p,...q->...pq", B[..., :, b], A[..., :, a]))
        w = w - np.swapaxes(w, -1, -2)
        total += np.sum(w**2, axis=(-1, -2)) / 2
    return np.sqrt(total)


# -- B from D ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BField:
    B: np.ndarray          # endomorphism (nu, nv, ns, 3, 3)
    b: np.ndarray          # lowered, symmetrised
    residuals: dict
    scale: float


def build_B(hyp: HypersurfaceSample, cls: Classification | np.ndarray, cond_max: float = 1e12) -> BField:
    """``psi_*(B d_i) = -h_*(D e_i)`` for ``i = u, v`` and ``B d_s = 0``.

    ``cls`` is a classification carrying ``D_bar`` or a raw (nu, nv, 2, 2) array.
    """
    D = cls if isinstance(cls, np.ndarray) else cls.D_bar
    if D is None:
        verdict = getattr(cls, "verdict", "?")
        raise ClassificationError(f"no tensor D available for verdict {verdict!r}")
    if hyp.pair is None:
        raise ValueError("build_B needs a hypersurface built from a Gauss pair")
    frame = hyp.frame
    Gm = np.einsum("...id,...jd->...ij", frame, frame)
    cond = np.linalg.cond(np.where(hyp.regular_mask[..., None, None], Gm, np.eye(3)))
    if np.max(cond) > cond_max:
        idx = np.unravel_index(np.argmax(cond), cond.shape)
        raise FrameDegeneracyError(f"frame Gram matrix condition {np.max(cond):.3e} at node {idx}")
    Hf = hyp.pair.jet.frame()                                          # (nu, nv, 2, d)
    target = -np.einsum("...ki,...kd->...id", D, Hf)                   # rows: -h_*(D e_i)
    target = np.broadcast_to(target[:, :, None], hyp.psi.shape[:-1] + target.shape[-2:])
    F = np.where(hyp.regular_mask[..., None, None], frame, np.eye(3, frame.shape[-1]))
    Gs = np.where(hyp.regular_mask[..., None, None], Gm, np.eye(3))
    cols = np.linalg.solve(Gs, np.einsum("...jd,...id->...ji", F, target))   # [k, i]
    B = np.zeros(hyp.A_chart.shape)
    B[..., :, :2] = cols
    B[~hyp.regular_mask] = 0.0
    return _finish_B(hyp, B)


def _finish_B(hyp: HypersurfaceSample, B: np.ndarray) -> BField:
    mask = hyp.stencil_mask if hyp.stencil_mask.any() else hyp.regular_mask
    blow = lower(hyp, B)
    sym = np.linalg.norm(blow - np.swapaxes(blow, -1, -2), axis=(-1, -2))
    Ao, Bo = _orthonormal_ops(hyp, hyp.A_chart, B)
    wedge = wedge_field(Ao, Bo)
    cod = codazzi_field(hyp, B)
    kern = np.linalg.norm(np.einsum("...kj,...j->...k", B, hyp.nullity_dir), axis=-1) \
        if hyp.nullity_dir is not None else np.zeros(sym.shape)
    scale = float(np.max(np.abs(B[hyp.regular_mask]))) if B.any() else 0.0
    res = {"symmetry": float(np.max(sym[mask])), "wedge-5": float(np.max(wedge[mask])),
           "codazzi-B": float(np.max(cod[mask])), "kernel": float(np.max(kern[mask]))}
    return BField(B, 0.5 * (blow + np.swapaxes(blow, -1, -2)), res, scale)


# -- pointwise algebra ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KernelResult:
    basis: list
    singular_values: np.ndarray
    nullity: np.ndarray | None = None


def sym_basis(n: int) -> list[np.ndarray]:
    """Orthonormal (Frobenius) basis of symmetric n x n matrices."""
    out = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1 / np.sqrt(2)
            out.append(E)
    return out


def _wedge_rows(A: np.ndarray) -> np.ndarray:
    """Rows of ``B e_a ^ A e_b - B e_b ^ A e_a = 0`` (batched ``A``, unnormalised)."""
    n = A.shape[-1]
    basis = np.array(sym_basis(n))
    iu = np.triu_indices(n, 1)
    blocks = []
    for a, b in itertools.combinations(range(n), 2):
        w = (np.einsum("ep,...q->...epq", basis[:, :, a], A[..., :, b])
             - np.einsum("ep,...q->...epq", basis[:, :, b], A[..., :, a]))
        w = w - np.swapaxes(w, -1, -2)
        blocks.append(np.swapaxes(w[..., iu[0], iu[1]], -1, -2))   # (..., pairs, basis)
    return np.concatenate(blocks, axis=-2)


def _kernel_rows(vecs: np.ndarray, n: int) -> np.ndarray:
    """Rows of ``B v = 0`` for each column ``v`` of ``vecs`` (batched)."""
    basis = np.array(sym_basis(n))
    blocks = [np.swapaxes(np.einsum("eij,...j->...ei", basis, vecs[..., :, c]), -1, -2)
              for c in range(vecs.shape[-1])]
    return np.concatenate(blocks, axis=-2) if blocks else np.zeros(vecs.shape[:-2] + (0, len(basis)))


def _normalise_rows(rows: np.ndarray, floor: float = 1e-14) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=-1, keepdims=True)
    return np.where(norms > floor, rows / np.maximum(norms, floor), 0.0)


def pointwise_rows(A: np.ndarray, impose_nullity: bool = True, eps_rank: float = EPS_RANK) -> np.ndarray:
    """Linear constraints on the symmetric-basis coordinates of ``B``.

    Rows encode ``B X ^ A Y - B Y ^ A X = 0`` on basis pairs and, optionally,
    ``B v = 0`` for the kernel vectors ``v`` of ``A``.  Each row is normalised
    and vanishing rows are dropped.
    """
    n = A.shape[0]
    rows = _wedge_rows(A)
    if impose_nullity:
        w, V = np.linalg.eigh(0.5 * (A + A.T))
        kernel = V[:, np.abs(w) <= eps_rank * max(1.0, float(np.max(np.abs(w))))]
        rows = np.vstack([rows, _kernel_rows(kernel, n)])
    rows = _normalise_rows(rows)
    return rows[np.linalg.norm(rows, axis=1) > 0]


def pointwise_constraint_kernel(A_point, n: int | None = None, impose_nullity: bool = True,
                                tol: float = 1e-9) -> KernelResult:
    """Symmetric ``B`` with ``BX ^ AY = BY ^ AX`` (and ``ker A`` inside ``ker B``).

    ``A_point`` is k x k in an orthonormal basis; it is padded with zeros to
    ``n x n`` when ``n > k``.
    """
    A = np.asarray(A_point, float)
    k = A.shape[0]
    n = k if n is None else n
    if n < k:
        raise ValueError("n must be at least the size of A")
    if n > k:
        A = np.pad(A, ((0, n - k), (0, n - k)))
    rows = pointwise_rows(A, impose_nullity)
    basis = sym_basis(n)
    m = len(basis)
    if rows.shape[0] == 0:
        return KernelResult(basis, np.zeros(0), None)
    _, sv, Vt = np.linalg.svd(rows)
    full = np.zeros(m)
    full[:len(sv)] = sv
    null = Vt[len(sv):] if len(sv) < m else np.zeros((0, m))
    null = np.vstack([null, Vt[:len(sv)][sv <= tol * max(1.0, sv[0])]])
    mats = [sum(c * E for c, E in zip(vec, basis)) for vec in null]
    return KernelResult(mats, np.sort(full)[::-1])


# -- first-order system for (L, Y) ------------------------------------------------------

def _coefficients(hyp: HypersurfaceSample, Bf: BField, Gam: np.ndarray):
    """Per-direction 4x4 matrices and forcing for ``Z = (L_u, L_v, L_s, Y)``."""
    A = hyp.A_chart
    alow = lower(hyp, A)
    alow = 0.5 * (alow + np.swapaxes(alow, -1, -2))
    B, blow = Bf.B, Bf.b
    N = hyp.N
    psiB = np.einsum("...ki,...kd->...id", B, hyp.frame)       # psi_*(B d_i)
    Ms, Fs = [], []
    for i in range(3):
        M = np.zeros(A.shape[:-2] + (4, 4))
        M[..., :3, :3] = np.swapaxes(Gam[..., :, i, :], -1, -2)   # [j, k] = Gam^k_ij
        M[..., :3, 3] = alow[..., i, :]
        M[..., 3, :3] = -A[..., :, i]
        F = np.zeros(A.shape[:-2] + (4, N.shape[-1]))
        F[..., :3, :] = blow[..., i, :, None] * N[..., None, :]
        F[..., 3, :] = -psiB[..., i, :]
        Ms.append(M)
        Fs.append(F)
    return Ms, Fs


def _march_lines(M: np.ndarray, F: np.ndarray, Z0: np.ndarray, b: int, h: float) -> np.ndarray:
    """Crank-Nicolson along axis 0 of ``M``/``F`` (batched), starting from ``Z0`` at index ``b``."""
    n = M.shape[0]
    Z = np.zeros(F.shape)
    Z[b] = Z0
    eye = np.eye(4)
    for step, rng in ((h, range(b, n - 1)), (-h, range(b, 0, -1))):
        for m in rng:
            nxt = m + (1 if step > 0 else -1)
            lhs = eye - 0.5 * step * M[nxt]
            rhs = Z[m] + 0.5 * step * (M[m] @ Z[m] + F[m] + F[nxt])
            Z[nxt] = np.linalg.solve(lhs, rhs)
    return Z


def _march_S(Ms, Fs, chart: Grid, base, order: str) -> np.ndarray:
    shape = Fs[0].shape
    Z = np.zeros(shape)
    done = [False, False, False]
    for name in order:
        d = "uvs".index(name)
        idx = tuple(slice(None) if (done[e] or e == d) else base[e] for e in range(3))
        M = np.moveaxis(Ms[d][idx], _axis_after(idx, d), 0)
        F = np.moveaxis(Fs[d][idx], _axis_after(idx, d), 0)
        start = np.moveaxis(Z[idx], _axis_after(idx, d), 0)[base[d]]
        sol = _march_lines(M, F, start, base[d], chart.spacing[d])
        view = np.moveaxis(Z[idx], _axis_after(idx, d), 0)
        view[...] = sol
        done[d] = True
    return Z


def _axis_after(idx, d):
    """Position of axis ``d`` once integer indices in ``idx`` have dropped their axes."""
    return sum(1 for e in range(d) if isinstance(idx[e], slice))


def s_gate(hyp: HypersurfaceSample, scale: float, gate_scale: float = 1.0) -> float:
    return gate_scale * gate(hyp.chart.h, scale)


def integrate_S(hyp: HypersurfaceSample, Bf: BField, base=(0, 0, 0), gate_scale: float = 1.0,
                check: bool = True, Gam: np.ndarray | None = None):
    """March the linear system for ``(L_u, L_v, L_s, Y)`` from zero data at ``base``.

    Returns ``(L, Y, info)``.
    ``L`` has shape (nu, nv, ns, 3, d) (columns ``L d_j``), ``Y`` (nu, nv, ns, d).
    The compatibility residual compares the u-v-s and v-u-s marching orders.
    """
    if not hyp.regular_mask.all():
        raise SingularChartError(
            f"{int(np.sum(~hyp.regular_mask))} singular nodes: the (L, Y) system is marched on a fully "
            "regular chart; shrink the fibre range")
    Gam = chart_christoffels(hyp) if Gam is None else Gam
    Ms, Fs = _coefficients(hyp, Bf, Gam)
    Z1 = _march_S(Ms, Fs, hyp.chart, base, "uvs")
    Z2 = _march_S(Ms, Fs, hyp.chart, base, "vus")
    compat = float(np.max(np.abs(Z1 - Z2)))
    scale = float(np.max(np.abs(Z1))) + Bf.scale
    tol = s_gate(hyp, scale, gate_scale)
    info = {"S-compat": compat, "gate": tol, "scale": scale}
    if check and compat > tol:
        raise NonIntegrableError("S-compat", compat, tol)
    return Z1[..., :3, :], Z1[..., 3, :], info


def integrate_T(hyp: HypersurfaceSample, L: np.ndarray, base=(0, 0, 0)):
    """``d_i T = L d_i`` from ``T(base) = 0``; returns ``(T, path residual)``."""
    derivs = [L[..., i, :] for i in range(3)]
    T1 = march_integrate(derivs, hyp.chart, base, "uvs")
    T2 = march_integrate(derivs, hyp.chart, base, "vus")
    return T1, float(np.max(np.abs(T1 - T2)))


# -- verification ---------------------------------------------------------------------

def verify_bending(hyp: HypersurfaceSample, T, t_probe: float = 0.5, B: np.ndarray | None = None,
                   Y: np.ndarray | None = None, L: np.ndarray | None = None,
                   gate_scale: float = 1.0) -> dict:
    """Residual report for a bending field ``T`` sampled on the chart.

    Returns ``{name: {"value", "gate", "pass"}}`` plus ``"passed"``.
    """
    Tv = T.values if isinstance(T, VecField) else np.asarray(T, float)
    c = hyp.chart
    Lh = np.stack(_chart_derivs(Tv, c), axis=-2)                      # [i, d]
    fr, N = hyp.frame, hyp.N
    gram = np.einsum("...id,...jd->...ij", Lh, fr)
    beta = gram + np.swapaxes(gram, -1, -2)
    # metric of psi + t T minus (metric of psi + t^2 metric of T), per unit t
    var = np.abs(np.sum((fr + t_probe * Lh) ** 2, -1) - np.sum(fr**2, -1) - t_probe**2 * np.sum(Lh**2, -1))
    var = var / abs(t_probe) if t_probe != 0 else var
    out = {"iif": np.max(np.abs(beta), axis=(-1, -2)), "var": np.max(var, axis=-1),
           "beta": np.max(np.abs(beta), axis=(-1, -2))}
    # a robust size of dT: an isolated corrupted node must not widen its own gate
    scale = float(np.percentile(np.max(np.abs(Lh), axis=(-1, -2))[hyp.regular_mask], 90))
    if Y is not None:
        Yv = np.asarray(Y, float)
        out["tau"] = np.abs(np.einsum("...d,...d", Yv, N))
        theta = np.einsum("...d,...id->...i", Yv, fr) + np.einsum("...id,...d->...i", Lh, N)
        out["theta"] = np.max(np.abs(theta), axis=-1)
        scale += float(np.max(np.abs(Yv)))
    if B is not None:
        Gam = chart_christoffels(hyp)
        dL = np.stack(_chart_derivs(Lh, c), axis=-3)                 # [i, j, d] = d_i L_j
        cov = dL - np.einsum("...kij,...kd->...ijd", Gam, Lh)
        bhat = np.einsum("...ijd,...d->...ij", cov, N)
        blow = lower(hyp, B)
        out["recovered-B"] = np.max(np.abs(bhat - 0.5 * (blow + np.swapaxes(blow, -1, -2))), axis=(-1, -2))
        scale += float(np.max(np.abs(blow)))
        if Y is not None:
            # Y-equation uses the marched L when given, otherwise the recovered one
            Lc = Lh if L is None else L
            dY = np.stack(_chart_derivs(Yv, c), axis=-2)
            rhs = -np.einsum("...ki,...kd->...id", hyp.A_chart, Lc) - np.einsum("...ki,...kd->...id", B, fr)
            out["Y-equation"] = np.max(np.linalg.norm(dY - rhs, axis=-1), axis=-1)
    tol = gate_scale * gate(c.h, scale)
    mask = hyp.regular_mask
    report = {k: {"value": float(np.max(v[mask])), "gate": tol, "pass": bool(np.max(v[mask]) <= tol)}
              for k, v in out.items()}
    report["passed"] = all(r["pass"] for r in report.values())
    return report


@dataclass(frozen=True, eq=False)
class TrivialityResult:
    is_trivial: bool
    D: np.ndarray
    w: np.ndarray
    residual: float


def triviality_test(hyp: HypersurfaceSample, T, tol: float = 1e-6) -> TrivialityResult:
    """Least-squares fit ``T ~ D psi + w`` with ``D`` skew; relative residual decides."""
    Tv = T.values if isinstance(T, VecField) else np.asarray(T, float)
    mask = hyp.regular_mask
    P = hyp.psi[mask]
    Tm = Tv[mask]
    d = P.shape[-1]
    pairs = list(itertools.combinations(range(d), 2))
    m = len(pairs) + d
    rows = np.zeros((P.shape[0], d, m))
    for c, (a, b) in enumerate(pairs):
        # (E_ab - E_ba) psi: component a gets psi_b, component b gets -psi_a
        rows[:, a, c] = P[:, b]
        rows[:, b, c] = -P[:, a]
    rows[:, :, len(pairs):] = np.eye(d)
    Amat = rows.reshape(-1, m)
    rhs = Tm.reshape(-1)
    norm = np.linalg.norm(rhs)
    if norm == 0:
        return TrivialityResult(True, np.zeros((d, d)), np.zeros(d), 0.0)
    coef, *_ = np.linalg.lstsq(Amat, rhs, rcond=None)
    resid = float(np.linalg.norm(Amat @ coef - rhs) / norm)
    D = np.zeros((d, d))
    for c, (a, b) in enumerate(pairs):
        D[a, b], D[b, a] = coef[c], -coef[c]
    return TrivialityResult(resid <= tol, D, coef[len(pairs):], resid)


# -- full synthesis ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BendingTensors:
    B_chart: np.ndarray
    L_cols: np.ndarray
    Ycal: np.ndarray
    Tcal: np.ndarray
    residuals: dict = field(default_factory=dict)
    gates: dict = field(default_factory=dict)


def synthesize(hyp: HypersurfaceSample, cls: Classification, base=(0, 0, 0), gate_scale: float = 1.0,
               check: bool = True) -> BendingTensors:
    """B from D, then the (L, Y) system and T, with every construction residual collected."""
    Bf = build_B(hyp, cls)
    L, Y, info = integrate_S(hyp, Bf, base, gate_scale, check)
    T, path = integrate_T(hyp, L, base)
    tol = s_gate(hyp, info["scale"], gate_scale)
    res = dict(Bf.residuals)
    res["S-compat"] = info["S-compat"]
    res["T-path"] = path
    gates = {k: tol for k in res}
    if check and path > tol:
        raise NonIntegrableError("T-path", path, tol)
    return BendingTensors(Bf.B, L, Y, T, res, gates)


# -- dimension of the bending space -------------------------------------------------------

def _smooth_null_basis(rows: np.ndarray, ref: int, rel_tol: float) -> np.ndarray:
    """Per-node null space of ``rows`` (N, r, m), continued smoothly from node ``ref``.

    Reference null vectors are projected onto each node's null space and
    re-orthonormalised (QR with positive diagonal), so the basis is as smooth
    as the rows themselves.
    """
    N, r, m = rows.shape
    if r == 0:
        return np.broadcast_to(np.eye(m), (N, m, m)).copy()
    _, sv, Vt = np.linalg.svd(rows, full_matrices=True)
    scale = np.maximum(sv[:, :1], 1e-300)
    rank = np.sum(sv > rel_tol * scale, axis=1)
    k = m - int(rank[ref])
    if k == 0:
        return np.zeros((N, m, 0))
    if np.any(m - rank != k):
        raise RankError(f"pointwise constraint nullity varies over the chart ({sorted(set((m - rank).tolist()))})")
    null = np.swapaxes(Vt, -1, -2)[:, :, m - k:]            # (N, m, k)
    seed = null[ref]
    proj = null @ (np.swapaxes(null, -1, -2) @ seed)
    q, rr = np.linalg.qr(proj)
    sgn = np.sign(np.diagonal(rr, axis1=-2, axis2=-1))
    sgn[sgn == 0] = 1
    return q * sgn[:, None, :]


def _pointwise_chart_rows(hyp: HypersurfaceSample) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise rows on lowered chart coordinates ``(b_uu, b_uv, b_us, b_vv, b_vs, b_ss)``.

    Returns ``(rows (N, r, 6), to_lower (N, 6, 6))`` where ``to_lower`` maps the
    orthonormal symmetric coordinates to the lowered chart entries.
    """
    A = hyp.A_chart.reshape(-1, 3, 3)
    G = hyp.safe_metric.reshape(-1, 3, 3)
    R = np.swapaxes(np.linalg.cholesky(G), -1, -2)
    Ao = R @ A @ np.linalg.inv(R)
    Ao = 0.5 * (Ao + np.swapaxes(Ao, -1, -2))
    basis = np.array(sym_basis(3))                               # (6, 3, 3)
    rows = _wedge_rows(Ao)
    if hyp.nullity_dir is not None:
        t = np.einsum("nij,nj->ni", R, hyp.nullity_dir.reshape(-1, 3))
        rows = np.concatenate([rows, _kernel_rows(t[..., None], 3)], axis=-2)
    rows = _normalise_rows(rows)
    # lowered chart form of B_o: b = R^T B_o R
    low = np.einsum("nki,ekl,nlj->neij", R, basis, R)            # (N, 6, 3, 3)
    iu = np.triu_indices(3)
    to_lower = low[:, :, iu[0], iu[1]]                            # (N, 6 basis, 6 entries)
    return rows, to_lower


def _full_sym(v: np.ndarray) -> np.ndarray:
    """(…, 6) upper-triangular entries to (…, 3, 3) symmetric matrices."""
    out = np.zeros(v.shape[:-1] + (3, 3))
    iu = np.triu_indices(3)
    out[..., iu[0], iu[1]] = v
    out[..., iu[1], iu[0]] = v
    return out


def _codazzi_split(hyp: HypersurfaceSample, q: np.ndarray, Gam: np.ndarray):
    """For ``b = sum_a c_a q_a``: Codazzi = ``E . dc + R c`` per node.

    ``q`` has shape (chart..., m, 3, 3).  Returns ``E`` (chart..., 9, 3m) with
    columns ordered (direction, a) and ``R`` (chart..., 9, m).
    """
    m = q.shape[-3]
    dq = np.stack(_chart_derivs(q, hyp.chart), axis=-4)          # [i, a, j, k] = d_i q_a,jk
    pairs = [(0, 1), (0, 2), (1, 2)]
    E = np.zeros(q.shape[:-3] + (9, 3, m))
    Rm = np.zeros(q.shape[:-3] + (9, m))
    for p, (i, j) in enumerate(pairs):
        for k in range(3):
            row = 3 * p + k
            E[..., row, i, :] += q[..., :, j, k]
            E[..., row, j, :] -= q[..., :, i, k]
            Rm[..., row, :] = (dq[..., i, :, j, k] - dq[..., j, :, i, k]
                               - np.einsum("...l,...al->...a", Gam[..., :, i, k], q[..., :, j, :])
                               + np.einsum("...l,...al->...a", Gam[..., :, j, k], q[..., :, i, :]))
    return E.reshape(E.shape[:-2] + (3 * m,)), Rm


def reduced_codazzi(hyp: HypersurfaceSample, Gam: np.ndarray | None = None, ref=None,
                    zero_tol: float = 1e-3, rank_tol: float = 1e-4, max_rounds: int = 4) -> dict:
    """Pointwise-admissible coefficient basis and first-order Codazzi data.

    Starting from the kernel of the pointwise constraints, zero-order Codazzi
    relations (rows in the left null space of the derivative block) are
    eliminated until none remain.  The result ``q`` spans the admissible B
    (lowered) per node; ``E``/``R`` give Codazzi as ``E dc + R c = 0``.
    ``q`` inherits finite-difference noise from the eliminated rows, hence the
    loose relative ``rank_tol`` on the derivative block.
    """
    Gam = chart_christoffels(hyp) if Gam is None else Gam
    shape = hyp.chart.shape
    ref = tuple(s // 2 for s in shape) if ref is None else ref
    ref_flat = int(np.ravel_multi_index(ref, shape))
    rows, to_lower = _pointwise_chart_rows(hyp)
    coef = _smooth_null_basis(rows, ref_flat, 1e-9)               # (N, 6, m) orthonormal coords
    low = np.einsum("nem,nef->nmf", coef, to_lower)               # (N, m, 6) lowered entries
    q = _full_sym(low).reshape(shape + (low.shape[1], 3, 3))
    for _ in range(max_rounds):
        m = q.shape[-3]
        if m == 0:
            break
        E, Rm = _codazzi_split(hyp, q, Gam)
        U, sv, _ = np.linalg.svd(E.reshape(-1, 9, 3 * m))
        rank = np.sum(sv > rank_tol * np.maximum(sv[:, :1], 1e-300), axis=1)
        r = int(np.max(rank))
        Z = np.einsum("nrz,nra->nza", U[:, :, r:], Rm.reshape(-1, 9, m))
        Rn = np.maximum(np.linalg.norm(Rm.reshape(-1, 9, m), axis=(1, 2)),
                        np.linalg.norm(E.reshape(-1, 9, 3 * m), axis=(1, 2)))[:, None, None]
        Z = Z / np.maximum(Rn, 1e-300)
        if Z.shape[1] == 0 or np.max(np.abs(Z)) <= zero_tol:
            break
        keep = _smooth_null_basis(Z, ref_flat, zero_tol)          # (N, m, m')
        q = np.einsum("nam,najk->nmjk", keep, q.reshape(-1, m, 3, 3)).reshape(shape + (keep.shape[-1], 3, 3))
        # renormalise for a uniform Frobenius scale
        q = q / np.linalg.norm(q, axis=(-1, -2), keepdims=True)
    m = q.shape[-3]
    if m == 0:
        return {"q": q, "m": 0, "E": None, "R": None, "pointwise_rows": rows}
    E, Rm = _codazzi_split(hyp, q, Gam)
    return {"q": q, "m": m, "E": E, "R": Rm, "pointwise_rows": rows}


def _gap_nullity(sv: np.ndarray, gap: float) -> tuple[int, float]:
    s = np.sort(sv)
    if s.size == 0:
        return 0, np.inf
    ratios = s[1:] / np.maximum(s[:-1], 1e-300 * max(s[-1], 1e-300))
    hits = np.nonzero(ratios > gap)[0]
    if hits.size:
        k = int(hits[0]) + 1
        return k, float(ratios[k - 1])
    return 0, float(np.max(ratios)) if ratios.size else np.inf


def bending_space_dimension(hyp: HypersurfaceSample, probe=None, stride: int = 1, gap: float = 1e3,
                            det_tol: float = 1e-4, rank_tol: float = 1e-4) -> dict:
    """Numerical dimension of admissible Codazzi B on a probe block of the chart.

    ``probe`` is ``((i0, j0, k0), (ni, nj, nk))``; default is a centred block of at
    most 9 x 9 x 3 nodes sampled with ``stride``.  Derivatives that Codazzi
    determines become trapezoid relations on probe edges.
    """
    shape = hyp.chart.shape
    if probe is None:
        counts = tuple(min(c, (s - 1) // stride + 1) for c, s in zip((9, 9, 3), shape))
        start = tuple((s - 1 - stride * (c - 1)) // 2 for s, c in zip(shape, counts))
    else:
        start, counts = (tuple(x) for x in probe)
    nodes = int(np.prod(counts))
    if 6 * nodes > 10_000:
        raise ProbeSizeError(f"probe has {6 * nodes} symmetric-B unknowns (limit 10^4)")
    idx = [start[a] + stride * np.arange(counts[a]) for a in range(3)]
    if any(ix[-1] >= s for ix, s in zip(idx, shape)):
        raise ProbeSizeError("probe block extends past the chart")
    if hyp.nullity_dir is not None:
        rk = rank_profile(hyp)["rank"]
        if np.any(rk[np.ix_(*idx)] != 2):
            raise RankError("probe contains nodes of rank other than 2")
    red = reduced_codazzi(hyp, ref=tuple(int(ix[len(ix) // 2]) for ix in idx), rank_tol=rank_tol)
    m = red["m"]
    if m == 0:
        rows = red["pointwise_rows"].reshape(shape + red["pointwise_rows"].shape[1:])
        sv = np.linalg.svd(rows[np.ix_(*idx)].reshape((-1,) + rows.shape[-2:]), compute_uv=False)
        return {"singular_values": np.sort(sv.ravel()), "nullity": 0, "gap_ratio": np.inf,
                "per_node_dim": 0, "probe": (start, counts), "stride": stride}
    E = red["E"][np.ix_(*idx)]
    Rm = red["R"][np.ix_(*idx)]
    En = E.reshape(-1, 9, 3 * m)
    _, sv, Vt = np.linalg.svd(En)
    rank = np.sum(sv > rank_tol * np.maximum(sv[:, :1], 1e-300), axis=1)
    pinv = np.linalg.pinv(En, rcond=rank_tol)                    # (n, 3m, 9)
    K = -np.einsum("nxr,nra->nxa", pinv, Rm.reshape(-1, 9, m))   # d c = K c
    P = np.zeros((En.shape[0], 3 * m, 3 * m))
    for n in range(En.shape[0]):
        V = Vt[n, :rank[n]]
        P[n] = V.T @ V
    determined = np.abs(1 - np.diagonal(P, axis1=1, axis2=2)) <= det_tol   # (n, 3m)
    K = K.reshape(tuple(counts) + (3, m, m))
    determined = determined.reshape(tuple(counts) + (3, m))
    h = [stride * sp for sp in hyp.chart.spacing]
    nid = np.arange(nodes * m).reshape(tuple(counts) + (m,))
    rows = []
    for d in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[d], hi[d] = slice(0, -1), slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        for a in range(m):
            ok = determined[lo][..., d, a] & determined[hi][..., d, a]
            for p in zip(*np.nonzero(ok)):
                row = np.zeros(nodes * m)
                pl = tuple(int(x) for x in p)
                ph = list(pl)
                ph[d] += 1
                ph = tuple(ph)
                row[nid[ph][a]] += 1 / h[d]
                row[nid[pl][a]] -= 1 / h[d]
                row[nid[pl]] -= 0.5 * K[pl][d, a]
                row[nid[ph]] -= 0.5 * K[ph][d, a]
                rows.append(row / np.linalg.norm(row))
    Amat = np.array(rows) if rows else np.zeros((0, nodes * m))
    if Amat.shape[0] < Amat.shape[1]:
        Amat = np.vstack([Amat, np.zeros((Amat.shape[1] - Amat.shape[0], Amat.shape[1]))])
    sv = np.linalg.svd(Amat, compute_uv=False)
    nullity, ratio = _gap_nullity(sv, gap)
    return {"singular_values": np.sort(sv), "nullity": nullity, "gap_ratio": ratio,
            "per_node_dim": m, "determined": determined.reshape(-1, 3, m).all(axis=0).tolist(),
            "probe": (start, counts), "stride": stride}


# -- ruled hypersurfaces ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RuledBending:
    theta_ruled: np.ndarray       # function theta on the chart
    B: np.ndarray                 # endomorphism, lowered form theta X^b (x) X^b
    X: np.ndarray                 # unit horizontal field with <A X, Y> != 0
    Y: np.ndarray                 # unit ruling direction in Delta^perp
    seed_values: np.ndarray
    codazzi: dict                 # t -> sup Codazzi residual of A + t B
    gate: float

    def A_family(self, hyp: HypersurfaceSample, t: float) -> np.ndarray:
        return hyp.A_chart + t * self.B


def _unit(hyp: HypersurfaceSample, V: np.ndarray) -> np.ndarray:
    n2 = np.einsum("...i,...ij,...j->...", V, hyp.safe_metric, V)
    return V / np.sqrt(n2)[..., None]


def ruled_frame(hyp: HypersurfaceSample, cls: Classification) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal ``X, Y`` of the horizontal space with ``Y`` spanning the rulings."""
    J = cls.J_bar                                          # nilpotent: ker J = im J = ruling
    # kernel direction of J as a quotient vector: (J[1,1], -J[1,0]) or (J[0,1], -J[0,0])
    k1 = np.stack([J[..., 1, 1], -J[..., 1, 0]], -1)
    k2 = np.stack([J[..., 0, 1], -J[..., 0, 0]], -1)
    y = np.where((np.linalg.norm(k1, axis=-1) >= np.linalg.norm(k2, axis=-1))[..., None], k1, k2)
    y = y * np.sign(y[..., 1:2] + (y[..., 1:2] == 0))
    Hb = horizontal_basis(hyp)[..., :2]
    Y = _unit(hyp, np.einsum("...ka,...a->...k", Hb, np.broadcast_to(y[:, :, None], Hb.shape[:-2] + (2,))))
    G = hyp.safe_metric
    Xu = Hb[..., 0]
    Xp = Xu - np.einsum("...i,...ij,...j->...", Xu, G, Y)[..., None] * Y
    X = _unit(hyp, Xp)
    return X, Y


def ruled_bending(hyp: HypersurfaceSample, cls: Classification, theta0, base=(0, 0, 0),
                  t_values=(0.1, 1.0), gate_scale: float = 1.0, lateral_tol: float = 1e-4) -> RuledBending:
    """Bending ``A(t) = A + tB`` with ``B = theta X^b (x) X^b`` of a ruled hypersurface.

    ``theta`` solves ``Y(theta) = <nabla_X X, Y> theta`` and
    ``T(theta) = <nabla_X X, T> theta``; it is seeded on the u-line through
    ``base`` (transversal to the rulings) and carried along v and s by the
    exponential of trapezoid path integrals, so it is exactly linear in the seed.
    """
    if cls.verdict != "ruled":
        raise ClassificationError(f"ruled bendings need a ruled hypersurface, got {cls.verdict!r}")
    theta0 = np.broadcast_to(np.asarray(theta0, float), (hyp.chart.shape[0],))
    Gam = chart_christoffels(hyp)
    X, Y = ruled_frame(hyp, cls)
    T = hyp.nullity_dir
    G = hyp.safe_metric
    dX = np.stack(_chart_derivs(X, hyp.chart), axis=-1)                       # [k, i] = d_i X^k
    nXX = np.einsum("...ki,...i->...k", dX, X) + np.einsum("...kij,...i,...j->...k", Gam, X, X)
    rho_Y = np.einsum("...i,...ij,...j->...", nXX, G, Y)
    rho_T = np.einsum("...i,...ij,...j->...", nXX, G, T)
    lat_T = np.max(np.abs(T[..., :2])) / np.max(np.abs(T))
    lat_Y = np.max(np.abs(Y[..., 0]) / np.linalg.norm(Y, axis=-1))
    if lat_T > lateral_tol or lat_Y > lateral_tol:
        raise NotImplementedError(
            "ruled bendings are marched along coordinate lines: the rulings must be v-lines and the "
            f"nullity the s-lines (lateral components {lat_Y:.2e}, {lat_T:.2e})")
    kappa_s = rho_T / T[..., 2]
    kappa_v = (rho_Y - Y[..., 2] * kappa_s) / Y[..., 1]
    i0, j0, k0 = base
    hv, hs = hyp.chart.hv, hyp.chart.hs

    def log_growth(k, h, axis, b):
        c = np.moveaxis(k, axis, 0)
        cum = np.zeros_like(c)
        cum[1:] = np.cumsum(0.5 * h * (c[1:] + c[:-1]), axis=0)
        cum = cum - cum[b]
        return np.moveaxis(cum, 0, axis)

    gv = log_growth(kappa_v[:, :, k0], hv, 1, j0)                             # (nu, nv)
    gs = log_growth(kappa_s, hs, 2, k0)                                       # (nu, nv, ns)
    theta = theta0[:, None, None] * np.exp(gv[:, :, None] + gs - gs[:, :, k0:k0 + 1])
    Xf = np.einsum("...ij,...j->...i", G, X)
    blow = theta[..., None, None] * np.einsum("...i,...j->...ij", Xf, Xf)
    B = np.linalg.solve(G, blow)
    mask = hyp.stencil_mask if hyp.stencil_mask.any() else hyp.regular_mask
    cod = {float(t): float(np.max(codazzi_field(hyp, hyp.A_chart + t * B, Gam)[mask])) for t in t_values}
    tol = gate_scale * gate(hyp.chart.h)
    return RuledBending(theta, B, X, Y, np.array(theta0), cod, tol)


# -- bendability of a family ----------------------------------------------------------------

def bendability_flag(family: PhiFamily) -> dict:
    """``(|phi|^2)_uv`` (real) or ``Lap(|phi|^2)/4`` (complex) relative to ``sup |phi|^2``."""
    d = family.derivatives()
    phi = {k: d[k][..., 1:] for k in ("", "u", "v", "uu", "uv", "vv")}
    dot = lambda a, b: np.einsum("...d,...d", phi[a], phi[b])  # noqa: E731
    if family.kind == "real":
        val = 2 * (dot("u", "v") + dot("", "uv"))
    elif family.kind == "complex":
        val = 0.5 * (dot("u", "u") + dot("", "uu") + dot("v", "v") + dot("", "vv"))
    else:
        raise ValueError(f"kind must be 'real' or 'complex', not {family.kind!r}")
    norm2 = dot("", "")
    g = family.grid
    residual = float(np.max(np.abs(val[1:-1, 1:-1])) / np.max(norm2))
    tol = 50 * g.h**2
    return {"bendable": residual <= tol, "residual": residual, "gate": tol}
