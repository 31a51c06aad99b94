"""Uniform parameter grids, finite-difference jets and line integration of one-forms.

Arrays carried by the field containers are indexed ``[i, j]`` (or ``[i, j, k]``)
with ``i`` running along ``u``, ``j`` along ``v`` and ``k`` along ``s``; vector
fields carry the ambient components on a trailing axis.  The flat on-disk order
is the transpose (u fastest), see :mod:`infbend.io`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

AXES = {"u": 0, "v": 1, "s": 2}


class GridError(ValueError):
    """Degenerate range or too few nodes."""


class DimensionError(ValueError):
    """Requested direction is not present on the grid."""


class NonClosedFormError(ValueError):
    def __init__(self, residual: float, tolerance: float):
        super().__init__(
            f"one-form is not closed: exactness residual {residual:.3e} > tolerance {tolerance:.3e}"
        )
        self.residual = residual
        self.tolerance = tolerance


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid over (u, v) or (u, v, s), endpoints included."""

    ranges: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.ranges) != len(self.counts) or len(self.counts) not in (2, 3):
            raise GridError("grid must have 2 or 3 directions")
        for (a, b), n in zip(self.ranges, self.counts):
            if not (np.isfinite(a) and np.isfinite(b)) or b <= a:
                raise GridError(f"degenerate range [{a}, {b}]")
            if int(n) != n or n < 5:
                raise GridError(f"need at least 5 nodes per direction, got {n}")

    @property
    def ndim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(n) for n in self.counts)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / (n - 1) for (a, b), n in zip(self.ranges, self.counts))

    @property
    def hu(self) -> float:
        return self.spacing[0]

    @property
    def hv(self) -> float:
        return self.spacing[1]

    @property
    def hs(self) -> float:
        return self.spacing[2]

    @property
    def h(self) -> float:
        """Largest spacing; the scale used by all O(h^2) gates."""
        return max(self.spacing)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis(self, name: str) -> np.ndarray:
        d = axis_index(self, name)
        a, b = self.ranges[d]
        return np.linspace(a, b, self.counts[d])

    def mesh(self) -> tuple[np.ndarray, ...]:
        names = "uvs"[: self.ndim]
        return tuple(np.meshgrid(*(self.axis(c) for c in names), indexing="ij"))

    def plane(self) -> "Grid":
        """The (u, v) grid underlying a 3-D chart."""
        return Grid(self.ranges[:2], self.counts[:2])


Grid2 = Grid
Grid3 = Grid


def make_grid(u_range, v_range, nu: int, nv: int) -> Grid:
    return Grid((tuple(map(float, u_range)), tuple(map(float, v_range))), (int(nu), int(nv)))


def make_grid3(u_range, v_range, s_range, nu: int, nv: int, ns: int) -> Grid:
    return Grid(
        (tuple(map(float, u_range)), tuple(map(float, v_range)), tuple(map(float, s_range))),
        (int(nu), int(nv), int(ns)),
    )


def axis_index(grid: Grid, name: str) -> int:
    d = AXES.get(name)
    if d is None or d >= grid.ndim:
        raise DimensionError(f"direction {name!r} not present on a {grid.ndim}-D grid")
    return d


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"expected values of shape {self.grid.shape}, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("scalar field has non-finite values")
        object.__setattr__(self, "values", vals)

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _vals(other))

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * _vals(c))

    __rmul__ = __mul__

    def sup(self, interior: bool = False) -> float:
        v = interior_view(self.values, self.grid.ndim) if interior else self.values
        return float(np.max(np.abs(v)))


@dataclass(frozen=True, eq=False)
class VecField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape[:-1] != self.grid.shape or vals.ndim != self.grid.ndim + 1:
            raise ValueError(f"expected values of shape {self.grid.shape} + (dim,), got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("vector field has non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def ambient_dim(self) -> int:
        return self.values.shape[-1]

    def __add__(self, other):
        return VecField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return VecField(self.grid, self.values - _vals(other))

    def __mul__(self, c):
        c = _vals(c)
        if np.ndim(c) == self.grid.ndim:
            c = c[..., None]
        return VecField(self.grid, self.values * c)

    __rmul__ = __mul__

    def norm(self) -> ScalarField:
        return ScalarField(self.grid, np.linalg.norm(self.values, axis=-1))


@dataclass(frozen=True, eq=False)
class OneForm2:
    """``comp_u du + comp_v dv`` on a 2-D grid."""

    comp_u: ScalarField
    comp_v: ScalarField
    grid: Grid = field(init=False)

    def __post_init__(self):
        if self.comp_u.grid != self.comp_v.grid:
            raise ValueError("one-form components live on different grids")
        if self.comp_u.grid.ndim != 2:
            raise DimensionError("one-forms are defined on 2-D grids")
        object.__setattr__(self, "grid", self.comp_u.grid)


def _vals(x):
    return x.values if isinstance(x, (ScalarField, VecField)) else x


def interior_view(arr: np.ndarray, ndim: int) -> np.ndarray:
    sl = tuple(slice(1, -1) for _ in range(ndim))
    return arr[sl]


# -- finite differences --------------------------------------------------------

def d1(arr: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Second-order first derivative along ``axis``; one-sided 3-point stencils at the ends."""
    a = np.moveaxis(np.asarray(arr, dtype=float), axis, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - a[:-2]) / (2 * h)
    out[0] = (-3 * a[0] + 4 * a[1] - a[2]) / (2 * h)
    out[-1] = (3 * a[-1] - 4 * a[-2] + a[-3]) / (2 * h)
    return np.moveaxis(out, 0, axis)


def d1_4(arr: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order first derivative; one-sided 5-point stencils on the two end layers."""
    a = np.moveaxis(np.asarray(arr, dtype=float), axis, 0)
    out = np.empty_like(a)
    out[2:-2] = (a[:-4] - 8 * a[1:-3] + 8 * a[3:-1] - a[4:]) / (12 * h)
    out[0] = (-25 * a[0] + 48 * a[1] - 36 * a[2] + 16 * a[3] - 3 * a[4]) / (12 * h)
    out[1] = (-3 * a[0] - 10 * a[1] + 18 * a[2] - 6 * a[3] + a[4]) / (12 * h)
    out[-1] = (25 * a[-1] - 48 * a[-2] + 36 * a[-3] - 16 * a[-4] + 3 * a[-5]) / (12 * h)
    out[-2] = (3 * a[-1] + 10 * a[-2] - 18 * a[-3] + 6 * a[-4] - a[-5]) / (12 * h)
    return np.moveaxis(out, 0, axis)


def d2(arr: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Second-order second derivative; one-sided 4-point stencils at the ends."""
    a = np.moveaxis(np.asarray(arr, dtype=float), axis, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - 2 * a[1:-1] + a[:-2]) / h**2
    out[0] = (2 * a[0] - 5 * a[1] + 4 * a[2] - a[3]) / h**2
    out[-1] = (2 * a[-1] - 5 * a[-2] + 4 * a[-3] - a[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def partial(arr: np.ndarray, grid: Grid, spec: str) -> np.ndarray:
    """Partial derivative of raw nodal data; ``spec`` is e.g. ``"u"``, ``"vv"``, ``"uv"``."""
    if len(spec) == 1:
        d = axis_index(grid, spec)
        return d1(arr, d, grid.spacing[d])
    if len(spec) == 2 and spec[0] == spec[1]:
        d = axis_index(grid, spec[0])
        return d2(arr, d, grid.spacing[d])
    if len(spec) == 2:
        a, b = axis_index(grid, spec[0]), axis_index(grid, spec[1])
        return d1(d1(arr, a, grid.spacing[a]), b, grid.spacing[b])
    raise ValueError(f"unsupported derivative {spec!r}")


def diff(f, direction: str, order: int | str = 1):
    """Derivative of a field.

    ``diff(f, "u")``, ``diff(f, "u", 2)`` or the mixed ``diff(f, "uv")``; ``order``
    may also be ``"mixed"`` with a two-letter direction.
    """
    if len(direction) == 2:
        spec = direction
    elif order == 2:
        spec = direction * 2
    elif order == 1:
        spec = direction
    else:
        raise ValueError(f"bad derivative order {order!r}")
    return type(f)(f.grid, partial(f.values, f.grid, spec))


# -- one-forms ----------------------------------------------------------------

def exactness_residual(omega: OneForm2) -> ScalarField:
    """``d(comp_v)/du - d(comp_u)/dv`` at every node."""
    g = omega.grid
    curl = d1(omega.comp_v.values, 0, g.hu) - d1(omega.comp_u.values, 1, g.hv)
    return ScalarField(g, curl)


def default_closedness_tolerance(omega: OneForm2) -> float:
    g = omega.grid
    sup = max(omega.comp_u.sup(), omega.comp_v.sup())
    return 50 * g.h**2 * (sup + 1)


def _cumtrapz(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    f = np.moveaxis(f, axis, 0)
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * h * (f[1:] + f[:-1]), axis=0)
    return np.moveaxis(out, 0, axis)


def _integrate_order(cu: np.ndarray, cv: np.ndarray, hu: float, hv: float, base, first: str):
    i0, j0 = base
    if first == "u":
        line = _line_from(cu[:, j0], hu, i0)            # along v = v_j0
        return line[:, None] + _line_from_2d(cv, hv, j0, axis=1)
    line = _line_from(cv[i0, :], hv, j0)
    return line[None, :] + _line_from_2d(cu, hu, i0, axis=0)


def _line_from(f: np.ndarray, h: float, k0: int) -> np.ndarray:
    c = _cumtrapz(f, h, 0)
    return c - c[k0]


def _line_from_2d(f: np.ndarray, h: float, k0: int, axis: int) -> np.ndarray:
    c = _cumtrapz(f, h, axis)
    ref = np.take(c, [k0], axis=axis)
    return c - ref


def path_integrate(omega: OneForm2, base=(0, 0), tol: float | None = None,
                   first: str = "u") -> ScalarField:
    """Potential of a closed one-form, zero at ``base``.

    Trapezoid rule along the u-line through ``base``, then along every v-line
    (``first="v"`` swaps the roles).  Raises :class:`NonClosedFormError` when the
    exactness residual exceeds ``tol`` (default ``50 h^2 (sup|omega| + 1)``).
    """
    g = omega.grid
    tol = default_closedness_tolerance(omega) if tol is None else tol
    res = exactness_residual(omega).sup()
    if res > tol:
        raise NonClosedFormError(res, tol)
    phi = _integrate_order(omega.comp_u.values, omega.comp_v.values, g.hu, g.hv, base, first)
    return ScalarField(g, phi)


def path_discrepancy(omega: OneForm2, base=(0, 0)) -> float:
    """Sup difference between u-first and v-first integration of ``omega``."""
    g = omega.grid
    a = _integrate_order(omega.comp_u.values, omega.comp_v.values, g.hu, g.hv, base, "u")
    b = _integrate_order(omega.comp_u.values, omega.comp_v.values, g.hu, g.hv, base, "v")
    return float(np.max(np.abs(a - b)))


def march_integrate(derivs: list[np.ndarray], grid: Grid, base=None, order: str = "uvs") -> np.ndarray:
    """Integrate a gradient field given per direction (trapezoid), zero at ``base``.

    ``derivs[d]`` has the grid shape plus any trailing component axes.  The path
    follows ``order``: the first direction along the line through the base node,
    then every line of the second direction, and so on.
    """
    nd = grid.ndim
    base = (0,) * nd if base is None else tuple(base)
    out = np.zeros_like(np.asarray(derivs[0], dtype=float))
    done = [False] * nd
    for name in order[:nd]:
        d = axis_index(grid, name)
        h = grid.spacing[d]
        f = np.asarray(derivs[d], dtype=float)
        # restrict the source to the hyperplane already covered: values on it
        # come from `out` at the base coordinate of the remaining directions.
        idx = [slice(None) if done[e] or e == d else slice(base[e], base[e] + 1) for e in range(nd)]
        sub = f[tuple(idx)]
        inc = _cumtrapz(sub, h, d)
        inc = inc - np.take(inc, [base[d]], axis=d)
        start = out[tuple(idx[e] if e != d else slice(base[d], base[d] + 1) for e in range(nd))]
        filled = start + inc
        target = tuple(slice(None) if done[e] or e == d else slice(base[e], base[e] + 1) for e in range(nd))
        out[target] = filled
        done[d] = True
        if all(done):
            break
    return out
