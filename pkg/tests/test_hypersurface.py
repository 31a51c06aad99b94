import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from infbend.examples import REGISTRY, build_example, random_rotation
from infbend.grid_calculus import make_grid
from infbend.hypersurface import (
    HYPERSURFACE_RESIDUALS, NowhereRegularError, RankError, classification_residuals, classify, cross4,
    envelope_crosscheck, gauss_parametrize, gauss_residuals, hyperbolic_check, metric_adjoint,
    pair_from_jets, rank_profile, splitting_tensor, to_orthonormal,
)

vec4 = arrays(np.float64, 4, elements=st.floats(-2, 2))


@given(vec4, vec4, vec4)
def test_cross4_is_orthogonal_and_alternating(a, b, c):
    x = cross4(a, b, c)
    scale = 1 + np.linalg.norm(a) * np.linalg.norm(b) * np.linalg.norm(c)
    for y in (a, b, c):
        assert abs(x @ y) <= 1e-9 * scale
    assert np.allclose(cross4(b, a, c), -x)
    # |a x b x c|^2 is the Gram determinant of (a, b, c)
    M = np.stack([a, b, c])
    assert x @ x == pytest.approx(np.linalg.det(M @ M.T), abs=1e-9 * scale**2)


@settings(max_examples=30)
@given(arrays(np.float64, (3, 3), elements=st.floats(-1, 1)))
def test_metric_adjoint_of_self_adjoint_is_identity_map(X):
    G = X @ X.T + np.eye(3)
    S = np.linalg.solve(G, X + X.T)       # G-self-adjoint
    assert np.allclose(metric_adjoint(S, G), S, atol=1e-9)
    Eo = to_orthonormal(S, G)
    assert np.allclose(Eo, Eo.T, atol=1e-9)


def test_gauss_parametrization_is_consistent(clifford):
    hyp = clifford.hyp
    pair = clifford.pair
    # the support function: <psi, N> = gamma on every fibre
    supp = np.einsum("...d,...d", hyp.psi, hyp.N)
    assert np.allclose(supp, pair.gamma.values[:, :, None], atol=1e-12)
    assert hyp.diagnostics["normal-tangent"] <= 1e-8
    table = gauss_residuals(hyp)
    assert all(r["pass"] for r in table.values())


def test_envelope_leaves_contain_the_fibres(clifford, elliptic):
    for ex in (clifford, elliptic):
        assert envelope_crosscheck(ex.hyp, ex.family)["max_distance"] <= 1e-10


def test_rank_profiles(clifford, sphere):
    assert rank_profile(clifford.hyp)["histogram"] == {2: clifford.hyp.regular_mask.size}
    assert set(rank_profile(sphere.hyp)["histogram"]) == {3}
    assert sphere.hyp.nullity_dir is None
    with pytest.raises(RankError):
        splitting_tensor(sphere.hyp)


def test_nullity_is_the_fibre_direction(clifford):
    T = clifford.hyp.nullity_dir
    assert np.allclose(np.abs(T[..., 2]), 1.0, atol=1e-9)
    AT = np.einsum("...ij,...j->...i", clifford.hyp.A_chart, T)
    assert np.max(np.abs(AT)) < 1e-9


def test_splitting_tensor_matches_closed_form(clifford, elliptic, ruled):
    for ex in (clifford, elliptic, ruled):
        st_ = splitting_tensor(ex.hyp)
        assert st_["closed_form_residual"] < 1e-4
        assert st_["codazzi"] < 0.05


@pytest.mark.parametrize("name,verdict", [(n, f(n=17, ns=9).expected) for n, f in REGISTRY.items()
                                          if n != "sphere-patch"])
def test_classification_verdicts(name, verdict):
    cls = classify(build_example(name).hyp)
    assert cls.verdict == verdict


def test_structure_tensors(clifford_cls, elliptic, ruled_cls):
    assert hyperbolic_check(clifford_cls.J_bar, "hyperbolic") < 1e-8
    # in conjugate coordinates the structure is diagonal
    assert np.allclose(clifford_cls.J_bar, np.diag([1.0, -1.0]), atol=1e-6)
    cls = classify(elliptic.hyp)
    assert hyperbolic_check(cls.J_bar, "elliptic") < 1e-8
    assert np.allclose(cls.J_bar, [[0.0, -1.0], [1.0, 0.0]], atol=1e-3)
    assert np.max(np.abs(ruled_cls.J_bar @ ruled_cls.J_bar)) < 1e-6


def test_ruled_determinant_within_gate(ruled, ruled_cls):
    assert ruled_cls.residuals["det-D"] <= 100 * ruled.hyp.chart.plane().h ** 2


def test_verdicts_stable_under_rotation():
    Q = random_rotation(4, seed=3)
    for name in ("clifford", "elliptic-demo", "ruled-demo", "cone"):
        a = classify(build_example(name, 17, 9).hyp)
        b = classify(build_example(name, 17, 9, rotation=Q).hyp)
        assert a.verdict == b.verdict
        if a.J_bar is not None:
            assert np.max(np.abs(a.J_bar - b.J_bar)) < 1e-10


def test_classification_table_is_complete(clifford, clifford_cls, cone):
    for ex in (clifford, cone):
        cls = clifford_cls if ex is clifford else classify(ex.hyp)
        table = {**gauss_residuals(ex.hyp), **classification_residuals(ex.hyp, cls)}
        assert set(table) == set(HYPERSURFACE_RESIDUALS)
        assert all(r["pass"] is not False for r in table.values())


def test_nowhere_regular_detected():
    # gamma = 0 over a totally geodesic sphere: P_w vanishes identically
    g = make_grid((-0.3, 0.3), (-0.3, 0.3), 9, 9)
    U, V = g.mesh()
    z = np.zeros_like(U)
    cu, su, cv, sv = np.cos(U), np.sin(U), np.cos(V), np.sin(V)
    h = {"": np.stack([cu * cv, su * cv, sv, z], -1), "u": np.stack([-su * cv, cu * cv, z, z], -1),
         "v": np.stack([-cu * sv, -su * sv, cv, z], -1), "uu": np.stack([-cu * cv, -su * cv, z, z], -1),
         "uv": np.stack([su * sv, -cu * sv, z, z], -1), "vv": np.stack([-cu * cv, -su * cv, -sv, z], -1)}
    gam = {k: z for k in ("", "u", "v", "uu", "uv", "vv")}
    with pytest.raises(NowhereRegularError):
        gauss_parametrize(pair_from_jets(g, h, gam), (-0.5, 0.5), 5)


def test_singular_fibre_nodes_are_masked():
    ex = build_example("clifford", 17, 9)
    hyp = gauss_parametrize(ex.pair, (-3.0, 3.0), 9)
    det = np.linalg.det(hyp.Pw)
    assert not hyp.regular_mask.all() and hyp.regular_mask.any()
    assert np.all(det[hyp.regular_mask] > 0)
