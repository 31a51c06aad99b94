import json

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from infbend.grid_calculus import ScalarField, VecField, make_grid, make_grid3
from infbend.io import field_from_doc, field_to_doc, read_bundle, write_bundle, write_obj

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (5, 6), elements=finite), arrays(np.float64, (5, 6, 4), elements=finite))
def test_fields_round_trip_bit_exact(s, v):
    g = make_grid((0, 1), (0, 2), 5, 6)
    back_s = field_from_doc(json.loads(json.dumps(field_to_doc(ScalarField(g, s)))))
    back_v = field_from_doc(json.loads(json.dumps(field_to_doc(VecField(g, v)))))
    assert np.array_equal(back_s.values, s) and back_s.grid == g
    assert np.array_equal(back_v.values, v)


def test_u_varies_fastest():
    g = make_grid((0, 1), (0, 1), 5, 5)
    U, V = g.mesh()
    doc = field_to_doc(ScalarField(g, U + 10 * V))
    assert doc["values"][:2] == [0.0, 0.25]
    assert doc["values"][5] == 2.5
    assert doc["ambient_dim"] is None


def test_bundle_with_tensor_field(tmp_path):
    g = make_grid3((0, 1), (0, 1), (0, 1), 5, 5, 5)
    T = np.random.default_rng(0).standard_normal(g.shape + (3, 3))
    write_bundle(tmp_path / "b.json", {"A": (g, T), "s": ScalarField(g, T[..., 0, 0])}, {"k": 1})
    fields, meta = read_bundle(tmp_path / "b.json")
    assert meta == {"k": 1}
    grid, vals = fields["A"]
    assert grid == g and np.array_equal(vals, T)
    assert np.array_equal(fields["s"].values, T[..., 0, 0])


def test_obj_drops_masked_quads(tmp_path):
    pts = np.zeros((4, 5, 4))
    pts[..., 0], pts[..., 1] = np.meshgrid(np.arange(4), np.arange(5), indexing="ij")
    assert write_obj(tmp_path / "a.obj", pts) == 12
    mask = np.ones((4, 5), bool)
    mask[1, 2] = False
    assert write_obj(tmp_path / "b.obj", pts, mask) == 8
    lines = (tmp_path / "b.obj").read_text().splitlines()
    assert sum(line.startswith("v ") for line in lines) == 20
