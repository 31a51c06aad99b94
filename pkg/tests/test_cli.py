import json

import numpy as np
import pytest

from infbend.cli import EXIT_DEGENERATE, EXIT_FAIL, EXIT_INPUT, EXIT_OK, REPORT_RESIDUALS, main, parse_grid
from infbend.io import read_bundle, write_bundle

CLIFFORD = """\
kind: real
grid: {u: [-0.5, 0.5], v: [-0.5, 0.5], n: 17}
M: {constant: 0}
seeds: clifford
fiber: {range: [-0.5, 0.5], count: 9}
"""


def _config(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _report(path):
    return json.loads(path.read_text())


def _pipeline(tmp_path, out, text=CLIFFORD):
    cfg = _config(tmp_path, text)
    for cmd in ("solve", "build", "bend"):
        assert main([cmd, "--config", cfg, "--out", str(out)]) == EXIT_OK
    return cfg


def test_full_pipeline_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _pipeline(tmp_path, a)
    rep = _report(a / "bend-report.json")
    assert rep["verdict"] == "hyperbolic" and rep["passed"]
    assert rep["details"]["is_trivial"] is False
    assert set(REPORT_RESIDUALS) <= set(rep["residuals"])
    assert list(rep["residuals"]).count("iif") == 1
    solve = _report(a / "solve-report.json")
    assert solve["details"]["norm2_min"] == pytest.approx(2.0) and solve["details"]["norm2_max"] == pytest.approx(2.0)
    assert len(list((a / "mesh").glob("slice_*.obj"))) == 9
    build = _report(a / "build-report.json")
    assert build["residuals"]["envelope"]["value"] <= 1e-6
    # same config into a second directory: everything but recorded paths matches byte for byte
    _pipeline(tmp_path, b)
    for name in ("solve-report.json", "family.json", "build-report.json", "bend-report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert main(["bend", "--config", _config(tmp_path, CLIFFORD), "--out", str(b)]) == EXIT_OK
    assert (a / "bend-report.json").read_bytes() == (b / "bend-report.json").read_bytes()


def test_verify_over_t_and_tampering(tmp_path):
    # 17 fibre nodes: the h^2 gates must sit below an O(1) fault
    out = tmp_path / "run"
    cfg = _pipeline(tmp_path, out, CLIFFORD.replace("count: 9", "count: 17"))
    assert main(["verify", "--config", cfg, "--out", str(out), "--t", "0.1", "0.5", "1.0"]) == EXIT_OK
    rep = _report(out / "verify-report.json")
    var = [rep["residuals"][f"var(t={t})"]["value"] for t in ("0.1", "0.5", "1")]
    assert np.allclose(var, var[0], rtol=1e-8)
    fields, meta = read_bundle(out / "bending.json")
    T = fields["T"]
    vals = T.values.copy()
    vals[8, 8, 4] = 0.0
    write_bundle(out / "tampered.json", {"T": type(T)(T.grid, vals)}, meta)
    assert main(["verify", "--config", cfg, "--out", str(out), "--bending", str(out / "tampered.json")]) == EXIT_FAIL
    assert _report(out / "verify-report.json")["residuals"]["iif(t=0.1)"]["value"] > 1.0
    # a pure translation passes every check
    write_bundle(out / "shift.json", {"T": type(T)(T.grid, np.ones_like(vals))}, meta)
    assert main(["verify", "--config", cfg, "--out", str(out), "--bending", str(out / "shift.json")]) == EXIT_OK


def test_input_errors(tmp_path, caplog):
    missing = _config(tmp_path, CLIFFORD.replace("seeds: clifford",
                                                 "seeds: [{file: nope.json}, cos_u, sin_u, cos_v, sin_v]"))
    assert main(["solve", "--config", missing, "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert "nope.json" in caplog.text
    assert main(["solve", "--config", str(tmp_path / "absent.yaml")]) == EXIT_INPUT
    bad_gate = _config(tmp_path, CLIFFORD + "gates: {scale: -1}\n", "g.yaml")
    assert main(["solve", "--config", bad_gate]) == EXIT_INPUT
    assert main(["bend", "--example", "no-such-example", "--out", str(tmp_path / "o")]) == EXIT_INPUT


def test_rank_deficient_family_is_degenerate(tmp_path, caplog):
    cfg = _config(tmp_path, CLIFFORD.replace("seeds: clifford", "seeds: [zero, one, u, u, u]"))
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_DEGENERATE
    assert "rank" in caplog.text


def test_complex_family_solves(tmp_path):
    cfg = _config(tmp_path, "kind: complex\nM: {constant: 0.25}\nseeds: sine\ngrid: {n: 17}\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    assert _report(tmp_path / "o" / "solve-report.json")["residuals"]["pde"]["pass"]


def test_widened_fibre_masks_singular_nodes(tmp_path, caplog):
    cfg = _config(tmp_path, CLIFFORD.replace("range: [-0.5, 0.5]", "range: [-3.0, 3.0]"))
    out = tmp_path / "w"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert main(["build", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert "singular nodes" in caplog.text
    assert _report(out / "build-report.json")["details"]["regular_fraction"] < 1
    assert main(["bend", "--config", cfg, "--out", str(out)]) == EXIT_DEGENERATE


def test_examples_through_bend(tmp_path):
    assert main(["bend", "--example", "sphere-patch", "--out", str(tmp_path / "s")]) == EXIT_OK
    rep = _report(tmp_path / "s" / "bend-report.json")
    assert rep["verdict"] == "rank-3" and rep["bending_space"] == "{0}"
    assert not (tmp_path / "s" / "bending.json").exists()
    assert main(["bend", "--example", "cone", "--grid", "17", "--out", str(tmp_path / "c")]) == EXIT_FAIL
    assert _report(tmp_path / "c" / "bend-report.json")["verdict"] == "surface-like"
    assert main(["bend", "--example", "ruled-demo", "--grid", "17", "--out", str(tmp_path / "r")]) == EXIT_OK
    assert main(["rigidity", "--example", "clifford", "--out", str(tmp_path / "k")]) == EXIT_OK
    assert _report(tmp_path / "k" / "rigidity-report.json")["details"]["nullity"] == 1
    assert main(["export-mesh", "--example", "elliptic-demo", "--grid", "17x5", "--out", str(tmp_path / "e")]) == 0
    assert len(list((tmp_path / "e" / "mesh").glob("*.obj"))) == 5


def test_parse_grid():
    assert parse_grid("33") == (33, 9)
    assert parse_grid("17x5") == (17, 5)
