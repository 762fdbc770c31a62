"""Smoke test for the pyblstab extension.

Build it first with `pip install --no-build-isolation -e crates/python`,
then run `python python/smoke_test.py` (or `pytest python/smoke_test.py`).
"""

import json
import math
import pathlib
import tempfile

import jsonschema
import pyblstab as bl

ROOT = pathlib.Path(__file__).resolve().parent.parent


def test_datum_round_trip():
    lw = bl.Datum.catalog("loomis-whitney")
    assert lw.d == 2 and lw.dims == [1, 1] and lw.exponents == [1.0, 1.0]
    assert abs(lw.scaling_defect()) < 1e-12
    again = bl.Datum.from_dict(lw.to_dict())
    assert again.to_dict() == lw.to_dict()
    assert lw.classify_simplicity()["tag"] == "NotSimpleWithWitness"


def test_bad_input_raises_value_error():
    try:
        bl.Datum(1, [([[1.0]], 0.5)])
    except ValueError as e:
        assert "exponent" in str(e)
    else:
        raise AssertionError("p < 1 accepted")


def test_frame_constant_and_reduction():
    frame = bl.Datum.catalog("frame-120")
    assert frame.is_geometric()
    res = bl.bl_constant(frame, restarts=4, seed=1)
    assert abs(res["value"] - 1.0) < 1e-6
    assert abs(bl.gaussian_bl_value(frame, [[[1.0]]] * 3) - 1.0) < 1e-12

    skew = bl.Datum(2, [([[1.0, 0.0]], 1.5), ([[0.0, 2.0]], 1.5), ([[1.0, 1.0]], 1.5)])
    reduced, report = bl.geometric_reduce(skew, restarts=4)
    assert reduced.is_geometric(1e-8)
    assert abs(report["value_at_identity"] - 1.0) < 1e-8


def test_fourier_side():
    assert abs(bl.a_p(2.0) - 1.0) < 1e-15
    p = 1.5
    expected = math.sqrt(p ** (1 / p) / (p / (p - 1)) ** ((p - 1) / p))
    assert abs(bl.a_p(p) - expected) < 1e-14
    g = {"variant": "ClosedGaussian", "gaussian": {"c_re": 1.0, "S_re": [[1.0]]}}
    assert abs(bl.hy_ratio(g, p)["ratio"] - 1.0) < 1e-8
    bump = {"variant": "Bump", "center": [0.0], "radius": 1.0}
    assert bl.hy_ratio(bump, p)["ratio"] < 1.0


def test_distances_and_deficit():
    g = {"variant": "ClosedGaussian", "gaussian": {"c_re": 1.0, "S_re": [[1.0]]}}
    assert bl.dist_to_gaussians(g, 2.0)["relative"] < 1e-8
    bump = {"variant": "Bump", "center": [0.0], "radius": 1.0}
    d = bl.dist_to_gaussians(bump, 2.0, options={"starts": 2})
    assert 0.0 < d["relative"] < 1.0

    frame = bl.Datum.catalog("frame-120")
    fs = bl.geometric_extremizer(frame)
    rep = bl.deficit_report(frame, fs, 1.0, options={"distance": {"starts": 2}})
    assert abs(rep["deficit"]) < 1e-6


def test_fit():
    x = [10.0 ** (-k / 4) for k in range(4, 13)]
    fit = bl.fit_exponent(x, [5.0 * t**2 for t in x])
    assert abs(fit["slope"] - 2.0) < 1e-10


def test_run_matches_summary_schema():
    schema = json.loads((ROOT / "docs/schemas/summary.schema.json").read_text())
    with tempfile.TemporaryDirectory() as out:
        code, summary = bl.run({"subcommand": "check", "datum": "frame-120"}, out)
        assert code == 0
        jsonschema.validate(summary, schema)
        run_dir = pathlib.Path(out) / summary["config_hash"]
        on_disk = json.loads((run_dir / "summary.json").read_text())
        assert on_disk == summary

        code, summary = bl.run({"subcommand": "constant", "datum": "supercritical-line"}, out)
        assert code == 3 and "divergence" in summary["flags"]
        jsonschema.validate(summary, schema)


if __name__ == "__main__":
    tests = [(k, v) for k, v in sorted(globals().items()) if k.startswith("test_")]
    for name, fn in tests:
        fn()
        print(f"ok  {name}")
    print(f"{len(tests)} passed")
