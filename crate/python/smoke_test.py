"""Smoke test for the pymorseflow extension module.

Build the extension first:

    cargo build -p pymorseflow --release --features extension-module

then run `python3 python/smoke_test.py`. When `pymorseflow` is not already
importable, the freshly built library under target/ is copied to a temporary
directory under the module's import name.
"""

import importlib
import json
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_module():
    try:
        return importlib.import_module("pymorseflow")
    except ImportError:
        pass
    for profile in ("release", "debug"):
        for lib in ("libpymorseflow.so", "libpymorseflow.dylib"):
            built = os.path.join(ROOT, "target", profile, lib)
            if os.path.exists(built):
                tmp = tempfile.mkdtemp()
                shutil.copy(built, os.path.join(tmp, "pymorseflow.so"))
                sys.path.insert(0, tmp)
                return importlib.import_module("pymorseflow")
    sys.exit("pymorseflow not built; run cargo build -p pymorseflow --features extension-module")


def main():
    mf = import_module()
    print("pymorseflow", mf.__version__)
    assert mf.benchmark_names() == ["saddle", "quartic", "planes", "cone"]

    saddle = mf.Problem.benchmark("saddle")
    cps = saddle.critical_points()
    assert len(cps) == 1 and cps[0]["kind"] == "saddle", cps

    traj = saddle.flow([0.5, 0.1], -0.5)
    x, y = traj.end_point
    assert traj.termination == "reach_level"
    assert abs(x * y - 0.05) < 1e-6, (x, y)
    assert traj.to_csv().startswith("t,y_1,y_2,f,grad_norm,arc_len")

    fit = mf.Problem.benchmark("quartic").lojasiewicz_fit([0.0], radius=0.5)
    assert abs(fit.theta - 0.25) < 0.05 and abs(fit.C - 4.0) < 0.5, fit
    assert math.isclose(fit.length_bound(1e-4), fit.C ** -1 / fit.theta * 1e-4 ** fit.theta)

    cone = mf.Problem.from_json(
        json.dumps(
            {
                "name": "cone",
                "variables": ["x", "y", "z"],
                "objective": "x",
                "constraints": ["x^2 + y^2 - z^2"],
                "box": [[-2, 2]] * 3,
                "proper_on_box": True,
            }
        )
    )
    assert cone.is_member([0.3, 0.4, 0.5])
    assert not cone.is_member([0.3, 0.4, 0.6])

    report = saddle.run()
    assert report.corollary_verdict == "pass", report.to_json()[:400]
    assert dict(report.verdicts) == {1: "pass", 2: "pass", 4: "pass"}
    with tempfile.TemporaryDirectory() as out:
        files = report.emit(out, "csv-bundle")
        assert any(f.endswith("modulus_table.csv") for f in files)
    print("smoke test passed:", report)


if __name__ == "__main__":
    main()
