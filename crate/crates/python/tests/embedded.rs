use pymorseflow::pymorseflow as module;
use pyo3::ffi::c_str;
use pyo3::prelude::*;

fn python() {
    static INIT: std::sync::Once = std::sync::Once::new();
    INIT.call_once(|| {
        pyo3::append_to_inittab!(module);
        Python::initialize();
    });
}

#[test]
fn saddle_from_python() {
    python();
    Python::attach(|py| {
        py.run(
            c_str!(
                r#"
import pymorseflow as mf
assert mf.benchmark_names() == ["saddle", "quartic", "planes", "cone"]
p = mf.Problem.benchmark("saddle")
assert p.variables == ["x", "y"]
assert p.value([0.5, 0.1]) == 0.25 - 0.01
cps = p.critical_points()
assert len(cps) == 1 and cps[0]["kind"] == "saddle"
t = p.flow([0.5, 0.1], -0.5)
assert t.termination == "reach_level", t.termination
x, y = t.end_point
assert abs(x * y - 0.05) < 1e-6
fit = p.lojasiewicz_fit([0.0, 0.0], radius=0.3)
assert abs(fit.theta - 0.5) < 0.05, fit
r = p.run(["critical", "cond1"])
assert dict(r.verdicts) == {1: "pass"}
assert r.to_dict()["critical_points"][0]["kind"] == "saddle"
"#
            ),
            None,
            None,
        )
        .unwrap();
    });
}

#[test]
fn errors_become_python_exceptions() {
    python();
    Python::attach(|py| {
        py.run(
            c_str!(
                r#"
import pymorseflow as mf
try:
    mf.Problem.benchmark("nope")
    raise AssertionError("expected ValueError")
except ValueError:
    pass
try:
    mf.Problem.from_json('{"name": "b", "variables": ["x"], "objective": "y", "box": [[0, 1]]}')
    raise AssertionError("expected ValueError")
except ValueError as e:
    assert "objective" in str(e)
p = mf.Problem.benchmark("quartic")
try:
    p.flow([0.5, 0.5], 0.0)
    raise AssertionError("expected ValueError")
except ValueError:
    pass
try:
    p.run(["cond4"])
    raise AssertionError("expected ValueError")
except ValueError as e:
    assert "requires" in str(e)
"#
            ),
            None,
            None,
        )
        .unwrap();
    });
}
