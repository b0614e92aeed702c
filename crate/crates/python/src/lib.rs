//! Python bindings: problems, flows, Lojasiewicz fits and experiment reports.

use morseflow::critical::{default_grid_density, find_critical_points, ProbeOptions};
use morseflow::experiment::{self, ExperimentReport, ProblemSpec, Stage};
use morseflow::flow::{flow_to_level, Direction, FlowBudget, FlowTrajectory, StepControl};
use morseflow::lojasiewicz::{self, FitOptions, LojasiewiczFit};
use morseflow::{Objective, SingularSpace};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl ToString) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// serde_json value to the matching Python builtin.
fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    match v {
        Value::Null => Ok(py.None()),
        Value::Bool(b) => b.into_py_any(py),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_py_any(py),
            (None, Some(f)) => f.into_py_any(py),
            _ => n.to_string().into_py_any(py),
        },
        Value::String(s) => s.into_py_any(py),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

fn parse_direction(direction: &str) -> PyResult<Direction> {
    match direction {
        "down" => Ok(Direction::Descend),
        "up" => Ok(Direction::Ascend),
        other => Err(value_err(format!(
            "direction must be 'down' or 'up', got '{other}'"
        ))),
    }
}

fn parse_stages(stages: Option<Vec<String>>) -> PyResult<Vec<Stage>> {
    match stages {
        None => Ok(Stage::ALL.to_vec()),
        Some(list) => Stage::parse_list(&list.join(",")).map_err(value_err),
    }
}

/// An optimization problem: objective, constraint variety and working box.
#[pyclass(module = "pymorseflow", frozen)]
struct Problem {
    spec: ProblemSpec,
    f: Objective,
    z: SingularSpace,
}

impl Problem {
    fn from_spec(spec: ProblemSpec) -> PyResult<Self> {
        let (f, z) = spec.build().map_err(value_err)?;
        Ok(Problem { spec, f, z })
    }

    fn check_point(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.z.dim() {
            return Err(value_err(format!(
                "expected {} coordinates, got {}",
                self.z.dim(),
                x.len()
            )));
        }
        Ok(())
    }
}

#[pymethods]
impl Problem {
    #[staticmethod]
    fn benchmark(name: &str) -> PyResult<Self> {
        let spec = experiment::benchmark(name)
            .ok_or_else(|| value_err(format!("unknown benchmark '{name}'")))?;
        Problem::from_spec(spec)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Problem::from_spec(ProblemSpec::from_json(text).map_err(value_err)?)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Problem::from_spec(experiment::load_problem(&path).map_err(value_err)?)
    }

    fn to_json(&self) -> String {
        self.spec.to_json()
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name.clone()
    }

    #[getter]
    fn variables(&self) -> Vec<String> {
        self.spec.variables.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.spec.seed
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_point(&x)?;
        Ok(self.f.value(&x))
    }

    /// Riemannian gradient of the objective on the variety.
    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_point(&x)?;
        Ok(self.z.riemannian_grad(&self.f, &x))
    }

    fn is_member(&self, x: Vec<f64>) -> PyResult<bool> {
        self.check_point(&x)?;
        Ok(self.z.is_member(&x, self.z.tolerances().member_tol))
    }

    fn retract(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_point(&x)?;
        self.z.retract(&x).map_err(runtime_err)
    }

    /// Critical points as dicts with location, value, grad_norm, kind and cluster_radius.
    fn critical_points(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let search = py.detach(|| {
            find_critical_points(
                &self.f,
                &self.z,
                default_grid_density(self.z.dim()),
                &ProbeOptions::default(),
            )
        });
        let v = serde_json::to_value(&search.points).map_err(runtime_err)?;
        to_py(py, &v)
    }

    /// Flow from `start` until `f` reaches `level`.
    #[pyo3(signature = (start, level, direction = "down"))]
    fn flow(
        &self,
        py: Python<'_>,
        start: Vec<f64>,
        level: f64,
        direction: &str,
    ) -> PyResult<Trajectory> {
        self.check_point(&start)?;
        let dir = parse_direction(direction)?;
        let traj = py
            .detach(|| {
                flow_to_level(
                    &self.f,
                    &self.z,
                    &start,
                    level,
                    dir,
                    &StepControl::default(),
                    &FlowBudget::default(),
                )
            })
            .map_err(runtime_err)?;
        Ok(Trajectory { inner: traj })
    }

    /// Lojasiewicz fit at the critical point nearest to `point`.
    #[pyo3(signature = (point, radius = 0.5, n_samples = 2000, seed = 0))]
    fn lojasiewicz_fit(
        &self,
        py: Python<'_>,
        point: Vec<f64>,
        radius: f64,
        n_samples: usize,
        seed: u64,
    ) -> PyResult<Fit> {
        self.check_point(&point)?;
        let fit = py.detach(|| -> Result<LojasiewiczFit, String> {
            let search = find_critical_points(
                &self.f,
                &self.z,
                default_grid_density(self.z.dim()),
                &ProbeOptions::default(),
            );
            let cp = search
                .points
                .iter()
                .min_by(|a, b| {
                    let da: f64 = a
                        .location
                        .iter()
                        .zip(&point)
                        .map(|(u, v)| (u - v).powi(2))
                        .sum();
                    let db: f64 = b
                        .location
                        .iter()
                        .zip(&point)
                        .map(|(u, v)| (u - v).powi(2))
                        .sum();
                    da.total_cmp(&db)
                })
                .ok_or("no critical points found")?;
            let opts = FitOptions {
                radius,
                n_samples,
                seed,
                ..FitOptions::default()
            };
            lojasiewicz::estimate_fit(&self.f, &self.z, cp, &opts).map_err(|e| e.to_string())
        });
        fit.map(|inner| Fit { inner }).map_err(runtime_err)
    }

    /// Run the pipeline; `stages` defaults to all of them.
    #[pyo3(signature = (stages = None, seed = None))]
    fn run(
        &self,
        py: Python<'_>,
        stages: Option<Vec<String>>,
        seed: Option<u64>,
    ) -> PyResult<Report> {
        let stages = parse_stages(stages)?;
        let mut spec = self.spec.clone();
        if let Some(s) = seed {
            spec.seed = s;
        }
        let report = py
            .detach(|| experiment::run_experiment(&spec, &stages))
            .map_err(value_err)?;
        Ok(Report { inner: report })
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(name={:?}, variables={:?}, objective={:?})",
            self.spec.name, self.spec.variables, self.spec.objective
        )
    }
}

/// A sampled flow line.
#[pyclass(module = "pymorseflow", frozen)]
struct Trajectory {
    inner: FlowTrajectory,
}

#[pymethods]
impl Trajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.t).collect()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.samples.iter().map(|s| s.y.clone()).collect()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.f).collect()
    }

    #[getter]
    fn arc_lengths(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.arc_len).collect()
    }

    #[getter]
    fn termination(&self) -> PyResult<String> {
        match serde_json::to_value(self.inner.termination).map_err(runtime_err)? {
            Value::String(s) => Ok(s),
            other => Ok(other.to_string()),
        }
    }

    #[getter]
    fn end_point(&self) -> Vec<f64> {
        self.inner.end_point().to_vec()
    }

    #[getter]
    fn arc_length(&self) -> f64 {
        self.inner.total_arc_length()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(runtime_err)?;
        String::from_utf8(buf).map_err(runtime_err)
    }

    fn __len__(&self) -> usize {
        self.inner.samples.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Trajectory(samples={}, termination={:?})",
            self.inner.samples.len(),
            self.inner.termination
        )
    }
}

/// Fitted Lojasiewicz exponent and constant.
#[pyclass(module = "pymorseflow", frozen)]
struct Fit {
    inner: LojasiewiczFit,
}

#[pymethods]
impl Fit {
    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    #[getter(C)]
    fn constant_c(&self) -> f64 {
        self.inner.constant_c
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.radius_delta
    }

    #[getter]
    fn critical_value(&self) -> f64 {
        self.inner.critical_value
    }

    #[getter]
    fn envelope_slack(&self) -> f64 {
        self.inner.envelope_slack
    }

    #[getter]
    fn clamped(&self) -> bool {
        self.inner.clamped
    }

    #[pyo3(signature = (safety = 0.5))]
    fn epsilon(&self, safety: f64) -> f64 {
        lojasiewicz::choose_epsilon(&self.inner, safety)
    }

    fn length_bound(&self, eps: f64) -> f64 {
        lojasiewicz::length_bound(&self.inner, eps)
    }

    fn __repr__(&self) -> String {
        format!(
            "Fit(theta={:.4}, C={:.4}, delta={:.4})",
            self.inner.theta, self.inner.constant_c, self.inner.radius_delta
        )
    }
}

/// Result of `Problem.run`.
#[pyclass(module = "pymorseflow", frozen)]
struct Report {
    inner: ExperimentReport,
}

#[pymethods]
impl Report {
    #[getter]
    fn corollary_verdict(&self) -> &'static str {
        self.inner.corollary_verdict.as_str()
    }

    /// Condition number to verdict.
    #[getter]
    fn verdicts(&self) -> Vec<(u8, &'static str)> {
        self.inner
            .condition_reports
            .iter()
            .map(|c| (c.condition, c.verdict.as_str()))
            .collect()
    }

    #[getter]
    fn overall_verdict(&self) -> &'static str {
        self.inner.overall_verdict().as_str()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// The whole report as nested dicts and lists.
    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let v = serde_json::to_value(&self.inner).map_err(runtime_err)?;
        to_py(py, &v)
    }

    /// Writes `report.json` or a CSV bundle into `out_dir`; returns the paths.
    #[pyo3(signature = (out_dir, format = "json"))]
    fn emit(&self, out_dir: std::path::PathBuf, format: &str) -> PyResult<Vec<String>> {
        let format = format.parse().map_err(value_err)?;
        let files = experiment::emit_report(&self.inner, format, &out_dir).map_err(runtime_err)?;
        Ok(files.iter().map(|p| p.display().to_string()).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(problem={:?}, corollary={})",
            self.inner.problem.name, self.inner.corollary_verdict
        )
    }
}

#[pyfunction]
fn benchmark_names() -> Vec<String> {
    experiment::registry().into_iter().map(|p| p.name).collect()
}

#[pymodule]
pub fn pymorseflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<Trajectory>()?;
    m.add_class::<Fit>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(benchmark_names, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
