//! Problem files, the benchmark registry, the staged pipeline and report
//! emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::critical::{
    check_condition1, critical_levels, default_grid_density, find_critical_points, CriticalKind,
    CriticalPoint, ProbeOptions,
};
use crate::flow::{flow_to_level, Direction, FlowBudget, FlowTrajectory, StepControl};
use crate::levelmap::{
    check_condition2, check_condition4, unstable_slice, Condition2Options, Condition4Options,
    SliceOptions,
};
use crate::linalg::{dist, norm};
use crate::lojasiewicz::{
    choose_epsilon_checked, default_delta, estimate_fit, verify_flow_estimates, FitOptions,
    LojaError, LojasiewiczFit,
};
use crate::polynomial::{validate_variables, Polynomial, PolynomialSystem};
use crate::report::{task_rng, Verdict};
use crate::space::{Objective, SingularSpace};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub variables: Vec<String>,
    pub objective: String,
    #[serde(default)]
    pub constraints: Vec<String>,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    #[serde(default)]
    pub proper_on_box: bool,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl ToString) -> ProblemError {
    ProblemError::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}

impl ProblemSpec {
    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        let spec: ProblemSpec = serde_json::from_str(text).map_err(|e| ProblemError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem specs serialize")
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        self.build().map(|_| ())
    }

    /// Parses the polynomials and constructs the objective and the space.
    pub fn build(&self) -> Result<(Objective, SingularSpace), ProblemError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        validate_variables(&self.variables).map_err(|e| invalid("variables", e))?;
        if self.bounds.len() != self.variables.len() {
            return Err(invalid(
                "box",
                format!(
                    "{} intervals for {} variables",
                    self.bounds.len(),
                    self.variables.len()
                ),
            ));
        }
        for (i, [lo, hi]) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(
                    format!("box[{i}]"),
                    format!("[{lo}, {hi}] is not an interval with lo < hi"),
                ));
            }
        }
        let objective = Polynomial::parse(&self.objective, &self.variables)
            .map_err(|e| invalid("objective", e))?;
        let constraints = self
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Polynomial::parse(c, &self.variables)
                    .map_err(|e| invalid(format!("constraints[{i}]"), e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let system = PolynomialSystem::new(&self.variables, constraints)
            .map_err(|e| invalid("constraints", e))?;
        let z = SingularSpace::new(system, self.bounds.clone(), self.tolerances)
            .map_err(|e| invalid("box", e))?;
        Ok((Objective::new(objective), z))
    }
}

pub fn load_problem(path: &Path) -> Result<ProblemSpec, ProblemError> {
    let text = fs::read_to_string(path).map_err(|e| ProblemError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    ProblemSpec::from_json(&text)
}

fn bench(
    name: &str,
    vars: &[&str],
    objective: &str,
    constraints: &[&str],
    half: f64,
) -> ProblemSpec {
    ProblemSpec {
        name: name.to_string(),
        variables: vars.iter().map(|v| v.to_string()).collect(),
        objective: objective.to_string(),
        constraints: constraints.iter().map(|c| c.to_string()).collect(),
        bounds: vec![[-half, half]; vars.len()],
        proper_on_box: true,
        tolerances: Tolerances::default(),
        seed: 0,
    }
}

/// The built-in benchmarks.
pub fn registry() -> Vec<ProblemSpec> {
    vec![
        bench("saddle", &["x", "y"], "x^2 - y^2", &[], 2.0),
        bench("quartic", &["x"], "x^4", &[], 2.0),
        bench("planes", &["x", "y"], "x^2 - y^2", &["x*y"], 2.0),
        bench("cone", &["x", "y", "z"], "x", &["x^2 + y^2 - z^2"], 2.0),
    ]
}

pub fn benchmark(name: &str) -> Option<ProblemSpec> {
    registry().into_iter().find(|p| p.name == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Critical,
    Loja,
    Cond1,
    Cond2,
    Cond4,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Critical,
        Stage::Loja,
        Stage::Cond1,
        Stage::Cond2,
        Stage::Cond4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Critical => "critical",
            Stage::Loja => "loja",
            Stage::Cond1 => "cond1",
            Stage::Cond2 => "cond2",
            Stage::Cond4 => "cond4",
        }
    }

    fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Critical => &[],
            Stage::Loja | Stage::Cond1 | Stage::Cond2 => &[Stage::Critical],
            Stage::Cond4 => &[Stage::Critical, Stage::Loja],
        }
    }

    /// Comma-separated stage names.
    pub fn parse_list(text: &str) -> Result<Vec<Stage>, ExperimentError> {
        let mut out: Vec<Stage> = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(Stage::from_str)
            .collect::<Result<_, _>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl FromStr for Stage {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| ExperimentError::UnknownStage(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("unknown stage '{0}' (expected critical, loja, cond1, cond2 or cond4)")]
    UnknownStage(String),
    #[error("stage {stage} requires stage {requires}")]
    MissingDependency { stage: String, requires: String },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Seed of the named substream: FNV-1a of the name mixed into the spec seed.
pub fn stage_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut x = seed ^ h;
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    /// Index into the report's critical points.
    pub critical_point: usize,
    pub fit: Option<LojasiewiczFit>,
    /// Level offset for Condition 4 (non-minimal points only).
    pub eps: Option<f64>,
    pub error: Option<String>,
}

/// `[r, d, n_landed, n_captured]`.
pub type ModulusEntry = (f64, Option<f64>, usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: u8,
    pub verdict: Verdict,
    pub witnesses: Value,
    #[serde(default)]
    pub modulus_table: Vec<ModulusEntry>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTrajectory {
    pub stage: String,
    pub label: String,
    pub trajectory: FlowTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub problem: ProblemSpec,
    pub stages: Vec<Stage>,
    pub critical_points: Vec<CriticalPoint>,
    pub lojasiewicz_fits: Vec<FitEntry>,
    pub condition_reports: Vec<ConditionReport>,
    pub corollary_verdict: Verdict,
    pub trajectories: Vec<NamedTrajectory>,
}

impl ExperimentReport {
    pub fn condition(&self, n: u8) -> Option<&ConditionReport> {
        self.condition_reports.iter().find(|c| c.condition == n)
    }

    /// Combined verdict of everything requested: each condition report, and
    /// the corollary when all three conditions were run.
    pub fn overall_verdict(&self) -> Verdict {
        let mut v = Verdict::all(self.condition_reports.iter().map(|c| c.verdict));
        if self.condition_reports.len() == 3 {
            v = v.combine(self.corollary_verdict);
        }
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// One band per critical level: the band `(c - w, c + w)` with `w = min(1, gap / 2)`.
fn bands(levels: &[f64]) -> Vec<[f64; 2]> {
    if levels.is_empty() {
        return vec![[-1.0, 1.0]];
    }
    levels
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let gap = levels
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| (v - c).abs())
                .fold(f64::INFINITY, f64::min);
            let w = (0.5 * gap).min(1.0);
            [c - w, c + w]
        })
        .collect()
}

/// Points of `f^{-1}(c)` on Z at distance in `(cluster_tol, radius)` from `center`.
fn level_set_starts(
    f: &Objective,
    z: &SingularSpace,
    cp: &CriticalPoint,
    radius: f64,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let tol = z.tolerances();
    let n = z.dim();
    let mut out = Vec::new();
    for k in 0..(20 * count) as u64 {
        if out.len() >= count {
            break;
        }
        let mut rng = task_rng(seed, k);
        let dir: Vec<f64> = (0..n)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let len = norm(&dir);
        let r = radius * rng.random::<f64>();
        let p: Vec<f64> = cp
            .location
            .iter()
            .zip(&dir)
            .map(|(c, d)| c + r * d / len)
            .collect();
        let Ok(y) = z.project_to_level_set(f, &p, cp.value) else {
            continue;
        };
        let d = dist(&y, &cp.location);
        if z.in_box(&y)
            && d > tol.cluster_tol
            && d < radius
            && (f.value(&y) - cp.value).abs() < tol.level_tol
        {
            out.push(y);
        }
    }
    out
}

pub fn run_experiment(
    spec: &ProblemSpec,
    stages: &[Stage],
) -> Result<ExperimentReport, ExperimentError> {
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    for s in &stages {
        for r in s.requires() {
            if !stages.contains(r) {
                return Err(ExperimentError::MissingDependency {
                    stage: s.name().into(),
                    requires: r.name().into(),
                });
            }
        }
    }
    let (f, z) = spec.build()?;
    let tol = *z.tolerances();
    let seed = |s: Stage| stage_seed(spec.seed, s.name());

    let mut report = ExperimentReport {
        problem: spec.clone(),
        stages: stages.clone(),
        critical_points: Vec::new(),
        lojasiewicz_fits: Vec::new(),
        condition_reports: Vec::new(),
        corollary_verdict: Verdict::Inconclusive,
        trajectories: Vec::new(),
    };
    let has = |s: Stage| stages.contains(&s);

    if has(Stage::Critical) {
        let probes = ProbeOptions {
            seed: seed(Stage::Critical),
            ..ProbeOptions::default()
        };
        report.critical_points =
            find_critical_points(&f, &z, default_grid_density(z.dim()), &probes).points;
    }
    let cps = report.critical_points.clone();
    let level_values: Vec<f64> = critical_levels(&cps, tol.value_merge_tol)
        .iter()
        .map(|l| l.value)
        .collect();

    if has(Stage::Loja) {
        let all_values: Vec<f64> = cps.iter().map(|c| c.value).collect();
        for (i, cp) in cps.iter().enumerate() {
            let delta = default_delta(&z, cp, &cps);
            let opts = FitOptions {
                radius: delta,
                delta: Some(delta),
                seed: stage_seed(seed(Stage::Loja), &i.to_string()),
                ..FitOptions::default()
            };
            let mut entry = FitEntry {
                critical_point: i,
                fit: None,
                eps: None,
                error: None,
            };
            match estimate_fit(&f, &z, cp, &opts) {
                Ok(mut fit) => {
                    if cp.kind.is_non_minimal() {
                        // Shrink delta until c - eps stays above every other critical value.
                        let mut result = Err(LojaError::InvalidParameter("unreachable".into()));
                        for _ in 0..40 {
                            result =
                                choose_epsilon_checked(&fit, 0.5, &all_values, tol.value_merge_tol);
                            if !matches!(result, Err(LojaError::EpsilonTooLarge { .. })) {
                                break;
                            }
                            fit.radius_delta *= 0.5;
                        }
                        match result {
                            Ok(eps) => entry.eps = Some(eps),
                            Err(e) => entry.error = Some(e.to_string()),
                        }
                    }
                    entry.fit = Some(fit);
                }
                Err(e) => entry.error = Some(e.to_string()),
            }
            report.lojasiewicz_fits.push(entry);
        }
    }

    if has(Stage::Cond1) {
        let c1 = check_condition1(&cps, tol.value_merge_tol, tol.gap_tol);
        let witnesses = json!({
            "levels": c1.levels.iter().map(|l| json!({
                "value": l.value,
                "points": l.points.iter().map(|p| p.location.clone()).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "min_gap": c1.min_gap,
        });
        report.condition_reports.push(ConditionReport {
            condition: 1,
            verdict: c1.verdict,
            witnesses,
            modulus_table: Vec::new(),
            warnings: Vec::new(),
        });
    }

    if has(Stage::Cond2) {
        let mut verdict = Verdict::Pass;
        let mut band_reports = Vec::new();
        let mut warnings = Vec::new();
        for (k, [a, b]) in bands(&level_values).into_iter().enumerate() {
            let opts = Condition2Options {
                seed: stage_seed(seed(Stage::Cond2), &k.to_string()),
                ..Condition2Options::default()
            };
            match check_condition2(&f, &z, a, b, &opts) {
                Ok(mut r) => {
                    verdict = verdict.combine(r.verdict);
                    warnings.append(&mut r.warnings.clone());
                    for (j, t) in r.examples.drain(..).enumerate() {
                        report.trajectories.push(NamedTrajectory {
                            stage: "cond2".into(),
                            label: format!(
                                "band{k}_{}",
                                if j % 2 == 0 { "descend" } else { "ascend" }
                            ),
                            trajectory: t,
                        });
                    }
                    band_reports.push(serde_json::to_value(&r).expect("serializable"));
                }
                Err(e) => {
                    verdict = verdict.combine(Verdict::Inconclusive);
                    warnings.push(format!("band ({a}, {b}): {e}"));
                }
            }
        }
        report.condition_reports.push(ConditionReport {
            condition: 2,
            verdict,
            witnesses: json!({ "bands": band_reports }),
            modulus_table: Vec::new(),
            warnings,
        });
    }

    if has(Stage::Cond4) {
        let mut verdict = Verdict::Pass;
        let mut probes = Vec::new();
        let mut warnings = Vec::new();
        let mut modulus_table = Vec::new();
        let stage = seed(Stage::Cond4);
        for (i, cp) in cps.iter().enumerate() {
            if !cp.kind.is_non_minimal() {
                if matches!(cp.kind, CriticalKind::Degenerate | CriticalKind::Unresolved) {
                    warnings.push(format!("critical point {i} is {:?}; excluded", cp.kind));
                }
                continue;
            }
            let entry = report
                .lojasiewicz_fits
                .iter()
                .find(|e| e.critical_point == i);
            let (Some(fit), Some(eps)) =
                (entry.and_then(|e| e.fit.clone()), entry.and_then(|e| e.eps))
            else {
                verdict = verdict.combine(Verdict::Inconclusive);
                warnings.push(format!(
                    "critical point {i}: no usable fit ({})",
                    entry.and_then(|e| e.error.clone()).unwrap_or_default()
                ));
                continue;
            };
            let sub = stage_seed(stage, &i.to_string());
            let slice_opts = SliceOptions {
                seed: sub,
                ..SliceOptions::default()
            };
            let slice = match unstable_slice(&f, &z, cp, cp.value - eps, &slice_opts) {
                Ok(s) => s,
                Err(e) => {
                    verdict = verdict.combine(Verdict::Inconclusive);
                    warnings.push(format!("critical point {i}: {e}"));
                    continue;
                }
            };
            let opts = Condition4Options {
                seed: sub,
                ..Condition4Options::default()
            };
            let probe = match check_condition4(&f, &z, cp, eps, &slice, &opts) {
                Ok(p) => p,
                Err(e) => {
                    verdict = verdict.combine(Verdict::Inconclusive);
                    warnings.push(format!("critical point {i}: {e}"));
                    continue;
                }
            };
            verdict = verdict.combine(probe.verdict);
            let starts = level_set_starts(&f, &z, cp, 0.45 * fit.radius_delta, 16, sub ^ 0x57a7);
            let estimates = if starts.is_empty() {
                None
            } else {
                verify_flow_estimates(&f, &z, cp, &fit, eps, &starts, tol.check_slack).ok()
            };
            let mut seen = Vec::new();
            for l in &probe.landings {
                if seen.contains(&l.radius.to_bits()) {
                    continue;
                }
                seen.push(l.radius.to_bits());
                if let Ok(t) = flow_to_level(
                    &f,
                    &z,
                    &l.source,
                    cp.value - eps,
                    Direction::Descend,
                    &StepControl::default(),
                    &FlowBudget::default(),
                ) {
                    report.trajectories.push(NamedTrajectory {
                        stage: "cond4".into(),
                        label: format!("cp{i}_r{}", l.radius),
                        trajectory: t,
                    });
                }
            }
            let table: Vec<ModulusEntry> = probe
                .modulus_table
                .iter()
                .map(|r| (r.r, r.d, r.n_landed, r.n_captured))
                .collect();
            if modulus_table.is_empty() {
                modulus_table = table.clone();
            }
            warnings.extend(probe.warnings.iter().cloned());
            probes.push(json!({
                "critical_point": i,
                "eps": eps,
                "slice": slice.points,
                "slice_rejected": slice.n_rejected,
                "source_mode": probe.source_mode,
                "verdict": probe.verdict,
                "modulus_table": table,
                "n_inconclusive": probe.n_inconclusive,
                "landings": probe.landings,
                "flow_estimates": estimates,
            }));
        }
        if probes.is_empty() && verdict == Verdict::Pass {
            warnings.push("no non-minimal critical points; the condition holds vacuously".into());
        }
        report.condition_reports.push(ConditionReport {
            condition: 4,
            verdict,
            witnesses: json!({ "probes": probes }),
            modulus_table,
            warnings,
        });
    }

    report.corollary_verdict = {
        let sub: Vec<Verdict> = [1u8, 2, 4]
            .iter()
            .map(|n| {
                report
                    .condition(*n)
                    .map_or(Verdict::Inconclusive, |c| c.verdict)
            })
            .collect();
        let v = Verdict::all(sub);
        if v == Verdict::Pass && !spec.proper_on_box {
            Verdict::Inconclusive
        } else {
            v
        }
    };
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    CsvBundle,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv-bundle" => Ok(ReportFormat::CsvBundle),
            other => Err(format!(
                "unknown format '{other}' (expected json or csv-bundle)"
            )),
        }
    }
}

fn write_file(path: PathBuf, contents: &[u8]) -> Result<PathBuf, ExperimentError> {
    fs::write(&path, contents).map_err(|e| ExperimentError::Io {
        path: path.clone(),
        message: e.to_string(),
    })?;
    Ok(path)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the report into `out_dir` and returns the written paths, sorted.
pub fn emit_report(
    report: &ExperimentReport,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(out_dir).map_err(|e| ExperimentError::Io {
        path: out_dir.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut files = Vec::new();
    match format {
        ReportFormat::Json => {
            files.push(write_file(
                out_dir.join("report.json"),
                report.to_json().as_bytes(),
            )?);
        }
        ReportFormat::CsvBundle => {
            let mut per_stage: std::collections::BTreeMap<&str, usize> = Default::default();
            for t in &report.trajectories {
                let k = per_stage.entry(&t.stage).or_default();
                let mut buf = Vec::new();
                t.trajectory.write_csv(&mut buf).expect("writing to memory");
                files.push(write_file(
                    out_dir.join(format!("traj_{}_{}.csv", t.stage, k)),
                    &buf,
                )?);
                *k += 1;
            }

            let vars = &report.problem.variables;
            let mut cp = String::new();
            writeln!(cp, "{},value,grad_norm,kind,cluster_radius", vars.join(",")).unwrap();
            for p in &report.critical_points {
                let loc: Vec<String> = p.location.iter().map(|v| v.to_string()).collect();
                let kind = serde_json::to_value(p.kind).expect("kind");
                writeln!(
                    cp,
                    "{},{},{},{},{}",
                    loc.join(","),
                    p.value,
                    p.grad_norm,
                    kind.as_str().unwrap_or_default(),
                    p.cluster_radius
                )
                .unwrap();
            }
            files.push(write_file(
                out_dir.join("critical_points.csv"),
                cp.as_bytes(),
            )?);

            let mut fits = String::from("critical_point,theta,C,delta,critical_value,n_samples,envelope_slack,holdout_pass_fraction,clamped,eps,error\n");
            for e in &report.lojasiewicz_fits {
                let cells = match &e.fit {
                    Some(f) => format!(
                        "{},{},{},{},{},{},{},{}",
                        f.theta,
                        f.constant_c,
                        f.radius_delta,
                        f.critical_value,
                        f.n_samples,
                        f.envelope_slack,
                        f.holdout_pass_fraction,
                        f.clamped
                    ),
                    None => ",,,,,,,".to_string(),
                };
                let error = e
                    .error
                    .clone()
                    .unwrap_or_default()
                    .replace([',', '\n'], ";");
                writeln!(
                    fits,
                    "{},{},{},{}",
                    e.critical_point,
                    cells,
                    opt(e.eps),
                    error
                )
                .unwrap();
            }
            files.push(write_file(out_dir.join("fits.csv"), fits.as_bytes())?);

            let mut cond = String::from("condition,verdict\n");
            for c in &report.condition_reports {
                writeln!(cond, "{},{}", c.condition, c.verdict).unwrap();
            }
            writeln!(cond, "corollary,{}", report.corollary_verdict).unwrap();
            files.push(write_file(out_dir.join("conditions.csv"), cond.as_bytes())?);

            let tables: Vec<Vec<ModulusEntry>> = report
                .condition(4)
                .and_then(|c| c.witnesses.get("probes"))
                .and_then(Value::as_array)
                .map(|probes| {
                    probes
                        .iter()
                        .filter_map(|p| {
                            serde_json::from_value(p.get("modulus_table")?.clone()).ok()
                        })
                        .collect()
                })
                .unwrap_or_default();
            let tables = if tables.is_empty() {
                vec![Vec::new()]
            } else {
                tables
            };
            for (i, table) in tables.iter().enumerate() {
                let mut csv = String::from("r,d,n_landed,n_captured\n");
                for (r, d, landed, captured) in table {
                    writeln!(csv, "{r},{},{landed},{captured}", opt(*d)).unwrap();
                }
                let name = if i == 0 {
                    "modulus_table.csv".to_string()
                } else {
                    format!("modulus_table_{i}.csv")
                };
                files.push(write_file(out_dir.join(name), csv.as_bytes())?);
            }
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_report(path: &Path) -> Result<ExperimentReport, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    ExperimentReport::from_json(&text).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
