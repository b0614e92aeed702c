//! Level-set maps along flow lines, unstable slices of critical points, and
//! the empirical Condition 2 and Condition 4 checks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critical::{probe_points, CriticalKind, CriticalPoint};
use crate::flow::{
    flow_to_level, integrate, Direction, FlowBudget, FlowError, FlowTrajectory, StepControl,
    StopCriterion, Termination,
};
use crate::linalg::{dist, norm};
use crate::report::{task_rng, Verdict};
use crate::space::{Objective, SingularSpace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LevelMapError {
    #[error("source {index} is not on the level set: {reason}")]
    InvalidSource { index: usize, reason: String },
    #[error("the critical point is not non-minimal (kind {0:?})")]
    NotNonMinimal(CriticalKind),
    #[error("level {level} is not below the critical value {value}")]
    InvalidLevel { level: f64, value: f64 },
    #[error("no probe around the critical point lies below its value")]
    NoDescendingProbes,
    #[error("no slice point survived validation")]
    EmptySlice,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOutcome {
    /// The image lies on the target level.
    Mapped,
    /// The flow converged to a critical point first; the image is that point.
    Captured,
    /// The flow left the box.
    Exited,
    /// A budget ran out or the integration failed.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPair {
    pub source: Vec<f64>,
    pub image: Vec<f64>,
    pub arc_length: f64,
    pub outcome: PairOutcome,
}

impl MapPair {
    pub fn captured(&self) -> bool {
        self.outcome == PairOutcome::Captured
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetMap {
    pub level_from: f64,
    pub level_to: f64,
    pub pairs: Vec<MapPair>,
}

fn pair_from(source: &[f64], traj: Result<FlowTrajectory, FlowError>) -> MapPair {
    match traj {
        Ok(traj) => {
            let outcome = match traj.termination {
                Termination::ReachLevel => PairOutcome::Mapped,
                Termination::Converged => PairOutcome::Captured,
                Termination::LeftBox => PairOutcome::Exited,
                _ => PairOutcome::Inconclusive,
            };
            let image = traj
                .limit
                .clone()
                .unwrap_or_else(|| traj.end_point().to_vec());
            MapPair {
                source: source.to_vec(),
                image,
                arc_length: traj.total_arc_length(),
                outcome,
            }
        }
        Err(err) => {
            let last = match &err {
                FlowError::Retraction { last, .. } | FlowError::StepUnderflow { last } => {
                    last.y.clone()
                }
                _ => source.to_vec(),
            };
            MapPair {
                source: source.to_vec(),
                image: last,
                arc_length: f64::NAN,
                outcome: PairOutcome::Inconclusive,
            }
        }
    }
}

/// Follows the flow from each source on `f = a` to the level `b`.
pub fn level_map(
    f: &Objective,
    z: &SingularSpace,
    a: f64,
    b: f64,
    sources: &[Vec<f64>],
) -> Result<LevelSetMap, LevelMapError> {
    let tol = z.tolerances();
    for (index, s) in sources.iter().enumerate() {
        let reason = if s.len() != z.dim() {
            Some(format!("expected {} coordinates", z.dim()))
        } else if !z.is_member(s, tol.member_tol) {
            Some("not on Z".to_string())
        } else if (f.value(s) - a).abs() >= tol.level_tol {
            Some(format!("f = {} differs from {a}", f.value(s)))
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(LevelMapError::InvalidSource { index, reason });
        }
    }
    let pairs = if a == b {
        sources
            .iter()
            .map(|s| MapPair {
                source: s.clone(),
                image: s.clone(),
                arc_length: 0.0,
                outcome: PairOutcome::Mapped,
            })
            .collect()
    } else {
        let direction = if b > a {
            Direction::Ascend
        } else {
            Direction::Descend
        };
        sources
            .par_iter()
            .map(|s| {
                let traj = flow_to_level(
                    f,
                    z,
                    s,
                    b,
                    direction,
                    &StepControl::default(),
                    &FlowBudget::default(),
                );
                pair_from(s, traj)
            })
            .collect()
    };
    Ok(LevelSetMap {
        level_from: a,
        level_to: b,
        pairs,
    })
}

/// Largest `|L_b^a(L_a^b(s)) - s|` over sources mapped both ways.
pub fn roundtrip_error(
    f: &Objective,
    z: &SingularSpace,
    a: f64,
    b: f64,
    sources: &[Vec<f64>],
) -> Result<f64, LevelMapError> {
    let forward = level_map(f, z, a, b, sources)?;
    let (src, img): (Vec<_>, Vec<_>) = forward
        .pairs
        .iter()
        .filter(|p| p.outcome == PairOutcome::Mapped)
        .map(|p| (p.source.clone(), p.image.clone()))
        .unzip();
    let back = level_map(f, z, b, a, &img)?;
    Ok(back
        .pairs
        .iter()
        .zip(&src)
        .filter(|(p, _)| p.outcome == PairOutcome::Mapped)
        .map(|(p, s)| dist(&p.image, s))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstableSlice {
    pub critical_point: CriticalPoint,
    pub level: f64,
    pub points: Vec<Vec<f64>>,
    pub n_probes: usize,
    pub n_descending: usize,
    /// Cluster representatives whose backward flow missed the critical point.
    pub n_rejected: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceOptions {
    pub n_probes: usize,
    pub probe_radius: f64,
    /// Probes must satisfy `f < c - margin * probe_radius^2`.
    pub curvature_margin: f64,
    pub seed: u64,
}

impl Default for SliceOptions {
    fn default() -> Self {
        SliceOptions {
            n_probes: 64,
            probe_radius: 1e-6,
            curvature_margin: 0.1,
            seed: 0,
        }
    }
}

/// Approximates `W_x^- ∩ f^{-1}(level)` by descending from probes just below
/// the critical point and keeping the cluster representatives whose
/// backward flow returns to it.
pub fn unstable_slice(
    f: &Objective,
    z: &SingularSpace,
    cp: &CriticalPoint,
    level: f64,
    opts: &SliceOptions,
) -> Result<UnstableSlice, LevelMapError> {
    if !(level < cp.value) {
        return Err(LevelMapError::InvalidLevel {
            level,
            value: cp.value,
        });
    }
    let tol = *z.tolerances();
    let rho = opts.probe_radius;
    let cut = cp.value - opts.curvature_margin * rho * rho;
    let probes = probe_points(z, &cp.location, rho, opts.n_probes, opts.seed);
    let below: Vec<Vec<f64>> = probes
        .iter()
        .filter(|p| f.value(p) < cut)
        .cloned()
        .collect();
    if below.is_empty() {
        return Err(LevelMapError::NoDescendingProbes);
    }
    let images: Vec<Vec<f64>> = below
        .par_iter()
        .filter_map(|p| {
            let traj = flow_to_level(
                f,
                z,
                p,
                level,
                Direction::Descend,
                &StepControl::default(),
                &FlowBudget::default(),
            )
            .ok()?;
            (traj.termination == Termination::ReachLevel).then(|| traj.end_point().to_vec())
        })
        .collect();

    let radius = 10.0 * tol.cluster_tol;
    let mut reps: Vec<Vec<f64>> = Vec::new();
    for y in images {
        if reps.iter().all(|r| dist(r, &y) > radius) {
            reps.push(y);
        }
    }
    let budget = FlowBudget::default();
    let [arc, time] = budget.criteria(z);
    let stops = [
        StopCriterion::ReachLevel { c: cp.value },
        StopCriterion::Converged {
            grad_tol: tol.grad_tol,
        },
        arc,
        time,
    ];
    let validated: Vec<bool> = reps
        .par_iter()
        .map(|r| {
            integrate(f, z, r, Direction::Ascend, &stops, &StepControl::default())
                .map(|t| {
                    let end = t.limit.as_deref().unwrap_or(t.end_point());
                    matches!(
                        t.termination,
                        Termination::ReachLevel | Termination::Converged
                    ) && dist(end, &cp.location) <= radius
                })
                .unwrap_or(false)
        })
        .collect();
    let n_rejected = validated.iter().filter(|v| !**v).count();
    let mut points: Vec<Vec<f64>> = reps
        .into_iter()
        .zip(validated)
        .filter_map(|(r, ok)| ok.then_some(r))
        .collect();
    points.sort_by(|a, b| crate::critical::lex_cmp(a, b));
    if points.is_empty() {
        return Err(LevelMapError::EmptySlice);
    }
    Ok(UnstableSlice {
        critical_point: cp.clone(),
        level,
        points,
        n_probes: probes.len(),
        n_descending: below.len(),
        n_rejected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition2Report {
    pub verdict: Verdict,
    pub band: [f64; 2],
    pub n_samples: usize,
    /// Flows that reached the band edge.
    pub n_reach_level: usize,
    /// Flows that converged to a point inside the band.
    pub n_converged: usize,
    /// Flows that converged to a point outside the band.
    pub n_converged_outside: usize,
    pub n_left_box: usize,
    pub n_budget: usize,
    pub n_error: usize,
    pub warnings: Vec<String>,
    /// The two flows from the first few samples, for inspection.
    pub examples: Vec<FlowTrajectory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition2Options {
    pub n_samples: usize,
    pub seed: u64,
    pub n_examples: usize,
}

impl Default for Condition2Options {
    fn default() -> Self {
        Condition2Options {
            n_samples: 200,
            seed: 0,
            n_examples: 2,
        }
    }
}

/// Points of Z with `a < f < b`, sampled uniformly in the central half of
/// the box and retracted. Keeping starts away from the walls leaves room for
/// the flow inside the box, so exits signal flows that run off to infinity.
fn band_samples(
    f: &Objective,
    z: &SingularSpace,
    a: f64,
    b: f64,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let center = z.center();
    let half: Vec<f64> = z.bounds().iter().map(|[lo, hi]| 0.25 * (hi - lo)).collect();
    let batch = 64usize;
    let mut out = Vec::with_capacity(count);
    for k in 0..(50 * count).div_ceil(batch) {
        let chunk: Vec<Vec<f64>> = (0..batch)
            .into_par_iter()
            .filter_map(|i| {
                let mut rng = task_rng(seed, (k * batch + i) as u64);
                let p: Vec<f64> = center
                    .iter()
                    .zip(&half)
                    .map(|(c, h)| c + h * rng.random_range(-1.0..1.0))
                    .collect();
                let y = z.retract(&p).ok()?;
                let v = f.value(&y);
                (z.in_box(&y) && a < v && v < b).then_some(y)
            })
            .collect();
        out.extend(chunk);
        if out.len() >= count {
            out.truncate(count);
            break;
        }
    }
    out
}

/// Condition 2 on the band `(a, b)`: every descending flow reaches `a` or
/// converges inside the band, and likewise every ascending flow for `b`.
pub fn check_condition2(
    f: &Objective,
    z: &SingularSpace,
    a: f64,
    b: f64,
    opts: &Condition2Options,
) -> Result<Condition2Report, LevelMapError> {
    if !(a < b) {
        return Err(LevelMapError::InvalidParameter(format!(
            "band ({a}, {b}) is empty"
        )));
    }
    let tol = *z.tolerances();
    let samples = band_samples(f, z, a, b, opts.n_samples, opts.seed);
    let flows: Vec<[Result<FlowTrajectory, FlowError>; 2]> = samples
        .par_iter()
        .map(|s| {
            let ctrl = StepControl::default();
            let budget = FlowBudget::default();
            [
                flow_to_level(f, z, s, a, Direction::Descend, &ctrl, &budget),
                flow_to_level(f, z, s, b, Direction::Ascend, &ctrl, &budget),
            ]
        })
        .collect();

    let mut report = Condition2Report {
        verdict: Verdict::Pass,
        band: [a, b],
        n_samples: samples.len(),
        n_reach_level: 0,
        n_converged: 0,
        n_converged_outside: 0,
        n_left_box: 0,
        n_budget: 0,
        n_error: 0,
        warnings: Vec::new(),
        examples: Vec::new(),
    };
    for pair in flows {
        for traj in pair {
            let Ok(traj) = traj else {
                report.n_error += 1;
                continue;
            };
            match traj.termination {
                Termination::ReachLevel => report.n_reach_level += 1,
                Termination::Converged => {
                    let limit = traj.limit.as_deref().unwrap_or(traj.end_point());
                    let v = f.value(limit);
                    if v >= a - tol.level_tol && v <= b + tol.level_tol {
                        report.n_converged += 1;
                    } else {
                        report.n_converged_outside += 1;
                    }
                }
                Termination::LeftBox => report.n_left_box += 1,
                _ => report.n_budget += 1,
            }
            if report.examples.len() < 2 * opts.n_examples {
                report.examples.push(traj);
            }
        }
    }
    report.verdict = if report.n_converged_outside > 0 {
        Verdict::Fail
    } else if report.n_left_box + report.n_budget + report.n_error > 0 {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    if samples.is_empty() {
        report.warnings.push(format!(
            "no points of Z in the box with {a} < f < {b}; vacuous pass"
        ));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    /// Level-set sources when the pilot projection mostly succeeds, ball sources otherwise.
    Auto,
    Ball,
    LevelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition4Options {
    pub radii: Vec<f64>,
    pub n_per_radius: usize,
    pub tube_rho: f64,
    pub seed: u64,
    pub source_mode: SourceMode,
    /// Relative growth of `d(r)` tolerated between consecutive radii.
    pub monotone_slack: f64,
}

impl Default for Condition4Options {
    fn default() -> Self {
        Condition4Options {
            radii: vec![0.1, 0.03, 0.01, 0.003],
            n_per_radius: 32,
            tube_rho: 0.05,
            seed: 0,
            source_mode: SourceMode::Auto,
            monotone_slack: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub r: f64,
    /// Largest distance from a landing to the slice; absent when nothing landed.
    pub d: Option<f64>,
    pub n_landed: usize,
    pub n_captured: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landing {
    pub radius: f64,
    pub source: Vec<f64>,
    pub image: Vec<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition4Report {
    pub verdict: Verdict,
    pub critical_point: Vec<f64>,
    pub critical_value: f64,
    pub eps: f64,
    pub tube_rho: f64,
    pub source_mode: SourceMode,
    pub modulus_table: Vec<ModulusRow>,
    pub landings: Vec<Landing>,
    pub n_inconclusive: usize,
    pub warnings: Vec<String>,
}

fn ball_point<R: Rng>(z: &SingularSpace, center: &[f64], r: f64, rng: &mut R) -> Option<Vec<f64>> {
    let n = center.len();
    let dir: Vec<f64> = (0..n)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect();
    let len = norm(&dir);
    if len == 0.0 {
        return None;
    }
    let rad = r * rng.random::<f64>().powf(1.0 / n as f64);
    let p: Vec<f64> = center
        .iter()
        .zip(&dir)
        .map(|(c, d)| c + rad * d / len)
        .collect();
    let y = z.retract(&p).ok()?;
    (z.in_box(&y) && dist(&y, center) <= r).then_some(y)
}

fn level_point(
    f: &Objective,
    z: &SingularSpace,
    cp: &CriticalPoint,
    r: f64,
    ball: Vec<f64>,
) -> Option<Vec<f64>> {
    let y = z.project_to_level_set(f, &ball, cp.value).ok()?;
    let d = dist(&y, &cp.location);
    (z.in_box(&y) && d <= r && d > z.tolerances().cluster_tol).then_some(y)
}

fn sources_at<F>(count: usize, seed: u64, task: u64, make: F) -> Vec<Vec<f64>>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Option<Vec<f64>> + Sync,
{
    let attempts = 20 * count;
    let found: Vec<Option<Vec<f64>>> = (0..attempts)
        .into_par_iter()
        .map(|k| {
            let mut rng = task_rng(seed, task.wrapping_mul(1 << 32).wrapping_add(k as u64));
            make(&mut rng)
        })
        .collect();
    found.into_iter().flatten().take(count).collect()
}

/// Condition 4 probe: flows from shrinking neighbourhoods of `cp` down to
/// `cp.value - eps` and measures how far the landings stray from the slice.
pub fn check_condition4(
    f: &Objective,
    z: &SingularSpace,
    cp: &CriticalPoint,
    eps: f64,
    slice: &UnstableSlice,
    opts: &Condition4Options,
) -> Result<Condition4Report, LevelMapError> {
    if !cp.kind.is_non_minimal() {
        return Err(LevelMapError::NotNonMinimal(cp.kind));
    }
    if !(eps > 0.0) {
        return Err(LevelMapError::InvalidParameter(format!("eps {eps}")));
    }
    if opts.radii.is_empty()
        || opts.radii.windows(2).any(|w| !(w[1] < w[0]))
        || opts.radii.iter().any(|r| !(*r > 0.0))
    {
        return Err(LevelMapError::InvalidParameter(
            "radii must be positive and strictly decreasing".into(),
        ));
    }
    if slice.points.is_empty() {
        return Err(LevelMapError::EmptySlice);
    }
    let tol = *z.tolerances();
    let target = cp.value - eps;

    let mode = match opts.source_mode {
        SourceMode::Auto => {
            let r = opts.radii[0];
            let pilot: Vec<bool> = (0..32u64)
                .into_par_iter()
                .filter_map(|k| {
                    let mut rng = task_rng(opts.seed ^ 0x9170, k);
                    let b = ball_point(z, &cp.location, r, &mut rng)?;
                    Some(level_point(f, z, cp, r, b).is_some())
                })
                .collect();
            let ok = pilot.iter().filter(|b| **b).count();
            if !pilot.is_empty() && 2 * ok >= pilot.len() {
                SourceMode::LevelSet
            } else {
                SourceMode::Ball
            }
        }
        m => m,
    };

    let mut report = Condition4Report {
        verdict: Verdict::Pass,
        critical_point: cp.location.clone(),
        critical_value: cp.value,
        eps,
        tube_rho: opts.tube_rho,
        source_mode: mode,
        modulus_table: Vec::new(),
        landings: Vec::new(),
        n_inconclusive: 0,
        warnings: Vec::new(),
    };
    for (k, &r) in opts.radii.iter().enumerate() {
        let sources = sources_at(opts.n_per_radius, opts.seed, k as u64 + 1, |rng| {
            let b = ball_point(z, &cp.location, r, rng)?;
            match mode {
                SourceMode::LevelSet => level_point(f, z, cp, r, b),
                _ => Some(b),
            }
        });
        if sources.len() < opts.n_per_radius {
            report.warnings.push(format!(
                "radius {r}: only {} of {} sources found",
                sources.len(),
                opts.n_per_radius
            ));
        }
        let flows: Vec<Result<FlowTrajectory, FlowError>> = sources
            .par_iter()
            .map(|s| {
                if f.value(s) <= target {
                    // Already at or below the target: lands where it starts.
                    return integrate(
                        f,
                        z,
                        s,
                        Direction::Descend,
                        &[
                            StopCriterion::ReachLevel { c: target },
                            StopCriterion::TimeBudget { time: 0.0 },
                        ],
                        &StepControl::default(),
                    );
                }
                flow_to_level(
                    f,
                    z,
                    s,
                    target,
                    Direction::Descend,
                    &StepControl::default(),
                    &FlowBudget::default(),
                )
            })
            .collect();
        let mut row = ModulusRow {
            r,
            d: None,
            n_landed: 0,
            n_captured: 0,
        };
        let mut d_max: f64 = 0.0;
        for (s, traj) in sources.iter().zip(flows) {
            match traj {
                Ok(t) if t.termination == Termination::ReachLevel => {
                    let image = t.end_point().to_vec();
                    let d = slice
                        .points
                        .iter()
                        .map(|p| dist(p, &image))
                        .fold(f64::INFINITY, f64::min);
                    d_max = d_max.max(d);
                    row.n_landed += 1;
                    report.landings.push(Landing {
                        radius: r,
                        source: s.clone(),
                        image,
                        distance: d,
                    });
                }
                Ok(t) if t.termination == Termination::Converged => {
                    let limit = t.limit.as_deref().unwrap_or(t.end_point());
                    if f.value(limit) >= cp.value - eps / 2.0 {
                        row.n_captured += 1;
                    } else {
                        report.n_inconclusive += 1;
                    }
                }
                _ => report.n_inconclusive += 1,
            }
        }
        if row.n_landed > 0 {
            row.d = Some(d_max);
        }
        report.modulus_table.push(row);
    }

    // Slice points are resolved to the clustering radius; below that, d(r) is noise.
    let floor = 10.0 * tol.cluster_tol;
    let table = &report.modulus_table;
    report.verdict = if report.n_inconclusive > 0 || table.iter().any(|row| row.n_landed == 0) {
        Verdict::Inconclusive
    } else {
        let d: Vec<f64> = table
            .iter()
            .map(|row| row.d.unwrap_or(f64::INFINITY))
            .collect();
        let monotone = d
            .windows(2)
            .all(|w| w[1] <= (1.0 + opts.monotone_slack) * w[0] + floor);
        let last = *d.last().expect("radii nonempty");
        if monotone && last < opts.tube_rho {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::{Polynomial, PolynomialSystem};
    use crate::tolerances::Tolerances;

    fn setup(
        names: &[&str],
        f: &str,
        constraints: &[&str],
        half: f64,
    ) -> (Objective, SingularSpace) {
        let v: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let comps = constraints
            .iter()
            .map(|c| Polynomial::parse(c, &v).unwrap())
            .collect();
        let z = SingularSpace::new(
            PolynomialSystem::new(&v, comps).unwrap(),
            vec![[-half, half]; names.len()],
            Tolerances::default(),
        )
        .unwrap();
        (Objective::new(Polynomial::parse(f, &v).unwrap()), z)
    }

    fn saddle_cp(n: usize) -> CriticalPoint {
        CriticalPoint {
            location: vec![0.0; n],
            value: 0.0,
            grad_norm: 0.0,
            kind: CriticalKind::Saddle,
            cluster_radius: 0.0,
        }
    }

    /// Point with `x y = k` on `x^2 - y^2 = level`, `y > 0`.
    fn hyperbola_point(k: f64, level: f64) -> Vec<f64> {
        let y2 = (-level + (level * level + 4.0 * k * k).sqrt()) / 2.0;
        let y = y2.sqrt();
        vec![k / y, y]
    }

    #[test]
    fn level_map_follows_the_conserved_quantity() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let src = hyperbola_point(1e-4, -0.01);
        let map = level_map(&f, &z, -0.01, 0.01, &[src]).unwrap();
        let p = &map.pairs[0];
        assert_eq!(p.outcome, PairOutcome::Mapped);
        let img = &p.image;
        let x = ((0.01 + (1e-4f64 + 4e-8).sqrt()) / 2.0).sqrt();
        assert!(
            (img[0] - x).abs() < 1e-7 && (img[1] - 1e-4 / x).abs() < 1e-7,
            "{img:?}"
        );
    }

    #[test]
    fn identity_map_and_invalid_source() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let src = hyperbola_point(0.3, -0.01);
        let map = level_map(&f, &z, -0.01, -0.01, std::slice::from_ref(&src)).unwrap();
        assert_eq!(map.pairs[0].image, src);
        assert_eq!(roundtrip_error(&f, &z, -0.01, -0.01, &[src]).unwrap(), 0.0);
        assert!(matches!(
            level_map(&f, &z, -0.01, 0.0, &[vec![1.0, 0.0]]),
            Err(LevelMapError::InvalidSource { index: 0, .. })
        ));
    }

    #[test]
    fn unstable_axis_source_is_captured() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let map = level_map(&f, &z, -0.01, 0.0, &[vec![0.0, 0.1]]).unwrap();
        assert!(map.pairs[0].captured());
        assert!(norm(&map.pairs[0].image) < 1e-8);
    }

    #[test]
    fn roundtrip_between_regular_levels() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let sources: Vec<Vec<f64>> = (1..=10)
            .map(|k| hyperbola_point(0.01 * k as f64, -0.01))
            .collect();
        assert!(roundtrip_error(&f, &z, -0.01, -0.005, &sources).unwrap() < 1e-6);
    }

    #[test]
    fn saddle_slice_is_two_points_on_the_y_axis() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let slice = unstable_slice(&f, &z, &saddle_cp(2), -0.01, &SliceOptions::default()).unwrap();
        assert_eq!(slice.points.len(), 2, "{slice:?}");
        assert!(slice.points[0][0].abs() < 1e-6 && (slice.points[0][1] + 0.1).abs() < 1e-9);
        assert!(slice.points[1][0].abs() < 1e-6 && (slice.points[1][1] - 0.1).abs() < 1e-9);
        assert_eq!(slice.n_rejected, 0);
    }

    #[test]
    fn minimum_has_no_slice() {
        let (f, z) = setup(&["x"], "x^4", &[], 2.0);
        let cp = CriticalPoint {
            kind: CriticalKind::Minimum,
            ..saddle_cp(1)
        };
        assert_eq!(
            unstable_slice(&f, &z, &cp, -0.01, &SliceOptions::default()),
            Err(LevelMapError::NoDescendingProbes)
        );
    }

    #[test]
    fn condition2_on_quartic_and_empty_band() {
        let (f, z) = setup(&["x"], "x^4", &[], 2.0);
        let opts = Condition2Options {
            n_samples: 20,
            ..Default::default()
        };
        let r = check_condition2(&f, &z, -1.0, 1.0, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert_eq!(r.n_samples, 20);
        assert_eq!(r.n_converged, 20);
        assert_eq!(r.n_reach_level, 20);

        let empty = check_condition2(&f, &z, -3.0, -2.0, &opts).unwrap();
        assert_eq!(empty.verdict, Verdict::Pass);
        assert_eq!(empty.n_samples, 0);
        assert_eq!(empty.warnings.len(), 1);
    }

    #[test]
    fn condition4_on_saddle() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let cp = saddle_cp(2);
        let eps = 0.01;
        let slice = unstable_slice(&f, &z, &cp, -eps, &SliceOptions::default()).unwrap();
        let opts = Condition4Options {
            n_per_radius: 8,
            ..Default::default()
        };
        let r = check_condition4(&f, &z, &cp, eps, &slice, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{:?}", r.modulus_table);
        assert_eq!(r.source_mode, SourceMode::LevelSet);
        for row in &r.modulus_table {
            assert!(
                row.d.unwrap() <= 1.05 * row.r * row.r / (2.0 * eps.sqrt()),
                "{row:?}"
            );
        }
        for l in &r.landings {
            assert!((l.image[0] * l.image[1] - l.source[0] * l.source[1]).abs() < 1e-9);
            assert!((f.value(&l.image) + eps).abs() < 1e-10);
        }
    }

    #[test]
    fn condition4_refuses_minimum_and_bad_radii() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let cp = saddle_cp(2);
        let slice = unstable_slice(&f, &z, &cp, -0.01, &SliceOptions::default()).unwrap();
        let min = CriticalPoint {
            kind: CriticalKind::Minimum,
            ..cp.clone()
        };
        assert!(matches!(
            check_condition4(&f, &z, &min, 0.01, &slice, &Condition4Options::default()),
            Err(LevelMapError::NotNonMinimal(_))
        ));
        let bad = Condition4Options {
            radii: vec![0.01, 0.1],
            ..Default::default()
        };
        assert!(matches!(
            check_condition4(&f, &z, &cp, 0.01, &slice, &bad),
            Err(LevelMapError::InvalidParameter(_))
        ));
    }
}
