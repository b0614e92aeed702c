//! Łojasiewicz exponent and constant near a critical point, the ε/δ recipe
//! built on them, and pointwise checks of the resulting flow estimates.
//!
//! The inequality `|grad f(y)| >= C |c - f(y)|^(1 - theta)` is a lower
//! bound, so the fit is a lower envelope: in log coordinates
//! `u = log|c - f|`, `v = log|grad f|` the samples are split into quantile
//! bins of `u`, each bin contributes its lowest `v`, and a line is fitted
//! through those minima. Its slope is `1 - theta`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critical::{CriticalKind, CriticalPoint};
use crate::flow::{flow_to_level, Direction, FlowBudget, FlowError, StepControl, Termination};
use crate::linalg::{dist, norm};
use crate::report::task_rng;
use crate::space::{Objective, SingularSpace};

const MIN_SAMPLES: usize = 100;
const BINS: usize = 30;
const THETA_MIN: f64 = 0.05;
const THETA_MAX: f64 = 0.95;
/// Slopes this far outside `[1 - THETA_MAX, 1 - THETA_MIN]` are clamped
/// (and flagged); anything further is a failed fit.
const CLAMP_MARGIN: f64 = 0.1;
/// Values closer than this to the critical value carry no slope information.
const VALUE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LojaError {
    #[error("only {got} usable samples, at least {needed} required")]
    InsufficientSamples { got: usize, needed: usize },
    #[error("fitted slope {slope} gives an exponent outside (0, 1)")]
    SlopeOutOfRange { slope: f64 },
    #[error("epsilon {eps} reaches the nearest other critical value (gap {gap})")]
    EpsilonTooLarge { eps: f64, gap: f64 },
    #[error("the critical point is not non-minimal (kind {0:?})")]
    NotNonMinimal(CriticalKind),
    #[error("start {index} is not a valid start: {reason}")]
    InvalidStart { index: usize, reason: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LojasiewiczFit {
    pub theta: f64,
    #[serde(rename = "C")]
    pub constant_c: f64,
    #[serde(rename = "delta")]
    pub radius_delta: f64,
    pub critical_value: f64,
    pub n_samples: usize,
    pub envelope_slack: f64,
    pub holdout_pass_fraction: f64,
    /// Sampling radius around the critical point.
    pub radius: f64,
    /// Raw envelope slope before any clamping.
    pub slope: f64,
    /// True when `theta` was clamped to `[0.05, 0.95]`.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub radius: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Neighbourhood radius recorded in the fit; defaults to half the
    /// distance from the critical point to the box boundary.
    pub delta: Option<f64>,
    pub holdout_samples: usize,
    pub slack: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            radius: 0.5,
            n_samples: 2000,
            seed: 0,
            delta: None,
            holdout_samples: 500,
            slack: 0.05,
        }
    }
}

/// Half the distance to the nearest other critical point, capped by half
/// the distance to the box boundary.
pub fn default_delta(z: &SingularSpace, cp: &CriticalPoint, others: &[CriticalPoint]) -> f64 {
    let to_other = others
        .iter()
        .map(|o| dist(&o.location, &cp.location))
        .filter(|d| *d > z.tolerances().cluster_tol)
        .fold(f64::INFINITY, f64::min);
    (0.5 * to_other).min(0.5 * z.distance_to_boundary(&cp.location))
}

/// `(log|c - f(y)|, log|grad f(y)|)` for points sampled on Z within `radius`
/// of the critical point. Gaussian scales are log-uniform over three
/// decades so that small values of `|c - f|` are represented.
fn sample_pairs(
    f: &Objective,
    z: &SingularSpace,
    cp: &CriticalPoint,
    radius: f64,
    count: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    let batch = 64usize;
    let max_batches = (50 * count).div_ceil(batch);
    let mut out = Vec::with_capacity(count);
    for b in 0..max_batches {
        let chunk: Vec<(f64, f64)> = (0..batch)
            .into_par_iter()
            .filter_map(|k| {
                let mut rng = task_rng(seed, (b * batch + k) as u64);
                let scale = radius * 10f64.powf(-3.0 * rng.random::<f64>());
                let p: Vec<f64> = cp
                    .location
                    .iter()
                    .map(|c| {
                        c + scale
                            * <StandardNormal as Distribution<f64>>::sample(
                                &StandardNormal,
                                &mut rng,
                            )
                    })
                    .collect();
                let y = z.retract(&p).ok()?;
                if !z.in_box(&y) || dist(&y, &cp.location) > radius {
                    return None;
                }
                let gap = (cp.value - f.value(&y)).abs();
                let g = norm(&z.stratum_grad(f, &y));
                (gap > VALUE_FLOOR && g > 0.0).then(|| (gap.ln(), g.ln()))
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

/// Least-squares line `v = slope * u + intercept`.
fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mu = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = points.iter().map(|p| p.1).sum::<f64>() / n;
    let suu: f64 = points.iter().map(|p| (p.0 - mu).powi(2)).sum();
    let suv: f64 = points.iter().map(|p| (p.0 - mu) * (p.1 - mv)).sum();
    let slope = if suu > 0.0 { suv / suu } else { 0.0 };
    (slope, mv - slope * mu)
}

fn bin_minima(pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = sorted.len();
    (0..BINS)
        .filter_map(|k| {
            let lo = k * n / BINS;
            let hi = (k + 1) * n / BINS;
            sorted[lo..hi]
                .iter()
                .copied()
                .min_by(|a, b| a.1.total_cmp(&b.1))
        })
        .collect()
}

/// Fraction of pairs satisfying `v >= log C + (1 - theta) u + log(1 - slack)`.
fn pass_fraction(pairs: &[(f64, f64)], theta: f64, c: f64, slack: f64) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let cut = c.ln() + (1.0 - slack).ln();
    let ok = pairs
        .iter()
        .filter(|(u, v)| *v >= cut + (1.0 - theta) * u)
        .count();
    ok as f64 / pairs.len() as f64
}

pub fn estimate_fit(
    f: &Objective,
    z: &SingularSpace,
    cp: &CriticalPoint,
    opts: &FitOptions,
) -> Result<LojasiewiczFit, LojaError> {
    if !(opts.radius > 0.0) {
        return Err(LojaError::InvalidParameter(format!(
            "radius {}",
            opts.radius
        )));
    }
    let pairs = sample_pairs(
        f,
        z,
        cp,
        opts.radius,
        opts.n_samples.max(MIN_SAMPLES),
        opts.seed,
    );
    if pairs.len() < MIN_SAMPLES {
        return Err(LojaError::InsufficientSamples {
            got: pairs.len(),
            needed: MIN_SAMPLES,
        });
    }
    let minima = bin_minima(&pairs);
    let (slope, mut intercept) = fit_line(&minima);

    let lo = 1.0 - THETA_MAX;
    let hi = 1.0 - THETA_MIN;
    if slope < lo - CLAMP_MARGIN || slope > hi + CLAMP_MARGIN {
        return Err(LojaError::SlopeOutOfRange { slope });
    }
    let clamped = !(lo..=hi).contains(&slope);
    let used = slope.clamp(lo, hi);
    if clamped {
        intercept = minima.iter().map(|(u, v)| v - used * u).sum::<f64>() / minima.len() as f64;
    }
    let theta = 1.0 - used;
    let mut c = intercept.exp();

    let slack_of = |c: f64| {
        pairs
            .iter()
            .map(|(u, v)| {
                let fitted = c * (used * u).exp();
                ((fitted - v.exp()) / fitted).max(0.0)
            })
            .fold(0.0, f64::max)
    };
    let mut envelope_slack = slack_of(c);
    if envelope_slack >= opts.slack {
        // Drop to the supporting line of the sample cloud.
        c = pairs
            .iter()
            .map(|(u, v)| (v - used * u).exp())
            .fold(f64::INFINITY, f64::min);
        envelope_slack = slack_of(c);
    }

    let holdout = sample_pairs(
        f,
        z,
        cp,
        opts.radius,
        opts.holdout_samples,
        opts.seed ^ 0x0d0e_5eed,
    );
    let holdout_pass_fraction = pass_fraction(&holdout, theta, c, opts.slack);

    Ok(LojasiewiczFit {
        theta,
        constant_c: c,
        radius_delta: opts
            .delta
            .unwrap_or_else(|| 0.5 * z.distance_to_boundary(&cp.location)),
        critical_value: cp.value,
        n_samples: pairs.len(),
        envelope_slack,
        holdout_pass_fraction,
        radius: opts.radius,
        slope,
        clamped,
    })
}

/// `eps = safety * (C theta delta / 2)^(1/theta)`, so that the length bound
/// at `eps` is `safety^theta * delta / 2`.
pub fn choose_epsilon(fit: &LojasiewiczFit, safety: f64) -> f64 {
    safety * (fit.constant_c * fit.theta * fit.radius_delta / 2.0).powf(1.0 / fit.theta)
}

/// [`choose_epsilon`], refused when the level `c - eps` would reach another
/// critical value.
pub fn choose_epsilon_checked(
    fit: &LojasiewiczFit,
    safety: f64,
    critical_values: &[f64],
    value_merge_tol: f64,
) -> Result<f64, LojaError> {
    let eps = choose_epsilon(fit, safety);
    let gap = critical_values
        .iter()
        .map(|v| fit.critical_value - v)
        .filter(|d| *d > value_merge_tol)
        .fold(f64::INFINITY, f64::min);
    if eps >= gap {
        return Err(LojaError::EpsilonTooLarge { eps, gap });
    }
    Ok(eps)
}

/// Upper bound `(1 / (C theta)) eps^theta` on the length of a flow line from
/// the critical level down to `c - eps`.
pub fn length_bound(fit: &LojasiewiczFit, eps: f64) -> f64 {
    eps.powf(fit.theta) / (fit.constant_c * fit.theta)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub passed: usize,
    pub total: usize,
}

impl Tally {
    fn record(&mut self, ok: bool) {
        self.total += 1;
        if ok {
            self.passed += 1;
        }
    }

    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.passed as f64 / self.total as f64
        }
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEstimateReport {
    pub eps: f64,
    pub length_bound: f64,
    /// Interior samples with `d/dt (c - f)^theta >= C theta |grad f| (1 - slack)`.
    pub differential: Tally,
    /// Samples with `arc(t) <= (1 / C theta) (c - f)^theta (1 + slack)`.
    pub arc_bound: Tally,
    /// Trajectories whose total length stays below the length bound (with slack).
    pub total_length: Tally,
    /// Trajectories ending within `delta` of the critical point.
    pub confinement: Tally,
    /// Trajectories captured by a critical point before reaching `c - eps`.
    pub n_captured: usize,
    /// Trajectories that ended in an error or a budget.
    pub n_failed: usize,
    pub max_arc_ratio: f64,
    pub max_end_distance: f64,
}

pub fn verify_flow_estimates(
    f: &Objective,
    z: &SingularSpace,
    cp: &CriticalPoint,
    fit: &LojasiewiczFit,
    eps: f64,
    starts: &[Vec<f64>],
    slack: f64,
) -> Result<FlowEstimateReport, LojaError> {
    if !cp.kind.is_non_minimal() {
        return Err(LojaError::NotNonMinimal(cp.kind));
    }
    if !(eps > 0.0) {
        return Err(LojaError::InvalidParameter(format!("eps {eps}")));
    }
    let tol = z.tolerances();
    let c = cp.value;
    let delta = fit.radius_delta;
    for (index, s) in starts.iter().enumerate() {
        let reason = if !z.is_member(s, tol.member_tol) {
            Some("not on Z".to_string())
        } else if (f.value(s) - c).abs() >= tol.level_tol {
            Some(format!("f = {} is not the critical value", f.value(s)))
        } else if dist(s, &cp.location) <= tol.cluster_tol {
            Some("coincides with the critical point".to_string())
        } else if dist(s, &cp.location) >= 0.5 * delta {
            Some("farther than delta/2 from the critical point".to_string())
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(LojaError::InvalidStart { index, reason });
        }
    }

    let bound = length_bound(fit, eps);
    let ctheta = fit.constant_c * fit.theta;
    let target = c - eps;
    let trajectories: Vec<Result<_, FlowError>> = starts
        .par_iter()
        .map(|s| {
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

    let mut report = FlowEstimateReport {
        eps,
        length_bound: bound,
        differential: Tally::default(),
        arc_bound: Tally::default(),
        total_length: Tally::default(),
        confinement: Tally::default(),
        n_captured: 0,
        n_failed: 0,
        max_arc_ratio: 0.0,
        max_end_distance: 0.0,
    };
    for traj in trajectories {
        let Ok(traj) = traj else {
            report.n_failed += 1;
            report.total_length.record(false);
            report.confinement.record(false);
            continue;
        };
        let phi: Vec<f64> = traj
            .samples
            .iter()
            .map(|s| (c - s.f).max(0.0).powf(fit.theta))
            .collect();
        for i in 1..traj.samples.len().saturating_sub(1) {
            let (a, b) = (&traj.samples[i - 1], &traj.samples[i + 1]);
            let rate = (phi[i + 1] - phi[i - 1]) / (b.t - a.t);
            report
                .differential
                .record(rate >= ctheta * traj.samples[i].grad_norm * (1.0 - slack));
        }
        match traj.termination {
            Termination::ReachLevel => {}
            Termination::Converged => {
                report.n_captured += 1;
                continue;
            }
            _ => {
                report.n_failed += 1;
                report.total_length.record(false);
                report.confinement.record(false);
                continue;
            }
        }
        for (s, p) in traj.samples.iter().zip(&phi) {
            let allowed = p / ctheta;
            report
                .arc_bound
                .record(s.arc_len <= allowed * (1.0 + slack));
            if allowed > 0.0 {
                report.max_arc_ratio = report.max_arc_ratio.max(s.arc_len / allowed);
            }
        }
        report
            .total_length
            .record(traj.total_arc_length() < bound * (1.0 + slack));
        let d = dist(traj.end_point(), &cp.location);
        report.max_end_distance = report.max_end_distance.max(d);
        report.confinement.record(d < delta);
    }
    Ok(report)
}
