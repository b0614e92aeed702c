//! Adaptive integration of the projected gradient flow on Z.
//!
//! The integrator is the Dormand-Prince 5(4) pair. Every stage point is
//! retracted onto Z before the field is evaluated there, and the arc length
//! `∫ |grad f| dt` is carried along as an extra quadrature with the same
//! fifth-order weights. Steps are capped by a tenth of the box diameter and
//! by half the distance to the nearest isolated singular point of Z, so a
//! trajectory heading into such a point approaches it geometrically and is
//! captured there instead of being carried through.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dist, norm};
use crate::space::{Objective, SingularSpace, SpaceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Follow `-grad f`; `f` decreases.
    Descend,
    /// Follow `+grad f`; realizes limits as `t -> -inf`.
    Ascend,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Descend => -1.0,
            Direction::Ascend => 1.0,
        }
    }

    pub fn reverse(self) -> Direction {
        match self {
            Direction::Descend => Direction::Ascend,
            Direction::Ascend => Direction::Descend,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopCriterion {
    /// Stop when `f` reaches `c` (from above when descending, below when ascending).
    ReachLevel {
        c: f64,
    },
    /// Stop once the projected gradient norm stays below `grad_tol` for
    /// three consecutive accepted steps.
    Converged {
        grad_tol: f64,
    },
    ArcBudget {
        length: f64,
    },
    TimeBudget {
        time: f64,
    },
    /// Leaving the box always terminates a flow; listing it is optional.
    LeftBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachLevel,
    Converged,
    ArcBudget,
    TimeBudget,
    LeftBox,
    StepBudget,
}

impl Termination {
    /// Budget exhaustion: neither a level nor a limit was reached.
    pub fn is_budget(self) -> bool {
        matches!(
            self,
            Termination::ArcBudget | Termination::TimeBudget | Termination::StepBudget
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
    /// Consecutive step halvings allowed after retraction failures.
    pub max_halvings: usize,
    pub min_step: f64,
    /// Allowed per-step increase of `f` along a descent (decrease along an ascent).
    pub mono_tol: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            atol: 1e-9,
            rtol: 1e-9,
            max_steps: 200_000,
            max_halvings: 50,
            min_step: 1e-16,
            mono_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub y: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub arc_len: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub samples: Vec<Sample>,
    pub direction: Direction,
    pub termination: Termination,
    /// For converged flows: the limit point (an isolated singular point of Z
    /// when the flow was captured there, otherwise the final sample).
    pub limit: Option<Vec<f64>>,
    /// Index into [`SingularSpace::singular_points`] when captured by one.
    pub singular_capture: Option<usize>,
    /// Accepted steps across which the effective rank of `Dg` changed.
    pub rank_transitions: usize,
}

impl FlowTrajectory {
    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectories are never empty")
    }

    pub fn end_point(&self) -> &[f64] {
        &self.last().y
    }

    pub fn total_arc_length(&self) -> f64 {
        self.last().arc_len
    }

    pub fn captured(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// Polyline length through the recorded samples.
    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| dist(&w[0].y, &w[1].y))
            .sum()
    }

    /// Writes `t, y_1..y_n, f, grad_norm, arc_len`, one row per sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.first().y.len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("y_{i}")));
        header.extend(["f", "grad_norm", "arc_len"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = vec![s.t.to_string()];
            row.extend(s.y.iter().map(|v| v.to_string()));
            row.extend([s.f, s.grad_norm, s.arc_len].map(|v| v.to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("starting point is not on Z (residual {residual:e}, in box: {in_box})")]
    NotOnZ { residual: f64, in_box: bool },
    #[error("no arc or time budget among the stop criteria")]
    NoBudget,
    #[error("target level {target} is not on the {direction:?} side of f(x0) = {start}")]
    InvalidTarget {
        target: f64,
        start: f64,
        direction: Direction,
    },
    #[error("retraction failed after repeated step halving at t = {}: {cause}", last.t)]
    Retraction {
        last: Box<Sample>,
        cause: SpaceError,
    },
    #[error("step size underflow at t = {}", last.t)]
    StepUnderflow { last: Box<Sample> },
    #[error(transparent)]
    Space(#[from] SpaceError),
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B_LOW: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Consecutive small-gradient steps required to declare convergence.
const CONVERGED_STREAK: usize = 3;

struct Step {
    y: Vec<f64>,
    /// Field at `y` (first stage of the next step).
    k_end: Vec<f64>,
    err: f64,
    arc: f64,
}

struct Integrator<'a> {
    f: &'a Objective,
    z: &'a SingularSpace,
    sign: f64,
    ctrl: StepControl,
}

impl Integrator<'_> {
    fn field(&self, y: &[f64]) -> Vec<f64> {
        self.z
            .stratum_grad(self.f, y)
            .into_iter()
            .map(|g| self.sign * g)
            .collect()
    }

    fn step(&self, y: &[f64], k1: &[f64], h: f64) -> Result<Step, SpaceError> {
        let n = y.len();
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(k1.to_vec());
        let mut y_end = Vec::new();
        for s in 1..7 {
            let mut p = y.to_vec();
            for (j, kj) in k.iter().enumerate() {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..n {
                        p[i] += h * a * kj[i];
                    }
                }
            }
            let p = self.z.retract(&p)?;
            k.push(self.field(&p));
            if s == 6 {
                y_end = p;
            }
        }
        let mut err = 0.0f64;
        for i in 0..n {
            let e: f64 = (0..7).map(|s| (B[s] - B_LOW[s]) * k[s][i]).sum::<f64>() * h;
            let scale = self.ctrl.atol + self.ctrl.rtol * y[i].abs().max(y_end[i].abs());
            err = err.max(e.abs() / scale);
        }
        let speeds: Vec<f64> = k.iter().map(|ks| norm(ks)).collect();
        let arc = h * (0..7).map(|s| B[s] * speeds[s]).sum::<f64>();
        let k_end = k.pop().expect("seven stages");
        Ok(Step {
            y: y_end,
            k_end,
            err,
            arc,
        })
    }

    fn sample(&self, t: f64, y: Vec<f64>, k: &[f64], arc_len: f64) -> Sample {
        Sample {
            t,
            f: self.f.value(&y),
            grad_norm: norm(k),
            y,
            arc_len,
        }
    }

    fn reached(&self, value: f64, level: f64) -> bool {
        if self.sign < 0.0 {
            value <= level
        } else {
            value >= level
        }
    }

    /// Shrinks the final step so it lands on `f = level`.
    fn land_on_level(&self, start: &Sample, k1: &[f64], h: f64, level: f64) -> Option<(f64, Step)> {
        let tol = self.z.tolerances().level_tol;
        let phi = |v: f64| self.sign * (level - v);
        let (mut lo, mut hi) = (0.0, h);
        let mut phi_lo = phi(start.f);
        let full = self.step(&start.y, k1, h).ok()?;
        let mut phi_hi = phi(self.f.value(&full.y));
        let mut best = (h, full);
        let mut side = 0i8;
        for _ in 0..200 {
            let best_val = self.f.value(&best.1.y);
            if (best_val - level).abs() < tol {
                return Some(best);
            }
            // Illinois variant of regula falsi, falling back to bisection.
            let mut s = if phi_hi != phi_lo {
                hi - phi_hi * (hi - lo) / (phi_hi - phi_lo)
            } else {
                0.5 * (lo + hi)
            };
            if !(s > lo && s < hi) {
                s = 0.5 * (lo + hi);
            }
            let trial = self.step(&start.y, k1, s).ok()?;
            let val = phi(self.f.value(&trial.y));
            if val > 0.0 {
                lo = s;
                phi_lo = val;
                if side == -1 {
                    phi_hi *= 0.5;
                }
                side = -1;
            } else {
                hi = s;
                phi_hi = val;
                if side == 1 {
                    phi_lo *= 0.5;
                }
                side = 1;
            }
            best = (s, trial);
            if hi - lo <= f64::EPSILON * h {
                break;
            }
        }
        let (s, mut step) = best;
        if (self.f.value(&step.y) - level).abs() >= tol {
            step.y = self.z.project_to_level_set(self.f, &step.y, level).ok()?;
            step.k_end = self.field(&step.y);
        }
        Some((s, step))
    }

    /// Largest fraction of the step that stays inside the box.
    fn clip_to_box(&self, start: &Sample, k1: &[f64], h: f64) -> Option<(f64, Step)> {
        let (mut lo, mut hi) = (0.0, h);
        let mut best: Option<(f64, Step)> = None;
        for _ in 0..60 {
            let s = 0.5 * (lo + hi);
            let trial = self.step(&start.y, k1, s).ok()?;
            if self.z.in_box(&trial.y) {
                lo = s;
                best = Some((s, trial));
            } else {
                hi = s;
            }
        }
        best
    }
}

struct Stops {
    level: Option<f64>,
    grad_tol: Option<f64>,
    arc: f64,
    time: f64,
}

impl Stops {
    fn from_list(list: &[StopCriterion]) -> Result<Self, FlowError> {
        let mut stops = Stops {
            level: None,
            grad_tol: None,
            arc: f64::INFINITY,
            time: f64::INFINITY,
        };
        let mut budget = false;
        for s in list {
            match *s {
                StopCriterion::ReachLevel { c } => stops.level = Some(c),
                StopCriterion::Converged { grad_tol } => stops.grad_tol = Some(grad_tol),
                StopCriterion::ArcBudget { length } => {
                    stops.arc = stops.arc.min(length);
                    budget = true;
                }
                StopCriterion::TimeBudget { time } => {
                    stops.time = stops.time.min(time);
                    budget = true;
                }
                StopCriterion::LeftBox => {}
            }
        }
        if budget {
            Ok(stops)
        } else {
            Err(FlowError::NoBudget)
        }
    }
}

/// Integrates the projected gradient flow from `x0` until the first stop
/// criterion fires.
pub fn integrate(
    f: &Objective,
    z: &SingularSpace,
    x0: &[f64],
    direction: Direction,
    stop: &[StopCriterion],
    ctrl: &StepControl,
) -> Result<FlowTrajectory, FlowError> {
    if x0.len() != z.dim() {
        return Err(SpaceError::DimensionMismatch {
            expected: z.dim(),
            got: x0.len(),
        }
        .into());
    }
    let tol = *z.tolerances();
    if !z.is_member(x0, tol.member_tol) {
        return Err(FlowError::NotOnZ {
            residual: z.res(x0),
            in_box: z.in_box(x0),
        });
    }
    let stops = Stops::from_list(stop)?;
    let integ = Integrator {
        f,
        z,
        sign: direction.sign(),
        ctrl: *ctrl,
    };
    let diam = z.diameter();

    let mut k = integ.field(x0);
    let mut samples = vec![integ.sample(0.0, x0.to_vec(), &k, 0.0)];
    let traj = |samples: Vec<Sample>, termination, limit, singular_capture, rank_transitions| {
        FlowTrajectory {
            samples,
            direction,
            termination,
            limit,
            singular_capture,
            rank_transitions,
        }
    };

    let captured_by = |y: &[f64]| {
        z.nearest_isolated_singular(y)
            .filter(|(_, d)| *d <= tol.singular_capture)
            .map(|(i, _)| i)
    };
    if let Some(i) = captured_by(x0) {
        let loc = z.singular_points()[i].location.clone();
        return Ok(traj(samples, Termination::Converged, Some(loc), Some(i), 0));
    }
    let s0 = &samples[0];
    if let Some(level) = stops.level {
        if integ.reached(s0.f, level) {
            return Ok(traj(samples, Termination::ReachLevel, None, None, 0));
        }
    }
    if s0.grad_norm == 0.0 || stops.grad_tol.is_some_and(|g| s0.grad_norm < g) {
        let y = s0.y.clone();
        return Ok(traj(samples, Termination::Converged, Some(y), None, 0));
    }

    let mut h = 1e-3 * diam / s0.grad_norm;
    let mut streak = 0usize;
    let mut halvings = 0usize;
    let mut rank = z.effective_rank(x0);
    let mut rank_transitions = 0usize;

    for _ in 0..ctrl.max_steps {
        let cur = samples.last().expect("nonempty");
        let speed = cur.grad_norm;
        let mut cap = 0.1 * diam / speed;
        if let Some((_, d)) = z.nearest_isolated_singular(&cur.y) {
            cap = cap.min(0.5 * d / speed);
        }
        h = h.min(cap);
        if h < ctrl.min_step {
            return Err(FlowError::StepUnderflow {
                last: Box::new(cur.clone()),
            });
        }

        let step = match integ.step(&cur.y, &k, h) {
            Ok(s) => s,
            Err(cause) => {
                halvings += 1;
                if halvings > ctrl.max_halvings {
                    return Err(FlowError::Retraction {
                        last: Box::new(cur.clone()),
                        cause,
                    });
                }
                h *= 0.5;
                continue;
            }
        };
        halvings = 0;
        if !(step.err <= 1.0) {
            let factor = if step.err.is_finite() {
                (0.9 * step.err.powf(-0.2)).max(0.2)
            } else {
                0.2
            };
            h *= factor;
            continue;
        }
        let f_new = f.value(&step.y);
        if integ.sign * (cur.f - f_new) > ctrl.mono_tol {
            h *= 0.5;
            continue;
        }
        if !z.constraints().is_empty() {
            let new_rank = z.effective_rank(&step.y);
            if new_rank != rank {
                if h > 1e-10 {
                    h *= 0.5;
                    continue;
                }
                rank_transitions += 1;
            }
            rank = new_rank;
        }

        let grow = if step.err > 0.0 {
            (0.9 * step.err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };

        if let Some(level) = stops.level {
            if integ.reached(f_new, level) {
                let cur = cur.clone();
                if let Some((s, landed)) = integ.land_on_level(&cur, &k, h, level) {
                    if z.in_box(&landed.y) {
                        let arc = cur.arc_len + landed.arc;
                        samples.push(integ.sample(cur.t + s, landed.y, &landed.k_end, arc));
                        return Ok(traj(
                            samples,
                            Termination::ReachLevel,
                            None,
                            None,
                            rank_transitions,
                        ));
                    }
                }
            }
        }
        if !z.in_box(&step.y) {
            let cur = cur.clone();
            if let Some((s, clipped)) = integ.clip_to_box(&cur, &k, h) {
                let arc = cur.arc_len + clipped.arc;
                samples.push(integ.sample(cur.t + s, clipped.y, &clipped.k_end, arc));
            }
            return Ok(traj(
                samples,
                Termination::LeftBox,
                None,
                None,
                rank_transitions,
            ));
        }

        let t = cur.t + h;
        let arc = cur.arc_len + step.arc;
        k = step.k_end;
        samples.push(integ.sample(t, step.y, &k, arc));
        let last = samples.last().expect("nonempty");

        if let Some(i) = captured_by(&last.y) {
            let loc = z.singular_points()[i].location.clone();
            return Ok(traj(
                samples,
                Termination::Converged,
                Some(loc),
                Some(i),
                rank_transitions,
            ));
        }
        if last.grad_norm == 0.0 {
            let y = last.y.clone();
            return Ok(traj(
                samples,
                Termination::Converged,
                Some(y),
                None,
                rank_transitions,
            ));
        }
        if let Some(g) = stops.grad_tol {
            streak = if last.grad_norm < g { streak + 1 } else { 0 };
            if streak >= CONVERGED_STREAK {
                let y = last.y.clone();
                return Ok(traj(
                    samples,
                    Termination::Converged,
                    Some(y),
                    None,
                    rank_transitions,
                ));
            }
        }
        if last.arc_len >= stops.arc {
            return Ok(traj(
                samples,
                Termination::ArcBudget,
                None,
                None,
                rank_transitions,
            ));
        }
        if last.t >= stops.time {
            return Ok(traj(
                samples,
                Termination::TimeBudget,
                None,
                None,
                rank_transitions,
            ));
        }
        h *= grow;
    }
    Ok(traj(
        samples,
        Termination::StepBudget,
        None,
        None,
        rank_transitions,
    ))
}

/// Arc and time budgets used by the convenience entry points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowBudget {
    /// Multiple of the box diameter.
    pub arc_factor: f64,
    pub time: f64,
}

impl Default for FlowBudget {
    fn default() -> Self {
        FlowBudget {
            arc_factor: 100.0,
            time: 1e7,
        }
    }
}

impl FlowBudget {
    pub(crate) fn criteria(&self, z: &SingularSpace) -> [StopCriterion; 2] {
        [
            StopCriterion::ArcBudget {
                length: self.arc_factor * z.diameter(),
            },
            StopCriterion::TimeBudget { time: self.time },
        ]
    }
}

/// Flows from `x0` to the level `c` in the given direction, or until
/// captured by a critical point.
pub fn flow_to_level(
    f: &Objective,
    z: &SingularSpace,
    x0: &[f64],
    c: f64,
    direction: Direction,
    ctrl: &StepControl,
    budget: &FlowBudget,
) -> Result<FlowTrajectory, FlowError> {
    let start = f.value(x0);
    let valid = match direction {
        Direction::Descend => c < start,
        Direction::Ascend => c > start,
    };
    if !valid {
        return Err(FlowError::InvalidTarget {
            target: c,
            start,
            direction,
        });
    }
    let [arc, time] = budget.criteria(z);
    let stops = [
        StopCriterion::ReachLevel { c },
        StopCriterion::Converged {
            grad_tol: z.tolerances().grad_tol,
        },
        arc,
        time,
        StopCriterion::LeftBox,
    ];
    integrate(f, z, x0, direction, &stops, ctrl)
}

pub fn descend_to_level(
    f: &Objective,
    z: &SingularSpace,
    x0: &[f64],
    c: f64,
) -> Result<FlowTrajectory, FlowError> {
    flow_to_level(
        f,
        z,
        x0,
        c,
        Direction::Descend,
        &StepControl::default(),
        &FlowBudget::default(),
    )
}

pub fn ascend_to_level(
    f: &Objective,
    z: &SingularSpace,
    x0: &[f64],
    c: f64,
) -> Result<FlowTrajectory, FlowError> {
    flow_to_level(
        f,
        z,
        x0,
        c,
        Direction::Ascend,
        &StepControl::default(),
        &FlowBudget::default(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FlowLimit {
    /// The flow converged; `point` is a critical point candidate.
    Converged {
        point: Vec<f64>,
        value: f64,
        grad_norm: f64,
    },
    /// The flow left the box at `point`.
    Exited { point: Vec<f64> },
    /// A budget ran out first. Never treated as convergence.
    Inconclusive { termination: Termination },
}

/// The `t -> +inf` (descend) or `t -> -inf` (ascend) limit of the flow from `x0`.
pub fn flow_limit(
    f: &Objective,
    z: &SingularSpace,
    x0: &[f64],
    direction: Direction,
    ctrl: &StepControl,
    budget: &FlowBudget,
) -> Result<FlowLimit, FlowError> {
    let [arc, time] = budget.criteria(z);
    let stops = [
        StopCriterion::Converged {
            grad_tol: z.tolerances().grad_tol,
        },
        arc,
        time,
        StopCriterion::LeftBox,
    ];
    let traj = integrate(f, z, x0, direction, &stops, ctrl)?;
    Ok(limit_of(f, z, &traj))
}

pub(crate) fn limit_of(f: &Objective, z: &SingularSpace, traj: &FlowTrajectory) -> FlowLimit {
    match traj.termination {
        Termination::Converged => {
            let point = traj
                .limit
                .clone()
                .unwrap_or_else(|| traj.end_point().to_vec());
            FlowLimit::Converged {
                value: f.value(&point),
                grad_norm: norm(&z.stratum_grad(f, &point)),
                point,
            }
        }
        Termination::LeftBox => FlowLimit::Exited {
            point: traj.end_point().to_vec(),
        },
        other => FlowLimit::Inconclusive { termination: other },
    }
}

/// Cumulative arc length at time `t`, interpolating linearly between the
/// recorded samples. Times beyond the last sample clamp to the total.
pub fn arc_length(traj: &FlowTrajectory, t: f64) -> f64 {
    let s = &traj.samples;
    if t <= s[0].t {
        return 0.0;
    }
    match s.iter().position(|p| p.t >= t) {
        None => traj.total_arc_length(),
        Some(i) => {
            let (a, b) = (&s[i - 1], &s[i]);
            let w = (t - a.t) / (b.t - a.t);
            a.arc_len + w * (b.arc_len - a.arc_len)
        }
    }
}

/// Integrates several starts concurrently; results keep input order.
pub fn integrate_batch(
    f: &Objective,
    z: &SingularSpace,
    starts: &[Vec<f64>],
    direction: Direction,
    stop: &[StopCriterion],
    ctrl: &StepControl,
) -> Vec<Result<FlowTrajectory, FlowError>> {
    starts
        .par_iter()
        .map(|x0| integrate(f, z, x0, direction, stop, ctrl))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::{Polynomial, PolynomialSystem};
    use crate::tolerances::Tolerances;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn setup(
        names: &[&str],
        f: &str,
        constraints: &[&str],
        half: f64,
    ) -> (Objective, SingularSpace) {
        let v = vars(names);
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

    fn converged_stops() -> Vec<StopCriterion> {
        vec![
            StopCriterion::Converged { grad_tol: 1e-8 },
            StopCriterion::TimeBudget { time: 1e6 },
        ]
    }

    #[test]
    fn saddle_stable_axis_converges_to_origin() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let traj = integrate(
            &f,
            &z,
            &[1.0, 0.0],
            Direction::Descend,
            &converged_stops(),
            &StepControl::default(),
        )
        .unwrap();
        assert_eq!(traj.termination, Termination::Converged);
        let end = traj.end_point();
        assert!(norm(end) < 1e-8);
        // exact solution x(t) = exp(-2t)
        for s in &traj.samples {
            let exact = (-2.0 * s.t).exp();
            assert!(
                (s.y[0] - exact).abs() < 1e-7,
                "t={} x={} exact={}",
                s.t,
                s.y[0],
                exact
            );
        }
    }

    #[test]
    fn critical_start_is_single_sample() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let traj = integrate(
            &f,
            &z,
            &[0.0, 0.0],
            Direction::Descend,
            &converged_stops(),
            &StepControl::default(),
        )
        .unwrap();
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(traj.termination, Termination::Converged);
    }

    #[test]
    fn reach_level_conserves_first_integral() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let stops = [
            StopCriterion::ReachLevel { c: -0.5 },
            StopCriterion::TimeBudget { time: 100.0 },
        ];
        let traj = integrate(
            &f,
            &z,
            &[1.0, 1.0],
            Direction::Descend,
            &stops,
            &StepControl::default(),
        )
        .unwrap();
        assert_eq!(traj.termination, Termination::ReachLevel);
        let end = traj.end_point();
        assert!((f.value(end) + 0.5).abs() < 1e-10);
        assert!((end[0] * end[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn descend_to_level_small_saddle_passage() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let traj = descend_to_level(&f, &z, &[0.01, 0.01], -0.01).unwrap();
        assert_eq!(traj.termination, Termination::ReachLevel);
        let end = traj.end_point();
        // xy = 1e-4 and y^2 - x^2 = 0.01
        let y2 = (0.01 + (1e-4 + 4e-8f64).sqrt()) / 2.0;
        let y = y2.sqrt();
        assert!(
            (end[1] - y).abs() < 1e-7 && (end[0] - 1e-4 / y).abs() < 1e-7,
            "{end:?}"
        );
    }

    #[test]
    fn descend_into_minimum_is_captured() {
        let (f, z) = setup(&["x"], "x^4", &[], 2.0);
        let traj = descend_to_level(&f, &z, &[0.5], -1.0).unwrap();
        assert!(traj.captured());
    }

    #[test]
    fn ascend_then_descend_round_trip() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let x0 = [0.3, 0.5];
        let c0 = f.value(&x0);
        let up = ascend_to_level(&f, &z, &x0, c0 + 0.05).unwrap();
        let back = descend_to_level(&f, &z, up.end_point(), c0).unwrap();
        assert!(dist(back.end_point(), &x0) < 1e-6);
    }

    #[test]
    fn flow_limit_examples() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let ctrl = StepControl::default();
        let budget = FlowBudget::default();
        match flow_limit(&f, &z, &[1.0, 0.0], Direction::Descend, &ctrl, &budget).unwrap() {
            FlowLimit::Converged { point, .. } => assert!(norm(&point) < 1e-8),
            other => panic!("{other:?}"),
        }
        match flow_limit(&f, &z, &[0.0, 1.0], Direction::Ascend, &ctrl, &budget).unwrap() {
            FlowLimit::Converged { point, .. } => assert!(norm(&point) < 1e-8),
            other => panic!("{other:?}"),
        }
        let tight = FlowBudget {
            arc_factor: 1e-3,
            time: 1e7,
        };
        assert_eq!(
            flow_limit(&f, &z, &[1.0, 1.0], Direction::Descend, &ctrl, &tight).unwrap(),
            FlowLimit::Inconclusive {
                termination: Termination::ArcBudget
            }
        );
        assert!(matches!(
            flow_limit(&f, &z, &[1.0, 1.0], Direction::Descend, &ctrl, &budget).unwrap(),
            FlowLimit::Exited { .. }
        ));
    }

    #[test]
    fn arc_length_of_one_dimensional_descent() {
        let (f, z) = setup(&["x"], "x^2", &[], 2.0);
        let traj = integrate(
            &f,
            &z,
            &[1.0],
            Direction::Descend,
            &converged_stops(),
            &StepControl::default(),
        )
        .unwrap();
        assert_eq!(arc_length(&traj, 0.0), 0.0);
        assert!((traj.total_arc_length() - 1.0).abs() < 1e-7);
        let mut prev = 0.0;
        for k in 0..100 {
            let a = arc_length(&traj, k as f64 * 0.1);
            assert!(a >= prev);
            prev = a;
        }
    }

    #[test]
    fn cone_ray_is_captured_at_vertex() {
        let (f, z) = setup(&["x", "y", "z"], "x", &["x^2 + y^2 - z^2"], 1.0);
        let traj = integrate(
            &f,
            &z,
            &[0.5, 0.0, 0.5],
            Direction::Descend,
            &converged_stops(),
            &StepControl::default(),
        )
        .unwrap();
        assert_eq!(traj.termination, Termination::Converged);
        assert_eq!(traj.singular_capture, Some(0));
        assert!(traj.samples.len() < 200);
    }

    #[test]
    fn leaving_the_box_terminates_inside() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 1.0);
        let stops = [StopCriterion::TimeBudget { time: 100.0 }];
        let traj = integrate(
            &f,
            &z,
            &[0.1, 0.1],
            Direction::Descend,
            &stops,
            &StepControl::default(),
        )
        .unwrap();
        assert_eq!(traj.termination, Termination::LeftBox);
        let end = traj.end_point();
        assert!(z.in_box(end) && (end[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn missing_budget_and_off_set_start_are_errors() {
        let (f, z) = setup(&["x", "y"], "x", &["x*y"], 1.0);
        let stops = [StopCriterion::Converged { grad_tol: 1e-8 }];
        assert_eq!(
            integrate(
                &f,
                &z,
                &[0.5, 0.0],
                Direction::Descend,
                &stops,
                &StepControl::default()
            ),
            Err(FlowError::NoBudget)
        );
        assert!(matches!(
            integrate(
                &f,
                &z,
                &[0.5, 0.5],
                Direction::Descend,
                &converged_stops(),
                &StepControl::default()
            ),
            Err(FlowError::NotOnZ { .. })
        ));
        assert!(matches!(
            descend_to_level(&f, &z, &[0.5, 0.0], 0.7),
            Err(FlowError::InvalidTarget { .. })
        ));
    }

    #[test]
    fn csv_has_header_and_one_row_per_sample() {
        let (f, z) = setup(&["x", "y"], "x^2 - y^2", &[], 2.0);
        let traj = descend_to_level(&f, &z, &[0.5, 0.5], -0.1).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,y_1,y_2,f,grad_norm,arc_len");
        assert_eq!(lines.count(), traj.samples.len());
    }
}
