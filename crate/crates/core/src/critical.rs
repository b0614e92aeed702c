//! Critical points of `f` on Z: location, classification, Condition 1.
//!
//! Smooth-stratum critical points solve the Lagrange system
//! `grad f - Dg^T lambda = 0, g = 0` by Gauss-Newton from retracted grid
//! seeds. Isolated singular points of Z are zero-dimensional strata and are
//! always fixed points of the flow, so they are added directly.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{dist, norm, RowSpace};
use crate::newton::{gauss_newton, NewtonOptions};
use crate::polynomial::{eval_matrix, Polynomial};
use crate::report::{task_rng, Verdict};
use crate::space::{Objective, SingularSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Minimum,
    Maximum,
    Saddle,
    Degenerate,
    Unresolved,
}

impl CriticalKind {
    /// Points Condition 4 applies to. Degenerate and unresolved points are
    /// excluded rather than guessed at.
    pub fn is_non_minimal(self) -> bool {
        matches!(self, CriticalKind::Saddle | CriticalKind::Maximum)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub kind: CriticalKind,
    /// Spread of the refined seeds merged into this point.
    pub cluster_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalLevelSet {
    pub value: f64,
    pub points: Vec<CriticalPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearch {
    pub points: Vec<CriticalPoint>,
    pub seeds: usize,
    /// Seeds that failed to retract or to refine to a critical point.
    pub discarded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub radius: f64,
    pub n_probes: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            radius: 1e-2,
            n_probes: 64,
            tol: 1e-12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: CriticalKind,
    /// A probe strictly below the critical value, if any.
    pub below: Option<Vec<f64>>,
    /// A probe strictly above the critical value, if any.
    pub above: Option<Vec<f64>>,
    pub n_probes: usize,
}

/// Seeds per axis used when the caller has no preference.
pub fn default_grid_density(dim: usize) -> usize {
    match dim {
        0..=2 => 11,
        3 => 9,
        _ => 5,
    }
}

/// Finds and classifies the critical points of `f` on Z inside the box.
pub fn find_critical_points(
    f: &Objective,
    z: &SingularSpace,
    grid_density: usize,
    probes: &ProbeOptions,
) -> CriticalSearch {
    let tol = *z.tolerances();
    let n = z.dim();
    let m = z.constraints().len();
    let hess_f = f.gradient_system().jacobian();
    let hess_g: Vec<Vec<Vec<Polynomial>>> = z
        .constraints()
        .components()
        .iter()
        .map(|g| g.gradient().jacobian())
        .collect();

    let eval = |w: &[f64]| {
        let (x, lambda) = w.split_at(n);
        let mut r = f.gradient(x);
        let dg = z.jacobian_at(x);
        for (k, row) in dg.iter().enumerate() {
            for i in 0..n {
                r[i] -= lambda[k] * row[i];
            }
        }
        r.extend(z.constraints().eval(x));
        r
    };
    let jac = |w: &[f64]| {
        let (x, lambda) = w.split_at(n);
        let mut top = eval_matrix(&hess_f, x);
        for (k, hg) in hess_g.iter().enumerate() {
            let h = eval_matrix(hg, x);
            for i in 0..n {
                for j in 0..n {
                    top[i][j] -= lambda[k] * h[i][j];
                }
            }
        }
        let dg = z.jacobian_at(x);
        let mut rows: Vec<Vec<f64>> = top
            .into_iter()
            .enumerate()
            .map(|(i, mut row)| {
                row.extend((0..m).map(|k| -dg[k][i]));
                row
            })
            .collect();
        rows.extend(dg.into_iter().map(|mut row| {
            row.extend(std::iter::repeat_n(0.0, m));
            row
        }));
        rows
    };

    let seeds = z.grid(grid_density.max(2));
    let refined: Vec<Option<Vec<f64>>> = seeds
        .par_iter()
        .map(|seed| {
            let x0 = z.retract(seed).ok()?;
            let mut w0 = x0.clone();
            if m > 0 {
                let dg = z.jacobian_at(&x0);
                let dgt: Vec<Vec<f64>> =
                    (0..n).map(|i| (0..m).map(|k| dg[k][i]).collect()).collect();
                w0.extend(RowSpace::new(&dgt, m, tol.rank_tol).solve_min_norm(&f.gradient(&x0), m));
            }
            let out = gauss_newton(
                &w0,
                eval,
                jac,
                NewtonOptions {
                    max_iter: 100,
                    rank_tol: 1e-12,
                    tol: 1e-12,
                    step_rel: 1e-13,
                    scale_floor: 1.0,
                },
            );
            let x = out.x[..n].to_vec();
            let ok = z.in_box(&x)
                && z.is_member(&x, tol.member_tol)
                && norm(&z.stratum_grad(f, &x)) < tol.crit_tol;
            ok.then_some(x)
        })
        .collect();

    let discarded = refined.iter().filter(|r| r.is_none()).count();
    let mut candidates: Vec<(Vec<f64>, f64)> = z
        .singular_points()
        .iter()
        .filter(|s| s.isolated)
        .map(|s| (s.location.clone(), 0.0))
        .collect();
    candidates.extend(refined.into_iter().flatten().map(|x| {
        let g = norm(&z.stratum_grad(f, &x));
        (x, g)
    }));

    let points = cluster(candidates, tol.cluster_tol)
        .into_iter()
        .enumerate()
        .map(|(i, (location, grad_norm, cluster_radius))| {
            let mut cp = CriticalPoint {
                value: f.value(&location),
                location,
                grad_norm,
                kind: CriticalKind::Unresolved,
                cluster_radius,
            };
            let opts = ProbeOptions {
                seed: probes.seed.wrapping_add(i as u64),
                ..*probes
            };
            cp.kind = classify(f, z, &cp, &opts).kind;
            cp
        })
        .collect();

    CriticalSearch {
        points,
        seeds: seeds.len(),
        discarded,
    }
}

/// Greedy clustering in input order. Each cluster is represented by its
/// member with the smallest gradient norm (earliest on ties, so isolated
/// singular points listed first win). Output is sorted by location.
fn cluster(candidates: Vec<(Vec<f64>, f64)>, radius: f64) -> Vec<(Vec<f64>, f64, f64)> {
    let mut groups: Vec<Vec<(Vec<f64>, f64)>> = Vec::new();
    for c in candidates {
        match groups.iter_mut().find(|g| dist(&g[0].0, &c.0) <= radius) {
            Some(g) => g.push(c),
            None => groups.push(vec![c]),
        }
    }
    let mut out: Vec<(Vec<f64>, f64, f64)> = groups
        .into_iter()
        .map(|g| {
            let best = g
                .iter()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty group")
                .clone();
            let spread = g.iter().map(|c| dist(&c.0, &best.0)).fold(0.0, f64::max);
            (best.0, best.1, spread)
        })
        .collect();
    out.sort_by(|a, b| lex_cmp(&a.0, &b.0));
    out
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Classifies `cp` by the sign of `f - f(cp)` on retracted probes at
/// distance about `radius`.
pub fn classify(
    f: &Objective,
    z: &SingularSpace,
    cp: &CriticalPoint,
    opts: &ProbeOptions,
) -> Classification {
    let probes = probe_points(z, &cp.location, opts.radius, opts.n_probes, opts.seed);
    let mut below = None;
    let mut above = None;
    for p in &probes {
        let d = f.value(p) - cp.value;
        if d < -opts.tol && below.is_none() {
            below = Some(p.clone());
        }
        if d > opts.tol && above.is_none() {
            above = Some(p.clone());
        }
    }
    let kind = if probes.len() < 2 {
        CriticalKind::Unresolved
    } else {
        match (&below, &above) {
            (None, None) => CriticalKind::Degenerate,
            (Some(_), Some(_)) => CriticalKind::Saddle,
            (None, Some(_)) => CriticalKind::Minimum,
            (Some(_), None) => CriticalKind::Maximum,
        }
    };
    Classification {
        kind,
        below,
        above,
        n_probes: probes.len(),
    }
}

/// Points of Z at distance within `[radius/2, 3 radius/2]` of `center`,
/// from retracted Gaussian directions.
pub(crate) fn probe_points(
    z: &SingularSpace,
    center: &[f64],
    radius: f64,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = task_rng(seed, 0x9b0b);
    let n = center.len();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let len = norm(&dir);
        if len == 0.0 {
            continue;
        }
        let p: Vec<f64> = center
            .iter()
            .zip(&dir)
            .map(|(c, d)| c + radius * d / len)
            .collect();
        let Ok(p) = z.retract(&p) else { continue };
        let d = dist(&p, center);
        if z.in_box(&p) && (0.5 * radius..=1.5 * radius).contains(&d) {
            out.push(p);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition1Report {
    pub verdict: Verdict,
    pub levels: Vec<CriticalLevelSet>,
    /// Smallest separation between distinct critical values; absent when
    /// there are fewer than two.
    pub min_gap: Option<f64>,
}

/// Groups critical points by value (chains closer than `value_merge_tol`)
/// in increasing order.
pub fn critical_levels(cps: &[CriticalPoint], value_merge_tol: f64) -> Vec<CriticalLevelSet> {
    let mut sorted = cps.to_vec();
    sorted.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then_with(|| lex_cmp(&a.location, &b.location))
    });
    let mut levels: Vec<CriticalLevelSet> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for cp in sorted {
        let v = cp.value;
        match levels.last_mut() {
            Some(level) if v - last <= value_merge_tol => level.points.push(cp),
            _ => levels.push(CriticalLevelSet {
                value: v,
                points: vec![cp],
            }),
        }
        last = v;
    }
    for level in &mut levels {
        level.value = level.points.iter().map(|p| p.value).sum::<f64>() / level.points.len() as f64;
    }
    levels
}

/// Condition 1: distinct critical values are separated by more than `gap_tol`.
pub fn check_condition1(
    cps: &[CriticalPoint],
    value_merge_tol: f64,
    gap_tol: f64,
) -> Condition1Report {
    let levels = critical_levels(cps, value_merge_tol);
    let min_gap = levels
        .windows(2)
        .map(|w| w[1].value - w[0].value)
        .min_by(f64::total_cmp);
    let verdict = match min_gap {
        Some(g) if g <= gap_tol => Verdict::Fail,
        _ => Verdict::Pass,
    };
    Condition1Report {
        verdict,
        levels,
        min_gap,
    }
}
