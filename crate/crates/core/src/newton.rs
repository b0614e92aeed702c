//! Damped Gauss-Newton with minimum-norm steps, shared by retraction,
//! level-set projection, singular-point search and critical-point refinement.

use crate::linalg::{norm, RowSpace};

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonOptions {
    pub max_iter: usize,
    pub rank_tol: f64,
    /// Residual norm that counts as converged.
    pub tol: f64,
    /// Iteration continues past `tol` until a step is shorter than
    /// `step_rel * max(|x|, scale_floor)`.
    pub step_rel: f64,
    pub scale_floor: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonResult {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `|F(x)|` from `x0`. The residual norm never increases between
/// iterates: every step is backtracked until it strictly decreases.
pub(crate) fn gauss_newton<F, J>(x0: &[f64], eval: F, jac: J, opts: NewtonOptions) -> NewtonResult
where
    F: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Vec<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = eval(&x);
    let mut nr = norm(&r);
    let mut iterations = 0;
    while iterations < opts.max_iter && nr > 0.0 && nr.is_finite() {
        iterations += 1;
        let rows = jac(&x);
        let rs = RowSpace::new(&rows, n, opts.rank_tol);
        if rs.rank() == 0 {
            break;
        }
        let step: Vec<f64> = rs.solve_min_norm(&r, n).into_iter().map(|s| -s).collect();
        let step_norm = norm(&step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let tr = eval(&trial);
            let ntr = norm(&tr);
            if ntr < nr {
                accepted = Some((trial, tr, ntr));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, tr, ntr)) = accepted else {
            break;
        };
        x = trial;
        r = tr;
        nr = ntr;
        let scale = norm(&x).max(opts.scale_floor);
        if nr <= opts.tol && t * step_norm <= opts.step_rel * scale {
            break;
        }
    }
    NewtonResult {
        converged: nr <= opts.tol,
        x,
        residual: nr,
        iterations,
    }
}
