//! The working set `Z = {g = 0}` inside a bounding box of `R^n`.
//!
//! Tangent spaces come from the SVD of the constraint Jacobian `Dg(x)`: the
//! effective rank counts singular values above `rank_tol * sigma_max`, so
//! at a rank collapse (cone vertex, crossing of two planes) the null space
//! simply grows. Isolated points where the rank collapses are located once,
//! at construction, and treated as zero-dimensional strata: the flow cannot
//! move along a point, so they are fixed points of the realized flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{dist, norm, RowSpace};
use crate::newton::{gauss_newton, NewtonOptions};
use crate::polynomial::{eval_matrix, PolyError, Polynomial, PolynomialSystem};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("residual {residual:e} is outside the retraction capture radius {capture:e}")]
    OutsideCapture { residual: f64, capture: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// An objective function with its gradient precomputed.
#[derive(Debug, Clone)]
pub struct Objective {
    poly: Polynomial,
    grad: PolynomialSystem,
}

impl Objective {
    pub fn new(poly: Polynomial) -> Self {
        let grad = poly.gradient();
        Objective { poly, grad }
    }

    pub fn poly(&self) -> &Polynomial {
        &self.poly
    }

    pub fn gradient_system(&self) -> &PolynomialSystem {
        &self.grad
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.poly.eval(x)
    }

    /// Ambient (unprojected) gradient.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.grad.eval(x)
    }
}

/// A point of Z where the constraint Jacobian loses rank.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularPoint {
    pub location: Vec<f64>,
    /// Whether the rank-deficient locus is zero-dimensional here.
    pub isolated: bool,
}

#[derive(Debug, Clone)]
pub struct SingularSpace {
    constraints: PolynomialSystem,
    jacobian: Vec<Vec<Polynomial>>,
    bounds: Vec<[f64; 2]>,
    tol: Tolerances,
    generic_rank: usize,
    singular_points: Vec<SingularPoint>,
}

const SINGULAR_GRID: usize = 5;

impl SingularSpace {
    pub fn new(
        constraints: PolynomialSystem,
        bounds: Vec<[f64; 2]>,
        tol: Tolerances,
    ) -> Result<Self, SpaceError> {
        let n = constraints.variables().len();
        if n == 0 {
            return Err(SpaceError::InvalidBox(
                "ambient dimension must be positive".into(),
            ));
        }
        if bounds.len() != n {
            return Err(SpaceError::InvalidBox(format!(
                "{} intervals for {} variables",
                bounds.len(),
                n
            )));
        }
        for (i, [lo, hi]) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SpaceError::InvalidBox(format!(
                    "interval {i} is [{lo}, {hi}]; need finite lo < hi"
                )));
            }
        }
        let jacobian = constraints.jacobian();
        let mut space = SingularSpace {
            constraints,
            jacobian,
            bounds,
            tol,
            generic_rank: 0,
            singular_points: Vec::new(),
        };
        space.generic_rank = space.estimate_generic_rank();
        space.singular_points = space.locate_singular_points();
        Ok(space)
    }

    /// `Z = R^n` restricted to the box.
    pub fn unconstrained(
        variables: &[String],
        bounds: Vec<[f64; 2]>,
        tol: Tolerances,
    ) -> Result<Self, SpaceError> {
        Self::new(PolynomialSystem::empty(variables), bounds, tol)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn variables(&self) -> &[String] {
        self.constraints.variables()
    }

    pub fn constraints(&self) -> &PolynomialSystem {
        &self.constraints
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn generic_rank(&self) -> usize {
        self.generic_rank
    }

    pub fn singular_points(&self) -> &[SingularPoint] {
        &self.singular_points
    }

    pub fn diameter(&self) -> f64 {
        self.bounds
            .iter()
            .map(|[lo, hi]| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.bounds)
                .all(|(v, [lo, hi])| *v >= *lo && *v <= *hi)
    }

    /// Euclidean distance from `x` to the nearest face of the box (0 outside).
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        if !self.in_box(x) {
            return 0.0;
        }
        x.iter()
            .zip(&self.bounds)
            .map(|(v, [lo, hi])| (v - lo).min(hi - v))
            .fold(f64::INFINITY, f64::min)
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), SpaceError> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(SpaceError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            })
        }
    }

    pub(crate) fn res(&self, x: &[f64]) -> f64 {
        norm(&self.constraints.eval(x))
    }

    /// Euclidean norm of the constraint values `g(x)`.
    pub fn residual(&self, x: &[f64]) -> Result<f64, SpaceError> {
        self.check_dim(x)?;
        Ok(self.res(x))
    }

    pub fn is_member(&self, x: &[f64], tol: f64) -> bool {
        self.in_box(x) && self.res(x) <= tol
    }

    pub fn jacobian_at(&self, x: &[f64]) -> Vec<Vec<f64>> {
        eval_matrix(&self.jacobian, x)
    }

    fn row_space(&self, x: &[f64]) -> RowSpace {
        RowSpace::new(&self.jacobian_at(x), self.dim(), self.tol.rank_tol)
    }

    pub fn effective_rank(&self, x: &[f64]) -> usize {
        if self.constraints.is_empty() {
            0
        } else {
            self.row_space(x).rank()
        }
    }

    /// Orthogonal projection of `v` onto the null space of `Dg(x)`.
    pub fn tangent_project(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        if self.constraints.is_empty() {
            return v.to_vec();
        }
        self.row_space(x).project_null(v)
    }

    /// Gauss-Newton back onto Z. The residual never increases, and the
    /// iteration continues past `retract_tol` until steps are negligible
    /// relative to `|x|`, so points near a singular point at small scale are
    /// still placed accurately on Z.
    pub fn retract(&self, x: &[f64]) -> Result<Vec<f64>, SpaceError> {
        self.check_dim(x)?;
        if self.constraints.is_empty() {
            return Ok(x.to_vec());
        }
        let r0 = self.res(x);
        if r0 > self.tol.retract_capture {
            return Err(SpaceError::OutsideCapture {
                residual: r0,
                capture: self.tol.retract_capture,
            });
        }
        let out = gauss_newton(
            x,
            |y| self.constraints.eval(y),
            |y| self.jacobian_at(y),
            NewtonOptions {
                max_iter: 60,
                rank_tol: self.tol.rank_tol,
                tol: self.tol.retract_tol,
                step_rel: 1e-12,
                scale_floor: 1e-300,
            },
        );
        if out.converged {
            Ok(out.x)
        } else {
            Err(SpaceError::NoConvergence {
                iterations: out.iterations,
                residual: out.residual,
            })
        }
    }

    /// Tangent projection of the ambient gradient of `f`.
    pub fn riemannian_grad(&self, f: &Objective, x: &[f64]) -> Vec<f64> {
        self.tangent_project(x, &f.gradient(x))
    }

    /// The gradient of `f` along the stratum through `x`: zero at an isolated
    /// singular point, the tangent projection elsewhere.
    pub fn stratum_grad(&self, f: &Objective, x: &[f64]) -> Vec<f64> {
        match self.nearest_isolated_singular(x) {
            Some((_, d)) if d <= self.tol.singular_capture => vec![0.0; x.len()],
            _ => self.riemannian_grad(f, x),
        }
    }

    /// Index of and distance to the closest isolated singular point.
    pub fn nearest_isolated_singular(&self, x: &[f64]) -> Option<(usize, f64)> {
        self.singular_points
            .iter()
            .enumerate()
            .filter(|(_, s)| s.isolated)
            .map(|(i, s)| (i, dist(&s.location, x)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Newton on the joint system `(g = 0, f = c)` from `x`.
    pub fn project_to_level_set(
        &self,
        f: &Objective,
        x: &[f64],
        c: f64,
    ) -> Result<Vec<f64>, SpaceError> {
        self.check_dim(x)?;
        let eval = |y: &[f64]| {
            let mut r = self.constraints.eval(y);
            r.push(f.value(y) - c);
            r
        };
        let jac = |y: &[f64]| {
            let mut rows = self.jacobian_at(y);
            rows.push(f.gradient(y));
            rows
        };
        let done = |y: &[f64]| {
            self.res(y) < self.tol.retract_tol && (f.value(y) - c).abs() < self.tol.level_tol
        };
        if done(x) {
            return Ok(x.to_vec());
        }
        let out = gauss_newton(
            x,
            eval,
            jac,
            NewtonOptions {
                max_iter: 100,
                rank_tol: self.tol.rank_tol,
                tol: self.tol.retract_tol.min(self.tol.level_tol),
                step_rel: 1e-12,
                scale_floor: 1e-300,
            },
        );
        if done(&out.x) {
            Ok(out.x)
        } else {
            Err(SpaceError::NoConvergence {
                iterations: out.iterations,
                residual: out.residual,
            })
        }
    }

    /// Uniform grid over the box with `density` points per axis, endpoints included.
    pub fn grid(&self, density: usize) -> Vec<Vec<f64>> {
        let density = density.max(2);
        let n = self.dim();
        let total = density.pow(n as u32);
        (0..total)
            .map(|mut k| {
                (0..n)
                    .map(|axis| {
                        let i = k % density;
                        k /= density;
                        let [lo, hi] = self.bounds[axis];
                        lo + (hi - lo) * i as f64 / (density - 1) as f64
                    })
                    .collect()
            })
            .collect()
    }

    fn estimate_generic_rank(&self) -> usize {
        if self.constraints.is_empty() {
            return 0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f2a);
        (0..16)
            .map(|_| {
                let x: Vec<f64> = self
                    .bounds
                    .iter()
                    .map(|[lo, hi]| rng.random_range(*lo..*hi))
                    .collect();
                self.effective_rank(&x)
            })
            .max()
            .unwrap_or(0)
    }

    /// Solves `g = 0` together with all maximal minors of `Dg` from grid seeds.
    fn locate_singular_points(&self) -> Vec<SingularPoint> {
        let r = self.generic_rank;
        if r == 0 {
            return Vec::new();
        }
        let vars = self.variables().to_vec();
        let n = vars.len();
        let mut components = self.constraints.components().to_vec();
        components.extend(maximal_minors(&self.jacobian, r));
        let system = PolynomialSystem::new(&vars, components).expect("shared variables");
        let system_jac = system.jacobian();
        let density = if n <= 3 { SINGULAR_GRID } else { 3 };

        let mut found: Vec<SingularPoint> = Vec::new();
        for seed in self.grid(density) {
            let out = gauss_newton(
                &seed,
                |y| system.eval(y),
                |y| eval_matrix(&system_jac, y),
                NewtonOptions {
                    max_iter: 100,
                    rank_tol: 1e-12,
                    tol: self.tol.retract_tol,
                    step_rel: 1e-13,
                    scale_floor: 1.0,
                },
            );
            if !out.converged || !self.in_box(&out.x) {
                continue;
            }
            if found
                .iter()
                .any(|s| dist(&s.location, &out.x) <= self.tol.cluster_tol)
            {
                continue;
            }
            let isolated = RowSpace::new(&eval_matrix(&system_jac, &out.x), n, 1e-6).rank() == n;
            found.push(SingularPoint {
                location: out.x,
                isolated,
            });
        }
        found.sort_by(|a, b| {
            a.location
                .iter()
                .zip(&b.location)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        found
    }
}

/// All `r x r` minors of a polynomial matrix.
fn maximal_minors(matrix: &[Vec<Polynomial>], r: usize) -> Vec<Polynomial> {
    let m = matrix.len();
    let n = matrix.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    for rows in combinations(m, r) {
        for cols in combinations(n, r) {
            let sub: Vec<Vec<Polynomial>> = rows
                .iter()
                .map(|&i| cols.iter().map(|&j| matrix[i][j].clone()).collect())
                .collect();
            let d = determinant(&sub);
            if !d.is_zero() {
                out.push(d);
            }
        }
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Laplace expansion along the first row.
fn determinant(m: &[Vec<Polynomial>]) -> Polynomial {
    let k = m.len();
    if k == 1 {
        return m[0][0].clone();
    }
    let vars = m[0][0].variables().to_vec();
    let mut acc = Polynomial::zero(&vars);
    for j in 0..k {
        if m[0][j].is_zero() {
            continue;
        }
        let minor: Vec<Vec<Polynomial>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != j)
                    .map(|(_, p)| p.clone())
                    .collect()
            })
            .collect();
        let term = m[0][j]
            .try_mul(&determinant(&minor))
            .expect("shared variables");
        acc = if j % 2 == 0 {
            acc.try_add(&term)
        } else {
            acc.try_sub(&term)
        }
        .expect("shared variables");
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn space(names: &[&str], constraints: &[&str], half_width: f64) -> SingularSpace {
        let v = vars(names);
        let comps = constraints
            .iter()
            .map(|c| Polynomial::parse(c, &v).unwrap())
            .collect();
        SingularSpace::new(
            PolynomialSystem::new(&v, comps).unwrap(),
            vec![[-half_width, half_width]; names.len()],
            Tolerances::default(),
        )
        .unwrap()
    }

    #[test]
    fn residual_examples() {
        let planes = space(&["x", "y"], &["x*y"], 2.0);
        assert_eq!(planes.residual(&[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(planes.residual(&[1.0, 1.0]).unwrap(), 1.0);
        let free = space(&["x", "y"], &[], 2.0);
        assert_eq!(free.residual(&[0.3, -1.2]).unwrap(), 0.0);
        assert!(matches!(
            free.residual(&[0.0]),
            Err(SpaceError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn membership_examples() {
        let cone = space(&["x", "y", "z"], &["x^2 + y^2 - z^2"], 6.0);
        assert!(cone.is_member(&[3.0, 4.0, 5.0], 1e-9));
        assert!(!cone.is_member(&[1.0, 1.0, 1.0], 1e-9));
        let small = space(&["x", "y", "z"], &["x^2 + y^2 - z^2"], 1.0);
        assert!(!small.is_member(&[3.0, 4.0, 5.0], 1e-9));
    }

    #[test]
    fn tangent_projection_examples() {
        let planes = space(&["x", "y"], &["x*y"], 2.0);
        let p = planes.tangent_project(&[1.0, 0.0], &[0.7, -0.3]);
        assert!((p[0] - 0.7).abs() < 1e-15 && p[1].abs() < 1e-15);
        let free = space(&["x", "y"], &[], 2.0);
        assert_eq!(
            free.tangent_project(&[0.5, 0.5], &[0.7, -0.3]),
            vec![0.7, -0.3]
        );
        let cone = space(&["x", "y", "z"], &["x^2 + y^2 - z^2"], 1.0);
        assert_eq!(
            cone.tangent_project(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]),
            vec![1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn retract_examples() {
        let cone = space(&["x", "y", "z"], &["x^2 + y^2 - z^2"], 6.0);
        assert_eq!(cone.retract(&[3.0, 4.0, 5.0]).unwrap(), vec![3.0, 4.0, 5.0]);
        let x = [3.0, 4.0, 5.0 + 1e-6];
        let y = cone.retract(&x).unwrap();
        assert!(cone.residual(&y).unwrap() < 1e-12);
        assert!(dist(&x, &y) < 1e-5);
        let free = space(&["x"], &[], 1.0);
        assert_eq!(free.retract(&[0.25]).unwrap(), vec![0.25]);
    }

    #[test]
    fn retract_respects_capture_radius() {
        let cone = space(&["x", "y", "z"], &["x^2 + y^2 - z^2"], 6.0);
        assert!(matches!(
            cone.retract(&[5.0, 5.0, 0.0]),
            Err(SpaceError::OutsideCapture { .. })
        ));
    }

    #[test]
    fn retract_is_scale_aware_near_vertex() {
        let cone = space(&["x", "y", "z"], &["x^2 + y^2 - z^2"], 1.0);
        let y = cone.retract(&[1e-6, 0.0, 0.5e-6]).unwrap();
        let rel = (y[0] * y[0] + y[1] * y[1] - y[2] * y[2]).abs() / (y[2] * y[2]);
        assert!(rel < 1e-10, "relative residual {rel}");
    }

    #[test]
    fn riemannian_gradient_examples() {
        let v = vars(&["x", "y"]);
        let f = Objective::new(Polynomial::parse("x^2 - y^2", &v).unwrap());
        let free = space(&["x", "y"], &[], 2.0);
        assert_eq!(free.riemannian_grad(&f, &[1.0, 1.0]), vec![2.0, -2.0]);
        let planes = space(&["x", "y"], &["x*y"], 2.0);
        let g = planes.riemannian_grad(&f, &[0.0, 0.5]);
        assert!(g[0].abs() < 1e-15 && (g[1] + 1.0).abs() < 1e-15);
        assert_eq!(free.riemannian_grad(&f, &[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn level_set_projection_examples() {
        let v = vars(&["x", "y"]);
        let f = Objective::new(Polynomial::parse("x^2 - y^2", &v).unwrap());
        let free = space(&["x", "y"], &[], 2.0);
        let p = free.project_to_level_set(&f, &[1.0, 1.01], 0.0).unwrap();
        assert!(f.value(&p).abs() < 1e-10);
        assert!((p[0].abs() - p[1].abs()).abs() < 1e-10);
        let on = [0.5, 0.5];
        assert_eq!(
            free.project_to_level_set(&f, &on, 0.0).unwrap(),
            on.to_vec()
        );

        let v3 = vars(&["x", "y", "z"]);
        let fx = Objective::new(Polynomial::parse("x", &v3).unwrap());
        let cone = space(&["x", "y", "z"], &["x^2 + y^2 - z^2"], 2.0);
        let q = cone
            .project_to_level_set(&fx, &[1.0, 0.0, 1.001], 1.0)
            .unwrap();
        assert!((q[0] - 1.0).abs() < 1e-10);
        assert!(cone.is_member(&q, 1e-8));
    }

    #[test]
    fn singular_points_of_benchmarks() {
        let cone = space(&["x", "y", "z"], &["x^2 + y^2 - z^2"], 1.0);
        assert_eq!(cone.singular_points().len(), 1);
        assert!(cone.singular_points()[0].isolated);
        assert!(norm(&cone.singular_points()[0].location) < 1e-9);
        let planes = space(&["x", "y"], &["x*y"], 2.0);
        assert_eq!(planes.singular_points().len(), 1);
        let circle = space(&["x", "y"], &["x^2 + y^2 - 1"], 2.0);
        assert!(circle.singular_points().is_empty());
        assert_eq!(circle.generic_rank(), 1);
    }

    #[test]
    fn non_isolated_singular_locus_is_flagged() {
        let crossing = space(&["x", "y", "z"], &["x*y"], 1.0);
        assert!(!crossing.singular_points().is_empty());
        assert!(crossing.singular_points().iter().all(|s| !s.isolated));
    }

    #[test]
    fn stratum_gradient_vanishes_at_vertex() {
        let v3 = vars(&["x", "y", "z"]);
        let fx = Objective::new(Polynomial::parse("x", &v3).unwrap());
        let cone = space(&["x", "y", "z"], &["x^2 + y^2 - z^2"], 1.0);
        assert_eq!(cone.stratum_grad(&fx, &[0.0, 0.0, 0.0]), vec![0.0; 3]);
        assert_eq!(
            cone.riemannian_grad(&fx, &[0.0, 0.0, 0.0]),
            vec![1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn invalid_boxes_rejected() {
        let v = vars(&["x"]);
        let bad = SingularSpace::unconstrained(&v, vec![[2.0, -2.0]], Tolerances::default());
        assert!(matches!(bad, Err(SpaceError::InvalidBox(_))));
        let short = SingularSpace::unconstrained(&v, vec![], Tolerances::default());
        assert!(short.is_err());
    }

    #[test]
    fn minors_of_two_constraints() {
        let v = vars(&["x", "y", "z"]);
        let sys = PolynomialSystem::new(
            &v,
            vec![
                Polynomial::parse("x", &v).unwrap(),
                Polynomial::parse("y*z", &v).unwrap(),
            ],
        )
        .unwrap();
        let minors = maximal_minors(&sys.jacobian(), 2);
        // rows (1,0,0) and (0,z,y): minors z and y
        assert_eq!(minors.len(), 2);
    }
}
