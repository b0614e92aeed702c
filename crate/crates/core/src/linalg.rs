//! Small dense helpers on top of nalgebra's SVD.

use nalgebra::DMatrix;

pub(crate) fn to_matrix(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thin SVD split into singular values and the right singular vectors that
/// carry them, ordered by decreasing singular value.
pub(crate) struct RowSpace {
    pub sigma: Vec<f64>,
    /// Right singular vectors (as rows) whose singular value passes the cutoff.
    pub basis: Vec<Vec<f64>>,
    /// Left singular vectors paired with `basis`.
    pub left: Vec<Vec<f64>>,
}

impl RowSpace {
    /// Decomposes an `m x n` matrix and keeps singular values above
    /// `rank_tol * sigma_max`.
    pub fn new(rows: &[Vec<f64>], ncols: usize, rank_tol: f64) -> Self {
        if rows.is_empty() || ncols == 0 {
            return RowSpace {
                sigma: Vec::new(),
                basis: Vec::new(),
                left: Vec::new(),
            };
        }
        let m = to_matrix(rows, ncols);
        let svd = m.svd(true, true);
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let cutoff = rank_tol * sigma.first().copied().unwrap_or(0.0);
        let mut basis = Vec::new();
        let mut left = Vec::new();
        for (&i, &s) in order.iter().zip(&sigma) {
            if s > cutoff && s > 0.0 {
                basis.push(v_t.row(i).iter().copied().collect());
                left.push(u.column(i).iter().copied().collect());
            }
        }
        RowSpace { sigma, basis, left }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Orthogonal projection of `v` onto the null space.
    pub fn project_null(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for b in &self.basis {
            let c = dot(b, v);
            for (o, bi) in out.iter_mut().zip(b) {
                *o -= c * bi;
            }
        }
        out
    }

    /// Minimum-norm least-squares solution of `A x = rhs` restricted to the
    /// retained singular triplets.
    pub fn solve_min_norm(&self, rhs: &[f64], ncols: usize) -> Vec<f64> {
        let mut x = vec![0.0; ncols];
        for ((b, u), s) in self.basis.iter().zip(&self.left).zip(&self.sigma) {
            let c = dot(u, rhs) / s;
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi += c * bi;
            }
        }
        x
    }
}
