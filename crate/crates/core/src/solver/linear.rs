use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

/// Sparse matrix assembled row by row; entries in a row must have distinct columns.
#[derive(Debug, Clone, Default)]
pub(crate) struct SparseRows {
    n: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl SparseRows {
    pub fn new(n: usize) -> Self {
        SparseRows { n, entries: Vec::with_capacity(5 * n) }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push(Triplet::new(row, col, value));
    }

    /// Solves `A x = b` by sparse LU; `None` if the factorization fails or
    /// the solution is not finite.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &self.entries).ok()?;
        let lu = a.sp_lu().ok()?;
        let rhs = Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[i]).collect();
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

/// Weighted least squares `min Σ w_i (a_i·c - b_i)²` for a handful of unknowns,
/// through a QR factorization of the scaled design matrix.
pub(crate) fn weighted_lstsq(rows: &[Vec<f64>], rhs: &[f64], weights: &[f64]) -> Option<Vec<f64>> {
    let m = rows.len();
    let k = rows.first()?.len();
    if m < k {
        return None;
    }
    let a = Mat::<f64>::from_fn(m, k, |i, j| weights[i].sqrt() * rows[i][j]);
    let b = Mat::<f64>::from_fn(m, 1, |i, _| weights[i].sqrt() * rhs[i]);
    let x = a.col_piv_qr().solve_lstsq(&b);
    let out: Vec<f64> = (0..k).map(|j| x[(j, 0)]).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solve() {
        let n = 50;
        let mut a = SparseRows::new(n);
        for i in 0..n {
            a.push(i, i, 2.0);
            if i > 0 {
                a.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.push(i, i + 1, -1.0);
            }
        }
        // A x = b for x_i = i²
        let x: Vec<f64> = (0..n).map(|i| (i * i) as f64).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                2.0 * x[i] - l - r
            })
            .collect();
        let sol = a.solve(&b).unwrap();
        for (s, e) in sol.iter().zip(&x) {
            assert!((s - e).abs() < 1e-9 * (1.0 + e));
        }
    }

    #[test]
    fn exact_fit_of_a_quadratic() {
        let pts = [(0.1, 0.2), (-0.3, 0.1), (0.2, -0.4), (0.5, 0.5), (-0.2, -0.1), (0.0, 0.3), (0.4, -0.1)];
        let f = |x: f64, y: f64| 1.5 * x - 0.5 * y + 0.25 * x * x + x * y - 2.0 * y * y;
        let rows: Vec<Vec<f64>> = pts.iter().map(|&(x, y)| vec![x, y, x * x, x * y, y * y]).collect();
        let rhs: Vec<f64> = pts.iter().map(|&(x, y)| f(x, y)).collect();
        let c = weighted_lstsq(&rows, &rhs, &[1.0, 2.0, 0.5, 1.0, 3.0, 1.0, 1.0]).unwrap();
        for (got, want) in c.iter().zip([1.5, -0.5, 0.25, 1.0, -2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }
}
