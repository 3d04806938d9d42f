//! Dense least squares via Householder QR with column pivoting.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Matrix::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged rows");
            m.data[i * cols..(i + 1) * cols].copy_from_slice(r);
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub beta: Vec<f64>,
    /// `(XᵀX)⁻¹` in the original column order.
    pub xtx_inv: Matrix,
    pub residuals: Vec<f64>,
}

/// Column index (original order) found to be linearly dependent on the
/// columns pivoted before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DependentColumn(pub usize);

/// Solves `min ||y − Xβ||²`. Fails if the pivoted diagonal of R drops below
/// `RANK_TOLERANCE` times its first entry.
pub fn least_squares(x: &Matrix, y: &[f64]) -> Result<LeastSquares, DependentColumn> {
    let (n, k) = (x.rows, x.cols);
    assert_eq!(y.len(), n);
    assert!(n >= k && k > 0, "need at least as many rows as columns");
    let mut a = x.clone();
    let mut qty = y.to_vec();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut r00 = 0.0;
    for j in 0..k {
        // Pivot: largest remaining column norm below row j.
        let mut best = j;
        let mut best_norm = -1.0;
        for c in j..k {
            let s: f64 = (j..n).map(|i| a.get(i, c) * a.get(i, c)).sum();
            if s > best_norm {
                best_norm = s;
                best = c;
            }
        }
        if best != j {
            for i in 0..n {
                let t = a.get(i, j);
                a.set(i, j, a.get(i, best));
                a.set(i, best, t);
            }
            perm.swap(j, best);
        }
        let norm = libm::sqrt(best_norm.max(0.0));
        if j == 0 {
            r00 = norm;
        }
        if norm <= RANK_TOLERANCE * r00 || norm == 0.0 {
            return Err(DependentColumn(perm[j]));
        }
        // Householder vector v with v[0] chosen to avoid cancellation.
        let alpha = if a.get(j, j) > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..n).map(|i| a.get(i, j)).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            for c in j..k {
                let dot: f64 = (j..n).map(|i| v[i - j] * a.get(i, c)).sum();
                let f = 2.0 * dot / vnorm2;
                for i in j..n {
                    a.set(i, c, a.get(i, c) - f * v[i - j]);
                }
            }
            let dot: f64 = (j..n).map(|i| v[i - j] * qty[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in j..n {
                qty[i] -= f * v[i - j];
            }
        }
    }
    // Back substitution R z = Qᵀy.
    let mut z = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|c| a.get(i, c) * z[c]).sum();
        z[i] = (qty[i] - s) / a.get(i, i);
    }
    // R⁻¹ (upper triangular), then (RᵀR)⁻¹ = R⁻¹R⁻ᵀ.
    let mut rinv = Matrix::zeros(k, k);
    for c in 0..k {
        for i in (0..=c).rev() {
            let rhs = if i == c { 1.0 } else { 0.0 };
            let s: f64 = (i + 1..=c).map(|t| a.get(i, t) * rinv.get(t, c)).sum();
            rinv.set(i, c, (rhs - s) / a.get(i, i));
        }
    }
    let mut xtx_inv = Matrix::zeros(k, k);
    let mut beta = vec![0.0; k];
    for p in 0..k {
        beta[perm[p]] = z[p];
        for q in 0..k {
            let s: f64 = (p.max(q)..k).map(|t| rinv.get(p, t) * rinv.get(q, t)).sum();
            xtx_inv.set(perm[p], perm[q], s);
        }
    }
    let fitted = x.mul_vec(&beta);
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok(LeastSquares {
        beta,
        xtx_inv,
        residuals,
    })
}

/// Sandwich covariance `B M B` with `M = Σ_g (X_gᵀe_g)(X_gᵀe_g)ᵀ`, scaled by
/// `(G/(G−1))·((n−1)/(n−k))`. `clusters[i]` is the cluster index of row `i`.
pub fn cluster_covariance(x: &Matrix, residuals: &[f64], xtx_inv: &Matrix, clusters: &[usize]) -> Matrix {
    let (n, k) = (x.rows, x.cols);
    let g = clusters.iter().copied().max().map_or(0, |m| m + 1);
    let mut scores = Matrix::zeros(g, k);
    for i in 0..n {
        let c = clusters[i];
        for j in 0..k {
            scores.set(c, j, scores.get(c, j) + x.get(i, j) * residuals[i]);
        }
    }
    let mut meat = Matrix::zeros(k, k);
    for c in 0..g {
        let s = scores.row(c).to_vec();
        for p in 0..k {
            for q in 0..k {
                meat.set(p, q, meat.get(p, q) + s[p] * s[q]);
            }
        }
    }
    let used = {
        let mut seen = vec![false; g];
        for &c in clusters {
            seen[c] = true;
        }
        seen.iter().filter(|&&b| b).count() as f64
    };
    let factor = (used / (used - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64));
    let bm = matmul(xtx_inv, &meat);
    let mut v = matmul(&bm, xtx_inv);
    for t in &mut v.data {
        *t *= factor;
    }
    v
}

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            let s: f64 = (0..a.cols).map(|t| a.get(i, t) * b.get(t, j)).sum();
            out.set(i, j, s);
        }
    }
    out
}
