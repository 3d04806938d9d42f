//! Independent reference computations used to freeze and check expected
//! values. Nothing here calls into the crate under test.
#![allow(dead_code)]

pub mod fixtures;

use nalgebra::{DMatrix, DVector};

/// Solution of the one-class SVM dual
/// `min ½ αᵀKα  s.t. 0 ≤ α ≤ c, Σα = 1` found by enumerating active sets.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub objective: f64,
}

fn subsets(items: &[usize], max_size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &it in items {
        let mut more = Vec::new();
        for s in &out {
            if s.len() < max_size {
                let mut t = s.clone();
                t.push(it);
                more.push(t);
            }
        }
        out.extend(more);
    }
    out
}

/// Brute-force KKT enumeration: every split of the indices into
/// upper-bound (α = c), free (0 < α < c) and zero sets with `|free| ≤ max_free`.
/// Returns every KKT point found; for a strictly convex problem they agree.
pub fn ocsvm_dual_bruteforce(k: &DMatrix<f64>, nu: f64, max_free: usize) -> Vec<DualSolution> {
    let n = k.nrows();
    let c = 1.0 / (nu * n as f64);
    let all: Vec<usize> = (0..n).collect();
    let max_upper = (1.0 / c + 1e-9).floor() as usize;
    let mut found = Vec::new();
    for upper in subsets(&all, max_upper) {
        let rest: Vec<usize> = all.iter().copied().filter(|i| !upper.contains(i)).collect();
        let remaining = 1.0 - upper.len() as f64 * c;
        for free in subsets(&rest, max_free) {
            if free.is_empty() && remaining.abs() > 1e-12 {
                continue;
            }
            if !free.is_empty() && remaining <= 1e-12 {
                continue;
            }
            let mut alpha = vec![0.0; n];
            for &u in &upper {
                alpha[u] = c;
            }
            let rho;
            if free.is_empty() {
                let g = k * DVector::from_vec(alpha.clone());
                let lo = upper.iter().map(|&i| g[i]).fold(f64::NEG_INFINITY, f64::max);
                let hi = rest.iter().map(|&i| g[i]).fold(f64::INFINITY, f64::min);
                if lo > hi + 1e-12 {
                    continue;
                }
                rho = if rest.is_empty() { lo } else if upper.is_empty() { hi } else { 0.5 * (lo + hi) };
            } else {
                // [K_FF  -1] [α_F]   [-K_FU α_U]
                // [1ᵀ     0] [ρ  ] = [remaining ]
                let m = free.len();
                let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
                let mut b = DVector::<f64>::zeros(m + 1);
                for (r, &i) in free.iter().enumerate() {
                    for (s, &j) in free.iter().enumerate() {
                        a[(r, s)] = k[(i, j)];
                    }
                    a[(r, m)] = -1.0;
                    a[(m, r)] = 1.0;
                    b[r] = -upper.iter().map(|&u| k[(i, u)] * c).sum::<f64>();
                }
                b[m] = remaining;
                let svd = a.clone().svd(true, true);
                let smax = svd.singular_values.max();
                let smin = svd.singular_values.min();
                if smin <= 1e-10 * smax {
                    continue;
                }
                let Some(x) = a.lu().solve(&b) else { continue };
                if free.iter().enumerate().any(|(r, _)| x[r] <= 1e-12 || x[r] >= c - 1e-12) {
                    continue;
                }
                for (r, &i) in free.iter().enumerate() {
                    alpha[i] = x[r];
                }
                rho = x[m];
                let g = k * DVector::from_vec(alpha.clone());
                let ok_zero = rest
                    .iter()
                    .filter(|i| !free.contains(i))
                    .all(|&i| g[i] >= rho - 1e-9);
                let ok_upper = upper.iter().all(|&i| g[i] <= rho + 1e-9);
                if !(ok_zero && ok_upper) {
                    continue;
                }
            }
            let av = DVector::from_vec(alpha.clone());
            let objective = 0.5 * (av.transpose() * k * &av)[(0, 0)];
            found.push(DualSolution { alphas: alpha, rho, objective });
        }
    }
    found
}

pub fn linear_kernel(points: &[[f64; 2]]) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| points[i][0] * points[j][0] + points[i][1] * points[j][1])
}

/// Center, mean distance and maximum distance by direct summation.
pub fn center_radii(points: &[Vec<f64>]) -> (Vec<f64>, f64, f64) {
    let n = points.len() as f64;
    let d = points[0].len();
    let center: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let dists: Vec<f64> = points
        .iter()
        .map(|p| p.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect();
    let avg = dists.iter().sum::<f64>() / n;
    let max = dists.iter().cloned().fold(0.0, f64::max);
    (center, avg, max)
}

/// Log-likelihood G² of a 2×2 table by the four-cell formula.
pub fn g2_four_cell(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let n = a + b + c + d;
    let cells = [
        (a, (a + b) * (a + c) / n),
        (b, (a + b) * (b + d) / n),
        (c, (c + d) * (a + c) / n),
        (d, (c + d) * (b + d) / n),
    ];
    2.0 * cells
        .iter()
        .map(|&(o, e)| if o > 0.0 { o * (o / e).ln() } else { 0.0 })
        .sum::<f64>()
}

/// OLS by the normal equations: β = (XᵀX)⁻¹Xᵀy, plus the CR1 sandwich
/// covariance with the meat summed cluster by cluster.
pub struct OlsOracle {
    pub beta: Vec<f64>,
    pub cluster_se: Vec<f64>,
    pub residuals: Vec<f64>,
}

pub fn ols_normal_equations(x: &DMatrix<f64>, y: &DVector<f64>, clusters: &[usize]) -> OlsOracle {
    let n = x.nrows();
    let k = x.ncols();
    let xtx = x.transpose() * x;
    let inv = xtx.try_inverse().expect("full rank");
    let beta = &inv * x.transpose() * y;
    let resid = y - x * &beta;
    let mut groups: Vec<usize> = clusters.to_vec();
    groups.sort();
    groups.dedup();
    let g = groups.len() as f64;
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for &gid in &groups {
        let mut s = DVector::<f64>::zeros(k);
        for i in 0..n {
            if clusters[i] == gid {
                for j in 0..k {
                    s[j] += x[(i, j)] * resid[i];
                }
            }
        }
        meat += &s * s.transpose();
    }
    let factor = (g / (g - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64));
    let v = &inv * meat * &inv * factor;
    OlsOracle {
        beta: beta.iter().cloned().collect(),
        cluster_se: (0..k).map(|j| v[(j, j)].sqrt()).collect(),
        residuals: resid.iter().cloned().collect(),
    }
}

/// HC1 heteroskedasticity-robust standard errors.
pub fn hc1_se(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    let k = x.ncols() as f64;
    let inv = (x.transpose() * x).try_inverse().expect("full rank");
    let beta = &inv * x.transpose() * y;
    let resid = y - x * &beta;
    let mut meat = DMatrix::<f64>::zeros(x.ncols(), x.ncols());
    for i in 0..x.nrows() {
        let row = x.row(i).transpose();
        meat += &row * row.transpose() * resid[i] * resid[i];
    }
    let v = &inv * meat * &inv * (n / (n - k));
    (0..x.ncols()).map(|j| v[(j, j)].sqrt()).collect()
}
