//! One-class SVM in the dual: `min ½ αᵀKα` subject to `0 ≤ α_i ≤ 1/(νN)`
//! and `Σα_i = 1`, solved by SMO with second-order working-set selection.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::EsfError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => libm::exp(-gamma * squared_distance(a, b)),
        }
    }
}

/// How the rbf bandwidth is chosen at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaPolicy {
    /// `1 / median` of the squared pairwise distances.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub gamma: GammaPolicy,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            kind: KernelKind::Rbf,
            gamma: GammaPolicy::Median,
        }
    }
}

impl KernelSpec {
    pub fn linear() -> Self {
        KernelSpec {
            kind: KernelKind::Linear,
            gamma: GammaPolicy::Median,
        }
    }

    pub fn resolve(&self, points: &[&[f64]]) -> Result<Kernel, EsfError> {
        match self.kind {
            KernelKind::Linear => Ok(Kernel::Linear),
            KernelKind::Rbf => {
                let gamma = match self.gamma {
                    GammaPolicy::Median => median_gamma(points),
                    GammaPolicy::Fixed(g) => g,
                };
                if !(gamma.is_finite() && gamma > 0.0) {
                    return Err(EsfError::Invalid(format!("gamma must be positive, got {gamma}")));
                }
                Ok(Kernel::Rbf { gamma })
            }
        }
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `1 / median` squared pairwise distance. Falls back to the mean of the
/// non-zero squared distances when the median is zero, and to 1 when all
/// points coincide.
pub fn median_gamma(points: &[&[f64]]) -> f64 {
    let mut d2 = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d2.push(squared_distance(points[i], points[j]));
        }
    }
    if d2.is_empty() {
        return 1.0;
    }
    d2.sort_by(f64::total_cmp);
    let m = d2.len();
    let median = if m % 2 == 1 {
        d2[m / 2]
    } else {
        0.5 * (d2[m / 2 - 1] + d2[m / 2])
    };
    if median > 0.0 {
        return 1.0 / median;
    }
    let nonzero: Vec<f64> = d2.into_iter().filter(|&x| x > 0.0).collect();
    if nonzero.is_empty() {
        1.0
    } else {
        nonzero.len() as f64 / nonzero.iter().sum::<f64>()
    }
}

pub const KKT_TOLERANCE: f64 = 1e-6;
const TAU: f64 = 1e-12;

/// Result of the dual solve over the full training set.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Final maximal KKT violation.
    pub residual: f64,
}

/// Solves the dual for the kernel matrix `k` (row-major, `n × n`).
///
/// Initialisation fills α in index order: the first `⌊νN⌋` entries at the
/// upper bound and the remainder on the next one, so the start is feasible
/// and the run is deterministic.
pub fn solve_dual(k: &[f64], n: usize, nu: f64) -> Result<DualSolution, EsfError> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(EsfError::Invalid(format!("nu must lie in (0, 1], got {nu}")));
    }
    if n < 2 {
        return Err(EsfError::DegenerateWhitelist(n));
    }
    let c = 1.0 / (nu * n as f64);
    let mut alpha = vec![0.0; n];
    let mut left = 1.0f64;
    for a in alpha.iter_mut() {
        if left <= 0.0 {
            break;
        }
        let v = if left >= c { c } else { left };
        *a = v;
        left -= v;
    }
    // Rounding can leave crumbs; fold them into the last nonzero entry.
    if left.abs() > 0.0 {
        if let Some(last) = alpha.iter().rposition(|&a| a > 0.0) {
            alpha[last] += left;
        }
    }
    let kk = |i: usize, j: usize| k[i * n + j];
    let mut g: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| kk(i, j) * alpha[j]).sum())
        .collect();

    let max_iter = 10 * n * n;
    let mut iterations = 0;
    let residual;
    loop {
        // i: smallest gradient among indices that can grow.
        let mut i = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            if alpha[t] < c && g[t] < g_min {
                g_min = g[t];
                i = t;
            }
        }
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] > 0.0 && g[t] > g_max {
                g_max = g[t];
            }
        }
        let gap = g_max - g_min;
        if i == usize::MAX || gap < KKT_TOLERANCE {
            residual = if i == usize::MAX { 0.0 } else { gap.max(0.0) };
            break;
        }
        if iterations >= max_iter {
            return Err(EsfError::Solver {
                iterations,
                residual: gap,
            });
        }
        // j: among shrinkable indices, the largest second-order decrease.
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if alpha[t] > 0.0 && g[t] > g_min {
                let b = g[t] - g_min;
                let mut a = kk(i, i) + kk(t, t) - 2.0 * kk(i, t);
                if a <= 0.0 {
                    a = TAU;
                }
                let score = -(b * b) / a;
                if score < best {
                    best = score;
                    j = t;
                }
            }
        }
        if j == usize::MAX {
            residual = gap;
            break;
        }
        let mut a = kk(i, i) + kk(j, j) - 2.0 * kk(i, j);
        if a <= 0.0 {
            a = TAU;
        }
        let mut delta = (g[j] - g[i]) / a;
        delta = delta.min(c - alpha[i]).min(alpha[j]);
        let (ai, aj) = if delta >= c - alpha[i] {
            (c, alpha[j] - (c - alpha[i]))
        } else if delta >= alpha[j] {
            (alpha[i] + alpha[j], 0.0)
        } else {
            (alpha[i] + delta, alpha[j] - delta)
        };
        let di = ai - alpha[i];
        let dj = aj - alpha[j];
        alpha[i] = ai;
        alpha[j] = aj.max(0.0);
        for (t, gt) in g.iter_mut().enumerate() {
            *gt += kk(t, i) * di + kk(t, j) * dj;
        }
        iterations += 1;
    }

    // Refresh the gradient from scratch before reading off ρ.
    for (t, gt) in g.iter_mut().enumerate() {
        *gt = (0..n).map(|s| kk(t, s) * alpha[s]).sum();
    }
    let bound_eps = c * 1e-12;
    let free: Vec<usize> = (0..n)
        .filter(|&t| alpha[t] > bound_eps && alpha[t] < c - bound_eps)
        .collect();
    let rho = if !free.is_empty() {
        free.iter().map(|&t| g[t]).sum::<f64>() / free.len() as f64
    } else {
        let lo = (0..n)
            .filter(|&t| alpha[t] >= c - bound_eps)
            .map(|t| g[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = (0..n)
            .filter(|&t| alpha[t] <= bound_eps)
            .map(|t| g[t])
            .fold(f64::INFINITY, f64::min);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        }
    };
    Ok(DualSolution {
        alphas: alpha,
        rho,
        iterations,
        residual,
    })
}

/// Fitted one-class region. Only support vectors (α > 0) are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmModel {
    pub nu: f64,
    pub kernel: Kernel,
    pub support_indices: Vec<usize>,
    pub support_phrases: Vec<String>,
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub training_digest: String,
    pub iterations: usize,
}

impl OcsvmModel {
    /// `f(x) = Σ α_i k(x_i, x) − ρ`.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.alphas
            .iter()
            .zip(&self.support_vectors)
            .map(|(a, sv)| a * self.kernel.eval(sv, x))
            .sum::<f64>()
            - self.rho
    }
}
