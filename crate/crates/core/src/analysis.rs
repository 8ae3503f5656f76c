//! Recovery verdicts, brute-force restricted-isometry constants, and the
//! sample-complexity calculators.
//!
//! Every logarithm is natural.

use itertools::Itertools;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative ∞-norm tolerance for an exact-recovery verdict.
pub const RECOVERY_TOL: f64 = 1e-4;

/// Largest number of column subsets `rip_bruteforce` will enumerate.
pub const ENUMERATION_CAP: u128 = 200_000;

/// Slack allowed in the Kronecker RIP inequality.
pub const KRON_RIP_SLACK: f64 = 1e-10;

/// Smallest admissible per-side constant in the Kronecker bounds.
pub const MIN_SIDE_CONSTANT: f64 = 28.1;

const TINY: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub rel_l2_error: f64,
    pub rel_inf_error: f64,
    pub exact: bool,
    pub support_match: bool,
}

/// Compares a recovered signal with the ground truth.
///
/// With `τ = recovery_tol · max(‖x0‖∞, tiny)`, the support matches when every
/// entry off the true support has magnitude at most `τ` and every true entry
/// larger than `2τ` is recovered with magnitude above `τ`. Exact recovery
/// (`‖x̂ − x0‖∞ ≤ τ`) implies both.
pub fn check_recovery(x_hat: &[f64], x0: &[f64], recovery_tol: f64) -> Result<RecoveryReport> {
    if x_hat.len() != x0.len() {
        return Err(Error::Dimension(format!(
            "recovered signal has length {} but the truth has length {}",
            x_hat.len(),
            x0.len()
        )));
    }
    let norm2 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_inf = x0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let diff2 = x_hat
        .iter()
        .zip(x0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let diff_inf = x_hat
        .iter()
        .zip(x0)
        .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    let rel_inf_error = diff_inf / norm_inf.max(TINY);
    let tau = recovery_tol * norm_inf.max(TINY);
    let support_match = x_hat.iter().zip(x0).all(|(&p, &q)| {
        if q == 0.0 {
            p.abs() <= tau
        } else if q.abs() > 2.0 * tau {
            p.abs() > tau
        } else {
            true
        }
    });
    Ok(RecoveryReport {
        rel_l2_error: diff2 / norm2.max(TINY),
        rel_inf_error,
        exact: rel_inf_error <= recovery_tol,
        support_match,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    pub k: usize,
    pub delta: f64,
    /// Column subset attaining `delta`; lexicographically first among ties.
    pub subset: Vec<usize>,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn subset_delta(m: &DMatrix<f64>, subset: &[usize]) -> f64 {
    let sub = m.select_columns(subset);
    let gram = sub.transpose() * &sub;
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let hi = eig.max();
    let lo = eig.min();
    (hi - 1.0).max(1.0 - lo)
}

/// Restricted isometry constant of order `k` by exhaustive enumeration.
pub fn rip_bruteforce(m: &DMatrix<f64>, k: usize) -> Result<RipEstimate> {
    rip_bruteforce_capped(m, k, ENUMERATION_CAP)
}

pub fn rip_bruteforce_capped(m: &DMatrix<f64>, k: usize, cap: u128) -> Result<RipEstimate> {
    let n = m.ncols();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "RIP order must satisfy 1 <= k <= {n}, got {k}"
        )));
    }
    let count = binomial(n, k);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let subsets: Vec<Vec<usize>> = (0..n).combinations(k).collect();
    // max over (delta, -index) is order independent, so the reduction is deterministic
    let (delta, best) = subsets
        .par_iter()
        .enumerate()
        .map(|(i, s)| (subset_delta(m, s), i))
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| {
                if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
                    a
                } else {
                    b
                }
            },
        );
    Ok(RipEstimate {
        k,
        delta,
        subset: subsets[best].clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KronRip {
    pub delta_u: f64,
    pub delta_a: f64,
    pub delta_b: f64,
    pub holds: bool,
}

/// Computes `δ_k` of `A`, `B` and `B ⊗ A` and tests
/// `1 + δ_k(B ⊗ A) ≤ (1 + δ_k(A))(1 + δ_k(B))`.
pub fn kron_rip(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> Result<KronRip> {
    let delta_a = rip_bruteforce(a, k)?.delta;
    let delta_b = rip_bruteforce(b, k)?.delta;
    let delta_u = rip_bruteforce(&crate::instance::kron(b, a), k)?.delta;
    Ok(KronRip {
        delta_u,
        delta_a,
        delta_b,
        holds: 1.0 + delta_u <= (1.0 + delta_a) * (1.0 + delta_b) + KRON_RIP_SLACK,
    })
}

pub fn kron_rip_check(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> Result<bool> {
    Ok(kron_rip(a, b, k)?.holds)
}

fn ceil_count(v: f64) -> u64 {
    v.ceil() as u64
}

/// Measurements sufficient for vector sensing: `⌈30 k ln(n/k)⌉`.
pub fn bound_vector_m(k: u64, n: f64) -> Result<u64> {
    if k < 1 || (k as f64) >= n {
        return Err(Error::InvalidArgument(format!(
            "vector bound needs 1 <= k < n, got k={k}, n={n}"
        )));
    }
    let k = k as f64;
    Ok(ceil_count(30.0 * k * (n / k).ln()))
}

/// Measurements sufficient for Kronecker sensing: `⌈225 k² ln(n/k²)²⌉`.
pub fn bound_kcs_m(k: u64, n: f64) -> Result<u64> {
    let k2 = (k * k) as f64;
    if k < 1 || k2 >= n {
        return Err(Error::InvalidArgument(format!(
            "Kronecker bound needs 1 <= k and k^2 < n, got k={k}, n={n}"
        )));
    }
    let l = (n / k2).ln();
    Ok(ceil_count(225.0 * k2 * l * l))
}

fn check_constant(c: f64) -> Result<()> {
    if c.is_nan() || c <= MIN_SIDE_CONSTANT {
        return Err(Error::InvalidArgument(format!(
            "constant C must exceed {MIN_SIDE_CONSTANT}, got {c}"
        )));
    }
    Ok(())
}

/// Per-side measurement counts `(⌈C k ln(n₁/k)⌉, ⌈C k ln(n₂/k)⌉)`.
pub fn bound_kcs_sides(k: u64, n1: f64, n2: f64, c: f64) -> Result<(u64, u64)> {
    check_constant(c)?;
    if k < 1 || (k as f64) >= n1.min(n2) {
        return Err(Error::InvalidArgument(format!(
            "side bounds need 1 <= k < min(n1, n2), got k={k}, n1={n1}, n2={n2}"
        )));
    }
    let k = k as f64;
    Ok((
        ceil_count(c * k * (n1 / k).ln()),
        ceil_count(c * k * (n2 / k).ln()),
    ))
}

/// Failure mass `ρ(m₁, m₂) = 2e^{−(0.239 − 6.7/C) m₁} + 2e^{−(0.239 − 6.7/C) m₂}`.
pub fn rho(m1: f64, m2: f64, c: f64) -> Result<f64> {
    check_constant(c)?;
    let rate = 0.239 - 6.7 / c;
    Ok(2.0 * (-rate * m1).exp() + 2.0 * (-rate * m2).exp())
}

/// `(1 − ρ(m₁, m₂), 1 − 4 e^{−0.1 √(m₁ m₂)})`. Either may be negative, which
/// means the bound is vacuous at that size.
pub fn success_prob_bounds(m1: f64, m2: f64, c: f64) -> Result<(f64, f64)> {
    let r = rho(m1, m2, c)?;
    Ok((1.0 - r, 1.0 - 4.0 * (-0.1 * (m1 * m2).sqrt()).exp()))
}
