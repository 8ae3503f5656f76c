//! Small dense kernels: LU with partial pivoting and a guarded Cholesky.
//! Storage is column-major `n x n` in a flat `Vec<f64>`.

use crate::error::{Error, Result};

/// `P A = L U` with unit lower `L`.
#[derive(Clone, Debug)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<DenseLu> {
        assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for k in 0..n {
            let col = k * n;
            let (mut p, mut best) = (k, a[col + k].abs());
            for i in k + 1..n {
                let v = a[col + i].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-13 * scale {
                return Err(Error::SingularBasis {
                    position: k,
                    pivot: best,
                });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    a.swap(j * n + p, j * n + k);
                }
            }
            let piv = a[col + k];
            for i in k + 1..n {
                a[col + i] /= piv;
            }
            for j in k + 1..n {
                let ukj = a[j * n + k];
                if ukj == 0.0 {
                    continue;
                }
                for i in k + 1..n {
                    a[j * n + i] -= a[col + i] * ukj;
                }
            }
        }
        Ok(DenseLu { n, lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for k in 0..n {
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..n {
                    x[i] -= self.lu[k * n + i] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            x[k] /= self.lu[k * n + k];
            let xk = x[k];
            if xk != 0.0 {
                for i in 0..k {
                    x[i] -= self.lu[k * n + i] * xk;
                }
            }
        }
        b.copy_from_slice(&x);
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let n = self.n;
        // Uᵀ z = b
        let mut z = b.to_vec();
        for k in 0..n {
            let col = &self.lu[k * n..k * n + k];
            let s: f64 = col.iter().zip(&z[..k]).map(|(u, zi)| u * zi).sum();
            z[k] = (z[k] - s) / self.lu[k * n + k];
        }
        // Lᵀ w = z
        for k in (0..n).rev() {
            let col = &self.lu[k * n + k + 1..(k + 1) * n];
            let s: f64 = col.iter().zip(&z[k + 1..]).map(|(l, zi)| l * zi).sum();
            z[k] -= s;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = z[k];
        }
    }
}

/// Square root of the pivot for a column whose remaining diagonal is `d` and
/// whose largest below-diagonal entry (before scaling) is `max_off`.
///
/// The pivot is raised to at least `tiny * max_diag` and to at least
/// `max_off² / max_diag`, so every entry of L stays below `√max_diag` in
/// magnitude. An exactly positive definite matrix never triggers the second
/// bound; it only absorbs roundoff that has destroyed definiteness. Returns
/// whether the pivot was changed.
pub fn modified_pivot(d: f64, max_off: f64, tiny: f64, max_diag: f64) -> (f64, bool) {
    let floor = (tiny * max_diag).max(f64::MIN_POSITIVE);
    let growth = if max_diag > 0.0 {
        max_off * max_off / max_diag
    } else {
        0.0
    };
    let pivot = d.max(floor).max(growth);
    (pivot.sqrt(), pivot != d)
}

/// Lower Cholesky factor of a symmetric positive semidefinite matrix.
///
/// Pivots are modified instead of failing (see [`modified_pivot`]), so the
/// factor of a near-singular matrix stays usable as a preconditioner.
#[derive(Clone, Debug)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
    pub modified_pivots: usize,
}

impl DenseCholesky {
    pub fn factor(n: usize, mut a: Vec<f64>, tiny: f64) -> Result<DenseCholesky> {
        assert_eq!(a.len(), n * n);
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
        let mut modified = 0;
        for k in 0..n {
            let col = k * n;
            let mut d = a[col + k];
            for p in 0..k {
                let l = a[p * n + k];
                d -= l * l;
            }
            if d.is_nan() {
                return Err(Error::Factorization { column: k });
            }
            // column k below the diagonal, left-looking
            for p in 0..k {
                let lkp = a[p * n + k];
                if lkp == 0.0 {
                    continue;
                }
                for i in k + 1..n {
                    a[col + i] -= a[p * n + i] * lkp;
                }
            }
            let max_off = a[col + k + 1..col + n]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let (lkk, changed) = modified_pivot(d, max_off, tiny, max_diag);
            modified += usize::from(changed);
            a[col + k] = lkk;
            for i in k + 1..n {
                a[col + i] /= lkk;
            }
        }
        // clear the strict upper part so `l` holds only L
        for j in 0..n {
            for i in 0..j {
                a[j * n + i] = 0.0;
            }
        }
        Ok(DenseCholesky {
            n,
            l: a,
            modified_pivots: modified,
        })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            b[k] /= self.l[k * n + k];
            let bk = b[k];
            for i in k + 1..n {
                b[i] -= self.l[k * n + i] * bk;
            }
        }
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|i| self.l[k * n + i] * b[i]).sum();
            b[k] = (b[k] - s) / self.l[k * n + k];
        }
    }

    pub fn factor_nnz(&self) -> usize {
        self.n * (self.n + 1) / 2
    }
}
