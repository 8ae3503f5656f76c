//! Normal-equations factorizations for `A diag(d) Aᵀ`.
//!
//! The sparse path orders once by minimum degree, fixes the factor pattern,
//! and precomputes where every column outer product lands in it. Each
//! interior-point iteration then only scatters and runs a left-looking
//! numeric Cholesky. The dense path forms the product with a matrix multiply.

use nalgebra::DMatrix;

use super::ordering::{minimum_degree, Graph};
use crate::dense::{modified_pivot, DenseCholesky};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Pivot floor relative to the largest diagonal entry.
pub const PIVOT_TINY: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SparseNormal {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    /// Factor storage: diagonal first in each column, then rows ascending.
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// For row `k`, each `(p, pos)` with `L[k, p]` stored at `pos`, `p < k`.
    row_entries: Vec<Vec<(usize, usize)>>,
    /// Factor position of each lower pair of each `A` column, in loop order.
    scatter: Vec<usize>,
}

impl SparseNormal {
    pub fn analyze(a: &SparseMatrix) -> SparseNormal {
        let n = a.rows();
        let mut g = Graph::new(n);
        for j in 0..a.cols() {
            let (rows, _) = a.col(j);
            if rows.len() > 1 {
                g.add_clique(rows);
            }
        }
        let elim = minimum_degree(g);

        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(elim.factor_nnz());
        col_ptr.push(0);
        for (k, below) in elim.columns.iter().enumerate() {
            row_idx.push(k);
            row_idx.extend_from_slice(below);
            col_ptr.push(row_idx.len());
        }
        let mut row_entries = vec![Vec::new(); n];
        for p in 0..n {
            for pos in col_ptr[p] + 1..col_ptr[p + 1] {
                row_entries[row_idx[pos]].push((p, pos));
            }
        }

        let find = |r: usize, c: usize| -> usize {
            let (lo, hi) = (col_ptr[c], col_ptr[c + 1]);
            lo + row_idx[lo..hi]
                .binary_search(&r)
                .expect("normal-matrix entry outside factor pattern")
        };
        let mut scatter = Vec::new();
        for j in 0..a.cols() {
            let (rows, _) = a.col(j);
            for (s, &ra) in rows.iter().enumerate() {
                for &rb in &rows[..=s] {
                    let (pa, pb) = (elim.iperm[ra], elim.iperm[rb]);
                    let (hi, lo) = if pa >= pb { (pa, pb) } else { (pb, pa) };
                    scatter.push(find(hi, lo));
                }
            }
        }

        SparseNormal {
            n,
            perm: elim.perm,
            iperm: elim.iperm,
            col_ptr,
            row_idx,
            row_entries,
            scatter,
        }
    }

    pub fn factor_nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Factors `A diag(d) Aᵀ`; `a` must be the matrix passed to `analyze`.
    pub fn factor(&self, a: &SparseMatrix, d: &[f64]) -> Result<SparseFactor<'_>> {
        let mut values = vec![0.0; self.row_idx.len()];
        let mut it = self.scatter.iter();
        for (j, &dj) in d.iter().enumerate() {
            let (_, vals) = a.col(j);
            for (s, &va) in vals.iter().enumerate() {
                let w = dj * va;
                for &vb in &vals[..=s] {
                    values[*it.next().expect("scatter map length")] += w * vb;
                }
            }
        }

        let max_diag = (0..self.n)
            .map(|k| values[self.col_ptr[k]])
            .fold(0.0f64, f64::max);
        let mut work = vec![0.0; self.n];
        let mut modified = 0;
        for k in 0..self.n {
            let (lo, hi) = (self.col_ptr[k], self.col_ptr[k + 1]);
            for pos in lo..hi {
                work[self.row_idx[pos]] = values[pos];
            }
            for &(p, pos_k) in &self.row_entries[k] {
                let lkp = values[pos_k];
                if lkp == 0.0 {
                    continue;
                }
                for pos in pos_k..self.col_ptr[p + 1] {
                    work[self.row_idx[pos]] -= values[pos] * lkp;
                }
            }
            let diag = work[k];
            if diag.is_nan() {
                return Err(Error::Factorization { column: k });
            }
            let max_off = self.row_idx[lo + 1..hi]
                .iter()
                .fold(0.0f64, |m, &r| m.max(work[r].abs()));
            let (lkk, changed) = modified_pivot(diag, max_off, PIVOT_TINY, max_diag);
            modified += usize::from(changed);
            values[lo] = lkk;
            work[k] = 0.0;
            for pos in lo + 1..hi {
                let r = self.row_idx[pos];
                values[pos] = work[r] / lkk;
                work[r] = 0.0;
            }
        }
        Ok(SparseFactor {
            sym: self,
            values,
            modified_pivots: modified,
        })
    }
}

pub struct SparseFactor<'a> {
    sym: &'a SparseNormal,
    values: Vec<f64>,
    pub modified_pivots: usize,
}

impl SparseFactor<'_> {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let s = self.sym;
        let mut x: Vec<f64> = s.perm.iter().map(|&p| b[p]).collect();
        for k in 0..s.n {
            let (lo, hi) = (s.col_ptr[k], s.col_ptr[k + 1]);
            x[k] /= self.values[lo];
            let xk = x[k];
            for pos in lo + 1..hi {
                x[s.row_idx[pos]] -= self.values[pos] * xk;
            }
        }
        for k in (0..s.n).rev() {
            let (lo, hi) = (s.col_ptr[k], s.col_ptr[k + 1]);
            let mut acc = x[k];
            for pos in lo + 1..hi {
                acc -= self.values[pos] * x[s.row_idx[pos]];
            }
            x[k] = acc / self.values[lo];
        }
        (0..s.n).map(|i| x[s.iperm[i]]).collect()
    }
}

/// Dense path: `Aᵀ` held as a dense matrix, product by matrix multiply.
#[derive(Clone, Debug)]
pub struct DenseNormal {
    at: DMatrix<f64>,
}

impl DenseNormal {
    pub fn new(a: &SparseMatrix) -> DenseNormal {
        DenseNormal {
            at: a.to_dense().transpose(),
        }
    }

    pub fn factor_nnz(&self) -> usize {
        let r = self.at.ncols();
        r * (r + 1) / 2
    }

    pub fn factor(&self, d: &[f64]) -> Result<DenseCholesky> {
        let r = self.at.ncols();
        let mut scaled = self.at.clone();
        for (j, mut row) in scaled.row_iter_mut().enumerate() {
            row *= d[j].sqrt();
        }
        let mut m = DMatrix::zeros(r, r);
        m.gemm_tr(1.0, &scaled, &scaled, 0.0);
        DenseCholesky::factor(r, m.as_slice().to_vec(), PIVOT_TINY)
    }
}

/// A column joins the dominant set when its weight exceeds the median weight
/// by this factor.
pub const DOMINANT_RATIO: f64 = 1e8;

/// Minimum ratio between the smallest dominant weight and the next one.
pub const DOMINANT_GAP: f64 = 1e3;

pub enum NormalSolver {
    Dense(DenseNormal),
    Sparse(SparseNormal),
}

enum BaseFactor<'a> {
    Dense(DenseCholesky),
    Sparse(SparseFactor<'a>),
}

impl BaseFactor<'_> {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            BaseFactor::Dense(ch) => {
                let mut x = b.to_vec();
                ch.solve(&mut x);
                x
            }
            BaseFactor::Sparse(f) => f.solve(b),
        }
    }

    fn modified_pivots(&self) -> usize {
        match self {
            BaseFactor::Dense(ch) => ch.modified_pivots,
            BaseFactor::Sparse(f) => f.modified_pivots,
        }
    }
}

/// Woodbury correction for dominant columns `U` with weights `D_U`:
/// `(M_s + U D_U Uᵀ)⁻¹ = M_s⁻¹ − Y C⁻¹ Yᵀ` with `Y = M_s⁻¹ U` and
/// `C = D_U⁻¹ + Uᵀ Y`.
struct LowRank {
    columns: Vec<usize>,
    y: DMatrix<f64>,
    capacitance: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

/// Factor of `A diag(d) Aᵀ`.
///
/// Late in an interior-point run a few columns carry weights many orders of
/// magnitude above the rest, and the formed product loses the small part to
/// roundoff. When the remaining columns alone give a cleanly factorable
/// matrix, the dominant ones are applied through a low-rank correction
/// instead of being summed in.
pub struct NormalFactor<'a> {
    base: BaseFactor<'a>,
    low_rank: Option<LowRank>,
}

impl NormalSolver {
    pub fn new(a: &SparseMatrix, dense_below: usize) -> NormalSolver {
        if a.rows() < dense_below {
            NormalSolver::Dense(DenseNormal::new(a))
        } else {
            NormalSolver::Sparse(SparseNormal::analyze(a))
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, NormalSolver::Sparse(_))
    }

    pub fn factor_nnz(&self) -> usize {
        match self {
            NormalSolver::Dense(d) => d.factor_nnz(),
            NormalSolver::Sparse(s) => s.factor_nnz(),
        }
    }

    fn base(&self, a: &SparseMatrix, d: &[f64]) -> Result<BaseFactor<'_>> {
        Ok(match self {
            NormalSolver::Dense(dn) => BaseFactor::Dense(dn.factor(d)?),
            NormalSolver::Sparse(sn) => BaseFactor::Sparse(sn.factor(a, d)?),
        })
    }

    pub fn factor(&self, a: &SparseMatrix, d: &[f64]) -> Result<NormalFactor<'_>> {
        if let Some(split) = self.split_factor(a, d)? {
            return Ok(split);
        }
        Ok(NormalFactor {
            base: self.base(a, d)?,
            low_rank: None,
        })
    }

    /// The split factorization, or `None` when it does not apply.
    fn split_factor(&self, a: &SparseMatrix, d: &[f64]) -> Result<Option<NormalFactor<'_>>> {
        let rows = a.rows();
        if d.is_empty() {
            return Ok(None);
        }
        let mut sorted = d.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        if median <= 0.0 {
            return Ok(None);
        }
        // the dominant set ends at the widest gap among the top rows / 4
        // weights that clears both thresholds
        sorted.reverse();
        let mut best: Option<(usize, f64)> = None;
        for q in 1..=(rows / 4).min(sorted.len() - 1) {
            let (above, below) = (sorted[q - 1], sorted[q]);
            if above <= DOMINANT_RATIO * median {
                break;
            }
            let gap = above / below.max(f64::MIN_POSITIVE);
            if gap >= DOMINANT_GAP && best.is_none_or(|(_, g)| gap > g) {
                best = Some((q, gap));
            }
        }
        let Some((q, _)) = best else {
            return Ok(None);
        };
        let cut = sorted[q - 1];
        let dominant: Vec<usize> = (0..d.len()).filter(|&j| d[j] >= cut).collect();
        if dominant.len() != q {
            return Ok(None);
        }
        let mut rest = d.to_vec();
        for &j in &dominant {
            rest[j] = 0.0;
        }
        let base = self.base(a, &rest)?;
        if base.modified_pivots() > 0 {
            return Ok(None);
        }
        let q = dominant.len();
        let mut u = DMatrix::zeros(rows, q);
        for (c, &j) in dominant.iter().enumerate() {
            let (idx, vals) = a.col(j);
            for (&i, &v) in idx.iter().zip(vals) {
                u[(i, c)] = v;
            }
        }
        let mut y = DMatrix::zeros(rows, q);
        for c in 0..q {
            let col = base.solve(u.column(c).as_slice());
            y.column_mut(c).copy_from_slice(&col);
        }
        let mut cap = u.tr_mul(&y);
        for (c, &j) in dominant.iter().enumerate() {
            cap[(c, c)] += 1.0 / d[j];
        }
        // symmetrize away roundoff before the small dense factorization
        let cap = (&cap + cap.transpose()) * 0.5;
        let Some(capacitance) = cap.cholesky() else {
            return Ok(None);
        };
        Ok(Some(NormalFactor {
            base,
            low_rank: Some(LowRank {
                columns: dominant,
                y,
                capacitance,
            }),
        }))
    }
}

impl NormalFactor<'_> {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match &self.low_rank {
            None => self.base.solve(b),
            Some(lr) => {
                // M⁻¹ b = M_s⁻¹ b − Y C⁻¹ Yᵀ b, with Yᵀ b = Uᵀ M_s⁻¹ b
                let bv = nalgebra::DVector::from_column_slice(b);
                let t = lr.capacitance.solve(&lr.y.tr_mul(&bv));
                let mut x = self.base.solve(b);
                let corr = &lr.y * t;
                for (xi, ci) in x.iter_mut().zip(corr.iter()) {
                    *xi -= ci;
                }
                x
            }
        }
    }

    /// Solves `[M_s U; Uᵀ −D_U⁻¹] [w; t] = [r; h]` for the dominant columns
    /// `U`, returning `(w, t)`. Without dominant columns this is `M⁻¹ r`.
    pub fn solve_partitioned(&self, r: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let Some(lr) = &self.low_rank else {
            return (self.base.solve(r), Vec::new());
        };
        let mut w = self.base.solve(r);
        // Uᵀ M_s⁻¹ r = Yᵀ r, so t = C⁻¹ (Yᵀ r − h)
        let rv = nalgebra::DVector::from_column_slice(r);
        let rhs = lr.y.tr_mul(&rv) - nalgebra::DVector::from_column_slice(h);
        let t = lr.capacitance.solve(&rhs);
        let corr = &lr.y * &t;
        for (wi, ci) in w.iter_mut().zip(corr.iter()) {
            *wi -= ci;
        }
        (w, t.as_slice().to_vec())
    }

    pub fn modified_pivots(&self) -> usize {
        self.base.modified_pivots()
    }

    /// Columns handled by the low-rank correction, ascending.
    pub fn dominant_columns(&self) -> &[usize] {
        self.low_rank.as_ref().map_or(&[], |lr| &lr.columns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::TripletBuilder;

    fn sample() -> SparseMatrix {
        let mut t = TripletBuilder::new(5, 8);
        let entries = [
            (0, 0, 1.0),
            (1, 0, -2.0),
            (1, 1, 1.5),
            (2, 2, 3.0),
            (3, 2, 1.0),
            (4, 3, 2.0),
            (0, 4, 0.5),
            (4, 4, -1.0),
            (2, 5, 1.0),
            (3, 6, 2.5),
            (0, 7, 1.0),
            (3, 7, 1.0),
        ];
        for (i, j, v) in entries {
            t.push(i, j, v);
        }
        t.build()
    }

    fn normal_dense(a: &SparseMatrix, d: &[f64]) -> DMatrix<f64> {
        let ad = a.to_dense();
        let dd = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d));
        &ad * dd * ad.transpose()
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let a = sample();
        let d = [1.0, 2.0, 0.5, 3.0, 1.5, 0.25, 4.0, 1.0];
        let m = normal_dense(&a, &d);
        let b = [1.0, -1.0, 2.0, 0.5, 3.0];
        let sparse = NormalSolver::new(&a, 0);
        let dense = NormalSolver::new(&a, 100);
        assert!(sparse.is_sparse() && !dense.is_sparse());
        for solver in [sparse, dense] {
            let f = solver.factor(&a, &d).unwrap();
            let x = f.solve(&b);
            let mx = &m * nalgebra::DVector::from_column_slice(&x);
            for i in 0..5 {
                assert!((mx[i] - b[i]).abs() < 1e-12, "{i}: {} vs {}", mx[i], b[i]);
            }
            assert_eq!(f.modified_pivots(), 0);
        }
    }

    #[test]
    fn sparse_factor_is_sparse() {
        // block diagonal normal matrix: no fill across blocks
        let mut t = TripletBuilder::new(6, 6);
        for j in 0..6 {
            t.push(j, j, 1.0);
            t.push(j ^ 1, j, 0.5);
        }
        let a = t.build();
        let s = SparseNormal::analyze(&a);
        assert_eq!(s.factor_nnz(), 6 + 3);
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn dominant_column_is_split_off() {
        let a = sample();
        let mut d = [1.0, 2.0, 0.5, 3.0, 1.5, 0.25, 4.0, 1.0];
        d[0] = 1e12;
        for solver in [NormalSolver::new(&a, 0), NormalSolver::new(&a, 100)] {
            let f = solver.factor(&a, &d).unwrap();
            assert_eq!(f.dominant_columns(), &[0]);

            // [M_s u; uᵀ −1/d₀] [w; t] = [r; h]
            let r = [1.0, -1.0, 2.0, 0.5, 3.0];
            let h = [0.25];
            let (w, t) = f.solve_partitioned(&r, &h);
            let mut rest = d;
            rest[0] = 0.0;
            let ms = normal_dense(&a, &rest);
            let u = a.to_dense().column(0).into_owned();
            let top = &ms * nalgebra::DVector::from_column_slice(&w) + &u * t[0];
            assert!(max_abs_diff(top.as_slice(), &r) < 1e-9);
            let bottom = u.dot(&nalgebra::DVector::from_column_slice(&w)) - t[0] / d[0];
            assert!((bottom - h[0]).abs() < 1e-12);

            // the Woodbury inverse solves the full normal system
            let x = f.solve(&r);
            let m = normal_dense(&a, &d);
            let mx = &m * nalgebra::DVector::from_column_slice(&x);
            assert!(max_abs_diff(mx.as_slice(), &r) < 1e-9 * 1e12);
        }
    }

    #[test]
    fn comparable_weights_are_not_split() {
        let a = sample();
        let d = [1e3, 2.0, 0.5, 3.0, 1.5, 0.25, 4.0, 1.0];
        let solver = NormalSolver::new(&a, 100);
        let f = solver.factor(&a, &d).unwrap();
        assert!(f.dominant_columns().is_empty());
    }
}
