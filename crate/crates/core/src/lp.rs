//! Split-variable parametric LPs for vector and Kronecker sensing.
//!
//! Both formulations minimise `(c_D + mu * c_P)ᵀ v` over `v >= 0` subject to
//! `M v = b`, where `c_P` marks the `x+ / x-` columns and `c_D` the `eps+ / eps-`
//! columns. Columns are always ordered `(z | x+ | x- | eps+ | eps-)`; the vector
//! form has no `z` block.
//!
//! The Kronecker form never materialises `U = B ⊗ A`. It uses `U = V W` with
//! `V = diag(A, ..., A)` (`m2` copies) and `W` the `(n1 m2) x (n1 n2)` matrix
//! whose `(i2, j2)` block is `b[i2, j2] · I(n1)`, and the constraints
//!
//! ```text
//!   z - W (x+ - x-)          = 0        (n1 m2 rows)
//!   V z + (eps+ - eps-)      = vec(Y)   (m1 m2 rows)
//! ```
//!
//! `z` is free. The simplex solver keeps it basic; the interior-point
//! conversion splits it.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{unvec, vec, KcsInstance, VectorInstance};
use crate::sparse::{SparseMatrix, TripletBuilder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarClass {
    /// Free auxiliary variable `z = W x` (Kronecker form only).
    Z,
    XPlus,
    XMinus,
    EpsPlus,
    EpsMinus,
}

impl VarClass {
    pub fn is_eps(self) -> bool {
        matches!(self, VarClass::EpsPlus | VarClass::EpsMinus)
    }

    pub fn is_x(self) -> bool {
        matches!(self, VarClass::XPlus | VarClass::XMinus)
    }

    pub fn is_free(self) -> bool {
        self == VarClass::Z
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum LpShape {
    Vector {
        m: usize,
        n: usize,
    },
    Kcs {
        m1: usize,
        n1: usize,
        m2: usize,
        n2: usize,
    },
}

impl LpShape {
    pub fn signal_len(&self) -> usize {
        match *self {
            LpShape::Vector { n, .. } => n,
            LpShape::Kcs { n1, n2, .. } => n1 * n2,
        }
    }

    pub fn measurements(&self) -> usize {
        match *self {
            LpShape::Vector { m, .. } => m,
            LpShape::Kcs { m1, m2, .. } => m1 * m2,
        }
    }

    pub fn z_len(&self) -> usize {
        match *self {
            LpShape::Vector { .. } => 0,
            LpShape::Kcs { n1, m2, .. } => n1 * m2,
        }
    }
}

/// Column metadata: the class of every LP column and its index within that
/// class's original vector (`x`, `eps` or `z`).
#[derive(Clone, Debug, PartialEq)]
pub struct VarMeta {
    shape: LpShape,
}

impl VarMeta {
    fn new(shape: LpShape) -> Self {
        VarMeta { shape }
    }

    pub fn shape(&self) -> LpShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.z_len() + 2 * self.shape.signal_len() + 2 * self.shape.measurements()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self, class: VarClass) -> Range<usize> {
        let (z, n, m) = (
            self.shape.z_len(),
            self.shape.signal_len(),
            self.shape.measurements(),
        );
        match class {
            VarClass::Z => 0..z,
            VarClass::XPlus => z..z + n,
            VarClass::XMinus => z + n..z + 2 * n,
            VarClass::EpsPlus => z + 2 * n..z + 2 * n + m,
            VarClass::EpsMinus => z + 2 * n + m..z + 2 * n + 2 * m,
        }
    }

    pub fn class(&self, col: usize) -> VarClass {
        self.locate(col).0
    }

    /// Class and original index of LP column `col`.
    pub fn locate(&self, col: usize) -> (VarClass, usize) {
        for class in [
            VarClass::Z,
            VarClass::XPlus,
            VarClass::XMinus,
            VarClass::EpsPlus,
            VarClass::EpsMinus,
        ] {
            let r = self.range(class);
            if r.contains(&col) {
                return (class, col - r.start);
            }
        }
        panic!("column {col} outside LP with {} columns", self.len());
    }

    pub fn column(&self, class: VarClass, index: usize) -> usize {
        let r = self.range(class);
        assert!(index < r.len(), "{class:?} index {index} out of range");
        r.start + index
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParametricLp {
    pub constraints: SparseMatrix,
    pub rhs: Vec<f64>,
    /// Coefficient of the `eps` block ones.
    pub cost_penalty: Vec<f64>,
    /// Coefficient multiplied by `mu`: ones on the `x` blocks.
    pub cost_sparsity: Vec<f64>,
    pub meta: VarMeta,
}

impl ParametricLp {
    pub fn rows(&self) -> usize {
        self.constraints.rows()
    }

    pub fn cols(&self) -> usize {
        self.constraints.cols()
    }

    pub fn shape(&self) -> LpShape {
        self.meta.shape()
    }

    /// `(c_D + mu c_P)ᵀ v`
    pub fn objective_at(&self, mu: f64, v: &[f64]) -> f64 {
        v.iter()
            .zip(self.cost_penalty.iter().zip(&self.cost_sparsity))
            .map(|(vi, (d, p))| vi * (d + mu * p))
            .sum()
    }

    fn with_costs(constraints: SparseMatrix, rhs: Vec<f64>, shape: LpShape) -> Self {
        let meta = VarMeta::new(shape);
        let c = meta.len();
        let mut cost_penalty = vec![0.0; c];
        let mut cost_sparsity = vec![0.0; c];
        for j in meta
            .range(VarClass::XPlus)
            .chain(meta.range(VarClass::XMinus))
        {
            cost_sparsity[j] = 1.0;
        }
        for j in meta
            .range(VarClass::EpsPlus)
            .chain(meta.range(VarClass::EpsMinus))
        {
            cost_penalty[j] = 1.0;
        }
        ParametricLp {
            constraints,
            rhs,
            cost_penalty,
            cost_sparsity,
            meta,
        }
    }

    /// LP variable vector for a signal with zero residual: `x± = max(±x, 0)`,
    /// `z = W x`, `eps = 0`.
    pub fn encode_signal(&self, x: &[f64]) -> Result<Vec<f64>> {
        let shape = self.shape();
        if x.len() != shape.signal_len() {
            return Err(Error::Dimension(format!(
                "signal length {} but LP expects {}",
                x.len(),
                shape.signal_len()
            )));
        }
        let mut v = vec![0.0; self.cols()];
        let (xp, xm) = (
            self.meta.range(VarClass::XPlus),
            self.meta.range(VarClass::XMinus),
        );
        for (i, &xi) in x.iter().enumerate() {
            v[xp.start + i] = xi.max(0.0);
            v[xm.start + i] = (-xi).max(0.0);
        }
        if let LpShape::Kcs { n1, m2, .. } = shape {
            // block 1 reads z_q = (W x)_q; recover it from the x columns
            let zr = self.meta.range(VarClass::Z);
            let mut wx = vec![0.0; n1 * m2];
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0.0 {
                    // x+ column holds -W[:, i] in block 1
                    self.constraints.axpy_col(xp.start + i, -xi, &mut wx);
                }
            }
            v[zr].copy_from_slice(&wx);
        }
        Ok(v)
    }

    /// Writes the LP as plain-text triplets:
    ///
    /// ```text
    /// r c nnz
    /// row col value        (nnz lines, 0-based, column-major order)
    /// rhs                  (r values on one line)
    /// cost_penalty         (c values)
    /// cost_sparsity        (c values)
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{} {} {}",
            self.rows(),
            self.cols(),
            self.constraints.nnz()
        )
        .unwrap();
        for (i, j, v) in self.constraints.triplets() {
            writeln!(out, "{i} {j} {v:?}").unwrap();
        }
        for vals in [&self.rhs, &self.cost_penalty, &self.cost_sparsity] {
            let line: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub fn build_vector_lp(inst: &VectorInstance) -> ParametricLp {
    let (m, n) = inst.a.shape();
    let shape = LpShape::Vector { m, n };
    let meta = VarMeta::new(shape);
    let nnz_a = inst.a.iter().filter(|v| **v != 0.0).count();
    let mut t = TripletBuilder::with_capacity(m, meta.len(), 2 * nnz_a + 2 * m);
    let (xp, xm) = (meta.range(VarClass::XPlus), meta.range(VarClass::XMinus));
    for j in 0..n {
        for i in 0..m {
            let a = inst.a[(i, j)];
            t.push(i, xp.start + j, a);
            t.push(i, xm.start + j, -a);
        }
    }
    let (ep, em) = (
        meta.range(VarClass::EpsPlus),
        meta.range(VarClass::EpsMinus),
    );
    for i in 0..m {
        t.push(i, ep.start + i, 1.0);
        t.push(i, em.start + i, -1.0);
    }
    ParametricLp::with_costs(t.build(), inst.y.iter().copied().collect(), shape)
}

/// The sparse factors `V` (block diagonal copies of `A`) and `W` with
/// `V W = B ⊗ A`.
pub fn kcs_factors(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (SparseMatrix, SparseMatrix) {
    let (m1, n1) = a.shape();
    let (m2, n2) = b.shape();
    let mut v = TripletBuilder::new(m1 * m2, n1 * m2);
    for i2 in 0..m2 {
        for j1 in 0..n1 {
            for i1 in 0..m1 {
                v.push(i2 * m1 + i1, i2 * n1 + j1, a[(i1, j1)]);
            }
        }
    }
    let mut w = TripletBuilder::new(n1 * m2, n1 * n2);
    for j2 in 0..n2 {
        for j1 in 0..n1 {
            for i2 in 0..m2 {
                w.push(i2 * n1 + j1, j2 * n1 + j1, b[(i2, j2)]);
            }
        }
    }
    (v.build(), w.build())
}

pub fn build_kcs_lp(inst: &KcsInstance) -> ParametricLp {
    let (m1, n1, m2, n2) = inst.dims();
    let shape = LpShape::Kcs { m1, n1, m2, n2 };
    let meta = VarMeta::new(shape);
    let (v, w) = kcs_factors(&inst.a, &inst.b);
    let rows1 = n1 * m2;
    let rows = rows1 + m1 * m2;
    let mut t = TripletBuilder::with_capacity(
        rows,
        meta.len(),
        rows1 + 2 * w.nnz() + v.nnz() + 2 * m1 * m2,
    );

    let zr = meta.range(VarClass::Z);
    for q in 0..rows1 {
        t.push(q, zr.start + q, 1.0);
        let (ri, vs) = v.col(q);
        for (&i, &val) in ri.iter().zip(vs) {
            t.push(rows1 + i, zr.start + q, val);
        }
    }
    let (xp, xm) = (meta.range(VarClass::XPlus), meta.range(VarClass::XMinus));
    for j in 0..n1 * n2 {
        let (ri, vs) = w.col(j);
        for (&i, &val) in ri.iter().zip(vs) {
            t.push(i, xp.start + j, -val);
            t.push(i, xm.start + j, val);
        }
    }
    let (ep, em) = (
        meta.range(VarClass::EpsPlus),
        meta.range(VarClass::EpsMinus),
    );
    for i in 0..m1 * m2 {
        t.push(rows1 + i, ep.start + i, 1.0);
        t.push(rows1 + i, em.start + i, -1.0);
    }
    let mut rhs = vec![0.0; rows];
    rhs[rows1..].copy_from_slice(vec(&inst.y).as_slice());
    ParametricLp::with_costs(t.build(), rhs, shape)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Signal {
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
}

impl Signal {
    /// Column-major flattening (identity for vectors).
    pub fn flat(&self) -> DVector<f64> {
        match self {
            Signal::Vector(x) => x.clone(),
            Signal::Matrix(x) => vec(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub signal: Signal,
    pub eps: Vec<f64>,
    pub max_abs_eps: f64,
    /// `1ᵀ(x+ + x-)`
    pub split_l1: f64,
}

/// Maps an LP variable vector back to `x = x+ - x-` and `eps = eps+ - eps-`.
pub fn extract_solution(lp: &ParametricLp, v: &[f64]) -> Result<Solution> {
    if v.len() != lp.cols() {
        return Err(Error::Dimension(format!(
            "LP vector has length {} but the LP has {} columns",
            v.len(),
            lp.cols()
        )));
    }
    let meta = &lp.meta;
    let part = |c| &v[meta.range(c)];
    let x: Vec<f64> = part(VarClass::XPlus)
        .iter()
        .zip(part(VarClass::XMinus))
        .map(|(p, m)| p - m)
        .collect();
    let split_l1 = part(VarClass::XPlus)
        .iter()
        .chain(part(VarClass::XMinus))
        .sum();
    let eps: Vec<f64> = part(VarClass::EpsPlus)
        .iter()
        .zip(part(VarClass::EpsMinus))
        .map(|(p, m)| p - m)
        .collect();
    let max_abs_eps = eps.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    let signal = match lp.shape() {
        LpShape::Vector { .. } => Signal::Vector(DVector::from_vec(x)),
        LpShape::Kcs { n1, n2, .. } => Signal::Matrix(unvec(&x, n1, n2)?),
    };
    Ok(Solution {
        signal,
        eps,
        max_abs_eps,
        split_l1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{kron, Amplitude, EnsembleKind};

    fn tiny_vector() -> VectorInstance {
        VectorInstance {
            a: DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            y: DVector::from_vec(vec![2.0]),
            x0: DVector::from_vec(vec![0.0, 1.0]),
            seed: 0,
        }
    }

    #[test]
    fn vector_lp_row_layout() {
        let lp = build_vector_lp(&tiny_vector());
        assert_eq!((lp.rows(), lp.cols()), (1, 6));
        let row: Vec<f64> = (0..6).map(|j| lp.constraints.get(0, j)).collect();
        assert_eq!(row, vec![1.0, 2.0, -1.0, -2.0, 1.0, -1.0]);
        assert_eq!(lp.rhs, vec![2.0]);
        assert_eq!(lp.cost_sparsity, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(lp.cost_penalty, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn vector_lp_column_count_at_full_scale() {
        let meta = VarMeta::new(LpShape::Vector { m: 1122, n: 20022 });
        assert_eq!(meta.len(), 42288);
    }

    #[test]
    fn vector_lp_nnz() {
        let inst = VectorInstance::random(
            3,
            5,
            2,
            EnsembleKind::Gaussian,
            Amplitude::StandardGaussian,
            1,
        )
        .unwrap();
        let lp = build_vector_lp(&inst);
        assert_eq!(lp.constraints.nnz(), 36);
        assert!(lp.constraints.is_canonical());
    }

    #[test]
    fn kcs_lp_two_by_two() {
        let (a1, a2, b1, b2) = (0.5, -1.5, 2.0, 3.0);
        let inst = KcsInstance::new(
            DMatrix::from_row_slice(1, 2, &[a1, a2]),
            DMatrix::from_row_slice(1, 2, &[b1, b2]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            0,
        )
        .unwrap();
        let (v, w) = kcs_factors(&inst.a, &inst.b);
        assert_eq!(
            w.to_dense(),
            DMatrix::from_row_slice(2, 4, &[b1, 0.0, b2, 0.0, 0.0, b1, 0.0, b2])
        );
        assert_eq!(v.to_dense(), DMatrix::from_row_slice(1, 2, &[a1, a2]));
        let lp = build_kcs_lp(&inst);
        assert_eq!(lp.rows(), 3);
        assert_eq!(lp.cols(), 2 + 4 + 4 + 1 + 1);
        assert_eq!(lp.rhs, vec![0.0, 0.0, a1 * b1]);
    }

    #[test]
    fn kcs_factor_product_and_nnz() {
        let inst = KcsInstance::random(
            3,
            4,
            2,
            5,
            3,
            EnsembleKind::Gaussian,
            Amplitude::StandardGaussian,
            8,
        )
        .unwrap();
        let (v, w) = kcs_factors(&inst.a, &inst.b);
        let diff = v.to_dense() * w.to_dense() - kron(&inst.b, &inst.a);
        assert!(diff.amax() < 1e-12);

        let (m1, n1, m2, n2) = inst.dims();
        let lp = build_kcs_lp(&inst);
        assert!(lp.constraints.is_canonical());
        assert_eq!(
            lp.constraints.nnz(),
            n1 * m2 * (1 + 2 * n2) + m2 * m1 * n1 + 2 * m1 * m2
        );
    }

    #[test]
    fn encoded_ground_truth_is_feasible() {
        let inst = KcsInstance::random(
            3,
            5,
            4,
            3,
            4,
            EnsembleKind::Gaussian,
            Amplitude::StandardGaussian,
            2,
        )
        .unwrap();
        let lp = build_kcs_lp(&inst);
        let v = lp.encode_signal(vec(&inst.x0).as_slice()).unwrap();
        let r = lp.constraints.mul_vec(&v);
        let res = r
            .iter()
            .zip(&lp.rhs)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(res < 1e-10, "{res}");
    }

    #[test]
    fn extract_cases() {
        let lp = build_vector_lp(&tiny_vector());
        let s = extract_solution(&lp, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.signal, Signal::Vector(DVector::from_vec(vec![0.0, 1.0])));
        assert_eq!(s.max_abs_eps, 0.0);
        let s = extract_solution(&lp, &[0.0; 6]).unwrap();
        assert_eq!(s.signal.flat(), DVector::zeros(2));
        assert!(extract_solution(&lp, &[0.0; 5]).is_err());

        let inst = KcsInstance::random(
            2,
            3,
            2,
            2,
            2,
            EnsembleKind::Gaussian,
            Amplitude::StandardGaussian,
            6,
        )
        .unwrap();
        let lp = build_kcs_lp(&inst);
        let v = lp.encode_signal(vec(&inst.x0).as_slice()).unwrap();
        let s = extract_solution(&lp, &v).unwrap();
        assert_eq!(s.signal, Signal::Matrix(inst.x0.clone()));
    }

    #[test]
    fn meta_locates_columns() {
        let meta = VarMeta::new(LpShape::Kcs {
            m1: 1,
            n1: 2,
            m2: 1,
            n2: 2,
        });
        assert_eq!(meta.locate(0), (VarClass::Z, 0));
        assert_eq!(meta.locate(2), (VarClass::XPlus, 0));
        assert_eq!(meta.locate(9), (VarClass::XMinus, 3));
        assert_eq!(meta.locate(10), (VarClass::EpsPlus, 0));
        assert_eq!(meta.locate(11), (VarClass::EpsMinus, 0));
        assert_eq!(meta.column(VarClass::XMinus, 1), 7);
    }

    #[test]
    fn export_format() {
        let lp = build_vector_lp(&tiny_vector());
        let text = lp.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "1 6 6");
        assert_eq!(lines[1], "0 0 1.0");
        assert_eq!(lines[7], "2.0");
        assert_eq!(lines.len(), 1 + 6 + 3);
    }
}
