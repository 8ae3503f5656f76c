//! Basis factorization for the revised simplex.
//!
//! A fresh factorization peels column singletons and row singletons off the
//! basis matrix until none remain, which puts it in the block form
//!
//! ```text
//!   [ U_f  X    Y   ]
//!   [ 0    M    Z   ]      U_f upper triangular (column singletons)
//!   [ 0    0    L_g ]      L_g lower triangular (row singletons)
//! ```
//!
//! after row and column permutation. Only the bump `M` is factored densely.
//! Triangular bases (the starting basis of both formulations) therefore cost
//! nothing beyond a scan of their nonzeros.
//!
//! Between refactorizations each basis change is appended as an eta column
//! (product form): `B_k = B_0 E_1 ... E_k`.

use crate::dense::DenseLu;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Clone, Copy, Debug)]
struct Pivot {
    row: usize,
    pos: usize,
    value: f64,
}

#[derive(Clone, Debug)]
struct Eta {
    pos: usize,
    pivot: f64,
    idx: Vec<usize>,
    val: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FactorizedBasis {
    dim: usize,
    cols: SparseMatrix,
    front: Vec<Pivot>,
    back: Vec<Pivot>,
    bump_rows: Vec<usize>,
    bump_pos: Vec<usize>,
    bump: Option<DenseLu>,
    etas: Vec<Eta>,
}

const ETA_DROP: f64 = 1e-14;

impl FactorizedBasis {
    /// Factors the columns `basis` of `a`. `basis[p]` is the column in position `p`.
    pub fn factor(a: &SparseMatrix, basis: &[usize]) -> Result<FactorizedBasis> {
        let dim = a.rows();
        if basis.len() != dim {
            return Err(Error::Dimension(format!(
                "basis has {} columns for {} rows",
                basis.len(),
                dim
            )));
        }
        let cols = a.select_cols(basis);
        let rows = cols.transpose();

        let mut col_active = vec![true; dim];
        let mut row_active = vec![true; dim];
        let mut col_count: Vec<usize> = (0..dim).map(|p| cols.col_nnz(p)).collect();
        let mut row_count: Vec<usize> = (0..dim).map(|i| rows.col_nnz(i)).collect();

        if let Some(p) = col_count.iter().position(|&c| c == 0) {
            return Err(Error::SingularBasis {
                position: p,
                pivot: 0.0,
            });
        }

        let mut col_queue: Vec<usize> = (0..dim).filter(|&p| col_count[p] == 1).collect();
        let mut row_queue: Vec<usize> = (0..dim).filter(|&i| row_count[i] == 1).collect();
        col_queue.reverse();
        row_queue.reverse();
        let mut front = Vec::new();
        let mut back = Vec::new();

        loop {
            let mut progressed = false;
            while let Some(p) = col_queue.pop() {
                if !col_active[p] || col_count[p] != 1 {
                    continue;
                }
                let (ri, vs) = cols.col(p);
                let k = ri.iter().position(|&i| row_active[i]).unwrap();
                let piv = Pivot {
                    row: ri[k],
                    pos: p,
                    value: vs[k],
                };
                front.push(piv);
                eliminate(
                    piv,
                    &cols,
                    &rows,
                    &mut col_active,
                    &mut row_active,
                    &mut col_count,
                    &mut row_count,
                    &mut col_queue,
                    &mut row_queue,
                );
                progressed = true;
            }
            while let Some(i) = row_queue.pop() {
                if !row_active[i] || row_count[i] != 1 {
                    continue;
                }
                let (ci, _) = rows.col(i);
                let k = ci.iter().position(|&p| col_active[p]).unwrap();
                let p = ci[k];
                let piv = Pivot {
                    row: i,
                    pos: p,
                    value: cols.get(i, p),
                };
                back.push(piv);
                eliminate(
                    piv,
                    &cols,
                    &rows,
                    &mut col_active,
                    &mut row_active,
                    &mut col_count,
                    &mut row_count,
                    &mut col_queue,
                    &mut row_queue,
                );
                progressed = true;
                // new column singletons go to the front before more row peeling
                if !col_queue.is_empty() {
                    break;
                }
            }
            if !progressed {
                break;
            }
        }

        let bump_pos: Vec<usize> = (0..dim).filter(|&p| col_active[p]).collect();
        let bump_rows: Vec<usize> = (0..dim).filter(|&i| row_active[i]).collect();
        if bump_pos.len() != bump_rows.len() {
            return Err(Error::SingularBasis {
                position: bump_pos.first().copied().unwrap_or(0),
                pivot: 0.0,
            });
        }
        if let Some(p) = bump_pos.iter().copied().find(|&p| col_count[p] == 0) {
            return Err(Error::SingularBasis {
                position: p,
                pivot: 0.0,
            });
        }
        let bump = if bump_pos.is_empty() {
            None
        } else {
            let b = bump_pos.len();
            let mut row_slot = vec![usize::MAX; dim];
            for (t, &i) in bump_rows.iter().enumerate() {
                row_slot[i] = t;
            }
            let mut dense = vec![0.0; b * b];
            for (t, &p) in bump_pos.iter().enumerate() {
                let (ri, vs) = cols.col(p);
                for (&i, &v) in ri.iter().zip(vs) {
                    if row_slot[i] != usize::MAX {
                        dense[t * b + row_slot[i]] = v;
                    }
                }
            }
            Some(DenseLu::factor(b, dense).map_err(|e| match e {
                Error::SingularBasis { position, pivot } => Error::SingularBasis {
                    position: bump_pos[position],
                    pivot,
                },
                other => other,
            })?)
        };

        Ok(FactorizedBasis {
            dim,
            cols,
            front,
            back,
            bump_rows,
            bump_pos,
            bump,
            etas: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bump_size(&self) -> usize {
        self.bump_pos.len()
    }

    pub fn eta_count(&self) -> usize {
        self.etas.len()
    }

    /// Solves `B x = a`; `x` is indexed by basis position.
    pub fn solve(&self, a: &[f64]) -> Vec<f64> {
        let mut res = a.to_vec();
        let mut x = vec![0.0; self.dim];
        for piv in &self.back {
            let xp = res[piv.row] / piv.value;
            x[piv.pos] = xp;
            if xp != 0.0 {
                self.cols.axpy_col(piv.pos, -xp, &mut res);
            }
        }
        if let Some(lu) = &self.bump {
            let mut rhs: Vec<f64> = self.bump_rows.iter().map(|&i| res[i]).collect();
            lu.solve(&mut rhs);
            for (&p, &xp) in self.bump_pos.iter().zip(&rhs) {
                x[p] = xp;
                if xp != 0.0 {
                    self.cols.axpy_col(p, -xp, &mut res);
                }
            }
        }
        for piv in self.front.iter().rev() {
            let xp = res[piv.row] / piv.value;
            x[piv.pos] = xp;
            if xp != 0.0 {
                self.cols.axpy_col(piv.pos, -xp, &mut res);
            }
        }
        for eta in &self.etas {
            let xp = x[eta.pos] / eta.pivot;
            x[eta.pos] = xp;
            if xp != 0.0 {
                for (&i, &w) in eta.idx.iter().zip(&eta.val) {
                    x[i] -= w * xp;
                }
            }
        }
        x
    }

    /// Solves `Bᵀ y = c`; `c` is indexed by basis position, `y` by row.
    pub fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        let mut c = c.to_vec();
        for eta in self.etas.iter().rev() {
            let s: f64 = eta.idx.iter().zip(&eta.val).map(|(&i, &w)| w * c[i]).sum();
            c[eta.pos] = (c[eta.pos] - s) / eta.pivot;
        }
        let mut y = vec![0.0; self.dim];
        for piv in &self.front {
            y[piv.row] = (c[piv.pos] - self.cols.dot_col(piv.pos, &y)) / piv.value;
        }
        if let Some(lu) = &self.bump {
            let mut rhs: Vec<f64> = self
                .bump_pos
                .iter()
                .map(|&p| c[p] - self.cols.dot_col(p, &y))
                .collect();
            lu.solve_transpose(&mut rhs);
            for (&i, &v) in self.bump_rows.iter().zip(&rhs) {
                y[i] = v;
            }
        }
        for piv in self.back.iter().rev() {
            y[piv.row] = (c[piv.pos] - self.cols.dot_col(piv.pos, &y)) / piv.value;
        }
        y
    }

    /// Records that position `pos` now holds a column whose solve against the
    /// current basis is `w`.
    pub fn update(&mut self, pos: usize, w: &[f64]) -> Result<()> {
        let pivot = w[pos];
        if pivot.abs() < ETA_DROP {
            return Err(Error::SingularBasis {
                position: pos,
                pivot,
            });
        }
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, &wi) in w.iter().enumerate() {
            if i != pos && wi.abs() > ETA_DROP {
                idx.push(i);
                val.push(wi);
            }
        }
        self.etas.push(Eta {
            pos,
            pivot,
            idx,
            val,
        });
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn eliminate(
    piv: Pivot,
    cols: &SparseMatrix,
    rows: &SparseMatrix,
    col_active: &mut [bool],
    row_active: &mut [bool],
    col_count: &mut [usize],
    row_count: &mut [usize],
    col_queue: &mut Vec<usize>,
    row_queue: &mut Vec<usize>,
) {
    col_active[piv.pos] = false;
    row_active[piv.row] = false;
    for &i in cols.col(piv.pos).0 {
        if row_active[i] {
            row_count[i] -= 1;
            if row_count[i] == 1 {
                row_queue.push(i);
            }
        }
    }
    for &p in rows.col(piv.row).0 {
        if col_active[p] {
            col_count[p] -= 1;
            if col_count[p] == 1 {
                col_queue.push(p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::rng_for;
    use crate::sparse::TripletBuilder;
    use rand::Rng;

    fn random_sparse(n: usize, density: f64, seed: u64) -> SparseMatrix {
        let mut rng = rng_for(seed, 9);
        let mut t = TripletBuilder::new(n, n);
        for j in 0..n {
            // strong diagonal keeps it nonsingular
            t.push(j, j, 4.0 + rng.random::<f64>());
            for i in 0..n {
                if i != j && rng.random::<f64>() < density {
                    t.push(i, j, rng.random::<f64>() - 0.5);
                }
            }
        }
        t.build()
    }

    fn check_identity(a: &SparseMatrix, basis: &[usize], f: &FactorizedBasis) {
        for (p, &j) in basis.iter().enumerate() {
            let mut col = vec![0.0; a.rows()];
            a.axpy_col(j, 1.0, &mut col);
            let x = f.solve(&col);
            for (q, &v) in x.iter().enumerate() {
                let expect = if q == p { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-8, "solve col {p}: x[{q}] = {v}");
            }
            let mut e = vec![0.0; a.rows()];
            e[p] = 1.0;
            let y = f.solve_transpose(&e);
            for (q, &jq) in basis.iter().enumerate() {
                let v = a.dot_col(jq, &y);
                let expect = if q == p { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn triangular_basis_has_no_bump() {
        // [[I, 0], [V, -I]] style lower triangular block
        let mut t = TripletBuilder::new(4, 4);
        t.push(0, 0, 1.0);
        t.push(1, 1, 1.0);
        t.push(2, 0, 0.3);
        t.push(2, 1, -0.7);
        t.push(3, 1, 2.0);
        t.push(2, 2, -1.0);
        t.push(3, 3, 1.0);
        let a = t.build();
        let basis = [0, 1, 2, 3];
        let f = FactorizedBasis::factor(&a, &basis).unwrap();
        assert_eq!(f.bump_size(), 0);
        check_identity(&a, &basis, &f);
    }

    #[test]
    fn general_sparse_basis() {
        for seed in 0..5 {
            let a = random_sparse(30, 0.15, seed);
            let basis: Vec<usize> = (0..30).rev().collect();
            let f = FactorizedBasis::factor(&a, &basis).unwrap();
            check_identity(&a, &basis, &f);
        }
    }

    #[test]
    fn eta_updates_track_column_replacement() {
        let a = random_sparse(12, 0.3, 42);
        // extra columns to swap in
        let mut t = TripletBuilder::new(12, 16);
        for (i, j, v) in a.triplets() {
            t.push(i, j, v);
        }
        let mut rng = rng_for(1, 1);
        for j in 12..16 {
            for i in 0..12 {
                t.push(i, j, rng.random::<f64>() - 0.5);
            }
        }
        let full = t.build();
        let mut basis: Vec<usize> = (0..12).collect();
        let mut f = FactorizedBasis::factor(&full, &basis).unwrap();
        for (pos, entering) in [(3usize, 12usize), (7, 13), (3, 14), (0, 15)] {
            let mut col = vec![0.0; 12];
            full.axpy_col(entering, 1.0, &mut col);
            let w = f.solve(&col);
            f.update(pos, &w).unwrap();
            basis[pos] = entering;
            check_identity(&full, &basis, &f);
        }
        assert_eq!(f.eta_count(), 4);
    }

    #[test]
    fn singular_basis_is_reported() {
        let mut t = TripletBuilder::new(3, 3);
        t.push(0, 0, 1.0);
        t.push(1, 0, 1.0);
        t.push(0, 1, 2.0);
        t.push(1, 1, 2.0);
        t.push(2, 2, 1.0);
        let a = t.build();
        assert!(matches!(
            FactorizedBasis::factor(&a, &[0, 1, 2]),
            Err(Error::SingularBasis { .. })
        ));
        let empty = SparseMatrix::zeros(2, 2);
        assert!(FactorizedBasis::factor(&empty, &[0, 1]).is_err());
    }
}
