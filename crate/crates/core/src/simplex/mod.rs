//! Parametric-cost primal simplex for the split-variable sensing LPs.
//!
//! The objective `(c_D + mu c_P)ᵀ v` is tracked as `mu` decreases from
//! infinity. The starting basis holds every free `z` column plus, for each
//! measurement row, `eps+` when the right-hand side is nonnegative and `eps-`
//! otherwise. That basis is primal feasible and optimal for all large `mu`.
//!
//! Each iteration computes the interval `[mu_low, mu_high]` on which the
//! current basis stays optimal, brings in the column whose reduced cost
//! crosses zero at `mu_low`, and runs a primal ratio test. Primal values never
//! depend on `mu`, so feasibility carries over between pivots. The run stops at
//! the first basis with every `eps` variable at zero: that basic solution is a
//! minimum-`ℓ1` solution of `A x = y`.

mod basis;

use std::time::{Duration, Instant};

pub use basis::FactorizedBasis;

use crate::error::{Error, Result};
use crate::lp::{extract_solution, ParametricLp, VarClass};
use crate::report::{PivotTrace, SolveReport, Status};

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub piv_tol: f64,
    pub eps_tol: f64,
    pub refactor_every: usize,
    /// Defaults to `20 (r + 1)` for an LP with `r` rows.
    pub max_pivots: Option<usize>,
    pub time_limit: Option<Duration>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            piv_tol: 1e-10,
            eps_tol: 1e-8,
            refactor_every: 50,
            max_pivots: None,
            time_limit: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnStatus {
    Basic(usize),
    NonbasicAtZero,
    /// A free column holding basis position `usize`; never leaves.
    FreeInBasis(usize),
}

impl ColumnStatus {
    pub fn position(self) -> Option<usize> {
        match self {
            ColumnStatus::Basic(p) | ColumnStatus::FreeInBasis(p) => Some(p),
            ColumnStatus::NonbasicAtZero => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimplexState {
    /// Column held by each basis position.
    pub basis: Vec<usize>,
    pub status: Vec<ColumnStatus>,
    /// Primal value of each basis position.
    pub values: Vec<f64>,
    pub mu_low: f64,
    pub mu_high: f64,
    pub pivots: usize,
    pub refactorizations: usize,
    pub last_degenerate: bool,
    pub min_basic_value: f64,
    factor: FactorizedBasis,
}

impl SimplexState {
    pub fn factor(&self) -> &FactorizedBasis {
        &self.factor
    }

    /// Full LP variable vector of the current basic solution.
    pub fn lp_vector(&self, cols: usize) -> Vec<f64> {
        let mut v = vec![0.0; cols];
        for (&j, &x) in self.basis.iter().zip(&self.values) {
            v[j] = x;
        }
        v
    }

    pub fn max_basic_eps(&self, lp: &ParametricLp) -> f64 {
        self.basis
            .iter()
            .zip(&self.values)
            .filter(|(&j, _)| lp.meta.class(j).is_eps())
            .fold(0.0f64, |m, (_, &x)| m.max(x.abs()))
    }

    fn is_free_position(&self, p: usize) -> bool {
        matches!(self.status[self.basis[p]], ColumnStatus::FreeInBasis(_))
    }

    fn recompute_values(&mut self, lp: &ParametricLp, feas_tol: f64) {
        self.values = self.factor.solve(&lp.rhs);
        self.clamp(feas_tol);
    }

    fn clamp(&mut self, feas_tol: f64) {
        for p in 0..self.values.len() {
            if self.is_free_position(p) {
                continue;
            }
            let v = self.values[p];
            self.min_basic_value = self.min_basic_value.min(v);
            if v < 0.0 && v >= -feas_tol {
                self.values[p] = 0.0;
            }
        }
    }

    fn refactor(&mut self, lp: &ParametricLp, feas_tol: f64) -> Result<()> {
        self.factor = FactorizedBasis::factor(&lp.constraints, &self.basis)?;
        self.refactorizations += 1;
        self.recompute_values(lp, feas_tol);
        Ok(())
    }
}

/// Starting basis: all free columns, then the sign-of-rhs `eps` column per
/// measurement row (`eps+` on ties).
pub fn init_basis(lp: &ParametricLp) -> Result<SimplexState> {
    let r = lp.rows();
    let meta = &lp.meta;
    let m = meta.shape().measurements();
    let z = meta.range(VarClass::Z);
    if z.len() + m != r {
        return Err(Error::Dimension(format!(
            "{} free columns and {m} measurement rows do not cover {r} rows",
            z.len()
        )));
    }
    let mut basis = Vec::with_capacity(r);
    let mut status = vec![ColumnStatus::NonbasicAtZero; lp.cols()];
    for (p, j) in z.enumerate() {
        basis.push(j);
        status[j] = ColumnStatus::FreeInBasis(p);
    }
    let first_eps_row = r - m;
    for i in 0..m {
        let class = if lp.rhs[first_eps_row + i] >= 0.0 {
            VarClass::EpsPlus
        } else {
            VarClass::EpsMinus
        };
        let j = meta.column(class, i);
        status[j] = ColumnStatus::Basic(basis.len());
        basis.push(j);
    }
    let factor = FactorizedBasis::factor(&lp.constraints, &basis)?;
    let mut state = SimplexState {
        basis,
        status,
        values: Vec::new(),
        mu_low: 0.0,
        mu_high: f64::INFINITY,
        pivots: 0,
        refactorizations: 1,
        last_degenerate: false,
        min_basic_value: f64::INFINITY,
        factor,
    };
    state.recompute_values(lp, SimplexOptions::default().feas_tol);
    Ok(state)
}

/// Dual vectors and reduced costs split into their constant and `mu` parts:
/// `d_j(mu) = rc_penalty[j] + mu * rc_sparsity[j]` (zero for basic columns).
#[derive(Clone, Debug)]
pub struct Pricing {
    pub dual_penalty: Vec<f64>,
    pub dual_sparsity: Vec<f64>,
    pub rc_penalty: Vec<f64>,
    pub rc_sparsity: Vec<f64>,
    pub mu_low: f64,
    pub mu_high: f64,
}

impl Pricing {
    pub fn reduced_cost(&self, j: usize, mu: f64) -> f64 {
        self.rc_penalty[j] + mu * self.rc_sparsity[j]
    }

    /// The `mu` below which column `j`'s reduced cost drops under `-opt_tol`,
    /// if it rises with `mu`.
    fn breakpoint(&self, j: usize, opt_tol: f64) -> Option<f64> {
        let s = self.rc_sparsity[j];
        (s > SLOPE_TOL).then(|| (-opt_tol - self.rc_penalty[j]) / s)
    }
}

const SLOPE_TOL: f64 = 1e-12;

/// Optimality interval of the current basis.
pub fn mu_interval(
    state: &SimplexState,
    lp: &ParametricLp,
    opts: &SimplexOptions,
) -> Result<Pricing> {
    let cb_pen: Vec<f64> = state.basis.iter().map(|&j| lp.cost_penalty[j]).collect();
    let cb_spa: Vec<f64> = state.basis.iter().map(|&j| lp.cost_sparsity[j]).collect();
    let dual_penalty = state.factor.solve_transpose(&cb_pen);
    let dual_sparsity = state.factor.solve_transpose(&cb_spa);
    if dual_penalty
        .iter()
        .chain(&dual_sparsity)
        .any(|v| !v.is_finite())
    {
        return Err(Error::SingularBasis {
            position: 0,
            pivot: f64::NAN,
        });
    }

    let c = lp.cols();
    let mut rc_penalty = vec![0.0; c];
    let mut rc_sparsity = vec![0.0; c];
    let mut low = 0.0f64;
    let mut high = f64::INFINITY;
    for j in 0..c {
        if state.status[j] != ColumnStatus::NonbasicAtZero {
            continue;
        }
        let (ri, vs) = lp.constraints.col(j);
        let (mut dp, mut ds) = (0.0, 0.0);
        for (&i, &v) in ri.iter().zip(vs) {
            dp += v * dual_penalty[i];
            ds += v * dual_sparsity[i];
        }
        let (p, s) = (lp.cost_penalty[j] - dp, lp.cost_sparsity[j] - ds);
        rc_penalty[j] = p;
        rc_sparsity[j] = s;
        if s > SLOPE_TOL {
            low = low.max((-opt_tol(opts) - p) / s);
        } else if s < -SLOPE_TOL {
            high = high.min((p + opt_tol(opts)) / -s);
        }
    }

    // the zero solution is optimal for every mu >= 0
    if state.values.iter().all(|v| *v == 0.0) {
        low = 0.0;
        high = f64::INFINITY;
    }

    Ok(Pricing {
        dual_penalty,
        dual_sparsity,
        rc_penalty,
        rc_sparsity,
        mu_low: low,
        mu_high: high,
    })
}

fn opt_tol(opts: &SimplexOptions) -> f64 {
    opts.opt_tol
}

/// Column whose reduced cost turns negative just below `mu_low`.
///
/// With `bland` set, the lowest such column index wins; otherwise the column
/// whose reduced cost falls fastest (largest `mu` slope), ties to the lowest
/// index.
pub fn choose_entering(
    state: &SimplexState,
    pricing: &Pricing,
    mu_low: f64,
    bland: bool,
    opts: &SimplexOptions,
) -> Option<usize> {
    let tie = 1e-9 * mu_low.abs().max(1.0);
    let mut best: Option<(usize, f64)> = None;
    for j in 0..pricing.rc_sparsity.len() {
        if state.status[j] != ColumnStatus::NonbasicAtZero {
            continue;
        }
        let Some(bp) = pricing.breakpoint(j, opts.opt_tol) else {
            continue;
        };
        if bp < mu_low - tie {
            continue;
        }
        let slope = pricing.rc_sparsity[j];
        match best {
            None => best = Some((j, slope)),
            Some((_, s)) if !bland && slope > s => best = Some((j, slope)),
            _ => {}
        }
    }
    best.map(|(j, _)| j)
}

#[derive(Clone, Debug, PartialEq)]
pub enum RatioOutcome {
    Leaving {
        position: usize,
        step: f64,
        direction: Vec<f64>,
    },
    Unbounded,
}

/// Primal ratio test for `entering`. Ties go to the lowest basis position;
/// free columns never leave.
pub fn ratio_test(
    state: &SimplexState,
    lp: &ParametricLp,
    entering: usize,
    opts: &SimplexOptions,
) -> RatioOutcome {
    let mut col = vec![0.0; lp.rows()];
    lp.constraints.axpy_col(entering, 1.0, &mut col);
    let w = state.factor.solve(&col);
    let mut best: Option<(usize, f64)> = None;
    for (p, &wp) in w.iter().enumerate() {
        if wp <= opts.piv_tol || state.is_free_position(p) {
            continue;
        }
        let ratio = state.values[p].max(0.0) / wp;
        match best {
            Some((_, r)) if ratio >= r - 1e-12 * r.max(1e-300) => {}
            _ => best = Some((p, ratio)),
        }
    }
    match best {
        Some((position, step)) => RatioOutcome::Leaving {
            position,
            step,
            direction: w,
        },
        None => RatioOutcome::Unbounded,
    }
}

/// Moves `entering` into `position` with primal step `step` along `direction`.
pub fn pivot(
    state: &mut SimplexState,
    lp: &ParametricLp,
    entering: usize,
    position: usize,
    step: f64,
    direction: &[f64],
    opts: &SimplexOptions,
) -> Result<usize> {
    let leaving = state.basis[position];
    for (v, w) in state.values.iter_mut().zip(direction) {
        *v -= step * w;
    }
    state.values[position] = step;
    state.basis[position] = entering;
    state.status[leaving] = ColumnStatus::NonbasicAtZero;
    state.status[entering] = if lp.meta.class(entering).is_free() {
        ColumnStatus::FreeInBasis(position)
    } else {
        ColumnStatus::Basic(position)
    };
    state.pivots += 1;
    state.last_degenerate = step <= opts.feas_tol;
    if state.factor.eta_count() + 1 >= opts.refactor_every {
        state.refactor(lp, opts.feas_tol)?;
    } else {
        state.factor.update(position, direction)?;
        state.clamp(opts.feas_tol);
    }
    debug_assert!(
        state.min_basic_value >= -1e-9,
        "basic value {} after pivot {}",
        state.min_basic_value,
        state.pivots
    );
    Ok(leaving)
}

/// Runs the homotopy from `mu = ∞` until the `eps` part vanishes.
pub fn solve(lp: &ParametricLp, opts: &SimplexOptions) -> SolveReport {
    let start = Instant::now();
    let max_pivots = opts.max_pivots.unwrap_or(20 * (lp.rows() + 1));
    let mut trace = Vec::new();

    let mut state = match init_basis(lp) {
        Ok(s) => s,
        Err(e) => return failure(lp, start, 0, e.to_string()),
    };
    let mut mu = f64::INFINITY;
    let mut message = None;

    let status = loop {
        if state.max_basic_eps(lp) <= opts.eps_tol {
            break Status::Optimal;
        }
        if state.pivots >= max_pivots {
            break Status::MaxPivots;
        }
        if opts.time_limit.is_some_and(|t| start.elapsed() > t) {
            break Status::TimeLimit;
        }
        let pricing = match mu_interval(&state, lp, opts) {
            Ok(p) => p,
            Err(e) => {
                message = Some(e.to_string());
                break Status::NumericalFailure;
            }
        };
        let mu_low = pricing.mu_low.min(mu);
        state.mu_low = mu_low;
        state.mu_high = pricing.mu_high.max(mu_low);
        if mu_low <= 0.0 {
            message = Some(format!(
                "mu reached zero with residual {:e}",
                state.max_basic_eps(lp)
            ));
            break Status::NumericalFailure;
        }
        let Some(entering) = choose_entering(&state, &pricing, mu_low, state.last_degenerate, opts)
        else {
            message = Some(format!("no entering column at mu = {mu_low:e}"));
            break Status::NumericalFailure;
        };
        let (position, step, direction) = match ratio_test(&state, lp, entering, opts) {
            RatioOutcome::Leaving {
                position,
                step,
                direction,
            } => (position, step, direction),
            RatioOutcome::Unbounded => {
                message = Some(format!("unbounded ray on column {entering}"));
                break Status::NumericalFailure;
            }
        };
        let leaving = match pivot(&mut state, lp, entering, position, step, &direction, opts) {
            Ok(l) => l,
            Err(e) => {
                message = Some(e.to_string());
                break Status::NumericalFailure;
            }
        };
        mu = mu_low;
        let v = state.lp_vector(lp.cols());
        trace.push(PivotTrace {
            pivot: state.pivots,
            mu,
            entering,
            leaving,
            objective: lp.objective_at(mu, &v),
        });
    };

    let v = state.lp_vector(lp.cols());
    let sol = match extract_solution(lp, &v) {
        Ok(s) => s,
        Err(e) => return failure(lp, start, state.pivots, e.to_string()),
    };
    let signal = sol.signal.flat();
    SolveReport {
        solver: "psimplex".into(),
        status,
        signal_shape: signal_shape(lp),
        signal: signal.as_slice().to_vec(),
        objective: sol.split_l1,
        final_mu: Some(if mu.is_finite() { mu } else { state.mu_low }),
        steps: state.pivots,
        refactorizations: state.refactorizations,
        seconds: start.elapsed().as_secs_f64(),
        max_abs_eps: sol.max_abs_eps,
        factor_nnz: None,
        message,
        min_basic_value: Some(state.min_basic_value),
        lp_solution: v,
        pivot_trace: trace,
        ipm_log: Vec::new(),
    }
}

pub(crate) fn signal_shape(lp: &ParametricLp) -> (usize, usize) {
    match lp.shape() {
        crate::lp::LpShape::Vector { n, .. } => (n, 1),
        crate::lp::LpShape::Kcs { n1, n2, .. } => (n1, n2),
    }
}

fn failure(lp: &ParametricLp, start: Instant, steps: usize, msg: String) -> SolveReport {
    SolveReport {
        solver: "psimplex".into(),
        status: Status::NumericalFailure,
        signal: vec![0.0; lp.shape().signal_len()],
        signal_shape: signal_shape(lp),
        objective: f64::NAN,
        final_mu: None,
        steps,
        refactorizations: 0,
        seconds: start.elapsed().as_secs_f64(),
        max_abs_eps: f64::NAN,
        factor_nnz: None,
        message: Some(msg),
        min_basic_value: None,
        lp_solution: Vec::new(),
        pivot_trace: Vec::new(),
        ipm_log: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::VectorInstance;
    use crate::lp::build_vector_lp;
    use nalgebra::{DMatrix, DVector};

    fn lp_for(rows: usize, cols: usize, a: &[f64], y: &[f64]) -> ParametricLp {
        build_vector_lp(&VectorInstance {
            a: DMatrix::from_row_slice(rows, cols, a),
            y: DVector::from_column_slice(y),
            x0: DVector::zeros(cols),
            seed: 0,
        })
    }

    fn basis_classes(lp: &ParametricLp, s: &SimplexState) -> Vec<(VarClass, usize)> {
        s.basis.iter().map(|&j| lp.meta.locate(j)).collect()
    }

    #[test]
    fn initial_basis_follows_sign_of_rhs() {
        let lp = lp_for(1, 2, &[1.0, 2.0], &[2.0]);
        let s = init_basis(&lp).unwrap();
        assert_eq!(basis_classes(&lp, &s), vec![(VarClass::EpsPlus, 0)]);
        assert_eq!(s.values, vec![2.0]);

        let lp = lp_for(2, 2, &[1.0, 0.0, 0.0, 1.0], &[5.0, 0.0]);
        let s = init_basis(&lp).unwrap();
        assert_eq!(
            basis_classes(&lp, &s),
            vec![(VarClass::EpsPlus, 0), (VarClass::EpsPlus, 1)]
        );
        assert_eq!(s.values, vec![5.0, 0.0]);

        let lp = lp_for(2, 2, &[1.0, 0.0, 0.0, 1.0], &[-1.0, 3.0]);
        let s = init_basis(&lp).unwrap();
        assert_eq!(
            basis_classes(&lp, &s),
            vec![(VarClass::EpsMinus, 0), (VarClass::EpsPlus, 1)]
        );
        assert_eq!(s.values, vec![1.0, 3.0]);
    }

    #[test]
    fn interval_on_one_by_two() {
        let opts = SimplexOptions::default();
        let lp = lp_for(1, 2, &[1.0, 2.0], &[2.0]);
        let s = init_basis(&lp).unwrap();
        let p = mu_interval(&s, &lp, &opts).unwrap();
        assert_eq!(p.dual_penalty, vec![1.0]);
        // x+_j: mu - a_j, x-_j: mu + a_j, eps-: 2
        let x1p = lp.meta.column(VarClass::XPlus, 0);
        let x2p = lp.meta.column(VarClass::XPlus, 1);
        let x2m = lp.meta.column(VarClass::XMinus, 1);
        let em = lp.meta.column(VarClass::EpsMinus, 0);
        assert_eq!(p.reduced_cost(x1p, 3.0), 2.0);
        assert_eq!(p.reduced_cost(x2p, 3.0), 1.0);
        assert_eq!(p.reduced_cost(x2m, 3.0), 5.0);
        assert_eq!(p.reduced_cost(em, 0.5), 2.0);
        assert!((p.mu_low - 2.0).abs() < 1e-8);
        assert_eq!(p.mu_high, f64::INFINITY);

        let entering = choose_entering(&s, &p, p.mu_low, false, &opts).unwrap();
        assert_eq!(entering, x2p);

        let RatioOutcome::Leaving {
            position,
            step,
            direction,
        } = ratio_test(&s, &lp, entering, &opts)
        else {
            panic!("unbounded")
        };
        assert_eq!((position, step), (0, 1.0));
        assert_eq!(direction, vec![2.0]);

        let mut s = s;
        pivot(&mut s, &lp, entering, position, step, &direction, &opts).unwrap();
        let p = mu_interval(&s, &lp, &opts).unwrap();
        assert!(p.mu_low <= 1e-8);
        assert!((p.mu_high - 2.0).abs() < 1e-8);
    }

    #[test]
    fn zero_rhs_interval_is_everything() {
        let lp = lp_for(1, 2, &[1.0, 2.0], &[0.0]);
        let s = init_basis(&lp).unwrap();
        let p = mu_interval(&s, &lp, &SimplexOptions::default()).unwrap();
        assert_eq!((p.mu_low, p.mu_high), (0.0, f64::INFINITY));
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        // both x+ columns bind at mu = 1
        let opts = SimplexOptions::default();
        let lp = lp_for(1, 2, &[1.0, 1.0], &[3.0]);
        let s = init_basis(&lp).unwrap();
        let p = mu_interval(&s, &lp, &opts).unwrap();
        assert_eq!(choose_entering(&s, &p, p.mu_low, false, &opts), Some(0));
        assert_eq!(choose_entering(&s, &p, p.mu_low, true, &opts), Some(0));
    }

    #[test]
    fn degenerate_row_wins_ratio_test() {
        let opts = SimplexOptions::default();
        let lp = lp_for(2, 2, &[1.0, 0.0, 1.0, 1.0], &[5.0, 0.0]);
        let s = init_basis(&lp).unwrap();
        let x1p = lp.meta.column(VarClass::XPlus, 0);
        match ratio_test(&s, &lp, x1p, &opts) {
            RatioOutcome::Leaving { position, step, .. } => assert_eq!((position, step), (1, 0.0)),
            RatioOutcome::Unbounded => panic!(),
        }
    }

    #[test]
    fn identity_ratio_test() {
        let opts = SimplexOptions::default();
        let lp = lp_for(2, 2, &[1.0, 0.0, 0.0, 1.0], &[5.0, 0.0]);
        let s = init_basis(&lp).unwrap();
        let x1p = lp.meta.column(VarClass::XPlus, 0);
        match ratio_test(&s, &lp, x1p, &opts) {
            RatioOutcome::Leaving { position, step, .. } => assert_eq!((position, step), (0, 5.0)),
            RatioOutcome::Unbounded => panic!(),
        }
    }

    #[test]
    fn solve_small_cases() {
        let opts = SimplexOptions::default();
        let r = solve(&lp_for(1, 2, &[1.0, 2.0], &[2.0]), &opts);
        assert_eq!(r.status, Status::Optimal);
        assert_eq!(r.steps, 1);
        assert!((r.signal[0]).abs() < 1e-12 && (r.signal[1] - 1.0).abs() < 1e-12);
        assert!((r.objective - 1.0).abs() < 1e-12);

        let r = solve(&lp_for(2, 2, &[1.0, 0.0, 0.0, 1.0], &[5.0, 0.0]), &opts);
        assert_eq!(r.status, Status::Optimal);
        assert_eq!(r.steps, 1);
        assert_eq!(r.signal, vec![5.0, 0.0]);

        let r = solve(&lp_for(1, 2, &[1.0, 2.0], &[0.0]), &opts);
        assert_eq!(r.status, Status::Optimal);
        assert_eq!(r.steps, 0);
        assert_eq!(r.signal, vec![0.0, 0.0]);
        assert_eq!(r.trace_csv(), "pivot,mu,entering,leaving,objective\n");
    }

    #[test]
    fn pivot_limit_is_reported() {
        let opts = SimplexOptions {
            max_pivots: Some(0),
            ..SimplexOptions::default()
        };
        let r = solve(&lp_for(1, 2, &[1.0, 2.0], &[2.0]), &opts);
        assert_eq!(r.status, Status::MaxPivots);
    }
}
