//! Infeasible primal-dual path-following method for `min cᵀv, A v = b, v ≥ 0`.
//!
//! Each iteration solves the normal equations `A D Aᵀ Δw = rhs` with
//! `D = diag(v / s)` and a fixed centering parameter. Primal and dual steps
//! are taken separately at a fraction of the distance to the boundary, then
//! shortened if needed so the complementarity measure `vᵀs / n` falls by at
//! least a fixed factor.

pub mod cholesky;
pub mod ordering;

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::lp::{extract_solution, ParametricLp, VarClass};
use crate::report::{IpmLog, SolveReport, Status};
use crate::simplex::signal_shape;
use crate::sparse::{SparseMatrix, TripletBuilder};

use cholesky::NormalSolver;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StandardMode {
    /// `eps` dropped, `A x = y` enforced, cost one on every `x` part.
    BasisPursuit,
    /// All columns kept with cost `c_D + mu c_P`.
    FixedMu(f64),
}

/// `min cᵀv, A v = b, v ≥ 0`, with the LP column behind each variable.
#[derive(Clone, Debug)]
pub struct StandardLp {
    pub c: Vec<f64>,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    /// `(lp column, sign)`: LP value `+= sign * v`.
    pub col_map: Vec<(usize, f64)>,
}

impl StandardLp {
    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }

    /// Maps a standard-form point back to the LP column space.
    pub fn to_lp_vector(&self, v: &[f64], lp_cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; lp_cols];
        for (&(j, sign), &x) in self.col_map.iter().zip(v) {
            out[j] += sign * x;
        }
        out
    }
}

/// Free `z` columns are split into `z+ - z-`.
pub fn to_standard_form(lp: &ParametricLp, mode: StandardMode) -> StandardLp {
    let meta = &lp.meta;
    let mut col_map = Vec::new();
    let mut c = Vec::new();
    for j in meta.range(VarClass::Z) {
        col_map.push((j, 1.0));
        c.push(0.0);
    }
    for j in meta.range(VarClass::Z) {
        col_map.push((j, -1.0));
        c.push(0.0);
    }
    let keep_eps = matches!(mode, StandardMode::FixedMu(_));
    for class in [
        VarClass::XPlus,
        VarClass::XMinus,
        VarClass::EpsPlus,
        VarClass::EpsMinus,
    ] {
        if class.is_eps() && !keep_eps {
            continue;
        }
        for j in meta.range(class) {
            col_map.push((j, 1.0));
            c.push(match mode {
                StandardMode::BasisPursuit => 1.0,
                StandardMode::FixedMu(mu) => lp.cost_penalty[j] + mu * lp.cost_sparsity[j],
            });
        }
    }

    let src = &lp.constraints;
    let nnz: usize = col_map.iter().map(|&(j, _)| src.col_nnz(j)).sum();
    let mut t = TripletBuilder::with_capacity(src.rows(), col_map.len(), nnz);
    for (k, &(j, sign)) in col_map.iter().enumerate() {
        let (rows, vals) = src.col(j);
        for (&i, &v) in rows.iter().zip(vals) {
            t.push(i, k, sign * v);
        }
    }
    StandardLp {
        c,
        a: t.build(),
        b: lp.rhs.clone(),
        col_map,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IpmOptions {
    pub sigma: f64,
    pub step_fraction: f64,
    /// Required complementarity reduction per accepted iteration.
    pub min_decrease: f64,
    /// Lower bound on `v_j s_j / mu` kept along the iterates.
    pub neighborhood: f64,
    pub tol: f64,
    pub max_iterations: usize,
    /// Normal matrices with fewer rows are factored densely.
    pub dense_below: usize,
    /// Proximal weight on free variables recovered from split pairs.
    pub free_regularization: f64,
    /// Cap on preconditioned CG steps refining each normal-equation solve.
    pub cg_iterations: usize,
    pub time_limit: Option<Duration>,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            sigma: 0.1,
            step_fraction: 0.99995,
            min_decrease: 0.99,
            neighborhood: 1e-5,
            tol: 1e-8,
            max_iterations: 200,
            dense_below: 400,
            cg_iterations: 50,
            free_regularization: 1e-3,
            time_limit: None,
        }
    }
}

/// Current primal, dual and slack vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct IpmIterate {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub s: Vec<f64>,
}

impl IpmIterate {
    pub fn complementarity(&self) -> f64 {
        dot(&self.v, &self.s) / self.v.len().max(1) as f64
    }
}

/// Outcome of a standard-form solve.
#[derive(Clone, Debug)]
pub struct IpmResult {
    pub status: Status,
    pub iterate: IpmIterate,
    pub iterations: usize,
    pub factor_nnz: usize,
    pub sparse_factor: bool,
    pub log: Vec<IpmLog>,
    pub message: Option<String>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned conjugate gradients from `x = precond(b)`, stopping once the
/// residual norm is at most `tol`.
fn pcg(
    mul: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let mut x = precond(b);
    let mx = mul(&x);
    let mut r: Vec<f64> = b.iter().zip(&mx).map(|(b, m)| b - m).collect();
    let mut best = (norm(&r), x.clone());
    if best.0 <= tol {
        return x;
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let q = mul(&p);
        let pq = dot(&p, &q);
        if !(pq > 0.0) || !rz.is_finite() {
            break;
        }
        let alpha = rz / pq;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let rn = norm(&r);
        if rn < best.0 {
            best = (rn, x.clone());
        }
        if rn <= tol {
            break;
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    best.1
}

/// Largest `alpha ≤ 1` with `x + alpha dx ≥ 0`, times `fraction`.
fn step_to_boundary(x: &[f64], dx: &[f64], fraction: f64) -> f64 {
    let mut alpha = f64::INFINITY;
    for (&xi, &di) in x.iter().zip(dx) {
        if di < 0.0 {
            alpha = alpha.min(-xi / di);
        }
    }
    (fraction * alpha).min(1.0)
}

struct Step {
    dw: Vec<f64>,
    dx: Vec<f64>,
    ds: Vec<f64>,
    ap: f64,
    ad: f64,
}

enum StepFailure {
    Factorization(Error),
    NonFinite,
    Inaccurate,
    Collapsed,
}

/// The current iterate with its residuals; `x` holds bounded then free parts.
struct Point<'a> {
    a: &'a SparseMatrix,
    solver: &'a NormalSolver,
    x: &'a [f64],
    s: &'a [f64],
    rp: &'a [f64],
    rd: &'a [f64],
    mu: f64,
    target_res: f64,
}

impl Point<'_> {
    /// Newton direction toward complementarity `sigma mu` with free-variable
    /// weight `1 / rho` and at most `cg_iterations` refinement steps, and step
    /// lengths that pass the acceptance rule.
    fn step(
        &self,
        rho: f64,
        sigma: f64,
        cg_iterations: usize,
        opts: &IpmOptions,
    ) -> std::result::Result<Step, StepFailure> {
        let (a, x, s, mu) = (self.a, self.x, self.s, self.mu);
        let (nb, n) = (s.len(), x.len());
        let d: Vec<f64> = (0..n)
            .map(|j| if j < nb { x[j] / s[j] } else { 1.0 / rho })
            .collect();
        let factor = self
            .solver
            .factor(a, &d)
            .map_err(StepFailure::Factorization)?;
        // the factor preconditions CG on the exact normal matrix; the CG
        // residual equals the primal residual of the resulting direction
        let normal_mul = |y: &[f64]| {
            let mut t = a.tr_mul_vec(y);
            for (tj, dj) in t.iter_mut().zip(&d) {
                *tj *= dj;
            }
            a.mul_vec(&t)
        };
        let target: Vec<f64> = (0..nb).map(|j| sigma * mu - x[j] * s[j]).collect();
        let mut dominant = vec![false; n];
        for &j in factor.dominant_columns() {
            dominant[j] = true;
        }
        // dx = g + D Aᵀ dw on the eliminated columns
        let g: Vec<f64> = (0..n)
            .map(|j| {
                if dominant[j] {
                    0.0
                } else if j < nb {
                    target[j] / s[j] - d[j] * self.rd[j]
                } else {
                    -d[j] * self.rd[j]
                }
            })
            .collect();
        let ag = a.mul_vec(&g);
        let rhs: Vec<f64> = self.rp.iter().zip(&ag).map(|(p, q)| p - q).collect();
        let (dw, dx_dominant) = if factor.dominant_columns().is_empty() {
            let dw = pcg(
                &normal_mul,
                |v| factor.solve(v),
                &rhs,
                self.target_res,
                cg_iterations,
            );
            (dw, Vec::new())
        } else {
            // dominant columns stay in the system as
            // aⱼᵀ dw − dxⱼ / dⱼ = rdⱼ − targetⱼ / xⱼ
            let h: Vec<f64> = factor
                .dominant_columns()
                .iter()
                .map(|&j| self.rd[j] - if j < nb { target[j] / x[j] } else { 0.0 })
                .collect();
            factor.solve_partitioned(&rhs, &h)
        };
        let atdw = a.tr_mul_vec(&dw);
        let mut dx: Vec<f64> = (0..n).map(|j| g[j] + d[j] * atdw[j]).collect();
        for (&j, &v) in factor.dominant_columns().iter().zip(&dx_dominant) {
            dx[j] = v;
        }
        let ds: Vec<f64> = (0..nb)
            .map(|j| {
                if dominant[j] {
                    (target[j] - s[j] * dx[j]) / x[j]
                } else {
                    self.rd[j] - atdw[j]
                }
            })
            .collect();
        if dw.iter().chain(&dx).chain(&ds).any(|v| !v.is_finite()) {
            return Err(StepFailure::NonFinite);
        }
        // the new primal residual is (1 - ap) rp + ap (rp - A dx), so a
        // direction may add error up to the larger of the residual it removes
        // and half the stopping tolerance
        let adx = a.mul_vec(&dx);
        let error = norm(
            &self
                .rp
                .iter()
                .zip(&adx)
                .map(|(p, q)| p - q)
                .collect::<Vec<_>>(),
        );
        if error > norm(self.rp).max(50.0 * self.target_res) {
            return Err(StepFailure::Inaccurate);
        }

        // accept when mu drops enough and every product stays near the path
        let acceptable = |ap: f64, ad: f64| {
            if nb == 0 {
                return true;
            }
            let (mut sum, mut least) = (0.0, f64::INFINITY);
            for j in 0..nb {
                let p = (x[j] + ap * dx[j]) * (s[j] + ad * ds[j]);
                sum += p;
                least = least.min(p);
            }
            let mu_new = sum / nb as f64;
            mu_new <= opts.min_decrease * mu && least >= opts.neighborhood * mu_new
        };
        let mut ap = step_to_boundary(&x[..nb], &dx[..nb], opts.step_fraction);
        let mut ad = step_to_boundary(s, &ds, opts.step_fraction);
        if !acceptable(ap, ad) {
            let mut alpha = ap.min(ad);
            while alpha > 1e-12 && !acceptable(alpha, alpha) {
                alpha *= 0.5;
            }
            if !acceptable(alpha, alpha) {
                return Err(StepFailure::Collapsed);
            }
            ap = alpha;
            ad = alpha;
        }
        Ok(Step { dw, dx, ds, ap, ad })
    }
}

/// Split pairs `(plus, minus)`: the two columns carry opposite signs of one
/// LP column and opposite costs.
pub fn split_pairs(slp: &StandardLp) -> Vec<(usize, usize)> {
    let width = slp.col_map.iter().map(|&(j, _)| j + 1).max().unwrap_or(0);
    let mut plus = vec![usize::MAX; width];
    for (k, &(j, sign)) in slp.col_map.iter().enumerate() {
        if sign > 0.0 {
            plus[j] = k;
        }
    }
    slp.col_map
        .iter()
        .enumerate()
        .filter_map(|(k, &(j, sign))| {
            let p = plus[j];
            (sign < 0.0 && p != usize::MAX && slp.c[p] == -slp.c[k]).then_some((p, k))
        })
        .collect()
}

/// Solves a standard-form LP.
///
/// Split pairs are merged back into free variables internally and handled by
/// a proximal term `rho/2 |z - z_k|²`, because a split pair has no strictly
/// feasible dual slack and drives the normal matrix to breakdown. The returned
/// iterate is in `slp` coordinates with each pair as `(max(z, 0), max(-z, 0))`
/// and zero pair slacks.
pub fn ipm_solve_standard(slp: &StandardLp, opts: &IpmOptions) -> Result<IpmResult> {
    let start = Instant::now();
    let r = slp.rows();
    let pairs = split_pairs(slp);
    let mut paired = vec![false; slp.cols()];
    for &(p, m) in &pairs {
        paired[p] = true;
        paired[m] = true;
    }
    let bounded: Vec<usize> = (0..slp.cols()).filter(|&k| !paired[k]).collect();
    let (nb, nf) = (bounded.len(), pairs.len());
    let order: Vec<usize> = bounded
        .iter()
        .copied()
        .chain(pairs.iter().map(|p| p.0))
        .collect();
    let a = slp.a.select_cols(&order);
    let c: Vec<f64> = order.iter().map(|&k| slp.c[k]).collect();
    let n = nb + nf;
    let rho = opts.free_regularization;

    let solver = NormalSolver::new(&a, opts.dense_below);
    // x holds v on bounded columns then z on free ones
    let mut x: Vec<f64> = (0..n).map(|j| if j < nb { 1.0 } else { 0.0 }).collect();
    let mut s = vec![1.0; nb];
    let mut w = vec![0.0; r];
    let bnorm = norm(&slp.b);
    let cnorm = norm(&slp.c);
    let mut log = Vec::new();
    let mut message = None;

    let mut iterations = 0;
    let status = loop {
        let ax = a.mul_vec(&x);
        let rp: Vec<f64> = slp.b.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let atw = a.tr_mul_vec(&w);
        let rd: Vec<f64> = (0..n)
            .map(|j| c[j] - atw[j] - if j < nb { s[j] } else { 0.0 })
            .collect();
        let primal_obj = dot(&c, &x);
        let dual_obj = dot(&slp.b, &w);
        let mu = if nb == 0 {
            0.0
        } else {
            dot(&x[..nb], &s) / nb as f64
        };
        // each free residual stands for two split columns
        let rd_sq = dot(&rd[..nb], &rd[..nb]) + 2.0 * dot(&rd[nb..], &rd[nb..]);
        let entry = IpmLog {
            iter: iterations,
            primal_res: norm(&rp) / (1.0 + bnorm),
            dual_res: rd_sq.sqrt() / (1.0 + cnorm),
            gap: (primal_obj - dual_obj).abs() / (1.0 + primal_obj.abs() + dual_obj.abs()),
            complementarity: mu,
        };
        let converged =
            entry.primal_res <= opts.tol && entry.dual_res <= opts.tol && entry.gap <= opts.tol;
        log.push(entry);
        if converged {
            break Status::Optimal;
        }
        if iterations >= opts.max_iterations {
            break Status::MaxIterations;
        }
        if opts.time_limit.is_some_and(|t| start.elapsed() > t) {
            break Status::TimeLimit;
        }

        let point = Point {
            a: &a,
            solver: &solver,
            x: &x,
            s: &s,
            rp: &rp,
            rd: &rd,
            mu,
            target_res: 1e-2 * opts.tol * (1.0 + bnorm),
        };
        // fallbacks: the bare factor solve, since CG can drift along a
        // near-null direction late in the run; then stronger centering; then
        // a rescaled proximal weight
        let cg = opts.cg_iterations;
        let attempts = [
            (rho, opts.sigma, cg),
            (rho, opts.sigma, 0),
            (rho, opts.sigma.max(0.5), cg),
            (rho, opts.sigma.max(0.9), cg),
            (10.0 * rho, opts.sigma, cg),
            (0.1 * rho, opts.sigma, cg),
            (100.0 * rho, opts.sigma.max(0.5), cg),
        ];
        let mut failure = StepFailure::Collapsed;
        let mut step = None;
        for (rho_try, sigma, cg_iterations) in attempts {
            match point.step(rho_try, sigma, cg_iterations, opts) {
                Ok(st) => {
                    step = Some(st);
                    break;
                }
                Err(StepFailure::Factorization(e)) => {
                    failure = StepFailure::Factorization(e);
                    break;
                }
                Err(f) => {
                    if !matches!(failure, StepFailure::NonFinite) {
                        failure = f;
                    }
                }
            }
        }
        let Some(Step { dw, dx, ds, ap, ad }) = step else {
            message = Some(match failure {
                StepFailure::Factorization(e) => e.to_string(),
                StepFailure::NonFinite => "non-finite search direction".into(),
                StepFailure::Inaccurate => {
                    format!("search direction too inaccurate at iteration {iterations}")
                }
                StepFailure::Collapsed => {
                    format!("step length collapsed at iteration {iterations}")
                }
            });
            break Status::NumericalFailure;
        };

        for (xj, dj) in x.iter_mut().zip(&dx) {
            *xj += ap * dj;
        }
        for (sj, dj) in s.iter_mut().zip(&ds) {
            *sj += ad * dj;
        }
        for (wi, di) in w.iter_mut().zip(&dw) {
            *wi += ad * di;
        }
        iterations += 1;
    };

    let mut iterate = IpmIterate {
        v: vec![0.0; slp.cols()],
        w,
        s: vec![0.0; slp.cols()],
    };
    for (j, &k) in bounded.iter().enumerate() {
        iterate.v[k] = x[j];
        iterate.s[k] = s[j];
    }
    for (f, &(p, m)) in pairs.iter().enumerate() {
        let z = x[nb + f];
        iterate.v[p] = z.max(0.0);
        iterate.v[m] = (-z).max(0.0);
    }
    Ok(IpmResult {
        status,
        iterate,
        iterations,
        factor_nnz: solver.factor_nnz(),
        sparse_factor: solver.is_sparse(),
        log,
        message,
    })
}

/// Solves `lp` through its standard form and reports in LP terms.
pub fn ipm_solve(lp: &ParametricLp, mode: StandardMode, opts: &IpmOptions) -> SolveReport {
    let start = Instant::now();
    let slp = to_standard_form(lp, mode);
    let result = ipm_solve_standard(&slp, opts);
    let seconds = start.elapsed().as_secs_f64();
    let (status, res) = match result {
        Ok(res) => (res.status, Some(res)),
        Err(_) => (Status::NumericalFailure, None),
    };
    let lp_solution = match &res {
        Some(r) => slp.to_lp_vector(&r.iterate.v, lp.cols()),
        None => vec![0.0; lp.cols()],
    };
    let sol = extract_solution(lp, &lp_solution).expect("standard form maps onto LP columns");
    let final_mu = match mode {
        StandardMode::BasisPursuit => None,
        StandardMode::FixedMu(mu) => Some(mu),
    };
    SolveReport {
        solver: "ipm".into(),
        status,
        signal: sol.signal.flat().as_slice().to_vec(),
        signal_shape: signal_shape(lp),
        objective: sol.split_l1,
        final_mu,
        steps: res.as_ref().map_or(0, |r| r.iterations),
        refactorizations: res.as_ref().map_or(0, |r| r.iterations),
        seconds,
        max_abs_eps: sol.max_abs_eps,
        factor_nnz: res.as_ref().map(|r| r.factor_nnz),
        message: res.as_ref().and_then(|r| r.message.clone()),
        min_basic_value: None,
        lp_solution,
        pivot_trace: Vec::new(),
        ipm_log: res.map(|r| r.log).unwrap_or_default(),
    }
}

/// True when no `x+`/`x-` pair is simultaneously above `tol` in `lp_solution`.
pub fn split_pairs_exclusive(lp: &ParametricLp, lp_solution: &[f64], tol: f64) -> bool {
    let plus = &lp_solution[lp.meta.range(VarClass::XPlus)];
    let minus = &lp_solution[lp.meta.range(VarClass::XMinus)];
    plus.iter().zip(minus).all(|(p, m)| p.min(*m) <= tol)
}
