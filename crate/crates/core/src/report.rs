use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    MaxPivots,
    MaxIterations,
    NumericalFailure,
    /// Stopped by the wall-clock limit; bench records these as censored.
    TimeLimit,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::MaxPivots => "max_pivots",
            Status::MaxIterations => "max_iterations",
            Status::NumericalFailure => "numerical_failure",
            Status::TimeLimit => "time_limit",
        }
    }
}

/// One row of the per-pivot trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotTrace {
    pub pivot: usize,
    pub mu: f64,
    pub entering: usize,
    pub leaving: usize,
    /// Parametric objective `(c_D + mu c_P)ᵀ v` after the pivot.
    pub objective: f64,
}

/// One row of the interior-point iteration log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpmLog {
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub gap: f64,
    pub complementarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: String,
    pub status: Status,
    /// Recovered signal, flattened column-major for matrix signals.
    pub signal: Vec<f64>,
    /// `(rows, cols)` of the signal; `cols == 1` for vector problems.
    pub signal_shape: (usize, usize),
    /// `1ᵀ(x+ + x-)` at termination.
    pub objective: f64,
    pub final_mu: Option<f64>,
    /// Simplex pivots or interior-point iterations.
    pub steps: usize,
    pub refactorizations: usize,
    pub seconds: f64,
    pub max_abs_eps: f64,
    pub factor_nnz: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
    /// Smallest basic value seen across all pivots (simplex only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub min_basic_value: Option<f64>,
    /// Full LP variable vector in the solver's own column space.
    #[serde(skip)]
    pub lp_solution: Vec<f64>,
    #[serde(skip)]
    pub pivot_trace: Vec<PivotTrace>,
    #[serde(skip)]
    pub ipm_log: Vec<IpmLog>,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("pivot,mu,entering,leaving,objective\n");
        for t in &self.pivot_trace {
            out.push_str(&format!(
                "{},{:e},{},{},{:e}\n",
                t.pivot, t.mu, t.entering, t.leaving, t.objective
            ));
        }
        out
    }

    pub fn ipm_log_csv(&self) -> String {
        let mut out = String::from("iter,primal_res,dual_res,gap\n");
        for r in &self.ipm_log {
            out.push_str(&format!(
                "{},{:e},{:e},{:e}\n",
                r.iter, r.primal_res, r.dual_res, r.gap
            ));
        }
        out
    }
}
