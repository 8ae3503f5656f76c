//! Benchmark harness: sweeps `k`, runs every selected solver on shared
//! instances, and writes per-trial and aggregate CSV tables.
//!
//! Trial `t` uses seed `base_seed + t` for every `k`, and all solvers within
//! one `(k, trial)` see the same `A`, `B` and ground-truth signal. Timing
//! columns cover the solve call only; instance generation and LP construction
//! are timed separately into `aux.csv`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{check_recovery, RECOVERY_TOL};
use crate::error::{Error, Result};
use crate::instance::{
    gen_sensing_matrix_with, rng_for, stream, vec, Amplitude, EnsembleKind, KcsInstance,
    SensingEnsemble, VectorInstance,
};
use crate::ipm::{ipm_solve, IpmOptions, StandardMode};
use crate::lp::{build_kcs_lp, build_vector_lp, ParametricLp};
use crate::report::{SolveReport, Status};
use crate::simplex::{self, SimplexOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverId {
    PsimplexVector,
    PsimplexKcs,
    IpmVector,
    IpmKcs,
}

impl SolverId {
    pub const ALL: [SolverId; 4] = [
        SolverId::PsimplexVector,
        SolverId::PsimplexKcs,
        SolverId::IpmVector,
        SolverId::IpmKcs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverId::PsimplexVector => "psimplex_vector",
            SolverId::PsimplexKcs => "psimplex_kcs",
            SolverId::IpmVector => "ipm_vector",
            SolverId::IpmKcs => "ipm_kcs",
        }
    }

    pub fn is_kcs(self) -> bool {
        matches!(self, SolverId::PsimplexKcs | SolverId::IpmKcs)
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sensing matrix used by the vector formulation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorSensing {
    /// `U = B ⊗ A`, the same operator the Kronecker form factors.
    #[default]
    Kron,
    /// An independent `m x n` draw from the same entry law.
    Iid,
}

fn default_trials() -> usize {
    10
}

fn default_solvers() -> Vec<SolverId> {
    SolverId::ALL.to_vec()
}

fn default_time_limit() -> f64 {
    30.0
}

fn default_recovery_tol() -> f64 {
    RECOVERY_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub m1: usize,
    pub m2: usize,
    pub n1: usize,
    pub n2: usize,
    pub k_grid: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverId>,
    #[serde(default)]
    pub seed: u64,
    /// Wall-clock limit per solve, in seconds.
    #[serde(default = "default_time_limit")]
    pub time_limit: f64,
    #[serde(default)]
    pub ensemble: EnsembleKind,
    #[serde(default)]
    pub amplitude: Amplitude,
    #[serde(default)]
    pub vector_sensing: VectorSensing,
    #[serde(default = "default_recovery_tol")]
    pub recovery_tol: f64,
}

impl BenchConfig {
    /// Desk-scale defaults: `16 x 64` on each side.
    pub fn desk(k_grid: Vec<usize>) -> BenchConfig {
        BenchConfig {
            m1: 16,
            m2: 16,
            n1: 64,
            n2: 64,
            k_grid,
            trials: default_trials(),
            solvers: default_solvers(),
            seed: 0,
            time_limit: default_time_limit(),
            ensemble: EnsembleKind::default(),
            amplitude: Amplitude::default(),
            vector_sensing: VectorSensing::default(),
            recovery_tol: RECOVERY_TOL,
        }
    }

    pub fn m(&self) -> usize {
        self.m1 * self.m2
    }

    pub fn n(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 || self.n1 == 0 || self.n2 == 0 {
            return Err(Error::InvalidArgument(
                "all dimensions must be positive".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if let Some(&k) = self.k_grid.iter().find(|&&k| k > self.n()) {
            return Err(Error::InvalidArgument(format!(
                "k = {k} exceeds n = {}",
                self.n()
            )));
        }
        if !(self.time_limit > 0.0) {
            return Err(Error::InvalidArgument("time_limit must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<BenchConfig> {
        let cfg: BenchConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<BenchConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub solver: SolverId,
    pub k: usize,
    pub trial: usize,
    pub seconds: f64,
    pub steps: usize,
    /// Optimal status and exact recovery.
    pub exact: bool,
    pub rel_err: f64,
    pub status: Status,
    pub gen_seconds: f64,
    pub build_seconds: f64,
    pub factor_nnz: Option<usize>,
    pub max_abs_eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub solver: SolverId,
    pub k: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub recovery_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOutput {
    /// Sorted by `(solver, k, trial)`.
    pub records: Vec<BenchRecord>,
    pub aggregates: Vec<Aggregate>,
}

/// Formats like C's `%g`: six significant digits, trailing zeros dropped.
pub fn fmt_g(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa.to_string()), exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim(format!("{v:.decimals$}"))
    }
}

/// The value a reader of the CSV sees.
fn as_written(v: f64) -> f64 {
    fmt_g(v).parse().expect("fmt_g output parses")
}

struct TrialData {
    inst: KcsInstance,
    vector: VectorInstance,
    gen_seconds: f64,
}

fn make_trial(cfg: &BenchConfig, k: usize, trial: usize) -> Result<TrialData> {
    let start = Instant::now();
    let seed = cfg.seed.wrapping_add(trial as u64);
    let inst = KcsInstance::random(
        cfg.m1,
        cfg.n1,
        cfg.m2,
        cfg.n2,
        k,
        cfg.ensemble,
        cfg.amplitude,
        seed,
    )?;
    let vector = match cfg.vector_sensing {
        VectorSensing::Kron => inst.to_vector(),
        VectorSensing::Iid => {
            let a = gen_sensing_matrix_with(
                &SensingEnsemble {
                    kind: cfg.ensemble,
                    rows: cfg.m(),
                    cols: cfg.n(),
                    seed,
                },
                &mut rng_for(seed, stream::SENSING_VECTOR),
            )?;
            VectorInstance::new(a, vec(&inst.x0), seed)?
        }
    };
    Ok(TrialData {
        inst,
        vector,
        gen_seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_solver(solver: SolverId, lp: &ParametricLp, limit: Duration) -> SolveReport {
    match solver {
        SolverId::PsimplexVector | SolverId::PsimplexKcs => simplex::solve(
            lp,
            &SimplexOptions {
                time_limit: Some(limit),
                ..SimplexOptions::default()
            },
        ),
        SolverId::IpmVector | SolverId::IpmKcs => ipm_solve(
            lp,
            StandardMode::BasisPursuit,
            &IpmOptions {
                time_limit: Some(limit),
                ..IpmOptions::default()
            },
        ),
    }
}

fn run_trial(cfg: &BenchConfig, k: usize, trial: usize) -> Result<Vec<BenchRecord>> {
    let data = make_trial(cfg, k, trial)?;
    let x0 = vec(&data.inst.x0);
    let limit = Duration::from_secs_f64(cfg.time_limit);
    let mut lps: [Option<(ParametricLp, f64)>; 2] = [None, None];
    let mut out = Vec::new();
    let mut solvers = cfg.solvers.clone();
    solvers.sort();
    solvers.dedup();
    for solver in solvers {
        let slot = usize::from(solver.is_kcs());
        if lps[slot].is_none() {
            let start = Instant::now();
            let lp = if solver.is_kcs() {
                build_kcs_lp(&data.inst)
            } else {
                build_vector_lp(&data.vector)
            };
            lps[slot] = Some((lp, start.elapsed().as_secs_f64()));
        }
        let (lp, build_seconds) = lps[slot].as_ref().expect("built above");
        let start = Instant::now();
        let report = run_solver(solver, lp, limit);
        let seconds = start.elapsed().as_secs_f64();
        let rec = check_recovery(&report.signal, x0.as_slice(), cfg.recovery_tol)?;
        out.push(BenchRecord {
            solver,
            k,
            trial,
            seconds,
            steps: report.steps,
            exact: report.is_optimal() && rec.exact,
            rel_err: rec.rel_l2_error,
            status: report.status,
            gen_seconds: data.gen_seconds,
            build_seconds: *build_seconds,
            factor_nnz: report.factor_nnz,
            max_abs_eps: report.max_abs_eps,
        });
    }
    Ok(out)
}

/// Runs the sweep on a pool of `threads` workers (0 picks the rayon default).
/// `on_record` is called once per finished `(k, trial)` batch, never
/// concurrently.
pub fn run_bench_with<F>(cfg: &BenchConfig, threads: usize, on_record: F) -> Result<BenchOutput>
where
    F: Fn(&BenchRecord) + Sync,
{
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = cfg
        .k_grid
        .iter()
        .flat_map(|&k| (0..cfg.trials).map(move |t| (k, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let emit = std::sync::Mutex::new(());
    let batches: Vec<Result<Vec<BenchRecord>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(k, t)| {
                let recs = run_trial(cfg, k, t)?;
                let _guard = emit.lock().unwrap_or_else(|e| e.into_inner());
                recs.iter().for_each(&on_record);
                Ok(recs)
            })
            .collect()
    });
    let mut records = Vec::with_capacity(jobs.len() * cfg.solvers.len());
    for b in batches {
        records.extend(b?);
    }
    records.sort_by_key(|r| (r.solver, r.k, r.trial));
    let aggregates = aggregate(&records);
    Ok(BenchOutput {
        records,
        aggregates,
    })
}

pub fn run_bench(cfg: &BenchConfig, threads: usize) -> Result<BenchOutput> {
    run_bench_with(cfg, threads, |_| {})
}

/// Per-`(solver, k)` mean and sample standard deviation of the seconds column
/// as written to CSV, so the table can be recomputed from the file exactly.
pub fn aggregate(records: &[BenchRecord]) -> Vec<Aggregate> {
    let mut sorted: Vec<&BenchRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.solver, r.k, r.trial));
    sorted
        .chunk_by(|a, b| (a.solver, a.k) == (b.solver, b.k))
        .map(|group| {
            let secs: Vec<f64> = group.iter().map(|r| as_written(r.seconds)).collect();
            let (mean, std) = mean_std(&secs);
            let exact = group.iter().filter(|r| r.exact).count();
            Aggregate {
                solver: group[0].solver,
                k: group[0].k,
                mean_seconds: mean,
                std_seconds: std,
                recovery_rate: exact as f64 / group.len() as f64,
            }
        })
        .collect()
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let ss = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub const RECORDS_HEADER: &str = "solver,k,trial,seconds,steps,exact,rel_err";
pub const AGGREGATE_HEADER: &str = "solver,k,mean_seconds,std_seconds,recovery_rate";
pub const AUX_HEADER: &str =
    "solver,k,trial,status,gen_seconds,build_seconds,factor_nnz,max_abs_eps";

pub fn records_csv(records: &[BenchRecord]) -> String {
    let mut out = format!("{RECORDS_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.solver,
            r.k,
            r.trial,
            fmt_g(r.seconds),
            r.steps,
            r.exact,
            fmt_g(r.rel_err)
        ));
    }
    out
}

pub fn aggregate_csv(aggregates: &[Aggregate]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for a in aggregates {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            a.solver,
            a.k,
            fmt_g(a.mean_seconds),
            fmt_g(a.std_seconds),
            fmt_g(a.recovery_rate)
        ));
    }
    out
}

pub fn aux_csv(records: &[BenchRecord]) -> String {
    let mut out = format!("{AUX_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.solver,
            r.k,
            r.trial,
            r.status.as_str(),
            fmt_g(r.gen_seconds),
            fmt_g(r.build_seconds),
            r.factor_nnz.map_or(String::new(), |n| n.to_string()),
            fmt_g(r.max_abs_eps)
        ));
    }
    out
}

/// Writes `records.csv`, `aggregate.csv` and `aux.csv` into `dir`.
pub fn emit_csv(dir: &Path, output: &BenchOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("records.csv", records_csv(&output.records)),
        ("aggregate.csv", aggregate_csv(&output.aggregates)),
        ("aux.csv", aux_csv(&output.records)),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
