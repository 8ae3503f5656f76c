use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use kronsense::analysis::{self, RECOVERY_TOL};
use kronsense::bench::{self, BenchConfig};
use kronsense::instance::{
    gen_sensing_matrix, Amplitude, EnsembleKind, Instance, KcsInstance, SensingEnsemble,
    VectorInstance,
};
use kronsense::ipm::{ipm_solve, IpmOptions, StandardMode};
use kronsense::lp::{build_kcs_lp, build_vector_lp};
use kronsense::report::Status;
use kronsense::simplex::{self, SimplexOptions};

/// Exit status when a solve ends in numerical failure.
const EXIT_NUMERICAL: u8 = 2;

#[derive(Parser)]
#[command(name = "kronsense", version, about = "Sparse recovery by linear programming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance file.
    Gen(GenArgs),
    /// Solve one instance and print the report as JSON.
    Solve(SolveArgs),
    /// Run a benchmark sweep from a JSON config.
    Bench(BenchArgs),
    /// Evaluate the recovery bounds and brute-force RIP checks.
    Check {
        #[command(subcommand)]
        what: CheckCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    Vector,
    Kcs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ensemble {
    Gaussian,
    Rademacher,
}

impl From<Ensemble> for EnsembleKind {
    fn from(e: Ensemble) -> Self {
        match e {
            Ensemble::Gaussian => EnsembleKind::Gaussian,
            Ensemble::Rademacher => EnsembleKind::Rademacher,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Amp {
    Gaussian,
    UnitSigns,
}

impl From<Amp> for Amplitude {
    fn from(a: Amp) -> Self {
        match a {
            Amp::Gaussian => Amplitude::StandardGaussian,
            Amp::UnitSigns => Amplitude::UnitSigns,
        }
    }
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "kcs")]
    form: Form,
    /// Rows of A (the whole matrix for the vector form).
    #[arg(long)]
    m1: usize,
    #[arg(long)]
    n1: usize,
    /// Rows of B; ignored for the vector form.
    #[arg(long, default_value_t = 1)]
    m2: usize,
    #[arg(long, default_value_t = 1)]
    n2: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    ensemble: Ensemble,
    #[arg(long, value_enum, default_value = "gaussian")]
    amplitude: Amp,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverKind {
    Psimplex,
    Ipm,
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "psimplex")]
    solver: SolverKind,
    /// LP formulation; a Kronecker instance may be solved in either form.
    #[arg(long, value_enum)]
    form: Option<Form>,
    /// Write the per-pivot trace (or the interior-point log) as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "bench-out")]
    out_dir: PathBuf,
    /// Overrides the base seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum CheckCommand {
    /// ceil(30 k ln(n/k))
    VectorM {
        #[arg(long)]
        k: u64,
        #[arg(long)]
        n: f64,
    },
    /// ceil(225 k^2 ln(n/k^2)^2)
    KcsM {
        #[arg(long)]
        k: u64,
        #[arg(long)]
        n: f64,
    },
    /// Per-side counts ceil(C k ln(n_i/k)).
    KcsSides {
        #[arg(long)]
        k: u64,
        #[arg(long)]
        n1: f64,
        #[arg(long)]
        n2: f64,
        #[arg(long, default_value_t = 30.0)]
        c: f64,
    },
    /// Success probability bounds for side counts m1, m2.
    Success {
        #[arg(long)]
        m1: f64,
        #[arg(long)]
        m2: f64,
        #[arg(long, default_value_t = 30.0)]
        c: f64,
    },
    /// Brute-force RIP constant of a random matrix.
    Rip {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "gaussian")]
        ensemble: Ensemble,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Kronecker RIP inequality on random A (m1 x n1) and B (m2 x n2).
    KronRip {
        #[arg(long)]
        m1: usize,
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        m2: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn gen(args: GenArgs) -> Result<()> {
    let inst = match args.form {
        Form::Vector => Instance::Vector(VectorInstance::random(
            args.m1,
            args.n1,
            args.k,
            args.ensemble.into(),
            args.amplitude.into(),
            args.seed,
        )?),
        Form::Kcs => Instance::Kcs(KcsInstance::random(
            args.m1,
            args.n1,
            args.m2,
            args.n2,
            args.k,
            args.ensemble.into(),
            args.amplitude.into(),
            args.seed,
        )?),
    };
    inst.write(&args.out)?;
    Ok(())
}

fn solve(args: SolveArgs) -> Result<Status> {
    let inst = Instance::read(&args.instance)?;
    let (lp, x0) = match (&inst, args.form) {
        (Instance::Vector(v), None | Some(Form::Vector)) => (build_vector_lp(v), v.x0.clone()),
        (Instance::Vector(_), Some(Form::Kcs)) => {
            bail!("a vector instance has no Kronecker form")
        }
        (Instance::Kcs(kc), None | Some(Form::Kcs)) => {
            (build_kcs_lp(kc), kronsense::instance::vec(&kc.x0))
        }
        (Instance::Kcs(kc), Some(Form::Vector)) => {
            let v = kc.to_vector();
            (build_vector_lp(&v), v.x0)
        }
    };
    let limit = args
        .time_limit
        .map(std::time::Duration::try_from_secs_f64)
        .transpose()
        .context("invalid --time-limit")?;
    let report = match args.solver {
        SolverKind::Psimplex => simplex::solve(
            &lp,
            &SimplexOptions {
                time_limit: limit,
                ..SimplexOptions::default()
            },
        ),
        SolverKind::Ipm => ipm_solve(
            &lp,
            StandardMode::BasisPursuit,
            &IpmOptions {
                time_limit: limit,
                ..IpmOptions::default()
            },
        ),
    };
    if let Some(path) = &args.trace {
        let body = match args.solver {
            SolverKind::Psimplex => report.trace_csv(),
            SolverKind::Ipm => report.ipm_log_csv(),
        };
        std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    let rec = analysis::check_recovery(&report.signal, x0.as_slice(), RECOVERY_TOL)?;
    eprintln!(
        "status {} steps {} exact {} rel_err {:e}",
        report.status.as_str(),
        report.steps,
        rec.exact,
        rec.rel_l2_error
    );
    Ok(report.status)
}

fn run_bench(args: BenchArgs) -> Result<bool> {
    let mut cfg = BenchConfig::read(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = bench::run_bench_with(&cfg, args.threads, |r| {
        eprintln!(
            "{} k={} trial={} {} steps={} exact={} {:.3}s",
            r.solver,
            r.k,
            r.trial,
            r.status.as_str(),
            r.steps,
            r.exact,
            r.seconds
        );
    })?;
    bench::emit_csv(&args.out_dir, &out)?;
    print!("{}", bench::aggregate_csv(&out.aggregates));
    Ok(out
        .records
        .iter()
        .any(|r| r.status == Status::NumericalFailure))
}

fn ensemble(m: usize, n: usize, kind: EnsembleKind, seed: u64) -> SensingEnsemble {
    SensingEnsemble {
        kind,
        rows: m,
        cols: n,
        seed,
    }
}

fn check(what: CheckCommand) -> Result<()> {
    match what {
        CheckCommand::VectorM { k, n } => println!("{}", analysis::bound_vector_m(k, n)?),
        CheckCommand::KcsM { k, n } => println!("{}", analysis::bound_kcs_m(k, n)?),
        CheckCommand::KcsSides { k, n1, n2, c } => {
            let (a, b) = analysis::bound_kcs_sides(k, n1, n2, c)?;
            println!("{a} {b}");
        }
        CheckCommand::Success { m1, m2, c } => {
            let (rho, simple) = analysis::success_prob_bounds(m1, m2, c)?;
            println!("{rho:.12} {simple:.12}");
        }
        CheckCommand::Rip {
            m,
            n,
            k,
            ensemble: kind,
            seed,
        } => {
            let a = gen_sensing_matrix(&ensemble(m, n, kind.into(), seed))?;
            let r = analysis::rip_bruteforce(&a, k)?;
            println!("{:.12} {:?}", r.delta, r.subset);
        }
        CheckCommand::KronRip {
            m1,
            n1,
            m2,
            n2,
            k,
            seed,
        } => {
            let a = gen_sensing_matrix(&ensemble(m1, n1, EnsembleKind::Gaussian, seed))?;
            let b = gen_sensing_matrix(&ensemble(m2, n2, EnsembleKind::Gaussian, seed.wrapping_add(1)))?;
            let r = analysis::kron_rip(&a, &b, k)?;
            println!(
                "{} {:.12} {:.12} {:.12}",
                r.holds, r.delta_u, r.delta_a, r.delta_b
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => gen(a).map(|_| false),
        Command::Solve(a) => solve(a).map(|s| s == Status::NumericalFailure),
        Command::Bench(a) => run_bench(a),
        Command::Check { what } => check(what).map(|_| false),
    };
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("error: numerical failure");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
