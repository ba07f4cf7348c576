use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use condtest_core::calibration::{calibrate, render_constants, CalibrationOptions};
use condtest_core::constants::Constants;
use condtest_core::harness::{run, summarize, ExperimentConfig, Report, TesterKind};
use condtest_core::testers::Perturbation;
use condtest_core::{Backend, MatchedIsingSpec, ModelFile, ModelSpec, OracleMode, SubcubeBadSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "condtest", version, about = "Identity testing and KL estimation under conditional sampling oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded battery of identity tests.
    Test(TestArgs),
    /// Run a seeded battery of KL estimates through a subcube oracle.
    EstimateKl(EstimateArgs),
    /// Aggregate NDJSON reports.
    Summarize {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Lower-bound families.
    Adversary {
        #[command(subcommand)]
        command: AdversaryCommand,
    },
    /// Re-derive the frozen constants and write a constants file.
    Calibrate {
        #[arg(long, default_value_t = CalibrationOptions::default().trials)]
        trials: usize,
        #[arg(long, default_value_t = CalibrationOptions::default().seed)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AdversaryCommand {
    /// Write a random member of a family as a model file.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Oracle {
    General,
    Coordinate,
    Subcube,
    Pairwise,
}

impl From<Oracle> for OracleMode {
    fn from(o: Oracle) -> Self {
        match o {
            Oracle::General => Self::General,
            Oracle::Coordinate => Self::Coordinate,
            Oracle::Subcube => Self::Subcube,
            Oracle::Pairwise => Self::Pairwise,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Tester {
    CoordinateKl,
    CoordinateTv,
    SubcubeKl,
    SubcubeApprox,
    KlEstimate,
}

impl From<Tester> for TesterKind {
    fn from(t: Tester) -> Self {
        match t {
            Tester::CoordinateKl => Self::CoordinateKl,
            Tester::CoordinateTv => Self::CoordinateTv,
            Tester::SubcubeKl => Self::SubcubeKl,
            Tester::SubcubeApprox => Self::SubcubeApprox,
            Tester::KlEstimate => Self::KlEstimate,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Exact,
    Structural,
    Glauber,
}

#[derive(Clone, Copy, ValueEnum)]
enum PerturbationArg {
    Random,
    Alternating,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    SubcubeBad,
    MatchedIsing,
}

#[derive(Clone, Copy, ValueEnum)]
enum Matching {
    Consecutive,
    Random,
}

/// Options shared by `test` and `estimate-kl`.
#[derive(Args)]
struct Common {
    /// Model file of the known distribution.
    #[arg(long)]
    visible: PathBuf,
    /// Model file of the distribution behind the oracle.
    #[arg(long)]
    hidden: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    budget_scale: f64,
    /// NDJSON report; a CSV projection is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long, value_enum, default_value_t = BackendArg::Structural)]
    backend: BackendArg,
    /// Glauber updates per sample (default: the frozen burn-in).
    #[arg(long)]
    glauber_steps: Option<usize>,
    /// Prefix marginal bound of the visible model.
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    oracle: Oracle,
    #[arg(long, value_enum)]
    tester: Tester,
    /// Tensorization constant of the visible model.
    #[arg(long)]
    c: Option<f64>,
    /// Coordinate balance of the visible model.
    #[arg(long)]
    eta: Option<f64>,
    /// Approximation scheme for `subcube-approx`.
    #[arg(long, value_enum, default_value_t = PerturbationArg::Random)]
    perturbation: PerturbationArg,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long)]
    n: usize,
    /// Distance parameter; sets `t` for subcube-bad and `beta` for matched-ising.
    #[arg(long)]
    eps: Option<f64>,
    /// Size of the planted subcube (subcube-bad).
    #[arg(long)]
    t: Option<usize>,
    /// Coupling (matched-ising); overrides `--eps`.
    #[arg(long)]
    beta: Option<f64>,
    /// `beta = rho eps / sqrt(n)` (matched-ising; default: calibrated table, else 4).
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_enum, default_value_t = Matching::Random)]
    matching: Matching,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn config(common: &Common, oracle: OracleMode, tester: TesterKind) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(&common.visible, &common.hidden, oracle, tester);
    c.eps = common.eps;
    c.trials = common.trials;
    c.seed = common.seed;
    c.budget_scale = common.budget_scale;
    c.output = common.out.clone();
    if let Some(p) = common.parallelism {
        c.parallelism = p;
    }
    c.backend = match common.backend {
        BackendArg::Exact => Backend::Exact,
        BackendArg::Structural => Backend::Structural,
        BackendArg::Glauber => Backend::Glauber { steps: common.glauber_steps },
    };
    c.b = common.b;
    c
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}

fn print_report(report: &Report) {
    let f = &report.footer;
    let h = &report.header;
    println!("{} vs {} ({}, n = {}, k = {})", h.visible_variant, h.hidden_variant, h.config.tester, h.n, h.k);
    let kl = if f.kl_infinite { "inf".into() } else { opt(f.kl) };
    println!("exact KL {kl}  TV {}", opt(f.tv));
    if f.mean_estimate.is_some() {
        println!(
            "trials {}  mean estimate {}  mean |error| {}  within eps {}",
            f.trials,
            opt(f.mean_estimate),
            opt(f.mean_abs_error),
            opt(f.within_eps)
        );
    } else {
        println!("trials {}  accepted {}  rejected {}", f.trials, f.accepted, f.rejected);
    }
    if f.support_violations > 0 {
        println!("support violations {}", f.support_violations);
    }
    let max = report.rows.iter().map(|r| r.total).max().unwrap_or(0);
    let budget = report.rows.iter().filter_map(|r| r.budget).next();
    println!("max queries {max}  budget {}", budget.map_or("-".into(), |b| format!("{b:.0}")));
}

fn generate(args: &GenArgs) -> Result<ModelSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    match args.family {
        Family::SubcubeBad => {
            let spec = match (args.t, args.eps) {
                (Some(t), _) => SubcubeBadSpec::random(args.n, t, &mut rng)?,
                (None, Some(eps)) => SubcubeBadSpec::for_distance(args.n, eps, &mut rng)?,
                (None, None) => bail!("subcube-bad needs --t or --eps"),
            };
            Ok(ModelSpec::subcube_bad(spec))
        }
        Family::MatchedIsing => {
            let beta = match (args.beta, args.eps) {
                (Some(beta), _) => beta,
                (None, Some(eps)) => {
                    let rho = args.rho.or_else(|| Constants::embedded().rho_for(args.n, eps)).unwrap_or(4.0);
                    MatchedIsingSpec::beta_for(args.n, rho, eps)
                }
                (None, None) => bail!("matched-ising needs --beta or --eps"),
            };
            let spec = match args.matching {
                Matching::Consecutive => MatchedIsingSpec::consecutive(args.n, beta)?,
                Matching::Random => MatchedIsingSpec::random(args.n, beta, &mut rng)?,
            };
            Ok(ModelSpec::matched_ising(spec))
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    Constants::load().context("loading constants")?;
    match cli.command {
        Command::Test(args) => {
            let mut c = config(&args.common, args.oracle.into(), args.tester.into());
            c.c = args.c;
            c.eta = args.eta;
            c.perturbation = match args.perturbation {
                PerturbationArg::Random => Perturbation::Random,
                PerturbationArg::Alternating => Perturbation::Alternating,
            };
            print_report(&run(&c)?);
        }
        Command::EstimateKl(args) => {
            let c = config(&args.common, OracleMode::Subcube, TesterKind::KlEstimate);
            print_report(&run(&c)?);
        }
        Command::Summarize { paths, csv } => {
            let summary = summarize(&paths)?;
            print!("{}", summary.to_text());
            if let Some(path) = csv {
                std::fs::write(&path, summary.to_csv()?).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Adversary { command: AdversaryCommand::Gen(args) } => {
            let model = generate(&args)?;
            std::fs::write(&args.out, ModelFile::from_model(&model).to_json())
                .with_context(|| format!("writing {}", args.out.display()))?;
        }
        Command::Calibrate { trials, seed, out } => {
            let opts = CalibrationOptions { trials, seed };
            let constants = calibrate(&opts)?;
            std::fs::write(&out, render_constants(&constants, &opts)).with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
