//! Command-line interface: `dgm`, `analyze`, `simulate` and `stability`.
//!
//! Exit codes: 0 success, 1 estimation failure, 2 input or configuration
//! error. Results go to stdout (or the requested files); diagnostics go to
//! stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{CampaignConfig, Preset};
use crate::crossfit::{run_crossfit, write_partitions_csv, Aggregation, DrEstimator};
use crate::data::Dataset;
use crate::dgm::{generate_sample_seeded, Mechanism};
use crate::error::{Error, Result};
use crate::estimators::{aipw, bootstrap_se, g_computation, ipw, tmle, AceEstimate, Method};
use crate::nuisance::{fit_nuisance, Bounds, NuisanceSpec};
use crate::rng::{derive_seed, rng_from_seed, tags};
use crate::simharness::{
    gcomp_refit, manifest, run_campaign_with_progress, stability_study, write_metrics_csv,
    write_stability_csv,
};
use crate::superlearner::LearnerLibrary;

#[derive(Debug, Parser)]
#[command(
    name = "dr-crossfit",
    version,
    about = "Doubly robust ACE estimation with double cross-fitting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a cohort from the statin/ASCVD mechanism.
    Dgm(DgmArgs),
    /// Estimate the ACE on a CSV dataset.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo campaign.
    Simulate(SimulateArgs),
    /// Rerun the double cross-fit on one dataset for several partition counts.
    Stability(StabilityArgs),
}

#[derive(Debug, Args)]
struct DgmArgs {
    /// Number of rows.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long)]
    seed: u64,
    /// Also write F and both potential outcomes.
    #[arg(long)]
    oracle_view: bool,
    /// LDL cut-point (mg/dL) of the treatment indicator.
    #[arg(long, default_value_t = Mechanism::STATIN.ldl_threshold)]
    ldl_threshold: f64,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NuisanceArg {
    Correct,
    MainEffects,
    SuperLearner,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LibraryArg {
    Desk,
    Full,
}

#[derive(Debug, Args)]
struct NuisanceArgs {
    #[arg(long, value_enum, default_value = "correct")]
    nuisance: NuisanceArg,
    /// Super-learner library.
    #[arg(long, value_enum, default_value = "full")]
    library: LibraryArg,
    /// Super-learner cross-validation folds.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// LDL cut-point used by the correct parametric design.
    #[arg(long, default_value_t = Mechanism::STATIN.ldl_threshold)]
    ldl_threshold: f64,
}

impl NuisanceArgs {
    fn spec(&self) -> NuisanceSpec {
        match self.nuisance {
            NuisanceArg::Correct => NuisanceSpec::correct(),
            NuisanceArg::MainEffects => NuisanceSpec::main_effects(),
            NuisanceArg::SuperLearner => NuisanceSpec::SuperLearner {
                library: match self.library {
                    LibraryArg::Desk => LearnerLibrary::desk(),
                    LibraryArg::Full => LearnerLibrary::full(),
                },
                folds: self.folds,
            },
        }
    }

    fn mechanism(&self) -> Mechanism {
        Mechanism {
            ldl_threshold: self.ldl_threshold,
            ..Mechanism::STATIN
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AggregationArg {
    Median,
    Mean,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Median => Aggregation::Median,
            AggregationArg::Mean => Aggregation::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Gcomp,
    Ipw,
    Aipw,
    Tmle,
    DcAipw,
    DcTmle,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[command(flatten)]
    nuisance: NuisanceArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Bootstrap resamples for g-computation.
    #[arg(long, default_value_t = 250)]
    bootstrap: usize,
    /// Partitions for the double cross-fit methods.
    #[arg(long, default_value_t = 100)]
    partitions: usize,
    #[arg(long, value_enum, default_value = "median")]
    aggregation: AggregationArg,
    /// Normalized (Hajek) IPW instead of Horvitz-Thompson.
    #[arg(long)]
    hajek: bool,
    /// Write per-partition estimates of a double cross-fit method to this CSV.
    #[arg(long)]
    dump_partitions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Full,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Campaign configuration (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Master seed; required so every campaign is reproducible.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for metrics.csv and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DrArg {
    Aipw,
    Tmle,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "aipw")]
    dr_estimator: DrArg,
    #[command(flatten)]
    nuisance: NuisanceArgs,
    /// Comma-separated partition counts.
    #[arg(long, value_delimiter = ',', default_value = "5,10,25,50,75,100")]
    p_values: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    reruns: usize,
    #[arg(long, value_enum, default_value = "median")]
    aggregation: AggregationArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return if code == 0 { 0 } else { 2 };
        }
    };
    let result = match cli.command {
        Command::Dgm(a) => cmd_dgm(&a, stdout),
        Command::Analyze(a) => cmd_analyze(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a, stdout, stderr),
        Command::Stability(a) => cmd_stability(&a, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    // Unlocked handles: worker threads print progress to stderr while a
    // command runs.
    run(
        std::env::args_os(),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    )
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn cmd_dgm(a: &DgmArgs, stdout: &mut dyn Write) -> Result<()> {
    if !(a.ldl_threshold > 0.0 && a.ldl_threshold.is_finite()) {
        return Err(Error::InvalidInput(
            "--ldl-threshold must be positive".into(),
        ));
    }
    let mechanism = Mechanism {
        ldl_threshold: a.ldl_threshold,
        ..Mechanism::STATIN
    };
    let sample = generate_sample_seeded(a.n as usize, mechanism, a.seed)?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            sample
                .write_csv(&mut w, a.oracle_view)
                .map_err(io_err(path))?;
            w.flush().map_err(io_err(path))
        }
        None => sample
            .write_csv(stdout, a.oracle_view)
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

fn cmd_analyze(a: &AnalyzeArgs, stdout: &mut dyn Write) -> Result<()> {
    let data = Dataset::read_csv(&a.data)?;
    let spec = a.nuisance.spec();
    let mechanism = a.nuisance.mechanism();
    let bounds = Bounds::default();
    let start = Instant::now();

    let (estimate, clip_count): (AceEstimate, usize) = match a.method {
        MethodArg::DcAipw | MethodArg::DcTmle => {
            let dr = if matches!(a.method, MethodArg::DcAipw) {
                DrEstimator::Aipw
            } else {
                DrEstimator::Tmle
            };
            let result = run_crossfit(
                &data,
                &spec,
                mechanism,
                dr,
                a.partitions,
                a.aggregation.into(),
                &bounds,
                a.seed,
            )?;
            if let Some(path) = &a.dump_partitions {
                let mut w = create(path)?;
                write_partitions_csv(&result, &mut w)?;
            }
            if result.failed_partitions > 0 {
                eprintln!(
                    "warning: {} of {} partitions failed",
                    result.failed_partitions,
                    result.p()
                );
            }
            (result.estimate(), result.clip_count())
        }
        method => {
            if a.dump_partitions.is_some() {
                return Err(Error::InvalidInput(
                    "--dump-partitions applies to dc-aipw and dc-tmle only".into(),
                ));
            }
            let mut rng = rng_from_seed(derive_seed(a.seed, tags::NUISANCE, 0));
            let scores = fit_nuisance(&spec, &data, mechanism, &mut rng)?
                .score(&data)?
                .bounded(&bounds);
            let est = match method {
                MethodArg::Gcomp => {
                    let psi = g_computation(&scores.m1, &scores.m0)?;
                    let boot = bootstrap_se(
                        &data,
                        a.bootstrap,
                        derive_seed(a.seed, tags::BOOTSTRAP, 0),
                        |d, rng| gcomp_refit(&spec, d, &bounds, rng),
                    )?;
                    AceEstimate::new(Method::GComputation, psi, boot.se, None)
                }
                MethodArg::Ipw => ipw(&data, &scores.pi, a.hajek)?,
                MethodArg::Aipw => aipw(&data, &scores)?,
                MethodArg::Tmle => tmle(&data, &scores)?.1,
                MethodArg::DcAipw | MethodArg::DcTmle => unreachable!(),
            };
            (est, scores.clip_count)
        }
    };
    let record = serde_json::json!({
        "method": estimate.method.label(),
        "nuisance": spec.label(),
        "psi": estimate.psi,
        "se": estimate.se,
        "ci_lower": estimate.ci_lower,
        "ci_upper": estimate.ci_upper,
        "n": data.len(),
        "clip_count": clip_count,
        "runtime_s": start.elapsed().as_secs_f64(),
    });
    writeln!(stdout, "{record}").map_err(io_err(Path::new("<stdout>")))
}

fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let config = match (&a.config, a.preset) {
        (Some(path), _) => CampaignConfig::load(path)?,
        (None, Some(p)) => CampaignConfig::preset(match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Full => Preset::Full,
        }),
        (None, None) => {
            return Err(Error::InvalidInput(
                "either --config or --preset is required".into(),
            ))
        }
    };
    if a.print_config {
        return write!(stdout, "{}", config.to_toml_string())
            .map_err(io_err(Path::new("<stdout>")));
    }
    let seed = a.seed.ok_or_else(|| {
        Error::InvalidInput("--seed is required: campaigns must be reproducible".into())
    })?;
    let out = a
        .out
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("--out is required".into()))?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;

    let total = config.replicates;
    let step = (total / 20).max(1);
    let progress = |done: usize| {
        if done.is_multiple_of(step) || done == total {
            eprintln!("replicates completed: {done}/{total}");
        }
    };
    let result = match a.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(|| run_campaign_with_progress(&config, seed, &progress))?,
        None => run_campaign_with_progress(&config, seed, &progress)?,
    };
    for row in result.rows.iter().filter(|r| r.flagged) {
        let _ = writeln!(
            stderr,
            "warning: {}/{} failed in {} of {} replicates",
            row.estimator.label(),
            row.nuisance.label(),
            row.failures,
            total
        );
    }

    let metrics_path = out.join("metrics.csv");
    let mut w = create(&metrics_path)?;
    write_metrics_csv(&result.rows, &mut w)?;
    w.flush().map_err(io_err(&metrics_path))?;
    let manifest_path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest(&result)).expect("manifest serializes");
    std::fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;
    write_metrics_csv(&result.rows, stdout)
}

fn cmd_stability(a: &StabilityArgs, stdout: &mut dyn Write) -> Result<()> {
    let data = Dataset::read_csv(&a.data)?;
    if a.p_values.contains(&0) {
        return Err(Error::InvalidInput(
            "--p-values entries must be at least 1".into(),
        ));
    }
    let estimator = match a.dr_estimator {
        DrArg::Aipw => DrEstimator::Aipw,
        DrArg::Tmle => DrEstimator::Tmle,
    };
    let rows = stability_study(
        &data,
        &a.nuisance.spec(),
        a.nuisance.mechanism(),
        estimator,
        &a.p_values,
        a.reruns,
        a.aggregation.into(),
        &Bounds::default(),
        a.seed,
    )?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            write_stability_csv(&rows, &mut w)?;
            w.flush().map_err(io_err(path))
        }
        None => write_stability_csv(&rows, stdout),
    }
}
