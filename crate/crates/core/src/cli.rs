//! Command-line front end: seeded synthetic-world experiments, ratings-file
//! experiments, standalone model fits, and report conversion. Every
//! file-writing subcommand drops an `_invocation.json` sidecar echoing the
//! exact argument vector next to its outputs, and the effective
//! configuration is embedded in each report or checkpoint itself.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{fit, Dataset, TrainConfig};
use crate::harness::{replicate, ExperimentConfig, InfoLevel, MetricsReport};
use crate::movielens::{
    load_ratings, run_movielens_experiment, MovielensExperimentConfig, MovielensReport,
    SandboxConfig,
};
use crate::policy::PolicyKind;
use crate::report::{
    histogram_csv, load_metrics_json, load_movielens_json, metrics_csv, movielens_metrics_csv,
    save_metrics_json, save_movielens_json, save_text,
};
use crate::synth::{ItemDraws, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "temptrec",
    version,
    about = "Enrichment-aware recommendation: simulate, estimate, and compare policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the policy comparison on generated synthetic worlds.
    SynthRun(SynthRunArgs),
    /// Run the policy comparison on a world estimated from a ratings file.
    MlRun(MlRunArgs),
    /// Fit the behavioral model to a logged interaction dataset.
    Estimate(EstimateArgs),
    /// Convert a saved report back into CSV and histogram files.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthRunArgs {
    /// World family the generator draws.
    #[arg(long, value_enum)]
    scenario: Scenario,
    /// Whether policies see true parameters or a model fitted to warm-up logs.
    #[arg(long, value_enum)]
    info: InfoLevel,
    /// Master seed; every random stream derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Users per world.
    #[arg(long, default_value_t = 200)]
    users: usize,
    /// On-platform items per world.
    #[arg(long, default_value_t = 100)]
    items: usize,
    /// Outside options per world.
    #[arg(long, default_value_t = 50)]
    outside_options: usize,
    /// Latent dimension.
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// Item latent distribution.
    #[arg(long, value_enum, default_value_t = ItemDraws::Gaussian)]
    item_draws: ItemDraws,
    /// Independent world replications.
    #[arg(long, default_value_t = 5)]
    replications: usize,
    /// Rounds per user in total (warm-up + policy).
    #[arg(long, default_value_t = 75)]
    total_rounds: usize,
    /// Leading rounds served by uniform random slates.
    #[arg(long, default_value_t = 25)]
    warmup_rounds: usize,
    /// Trailing rounds served by each policy.
    #[arg(long, default_value_t = 50)]
    policy_rounds: usize,
    /// Items per recommendation slate.
    #[arg(long, default_value_t = 15)]
    slate_size: usize,
    /// Policies to compare; repeat the flag. Defaults to the full lineup.
    #[arg(long = "policy", value_enum)]
    policies: Vec<PolicyKind>,
    /// Fit epochs (partial information only).
    #[arg(long)]
    train_epochs: Option<usize>,
    /// Fit learning rate (partial information only).
    #[arg(long)]
    train_learning_rate: Option<f64>,
    /// Fit minibatch size (partial information only).
    #[arg(long)]
    train_minibatch: Option<usize>,
    /// Rating-loss weight alpha in the fit objective.
    #[arg(long)]
    train_alpha: Option<f64>,
    /// Directory the report files are written into.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// File-name prefix for the outputs.
    #[arg(long, default_value = "synth")]
    prefix: String,
}

#[derive(Args)]
struct MlRunArgs {
    /// Ratings file (header `userId,movieId,rating,timestamp`).
    #[arg(long)]
    ratings: PathBuf,
    /// Users sampled into each sandbox.
    #[arg(long, default_value_t = 300)]
    users: usize,
    /// Movies sampled into each sandbox catalog.
    #[arg(long, default_value_t = 200)]
    movies: usize,
    /// Replayed ratings (consumption rounds) per sampled user.
    #[arg(long, default_value_t = 25)]
    ratings_per_user: usize,
    /// Independent sandbox resamples aggregated into the report.
    #[arg(long, default_value_t = 5)]
    resamples: usize,
    /// Latent dimension of the reconstruction recommender and the fit.
    #[arg(long, default_value_t = 2)]
    latent_dim: usize,
    /// Slate size, both for reconstruction and for the simulated rounds.
    #[arg(long, default_value_t = 15)]
    slate_size: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulated consumption rounds per policy on the estimated world.
    #[arg(long, default_value_t = 50)]
    rounds: usize,
    /// Fit epochs.
    #[arg(long)]
    train_epochs: Option<usize>,
    /// Fit learning rate.
    #[arg(long)]
    train_learning_rate: Option<f64>,
    /// Fit minibatch size.
    #[arg(long)]
    train_minibatch: Option<usize>,
    /// Rating-loss weight alpha in the fit objective.
    #[arg(long)]
    train_alpha: Option<f64>,
    /// Directory the report files are written into.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// File-name prefix for the outputs.
    #[arg(long, default_value = "ml")]
    prefix: String,
}

#[derive(Args)]
struct EstimateArgs {
    /// Interaction dataset (versioned JSON).
    #[arg(long)]
    dataset: PathBuf,
    /// Output model checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Latent dimension of the fitted model.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Fit seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rating-loss weight alpha in the fit objective.
    #[arg(long)]
    alpha: Option<f64>,
    /// Fit epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Fit learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Fit minibatch size.
    #[arg(long)]
    minibatch: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// A saved report file, synthetic or ratings-sandbox.
    #[arg(long)]
    report: PathBuf,
    /// Directory the CSV files are written into.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// File-name prefix; defaults to the report kind.
    #[arg(long)]
    prefix: Option<String>,
}

/// Parses and executes `argv`. Returns the process exit code: 0 on success
/// (including `--help`/`--version`), 2 on usage errors, 1 on runtime errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let echo: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = err.exit_code();
            let _ = err.print();
            return code;
        }
    };
    match execute(cli, &echo) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}

fn execute(cli: Cli, echo: &[String]) -> Result<()> {
    match cli.command {
        Command::SynthRun(args) => synth_run(args, echo),
        Command::MlRun(args) => ml_run(args, echo),
        Command::Estimate(args) => estimate(args, echo),
        Command::Report(args) => convert_report(args, echo),
    }
}

#[derive(Serialize)]
struct Invocation<'a> {
    format_version: u32,
    argv: &'a [String],
}

fn write_invocation(dir: &Path, prefix: &str, echo: &[String]) -> Result<PathBuf> {
    let path = dir.join(format!("{prefix}_invocation.json"));
    let body = serde_json::to_string_pretty(&Invocation { format_version: 1, argv: echo })?;
    fs::write(&path, body).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn synth_run(args: SynthRunArgs, echo: &[String]) -> Result<()> {
    let world = ScenarioConfig {
        users: args.users,
        items: args.items,
        outside_options: args.outside_options,
        dim: args.dim,
        scenario: args.scenario,
        item_draws: args.item_draws,
        seed: args.seed,
    };
    let mut config = ExperimentConfig::new(world, args.info, args.seed);
    config.replications = args.replications;
    config.total_rounds = args.total_rounds;
    config.warmup_rounds = args.warmup_rounds;
    config.policy_rounds = args.policy_rounds;
    config.slate_size = args.slate_size;
    if !args.policies.is_empty() {
        config.policies = args.policies.clone();
    }
    if let Some(epochs) = args.train_epochs {
        config.train.epochs = epochs;
    }
    if let Some(lr) = args.train_learning_rate {
        config.train.learning_rate = lr;
    }
    if let Some(batch) = args.train_minibatch {
        config.train.minibatch_size = batch;
    }
    if let Some(alpha) = args.train_alpha {
        config.train.alpha = alpha;
    }
    config.validate()?;
    ensure_dir(&args.out_dir)?;
    let report = replicate(&config)?;
    write_synth_outputs(&report, &args.out_dir, &args.prefix, echo)?;
    print_policy_summary(&report.per_policy);
    Ok(())
}

fn write_synth_outputs(
    report: &MetricsReport,
    out_dir: &Path,
    prefix: &str,
    echo: &[String],
) -> Result<()> {
    let json_path = out_dir.join(format!("{prefix}_report.json"));
    save_metrics_json(report, &json_path)?;
    announce(&json_path);
    let csv_path = out_dir.join(format!("{prefix}_metrics.csv"));
    save_text(&metrics_csv(report), &csv_path)?;
    announce(&csv_path);
    let hist_path = out_dir.join(format!("{prefix}_histogram.csv"));
    save_text(&histogram_csv(&report.per_policy), &hist_path)?;
    announce(&hist_path);
    announce(&write_invocation(out_dir, prefix, echo)?);
    Ok(())
}

fn ml_run(args: MlRunArgs, echo: &[String]) -> Result<()> {
    let sandbox = SandboxConfig {
        users: args.users,
        movies: args.movies,
        ratings_per_user: args.ratings_per_user,
        resamples: args.resamples,
        latent_dim: args.latent_dim,
        slate_size: args.slate_size,
        seed: args.seed,
    };
    let mut config = MovielensExperimentConfig::new(sandbox);
    config.rounds = args.rounds;
    config.slate_size = args.slate_size;
    if let Some(epochs) = args.train_epochs {
        config.train.epochs = epochs;
    }
    if let Some(lr) = args.train_learning_rate {
        config.train.learning_rate = lr;
    }
    if let Some(batch) = args.train_minibatch {
        config.train.minibatch_size = batch;
    }
    if let Some(alpha) = args.train_alpha {
        config.train.alpha = alpha;
    }
    config.validate()?;
    ensure_dir(&args.out_dir)?;
    let rows = load_ratings(&args.ratings)?;
    let report = run_movielens_experiment(&rows, &config)?;
    write_ml_outputs(&report, &args.out_dir, &args.prefix, echo)?;
    print_policy_summary(&report.per_policy);
    Ok(())
}

fn write_ml_outputs(
    report: &MovielensReport,
    out_dir: &Path,
    prefix: &str,
    echo: &[String],
) -> Result<()> {
    let json_path = out_dir.join(format!("{prefix}_report.json"));
    save_movielens_json(report, &json_path)?;
    announce(&json_path);
    let csv_path = out_dir.join(format!("{prefix}_metrics.csv"));
    save_text(&movielens_metrics_csv(report), &csv_path)?;
    announce(&csv_path);
    let hist_path = out_dir.join(format!("{prefix}_histogram.csv"));
    save_text(&histogram_csv(&report.per_policy), &hist_path)?;
    announce(&hist_path);
    announce(&write_invocation(out_dir, prefix, echo)?);
    Ok(())
}

fn print_policy_summary(per_policy: &[crate::harness::PolicyMetrics]) {
    for metrics in per_policy {
        println!(
            "{}: mean enrichment {:.4} (std {:.4}), {} on-platform consumptions",
            metrics.policy.name(),
            metrics.mean_enrichment,
            metrics.std_enrichment,
            metrics.on_platform_consumptions,
        );
    }
}

fn estimate(args: EstimateArgs, echo: &[String]) -> Result<()> {
    let dataset = Dataset::from_json_file(&args.dataset)?;
    let mut config = TrainConfig::new(args.dim, args.seed);
    if let Some(alpha) = args.alpha {
        config.alpha = alpha;
    }
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(lr) = args.learning_rate {
        config.learning_rate = lr;
    }
    if let Some(batch) = args.minibatch {
        config.minibatch_size = batch;
    }
    config.validate()?;
    let outside = dataset.outside_enrichment_means();
    let model = fit(&dataset, &config, &outside)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    model.save(&config, &args.out)?;
    announce(&args.out);
    let stem = args
        .out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "estimate".to_string());
    let dir = args.out.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    announce(&write_invocation(&dir, &stem, echo)?);
    println!(
        "fitted {} users x {} items: sigma={:.4}, mean lambda_c={:.4}, mean lambda_f={:.4}",
        model.users.len(),
        model.items.len(),
        model.sigma,
        mean(&model.lambda_c),
        mean(&model.lambda_f),
    );
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn convert_report(args: ReportArgs, echo: &[String]) -> Result<()> {
    let text = fs::read_to_string(&args.report)
        .map_err(|e| Error::io(args.report.display().to_string(), e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let kind = value.get("kind").and_then(|k| k.as_str()).unwrap_or("").to_string();
    ensure_dir(&args.out_dir)?;
    match kind.as_str() {
        "synthetic" => {
            let report = load_metrics_json(&args.report)?;
            let prefix = args.prefix.unwrap_or_else(|| "synth".to_string());
            write_synth_outputs(&report, &args.out_dir, &prefix, echo)
        }
        "movielens" => {
            let report = load_movielens_json(&args.report)?;
            let prefix = args.prefix.unwrap_or_else(|| "ml".to_string());
            write_ml_outputs(&report, &args.out_dir, &prefix, echo)
        }
        other => Err(Error::Input(format!(
            "report file {} has unrecognized kind '{other}'",
            args.report.display()
        ))),
    }
}
