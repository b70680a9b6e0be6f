//! `mvocc`: train, cross-validate, and evaluate one-class models over
//! multi-view CSV data, and generate synthetic datasets for smoke runs.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mvocc_core::dataset::{load_multiview_csv, MultiViewDataset, Standardizer};
use mvocc_core::error::Error;
use mvocc_core::evaluation::{build_results_doc, cross_validate, grid_expand, render_report};
use mvocc_core::metrics::{compute_metrics, ConfusionMatrix};
use mvocc_core::models::{decide_dataset, load_model, save_model, train_model};
use mvocc_core::synthetic::{gen_one_view, gen_two_view, write_dataset_csv, SynthSpec};

use config::ResolvedRun;

#[derive(Parser)]
#[command(name = "mvocc", version, about = "Multi-view one-class model experiments")]
struct Cli {
    /// Worker threads for grid search (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nested cross-validation over a hyperparameter grid
    Cv(CvArgs),
    /// Fit one model on every target sample and store the artifact
    Train(TrainArgs),
    /// Evaluate a stored model artifact on labeled data
    Eval(EvalArgs),
    /// Generate a synthetic multi-view dataset
    Synth(SynthArgs),
}

#[derive(Args)]
struct CvArgs {
    /// TOML run config, or a results.json from a previous run
    #[arg(long)]
    config: PathBuf,
    /// Overrides the fold seed from the config
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report.txt, results.json, folds.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Run config; its grid must expand to exactly one point
    #[arg(long)]
    config: PathBuf,
    /// Directory for model.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Model artifact written by `train`
    #[arg(long)]
    model: PathBuf,
    /// Run config naming the data to evaluate on
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 60)]
    targets: usize,
    #[arg(long, default_value_t = 20)]
    outliers: usize,
    /// Modality count; 1 or 2
    #[arg(long, default_value_t = 2)]
    views: usize,
    /// Features per modality
    #[arg(long, default_value_t = 6)]
    dim: usize,
    /// Target-outlier distance in within-cloud standard deviations
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file stem; files are named <stem>_view<k>.csv
    #[arg(long, default_value = "synth")]
    stem: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot configure {jobs} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Cv(args) => cmd_cv(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for anything wrong with the inputs, 2 for failures during compute or
/// while writing outputs.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Alignment(_)
        | Error::Parse { .. }
        | Error::Config(_)
        | Error::Stratification(_)
        | Error::Split(_)
        | Error::Parameter(_)
        | Error::Shape(_)
        | Error::Contract(_)
        | Error::OracleScale(_)
        | Error::Artifact(_)
        | Error::Csv(_) => 1,
        Error::Infeasible(_)
        | Error::Numeric(_)
        | Error::DegenerateKernel(_)
        | Error::Divergence { .. }
        | Error::Protocol(_)
        | Error::Io(_)
        | Error::Serde(_) => 2,
    }
}

fn load_run(config_path: &Path, seed_override: Option<u64>) -> Result<ResolvedRun, Error> {
    let base = config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let raw = config::load_config(config_path)?;
    config::resolve(raw, &base, seed_override)
}

fn load_dataset(run: &ResolvedRun) -> Result<MultiViewDataset, Error> {
    let ds = load_multiview_csv(
        &run.config.data.views,
        &run.config.data.label_column,
        &run.config.target,
    )?;
    if run.config.data.standardize {
        Standardizer::fit(&ds).apply(&ds)
    } else {
        Ok(ds)
    }
}

fn cmd_cv(args: CvArgs) -> Result<(), Error> {
    let run = load_run(&args.config, args.seed)?;
    let ds = load_dataset(&run)?;
    let grid = grid_expand(run.method, run.family, &run.grid, run.config.train.max_iters)?;
    log::info!(
        "{}: {} grid points, {}x{} nested folds, seed {}",
        run.method.id(),
        grid.len(),
        run.config.cv.outer_folds,
        run.config.cv.inner_folds,
        run.config.cv.seed
    );
    let result = cross_validate(
        &ds,
        run.method,
        &grid,
        run.config.cv.outer_folds,
        run.config.cv.inner_folds,
        run.config.cv.seed,
    )?;

    let doc = build_results_doc(
        &result,
        run.family,
        grid.len(),
        serde_json::to_value(&run.config)?,
    );
    fs::create_dir_all(&args.out)?;
    let report = render_report(&[result.report_row()]);
    fs::write(args.out.join("report.txt"), &report)?;
    let mut results_json = serde_json::to_string_pretty(&doc)?;
    results_json.push('\n');
    fs::write(args.out.join("results.json"), results_json)?;
    let mut folds_json = serde_json::to_string_pretty(&result.plan)?;
    folds_json.push('\n');
    fs::write(args.out.join("folds.json"), folds_json)?;

    print!("{report}");
    if result.skipped_points > 0 {
        println!("skipped {} infeasible grid evaluations", result.skipped_points);
    }
    println!(
        "wrote report.txt, results.json, folds.json to {}",
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let run = load_run(&args.config, None)?;
    let ds = load_dataset(&run)?;
    let grid = grid_expand(run.method, run.family, &run.grid, run.config.train.max_iters)?;
    if grid.len() != 1 {
        return Err(Error::Config(format!(
            "train needs a config whose grid expands to exactly one point, got {}; \
             pin each axis to a single value or use `cv` to search",
            grid.len()
        )));
    }
    let targets: Vec<usize> = (0..ds.n_samples()).filter(|&i| ds.is_target(i)).collect();
    let train = ds.subset(&targets)?;
    let model = train_model(run.method, &train, &grid[0])?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("model.json");
    save_model(&model, &path)?;
    println!(
        "trained {} on {} '{}' samples; wrote {}",
        run.method.id(),
        train.n_samples(),
        run.config.target,
        path.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let run = load_run(&args.config, None)?;
    if !args.model.exists() {
        return Err(Error::Config(format!(
            "model file '{}' does not exist",
            args.model.display()
        )));
    }
    let model = load_model(&args.model)?;
    if model.method != run.method {
        return Err(Error::Config(format!(
            "model artifact holds {} but the config requests {}",
            model.method.id(),
            run.method.id()
        )));
    }
    if model.target_class != run.config.target {
        return Err(Error::Config(format!(
            "model targets '{}' but the config targets '{}'",
            model.target_class, run.config.target
        )));
    }
    let ds = load_dataset(&run)?;
    let predicted = decide_dataset(&model, &ds)?;

    let mut cm = ConfusionMatrix::new(ds.target_class());
    for (i, &p) in predicted.iter().enumerate() {
        cm.record(ds.is_target(i), p);
    }
    println!(
        "samples {}, target '{}' ({} positive, {} negative)",
        ds.n_samples(),
        ds.target_class(),
        cm.positives(),
        cm.negatives()
    );
    println!(
        "tp {}  fn {}  fp {}  tn {}",
        cm.true_pos, cm.false_neg, cm.false_pos, cm.true_neg
    );
    if cm.positives() > 0 && cm.negatives() > 0 {
        let m = compute_metrics(&cm)?;
        println!(
            "sen {:.2}  spe {:.2}  pre {:.2}  f1 {:.2}  acc {:.2}  gm {:.2}",
            m.sen, m.spe, m.pre, m.f1, m.acc, m.gm
        );
        for flag in &m.flags {
            println!("note: {flag}");
        }
    } else if cm.positives() > 0 {
        let sen = 100.0 * cm.true_pos as f64 / cm.positives() as f64;
        println!("sen {sen:.2}  (no negative samples; other metrics undefined)");
    } else {
        let spe = 100.0 * cm.true_neg as f64 / cm.negatives() as f64;
        println!("spe {spe:.2}  (no positive samples; other metrics undefined)");
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let spec = SynthSpec {
        n_target: args.targets,
        n_outlier: args.outliers,
        dims: vec![args.dim; args.views],
        separation: args.separation,
        seed: args.seed,
    };
    let ds = match args.views {
        1 => gen_one_view(&spec)?,
        2 => gen_two_view(&spec)?,
        v => {
            return Err(Error::Config(format!(
                "synth supports 1 or 2 views, got {v}"
            )))
        }
    };
    fs::create_dir_all(&args.out)?;
    let paths = write_dataset_csv(&ds, &args.out, &args.stem)?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}
