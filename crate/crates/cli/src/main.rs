//! `hsic` — multiview subspace clustering of hyperspectral images.
//!
//! Subcommands: `run` executes the full pipeline from a config file and/or
//! flags, `gen` writes a synthetic stripes dataset, `eval` scores two label
//! files against each other.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hsic_core::hsi_io::{load_labels, load_labels_pgm, looks_like_pgm, LabelMap};
use hsic_core::metrics::format_report;
use hsic_core::pipeline::{
    evaluate_label_maps, generate_dataset, run_pipeline, PipelineConfig,
};

#[derive(Parser)]
#[command(name = "hsic", version, about = "Multiview subspace clustering of hyperspectral images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the clustering pipeline and write labels.pgm, affinity.pgm,
    /// metrics.txt and run.txt into the output directory.
    Run(RunArgs),
    /// Generate a synthetic stripes dataset in the cube/label formats.
    Gen(GenArgs),
    /// Score a predicted label file against a ground-truth label file.
    Eval(EvalArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file; flags below override its settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hyperparameter preset: indian, pavia or houston.
    #[arg(long)]
    preset: Option<String>,
    /// Cube header path (sidecar of the .f32 binary).
    #[arg(long)]
    cube: Option<PathBuf>,
    /// Label file (raw i32 or PGM).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Crop rectangle row_start,row_end,col_start,col_end (end-exclusive).
    #[arg(long)]
    crop: Option<String>,
    /// PCA target dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Sliding-window size (odd).
    #[arg(long)]
    s: Option<usize>,
    /// Morphological profile radii, comma separated.
    #[arg(long)]
    emp_radii: Option<String>,
    /// KNN neighbor count.
    #[arg(long)]
    k: Option<usize>,
    /// Self-expression regularization.
    #[arg(long)]
    lambda: Option<f64>,
    /// Propagation hops.
    #[arg(long)]
    hops: Option<usize>,
    /// Zero the self-expression diagonal (true/false).
    #[arg(long)]
    zero_diag: Option<String>,
    /// Fusion mode: attention or uniform.
    #[arg(long)]
    fusion: Option<String>,
    /// Attention training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Attention training step size.
    #[arg(long)]
    step: Option<f64>,
    /// Cluster count K.
    #[arg(long)]
    clusters: Option<usize>,
    /// K-means restarts.
    #[arg(long)]
    restarts: Option<usize>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Spatial-spectral view only with uniform fusion (ablation).
    #[arg(long)]
    single_view: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Number of stripe classes.
    #[arg(long)]
    k: usize,
    #[arg(long)]
    bands: usize,
    /// Per-band Gaussian noise level.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes <prefix>.hdr, <prefix>.f32, <prefix>_labels.i32.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted label file (raw i32 or PGM).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth label file (raw i32 or PGM).
    #[arg(long)]
    truth: PathBuf,
    /// Rows, required when a raw file is involved.
    #[arg(long)]
    rows: Option<usize>,
    /// Cols, required when a raw file is involved.
    #[arg(long)]
    cols: Option<usize>,
}

fn resolve_run_config(args: &RunArgs) -> Result<PipelineConfig, hsic_core::Error> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(preset) = &args.preset {
        config.apply_preset(preset)?;
    }

    let mut overrides: Vec<(&str, String)> = Vec::new();
    if let Some(v) = &args.cube {
        overrides.push(("cube", v.display().to_string()));
    }
    if let Some(v) = &args.labels {
        overrides.push(("labels", v.display().to_string()));
    }
    if let Some(v) = &args.out {
        overrides.push(("out", v.display().to_string()));
    }
    if let Some(v) = &args.crop {
        overrides.push(("crop", v.clone()));
    }
    if let Some(v) = args.d {
        overrides.push(("d", v.to_string()));
    }
    if let Some(v) = args.s {
        overrides.push(("s", v.to_string()));
    }
    if let Some(v) = &args.emp_radii {
        overrides.push(("emp_radii", v.clone()));
    }
    if let Some(v) = args.k {
        overrides.push(("k", v.to_string()));
    }
    if let Some(v) = args.lambda {
        overrides.push(("lambda", v.to_string()));
    }
    if let Some(v) = args.hops {
        overrides.push(("hops", v.to_string()));
    }
    if let Some(v) = &args.zero_diag {
        overrides.push(("zero_diag", v.clone()));
    }
    if let Some(v) = &args.fusion {
        overrides.push(("fusion", v.clone()));
    }
    if let Some(v) = args.epochs {
        overrides.push(("fusion_epochs", v.to_string()));
    }
    if let Some(v) = args.step {
        overrides.push(("fusion_step", v.to_string()));
    }
    if let Some(v) = args.clusters {
        overrides.push(("clusters", v.to_string()));
    }
    if let Some(v) = args.restarts {
        overrides.push(("restarts", v.to_string()));
    }
    if let Some(v) = args.seed {
        overrides.push(("seed", v.to_string()));
    }
    if args.single_view {
        overrides.push(("single_view", "true".to_string()));
    }
    for (key, value) in overrides {
        config.apply_key(key, &value)?;
    }
    Ok(config)
}

fn load_label_file(
    path: &PathBuf,
    rows: Option<usize>,
    cols: Option<usize>,
) -> Result<LabelMap, hsic_core::Error> {
    if looks_like_pgm(path)? {
        load_labels_pgm(path)
    } else {
        match (rows, cols) {
            (Some(r), Some(c)) => load_labels(path, r, c),
            _ => Err(hsic_core::Error::InvalidArgument(format!(
                "{} is a raw label file; --rows and --cols are required",
                path.display()
            ))),
        }
    }
}

fn execute(cli: Cli) -> Result<(), hsic_core::Error> {
    match cli.command {
        Command::Run(args) => {
            let config = resolve_run_config(&args)?;
            let summary = run_pipeline(&config)?;
            print!("{}", format_report(summary.oa, summary.nmi, summary.kappa));
            println!("artifacts = {}", config.output_dir.display());
            Ok(())
        }
        Command::Gen(args) => {
            let generated = generate_dataset(
                args.rows, args.cols, args.k, args.bands, args.sigma, args.seed, &args.out,
            )?;
            println!("cube = {}", generated.cube_header.display());
            println!("labels = {}", generated.labels.display());
            Ok(())
        }
        Command::Eval(args) => {
            let truth = load_label_file(&args.truth, args.rows, args.cols)?;
            let pred = load_label_file(&args.pred, args.rows, args.cols)?;
            let (oa, nmi, kappa) = evaluate_label_maps(&pred, &truth)?;
            print!("{}", format_report(oa, nmi, kappa));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
