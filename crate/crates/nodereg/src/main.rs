use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use nodereg::datagen;
use nodereg::dynamics::System;
use nodereg::error::Error;
use nodereg::eval::{evaluate, JacobianMode};
use nodereg::integrate::{chunk_trajectories, chunk_trajectories_lookahead, Chunk, Trajectory};
use nodereg::io::checkpoint::{read_checkpoint, write_checkpoint};
use nodereg::io::config::{load_config, save_json};
use nodereg::io::csv::{read_csv, write_finals, write_grid, write_records, write_series};
use nodereg::io::svg::{histogram, line_plot};
use nodereg::io::trajectory_file::{read_trajectory, write_trajectory};
use nodereg::io::write_atomic;
use nodereg::losses::RegMode;
use nodereg::train::{grid_search, train, ExperimentConfig, TrainOutput};

#[derive(Parser)]
#[command(name = "nodereg", version, about = "Neural ODE training with Jacobian regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground-truth trajectory datasets from a JSON config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing dataset directory.
        #[arg(long)]
        force: bool,
    },
    /// Train a model on a generated dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory produced by `generate`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the regularization mode from the config.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<RegMode>,
        /// Override the regularization weight from the config.
        #[arg(long)]
        lambda: Option<f64>,
        /// Comma-separated λ grid; trains one model per value and keeps
        /// the best by validation MSE.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Evaluate a checkpoint against the test split of a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Evaluation horizon in model steps.
        #[arg(long)]
        horizon: usize,
    },
    /// Render metric CSVs as SVG plots.
    Plot {
        #[arg(long)]
        out: PathBuf,
        /// Relative-error series CSVs (t,value); repeat for an overlay.
        #[arg(long = "re")]
        re: Vec<PathBuf>,
        /// Conservation-error series CSV (t,value).
        #[arg(long)]
        cons: Option<PathBuf>,
        /// Final relative-error distribution CSV (trajectory,final_re).
        #[arg(long)]
        finals: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<RegMode, String> {
    match s {
        "none" => Ok(RegMode::None),
        "ad" => Ok(RegMode::Ad),
        "fd" => Ok(RegMode::Fd),
        other => Err(format!("unknown mode `{other}` (expected none|ad|fd)")),
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ExperimentConfig,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    /// Unix seconds; the only non-deterministic field in any artifact.
    generated_at_unix: u64,
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Domain(_)
        | Error::UnsupportedMode(_)
        | Error::DimensionMismatch { .. } => 1,
        Error::NonFinite(_)
        | Error::Singularity { .. }
        | Error::DegeneratePair { .. }
        | Error::NumericFailure { .. } => 2,
        Error::Io(_) | Error::Format(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run(cli: Cli) -> nodereg::Result<()> {
    match cli.command {
        Command::Generate { config, out, force } => cmd_generate(&config, &out, force),
        Command::Train {
            config,
            data,
            out,
            mode,
            lambda,
            grid,
        } => cmd_train(&config, &data, &out, mode, lambda, grid.as_deref()),
        Command::Eval {
            checkpoint,
            data,
            out,
            horizon,
        } => cmd_eval(&checkpoint, &data, &out, horizon),
        Command::Plot {
            out,
            re,
            cons,
            finals,
        } => cmd_plot(&out, &re, cons.as_deref(), finals.as_deref()),
    }
}

fn split_path(dir: &Path, split: &str, index: usize) -> PathBuf {
    dir.join(format!("{split}_{index}.njrt"))
}

fn cmd_generate(config: &Path, out: &Path, force: bool) -> nodereg::Result<()> {
    let cfg = load_config(config)?;
    let manifest_path = out.join("manifest.json");
    if manifest_path.exists() && !force {
        return Err(Error::Config(format!(
            "output dataset already exists at {}; pass --force to overwrite",
            out.display()
        )));
    }
    let data = datagen::generate(&cfg)?;
    for (split, trajs) in [
        ("train", &data.train),
        ("val", &data.val),
        ("test", &data.test),
    ] {
        for (i, traj) in trajs.iter().enumerate() {
            write_trajectory(&split_path(out, split, i), traj)?;
        }
    }
    let manifest = Manifest {
        config: cfg,
        n_train: data.train.len(),
        n_val: data.val.len(),
        n_test: data.test.len(),
        generated_at_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    save_json(&manifest_path, &manifest)?;
    println!(
        "generated train: {} trajectories, val: {}, test: {}",
        manifest.n_train, manifest.n_val, manifest.n_test
    );
    Ok(())
}

fn read_manifest(data: &Path) -> nodereg::Result<Manifest> {
    let text = std::fs::read_to_string(data.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest.json: {e}")))
}

fn read_split(data: &Path, split: &str, count: usize) -> nodereg::Result<Vec<Trajectory>> {
    (0..count)
        .map(|i| read_trajectory(&split_path(data, split, i)))
        .collect()
}

/// Subsample splits to the model step size and cut rollout chunks; FD
/// regularization needs two lookahead states per chunk.
fn prepare_chunks(cfg: &ExperimentConfig, trajs: &[Trajectory], lookahead: bool) -> Vec<Chunk> {
    let stride = cfg.stride();
    let strided: Vec<Trajectory> = trajs.iter().map(|t| t.subsample(stride)).collect();
    if lookahead {
        chunk_trajectories_lookahead(&strided, cfg.rollout_n)
    } else {
        chunk_trajectories(&strided, cfg.rollout_n)
    }
}

fn cmd_train(
    config: &Path,
    data: &Path,
    out: &Path,
    mode: Option<RegMode>,
    lambda: Option<f64>,
    grid: Option<&[f64]>,
) -> nodereg::Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(m) = mode {
        cfg.reg_mode = m;
    }
    if let Some(l) = lambda {
        cfg.lambda = l;
    }
    if cfg.reg_mode == RegMode::None && lambda.is_some() {
        eprintln!("warning: --mode none: lambda ignored");
    }
    cfg.validate()?;

    let manifest = read_manifest(data)?;
    if manifest.config.system != cfg.system {
        return Err(Error::Config(format!(
            "config.system: dataset was generated for {:?}",
            manifest.config.system
        )));
    }
    let train_trajs = read_split(data, "train", manifest.n_train)?;
    let val_trajs = read_split(data, "val", manifest.n_val)?;
    let lookahead = cfg.reg_mode == RegMode::Fd;
    let train_chunks = prepare_chunks(&cfg, &train_trajs, lookahead);
    let val_chunks = prepare_chunks(&cfg, &val_trajs, false);

    std::fs::create_dir_all(out)?;
    let output: TrainOutput = if let Some(lambdas) = grid {
        if lambdas.is_empty() {
            return Err(Error::Config("config.lambda: empty --grid".into()));
        }
        let gs = grid_search(&cfg, lambdas, &train_chunks, &val_chunks)?;
        write_grid(&out.join("grid.csv"), &gs.table)?;
        cfg.lambda = gs.best_lambda;
        println!("grid best lambda: {}", gs.best_lambda);
        gs.best
    } else {
        train(&cfg, &train_chunks, &val_chunks)?
    };
    if let Some(reason) = &output.failure {
        eprintln!("warning: training stopped early: {reason}");
    }
    write_checkpoint(&out.join("checkpoint.njck"), &output.best_params, &cfg)?;
    write_records(&out.join("records.csv"), &output.records)?;
    println!(
        "trained {} epochs, best validation MSE {:e}",
        output.records.len(),
        output.best_val_mse
    );
    Ok(())
}

fn cmd_eval(checkpoint: &Path, data: &Path, out: &Path, horizon: usize) -> nodereg::Result<()> {
    let (params, cfg) = read_checkpoint(checkpoint)?;
    let manifest = read_manifest(data)?;
    let tests = read_split(data, "test", manifest.n_test)?;
    let dim = tests
        .first()
        .ok_or_else(|| Error::Domain("dataset has no test trajectories".into()))?
        .dim();
    if params.state_dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: params.state_dim(),
            got: dim,
        });
    }
    let sys: System = cfg.system.system();
    let jac_mode = if dim <= 16 {
        JacobianMode::Full
    } else {
        JacobianMode::Hutchinson(4)
    };
    let report = evaluate(&params, &sys, &tests, horizon, cfg.stride(), jac_mode, cfg.seed)?;

    std::fs::create_dir_all(out)?;
    write_series(&out.join("re_series.csv"), "t,mean_re", &report.re_series)?;
    write_series(
        &out.join("cons_series.csv"),
        "t,cons_error",
        &report.cons_series,
    )?;
    write_finals(&out.join("finals.csv"), &report.final_re_distribution)?;
    save_json(&out.join("summary.json"), &report)?;
    println!(
        "evaluated {} trajectories over {} steps: {} diverged",
        report.n_trajectories, report.horizon, report.diverged_count
    );
    Ok(())
}

fn series_from_csv(path: &Path) -> nodereg::Result<Vec<(f64, f64)>> {
    let data = read_csv(path)?;
    if data.header.len() < 2 {
        return Err(Error::Format(format!(
            "{}: expected at least two columns",
            path.display()
        )));
    }
    Ok(data.rows.iter().map(|r| (r[0], r[1])).collect())
}

fn label_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_plot(
    out: &Path,
    re: &[PathBuf],
    cons: Option<&Path>,
    finals: Option<&Path>,
) -> nodereg::Result<()> {
    if re.is_empty() && cons.is_none() && finals.is_none() {
        return Err(Error::Config("plot: no input CSVs given".into()));
    }
    std::fs::create_dir_all(out)?;
    if !re.is_empty() {
        let mut series = Vec::new();
        for path in re {
            series.push((label_for(path), series_from_csv(path)?));
        }
        let svg = line_plot("relative error over time", &series, true)?;
        write_atomic(&out.join("re_series.svg"), svg.as_bytes())?;
    }
    if let Some(path) = cons {
        let series = vec![(label_for(path), series_from_csv(path)?)];
        let svg = line_plot("conservation error over time", &series, true)?;
        write_atomic(&out.join("cons_series.svg"), svg.as_bytes())?;
    }
    if let Some(path) = finals {
        let data = read_csv(path)?;
        let values: Vec<f64> = data.rows.iter().map(|r| r[1]).collect();
        let svg = histogram("final relative error", &values, 20)?;
        write_atomic(&out.join("finals_hist.svg"), svg.as_bytes())?;
    }
    println!("wrote plots to {}", out.display());
    Ok(())
}
