use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sindyu::config::{config_help, RunConfig};
use sindyu::pipeline;

/// Sparse identification of forced dynamics from time series.
#[derive(Parser, Debug)]
#[command(name = "sindyu", version, after_help = config_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run config; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set tv_reg=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    plant: Option<String>,
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    noise_sigma: Option<f64>,
    #[arg(long, global = true, value_enum)]
    diff: Option<Diff>,
    #[arg(long, global = true)]
    tv_reg: Option<f64>,
    #[arg(long, global = true)]
    tv_iters: Option<usize>,
    #[arg(long, global = true, value_enum)]
    selection: Option<Selection>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Model files for `compare`.
    #[arg(long, global = true, num_args = 1..)]
    models: Vec<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Simulate a builtin plant: dataset CSV, truth manifest, signal record.
    Simulate,
    /// Fit a sparse model: model file, path tables, selection summary.
    Fit,
    /// Held-out, outside-perturbation and long-time reports.
    Evaluate,
    /// Common-term tables across the `models`.
    Compare,
    /// Print the model's equations.
    Render,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Diff {
    Tv,
    Central,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Selection {
    CvPeak,
    Score,
}

fn overrides(cli: &Cli) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        out.push((k.trim().to_string(), v.to_string()));
    }
    let json = |v: serde_json::Value| v.to_string();
    let path = |p: &PathBuf| json(serde_json::Value::String(p.display().to_string()));
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    };
    push("seed", cli.seed.map(|v| v.to_string()));
    push("plant", cli.plant.as_ref().map(|v| json(v.clone().into())));
    push("dataset", cli.dataset.as_ref().map(path));
    push("out_dir", cli.out_dir.as_ref().map(path));
    push("noise_sigma", cli.noise_sigma.map(|v| v.to_string()));
    push(
        "diff",
        cli.diff.map(|d| match d {
            Diff::Tv => "tv".into(),
            Diff::Central => "central".into(),
        }),
    );
    push("tv_reg", cli.tv_reg.map(|v| v.to_string()));
    push("tv_iters", cli.tv_iters.map(|v| v.to_string()));
    push(
        "selection",
        cli.selection.map(|s| match s {
            Selection::CvPeak => "cv-peak".into(),
            Selection::Score => "score".into(),
        }),
    );
    push("model", cli.model.as_ref().map(path));
    if !cli.models.is_empty() {
        let list: Vec<String> = cli.models.iter().map(|p| p.display().to_string()).collect();
        push("models", Some(json(list.into())));
    }
    Ok(out)
}

fn run(cli: &Cli) -> sindyu::Result<Vec<PathBuf>> {
    let ov = overrides(cli).map_err(sindyu::Error::Schema)?;
    let cfg = RunConfig::load(cli.config.as_deref(), &ov)?;
    match cli.command {
        Command::Simulate => pipeline::cmd_simulate(&cfg),
        Command::Fit => echo(pipeline::cmd_fit(&cfg)?, &["selection.txt"]),
        Command::Evaluate => echo(pipeline::cmd_evaluate(&cfg)?, &["report.txt"]),
        Command::Compare => echo(pipeline::cmd_compare(&cfg)?, &["compare.txt"]),
        Command::Render => {
            let (text, written) = pipeline::cmd_render(&cfg)?;
            print!("{text}");
            Ok(written)
        }
    }
}

/// Prints the written files named in `names` to stdout.
fn echo(written: Vec<PathBuf>, names: &[&str]) -> sindyu::Result<Vec<PathBuf>> {
    for p in &written {
        if p.file_name().and_then(|n| n.to_str()).is_some_and(|n| names.contains(&n)) {
            print!("{}", std::fs::read_to_string(p)?);
        }
    }
    Ok(written)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(written) => {
            for p in written {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
