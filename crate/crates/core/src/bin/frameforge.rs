use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use frameforge::config::ExperimentConfig;
use frameforge::experiment::{cmd_compare, cmd_reconstruct, cmd_synth};
use frameforge::solvers::Model;
use frameforge::{Error, Result};

#[derive(Parser)]
#[command(name = "frameforge", version, about = "Joint PET-MRI reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (flat key=value file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for phantom, mask and noise.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Model name (analysis-pet, analysis-mri, ddtf-pet, ddtf-mri, janal, jstf, jsddtf).
    #[arg(long, global = true)]
    model: Option<String>,

    /// Image side length.
    #[arg(long, global = true)]
    size: Option<usize>,

    /// Outer iterations.
    #[arg(long, global = true)]
    iters: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom pair and its noisy PET and MRI data.
    Synth,
    /// Reconstruct from a bundle; results go to <out>/<model>/.
    Reconstruct {
        /// Bundle directory; defaults to the output directory.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Run several models on the bundle in <out> and tabulate their metrics.
    Compare {
        /// Comma separated model names; all models when omitted.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
    },
    /// Check the numerical invariants.
    Verify,
}

fn overrides(cli: &Cli) -> Vec<(String, String)> {
    let mut o = Vec::new();
    if let Some(m) = &cli.model {
        o.push(("model".into(), m.clone()));
    }
    if let Some(s) = cli.seed {
        for k in ["phantom.seed", "mask.seed", "noise.seed"] {
            o.push((k.into(), s.to_string()));
        }
    }
    if let Some(n) = cli.size {
        o.push(("phantom.size".into(), n.to_string()));
    }
    if let Some(n) = cli.iters {
        o.push(("solver.outer_iters".into(), n.to_string()));
    }
    if let Some(d) = &cli.out {
        o.push(("output.dir".into(), d.display().to_string()));
    }
    o
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?,
        None => String::new(),
    };
    ExperimentConfig::parse_with_overrides(&text, &overrides(cli))
}

fn limit_threads() -> Result<()> {
    let Ok(v) = std::env::var("FRAMEFORGE_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("FRAMEFORGE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<()> {
    limit_threads()?;
    let config = load_config(cli)?;
    match &cli.command {
        Command::Synth => {
            let bundle = cmd_synth(&config, &config.output)?;
            println!(
                "wrote bundle to {} ({} PET rays, {} k-space samples)",
                config.output.display(),
                bundle.pet_counts.len(),
                bundle.kspace.len()
            );
        }
        Command::Reconstruct { bundle } => {
            let bundle_dir = bundle.clone().unwrap_or_else(|| config.output.clone());
            let out = config.output.join(config.model.name());
            match cmd_reconstruct(&config, &bundle_dir, &out) {
                Ok(run) => {
                    let bundle = frameforge::experiment::Bundle::read(&bundle_dir)?;
                    for (modality, m) in run.metrics(&bundle)? {
                        println!(
                            "{} {modality}: RelErr {:.4}  PSNR {:.2}  Corr {:.4}",
                            run.model, m.rel_err, m.psnr, m.corr
                        );
                    }
                    println!("results in {}", out.display());
                }
                Err(e @ Error::InvariantBreach { .. }) => {
                    eprintln!("diagnostic written to {}", out.join("breach.txt").display());
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
        }
        Command::Compare { models } => {
            let models = match models {
                Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<Model>>>()?,
                None => Model::ALL.to_vec(),
            };
            let iters = cli.iters;
            let table = cmd_compare(&config.output, &models, &|p| {
                if let Some(n) = iters {
                    p.outer_iters = n;
                }
            })?;
            print!("{}", table.to_markdown());
        }
        Command::Verify => {
            let checks = frameforge::verify::run_checks(config.phantom.seed)?;
            let mut failed = 0;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(Error::ConstraintViolation(format!("{failed} of {} checks failed", checks.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
