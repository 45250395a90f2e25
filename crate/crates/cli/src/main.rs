mod config;
mod output;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use dynloc::geometry::SpaceSpec;

use config::{CheckKind, CheckSpec, Expect, ExperimentConfig, SCHEMA};
use output::{Artifact, Metadata};
use pipeline::{CheckSummary, Model};

#[derive(Parser)]
#[command(
    name = "dynloc",
    version,
    about = "Numerical laboratory for dynamical localization"
)]
struct Cli {
    /// Overrides the disorder seed and the ensemble master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the worker pool; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; falls back to the config, then `dynloc-out`.
    #[arg(long, global = true, env = "DYNLOC_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum summary followed by every configured check.
    Run { config: PathBuf },
    /// Diagonalize and write the spectrum.
    Spectrum { config: PathBuf },
    /// Moment series at the base site for every parameter set.
    Moments { config: PathBuf },
    /// Configured checks only.
    Diagnose { config: PathBuf },
    /// Built-in counterexamples.
    #[command(subcommand)]
    Counterexample(Counterexample),
    /// Disorder-averaged moments and kernel decay.
    Ensemble { config: PathBuf },
}

#[derive(Subcommand)]
enum Counterexample {
    /// Landau-level product bound.
    Landau(LandauArgs),
    /// Separated identical clusters.
    Cluster(ClusterArgs),
}

#[derive(Args)]
struct LandauArgs {
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 10_000)]
    n_max: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0])]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    zeta: f64,
}

#[derive(Args)]
struct ClusterArgs {
    /// Sites of the path graph each copy is built on.
    #[arg(long, default_value_t = 4)]
    base_sites: usize,
    #[arg(long, default_value_t = 2)]
    copies: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 40, 80])]
    separations: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
}

enum Mode {
    Run,
    Spectrum,
    Moments,
    Diagnose,
    Ensemble,
}

struct Outcome {
    ok: bool,
    report: serde_json::Value,
    artifacts: Vec<Artifact>,
}

fn synthetic(name: &str, check: CheckKind) -> ExperimentConfig {
    ExperimentConfig {
        schema: SCHEMA.into(),
        name: Some(name.into()),
        model: None,
        window: Default::default(),
        params: Default::default(),
        weight: None,
        base_site: None,
        time_grid: Default::default(),
        checks: vec![CheckSpec {
            check,
            expect: Expect::Fail,
        }],
        ensemble: None,
        output: Default::default(),
    }
}

fn print_check(s: &CheckSummary) {
    println!(
        "[{:02}] {:<20} {:<15} {}",
        s.index, s.kind, s.outcome, s.detail
    );
    if !s.ok {
        eprintln!(
            "check {} ({}) {}: {}",
            s.index, s.kind, s.outcome, s.inequality
        );
    }
}

fn run_checks(
    cfg: &ExperimentConfig,
    model: Option<&Model>,
) -> Result<(bool, Vec<CheckSummary>, Vec<Artifact>)> {
    let results = cfg
        .checks
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            pipeline::run_check(i, c, cfg, model)
                .with_context(|| format!("check {i} ({})", c.check.name()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summaries = Vec::new();
    let mut artifacts = Vec::new();
    for r in results {
        print_check(&r.summary);
        summaries.push(r.summary);
        artifacts.extend(r.artifacts);
    }
    Ok((summaries.iter().all(|s| s.ok), summaries, artifacts))
}

fn execute(mode: Mode, cfg: &ExperimentConfig, config_dir: &Path) -> Result<Outcome> {
    let needs_model = match mode {
        Mode::Spectrum | Mode::Moments => true,
        Mode::Run => cfg.model.is_some(),
        Mode::Diagnose => cfg.checks.iter().any(|c| c.check.needs_spectrum()),
        Mode::Ensemble => false,
    };
    let model = if needs_model {
        Some(pipeline::build_model(cfg, config_dir)?)
    } else {
        None
    };
    let mut artifacts = Vec::new();
    let mut report = json!({ "name": cfg.name });
    let ok = match mode {
        Mode::Spectrum => {
            artifacts.extend(pipeline::spectrum_artifacts(
                model.as_ref().unwrap(),
                cfg.output.csv(),
            )?);
            true
        }
        Mode::Moments => {
            let (ok, detail, arts) =
                pipeline::moment_artifacts(cfg, model.as_ref().unwrap(), "moments")?;
            println!("moments: {detail}");
            artifacts.extend(arts);
            report["detail"] = json!(detail);
            ok
        }
        Mode::Run | Mode::Diagnose => {
            if let (Mode::Run, Some(m)) = (&mode, &model) {
                artifacts.extend(pipeline::spectrum_artifacts(m, cfg.output.csv())?);
            }
            let (ok, summaries, arts) = run_checks(cfg, model.as_ref())?;
            artifacts.extend(arts);
            report["checks"] = serde_json::to_value(&summaries)?;
            ok
        }
        Mode::Ensemble => {
            let spec = pipeline::ensemble_spec(cfg)?;
            let r = dynloc::ensemble::ensemble_report(&spec)?;
            println!(
                "ensemble: σ̂ per base site {:.4?}, spread {:.1}%, translation {}",
                r.translation.sigma_hat,
                100.0 * r.translation.relative_spread,
                if r.translation.verdict {
                    "pass"
                } else {
                    "fail"
                }
            );
            let ok = r.translation.verdict;
            artifacts.extend(pipeline::ensemble_artifacts(
                "ensemble",
                r,
                cfg.output.csv(),
            )?);
            ok
        }
    };
    report["all_ok"] = json!(ok);
    Ok(Outcome {
        ok,
        report,
        artifacts,
    })
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.override_seed(s);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match try_main(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn try_main(cli: Cli) -> Result<bool> {
    let started = chrono::Utc::now().to_rfc3339();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building the worker pool")?;
    }
    let (mode, cfg, config_dir) = match cli.command {
        Command::Run { config } => (Mode::Run, load(&config, cli.seed)?, parent(&config)),
        Command::Spectrum { config } => (Mode::Spectrum, load(&config, cli.seed)?, parent(&config)),
        Command::Moments { config } => (Mode::Moments, load(&config, cli.seed)?, parent(&config)),
        Command::Diagnose { config } => (Mode::Diagnose, load(&config, cli.seed)?, parent(&config)),
        Command::Ensemble { config } => (Mode::Ensemble, load(&config, cli.seed)?, parent(&config)),
        Command::Counterexample(Counterexample::Landau(a)) => {
            let check = CheckKind::Landau {
                b: a.b,
                n_max: a.n_max,
                sigma: a.sigma,
                zeta: a.zeta,
            };
            (
                Mode::Diagnose,
                synthetic("landau", check),
                PathBuf::from("."),
            )
        }
        Command::Counterexample(Counterexample::Cluster(a)) => {
            let check = CheckKind::Cluster {
                base: SpaceSpec::Linear { n: a.base_sites },
                copies: a.copies,
                separations: a.separations,
                sigma: a.sigma,
                delta: a.delta,
            };
            (
                Mode::Diagnose,
                synthetic("cluster", check),
                PathBuf::from("."),
            )
        }
    };
    let out = cli
        .out
        .or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("dynloc-out"));
    let outcome = execute(mode, &cfg, &config_dir)?;
    let mut artifacts = outcome.artifacts;
    artifacts.push(Artifact::json("report.json", &outcome.report)?);
    artifacts.push(Artifact::json(
        "metadata.json",
        &Metadata {
            tool: "dynloc",
            version: env!("CARGO_PKG_VERSION"),
            command: std::env::args().collect(),
            threads: rayon::current_num_threads(),
            started,
            finished: chrono::Utc::now().to_rfc3339(),
        },
    )?);
    let written = output::commit(&out, artifacts)?;
    println!(
        "{} files written to {}; {}",
        written.len(),
        out.display(),
        if outcome.ok {
            "all checks ok"
        } else {
            "some checks failed"
        }
    );
    Ok(outcome.ok)
}

fn parent(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}
