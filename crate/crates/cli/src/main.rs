//! Experiment runner for the string-field laboratory: seeded reproducible
//! runs of every operation, artifact persistence, and plot-data emission.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use manifest::ArtifactWriter;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "stringlab",
    about = "Cut-off closed bosonic string field theory laboratory",
    version
)]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config entry: --set section.key=value (repeatable).
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,
    /// Override global.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the configuration and report every violated invariant.
    Validate,
    /// Dump the truncated Fock basis and heat-trace diagnostics.
    FockDump,
    /// Monte-Carlo two-point function against the analytic covariance.
    Twopoint,
    /// Two-dimensional Feynman–Kac lattice check.
    FkCheck,
    /// Vertex diagnostics: smear masses, refinement table, sample values.
    Vertex,
    /// Partition function Z(λ) over a λ grid.
    Partition,
    /// Coupled-cutoff Cauchy estimator along the escalation schedule.
    Cauchy,
    /// Enumerate directed trivalent ribbon graph classes.
    Graphs {
        /// Vertex-pair count n (defaults to graphs.n_max).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Wick moments of Re I with the per-class breakdown.
    Moment,
    /// Graph activities along the v schedule.
    Activity,
    /// Build the glued surface and export the mesh.
    Surface,
    /// FEM spectrum of (-Δ + m²).
    Spectrum,
    /// Zeta-regularized log-determinant (with torus oracle comparison).
    Detlap,
    /// Activity-vs-determinant comparison table.
    Conjecture,
}

fn exit_code_for(err: &anyhow::Error) -> (u8, &'static str) {
    if let Some(core) = err.downcast_ref::<sft_core::Error>() {
        match core {
            sft_core::Error::Config(_) | sft_core::Error::Domain(_) => (2, "config"),
            sft_core::Error::Numeric(_) => (3, "numeric"),
            sft_core::Error::Capacity(_) => (4, "capacity"),
            sft_core::Error::Usage(_) | sft_core::Error::Constraint(_) => (1, "usage"),
        }
    } else {
        (1, "error")
    }
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();

    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)
            .map_err(|e| anyhow::Error::from(sft_core::Error::Config(format!("{e:#}"))))?,
        None => ExperimentConfig::default(),
    };
    for ov in &cli.overrides {
        cfg.apply_override(ov)
            .map_err(|e| anyhow::Error::from(sft_core::Error::Config(format!("{e:#}"))))?;
    }
    if let Some(seed) = cli.seed {
        cfg.global.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.global.workers = workers;
    }

    if let Command::Validate = cli.command {
        let violations = cfg.violations();
        if violations.is_empty() {
            println!("configuration valid: no violated invariants");
            return Ok(());
        }
        for v in &violations {
            println!("violation: {v}");
        }
        return Err(sft_core::Error::Config(format!(
            "{} invariant(s) violated",
            violations.len()
        ))
        .into());
    }

    // other commands need a valid config
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(sft_core::Error::Config(violations.join("; ")).into());
    }

    if cfg.global.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.global.workers)
            .build_global()
            .ok();
    }

    let mut writer = ArtifactWriter::new(&cli.out)?;
    let name = match &cli.command {
        Command::Validate => unreachable!(),
        Command::FockDump => {
            commands::fock_dump(&cfg, &mut writer)?;
            "fock-dump"
        }
        Command::Twopoint => {
            commands::twopoint(&cfg, &mut writer)?;
            "twopoint"
        }
        Command::FkCheck => {
            commands::fk_check(&cfg, &mut writer)?;
            "fk-check"
        }
        Command::Vertex => {
            commands::vertex(&cfg, &mut writer)?;
            "vertex"
        }
        Command::Partition => {
            commands::partition(&cfg, &mut writer)?;
            "partition"
        }
        Command::Cauchy => {
            commands::cauchy(&cfg, &mut writer)?;
            "cauchy"
        }
        Command::Graphs { n } => {
            commands::graphs_cmd(&cfg, *n, &mut writer)?;
            "graphs"
        }
        Command::Moment => {
            commands::moment(&cfg, &mut writer)?;
            "moment"
        }
        Command::Activity => {
            commands::activity(&cfg, &mut writer)?;
            "activity"
        }
        Command::Surface => {
            commands::surface(&cfg, &mut writer)?;
            "surface"
        }
        Command::Spectrum => {
            commands::spectrum(&cfg, &mut writer)?;
            "spectrum"
        }
        Command::Detlap => {
            commands::detlap(&cfg, &mut writer)?;
            "detlap"
        }
        Command::Conjecture => {
            commands::conjecture_cmd(&cfg, &mut writer)?;
            "conjecture"
        }
    };
    let manifest_path = writer.finish(name, &cfg.canonical_hash())?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = exit_code_for(&err);
            let payload = serde_json::json!({
                "error": { "kind": kind, "message": format!("{err:#}") }
            });
            eprintln!("{payload}");
            ExitCode::from(code)
        }
    }
}
