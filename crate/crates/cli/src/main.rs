use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use threewave_core::io::{self, parse_radius, PRESETS};
use threewave_core::lattice::enumerate_interactions;
use threewave_core::ModelConfig;

#[derive(Parser)]
#[command(
    name = "threewave",
    version,
    about = "Three-wave kinetic simulator on a circular lattice"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config document (TOML) or a run manifest (.json)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Named preset, used when no --config is given
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    /// Seed for the random angular profile
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory or file
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the final time
    #[arg(long = "t-end", global = true, value_name = "X")]
    t_end: Option<f64>,
    /// No progress output
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write manifest, CSV series, snapshot and verdicts
    Simulate,
    /// Re-run every check on a run directory
    Verify {
        /// Directory written by `simulate` (defaults to --out)
        run_dir: Option<PathBuf>,
    },
    /// List the resonances feeding a radius from a support set
    Resonances {
        /// Target radius, e.g. `1`, `2/3` or `5/3^2`
        target: String,
        /// Comma-separated support radii (defaults to the initial shells of the config)
        #[arg(long)]
        support: Option<String>,
    },
    /// List presets, or print one as a config document
    Presets { name: Option<String> },
}

impl Common {
    fn config(&self) -> Result<(ModelConfig, Option<String>)> {
        let (mut config, name) = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => bail!("give either --config or --preset, not both"),
            (Some(path), None) => io::load_config(path)?,
            (None, Some(name)) => (io::preset(name)?, Some(name.clone())),
            (None, None) => (io::preset("default")?, Some("default".to_string())),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(t) = self.t_end {
            config.t_end = t;
        }
        config.validate()?;
        Ok((config, name))
    }
}

fn simulate(common: &Common) -> Result<ExitCode> {
    let (config, name) = common.config()?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    let quiet = common.quiet;
    let mut progress = |r: &threewave_core::DiagnosticsRecord| {
        if !quiet {
            eprintln!(
                "t = {:>9.4}  mass = {:.6e}  condensate = {:.6e}  energy defect = {:.2e}",
                r.t, r.reduced.positive_mass, r.reduced.condensate, r.energy_defect
            );
        }
    };
    let result = io::simulate(&config, name.as_deref(), &out, &mut progress)
        .with_context(|| format!("run in {}", out.display()))?;
    let failed: Vec<&String> = result
        .verdicts
        .iter()
        .filter(|(_, v)| v.ok == Some(false))
        .map(|(k, _)| k)
        .collect();
    if !quiet {
        eprintln!(
            "wrote {} records to {}",
            result.records.len(),
            out.display()
        );
        for k in &failed {
            eprintln!("check failed: {k}");
        }
    }
    Ok(if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn verify(common: &Common, run_dir: Option<PathBuf>) -> Result<ExitCode> {
    let Some(dir) = run_dir.or_else(|| common.out.clone()) else {
        bail!("verify needs a run directory");
    };
    let verdicts = io::verify_run(&dir)?;
    let text = serde_json::to_string_pretty(&verdicts)?;
    println!("{text}");
    let failed = verdicts.values().any(|v| v.ok == Some(false));
    if !common.quiet {
        for (k, v) in &verdicts {
            let status = match v.ok {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "info",
            };
            eprintln!("{status}  {k}");
        }
    }
    Ok(if failed {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn resonances(common: &Common, target: &str, support: Option<&str>) -> Result<ExitCode> {
    let (config, _) = common.config()?;
    let xi = config.xi;
    let target = parse_radius(target, xi)?;
    let support = match support {
        Some(list) => list
            .split(',')
            .map(|s| parse_radius(s, xi))
            .collect::<Result<Vec<_>, _>>()?,
        None => (0..=config.rho_max)
            .map(|rho| config.inverse_power(rho))
            .collect(),
    };
    let triples = enumerate_interactions(&support, &target)?;
    for t in &triples {
        let line = match t.kind {
            threewave_core::TripleKind::Merge => format!("merge  {} + {} = {}", t.a, t.b, t.c),
            threewave_core::TripleKind::Split => format!("split  {} - {} = {}", t.b, t.a, t.c),
        };
        println!("{line}");
    }
    if !common.quiet {
        eprintln!("{} resonances", triples.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn presets(name: Option<&str>) -> Result<ExitCode> {
    match name {
        None => PRESETS.iter().for_each(|p| println!("{p}")),
        Some(n) => print!("{}", io::config_to_toml(&io::preset(n)?)),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate => simulate(&cli.common),
        Command::Verify { run_dir } => verify(&cli.common, run_dir.clone()),
        Command::Resonances { target, support } => {
            resonances(&cli.common, target, support.as_deref())
        }
        Command::Presets { name } => presets(name.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
