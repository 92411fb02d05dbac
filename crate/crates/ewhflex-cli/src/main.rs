//! `ewhflex` — aggregate water-heater flexibility simulator.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use ewhflex_cli::{charts, report, runner, scenario};

#[derive(Parser)]
#[command(
    name = "ewhflex",
    about = "Closed-loop demand-response simulation for aggregated electric water heaters",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario end to end: margins, closed loop, reports, charts.
    Run {
        /// Scenario TOML file.
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: out/<scenario-name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip SVG chart emission.
        #[arg(long)]
        no_charts: bool,
    },
    /// Estimate flexibility profiles and margins only.
    Flex {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_charts: bool,
    },
    /// Run every scenario file (*.toml) in a directory.
    Batch {
        dir: PathBuf,
        /// Override every scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output root (default: out); each run lands in <out>/<name>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_charts: bool,
    },
}

fn default_out(name: &str, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| Path::new("out").join(name))
}

fn run_one(path: &Path, seed: Option<u64>, out: Option<PathBuf>, no_charts: bool) -> Result<String> {
    let resolved = scenario::load_resolved(path, seed)?;
    let dir = default_out(&resolved.name, out);
    let run = runner::run_scenario(&resolved)
        .with_context(|| format!("running scenario {}", resolved.name))?;
    report::write_run_reports(&dir, &resolved, &run)?;
    if !no_charts {
        charts::write_run_charts(&dir, &run)?;
    }
    Ok(format!(
        "{} → {}",
        report::summary_line(&resolved, &run),
        dir.display()
    ))
}

fn flex_one(path: &Path, seed: Option<u64>, out: Option<PathBuf>, no_charts: bool) -> Result<String> {
    let resolved = scenario::load_resolved(path, seed)?;
    let dir = default_out(&resolved.name, out);
    let flex = runner::run_flex(&resolved)
        .with_context(|| format!("estimating profiles for {}", resolved.name))?;
    report::write_flex_reports(&dir, &resolved, &flex)?;
    if !no_charts {
        charts::write_flex_chart(&dir, &flex)?;
    }
    let mut line = format!("{}: profiles over {} minutes", resolved.name, resolved.horizon_min);
    for r in &flex.requests {
        line.push_str(&format!(
            "; window {}+{}: up {:.1} kW, down {:.1} kW → request {:.1} kW",
            r.spec.start_tau_min,
            r.spec.duration_min,
            r.margin_up_kw,
            r.margin_down_kw,
            r.delta_p_star_kw
        ));
    }
    line.push_str(&format!(" → {}", dir.display()));
    Ok(line)
}

fn batch(dir: &Path, seed: Option<u64>, out: Option<PathBuf>, no_charts: bool) -> Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no scenario files in {}", dir.display());
    }
    let out_root = out.unwrap_or_else(|| PathBuf::from("out"));
    let results: Vec<(PathBuf, Result<String>)> = files
        .par_iter()
        .map(|path| {
            let name_out = scenario::load(path)
                .map(|f| out_root.join(&f.name))
                .unwrap_or_else(|_| out_root.join("invalid"));
            (path.clone(), run_one(path, seed, Some(name_out), no_charts))
        })
        .collect();
    let mut failures = 0usize;
    for (path, result) in results {
        match result {
            Ok(line) => println!("{line}"),
            Err(err) => {
                failures += 1;
                eprintln!("{}: FAILED: {err:#}", path.display());
            }
        }
    }
    if failures > 0 {
        bail!("{failures} scenario(s) failed");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            no_charts,
        } => {
            let line = run_one(&scenario, seed, out, no_charts)?;
            println!("{line}");
        }
        Command::Flex {
            scenario,
            seed,
            out,
            no_charts,
        } => {
            let line = flex_one(&scenario, seed, out, no_charts)?;
            println!("{line}");
        }
        Command::Batch {
            dir,
            seed,
            out,
            no_charts,
        } => batch(&dir, seed, out, no_charts)?,
    }
    Ok(())
}
