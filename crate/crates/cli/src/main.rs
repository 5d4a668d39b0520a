use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use krf_core::output;
use krf_core::pipeline::{self, RunOutcome};
use krf_core::scenario::{Scenario, PRESETS};
use krf_core::verify;

#[derive(Parser)]
#[command(name = "krf", version, about = "Kähler-Ricci flow on Hirzebruch surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full run: flow, monitors, GH schedule and every artifact.
    Run(Source),
    /// Flow and estimate monitors only, without the GH schedule.
    Monitor(Source),
    /// Full run, then print the GH table.
    Gh(Source),
    /// Seeded Fubini-Study pullback suite.
    Fslemma {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Acceptance criteria, all or one by number or name.
    Verify { criterion: Option<String> },
    /// Several scenarios in parallel, one subdirectory each.
    Sweep {
        #[arg(long = "scenario")]
        scenarios: Vec<PathBuf>,
        #[arg(long = "preset")]
        presets: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Source {
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Source {
    fn load(&self) -> Result<Scenario> {
        let mut s = match (&self.scenario, &self.preset) {
            (Some(path), _) => {
                Scenario::from_path(path).with_context(|| format!("loading {}", path.display()))?
            }
            (None, Some(name)) => Scenario::preset(name)?,
            (None, None) => bail!("pass --scenario <path> or --preset <{}>", PRESETS.join("|")),
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        Ok(s)
    }
}

fn report(outcome: &RunOutcome, dir: &Path) {
    println!(
        "{}: T = {}, c(T) = {}, {} snapshots, flow {:.2} s -> {}",
        outcome.scenario.name,
        outcome.t_sing,
        outcome.c_base,
        outcome.snapshots.len(),
        outcome.flow_seconds,
        dir.display()
    );
    if let Some(fit) = &outcome.fit {
        println!("decay exponent {} (residual {:e})", fit.exponent, fit.residual);
    }
    if let Some(gh) = &outcome.gh {
        if let Some(last) = gh.rows.last() {
            println!(
                "GH epsilon {} at t = {}, base diameter {}",
                last.epsilon, last.t, gh.base_diameter
            );
        }
    }
}

/// Prints the failed invariants and turns them into the exit status.
fn verdict(outcome: &RunOutcome) -> ExitCode {
    if outcome.passed() {
        return ExitCode::SUCCESS;
    }
    for f in &outcome.failures {
        eprintln!("invariant failed: {f}");
    }
    ExitCode::FAILURE
}

fn run(source: &Source, monitor_only: bool, print_gh: bool) -> Result<ExitCode> {
    let mut s = source.load()?;
    if monitor_only {
        s.gh_times.clear();
    }
    let dir = pipeline::output_dir(&s, source.out.as_deref());
    let outcome = pipeline::run_scenario(&s, &dir)?;
    report(&outcome, &dir);
    if print_gh {
        let gh = outcome.gh.as_ref().context("scenario has no GH schedule")?;
        println!("{}", output::GH_HEADER.join(","));
        for r in &gh.rows {
            let cauchy = r.cauchy_sup.map(output::num).unwrap_or_default();
            println!(
                "{},{},{},{},{},{},{cauchy}",
                r.t, r.epsilon, r.max_fiber_diam, r.distortion, r.sqrt_c, r.c2
            );
        }
    }
    Ok(verdict(&outcome))
}

fn fslemma(seed: Option<u64>, out: Option<PathBuf>) -> Result<ExitCode> {
    let seed = seed.unwrap_or(verify::LEMMA_SEED);
    let records = pipeline::fslemma(seed)?;
    let dir = out.unwrap_or_else(|| PathBuf::from("runs/fslemma"));
    output::ensure_dir(&dir)?;
    let path = dir.join("fslemma.csv");
    output::write_fslemma(&path, &records)?;
    let min = records.iter().map(|r| r.min_ratio).fold(f64::INFINITY, f64::min);
    println!("{} maps, min ratio {min} -> {}", records.len(), path.display());
    if min < 1.0 - 1e-9 {
        eprintln!("invariant failed: pullback bound, min ratio {min} < 1");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn verify_criteria(criterion: Option<String>) -> Result<ExitCode> {
    let results = match criterion {
        Some(id) => vec![verify::run_criterion(verify::resolve(&id)?)?],
        None => verify::run_all(),
    };
    for r in &results {
        println!("{}", r.line());
    }
    Ok(if results.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn sweep(paths: &[PathBuf], presets: &[String], out: Option<PathBuf>) -> Result<ExitCode> {
    let mut scenarios = Vec::new();
    for p in paths {
        scenarios.push(Scenario::from_path(p).with_context(|| format!("loading {}", p.display()))?);
    }
    for name in presets {
        scenarios.push(Scenario::preset(name)?);
    }
    if scenarios.is_empty() {
        scenarios = PRESETS.iter().map(|p| Scenario::preset(p)).collect::<krf_core::Result<_>>()?;
    }
    let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        bail!("sweep scenarios must have distinct names");
    }
    let root = out.unwrap_or_else(|| PathBuf::from("runs"));
    let mut code = ExitCode::SUCCESS;
    for (name, result) in pipeline::sweep(&scenarios, &root) {
        match result {
            Ok(outcome) => {
                report(&outcome, &root.join(&name));
                if verdict(&outcome) != ExitCode::SUCCESS {
                    code = ExitCode::FAILURE;
                }
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                code = ExitCode::FAILURE;
            }
        }
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(src) => run(&src, false, false),
        Command::Monitor(src) => run(&src, true, false),
        Command::Gh(src) => run(&src, false, true),
        Command::Fslemma { seed, out } => fslemma(seed, out),
        Command::Verify { criterion } => verify_criteria(criterion),
        Command::Sweep { scenarios, presets, out } => sweep(&scenarios, &presets, out),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
