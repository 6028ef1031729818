use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use missbandit::cache::{self, DEFAULT_MAX_STATE};
use missbandit::output;
use missbandit::plan::{self, CellOutcome, ExperimentPlan, Progress};
use missbandit::reproduce;
use missbandit_core::{Calibration, GittinsTable};

/// Two-armed Bernoulli bandit trials with missing outcomes.
#[derive(Debug, Parser)]
#[command(name = "missbandit", version)]
struct Cli {
    /// Master seed (overrides the plan's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Multiply every replication count by this factor.
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a TOML plan and write one CSV row per cell.
    Run {
        /// Plan file.
        plan: PathBuf,
        /// Output CSV.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Build (or load from the cache) a Gittins index table.
    GittinsTable {
        #[arg(long, default_value_t = 0.99)]
        discount: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_STATE)]
        max_state: u32,
        #[arg(long, default_value_t = 1e-5, allow_negative_numbers = true)]
        tol: f64,
        /// Cache directory (default: $MISSBANDIT_CACHE_DIR or ./gittins-cache).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Reproduce a named figure: CSV plus JSON manifest.
    Reproduce {
        /// Figure id (fig2 to fig6, s3, s4, s6 to s13).
        id: String,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<ExitCode> {
    match &cli.command {
        Command::Run { plan, output } => {
            let text = std::fs::read_to_string(plan).with_context(|| format!("reading {}", plan.display()))?;
            let mut parsed = ExperimentPlan::from_toml_str(&text).with_context(|| plan.display().to_string())?;
            if let Some(scale) = cli.scale {
                check_scale(scale)?;
                parsed = parsed.scaled(scale);
            }
            if let Some(seed) = cli.seed {
                parsed.seed = seed;
            }
            let outcomes = execute(&parsed, cli.quiet)?;
            output::write_csv_file(&output::rows(&outcomes), output)
                .with_context(|| format!("writing {}", output.display()))?;
            Ok(report_failures(&outcomes))
        }
        Command::GittinsTable { discount, max_state, tol, output } => {
            if !(*tol > 0.0) {
                bail!("--tol must be positive, got {tol}");
            }
            let calibration = Calibration::with_tolerance(*discount, *tol)?;
            let dir = output.clone().unwrap_or_else(cache::cache_dir);
            let cached = cache::load_or_build(&calibration, *max_state, &dir)?;
            let state = if cached.hit { "loaded" } else { "built" };
            println!("{state} {}", cached.path.display());
            println!("G(1,1) = {:.6}", cached.table.lookup(1, 1)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Reproduce { id, out_dir } => {
            let scale = cli.scale.unwrap_or(1.0);
            check_scale(scale)?;
            let figure = reproduce::figure(id, scale, cli.seed.unwrap_or(1))?;
            let outcomes = execute(&figure.plan, cli.quiet)?;
            std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let csv_path = out_dir.join(&figure.manifest.csv);
            output::write_csv_file(&output::rows(&outcomes), &csv_path)
                .with_context(|| format!("writing {}", csv_path.display()))?;
            let manifest_path = out_dir.join(format!("{}.json", figure.manifest.id));
            write_manifest(&figure.manifest, &manifest_path)?;
            if !cli.quiet {
                eprintln!("wrote {} and {}", csv_path.display(), manifest_path.display());
            }
            Ok(report_failures(&outcomes))
        }
    }
}

fn check_scale(scale: f64) -> anyhow::Result<()> {
    if !(scale.is_finite() && scale > 0.0) {
        bail!("--scale must be positive, got {scale}");
    }
    Ok(())
}

fn execute(plan: &ExperimentPlan, quiet: bool) -> anyhow::Result<Vec<CellOutcome>> {
    let table = gittins_for(plan, quiet)?;
    let progress = |p: Progress| {
        eprint!("\r{}/{} cells, {}/{} trials", p.cells_done, p.cells_total, p.trials_done, p.trials_total);
    };
    let outcomes = plan::run_plan(plan, table.as_ref(), if quiet { None } else { Some(&progress) });
    if !quiet && !outcomes.is_empty() {
        eprintln!();
    }
    Ok(outcomes)
}

fn gittins_for(plan: &ExperimentPlan, quiet: bool) -> anyhow::Result<Option<GittinsTable>> {
    let Some(policy) = plan.policies.iter().find(|p| p.algorithm.needs_gittins()) else {
        return Ok(None);
    };
    if plan.scenarios.is_empty() {
        return Ok(None);
    }
    let needed = u32::try_from(plan.max_reachable_total()).context("trial too large for a Gittins table")?;
    let max_state = needed.max(DEFAULT_MAX_STATE);
    let calibration = Calibration::with_discount(policy.discount)?;
    let dir = cache::cache_dir();
    if !quiet {
        eprintln!("gittins table d={} B={max_state} in {}", policy.discount, dir.display());
    }
    Ok(Some(cache::load_or_build(&calibration, max_state, &dir)?.table))
}

fn write_manifest(manifest: &reproduce::Manifest, path: &Path) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn report_failures(outcomes: &[CellOutcome]) -> ExitCode {
    let failed: Vec<_> = outcomes.iter().filter(|o| o.report.is_err()).collect();
    if failed.is_empty() {
        return ExitCode::SUCCESS;
    }
    eprintln!("{} of {} cells failed:", failed.len(), outcomes.len());
    for o in failed {
        let c = &o.cell;
        eprintln!(
            "  {} {} miss=({}, {}) {}: {}",
            c.scenario.label,
            c.policy.algorithm.name(),
            c.missingness.p0_missing,
            c.missingness.p1_missing,
            c.mode,
            o.report.as_ref().unwrap_err()
        );
    }
    ExitCode::FAILURE
}
