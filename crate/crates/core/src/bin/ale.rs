use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ale_core::ensemble::{run_ensemble, threads_from_env, worker_pool, Mode};
use ale_core::io::{load_params, simulate_to_dir, write_json};
use ale_core::oracle::{run_suite, Suite};
use ale_core::AleError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ale",
    version,
    about = "ALE(alpha, eta) slit aggregation simulator and verification lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write run.jsonl, driver.csv, stats.json, boundary.svg.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run oracle suites and write oracle_reports.json.
    Verify {
        /// slit, sticky, deriv, symmetry, regions or all.
        #[arg(long)]
        suite: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run R independent simulations in parallel and pool their statistics.
    Ensemble {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
        /// Replace the sampler by a symmetric ±β walk.
        #[arg(long)]
        ssrw: bool,
    },
}

fn fail(e: &AleError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn load(config: &Path) -> Result<ale_core::sampler::SimParams, AleError> {
    let (params, warnings) = load_params(config)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(params)
}

fn simulate(config: &Path, out: &Path) -> ExitCode {
    let params = match load(config) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    match simulate_to_dir(&params, 0, out) {
        Ok((run, stats)) => {
            println!(
                "{} particles, tau_D = {:?}, xi_T = {:.6}, qv = {:.6}",
                run.state.n(),
                stats.stats.tau_d,
                stats.stats.endpoint,
                stats.stats.qv
            );
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.error.exit_code() as u8)
        }
    }
}

fn verify(suite: &str, out: &Path) -> ExitCode {
    let suite: Suite = match suite.parse() {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let reports = match run_suite(suite) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    for r in &reports {
        println!(
            "{:<22} {}  worst {:.3e}  envelope {:.3e}  samples {}",
            r.id,
            if r.pass { "PASS" } else { "FAIL" },
            r.worst_residual,
            r.envelope,
            r.samples
        );
    }
    if let Err(e) = std::fs::create_dir_all(out)
        .map_err(AleError::from)
        .and_then(|_| write_json(&out.join("oracle_reports.json"), &reports))
    {
        return fail(&e);
    }
    if reports.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn ensemble(config: &Path, runs: usize, out: &Path, ssrw: bool) -> ExitCode {
    let params = match load(config) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let mode = if ssrw { Mode::Ssrw } else { Mode::Ale };
    let result = std::fs::create_dir_all(out)
        .map_err(AleError::from)
        .and_then(|_| run_ensemble(&params, runs, mode, (mode == Mode::Ale).then_some(out)))
        .and_then(|rep| write_json(&out.join("ensemble_stats.json"), &rep).map(|_| rep));
    match result {
        Ok(rep) => {
            println!(
                "{} runs: frac_plus {:.4} (band ±{:.4}), qv/4T within 10%: {:.2}, KS p = {}, tau_D frequency {:.2}",
                rep.runs,
                rep.pooled_frac_plus,
                rep.frac_plus_band,
                rep.qv_within,
                rep.ks.map_or("n/a".to_string(), |k| format!("{:.3e}", k.p_value)),
                rep.stop_frequency
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match threads_from_env().and_then(worker_pool) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    pool.install(|| match &cli.command {
        Command::Simulate { config, out } => simulate(config, out),
        Command::Verify { suite, out } => verify(suite, out),
        Command::Ensemble {
            config,
            runs,
            out,
            ssrw,
        } => ensemble(config, *runs, out, *ssrw),
    })
}
