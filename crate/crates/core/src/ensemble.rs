//! Many independent runs in parallel and their pooled statistics.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::{
    ensemble_normality, pooled_frac_plus, DriverPath, KsResult, McLeishSums, StatsReport,
};
use crate::error::{AleError, Result};
use crate::io::{self, RunStats};
use crate::sampler::SimParams;
use crate::sim::{run_rng, simulate};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "ALE_THREADS";

/// Worker count from `ALE_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(AleError::Config(format!(
                "{THREADS_ENV}={v:?} is not a positive integer"
            ))),
        },
    }
}

/// A pool with `threads` workers, or rayon's default when `None`.
pub fn worker_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| AleError::Config(e.to_string()))
}

/// How runs are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Ale,
    /// Simple symmetric random walk with steps `±β`, bypassing the sampler.
    Ssrw,
}

/// Driver and statistics of a synthetic `±β` walk with `N` steps.
pub fn ssrw_run(params: &SimParams, run_index: u64) -> Result<(DriverPath, StatsReport)> {
    params.validate()?;
    let n = params.n_steps();
    let beta = params.new_cluster()?.beta();
    let mut rng = run_rng(params.seed, run_index);
    let mut angles = Vec::with_capacity(n + 1);
    let mut x = 0.0f64;
    let mut m: i64 = 0;
    let mut plus = 0usize;
    angles.push(0.0);
    for _ in 0..n {
        let up = rng.random_bool(0.5);
        m += if up { 1 } else { -1 };
        plus += up as usize;
        x = m as f64 * beta;
        angles.push(x);
    }
    let mut path = DriverPath {
        c: params.c,
        t: params.horizon(),
        steps: angles,
        stopped_at: None,
    };
    path.t = params.horizon();
    let qv = n as f64 * beta * beta;
    let report = StatsReport {
        tau_d: None,
        steps: n,
        frac_plus: if n == 0 { 0.5 } else { plus as f64 / n as f64 },
        qv,
        mcleish: McLeishSums {
            tail2: 0.0,
            m2: qv,
            abs_m1: 0.0,
        },
        endpoint: x,
        horizon: path.t,
        offsets: vec![0.0; n],
    };
    Ok((path, report))
}

/// Contents of `ensemble_stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub mode: Mode,
    pub params: SimParams,
    pub runs: usize,
    /// Planned horizon `T = N·c`.
    pub horizon: f64,
    pub pooled_frac_plus: f64,
    /// Half-width `4·(4·R·N)^{−1/2}` of the acceptance band around ½.
    pub frac_plus_band: f64,
    /// `qv/(4T)` per run.
    pub qv_ratios: Vec<f64>,
    /// Fraction of runs with `qv/(4T) ∈ [0.9, 1.1]`.
    pub qv_within: f64,
    /// `None` with fewer than 30 runs.
    pub ks: Option<KsResult>,
    pub stopped_runs: usize,
    pub stop_frequency: f64,
    pub reports: Vec<StatsReport>,
}

/// Pools per-run statistics.
pub fn summarize(
    mode: Mode,
    params: &SimParams,
    reports: Vec<StatsReport>,
) -> Result<EnsembleReport> {
    let runs = reports.len();
    if runs == 0 {
        return Err(AleError::Config(
            "an ensemble needs at least one run".into(),
        ));
    }
    let t = params.horizon();
    let qv_ratios: Vec<f64> = reports
        .iter()
        .map(|r| if t > 0.0 { r.qv / (4.0 * t) } else { 0.0 })
        .collect();
    let qv_within = qv_ratios
        .iter()
        .filter(|q| (0.9..=1.1).contains(*q))
        .count() as f64
        / runs as f64;
    let ks = if runs >= 30 && t > 0.0 {
        Some(ensemble_normality(&reports, t)?)
    } else {
        None
    };
    let stopped_runs = reports.iter().filter(|r| r.tau_d.is_some()).count();
    let total = (runs * params.n_steps()).max(1) as f64;
    Ok(EnsembleReport {
        mode,
        params: params.clone(),
        runs,
        horizon: t,
        pooled_frac_plus: pooled_frac_plus(&reports),
        frac_plus_band: 4.0 / (4.0 * total).sqrt(),
        qv_ratios,
        qv_within,
        ks,
        stopped_runs,
        stop_frequency: stopped_runs as f64 / runs as f64,
        reports,
    })
}

/// Runs `0..runs` in parallel on the current rayon pool. With `out`, run `i`
/// writes its own directory `out/run_{i:04}`.
pub fn run_ensemble(
    params: &SimParams,
    runs: usize,
    mode: Mode,
    out: Option<&Path>,
) -> Result<EnsembleReport> {
    if runs == 0 {
        return Err(AleError::Config("--runs must be at least 1".into()));
    }
    params.validate()?;
    let reports: Result<Vec<StatsReport>> = (0..runs as u64)
        .into_par_iter()
        .map(|i| -> Result<StatsReport> {
            match mode {
                Mode::Ssrw => Ok(ssrw_run(params, i)?.1),
                Mode::Ale => match out {
                    Some(dir) => {
                        let d = dir.join(format!("run_{i:04}"));
                        io::simulate_to_dir(params, i, &d)
                            .map(|(_, s)| s.stats)
                            .map_err(|f| f.error)
                    }
                    None => {
                        let run = simulate(params, i, |_| {})?;
                        Ok(io::run_stats(&run)?.stats)
                    }
                },
            }
        })
        .collect();
    summarize(mode, params, reports?)
}

/// Single-run convenience used when `R = 1`.
pub fn single(params: &SimParams, dir: &Path) -> std::result::Result<RunStats, io::RunFailure> {
    io::simulate_to_dir(params, 0, dir).map(|(_, s)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walk_params(n: usize) -> SimParams {
        let mut p = SimParams::new(1e-3, 4.0);
        p.total = None;
        p.steps = Some(n);
        p.seed = 5;
        p
    }

    #[test]
    fn ssrw_walk_is_a_fair_walk() {
        let p = walk_params(1000);
        let rep = run_ensemble(&p, 200, Mode::Ssrw, None).unwrap();
        let beta = p.new_cluster().unwrap().beta();
        for r in &rep.reports {
            assert!((r.qv - 1000.0 * beta * beta).abs() < 1e-12);
        }
        assert!(rep.ks.unwrap().p_value > 1e-3);
        assert!((rep.pooled_frac_plus - 0.5).abs() < rep.frac_plus_band);
        assert_eq!(rep.stop_frequency, 0.0);
    }

    #[test]
    fn ssrw_path_matches_report() {
        let (path, r) = ssrw_run(&walk_params(50), 3).unwrap();
        assert_eq!(path.steps.len(), 51);
        assert!((path.quadratic_variation() - r.qv).abs() < 1e-12);
        assert_eq!(path.endpoint(), r.endpoint);
    }

    #[test]
    fn small_ensembles_skip_ks() {
        let rep = run_ensemble(&walk_params(10), 5, Mode::Ssrw, None).unwrap();
        assert!(rep.ks.is_none());
        assert!(run_ensemble(&walk_params(10), 0, Mode::Ssrw, None).is_err());
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let mut p = walk_params(3);
        p.grid.coarse = 256;
        let a = worker_pool(Some(1))
            .unwrap()
            .install(|| run_ensemble(&p, 4, Mode::Ale, None))
            .unwrap();
        let b = worker_pool(Some(3))
            .unwrap()
            .install(|| run_ensemble(&p, 4, Mode::Ale, None))
            .unwrap();
        assert_eq!(a, b);
    }
}
