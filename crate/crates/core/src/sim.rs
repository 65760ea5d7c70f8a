//! The ALE model loop: build `h_{n+1}`, draw `θ_{n+1}`, pick `c_{n+1}`, attach.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::AnchoredAngle;
use crate::cluster::ClusterState;
use crate::error::Result;
use crate::sampler::{attach, build_density, next_capacity, Anchor, DensityGrid, SimParams};

/// Half-width (in `β`) of the windows whose masses are reported.
pub const REPORT_WINDOW: f64 = 0.25;

/// Tail cut `ε` (in `β`) for the per-step third moment condition.
pub const TAIL_EPS: f64 = 4.0;

/// Per-step moments of the step `θ_{n+1} − θ_n` under `h_{n+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepMoments {
    pub m1: f64,
    pub m2: f64,
    pub tail2: f64,
}

/// One line of `run.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Index of the particle attached at this step.
    pub step: usize,
    pub angle: AnchoredAngle,
    pub capacity: f64,
    /// `s_n` of the new particle.
    pub sign: i8,
    /// `θ_n − θ⊤_n` of the new particle.
    pub residual: f64,
    pub log_z: f64,
    pub mass_plus: f64,
    pub mass_minus: f64,
    /// Mass outside both reported windows.
    pub mass_far: f64,
    /// Mass in old-basepoint windows (zero unless refinement is on).
    pub mass_old: f64,
    /// `c^{9/2} σ^{1/2}`, reported for comparison with `d_stat`.
    pub d_bound: f64,
    pub moments: StepMoments,
    pub stopped: bool,
    /// Wall time of the step; kept out of `run.jsonl` so reruns are byte-identical.
    #[serde(skip)]
    pub wall_ms: f64,
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub params: SimParams,
    pub run_index: u64,
    pub state: ClusterState,
    pub records: Vec<RunRecord>,
}

impl RunOutput {
    pub fn moments(&self) -> Vec<StepMoments> {
        self.records.iter().map(|r| r.moments).collect()
    }
}

/// The RNG stream of run `run_index` under `seed`.
pub fn run_rng(seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index);
    rng
}

/// Window masses and step moments of a grid.
pub fn grid_summary(state: &ClusterState, grid: &DensityGrid) -> (f64, f64, f64, StepMoments) {
    let beta_n = if state.n() == 0 {
        state.beta()
    } else {
        state.particle(state.n()).params.beta
    };
    let hw = REPORT_WINDOW * beta_n;
    let plus = grid.mass_near(Anchor::Pole(1), hw);
    let minus = grid.mass_near(Anchor::Pole(-1), hw);
    let old: f64 = grid
        .windows
        .iter()
        .filter(|w| matches!(w.anchor, Anchor::OldBase(_)))
        .map(|w| grid.mass_near(w.anchor, w.half_width))
        .fold(0.0, |a, b| a + b);
    let (m1, m2, tail2) = grid.step_moments(Anchor::Frame, TAIL_EPS * beta_n);
    (plus, minus, old, StepMoments { m1, m2, tail2 })
}

/// Runs `N` steps (after the first particle at `θ₁ = 0`), stopping early at `τ_D`.
pub fn simulate(
    params: &SimParams,
    run_index: u64,
    mut on_record: impl FnMut(&RunRecord),
) -> Result<RunOutput> {
    let mut state = params.new_cluster()?;
    let mut rng = run_rng(params.seed, run_index);
    let d_bound = params.c.powf(4.5) * params.sigma().sqrt();
    let mut records = Vec::with_capacity(params.n_steps());
    if params.n_steps() > 0 {
        state.append_step(1, 0.0, params.c)?;
    }
    for _ in 0..params.n_steps() {
        let t0 = Instant::now();
        let grid = build_density(&state, &params.grid, params.refine_old_basepoints)?;
        let (plus, minus, old, moments) = grid_summary(&state, &grid);
        let sample = grid.sample(&mut rng);
        let cap = next_capacity(&state, &grid, &sample)?;
        attach(&mut state, &grid, &sample, cap)?;
        let p = state.particle(state.n());
        let rec = RunRecord {
            step: state.n(),
            angle: p.angle,
            capacity: cap,
            sign: p.sign,
            residual: p.residual,
            log_z: grid.log_z,
            mass_plus: plus,
            mass_minus: minus,
            mass_far: (1.0 - plus - minus).max(0.0),
            mass_old: old,
            d_bound,
            moments,
            stopped: state.stopped_at().is_some(),
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        };
        on_record(&rec);
        records.push(rec);
        if state.stopped_at().is_some() {
            break;
        }
    }
    Ok(RunOutput {
        params: params.clone(),
        run_index,
        state,
        records,
    })
}
