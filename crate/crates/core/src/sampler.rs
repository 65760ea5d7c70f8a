//! The attachment density `h_{n+1}(θ) ∝ |Φ_n'(e^{σ+iθ})|^{ν}` on an adaptive grid.
//!
//! Angles are measured from `θ_n` on `[−π, π)`. Around each lobe centre the
//! grid has a uniform core of width `σ/8` out to `2σ`, then geometric octaves
//! out to the window edge; the rest of the circle is covered by `coarse`
//! uniform cells with the windows cut out. Window cells store their offset
//! from the lobe centre, never the collapsed angle.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle::AnchoredAngle;
use crate::cluster::{ClusterState, EvalPoint};
use crate::error::{AleError, Result};

fn default_coarse() -> usize {
    4096
}
fn default_depth() -> usize {
    4
}
fn default_window() -> f64 {
    0.25
}
fn default_old_basepoints() -> usize {
    8
}
fn default_sigma_exponent() -> f64 {
    6.0
}
fn default_d_stat() -> f64 {
    0.25
}
fn default_refine() -> bool {
    true
}

/// Grid resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Uniform cells covering the circle outside the windows.
    #[serde(default = "default_coarse")]
    pub coarse: usize,
    /// Cells per octave in the geometric part of each window.
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Window half-width in units of `β`.
    #[serde(default = "default_window")]
    pub window: f64,
    /// How many of the most recent old basepoints get a window when refinement is on.
    #[serde(default = "default_old_basepoints")]
    pub old_basepoints: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            coarse: default_coarse(),
            depth: default_depth(),
            window: default_window(),
            old_basepoints: default_old_basepoints(),
        }
    }
}

/// Run parameters, as read from the JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    /// Base capacity.
    pub c: f64,
    /// `ν = −η`.
    pub nu: f64,
    #[serde(default)]
    pub alpha: f64,
    /// `σ = c^p`.
    #[serde(default = "default_sigma_exponent")]
    pub sigma_exponent: f64,
    /// Total capacity; `N = ⌊T/c⌋` when `N` is absent.
    #[serde(
        rename = "T",
        alias = "t",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub total: Option<f64>,
    #[serde(
        rename = "N",
        alias = "n",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub steps: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    /// Stopping radius in units of `β`.
    #[serde(default = "default_d_stat")]
    pub d_stat: f64,
    /// Resolve the lobes at recent old basepoints `ẑ_j^n`.
    #[serde(default = "default_refine")]
    pub refine_old_basepoints: bool,
}

impl SimParams {
    /// Defaults for the `η < −2` experiments: `ν = 4`, `σ = c⁶`, `T = 1`.
    pub fn new(c: f64, nu: f64) -> Self {
        Self {
            c,
            nu,
            alpha: 0.0,
            sigma_exponent: default_sigma_exponent(),
            total: Some(1.0),
            steps: None,
            seed: 0,
            grid: GridConfig::default(),
            d_stat: default_d_stat(),
            refine_old_basepoints: default_refine(),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.c.powf(self.sigma_exponent)
    }

    /// Number of steps `N`; the run has `N + 1` particles.
    pub fn n_steps(&self) -> usize {
        match (self.steps, self.total) {
            (Some(n), _) => n,
            (None, Some(t)) => (t / self.c + 1e-9).floor().max(0.0) as usize,
            (None, None) => 0,
        }
    }

    /// `T = N·c`.
    pub fn horizon(&self) -> f64 {
        self.n_steps() as f64 * self.c
    }

    /// Rejects unusable values; returns advisory warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let cfg = |m: String| Err(AleError::Config(m));
        if !(self.c.is_finite() && self.c > 0.0 && self.c < 1.0) {
            return cfg(format!("c must lie in (0, 1), got {}", self.c));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return cfg(format!("nu must be non-negative, got {}", self.nu));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return cfg(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if !(self.sigma_exponent.is_finite() && self.sigma_exponent > 0.0) || self.sigma() <= 0.0 {
            return cfg(format!(
                "sigma_exponent {} gives no usable sigma",
                self.sigma_exponent
            ));
        }
        if self.steps.is_none() && self.total.is_none() {
            return cfg("one of T or N is required".into());
        }
        if let Some(t) = self.total {
            if !(t.is_finite() && t >= 0.0) {
                return cfg(format!("T must be non-negative, got {t}"));
            }
        }
        if self.grid.coarse < 8 || self.grid.depth == 0 {
            return cfg("grid needs coarse >= 8 and depth >= 1".into());
        }
        if !(self.grid.window > 0.0 && self.grid.window < 1.0) {
            return cfg(format!(
                "grid.window must lie in (0, 1), got {}",
                self.grid.window
            ));
        }
        if !(self.d_stat.is_finite() && self.d_stat > 0.0) {
            return cfg(format!("d_stat must be positive, got {}", self.d_stat));
        }
        let mut warnings = Vec::new();
        if self.nu <= 2.0 {
            warnings.push(format!("nu = {} is outside the eta < -2 phase", self.nu));
        }
        Ok(warnings)
    }

    /// Empty cluster for these parameters.
    pub fn new_cluster(&self) -> Result<ClusterState> {
        self.validate()?;
        ClusterState::new(self.c, self.nu, self.alpha, self.sigma(), self.d_stat)
    }
}

/// What a cell's offset is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    /// `θ_n` itself.
    Frame,
    /// `θ_n ± β_n`.
    Pole(i8),
    /// The angle of `ẑ_j^n`.
    OldBase(usize),
}

/// One grid cell `[left, left + width)` relative to its anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub anchor: Anchor,
    pub left: f64,
    pub width: f64,
    /// Evaluation offset: the geometric midpoint in the geometric part of a
    /// window, the arithmetic one elsewhere.
    pub mid: f64,
    /// `ν·log|Φ_n'|` at `mid`; `-∞` for cells that hit a pole.
    pub log_integrand: f64,
}

/// A refinement window around one lobe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub anchor: Anchor,
    /// Anchor position relative to `θ_n`.
    pub center: f64,
    pub half_width: f64,
    pub min_width: f64,
    /// `log|Φ_{j,n}'(ẑ_j^n)|` for old-basepoint windows.
    pub log_stretch: f64,
}

/// Normalized discretization of `h_{n+1}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityGrid {
    pub cells: Vec<Cell>,
    pub log_z: f64,
    pub windows: Vec<Window>,
    /// Cells dropped because the evaluation hit a pole or broke down.
    pub excluded: usize,
    cumulative: Vec<f64>,
}

/// A draw from the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub anchor: Anchor,
    pub offset: f64,
}

fn symmetric_layout(sigma: f64, half_width: f64, depth: usize) -> Vec<f64> {
    // Non-negative edges, then mirrored.
    let core = (2.0 * sigma).min(half_width);
    let core_cells = ((core / (sigma / 8.0)).ceil() as usize).max(1);
    let mut pos: Vec<f64> = (0..=core_cells)
        .map(|i| core * i as f64 / core_cells as f64)
        .collect();
    let mut a = core;
    while a < half_width {
        let b = (2.0 * a).min(half_width);
        for i in 1..=depth {
            pos.push(a + (b - a) * i as f64 / depth as f64);
        }
        a = b;
    }
    let mut edges: Vec<f64> = pos.iter().rev().map(|x| -x).collect();
    edges.extend_from_slice(&pos[1..]);
    edges
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

fn circ_dist(a: f64, b: f64) -> f64 {
    wrap(a - b).abs()
}

impl DensityGrid {
    /// Probability of each cell.
    pub fn probabilities(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| self.cell_probability(c))
            .collect()
    }

    fn cell_probability(&self, c: &Cell) -> f64 {
        if c.log_integrand == f64::NEG_INFINITY {
            0.0
        } else {
            (c.log_integrand + c.width.ln() - self.log_z).exp()
        }
    }

    /// Anchor position relative to `θ_n`.
    pub fn anchor_center(&self, anchor: Anchor) -> f64 {
        self.windows
            .iter()
            .find(|w| w.anchor == anchor)
            .map(|w| w.center)
            .unwrap_or(0.0)
    }

    /// Smallest cell width.
    pub fn min_width(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.width)
            .fold(f64::INFINITY, f64::min)
    }

    /// Cell edges `(a, b)` relative to `anchor`.
    fn relative_span(&self, cell: &Cell, anchor: Anchor, center: f64) -> (f64, f64) {
        if cell.anchor == anchor {
            (cell.left, cell.left + cell.width)
        } else {
            let shift = wrap(self.anchor_center(cell.anchor) - center);
            (shift + cell.left, shift + cell.left + cell.width)
        }
    }

    /// Mass within `half_width` of `anchor`; partial cells pro-rated.
    pub fn mass_near(&self, anchor: Anchor, half_width: f64) -> f64 {
        let center = self.anchor_center(anchor);
        if half_width >= PI {
            return self.probabilities().iter().sum();
        }
        self.cells
            .iter()
            .map(|c| {
                let (a, b) = self.relative_span(c, anchor, center);
                let lo = a.max(-half_width);
                let hi = b.min(half_width);
                if hi > lo {
                    self.cell_probability(c) * (hi - lo) / c.width
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// `(∫φ h, ∫φ² h, ∫φ² h 1[|φ| > ε])` with `φ` the signed offset from `anchor`.
    pub fn step_moments(&self, anchor: Anchor, eps: f64) -> (f64, f64, f64) {
        let center = self.anchor_center(anchor);
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let mut tail = 0.0;
        let second = |a: f64, b: f64| (b * b * b - a * a * a) / 3.0;
        for c in &self.cells {
            let p = self.cell_probability(c);
            if p == 0.0 {
                continue;
            }
            let (a, b) = self.relative_span(c, anchor, center);
            let w = b - a;
            m1 += p * 0.5 * (a + b);
            m2 += p * (a * a + a * b + b * b) / 3.0;
            if w > 0.0 {
                let inner = second(a.max(-eps).min(b), b.min(eps).max(a));
                tail += p * (second(a, b) - inner) / w;
            } else if a.abs() > eps {
                // Narrower than one ulp at this offset.
                tail += p * a * a;
            }
        }
        (m1, m2, tail)
    }

    /// Inverse-CDF draw, uniform within the chosen cell.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        let u: f64 = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        let i = self
            .cumulative
            .partition_point(|&x| x <= u)
            .min(self.cells.len() - 1);
        let cell = &self.cells[i];
        let v: f64 = rng.random();
        Sample {
            anchor: cell.anchor,
            offset: cell.left + v * cell.width,
        }
    }
}

/// Evaluation point for `θ = θ_n + anchor + offset`, lifted by `σ`.
fn point_for(state: &ClusterState, anchor: Anchor, center: f64, offset: f64) -> EvalPoint {
    match anchor {
        Anchor::Frame => state.frame_point(offset, state.sigma),
        Anchor::Pole(s) => state.pole_point(s, offset, state.sigma),
        Anchor::OldBase(_) => state.frame_point(center + offset, state.sigma),
    }
}

/// Cells evaluated per lockstep batch.
const LOCKSTEP: usize = 8;

/// The plain evaluation point of a cell, or `None` if it needs the
/// old-basepoint expansion.
pub(crate) fn direct_point(
    state: &ClusterState,
    window: Option<&Window>,
    anchor: Anchor,
    offset: f64,
) -> Option<EvalPoint> {
    if let (Anchor::OldBase(_), Some(w)) = (anchor, window) {
        if offset.abs() < OLD_BASE_LINEAR * w.half_width {
            return None;
        }
    }
    let center = window.map(|w| w.center).unwrap_or(0.0);
    Some(point_for(state, anchor, center, offset))
}

/// Inside this fraction of an old-basepoint window the first-order expansion is used.
const OLD_BASE_LINEAR: f64 = 1e-3;

/// `log|Φ_n'(e^{σ + iθ})|` for `θ = θ_n + anchor + offset`.
pub fn log_abs_phi_prime_at(
    state: &ClusterState,
    window: Option<&Window>,
    anchor: Anchor,
    offset: f64,
) -> Result<f64> {
    match (anchor, direct_point(state, window, anchor, offset)) {
        (_, Some(p)) => state.log_abs_phi_prime(p),
        // Linearize where the absolute angle cannot resolve the offset.
        (Anchor::OldBase(j), None) => {
            let w = window.expect("old-basepoint cells carry a window");
            state.log_abs_phi_prime_old_base(j, w.log_stretch, state.sigma, offset)
        }
        (_, None) => unreachable!(),
    }
}

fn lobe_windows(state: &ClusterState, cfg: &GridConfig, refine_old: bool) -> Vec<Window> {
    let n = state.n();
    if n == 0 {
        return Vec::new();
    }
    let last = state.particle(n);
    let beta_n = last.params.beta;
    let max_hw = cfg.window * beta_n;
    let mut centers: Vec<(Anchor, f64, f64)> = vec![
        (Anchor::Pole(1), beta_n, 0.0),
        (Anchor::Pole(-1), -beta_n, 0.0),
    ];
    if refine_old && n >= 2 {
        let lo = n.saturating_sub(cfg.old_basepoints).max(1);
        for j in (lo..n).rev() {
            let (Some(z), Some(ls)) = (state.basepoint(j), state.log_basepoint_stretch(j)) else {
                continue;
            };
            let x = (z * last.rotation().conj()).arg();
            centers.push((Anchor::OldBase(j), x, ls));
        }
    }
    let sigma = state.sigma;
    let mut windows: Vec<Window> = centers
        .iter()
        .enumerate()
        .map(|(i, &(anchor, center, log_stretch))| {
            let sep = centers
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, o)| circ_dist(o.1, center))
                .fold(f64::INFINITY, f64::min);
            let half_width = max_hw.min(0.5 * sep);
            Window {
                anchor,
                center,
                half_width,
                min_width: sigma / 8.0,
                log_stretch,
            }
        })
        .filter(|w| w.half_width > 4.0 * sigma)
        .collect();
    windows.sort_by(|a, b| a.center.total_cmp(&b.center));
    windows
}

fn coarse_cells(windows: &[Window], coarse: usize) -> Vec<Cell> {
    let h = TAU / coarse as f64;
    let mut cuts: Vec<(f64, f64)> = Vec::new();
    for w in windows {
        let (a, b) = (w.center - w.half_width, w.center + w.half_width);
        // Windows never straddle ±π by more than one wrap.
        if a < -PI {
            cuts.push((a + TAU, PI));
            cuts.push((-PI, b));
        } else if b > PI {
            cuts.push((a, PI));
            cuts.push((-PI, b - TAU));
        } else {
            cuts.push((a, b));
        }
    }
    cuts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut cells = Vec::new();
    for i in 0..coarse {
        let mut lo = -PI + h * i as f64;
        let hi = if i + 1 == coarse {
            PI
        } else {
            -PI + h * (i + 1) as f64
        };
        for &(a, b) in &cuts {
            if b <= lo || a >= hi {
                continue;
            }
            if a > lo {
                cells.push(Cell {
                    anchor: Anchor::Frame,
                    left: lo,
                    width: a - lo,
                    mid: 0.5 * (lo + a),
                    log_integrand: 0.0,
                });
            }
            lo = lo.max(b);
        }
        if hi > lo {
            cells.push(Cell {
                anchor: Anchor::Frame,
                left: lo,
                width: hi - lo,
                mid: 0.5 * (lo + hi),
                log_integrand: 0.0,
            });
        }
    }
    cells
}

/// Builds and normalizes the density grid for the next attachment.
pub fn build_density(
    state: &ClusterState,
    cfg: &GridConfig,
    refine_old: bool,
) -> Result<DensityGrid> {
    if state.stopped_at().is_some() {
        return Err(AleError::Domain("cluster is stopped".into()));
    }
    let windows = lobe_windows(state, cfg, refine_old);
    let mut cells = coarse_cells(&windows, cfg.coarse);
    for w in &windows {
        let edges = symmetric_layout(state.sigma, w.half_width, cfg.depth);
        let core = 2.0 * state.sigma;
        cells.extend(edges.windows(2).map(|e| {
            let mid = if e[0] >= core || e[1] <= -core {
                e[0].signum() * (e[0] * e[1]).sqrt()
            } else {
                0.5 * (e[0] + e[1])
            };
            Cell {
                anchor: w.anchor,
                left: e[0],
                width: e[1] - e[0],
                mid,
                log_integrand: 0.0,
            }
        }));
    }
    let nu = state.nu;
    let values: Vec<Option<f64>> = cells
        .par_chunks(LOCKSTEP)
        .flat_map_iter(|chunk| {
            let mut out: Vec<Option<f64>> = vec![None; chunk.len()];
            let mut batch = Vec::with_capacity(chunk.len());
            let mut slots = Vec::with_capacity(chunk.len());
            for (i, c) in chunk.iter().enumerate() {
                let window = windows.iter().find(|w| w.anchor == c.anchor);
                let mid = c.mid;
                match direct_point(state, window, c.anchor, mid) {
                    Some(p) => {
                        batch.push(p);
                        slots.push(i);
                    }
                    None => out[i] = log_abs_phi_prime_at(state, window, c.anchor, mid).ok(),
                }
            }
            for (i, v) in slots.into_iter().zip(state.log_abs_phi_prime_many(&batch)) {
                out[i] = v.ok();
            }
            out.into_iter()
                .map(move |v| v.map(|v| nu * v).filter(|v| v.is_finite()))
        })
        .collect();
    let mut excluded = 0;
    for (c, v) in cells.iter_mut().zip(&values) {
        match v {
            Some(v) => c.log_integrand = *v,
            None => {
                c.log_integrand = f64::NEG_INFINITY;
                excluded += 1;
            }
        }
    }
    let terms: Vec<f64> = cells
        .iter()
        .map(|c| c.log_integrand + c.width.ln())
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(AleError::Domain("density vanished on every cell".into()));
    }
    let log_z = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    let mut acc = 0.0;
    let cumulative = terms
        .iter()
        .map(|t| {
            acc += (t - log_z).exp();
            acc
        })
        .collect();
    Ok(DensityGrid {
        cells,
        log_z,
        windows,
        excluded,
        cumulative,
    })
}

/// Draws `θ_{n+1}` from the grid.
pub fn sample_angle<R: Rng + ?Sized>(grid: &DensityGrid, rng: &mut R) -> Sample {
    grid.sample(rng)
}

/// The sampled angle as an anchored angle.
pub fn sample_to_angle(state: &ClusterState, grid: &DensityGrid, s: &Sample) -> AnchoredAngle {
    let last = state.last_angle();
    let beta = state.beta();
    match s.anchor {
        Anchor::Pole(sign) if state.n() > 0 => {
            let beta_n = state.particle(state.n()).params.beta;
            last.step(sign, s.offset + sign as f64 * (beta_n - beta), beta)
        }
        _ => {
            let x = wrap(grid.anchor_center(s.anchor) + s.offset);
            AnchoredAngle::from_value(last.value(beta) + x, last.base, beta)
        }
    }
}

/// `c_{n+1} = c·|Φ_n'(e^{σ+iθ})|^{−α}` along the same evaluation path as the density.
pub fn next_capacity(state: &ClusterState, grid: &DensityGrid, s: &Sample) -> Result<f64> {
    if state.alpha == 0.0 || state.n() == 0 {
        return Ok(state.c);
    }
    let window = grid.windows.iter().find(|w| w.anchor == s.anchor);
    let lp = log_abs_phi_prime_at(state, window, s.anchor, s.offset)?;
    Ok(state.c * (-state.alpha * lp).exp())
}

/// Appends the sampled particle, keeping pole offsets exact.
pub fn attach(
    state: &mut ClusterState,
    grid: &DensityGrid,
    s: &Sample,
    capacity: f64,
) -> Result<()> {
    match s.anchor {
        Anchor::Pole(sign) if state.n() > 0 => state.append_step(sign, s.offset, capacity),
        _ => {
            let angle = sample_to_angle(state, grid, s);
            state.append_particle(angle, capacity)
        }
    }
}
