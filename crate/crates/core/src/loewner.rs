//! Radial Loewner chains for piecewise-constant drivers.
//!
//! `solve_composition` builds the exact hull by composing slit maps;
//! `solve_ode` integrates the characteristic flow and serves as a cross-check.

use num_complex::Complex64 as C;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::angle::AnchoredAngle;
use crate::cluster::ClusterState;
use crate::driver::DriverPath;
use crate::error::{AleError, Result};
use crate::slit_map::SlitParams;

/// Trajectories closer than this to the unit circle count as swallowed.
pub const SWALLOW_TOL: f64 = 1e-12;

/// `ξ_t = values[k]` on `[k·dt, (k+1)·dt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseDriver {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl PiecewiseDriver {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(AleError::Config(format!("dt = {dt} must be positive")));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(AleError::Config(format!("driver value {v} is not finite")));
        }
        Ok(Self { dt, values })
    }

    /// Constant driver `ξ ≡ value` of total capacity `t`, split into `pieces`.
    pub fn constant(value: f64, t: f64, pieces: usize) -> Result<Self> {
        Self::new(t / pieces.max(1) as f64, vec![value; pieces])
    }

    /// The piecewise driver of an ALE path, one piece per particle.
    pub fn from_path(path: &DriverPath) -> Result<Self> {
        Self::new(path.c, path.steps.clone())
    }

    pub fn total_capacity(&self) -> f64 {
        self.dt * self.values.len() as f64
    }
}

/// Composes rotated slit maps of capacity `dt` at each driver value.
pub fn solve_composition(driver: &PiecewiseDriver) -> Result<ClusterState> {
    let mut state = ClusterState::new(driver.dt, 0.0, 0.0, 1e-18, 1e12)?;
    let beta = state.beta();
    for &v in &driver.values {
        let base = state.last_angle().base;
        state.append_particle(AnchoredAngle::from_value(v, base, beta), driver.dt)?;
    }
    Ok(state)
}

/// Hull tip `Φ_n(e^{iξ_{last}}(1 + ε))`, for drivers that end where they started growing.
pub fn tip(state: &ClusterState) -> Result<C> {
    match state.particles().last() {
        None => Ok(C::new(1.0, 0.0)),
        Some(p) => state.phi_apply(p.rotation()),
    }
}

fn loewner_field(h: C, e: C) -> C {
    h * (h + e) / (h - e)
}

/// `φ_T(w)` by RK4 on `∂_s h = h (h + e^{iξ_{T−s}}) / (h − e^{iξ_{T−s}})`, `h_0 = w`,
/// with `⌈dt·rk_steps⌉` substeps per piece.
pub fn solve_ode(driver: &PiecewiseDriver, w: C, rk_steps: usize) -> Result<C> {
    if w.norm() <= 1.0 {
        return Err(AleError::Domain(format!(
            "|w| = {} must exceed 1",
            w.norm()
        )));
    }
    let m = ((driver.dt * rk_steps as f64).ceil() as usize).max(1);
    let h_step = driver.dt / m as f64;
    let mut h = w;
    for (piece, &xi) in driver.values.iter().enumerate().rev() {
        let e = C::from_polar(1.0, xi);
        for i in 0..m {
            let k1 = loewner_field(h, e);
            let k2 = loewner_field(h + 0.5 * h_step * k1, e);
            let k3 = loewner_field(h + 0.5 * h_step * k2, e);
            let k4 = loewner_field(h + h_step * k3, e);
            h += h_step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !(h.norm() >= 1.0 + SWALLOW_TOL) {
                let t = driver.dt * (piece as f64 + 1.0 - (i + 1) as f64 / m as f64);
                return Err(AleError::Swallowed { t });
            }
        }
    }
    Ok(h)
}

/// `ξ_t = √κ B_t` sampled at multiples of `dt` on `[0, T]`.
pub fn sample_sle_driver<R: Rng + ?Sized>(
    kappa: f64,
    t: f64,
    dt: f64,
    rng: &mut R,
) -> Result<PiecewiseDriver> {
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(AleError::Config(format!(
            "kappa = {kappa} must be non-negative"
        )));
    }
    let pieces = (t / dt + 1e-9).floor().max(0.0) as usize;
    let normal =
        Normal::new(0.0, (kappa * dt).sqrt()).map_err(|e| AleError::Config(e.to_string()))?;
    let mut values = Vec::with_capacity(pieces);
    let mut x = 0.0;
    for k in 0..pieces {
        if k > 0 {
            x += normal.sample(rng);
        }
        values.push(x);
    }
    PiecewiseDriver::new(dt, values)
}

fn point_segment(p: C, a: C, b: C) -> f64 {
    let ab = b - a;
    let len = ab.norm_sqr();
    if len == 0.0 {
        return (p - a).norm();
    }
    let t = (((p - a) * ab.conj()).re / len).clamp(0.0, 1.0);
    (p - (a + t * ab)).norm()
}

fn directed(a: &[C], b: &[C]) -> f64 {
    a.iter()
        .map(|&p| {
            if b.len() == 1 {
                return (p - b[0]).norm();
            }
            b.windows(2)
                .map(|s| point_segment(p, s[0], s[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two polylines.
pub fn hull_distance(a: &[C], b: &[C]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(AleError::Length { needed: 1, have: 0 });
    }
    Ok(directed(a, b).max(directed(b, a)))
}

/// Tip distance `d(c)` of a single slit of capacity `c`.
pub fn slit_length(c: f64) -> Result<f64> {
    Ok(SlitParams::from_capacity(c)?.d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_driver_tip() {
        let c = 1e-3;
        let d = slit_length(c).unwrap();
        let one = solve_composition(&PiecewiseDriver::constant(0.0, c, 1).unwrap()).unwrap();
        assert!((tip(&one).unwrap() - (1.0 + d)).norm() < 1e-9);
        let many = solve_composition(&PiecewiseDriver::constant(0.0, c, 100).unwrap()).unwrap();
        assert!((tip(&many).unwrap() - (1.0 + d)).norm() < 1e-4);
    }

    #[test]
    fn empty_driver_is_identity() {
        let drv = PiecewiseDriver::new(1e-3, vec![]).unwrap();
        let w = C::new(1.5, 0.5);
        assert_eq!(solve_composition(&drv).unwrap().phi_apply(w).unwrap(), w);
        assert_eq!(solve_ode(&drv, w, 100).unwrap(), w);
    }

    #[test]
    fn ode_matches_composition_for_one_slit() {
        let drv = PiecewiseDriver::constant(0.3, 0.01, 1).unwrap();
        let w = C::new(2.0, 0.0);
        let exact = solve_composition(&drv).unwrap().phi_apply(w).unwrap();
        let ode = solve_ode(&drv, w, 10_000).unwrap();
        assert!((exact - ode).norm() < 1e-6, "{exact} vs {ode}");
    }

    #[test]
    fn far_field_is_capacity() {
        let drv = PiecewiseDriver::new(0.01, vec![0.0, 0.4, -0.2]).unwrap();
        let w = C::new(1e6, 0.0);
        let r = solve_ode(&drv, w, 1000).unwrap() / (drv.total_capacity().exp() * w);
        assert!((r - 1.0).norm() < 1e-5);
        let s = solve_composition(&drv).unwrap().phi_apply(w).unwrap()
            / (drv.total_capacity().exp() * w);
        assert!((s - 1.0).norm() < 1e-5);
    }

    #[test]
    fn ode_flow_stays_exterior() {
        let drv = PiecewiseDriver::constant(0.0, 0.5, 1).unwrap();
        assert!(solve_ode(&drv, C::new(0.5, 0.0), 100).is_err());
        let h = solve_ode(&drv, C::new(1.0 + 1e-14, 0.0), 100).unwrap();
        assert!(h.norm() > 1.0 && h.is_finite());
    }

    #[test]
    fn sle_driver_quadratic_variation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (kappa, t, dt) = (4.0, 1.0, 1e-4);
        let drv = sample_sle_driver(kappa, t, dt, &mut rng).unwrap();
        let qv: f64 = drv.values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        assert!((qv - kappa * t).abs() < 3.0 * (2.0 * kappa * kappa * t * dt).sqrt());
        let flat = sample_sle_driver(0.0, t, 0.1, &mut rng).unwrap();
        assert!(flat.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hausdorff_basics() {
        let a: Vec<C> = (0..50)
            .map(|i| C::from_polar(1.0, i as f64 * 0.1))
            .collect();
        assert_eq!(hull_distance(&a, &a).unwrap(), 0.0);
        let phi = 1e-3;
        let b: Vec<C> = a.iter().map(|z| z * C::from_polar(1.0, phi)).collect();
        assert!(hull_distance(&a, &b).unwrap() <= phi + 1e-15);
        assert!(hull_distance(&a, &[]).is_err());
    }
}
