//! Driving function of a run and its scaling-limit diagnostics.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cluster::ClusterState;
use crate::error::{AleError, Result};
use crate::sim::StepMoments;

/// `ξ_t = θ_{⌊t/c⌋+1}`, unwrapped to ℝ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverPath {
    pub c: f64,
    /// Horizon actually covered (`T`, or `τ_D·c` if the run stopped).
    pub t: f64,
    pub steps: Vec<f64>,
    pub stopped_at: Option<usize>,
}

impl DriverPath {
    /// Builds a path from raw angles, unwrapping by nearest-branch continuation.
    pub fn from_angles(c: f64, angles: &[f64]) -> Self {
        let mut steps: Vec<f64> = Vec::with_capacity(angles.len());
        for &a in angles {
            let v = match steps.last() {
                None => a,
                Some(&prev) => prev + ((a - prev + PI).rem_euclid(TAU) - PI),
            };
            steps.push(v);
        }
        let t = c * steps.len().saturating_sub(1) as f64;
        Self {
            c,
            t,
            steps,
            stopped_at: None,
        }
    }

    /// `ξ_t` for `t ∈ [0, T]`.
    pub fn xi(&self, t: f64) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        let k = ((t / self.c + 1e-9).floor().max(0.0) as usize).min(self.steps.len() - 1);
        self.steps[k]
    }

    pub fn endpoint(&self) -> f64 {
        self.steps.last().copied().unwrap_or(0.0)
    }

    /// Quadratic variation `Σ (Δξ)²`.
    pub fn quadratic_variation(&self) -> f64 {
        self.steps.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
    }
}

/// Extracts `ξ` on `[0, T]` from a cluster.
pub fn extract_driver(state: &ClusterState, t: f64) -> Result<DriverPath> {
    let n_steps = (t / state.c + 1e-9).floor().max(0.0) as usize;
    if state.n() == 0 && n_steps == 0 {
        return Ok(DriverPath {
            c: state.c,
            t: 0.0,
            steps: Vec::new(),
            stopped_at: None,
        });
    }
    let needed = n_steps + 1;
    let have = match state.stopped_at() {
        Some(tau) => tau.min(needed),
        None => needed,
    };
    if state.n() < have {
        return Err(AleError::Length {
            needed: have,
            have: state.n(),
        });
    }
    let beta = state.beta();
    let angles: Vec<f64> = state.particles()[..have]
        .iter()
        .map(|p| p.angle.value(beta))
        .collect();
    let mut path = DriverPath::from_angles(state.c, &angles);
    path.stopped_at = state.stopped_at().filter(|&k| k <= needed);
    path.t = if path.stopped_at.is_some() {
        state.c * have as f64
    } else {
        state.c * n_steps as f64
    };
    Ok(path)
}

/// Sums of the per-step moment conditions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct McLeishSums {
    pub tail2: f64,
    pub m2: f64,
    pub abs_m1: f64,
}

/// Per-run diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub tau_d: Option<usize>,
    pub steps: usize,
    pub frac_plus: f64,
    pub qv: f64,
    pub mcleish: McLeishSums,
    pub endpoint: f64,
    /// Horizon covered by the path.
    pub horizon: f64,
    /// `|θ_k − θ⊤_k|`, `k = 2..`.
    pub offsets: Vec<f64>,
}

/// Diagnostics of one run.
pub fn statistics(path: &DriverPath, state: &ClusterState, moments: &[StepMoments]) -> StatsReport {
    let k_max = path.steps.len().min(state.n());
    let signs: Vec<i8> = state.particles()[..k_max]
        .iter()
        .skip(1)
        .map(|p| p.sign)
        .collect();
    let frac_plus = if signs.is_empty() {
        0.5
    } else {
        signs.iter().filter(|&&s| s > 0).count() as f64 / signs.len() as f64
    };
    let offsets = state.particles()[..k_max]
        .iter()
        .skip(1)
        .map(|p| p.residual.abs())
        .collect();
    let used = &moments[..moments.len().min(k_max.saturating_sub(1))];
    let mcleish = McLeishSums {
        tail2: used.iter().map(|m| m.tail2).sum(),
        m2: used.iter().map(|m| m.m2).sum(),
        abs_m1: used.iter().map(|m| m.m1.abs()).sum(),
    };
    StatsReport {
        tau_d: path.stopped_at,
        steps: path.steps.len().saturating_sub(1),
        frac_plus,
        qv: path.quadratic_variation(),
        mcleish,
        endpoint: path.endpoint(),
        horizon: path.t,
        offsets,
    }
}

/// Kolmogorov–Smirnov test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `xs` against the standard normal, with the
/// asymptotic p-value (Stephens' finite-sample scaling).
pub fn ks_standard_normal(xs: &[f64]) -> KsResult {
    let normal = Normal::standard();
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let nf = n as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    let sn = nf.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d),
        n,
    }
}

/// KS test of `{ξ_T / (2√T)}` over runs against `N(0, 1)`.
pub fn ensemble_normality(reports: &[StatsReport], t: f64) -> Result<KsResult> {
    if reports.len() < 30 {
        return Err(AleError::Statistics(format!(
            "need at least 30 runs, got {}",
            reports.len()
        )));
    }
    if !(t > 0.0) {
        return Err(AleError::Statistics(format!(
            "horizon must be positive, got {t}"
        )));
    }
    let xs: Vec<f64> = reports
        .iter()
        .map(|r| r.endpoint / (2.0 * t.sqrt()))
        .collect();
    Ok(ks_standard_normal(&xs))
}

/// Fraction of `+` signs pooled over runs, weighted by step count.
pub fn pooled_frac_plus(reports: &[StatsReport]) -> f64 {
    let (plus, total) = reports.iter().fold((0.0, 0usize), |(p, t), r| {
        let k = r.offsets.len();
        (p + r.frac_plus * k as f64, t + k)
    });
    if total == 0 {
        0.5
    } else {
        plus / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn unwrapping_and_lookup() {
        let p = DriverPath::from_angles(0.1, &[3.0, -3.0, 3.1]);
        assert!((p.steps[1] - (TAU - 3.0)).abs() < 1e-12);
        assert_eq!(p.xi(0.0), p.steps[0]);
        assert_eq!(p.xi(0.15), p.steps[1]);
        assert_eq!(p.xi(10.0), p.steps[2]);
    }

    #[test]
    fn ssrw_quadratic_variation_is_exact() {
        let beta = 0.0632;
        let mut a = vec![0.0];
        for k in 0..100 {
            a.push(a[k] + if k % 3 == 0 { beta } else { -beta });
        }
        let p = DriverPath::from_angles(1e-3, &a);
        assert!((p.quadratic_variation() - 100.0 * beta * beta).abs() < 1e-12);
    }

    #[test]
    fn ideal_path_statistics() {
        let c = 1e-3;
        let mut s = ClusterState::new(c, 4.0, 0.0, 1e-18, 0.25).unwrap();
        s.append_step(1, 0.0, c).unwrap();
        for _ in 0..10 {
            s.append_step(1, 0.0, c).unwrap();
        }
        let p = extract_driver(&s, 10.0 * c).unwrap();
        assert!((p.endpoint() - 10.0 * s.beta()).abs() < 1e-12);
        let r = statistics(&p, &s, &[StepMoments::default(); 10]);
        assert_eq!(r.tau_d, None);
        assert!(r.offsets.iter().all(|&o| o == 0.0));
        assert_eq!(r.frac_plus, 1.0);
        assert!(extract_driver(&s, 20.0 * c).is_err());
        let empty = ClusterState::new(c, 4.0, 0.0, 1e-18, 0.25).unwrap();
        let p = extract_driver(&empty, 0.0).unwrap();
        assert!(p.steps.is_empty());
        assert_eq!(p.xi(0.5), 0.0);
        assert_eq!(statistics(&p, &empty, &[]).steps, 0);
    }

    #[test]
    fn ks_rejects_degenerate_and_accepts_normal() {
        let zeros = vec![
            StatsReport {
                tau_d: None,
                steps: 1,
                frac_plus: 0.5,
                qv: 0.0,
                mcleish: McLeishSums::default(),
                endpoint: 0.0,
                horizon: 1.0,
                offsets: vec![],
            };
            100
        ];
        assert!(ensemble_normality(&zeros, 1.0).unwrap().p_value < 1e-6);
        assert!(ensemble_normality(&zeros[..10], 1.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(ks_standard_normal(&xs).p_value > 0.001);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Tabulated: P(K > 1.36) ≈ 0.0495, P(K > 1.63) ≈ 0.0098.
        assert!((kolmogorov_survival(1.36) - 0.0495).abs() < 5e-4);
        assert!((kolmogorov_survival(1.63) - 0.0098).abs() < 3e-4);
    }
}
