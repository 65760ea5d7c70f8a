//! Numerical checks of the slit-map and composition estimates.
//!
//! Each check fits the constants that the estimates leave unspecified and
//! reports them with the worst residual against a declared envelope.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterState, DepthProfile, EvalPoint};
use crate::error::{AleError, Result};
use crate::sampler::{
    build_density, direct_point, Anchor, DensityGrid, GridConfig, SimParams, Window,
};
use crate::sim::simulate;
use crate::slit_map::{
    cexpm1, log_abs_f_prime, log_abs_f_prime_offset, slit_map, slit_map_inverse_offset,
    slit_map_offset, SlitParams,
};

/// `L` in units of `β`: the scale below which `|Φ_n − 1|` counts as close to the base.
pub const L_PRACTICAL: f64 = 1e-3;

/// Capacities the slit-map checks sweep.
pub const SLIT_CAPACITIES: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub id: String,
    pub samples: usize,
    pub constants: BTreeMap<String, f64>,
    pub worst_residual: f64,
    pub envelope: f64,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl OracleReport {
    fn new(id: &str) -> Self {
        Self {
            id: id.to_string(),
            samples: 0,
            constants: BTreeMap::new(),
            worst_residual: 0.0,
            envelope: 0.0,
            pass: false,
            notes: Vec::new(),
        }
    }

    fn set(&mut self, key: impl Into<String>, v: f64) {
        self.constants.insert(key.into(), v);
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// A random offset `δ` of modulus `r` from `e^{i·sign·β}` that keeps `|w| ≥ 1`.
fn outward_offset<R: Rng + ?Sized>(rng: &mut R, p: &SlitParams, sign: i8, r: f64) -> C {
    let base = p.pole(sign);
    loop {
        let d = C::from_polar(r, rng.random_range(0.0..TAU));
        if 2.0 * (base.conj() * d).re + d.norm_sqr() >= 0.0 {
            return d;
        }
    }
}

/// `log|f'(e^{i·sign·β} + δ)|`, through the offset form when `δ` is small.
fn log_f_prime_near(p: &SlitParams, sign: i8, delta: C) -> Result<f64> {
    if delta.norm() <= 0.5 * p.beta {
        let eps = slit_map_offset(delta, sign, p)?;
        Ok(log_abs_f_prime_offset(delta, sign, eps, p))
    } else {
        log_abs_f_prime(p.pole(sign) + delta, p)
    }
}

/// Fits `A₁ ≤ |f'(w)|·|w − e^{±iβ}|^{1/2}/β^{1/2} ≤ A₂` near the poles and
/// `|f'| ≤ A₃` away from them, and checks the fits are stable across `c`.
///
/// Points form a polar mesh (log-spaced radii including `¾β`, uniform angles),
/// since the extremes sit on the outer circle.
pub fn check_f_prime_bounds(caps: &[f64], samples: usize) -> Result<OracleReport> {
    let mut rep = OracleReport::new("f-prime-estimate");
    let radii = 24usize;
    let angles = (samples / radii).max(8);
    let mut fits = Vec::new();
    for &c in caps {
        let p = SlitParams::from_capacity(c)?;
        let (mut a1, mut a2, mut a3) = (f64::INFINITY, 0.0f64, 0.0f64);
        for sign in [1i8, -1] {
            let base = p.pole(sign);
            for ir in 0..radii {
                let r = 0.75 * p.beta * 1e-8f64.powf(ir as f64 / (radii - 1) as f64);
                for ia in 0..angles {
                    let delta = C::from_polar(r, TAU * ia as f64 / angles as f64);
                    if 2.0 * (base.conj() * delta).re + delta.norm_sqr() < 0.0 {
                        continue;
                    }
                    let ratio =
                        (log_f_prime_near(&p, sign, delta)? + 0.5 * (r / p.beta).ln()).exp();
                    a1 = a1.min(ratio);
                    a2 = a2.max(ratio);
                    rep.samples += 1;
                }
            }
        }
        for ir in 0..radii {
            let rho = 1e-12f64 * (2e12f64).powf(ir as f64 / (radii - 1) as f64);
            for ia in 0..angles {
                let w = C::from_polar(rho.exp(), -PI + TAU * (ia as f64 + 0.5) / angles as f64);
                if (w - p.e_ibeta).norm().min((w - p.e_ibeta.conj()).norm()) <= 0.75 * p.beta {
                    continue;
                }
                a3 = a3.max(log_abs_f_prime(w, &p)?.exp());
                rep.samples += 1;
            }
        }
        rep.set(format!("A1@{c:e}"), a1);
        rep.set(format!("A2@{c:e}"), a2);
        rep.set(format!("A3@{c:e}"), a3);
        fits.push((a1, a2, a3));
    }
    let spread = |f: fn(&(f64, f64, f64)) -> f64| {
        let v: Vec<f64> = fits.iter().map(f).collect();
        let hi = v.iter().copied().fold(0.0, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    };
    let a1 = fits.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
    let a2 = fits.iter().map(|f| f.1).fold(0.0, f64::max);
    let a3 = fits.iter().map(|f| f.2).fold(0.0, f64::max);
    let stability = spread(|f| f.0).max(spread(|f| f.1)).max(spread(|f| f.2));
    rep.set("A1", a1);
    rep.set("A2", a2);
    rep.set("A3", a3);
    rep.set("stability", stability);
    rep.worst_residual = (0.05 / a1)
        .max(a2 / 20.0)
        .max(a3 / 20.0)
        .max(stability / 1.2);
    rep.envelope = 1.0;
    rep.pass = a1 > 0.05 && a2 < 20.0 && a3 < 20.0 && stability <= 1.2;
    rep.notes
        .push("envelope: A1 > 0.05, A2 < 20, A3 < 20, fits within ±20% across c".into());
    Ok(rep)
}

/// Fits one `K` with `|ratio − 1| ≤ K·err` for the forward estimate
/// `|f(w) − 1| ≈ 2(e^c − 1)^{1/4}|w − e^{iβ}|^{1/2}` (err `= |δ|/√c ∨ c^{1/4}|δ|^{1/2}`)
/// and the inverse estimate `min± |f⁻¹(z) − e^{±iβ}| ≈ |z − 1|²/(4(e^c − 1)^{1/2})`
/// (err `= |z − 1|`).
pub fn check_distance_estimates(caps: &[f64], samples: usize, seed: u64) -> Result<OracleReport> {
    let mut rep = OracleReport::new("distance-estimate");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut k_fwd, mut k_inv, mut pair) = (0.0f64, 0.0f64, 0.0f64);
    for &c in caps {
        let p = SlitParams::from_capacity(c)?;
        let scale = 2.0 * p.q.powf(0.25);
        let mut kc = 0.0f64;
        for i in 0..samples {
            let sign = if i % 2 == 0 { 1 } else { -1 };
            let r = log_uniform(&mut rng, 1e-14 * p.beta, 0.5 * p.beta);
            let delta = outward_offset(&mut rng, &p, sign, r);
            let eps = slit_map_offset(delta, sign, &p)?;
            let fwd = eps.norm() / (scale * r.sqrt());
            let err = (r / c.sqrt()).max(c.powf(0.25) * r.sqrt());
            kc = kc.max((fwd - 1.0).abs() / err);
            // Matched pair: the inverse applied to the forward image.
            let (_, back) = slit_map_inverse_offset(eps, &p)?;
            if eps.norm() <= c {
                let inv = back.norm() * 4.0 * p.sqrt_q / eps.norm_sqr();
                pair = pair.max((fwd * fwd * inv - 1.0).abs());
            }

            let s = log_uniform(&mut rng, 1e-10 * c, c);
            let z_off = if i % 7 == 0 {
                // A point on the slit itself, approached from one side.
                C::new(s, s * 1e-15)
            } else {
                loop {
                    let e = C::from_polar(s, rng.random_range(-PI..PI));
                    if (C::new(1.0, 0.0) + e).norm() >= 1.0 && e.im != 0.0 {
                        break e;
                    }
                }
            };
            let (_, d) = slit_map_inverse_offset(z_off, &p)?;
            let inv = d.norm() * 4.0 * p.sqrt_q / z_off.norm_sqr();
            k_inv = k_inv.max((inv - 1.0).abs() / s);
        }
        rep.set(format!("K_forward@{c:e}"), kc);
        k_fwd = k_fwd.max(kc);
        rep.samples += 2 * samples;
    }
    let k = k_fwd.max(k_inv);
    rep.set("K_forward", k_fwd);
    rep.set("K_inverse", k_inv);
    rep.set("K", k);
    rep.set("pair_product_dev", pair);
    rep.worst_residual = k;
    rep.envelope = 10.0;
    rep.pass = k < 10.0;
    Ok(rep)
}

/// `(2(e^c − 1)^{1/4})^{2(1 − 2^{−j})}·|δ₀|^{2^{−j}}`.
pub fn sticky_magnitude(c: f64, delta0: f64, j: usize) -> f64 {
    let a = 2.0 * c.exp_m1().powf(0.25);
    let e = 0.5f64.powi(j as i32);
    a.powf(2.0 * (1.0 - e)) * delta0.powf(e)
}

/// Ideal path: `θ₁ = 0`, then exact `±β` steps with the given signs.
pub fn ideal_state(c: f64, nu: f64, sigma: f64, signs: &[i8]) -> Result<ClusterState> {
    let mut s = ClusterState::new(c, nu, 0.0, sigma, 0.25)?;
    s.append_step(1, 0.0, c)?;
    for &sg in signs {
        s.append_step(sg, 0.0, c)?;
    }
    Ok(s)
}

/// Compares `offset_chain` magnitudes with [`sticky_magnitude`] level by level.
pub fn check_sticky(state: &ClusterState, delta0: f64, directions: usize) -> Result<OracleReport> {
    let mut rep = OracleReport::new("sticky");
    let n = state.n();
    let p = state.particle(n).params;
    let mut per_level = vec![0.0f64; n];
    for i in 0..directions {
        let sign = if i % 2 == 0 { 1 } else { -1 };
        let base = p.pole(sign);
        // Outward directions only, spread over the half-plane.
        let t = (i as f64 + 0.5) / directions as f64;
        let dir = base * C::from_polar(1.0, (t - 0.5) * PI * 0.98);
        let out = state.offset_chain(sign, dir * delta0)?;
        for (j, d) in out.iter().enumerate() {
            let r = (d.norm() / sticky_magnitude(state.c, delta0, j + 1) - 1.0).abs();
            per_level[j] = per_level[j].max(r);
        }
        rep.samples += 1;
    }
    for (j, r) in per_level.iter().enumerate() {
        rep.set(format!("residual@j={}", j + 1), *r);
    }
    rep.worst_residual = per_level.iter().copied().fold(0.0, f64::max);
    rep.envelope = 0.1;
    rep.pass = rep.worst_residual < rep.envelope;
    rep.set("delta0", delta0);
    Ok(rep)
}

/// `φ` grid on `|φ| < L`: 0 and `±σ·10^{k/2}`.
pub fn phi_grid(sigma: f64, limit: f64) -> Vec<f64> {
    let mut v = vec![0.0];
    let mut x = 0.01 * sigma;
    while x < limit {
        v.push(x);
        v.push(-x);
        x *= 10f64.sqrt();
    }
    v
}

/// `log|Φ_n'(e^{σ + i(θ_n ± β + φ)})| − ½(1 − 2^{−n})·log(c/(σ² + φ²))`, per level,
/// must lie in `[log A₁, log A₂]`.
pub fn check_deriv_estimate(
    state: &ClusterState,
    phis: &[f64],
    a1: f64,
    a2: f64,
) -> Result<OracleReport> {
    let mut rep = OracleReport::new("deriv-estimate");
    let n = state.n() as f64;
    let sigma = state.sigma;
    let expo = 0.5 * (1.0 - 0.5f64.powi(state.n() as i32));
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut worst = 0.0f64;
    let mut pm = 0.0f64;
    for &phi in phis {
        let main = expo * (state.c / (sigma * sigma + phi * phi)).ln();
        let plus = state.log_abs_phi_prime(state.pole_point(1, phi, sigma))?;
        let minus = state.log_abs_phi_prime(state.pole_point(-1, -phi, sigma))?;
        pm = pm.max((plus - minus).abs());
        for v in [plus, minus] {
            let per = (v - main) / n;
            lo = lo.min(per);
            hi = hi.max(per);
            worst = worst.max(a1.ln() - per).max(per - a2.ln());
        }
        rep.samples += 2;
    }
    rep.set("per_level_min", lo);
    rep.set("per_level_max", hi);
    rep.set("A_fit", lo.exp());
    rep.set("log_A1", a1.ln());
    rep.set("log_A2", a2.ln());
    rep.set("pole_asymmetry", pm);
    rep.worst_residual = worst.max(0.0);
    rep.envelope = 0.0;
    rep.pass = worst <= 0.0;
    Ok(rep)
}

/// Masses from an independent quadrature of the one-slit density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneSlitMasses {
    pub log_z: f64,
    pub plus: f64,
    pub minus: f64,
    pub far: f64,
}

fn simpson(a: f64, b: f64, nodes: usize, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let m = nodes.max(2) & !1;
    let h = (b - a) / m as f64;
    (0..=m)
        .map(|i| {
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (f(a + h * i as f64), w * h / 3.0)
        })
        .collect()
}

fn log_sum(terms: &[(f64, f64)], shift: f64) -> f64 {
    terms.iter().map(|&(lg, w)| w * (lg - shift).exp()).sum()
}

/// `∫ |f'(e^{σ+iθ})|^ν dθ` split into the windows `|θ ∓ β| < window·β` and the rest.
///
/// Windows are integrated in `φ = σ sinh u`; the rest with plain Simpson.
/// Evaluation goes straight through the slit map, not the cluster composition.
pub fn one_slit_masses(
    c: f64,
    sigma: f64,
    nu: f64,
    window: f64,
    nodes: usize,
) -> Result<OneSlitMasses> {
    let p = SlitParams::from_capacity(c)?;
    let weight = |lf: f64| if nu == 0.0 { 0.0 } else { nu * lf };
    let w = window * p.beta;
    let u_max = (w / sigma).asinh();
    let lobe = |sign: i8| {
        simpson(-u_max, u_max, nodes, |u| {
            let phi = sigma * u.sinh();
            let delta = p.pole(sign) * cexpm1(C::new(sigma, phi));
            let lf = log_f_prime_near(&p, sign, delta).unwrap_or(f64::NEG_INFINITY);
            weight(lf) + (sigma * u.cosh()).ln()
        })
    };
    let plain = |a: f64, b: f64| {
        simpson(a, b, nodes, |t| {
            weight(log_abs_f_prime(C::from_polar(sigma.exp(), t), &p).unwrap_or(f64::NEG_INFINITY))
        })
    };
    let plus = lobe(1);
    let minus = lobe(-1);
    let mut far = plain(-p.beta + w, p.beta - w);
    far.extend(plain(p.beta + w, TAU - p.beta - w));
    let shift = plus
        .iter()
        .chain(&minus)
        .chain(&far)
        .map(|t| t.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let (zp, zm, zf) = (
        log_sum(&plus, shift),
        log_sum(&minus, shift),
        log_sum(&far, shift),
    );
    let z = zp + zm + zf;
    Ok(OneSlitMasses {
        log_z: shift + z.ln(),
        plus: zp / z,
        minus: zm / z,
        far: zf / z,
    })
}

/// `log Z_n ≥ n log A + (ν/2)(1 − 2^{−n}) log c − [ν(1 − 2^{−n}) − 1] log(1/σ)`.
pub fn check_pf_bound(state: &ClusterState, grid: &DensityGrid, a: f64) -> OracleReport {
    let mut rep = OracleReport::new("pf-bound");
    let n = state.n();
    let e = 1.0 - 0.5f64.powi(n as i32);
    let nu = state.nu;
    let bound =
        n as f64 * a.ln() + 0.5 * nu * e * state.c.ln() - (nu * e - 1.0) * (1.0 / state.sigma).ln();
    let margin = grid.log_z - bound;
    rep.samples = grid.cells.len();
    rep.set("log_Z", grid.log_z);
    rep.set("bound", bound);
    rep.set("margin", margin);
    rep.set("A", a);
    rep.worst_residual = (-margin).max(0.0);
    rep.envelope = 0.0;
    rep.pass = margin >= 0.0;
    rep
}

/// `sup_φ |log(|Φ_n'(e^{σ+i(θ_n+β+φ)})| / |Φ_n'(e^{σ+i(θ_n−β−φ)})|)|`.
pub fn symmetry_residual(state: &ClusterState, phis: &[f64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &phi in phis {
        let plus = state.log_abs_phi_prime(state.pole_point(1, phi, state.sigma))?;
        let minus = state.log_abs_phi_prime(state.pole_point(-1, -phi, state.sigma))?;
        worst = worst.max((plus - minus).abs());
    }
    Ok(worst)
}

/// Pole symmetry on three paths at capacity `c`: one slit (exactly symmetric),
/// the alternating ideal path, and the all-`+` arithmetic progression.
pub fn check_symmetry(c: f64, nu: f64, sigma: f64, n: usize) -> Result<OracleReport> {
    let mut rep = OracleReport::new("symmetry");
    let beta = SlitParams::from_capacity(c)?.beta;
    let phis = phi_grid(sigma, L_PRACTICAL * beta);
    let scale = c.powf(2.75);

    let one = symmetry_residual(&ideal_state(c, nu, sigma, &[])?, &phis)?;
    let alt_signs: Vec<i8> = (0..n.saturating_sub(1))
        .map(|k| if k % 2 == 0 { 1 } else { -1 })
        .collect();
    let alt = symmetry_residual(&ideal_state(c, nu, sigma, &alt_signs)?, &phis)?;
    let ap = symmetry_residual(
        &ideal_state(c, nu, sigma, &vec![1; n.saturating_sub(1)])?,
        &phis,
    )?;
    let a_alt = alt / scale;
    let a_ap = ap / scale;
    rep.samples = 3 * phis.len();
    rep.set("one_slit", one);
    rep.set("alternating", alt);
    rep.set("arithmetic", ap);
    rep.set("A_alternating", a_alt);
    rep.set("A_arithmetic", a_ap);
    // The arithmetic path is held to ten times the constant fitted on the alternating path.
    let envelope_ap = 10.0 * a_alt.max(1.0) * scale;
    rep.set("arithmetic_envelope", envelope_ap);
    rep.worst_residual = (one / 1e-12).max(alt / 1e-4).max(ap / envelope_ap);
    rep.envelope = 1.0;
    rep.pass = one <= 1e-12 && alt < 1e-4 && ap <= envelope_ap;
    rep.notes.push(format!(
        "n = {n}, c = {c:e}, residual scale c^(11/4) = {scale:e}"
    ));
    Ok(rep)
}

/// Region label of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `|Φ_n(e^{σ+iθ}) − 1| > L/4`.
    Regular,
    /// Inside a window around `θ_n ± β`.
    Tip,
    /// `|Φ_{j,n}(w) − e^{iθ⊥_{j+1}}| ≤ L_j`.
    Singular(usize),
    /// Close to the base but none of the above.
    Residue,
}

/// Labels of every cell of a density grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionClassification {
    pub labels: Vec<Region>,
    pub l: f64,
    /// `L_j = (β/4)(L/β)^{2^j}`, entry `j − 1`.
    pub l_j: Vec<f64>,
    pub tip_window: f64,
    pub residue: usize,
}

impl RegionClassification {
    pub fn count(&self, r: Region) -> usize {
        self.labels.iter().filter(|&&l| l == r).count()
    }
}

/// `L_j = (β/4)(L/β)^{2^j}`.
pub fn singular_radius(beta: f64, l: f64, j: usize) -> f64 {
    0.25 * beta * (l / beta).powf(2f64.powi(j as i32))
}

fn label(profile: &DepthProfile, l: f64, l_j: &[f64]) -> Region {
    if profile.to_base > 0.25 * l {
        return Region::Regular;
    }
    for j in (1..=l_j.len()).rev() {
        if profile.to_bottom[j - 1] <= l_j[j - 1] {
            return Region::Singular(j);
        }
    }
    Region::Residue
}

/// Labels each cell midpoint as regular, tip (pole window), singular or residue.
pub fn classify_regions(
    state: &ClusterState,
    grid: &DensityGrid,
    tip_window: f64,
) -> Result<RegionClassification> {
    let n = state.n();
    let beta = state.beta();
    let beta_n = state.particle(n).params.beta;
    let l = L_PRACTICAL * beta;
    let l_j: Vec<f64> = (1..n).map(|j| singular_radius(beta, l, j)).collect();
    let hw = tip_window * beta_n;
    let mut labels = Vec::with_capacity(grid.cells.len());
    for cell in &grid.cells {
        let window = grid.windows.iter().find(|w| w.anchor == cell.anchor);
        let mid = cell.mid;
        let rel = grid.anchor_center(cell.anchor) + mid;
        let near_pole = match cell.anchor {
            Anchor::Pole(_) => mid.abs() <= hw,
            _ => (rel - beta_n).abs() <= hw || (rel + beta_n).abs() <= hw,
        };
        if near_pole {
            labels.push(Region::Tip);
            continue;
        }
        let profile = cell_profile(state, window, cell.anchor, mid)?;
        labels.push(label(&profile, l, &l_j));
    }
    let residue = labels.iter().filter(|&&r| r == Region::Residue).count();
    Ok(RegionClassification {
        labels,
        l,
        l_j,
        tip_window: hw,
        residue,
    })
}

fn cell_profile(
    state: &ClusterState,
    window: Option<&Window>,
    anchor: Anchor,
    offset: f64,
) -> Result<DepthProfile> {
    match (anchor, direct_point(state, window, anchor, offset)) {
        (_, Some(p)) => state.depth_profile(p),
        (Anchor::OldBase(j), None) => {
            let w = window.expect("old-basepoint cells carry a window");
            state.depth_profile_old_base(j, w.log_stretch, state.sigma, offset)
        }
        (_, None) => state.depth_profile(EvalPoint::Absolute(C::new(1.0, 0.0))),
    }
}

/// Density mass by region; passes when everything outside the tip windows
/// is below `threshold` and nothing is left unlabeled.
pub fn check_region_masses(
    grid: &DensityGrid,
    cls: &RegionClassification,
    threshold: f64,
) -> OracleReport {
    let mut rep = OracleReport::new("region-masses");
    let probs = grid.probabilities();
    let mut by: BTreeMap<String, f64> = BTreeMap::new();
    for (p, l) in probs.iter().zip(&cls.labels) {
        let key = match l {
            Region::Regular => "mass_regular".to_string(),
            Region::Tip => "mass_tip".to_string(),
            Region::Singular(j) => format!("mass_singular@j={j}"),
            Region::Residue => "mass_residue".to_string(),
        };
        *by.entry(key).or_insert(0.0) += p;
    }
    let total: f64 = probs.iter().sum();
    let tip = by.get("mass_tip").copied().unwrap_or(0.0);
    let non_pole = (total - tip).max(0.0);
    let old: f64 = grid
        .windows
        .iter()
        .filter(|w| matches!(w.anchor, Anchor::OldBase(_)))
        .map(|w| grid.mass_near(w.anchor, w.half_width))
        .sum();
    rep.constants = by;
    rep.set("mass_non_pole", non_pole);
    rep.set("mass_old_basepoint_windows", old);
    rep.set("residue_cells", cls.residue as f64);
    rep.samples = probs.len();
    rep.worst_residual = non_pole;
    rep.envelope = threshold;
    rep.pass = non_pole < threshold && cls.residue == 0;
    rep
}

/// `|e^{i(θ_n ± β)} − ẑ_j^n| ≥ c^{2^{n−j}}` wherever the bound is at least `1e−12`.
pub fn check_basepoint_separation(state: &ClusterState) -> Result<OracleReport> {
    let mut rep = OracleReport::new("basepoint-separation");
    let n = state.n();
    let bp = state.basepoints()?;
    let mut skipped = 0usize;
    let mut worst = 0.0f64;
    let mut missing = 0usize;
    for j in 1..n {
        let bound = state.c.powf(2f64.powi((n - j) as i32));
        if bound < 1e-12 {
            skipped += 1;
            continue;
        }
        let Some(z) = state.basepoint(j) else {
            missing += 1;
            continue;
        };
        let dist = (bp.poles[0] - z).norm().min((bp.poles[1] - z).norm());
        rep.set(format!("separation@j={j}"), dist);
        worst = worst.max(bound / dist);
        rep.samples += 1;
    }
    rep.set("skipped", skipped as f64);
    rep.set("missing", missing as f64);
    rep.worst_residual = worst;
    rep.envelope = 1.0;
    rep.pass = worst <= 1.0 && missing == 0;
    Ok(rep)
}

/// Check that a one-particle grid matches [`one_slit_masses`].
pub fn one_slit_agreement(grid: &DensityGrid, quad: &OneSlitMasses) -> f64 {
    (grid.log_z - quad.log_z).exp() - 1.0
}

/// `f(e^{iβ})`, `f(1)` and the far field for one capacity.
pub fn slit_identities(c: f64) -> Result<[f64; 3]> {
    let p = SlitParams::from_capacity(c)?;
    let base = (slit_map(p.e_ibeta, &p)? - 1.0).norm();
    let tip = (slit_map(C::new(1.0, 0.0), &p)? - (1.0 + p.d)).norm();
    let far = (slit_map(C::new(1e8, 0.0), &p)? / (c.exp() * 1e8) - 1.0).norm();
    Ok([base, tip, far])
}

/// Simulated clusters with `2..=max_n` particles, cut before any stop.
pub fn random_small_clusters(count: usize, max_n: usize, seed: u64) -> Result<Vec<ClusterState>> {
    let mut out = Vec::with_capacity(count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let mut p = SimParams::new(1e-3, 4.0);
        p.total = None;
        p.steps = Some(rng.random_range(1..max_n.max(2)));
        p.seed = seed;
        let run = simulate(&p, i as u64, |_| {})?;
        let state = match run.state.stopped_at() {
            Some(k) => run.state.prefix(k - 1)?,
            None => run.state,
        };
        if state.n() >= 2 {
            out.push(state);
        }
    }
    Ok(out)
}

/// Region classification, region masses and basepoint separation over many clusters.
pub fn check_regions(
    states: &[ClusterState],
    grid_cfg: &GridConfig,
    threshold: f64,
) -> Result<Vec<OracleReport>> {
    let mut close = OracleReport::new("close-definition");
    let mut masses = OracleReport::new("region-masses");
    let mut sep = OracleReport::new("basepoint-separation");
    close.envelope = 0.0;
    masses.envelope = threshold;
    sep.envelope = 1.0;
    let (mut residue, mut worst_mass, mut worst_sep) = (0usize, 0.0f64, 0.0f64);
    let mut sep_ok = true;
    for (i, s) in states.iter().enumerate() {
        let grid = build_density(s, grid_cfg, true)?;
        let cls = classify_regions(s, &grid, 0.25)?;
        let m = check_region_masses(&grid, &cls, threshold);
        let b = check_basepoint_separation(s)?;
        residue += cls.residue;
        close.samples += cls.labels.len();
        masses.samples += m.samples;
        sep.samples += b.samples;
        let non_pole = m.constants["mass_non_pole"];
        worst_mass = worst_mass.max(non_pole);
        worst_sep = worst_sep.max(b.worst_residual);
        sep_ok &= b.pass;
        masses.set(format!("mass_non_pole#{i}(n={})", s.n()), non_pole);
        close.set(format!("residue#{i}(n={})", s.n()), cls.residue as f64);
    }
    close.worst_residual = residue as f64;
    close.pass = residue == 0;
    masses.worst_residual = worst_mass;
    masses.pass = worst_mass < threshold && residue == 0;
    sep.worst_residual = worst_sep;
    sep.pass = sep_ok;
    Ok(vec![close, masses, sep])
}

/// A named group of checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Slit,
    Sticky,
    Deriv,
    Symmetry,
    Regions,
    All,
}

impl std::str::FromStr for Suite {
    type Err = AleError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "slit" => Suite::Slit,
            "sticky" => Suite::Sticky,
            "deriv" => Suite::Deriv,
            "symmetry" => Suite::Symmetry,
            "regions" => Suite::Regions,
            "all" => Suite::All,
            other => return Err(AleError::Config(format!(
                "unknown suite {other:?}; expected slit, sticky, deriv, symmetry, regions or all"
            ))),
        })
    }
}

/// Alternating signs `+, −, +, …` for `n` particles.
pub fn alternating_signs(n: usize) -> Vec<i8> {
    (0..n.saturating_sub(1))
        .map(|k| if k % 2 == 0 { 1 } else { -1 })
        .collect()
}

/// Runs a suite at the default desk-scale parameters (`c = 1e−3`, `σ = c⁶`, `ν = 4`).
pub fn run_suite(suite: Suite) -> Result<Vec<OracleReport>> {
    let c: f64 = 1e-3;
    let sigma = c.powi(6);
    let nu = 4.0;
    let mut out = Vec::new();
    let all = suite == Suite::All;
    let f_prime = check_f_prime_bounds(&SLIT_CAPACITIES, 4000)?;
    if all || suite == Suite::Slit {
        out.push(f_prime.clone());
        out.push(check_distance_estimates(&SLIT_CAPACITIES, 1000, 11)?);
    }
    if all || suite == Suite::Sticky {
        let s = ideal_state(c, nu, sigma, &alternating_signs(6))?;
        out.push(check_sticky(&s, 1e-15, 16)?);
    }
    if all || suite == Suite::Deriv {
        let (a1, a2) = (f_prime.constants["A1"], f_prime.constants["A2"]);
        let mut deriv = OracleReport::new("deriv-estimate");
        let mut pf = OracleReport::new("pf-bound");
        deriv.pass = true;
        pf.pass = true;
        let mut fitted = f64::INFINITY;
        for n in [1usize, 2, 4, 8, 12, 16, 20] {
            let s = ideal_state(c, nu, sigma, &alternating_signs(n))?;
            let beta = s.beta();
            let d = check_deriv_estimate(&s, &phi_grid(sigma, L_PRACTICAL * beta), a1, a2)?;
            let a_fit = d.constants["A_fit"];
            fitted = fitted.min(a_fit);
            deriv.samples += d.samples;
            deriv.worst_residual = deriv.worst_residual.max(d.worst_residual);
            deriv.pass &= d.pass;
            deriv.set(format!("A_fit@n={n}"), a_fit);
            let grid = build_density(&s, &GridConfig::default(), true)?;
            let p = check_pf_bound(&s, &grid, a_fit.powf(nu));
            pf.samples += p.samples;
            pf.worst_residual = pf.worst_residual.max(p.worst_residual);
            pf.pass &= p.pass;
            pf.set(format!("margin@n={n}"), p.constants["margin"]);
            if n == 1 {
                let quad = one_slit_masses(c, sigma, nu, 0.25, 20_000)?;
                let dev = one_slit_agreement(&grid, &quad);
                pf.set("one_slit_quadrature_dev", dev);
                pf.pass &= dev.abs() < 1e-2;
            }
        }
        deriv.set("A_fit", fitted);
        deriv.set("log_A1", a1.ln());
        deriv.set("log_A2", a2.ln());
        out.push(deriv);
        out.push(pf);
    }
    if all || suite == Suite::Symmetry {
        out.push(check_symmetry(c, nu, sigma, 10)?);
    }
    if all || suite == Suite::Regions {
        let states = random_small_clusters(20, 8, 2024)?;
        out.extend(check_regions(&states, &GridConfig::default(), 1e-3)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sticky_formula_first_level() {
        let c: f64 = 1e-3;
        let a = 2.0 * c.exp_m1().powf(0.25);
        assert!((sticky_magnitude(c, 1e-15, 1) - a * 1e-15f64.sqrt()).abs() < 1e-20);
        assert_eq!(sticky_magnitude(c, 1e-15, 0), 1e-15);
    }

    #[test]
    fn singular_radii_shrink_doubly_exponentially() {
        let beta = 0.06;
        let l = 1e-3 * beta;
        assert!((singular_radius(beta, l, 1) - 0.25 * beta * 1e-6).abs() < 1e-20);
        assert!(singular_radius(beta, l, 3) < 1e-25);
    }

    #[test]
    fn one_slit_quadrature_concentrates_at_high_nu() {
        let c: f64 = 1e-3;
        let m = one_slit_masses(c, c.powi(6), 4.0, 0.25, 4000).unwrap();
        assert!(m.far < 1e-3);
        assert!((m.plus - m.minus).abs() < 1e-9);
        let flat = one_slit_masses(c, c.powi(6), 0.0, 0.25, 4000).unwrap();
        let beta = SlitParams::from_capacity(c).unwrap().beta;
        assert!((flat.log_z - TAU.ln()).abs() < 1e-6);
        assert!((flat.plus - 0.5 * beta / TAU).abs() < 1e-6);
    }

    #[test]
    fn one_slit_grid_matches_quadrature() {
        let c: f64 = 1e-3;
        let s = ideal_state(c, 4.0, c.powi(6), &[]).unwrap();
        let grid = build_density(&s, &GridConfig::default(), true).unwrap();
        let quad = one_slit_masses(c, c.powi(6), 4.0, 0.25, 20_000).unwrap();
        assert!(one_slit_agreement(&grid, &quad).abs() < 1e-2);
    }

    #[test]
    fn two_particle_regions_are_labeled() {
        let c: f64 = 1e-3;
        let s = ideal_state(c, 4.0, c.powi(6), &[1]).unwrap();
        let grid = build_density(&s, &GridConfig::default(), true).unwrap();
        let cls = classify_regions(&s, &grid, 0.25).unwrap();
        assert_eq!(cls.labels.len(), grid.cells.len());
        assert!(cls.count(Region::Regular) > 0);
        assert!(cls.count(Region::Tip) > 0);
        // Opposite the cluster.
        let far = grid
            .cells
            .iter()
            .position(|c| c.anchor == Anchor::Frame && c.mid.abs() > 3.0)
            .unwrap();
        assert_eq!(cls.labels[far], Region::Regular);
    }

    #[test]
    fn separation_on_small_path() {
        let s = ideal_state(0.05, 4.0, 1e-12, &[1]).unwrap();
        let rep = check_basepoint_separation(&s).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.constants["separation@j=1"] >= 0.05f64.powi(2));
    }

    #[test]
    fn symmetry_is_exact_for_one_slit() {
        let c: f64 = 1e-3;
        let s = ideal_state(c, 4.0, c.powi(6), &[]).unwrap();
        let phis = phi_grid(s.sigma, 1e-4);
        assert!(symmetry_residual(&s, &phis).unwrap() <= 1e-12);
    }
}
