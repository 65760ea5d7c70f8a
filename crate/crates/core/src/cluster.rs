//! The growing cluster `Φ_n = f_1 ∘ ⋯ ∘ f_n` and everything evaluated through it.
//!
//! Points near the newest base preimages are carried down the composition as
//! offsets from the pole they sit on (`e^{iθ_k}(e^{±iβ_k} + δ)`), so lobes of
//! width `σ ≈ 1e−18` are resolved even though `θ_n` itself is only known to
//! `1e−16` as a float.

use num_complex::Complex64 as C;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::angle::AnchoredAngle;
use crate::error::{AleError, Result};
use crate::slit_map::{
    abs_f_prime_sq, cexpm1, log_abs_f_prime_offset, slit_map_generic, slit_map_inverse,
    slit_map_offset_unchecked, SlitParams,
};

/// Radial lift used to keep inverse compositions off the circle.
pub const BASEPOINT_LIFT: f64 = 1e-9;

/// How far an intermediate image may sit inside the unit circle before
/// the composition is declared broken.
const SANITY_TOL: f64 = 1e-9;

/// Near-pole tracking is used while the offset is below this fraction of `β`.
const TRACK_FRACTION: f64 = 0.5;

/// One attached particle.
#[derive(Debug, Clone)]
pub struct Particle {
    pub angle: AnchoredAngle,
    pub capacity: f64,
    pub params: SlitParams,
    /// `s_k`: `θ⊤_k = θ_{k−1} + s_k β_{k−1}`.
    pub sign: i8,
    /// `ρ_k = θ_k − θ⊤_k`.
    pub residual: f64,
    rot: C,
    top_rot: C,
    step_rot: C,
    expm1_rho: C,
    track_sq: f64,
}

impl Particle {
    /// `e^{iθ_k}`.
    pub fn rotation(&self) -> C {
        self.rot
    }
}

/// Where an evaluation point sits relative to the newest particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalPoint {
    /// A point given in absolute coordinates.
    Absolute(C),
    /// `e^{iθ_n}(e^{i·sign·β_n} + delta)`.
    NearPole { sign: i8, delta: C },
}

/// Result of pushing a point through (part of) the composition.
#[derive(Debug, Clone, Copy)]
pub struct ChainOut {
    /// The image in absolute coordinates.
    pub point: C,
    /// `Σ log|f_k'|` over the levels applied.
    pub log_deriv: f64,
    /// If the last level was evaluated near a pole: `image − e^{iθ_k}` for
    /// that level `k`, with full relative precision.
    pub base_offset: Option<(usize, C)>,
}

#[derive(Clone, Copy)]
enum Tracked {
    Abs(C),
    Near { sign: i8, delta: C },
}

/// Output of a single level, handed to chain visitors.
#[derive(Clone, Copy)]
enum LevelOut {
    Abs(C),
    /// `f_k(·) − 1` in the frame of particle `k`.
    Base(C),
}

/// One point on its way down the composition.
struct Walker {
    state: Tracked,
    log_deriv: f64,
    // Product of |f'|² folded into the log only when it nears the exponent range.
    sq: f64,
    base_offset: Option<(usize, C)>,
}

impl Walker {
    fn new(top: usize, start: EvalPoint) -> Result<Self> {
        let state = match start {
            EvalPoint::Absolute(z) => Tracked::Abs(z),
            EvalPoint::NearPole { sign, delta } => {
                if top == 0 {
                    return Err(AleError::Index { index: 0, len: 0 });
                }
                Tracked::Near { sign, delta }
            }
        };
        Ok(Self {
            state,
            log_deriv: 0.0,
            sq: 1.0,
            base_offset: None,
        })
    }

    #[inline]
    fn step<V: FnMut(usize, LevelOut)>(
        &mut self,
        cl: &ClusterState,
        k: usize,
        bottom: usize,
        visit: &mut V,
    ) -> Result<()> {
        let p = &cl.particles[k - 1];
        if let Tracked::Abs(z) = self.state {
            let u = z * p.rot.conj();
            let dp = u - p.params.e_ibeta;
            let dm = u - p.params.e_ibeta.conj();
            if dp.norm_sqr() < p.track_sq {
                self.state = Tracked::Near { sign: 1, delta: dp };
            } else if dm.norm_sqr() < p.track_sq {
                self.state = Tracked::Near {
                    sign: -1,
                    delta: dm,
                };
            } else {
                if u.norm_sqr() < (1.0 - SANITY_TOL) * (1.0 - SANITY_TOL) {
                    return Err(AleError::Domain(format!(
                        "intermediate image {u} left the exterior disc at level {k}"
                    )));
                }
                let fu = slit_map_generic(u, &p.params);
                self.sq *= abs_f_prime_sq(u, fu, dp, dm);
                if !(1e-150..=1e150).contains(&self.sq) {
                    self.log_deriv += 0.5 * self.sq.ln();
                    self.sq = 1.0;
                }
                let z = p.rot * fu;
                visit(k, LevelOut::Abs(z));
                self.base_offset = None;
                self.state = Tracked::Abs(z);
                return Ok(());
            }
        }
        let Tracked::Near { sign, delta } = self.state else {
            unreachable!()
        };
        if delta.re == 0.0 && delta.im == 0.0 {
            return Err(AleError::Pole(format!("point sits on a pole of f_{k}")));
        }
        let eps = slit_map_offset_unchecked(delta, sign, &p.params);
        self.log_deriv += log_abs_f_prime_offset(delta, sign, eps, &p.params);
        visit(k, LevelOut::Base(eps));
        self.base_offset = Some((k, p.rot * eps));
        self.state = if k > bottom + 1 {
            let prev = &cl.particles[k - 2];
            let next = p.step_rot * (p.expm1_rho * (1.0 + eps) + eps);
            if next.norm_sqr() < prev.track_sq {
                Tracked::Near {
                    sign: p.sign,
                    delta: next,
                }
            } else {
                Tracked::Abs(p.rot * (1.0 + eps))
            }
        } else {
            Tracked::Abs(p.rot * (1.0 + eps))
        };
        Ok(())
    }

    fn finish(self, cl: &ClusterState, top: usize) -> ChainOut {
        let point = match self.state {
            Tracked::Abs(z) => z,
            Tracked::Near { sign, delta } => {
                let p = &cl.particles[top - 1];
                p.rot * (p.params.pole(sign) + delta)
            }
        };
        ChainOut {
            point,
            log_deriv: self.log_deriv + 0.5 * self.sq.ln(),
            base_offset: self.base_offset,
        }
    }
}

/// Where a point's partial images fall, level by level.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthProfile {
    /// Entry `j − 1` holds `|Φ_{j,n}(w) − e^{iθ⊥_{j+1}}|`.
    pub to_bottom: Vec<f64>,
    /// `|Φ_n(w) − 1|`.
    pub to_base: f64,
    pub log_deriv: f64,
}

/// Basepoints `ẑ_j^n` and the two newest poles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Basepoints {
    /// Entry `j − 1` holds `ẑ_j^n`, or `None` if the inverse failed.
    pub old: Vec<Option<C>>,
    /// `e^{i(θ_n + β)}` and `e^{i(θ_n − β)}`.
    pub poles: [C; 2],
}

/// Boundary picture of a cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryTrace {
    /// `Φ_n` of a uniform mesh on the lifted circle, closed.
    pub outline: Vec<C>,
    /// Particle `k` drawn as `Φ_{k−1}` of its own slit, base to tip and back.
    pub particles: Vec<Vec<C>>,
}

impl BoundaryTrace {
    /// All points as one polyline.
    pub fn points(&self) -> Vec<C> {
        let mut v = self.outline.clone();
        for p in &self.particles {
            v.extend_from_slice(p);
        }
        v
    }
}

/// State of one ALE run.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub c: f64,
    pub alpha: f64,
    pub nu: f64,
    pub sigma: f64,
    /// Radius (radians) of the stopping rule around `θ⊤`.
    pub d_stat: f64,
    base: SlitParams,
    particles: Vec<Particle>,
    stopped_at: Option<usize>,
    basepoints: Vec<Option<C>>,
}

impl ClusterState {
    /// Empty cluster. `d_stat` is given in units of `β(c)`.
    pub fn new(c: f64, nu: f64, alpha: f64, sigma: f64, d_stat_over_beta: f64) -> Result<Self> {
        let base = SlitParams::from_capacity(c).map_err(|e| AleError::Config(e.to_string()))?;
        let bad = |name: &str, v: f64| AleError::Config(format!("{name} = {v} is not allowed"));
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(bad("nu", nu));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(bad("alpha", alpha));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(bad("sigma", sigma));
        }
        if !(d_stat_over_beta.is_finite() && d_stat_over_beta > 0.0) {
            return Err(bad("d_stat", d_stat_over_beta));
        }
        Ok(Self {
            c,
            alpha,
            nu,
            sigma,
            d_stat: d_stat_over_beta * base.beta,
            base,
            particles: Vec::new(),
            stopped_at: None,
            basepoints: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.particles.len()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Particle `k` (1-based).
    pub fn particle(&self, k: usize) -> &Particle {
        &self.particles[k - 1]
    }

    /// Shape of the base-capacity particle.
    pub fn base_params(&self) -> &SlitParams {
        &self.base
    }

    pub fn beta(&self) -> f64 {
        self.base.beta
    }

    /// Index of the first particle that landed farther than `d_stat` from `θ⊤`.
    pub fn stopped_at(&self) -> Option<usize> {
        self.stopped_at
    }

    pub fn total_capacity(&self) -> f64 {
        self.particles.iter().map(|p| p.capacity).sum()
    }

    pub fn angles(&self) -> Vec<AnchoredAngle> {
        self.particles.iter().map(|p| p.angle).collect()
    }

    pub fn caps(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.capacity).collect()
    }

    pub fn top_signs(&self) -> Vec<i8> {
        self.particles.iter().map(|p| p.sign).collect()
    }

    /// `θ_k` as a float.
    pub fn theta(&self, k: usize) -> f64 {
        self.particle(k).angle.value(self.base.beta)
    }

    /// Newest angle, or the `θ₁ = 0` convention before the first particle.
    pub fn last_angle(&self) -> AnchoredAngle {
        self.particles
            .last()
            .map(|p| p.angle)
            .unwrap_or_else(|| AnchoredAngle::new(0.0))
    }

    /// Appends `θ_{n+1} = θ_n + sign·β_n + residual` without collapsing the angle.
    ///
    /// For the first particle `sign` and `residual` are ignored and `θ₁ = 0`.
    pub fn append_step(&mut self, sign: i8, residual: f64, capacity: f64) -> Result<()> {
        let sign = if sign >= 0 { 1 } else { -1 };
        match self.particles.last() {
            None => self.push(AnchoredAngle::new(0.0), 1, 0.0, capacity),
            Some(last) => {
                let beta_n = last.params.beta;
                let angle = last.angle.step(
                    sign,
                    residual + sign as f64 * (beta_n - self.base.beta),
                    self.base.beta,
                );
                self.push(angle, sign, residual, capacity)
            }
        }
    }

    /// Appends an arbitrary angle; `s_{n+1}` is the sign of the nearer of
    /// `θ_n ± β_n`, ties going to `+`.
    pub fn append_particle(&mut self, angle: AnchoredAngle, capacity: f64) -> Result<()> {
        let Some(last) = self.particles.last() else {
            return self.push(angle, 1, 0.0, capacity);
        };
        let beta = self.base.beta;
        let beta_n = last.params.beta;
        let angle = if angle.base == last.angle.base {
            angle
        } else {
            AnchoredAngle::from_value(angle.value(beta), last.angle.base, beta)
        };
        let dm = angle.m - last.angle.m;
        let dr = angle.r - last.angle.r;
        // Δ = dm·β + dr, measured against θ_n ± β_n without collapsing.
        let (mut plus, mut minus) = (
            (dm - 1) as f64 * beta + (beta - beta_n) + dr,
            (dm + 1) as f64 * beta - (beta - beta_n) + dr,
        );
        if plus.abs() > std::f64::consts::PI && minus.abs() > std::f64::consts::PI {
            let tau = std::f64::consts::TAU;
            let delta = (dm as f64 * beta + dr + std::f64::consts::PI).rem_euclid(tau)
                - std::f64::consts::PI;
            plus = delta - beta_n;
            minus = delta + beta_n;
        }
        let (sign, residual) = if plus.abs() <= minus.abs() {
            (1, plus)
        } else {
            (-1, minus)
        };
        self.push(angle, sign, residual, capacity)
    }

    /// The cluster made of the first `k` particles.
    pub fn prefix(&self, k: usize) -> Result<ClusterState> {
        if k > self.n() {
            return Err(AleError::Length {
                needed: k,
                have: self.n(),
            });
        }
        let mut out = self.clone_empty();
        for p in &self.particles[..k] {
            out.push(p.angle, p.sign, p.residual, p.capacity)?;
        }
        Ok(out)
    }

    fn clone_empty(&self) -> ClusterState {
        ClusterState {
            c: self.c,
            alpha: self.alpha,
            nu: self.nu,
            sigma: self.sigma,
            d_stat: self.d_stat,
            base: self.base,
            particles: Vec::new(),
            stopped_at: None,
            basepoints: Vec::new(),
        }
    }

    fn push(&mut self, angle: AnchoredAngle, sign: i8, residual: f64, capacity: f64) -> Result<()> {
        let params = SlitParams::from_capacity(capacity)?;
        let rot = C::from_polar(1.0, angle.value(self.base.beta));
        let (step_rot, expm1_rho, top_rot) = match self.particles.last() {
            None => (C::new(1.0, 0.0), C::new(0.0, 0.0), rot),
            Some(prev) => {
                let step_rot = prev.params.pole(sign);
                let expm1_rho = cexpm1(C::new(0.0, residual));
                (step_rot, expm1_rho, prev.rot * step_rot)
            }
        };
        let k = self.particles.len() + 1;
        if k >= 2 && self.stopped_at.is_none() && residual.abs() > self.d_stat {
            self.stopped_at = Some(k);
        }
        let track_sq = (TRACK_FRACTION * params.beta).powi(2);
        let particle = Particle {
            angle,
            capacity,
            params,
            sign,
            residual,
            rot,
            top_rot,
            step_rot,
            expm1_rho,
            track_sq,
        };
        self.update_basepoints(&particle);
        self.particles.push(particle);
        Ok(())
    }

    fn update_basepoints(&mut self, new: &Particle) {
        let Some(prev) = self.particles.last() else {
            return;
        };
        let lift = BASEPOINT_LIFT.exp();
        let pull = |z: C| -> Option<C> {
            let u = z * lift * new.rot.conj();
            slit_map_inverse(u, &new.params).ok().map(|w| {
                let w = new.rot * w;
                w / w.norm()
            })
        };
        for slot in self.basepoints.iter_mut() {
            *slot = slot.and_then(pull);
        }
        let bottom = prev.rot * prev.params.pole(-new.sign);
        self.basepoints.push(pull(bottom));
    }

    /// `ẑ_j^n` for `j = 1..n−1` and the poles `e^{i(θ_n ± β_n)}`.
    ///
    /// Maintained incrementally through `ẑ_j^{n} = f_n^{-1}(ẑ_j^{n−1})`.
    pub fn basepoints(&self) -> Result<Basepoints> {
        let last = self
            .particles
            .last()
            .ok_or(AleError::Length { needed: 1, have: 0 })?;
        Ok(Basepoints {
            old: self.basepoints.clone(),
            poles: [
                last.rot * last.params.pole(1),
                last.rot * last.params.pole(-1),
            ],
        })
    }

    /// `ẑ_j^n` (1 ≤ j < n).
    pub fn basepoint(&self, j: usize) -> Option<C> {
        self.basepoints.get(j.checked_sub(1)?).copied().flatten()
    }

    /// `e^{iθ⊥_{k}}` for `k ≥ 2`.
    pub fn bottom_point(&self, k: usize) -> C {
        let p = self.particle(k);
        let prev = self.particle(k - 1);
        prev.rot * prev.params.pole(-p.sign)
    }

    /// `e^{iθ⊤_{k}}`.
    pub fn top_point(&self, k: usize) -> C {
        self.particle(k).top_rot
    }

    /// Evaluation point `e^{σ + iθ}` with `θ = θ_n + offset`.
    pub fn frame_point(&self, offset: f64, sigma: f64) -> EvalPoint {
        let rot = self
            .particles
            .last()
            .map(|p| p.rot)
            .unwrap_or(C::new(1.0, 0.0));
        EvalPoint::Absolute(rot * C::from_polar(sigma.exp(), offset))
    }

    /// Evaluation point `e^{σ + iθ}` with `θ = θ_n + sign·β_n + phi`, as a pole offset.
    pub fn pole_point(&self, sign: i8, phi: f64, sigma: f64) -> EvalPoint {
        match self.particles.last() {
            None => self.frame_point(phi, sigma),
            Some(p) => EvalPoint::NearPole {
                sign,
                delta: p.params.pole(sign) * cexpm1(C::new(sigma, phi)),
            },
        }
    }

    /// `Φ_n(w)`.
    pub fn phi_apply(&self, w: C) -> Result<C> {
        self.phi_partial_apply(0, w)
    }

    /// `Φ_{j,n}(w) = f_{j+1} ∘ ⋯ ∘ f_n(w)`.
    pub fn phi_partial_apply(&self, j: usize, w: C) -> Result<C> {
        if j > self.n() {
            return Err(AleError::Index {
                index: j,
                len: self.n(),
            });
        }
        if w.norm() < 1.0 - SANITY_TOL {
            return Err(AleError::Domain(format!(
                "|w| = {} is inside the unit disc",
                w.norm()
            )));
        }
        Ok(self
            .chain(self.n(), j, EvalPoint::Absolute(w), &mut |_, _| {})?
            .point)
    }

    /// Pushes a point through levels `n, n−1, …, bottom+1`.
    pub fn eval(&self, bottom: usize, w: EvalPoint) -> Result<ChainOut> {
        if bottom > self.n() {
            return Err(AleError::Index {
                index: bottom,
                len: self.n(),
            });
        }
        self.chain(self.n(), bottom, w, &mut |_, _| {})
    }

    /// `log|Φ_n'(w)|`.
    pub fn log_abs_phi_prime(&self, w: EvalPoint) -> Result<f64> {
        Ok(self.chain(self.n(), 0, w, &mut |_, _| {})?.log_deriv)
    }

    /// `log|Φ_n'(e^{σ+iθ})|` for `θ = θ_n + offset`.
    pub fn log_abs_phi_prime_frame(&self, offset: f64) -> Result<f64> {
        self.log_abs_phi_prime(self.frame_point(offset, self.sigma))
    }

    /// Offsets `δ_j = Φ_{n−j,n}(w) − e^{iθ⊤_{n−j+1}}`, `j = 1..n`, for
    /// `w = e^{iθ_n}(e^{i·sign·β_n} + δ₀)`.
    pub fn offset_chain(&self, pole_sign: i8, delta0: C) -> Result<Vec<C>> {
        let n = self.n();
        if n == 0 {
            return Ok(Vec::new());
        }
        let limit = self.particle(n).params.beta * 1e-3;
        if delta0.norm() > limit {
            return Err(AleError::OutOfRegime {
                magnitude: delta0.norm(),
                limit,
            });
        }
        if delta0 == C::new(0.0, 0.0) {
            return Ok(vec![C::new(0.0, 0.0); n]);
        }
        let mut out = Vec::with_capacity(n);
        let w = EvalPoint::NearPole {
            sign: pole_sign,
            delta: delta0,
        };
        self.chain(n, 0, w, &mut |k, o| {
            let p = &self.particles[k - 1];
            out.push(match o {
                LevelOut::Base(eps) => p.rot * (eps - p.expm1_rho.conj()),
                LevelOut::Abs(z) => z - p.top_rot,
            });
        })?;
        Ok(out)
    }

    /// Distances of the partial images of `w` to the old bases, and of `Φ_n(w)` to 1.
    pub fn depth_profile(&self, w: EvalPoint) -> Result<DepthProfile> {
        let n = self.n();
        self.depth_profile_from(n, w, vec![f64::INFINITY; n.saturating_sub(1)])
    }

    /// [`Self::depth_profile`] at `ẑ_j^n e^{σ + iφ}` through the same
    /// first-order expansion as [`Self::log_abs_phi_prime_old_base`].
    /// Levels above `j` are left at infinity.
    pub fn depth_profile_old_base(
        &self,
        j: usize,
        log_kappa: f64,
        sigma: f64,
        phi: f64,
    ) -> Result<DepthProfile> {
        let n = self.n();
        if j == 0 || j >= n {
            return Err(AleError::Index { index: j, len: n });
        }
        let sign = -self.particle(j + 1).sign;
        let kappa = log_kappa.exp();
        let delta = self.particle(j).params.pole(sign) * cexpm1(C::new(kappa * sigma, kappa * phi));
        let mut to_bottom = vec![f64::INFINITY; n - 1];
        to_bottom[j - 1] = delta.norm();
        let mut out = self.depth_profile_from(j, EvalPoint::NearPole { sign, delta }, to_bottom)?;
        out.log_deriv += log_kappa;
        Ok(out)
    }

    fn depth_profile_from(
        &self,
        top: usize,
        w: EvalPoint,
        mut to_bottom: Vec<f64>,
    ) -> Result<DepthProfile> {
        let out = self.chain(top, 0, w, &mut |k, o| {
            if k < 2 {
                return;
            }
            let p = &self.particles[k - 1];
            let image = match o {
                LevelOut::Base(eps) => p.rot * (1.0 + eps),
                LevelOut::Abs(z) => z,
            };
            to_bottom[k - 2] = (image - self.bottom_point(k)).norm();
        })?;
        let to_base = match out.base_offset {
            Some((1, off)) => off.norm(),
            _ => (out.point - 1.0).norm(),
        };
        Ok(DepthProfile {
            to_bottom,
            to_base,
            log_deriv: out.log_deriv,
        })
    }

    /// `|Φ_{j,n}'(ẑ_j^n)|` in log form; `None` if the basepoint is unavailable.
    pub fn log_basepoint_stretch(&self, j: usize) -> Option<f64> {
        let z = self.basepoint(j)?;
        self.eval(j, EvalPoint::Absolute(z))
            .ok()
            .map(|o| o.log_deriv)
    }

    /// `log|Φ_n'(ẑ_j^n e^{σ + iφ})|` through the first-order expansion of
    /// `Φ_{j,n}` at `ẑ_j^n`: the point lands at `e^{iθ⊥_{j+1}} e^{κ(σ + iφ)}`
    /// with `κ = |Φ_{j,n}'(ẑ_j^n)|`, where `Φ_j` is evaluated near its pole.
    pub fn log_abs_phi_prime_old_base(
        &self,
        j: usize,
        log_kappa: f64,
        sigma: f64,
        phi: f64,
    ) -> Result<f64> {
        let next = self.particle(j + 1);
        let sign = -next.sign;
        let kappa = log_kappa.exp();
        let delta = self.particle(j).params.pole(sign) * cexpm1(C::new(kappa * sigma, kappa * phi));
        let out = self.chain(j, 0, EvalPoint::NearPole { sign, delta }, &mut |_, _| {})?;
        Ok(log_kappa + out.log_deriv)
    }

    fn chain<V: FnMut(usize, LevelOut)>(
        &self,
        top: usize,
        bottom: usize,
        start: EvalPoint,
        visit: &mut V,
    ) -> Result<ChainOut> {
        let mut walker = Walker::new(top, start)?;
        for k in (bottom + 1..=top).rev() {
            walker.step(self, k, bottom, visit)?;
        }
        Ok(walker.finish(self, top))
    }

    /// `log|Φ_n'|` at many points; chains are advanced level by level in
    /// lockstep so independent evaluations overlap.
    pub fn log_abs_phi_prime_many(&self, points: &[EvalPoint]) -> Vec<Result<f64>> {
        let n = self.n();
        let mut walkers: Vec<Result<Walker>> = points.iter().map(|&w| Walker::new(n, w)).collect();
        for k in (1..=n).rev() {
            for w in walkers.iter_mut() {
                if let Ok(walker) = w {
                    if let Err(e) = walker.step(self, k, 0, &mut |_, _| {}) {
                        *w = Err(e);
                    }
                }
            }
        }
        walkers
            .into_iter()
            .map(|w| w.map(|w| w.finish(self, n).log_deriv))
            .collect()
    }

    /// Outline of `Φ_n` on a uniform mesh plus every particle drawn as a segment.
    pub fn boundary_trace(&self, points_per_particle: usize) -> BoundaryTrace {
        let ppp = points_per_particle.max(2);
        let m = (ppp * self.n().max(1)).clamp(64, 1 << 16);
        let lift = BASEPOINT_LIFT.exp();
        let mut outline: Vec<C> = (0..m)
            .filter_map(|i| {
                let t = std::f64::consts::TAU * i as f64 / m as f64;
                self.phi_apply(C::from_polar(lift, t)).ok()
            })
            .collect();
        if let Some(&first) = outline.first() {
            outline.push(first);
        }
        let particles = (1..=self.n())
            .map(|k| {
                let p = self.particle(k);
                let mut seg: Vec<C> = (0..ppp)
                    .filter_map(|i| {
                        let r = BASEPOINT_LIFT + p.params.d * i as f64 / (ppp - 1) as f64;
                        let w = p.rot * (1.0 + r);
                        self.chain(k - 1, 0, EvalPoint::Absolute(w), &mut |_, _| {})
                            .ok()
                            .map(|o| o.point)
                    })
                    .collect();
                let back: Vec<C> = seg.iter().rev().skip(1).copied().collect();
                seg.extend(back);
                seg
            })
            .collect();
        BoundaryTrace { outline, particles }
    }

    /// `k` points `Φ_n(e^{ε + iU})` with `U` uniform: harmonic measure from infinity.
    pub fn harmonic_sample<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> Vec<C> {
        let lift = BASEPOINT_LIFT.exp();
        (0..k)
            .filter_map(|_| {
                let t = rng.random_range(0.0..std::f64::consts::TAU);
                self.phi_apply(C::from_polar(lift, t)).ok()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slit_map::{log_abs_f_prime, slit_map};

    fn ideal(c: f64, signs: &[i8]) -> ClusterState {
        let mut s = ClusterState::new(c, 4.0, 0.0, c.powi(6), 0.25).unwrap();
        s.append_step(1, 0.0, c).unwrap();
        for &sg in signs {
            s.append_step(sg, 0.0, c).unwrap();
        }
        s
    }

    #[test]
    fn empty_cluster_is_identity() {
        let s = ClusterState::new(1e-3, 4.0, 0.0, 1e-18, 0.25).unwrap();
        assert_eq!(s.total_capacity(), 0.0);
        let w = C::new(1.3, -0.4);
        assert_eq!(s.phi_apply(w).unwrap(), w);
        assert_eq!(s.log_abs_phi_prime(EvalPoint::Absolute(w)).unwrap(), 0.0);
    }

    #[test]
    fn one_particle_matches_slit_map() {
        let s = ideal(0.01, &[]);
        let p = s.base_params();
        let tip = s.phi_apply(C::new(1.0, 0.0)).unwrap();
        assert!((tip - (1.0 + p.d)).norm() < 1e-12);
        let w = C::new(0.3, 1.2);
        assert!((s.phi_apply(w).unwrap() - slit_map(w, p).unwrap()).norm() < 1e-15);
        let lp = s.log_abs_phi_prime(EvalPoint::Absolute(w)).unwrap();
        assert!((lp - log_abs_f_prime(w, p).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            ClusterState::new(-1.0, 4.0, 0.0, 1e-18, 0.25),
            Err(AleError::Config(_))
        ));
        assert!(ClusterState::new(1e-3, 4.0, -1.0, 1e-18, 0.25).is_err());
        assert!(ClusterState::new(1e-3, 4.0, 0.0, 0.0, 0.25).is_err());
    }

    #[test]
    fn append_records_sign_and_stop() {
        let c = 1e-3;
        let mut s = ClusterState::new(c, 4.0, 0.0, 1e-18, 0.25).unwrap();
        let beta = s.beta();
        s.append_particle(AnchoredAngle::new(0.0), c).unwrap();
        s.append_particle(AnchoredAngle::new(0.0).step(1, 0.0, beta), c)
            .unwrap();
        assert_eq!(s.particle(2).sign, 1);
        assert_eq!(s.particle(2).residual, 0.0);
        assert_eq!(s.stopped_at(), None);

        let mut t = ClusterState::new(c, 4.0, 0.0, 1e-18, 0.25).unwrap();
        t.append_particle(AnchoredAngle::new(0.0), c).unwrap();
        t.append_particle(AnchoredAngle::from_value(0.5 * beta, 0.0, beta), c)
            .unwrap();
        assert_eq!(t.stopped_at(), Some(2));

        let mut u = ClusterState::new(c, 4.0, 0.0, 1e-18, 0.25).unwrap();
        u.append_particle(AnchoredAngle::new(0.0), c).unwrap();
        u.append_particle(AnchoredAngle::new(0.0), c).unwrap();
        assert_eq!(u.particle(2).sign, 1);
        assert_eq!(u.stopped_at(), Some(2));
    }

    #[test]
    fn tracked_and_absolute_chains_agree() {
        let s = ideal(1e-3, &[1, -1, 1, 1]);
        for &phi in &[3e-3, 1e-3, -2e-3] {
            let tracked = s.log_abs_phi_prime(s.pole_point(1, phi, 1e-4)).unwrap();
            let beta = s.beta();
            let abs = s.log_abs_phi_prime(EvalPoint::Absolute(
                s.particle(s.n()).rotation() * C::from_polar(1e-4f64.exp(), beta + phi),
            ));
            assert!((tracked - abs.unwrap()).abs() < 1e-6 * tracked.abs().max(1.0));
        }
    }

    #[test]
    fn chain_rule_matches_per_level_sum() {
        let s = ideal(2e-3, &[1, -1, -1]);
        let w = C::from_polar(1.01, 2.0);
        let mut z = w;
        let mut sum = 0.0;
        for k in (1..=s.n()).rev() {
            let p = s.particle(k);
            let u = z * p.rotation().conj();
            sum += log_abs_f_prime(u, &p.params).unwrap();
            z = p.rotation() * slit_map(u, &p.params).unwrap();
        }
        let lp = s.log_abs_phi_prime(EvalPoint::Absolute(w)).unwrap();
        assert!((lp - sum).abs() < 1e-10);
        assert!((s.phi_apply(w).unwrap() - z).norm() < 1e-12);
    }

    #[test]
    fn offset_chain_first_level() {
        let c = 1e-3;
        let s = ideal(c, &[]);
        let d0 = C::new(0.0, 1e-15);
        let out = s.offset_chain(1, d0).unwrap();
        let q = c.exp_m1();
        let predicted = 2.0 * q.powf(0.25) * d0.norm().sqrt();
        assert!((out[0].norm() / predicted - 1.0).abs() < 0.05);
        assert_eq!(
            s.offset_chain(1, C::new(0.0, 0.0)).unwrap(),
            vec![C::new(0.0, 0.0)]
        );
        assert!(s.offset_chain(1, C::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn basepoints_satisfy_recursion() {
        let s = ideal(0.02, &[1, -1, 1, 1]);
        let bp = s.basepoints().unwrap();
        assert_eq!(bp.old.len(), s.n() - 1);
        let z2 = s.bottom_point(2);
        let back = s.phi_partial_apply(1, bp.old[0].unwrap()).unwrap();
        assert!((back - z2).norm() < 1e-7);
        for z in bp.old.iter().flatten() {
            assert!((z.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rotation_equivariance() {
        let c = 1e-3;
        let mut a = ClusterState::new(c, 4.0, 0.0, 1e-18, 0.25).unwrap();
        let mut b = a.clone();
        let shift = 0.7;
        let beta = a.beta();
        a.append_particle(AnchoredAngle::new(0.0), c).unwrap();
        b.append_particle(AnchoredAngle::new(shift), c).unwrap();
        for sg in [1, -1, 1] {
            let na = a.last_angle().step(sg, 1e-7, beta);
            let nb = b.last_angle().step(sg, 1e-7, beta);
            a.append_particle(na, c).unwrap();
            b.append_particle(nb, c).unwrap();
        }
        let w = C::from_polar(1.001, 0.2);
        let r = C::from_polar(1.0, shift);
        assert!((a.phi_apply(w).unwrap() * r - b.phi_apply(w * r).unwrap()).norm() < 1e-12);
        let la = a.log_abs_phi_prime(EvalPoint::Absolute(w)).unwrap();
        let lb = b.log_abs_phi_prime(EvalPoint::Absolute(w * r)).unwrap();
        assert!((la - lb).abs() < 1e-9);
    }

    #[test]
    fn trace_of_single_slit_has_tip() {
        let s = ideal(0.01, &[]);
        let tr = s.boundary_trace(16);
        let d = s.base_params().d;
        assert!(tr.points().iter().any(|z| (z - (1.0 + d)).norm() < 1e-6));
        assert!(tr.points().iter().all(|z| z.norm() >= 1.0 - 1e-6));
        let empty = ClusterState::new(0.01, 4.0, 0.0, 1e-18, 0.25)
            .unwrap()
            .boundary_trace(8);
        assert!(empty.outline.iter().all(|z| (z.norm() - 1.0).abs() < 1e-8));
    }
}
