//! The single radial slit map and its near-base variants.
//!
//! `f_c` maps the exterior disc `Δ = {|w| > 1}` onto `Δ \ (1, 1 + d]`. It is
//! evaluated as `m_Δ ∘ f̃_c ∘ m_H`, where `f̃_c(ζ) = e^{-c/2} √(ζ² − (e^c − 1))`
//! is the half-plane slit map, but the final Möbius step is folded into a
//! form that stays well conditioned both at infinity and at the tip.
//!
//! Points within `β/2` of the base preimages `e^{±iβ}` are handled by
//! [`slit_map_offset`], which works with the offset `δ = w − e^{±iβ}` directly
//! and keeps full relative precision for offsets far below `f64::EPSILON`.

use num_complex::Complex64 as C;

use crate::error::{AleError, Result};

const I: C = C::new(0.0, 1.0);

/// Relative size of `e^c ζ² + q` below which an imaginary `ζ` counts as the tip.
const SLIT_TIP_TOL: f64 = 1e-8;

/// Tolerance below the unit circle still accepted as a boundary point.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Shape constants of one slit particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlitParams {
    /// Logarithmic capacity.
    pub c: f64,
    /// Slit length.
    pub d: f64,
    /// Half-angle of the preimage arc of the slit.
    pub beta: f64,
    /// `e^{iβ}`.
    pub e_ibeta: C,
    /// `e^c − 1`.
    pub q: f64,
    /// `√(e^c − 1)`.
    pub sqrt_q: f64,
    /// `1 − e^{−c}`.
    pub one_minus_exp_neg_c: f64,
    exp_c: f64,
    exp_neg_half_c: f64,
}

impl SlitParams {
    /// Builds the particle of capacity `c`.
    ///
    /// `d` is the positive root of `(d + 2)² = 4e^c (d + 1)` and `β` is the
    /// argument of `2e^{−c} − 1 + 2ie^{−c}√(e^c − 1)`, both in cancellation-free
    /// form.
    pub fn from_capacity(c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(AleError::Domain(format!(
                "capacity must be positive and finite, got {c}"
            )));
        }
        let q = c.exp_m1();
        let sqrt_q = q.sqrt();
        let one_minus_exp_neg_c = -(-c).exp_m1();
        // d = 2e^c − 2 + 2√(e^{2c} − e^c) = 2q + 2e^{c/2}√q
        let d = 2.0 * q + 2.0 * (0.5 * c).exp() * sqrt_q;
        // cos β = 1 − 2(1 − e^{−c})  ⇒  sin(β/2) = √(1 − e^{−c})
        let beta = 2.0 * one_minus_exp_neg_c.sqrt().asin();
        let e_ibeta = C::new(2.0 * (-c).exp() - 1.0, 2.0 * (-c).exp() * sqrt_q);
        Ok(Self {
            c,
            d,
            beta,
            e_ibeta,
            q,
            sqrt_q,
            one_minus_exp_neg_c,
            exp_c: c.exp(),
            exp_neg_half_c: (-0.5 * c).exp(),
        })
    }

    /// `e^{i·sign·β}`.
    #[inline]
    pub fn pole(&self, sign: i8) -> C {
        if sign >= 0 {
            self.e_ibeta
        } else {
            self.e_ibeta.conj()
        }
    }
}

/// Principal square root without the polar round trip.
#[inline]
pub fn csqrt(z: C) -> C {
    let r = z.norm_sqr().sqrt();
    if r == 0.0 {
        return C::new(0.0, 0.0);
    }
    let t = (0.5 * (r + z.re.abs())).sqrt();
    if z.re >= 0.0 {
        C::new(t, 0.5 * z.im / t)
    } else {
        C::new(0.5 * z.im.abs() / t, t.copysign(z.im))
    }
}

/// Square root with the argument cut along `[0, ∞)`, i.e. `arg z ∈ (0, 2π)`,
/// so the result lies in the closed upper half-plane. Positive reals (the cut
/// itself) return the limit from above, `+√x`.
#[inline]
pub fn sqrt_upper(z: C) -> C {
    let r = csqrt(z);
    if r.im < 0.0 || (r.im == 0.0 && r.re < 0.0) {
        -r
    } else {
        r
    }
}

/// `exp(z) − 1` without cancellation for small `z`.
#[inline]
pub fn cexpm1(z: C) -> C {
    let em1 = z.re.exp_m1();
    let (s, c) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    let cos_m1 = -2.0 * half * half;
    C::new(em1 * c + cos_m1, (em1 + 1.0) * s)
}

/// Möbius map `Δ → ℍ`, `w ↦ i(w − 1)/(w + 1)`.
pub fn mobius_to_halfplane(w: C) -> Result<C> {
    let den = w + 1.0;
    if den == C::new(0.0, 0.0) {
        return Err(AleError::Pole("m_H has a pole at w = -1".into()));
    }
    Ok(I * (w - 1.0) / den)
}

/// Möbius map `ℍ → Δ`, `z ↦ (1 − iz)/(1 + iz)`; inverse of [`mobius_to_halfplane`].
pub fn mobius_to_disc_exterior(z: C) -> Result<C> {
    let den = 1.0 + I * z;
    if den == C::new(0.0, 0.0) {
        return Err(AleError::Pole("m_Δ has a pole at z = i".into()));
    }
    Ok((1.0 - I * z) / den)
}

/// Branch of `f̃` for the argument `v = ζ² − (e^c − 1)`: upper square root, with
/// the cut `v > 0` resolved by continuity from `ζ ∈ ℍ` (sign of `Re ζ`).
#[inline]
fn halfplane_branch(v: C, zeta: C) -> C {
    upper_root(v, zeta.re)
}

/// Root of `t` in the closed upper half-plane, continuous in `ζ`: for
/// `Re t > 0` the principal root is continuous and `sign(Re ζ)` picks the sheet,
/// which also settles points whose rounding pushed `t` across the real axis.
#[inline]
fn upper_root(t: C, zeta_re: f64) -> C {
    if t.re > 0.0 {
        let r = csqrt(t);
        if zeta_re < 0.0 {
            -r
        } else {
            r
        }
    } else {
        sqrt_upper(t)
    }
}

/// Half-plane slit map `f̃_c(ζ) = e^{−c/2}√(ζ² − (e^c − 1))` onto
/// `ℍ \ (0, i√(1 − e^{−c})]`.
pub fn halfplane_slit(zeta: C, p: &SlitParams) -> Result<C> {
    if !(zeta.re.is_finite() && zeta.im.is_finite()) {
        return Err(AleError::Domain("non-finite half-plane argument".into()));
    }
    let v = (zeta - p.sqrt_q) * (zeta + p.sqrt_q);
    Ok(p.exp_neg_half_c * halfplane_branch(v, zeta))
}

fn check_exterior(w: C) -> Result<()> {
    if !(w.re.is_finite() && w.im.is_finite()) {
        return Err(AleError::Domain("non-finite point".into()));
    }
    if w.norm() < 1.0 - BOUNDARY_TOL {
        return Err(AleError::Domain(format!(
            "|w| = {} is inside the unit disc",
            w.norm()
        )));
    }
    Ok(())
}

/// The slit map `f_c` normalised by `f(e^{±iβ}) = 1`, `f(1) = 1 + d`,
/// `f(z) = e^c z + O(1)` at infinity.
pub fn slit_map(w: C, p: &SlitParams) -> Result<C> {
    check_exterior(w)?;
    Ok(slit_map_unchecked(w, p))
}

/// `f_c` without the domain guard; used by the composition hot loop.
///
/// With `ζ = m_H(w)` and `z = f̃(ζ)`, `f(w) = 2/(1 + iz) − 1`, and
/// `1 + iz = (1 + iζ)·K` where `K = 1 − i(1 − e^{−c})(1 − iζ)/(ζ + z)` and
/// `1 + iζ = 2/(w + 1)`. Hence `f(w) = (w + 1)/K − 1`.
#[inline]
pub(crate) fn slit_map_unchecked(w: C, p: &SlitParams) -> C {
    let lim = 0.25 * p.beta * p.beta;
    let dp = w - p.e_ibeta;
    if dp.norm_sqr() < lim {
        return 1.0 + slit_map_offset_unchecked(dp, 1, p);
    }
    let dm = w - p.e_ibeta.conj();
    if dm.norm_sqr() < lim {
        return 1.0 + slit_map_offset_unchecked(dm, -1, p);
    }
    slit_map_generic(w, p)
}

#[inline]
pub(crate) fn slit_map_generic(w: C, p: &SlitParams) -> C {
    let wp1 = w + 1.0;
    if wp1.re == 0.0 && wp1.im == 0.0 {
        return C::new(-1.0, 0.0);
    }
    let wm1 = w - 1.0;
    let ratio = if wm1.norm_sqr() > 4.0 * p.q * wp1.norm_sqr() {
        // |ζ| > 2√q: work with v = 1/ζ, where √(1 − q v²) is principal.
        let v = -I * wp1 / wm1;
        let g = p.exp_neg_half_c * csqrt(1.0 - p.q * v * v);
        (v - I) / (1.0 + g)
    } else {
        let zeta = I * wm1 / wp1;
        let v = (zeta - p.sqrt_q) * (zeta + p.sqrt_q);
        let z = p.exp_neg_half_c * halfplane_branch(v, zeta);
        (2.0 * w / wp1) / (zeta + z)
    };
    let k = 1.0 - I * p.one_minus_exp_neg_c * ratio;
    wp1 / k - 1.0
}

/// `f^{θ}(w) = e^{iθ} f(e^{−iθ} w)`, the slit attached at `e^{iθ}`.
pub fn slit_map_rotated(w: C, theta: f64, p: &SlitParams) -> Result<C> {
    let rot = C::from_polar(1.0, theta);
    Ok(rot * slit_map(w * rot.conj(), p)?)
}

/// Inverse slit map on `Δ \ (1, 1 + d]`, extended continuously to the circle.
///
/// Uses `f̃⁻¹(ζ) = √(e^c ζ² + (e^c − 1))` with the image in `ℍ`, folded into the
/// same stable form as [`slit_map`]: `f⁻¹(z) = (z + 1)/K' − 1` with
/// `K' = 1 + i(e^c − 1)(1 − iζ)/(ζ + ω)`.
pub fn slit_map_inverse(z: C, p: &SlitParams) -> Result<C> {
    check_exterior(z)?;
    let zp1 = z + 1.0;
    if zp1.re == 0.0 && zp1.im == 0.0 {
        return Ok(C::new(-1.0, 0.0));
    }
    let zm1 = z - 1.0;
    let ratio = if zm1.norm_sqr() > 4.0 * p.q * zp1.norm_sqr() {
        let v = -I * zp1 / zm1;
        let g = csqrt(p.exp_c + p.q * v * v);
        (v - I) / (1.0 + g)
    } else {
        let zeta = I * zm1 / zp1;
        let t = p.exp_c * zeta * zeta + p.q;
        if zeta.re == 0.0 && t.re > SLIT_TIP_TOL * p.q {
            return Err(AleError::Domain(format!("{z} lies on the slit")));
        }
        let omega = upper_root(t, zeta.re);
        (2.0 * z / zp1) / (zeta + omega)
    };
    let k = 1.0 + I * p.q * ratio;
    Ok(zp1 / k - 1.0)
}

/// Inverse of `f` near the slit base: for `z = 1 + ε` returns `(sign, δ)` with
/// `f⁻¹(z) = e^{i·sign·β} + δ`, keeping relative precision in `δ`.
pub fn slit_map_inverse_offset(eps: C, p: &SlitParams) -> Result<(i8, C)> {
    let u = I * eps / (2.0 + eps);
    let t = p.q + p.exp_c * u * u;
    if t.im == 0.0 {
        return Err(AleError::Domain(format!(
            "1 + {eps} is on the slit or the real axis"
        )));
    }
    let root = csqrt(t);
    let lambda_plus = p.exp_c * u * u / (root + p.sqrt_q);
    // Upper root near +√q is the preimage of e^{−iβ}; near −√q of e^{+iβ}.
    let (sign, zeta0, lambda) = if root.im >= 0.0 {
        (-1i8, p.sqrt_q, lambda_plus)
    } else {
        (1i8, -p.sqrt_q, -lambda_plus)
    };
    let a = 1.0 + I * zeta0;
    let delta = -2.0 * I * lambda / (a * (a + I * lambda));
    Ok((sign, delta))
}

/// `f(e^{i·sign·β} + δ) − 1` through the factored near-base formulas:
/// the `m_H` difference quotient, `f̃` at an offset from its zero, and
/// `m_Δ(z) − 1 = −2iz/(1 + iz)`.
pub fn slit_map_offset(delta: C, sign: i8, p: &SlitParams) -> Result<C> {
    let mag = delta.norm();
    if mag > 0.5 * p.beta {
        return Err(AleError::OutOfRegime {
            magnitude: mag,
            limit: 0.5 * p.beta,
        });
    }
    let base = p.pole(sign);
    // |base + δ|² − 1 = 2 Re(b̄δ) + |δ|²
    if 2.0 * (base.conj() * delta).re + delta.norm_sqr() < -2.0 * BOUNDARY_TOL {
        return Err(AleError::Domain(
            "offset point lies inside the unit disc".into(),
        ));
    }
    Ok(slit_map_offset_unchecked(delta, sign, p))
}

#[inline]
pub(crate) fn slit_map_offset_unchecked(delta: C, sign: i8, p: &SlitParams) -> C {
    let base = p.pole(sign);
    let bp1 = base + 1.0;
    let lambda = 2.0 * I * delta / ((bp1 + delta) * bp1);
    let zeta0 = if sign >= 0 { -p.sqrt_q } else { p.sqrt_q };
    let v = lambda * (lambda + 2.0 * zeta0);
    let z = p.exp_neg_half_c * halfplane_branch(v, zeta0 + lambda);
    -2.0 * I * z / (1.0 + I * z)
}

/// `log|f'(w)|` from `f'(z) = (f(z)/z)(z − 1)/((z − e^{iβ})^{1/2}(z − e^{−iβ})^{1/2})`.
pub fn log_abs_f_prime(w: C, p: &SlitParams) -> Result<f64> {
    check_exterior(w)?;
    let dp = w - p.e_ibeta;
    let dm = w - p.e_ibeta.conj();
    if dp.norm_sqr() == 0.0 || dm.norm_sqr() == 0.0 {
        return Err(AleError::Pole("f' has poles at e^{±iβ}".into()));
    }
    let fw = slit_map_unchecked(w, p);
    Ok(abs_f_prime_ratio(w, fw, dp, dm).ln())
}

/// `|f'(w)|` given `f(w)` and both pole differences.
#[inline]
pub(crate) fn abs_f_prime_ratio(w: C, fw: C, dp: C, dm: C) -> f64 {
    abs_f_prime_sq(w, fw, dp, dm).sqrt()
}

/// `|f'(w)|²` given `f(w)` and both pole differences.
#[inline]
pub(crate) fn abs_f_prime_sq(w: C, fw: C, dp: C, dm: C) -> f64 {
    (fw.norm_sqr() * (w - 1.0).norm_sqr()) / (w.norm_sqr() * (dp.norm_sqr() * dm.norm_sqr()).sqrt())
}

/// `log|f'(e^{i·sign·β} + δ)|` given `ε = f(e^{i·sign·β} + δ) − 1`.
#[inline]
pub fn log_abs_f_prime_offset(delta: C, sign: i8, eps: C, p: &SlitParams) -> f64 {
    let base = p.pole(sign);
    let log_f = 0.5 * (2.0 * eps.re + eps.norm_sqr()).ln_1p();
    let log_w = 0.5 * (2.0 * (base.conj() * delta).re + delta.norm_sqr()).ln_1p();
    let log_wm1 = (base - 1.0 + delta).norm().ln();
    let other = base - base.conj() + delta;
    log_f - log_w + log_wm1 - 0.5 * delta.norm().ln() - 0.5 * other.norm().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(c: f64) -> SlitParams {
        SlitParams::from_capacity(c).unwrap()
    }

    #[test]
    fn capacity_relations() {
        for &c in &[1e-6, 1e-4, 1e-2, 0.1, 0.5] {
            let p = params(c);
            let lhs = 4.0 * c.exp();
            let rhs = (p.d + 2.0).powi(2) / (p.d + 1.0);
            assert!(((lhs - rhs) / lhs).abs() < 1e-12, "c = {c}");
            let direct = C::new(2.0 * (-c).exp() - 1.0, 2.0 * (-c).exp() * c.exp_m1().sqrt());
            assert!((C::from_polar(1.0, p.beta) - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn d_is_one_at_log_nine_eighths() {
        let p = params((9.0f64 / 8.0).ln());
        assert!((p.d - 1.0).abs() < 1e-14);
    }

    #[test]
    fn small_capacity_asymptotics() {
        let p = params(1e-4);
        let eps = p.beta / 0.02 - 1.0;
        assert!(eps.abs() < 1e-2);
        let p = params(1e-10);
        assert!((p.beta / (2.0 * 1e-5) - 1.0).abs() < 1e-4);
        assert!((p.d / (2.0 * 1e-5) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_capacity() {
        assert!(SlitParams::from_capacity(0.0).is_err());
        assert!(SlitParams::from_capacity(-1.0).is_err());
        assert!(SlitParams::from_capacity(f64::NAN).is_err());
    }

    #[test]
    fn mobius_pair() {
        assert_eq!(
            mobius_to_halfplane(C::new(1.0, 0.0)).unwrap(),
            C::new(0.0, 0.0)
        );
        assert!((mobius_to_halfplane(C::new(1e15, 0.0)).unwrap() - I).norm() < 1e-14);
        assert!(mobius_to_halfplane(C::new(-1.0, 0.0)).is_err());
        assert_eq!(
            mobius_to_disc_exterior(C::new(0.0, 0.0)).unwrap(),
            C::new(1.0, 0.0)
        );
        assert!(mobius_to_disc_exterior(I).is_err());

        let p = params(0.01);
        let zh = mobius_to_halfplane(p.e_ibeta).unwrap();
        assert!((zh - C::new(-p.sqrt_q, 0.0)).norm() < 1e-14);
        let back = mobius_to_disc_exterior(C::new(-p.sqrt_q, 0.0)).unwrap();
        assert!((back - p.e_ibeta).norm() < 1e-14);
    }

    #[test]
    fn halfplane_slit_values() {
        let p = params(0.01);
        let z = halfplane_slit(C::new(-p.sqrt_q, 0.0), &p).unwrap();
        assert!(z.norm() < 1e-15);
        let tip = halfplane_slit(C::new(0.0, 0.0), &p).unwrap();
        assert!((tip - C::new(0.0, p.one_minus_exp_neg_c.sqrt())).norm() < 1e-15);
        let far = C::new(3e5, 1e6);
        let r = halfplane_slit(far, &p).unwrap() / far;
        assert!((r - p.exp_neg_half_c).norm() < 1e-12);
        // boundary: real points keep their sign
        assert!(halfplane_slit(C::new(2.0, 0.0), &p).unwrap().re > 0.0);
        assert!(halfplane_slit(C::new(-2.0, 0.0), &p).unwrap().re < 0.0);
    }

    #[test]
    fn slit_map_normalisation() {
        for &c in &[1e-4, 1e-3, 1e-2, 0.3] {
            let p = params(c);
            let tip = slit_map(C::new(1.0, 0.0), &p).unwrap();
            assert!((tip - (1.0 + p.d)).norm() < 1e-12, "c = {c}: {tip}");
            for s in [1i8, -1] {
                let base = slit_map(p.pole(s), &p).unwrap();
                assert!((base - 1.0).norm() < 1e-9, "c = {c}: {base}");
            }
            let big = C::new(1e9, 0.0);
            let r = slit_map(big, &p).unwrap() / (c.exp() * big);
            assert!((r - 1.0).norm() < 1e-9);
            assert!((slit_map(C::new(-1.0, 0.0), &p).unwrap() + 1.0).norm() < 1e-15);
        }
    }

    #[test]
    fn slit_map_rejects_interior() {
        let p = params(0.01);
        assert!(slit_map(C::new(0.5, 0.0), &p).is_err());
        assert!(slit_map(C::new(1.0 - 1e-13, 0.0), &p).is_ok());
    }

    #[test]
    fn rotation() {
        let p = params(0.02);
        let w = C::new(-1.0, 0.0);
        let v = slit_map_rotated(w, PI, &p).unwrap();
        assert!((v + (1.0 + p.d)).norm() < 1e-12);
    }

    #[test]
    fn inverse_tip_and_slit() {
        let p = params(0.01);
        let tip = slit_map_inverse(C::new(1.0 + p.d, 0.0), &p).unwrap();
        assert!((tip - 1.0).norm() < 1e-7, "{tip}");
        assert!(slit_map_inverse(C::new(1.0 + 0.5 * p.d, 0.0), &p).is_err());
        assert!(slit_map_inverse(C::new(0.2, 0.0), &p).is_err());
        let big = C::new(0.0, 1e12);
        let r = slit_map_inverse(big, &p).unwrap() / big;
        assert!((r - (-0.01f64).exp()).norm() < 1e-12);
    }

    #[test]
    fn boundary_inverse_stays_on_circle() {
        let p = params(0.01);
        for k in 1..50 {
            let ang = p.beta + (PI - p.beta) * k as f64 / 50.0;
            for s in [1.0, -1.0] {
                let w = C::from_polar(1.0, s * ang);
                let z = slit_map(w, &p).unwrap();
                assert!((z.norm() - 1.0).abs() < 1e-12);
                let back = slit_map_inverse(z, &p).unwrap();
                assert!((back - w).norm() < 1e-10, "{w} -> {z} -> {back}");
            }
        }
    }

    #[test]
    fn offset_zero_and_overlap() {
        let p = params(1e-3);
        assert_eq!(
            slit_map_offset(C::new(0.0, 0.0), 1, &p).unwrap(),
            C::new(0.0, 0.0)
        );
        let delta = C::from_polar(1e-4, 0.3) * p.e_ibeta;
        let a = slit_map_offset(delta, 1, &p).unwrap();
        let b = slit_map(p.e_ibeta + delta, &p).unwrap() - 1.0;
        assert!((a - b).norm() / a.norm() < 1e-8);
        assert!(slit_map_offset(C::new(p.beta, 0.0), 1, &p).is_err());
    }

    #[test]
    fn inverse_offset_round_trip() {
        let p = params(1e-3);
        for &m in &[1e-3, 1e-8, 1e-20] {
            for s in [1i8, -1] {
                let delta = p.pole(s) * C::from_polar(m, 0.4 * s as f64);
                let eps = slit_map_offset(delta, s, &p).unwrap();
                let (s2, back) = slit_map_inverse_offset(eps, &p).unwrap();
                assert_eq!(s, s2);
                assert!(
                    (back - delta).norm() / m < 1e-8,
                    "m = {m}: {back} vs {delta}"
                );
            }
        }
    }

    #[test]
    fn pole_is_an_error() {
        let p = params(0.01);
        assert!(matches!(
            log_abs_f_prime(p.e_ibeta, &p),
            Err(AleError::Pole(_))
        ));
    }

    #[test]
    fn offset_derivative_matches_absolute() {
        let p = params(1e-2);
        let delta = C::from_polar(1e-3, 0.2) * p.e_ibeta;
        let eps = slit_map_offset(delta, 1, &p).unwrap();
        let a = log_abs_f_prime_offset(delta, 1, eps, &p);
        let b = log_abs_f_prime(p.e_ibeta + delta, &p).unwrap();
        assert!((a - b).abs() < 1e-9);
    }
}
