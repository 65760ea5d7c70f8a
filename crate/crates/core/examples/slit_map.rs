//! Shape constants of one slit and its defining identities.
use ale_core::slit_map::{log_abs_f_prime, slit_map, slit_map_inverse, SlitParams};
use num_complex::Complex64 as C;

fn main() -> ale_core::Result<()> {
    for c in [1e-2, 1e-3, 1e-4] {
        let p = SlitParams::from_capacity(c)?;
        println!(
            "c = {c:e}: d = {:.6e}, beta = {:.6e}, beta/(2 sqrt c) = {:.6}",
            p.d,
            p.beta,
            p.beta / (2.0 * c.sqrt())
        );
        println!("  f(e^(i beta)) = {:.3e}", slit_map(p.e_ibeta, &p)?);
        println!("  f(1) - 1 = {:.6e}", slit_map(C::new(1.0, 0.0), &p)? - 1.0);
        let w = C::new(1.0, 0.3);
        let z = slit_map(w, &p)?;
        println!(
            "  f^-1(f(w)) - w = {:.2e}",
            (slit_map_inverse(z, &p)? - w).norm()
        );
        println!(
            "  log|f'(2)| = {:.6}",
            log_abs_f_prime(C::new(2.0, 0.0), &p)?
        );
    }
    Ok(())
}
