//! Offsets from the base of the newest particle pulled back through an ideal path.
use ale_core::oracle::{alternating_signs, check_sticky, ideal_state, sticky_magnitude};
use num_complex::Complex64 as C;

fn main() -> ale_core::Result<()> {
    let c: f64 = 1e-3;
    let delta0 = 1e-15;
    let state = ideal_state(c, 4.0, c.powi(6), &alternating_signs(6))?;
    let chain = state.offset_chain(1, C::new(delta0, 0.0))?;
    for (j, d) in chain.iter().enumerate() {
        println!(
            "level {j}: |delta| = {:.4e}, closed form {:.4e}",
            d.norm(),
            sticky_magnitude(c, delta0, j)
        );
    }
    let rep = check_sticky(&state, delta0, 16)?;
    println!(
        "worst relative deviation {:.3e} (pass = {})",
        rep.worst_residual, rep.pass
    );
    Ok(())
}
