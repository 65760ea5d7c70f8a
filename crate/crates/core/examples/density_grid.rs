//! The regularized attachment density of a small cluster: pole masses and draws.
use ale_core::oracle::{alternating_signs, ideal_state};
use ale_core::sampler::{build_density, Anchor, GridConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ale_core::Result<()> {
    let c: f64 = 1e-3;
    for nu in [1.0, 4.0] {
        let state = ideal_state(c, nu, c.powi(6), &alternating_signs(3))?;
        let grid = build_density(&state, &GridConfig::default(), true)?;
        let hw = 0.25 * state.beta();
        let (plus, minus) = (
            grid.mass_near(Anchor::Pole(1), hw),
            grid.mass_near(Anchor::Pole(-1), hw),
        );
        println!("nu = {nu}: {} cells, log Z = {:.4}, mass(+) = {plus:.6}, mass(-) = {minus:.6}, rest = {:.3e}", grid.cells.len(), grid.log_z, 1.0 - plus - minus);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<_> = (0..5).map(|_| grid.sample(&mut rng)).collect();
        for s in draws {
            println!("  draw {:?} offset {:.3e}", s.anchor, s.offset);
        }
    }
    Ok(())
}
