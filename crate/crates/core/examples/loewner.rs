//! Radial Loewner hulls: exact slit composition against the ODE, and an SLE(4) driver.
use ale_core::loewner::{
    hull_distance, sample_sle_driver, slit_length, solve_composition, solve_ode, tip,
    PiecewiseDriver,
};
use num_complex::Complex64 as C;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ale_core::Result<()> {
    let c = 1e-3;
    let one = solve_composition(&PiecewiseDriver::constant(0.0, c, 1)?)?;
    let many = solve_composition(&PiecewiseDriver::constant(0.0, c, 100)?)?;
    println!(
        "slit length {:.6e}; tip error 1 piece {:.2e}, 100 pieces {:.2e}",
        slit_length(c)?,
        (tip(&one)? - (1.0 + slit_length(c)?)).norm(),
        (tip(&many)? - (1.0 + slit_length(c)?)).norm()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let drv = sample_sle_driver(4.0, 0.02, 1e-3, &mut rng)?;
    let w = C::new(2.0, 0.0);
    let exact = solve_composition(&drv)?.phi_apply(w)?;
    let ode = solve_ode(&drv, w, 20_000)?;
    println!(
        "SLE(4) driver with {} pieces: |composition - ODE| at w = 2: {:.2e}",
        drv.values.len(),
        (exact - ode).norm()
    );

    let a = one.boundary_trace(32).particles.concat();
    let b = many.boundary_trace(32).particles.concat();
    println!(
        "Hausdorff distance between the two constant-driver hulls {:.3e}",
        hull_distance(&a, &b)?
    );
    Ok(())
}
