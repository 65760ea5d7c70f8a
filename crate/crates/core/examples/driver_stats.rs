//! Driving function of a run and its diagnostics.
use ale_core::driver::{extract_driver, statistics};
use ale_core::sampler::SimParams;
use ale_core::sim::simulate;

fn main() -> ale_core::Result<()> {
    let mut params = SimParams::new(1e-2, 4.0);
    params.refine_old_basepoints = false;
    let run = simulate(&params, 0, |_| {})?;
    let path = extract_driver(&run.state, params.horizon())?;
    let stats = statistics(&path, &run.state, &run.moments());
    println!("{} steps over T = {:.3}", stats.steps, stats.horizon);
    println!(
        "xi_T = {:.5}, qv = {:.5} (4T = {:.3})",
        stats.endpoint,
        stats.qv,
        4.0 * stats.horizon
    );
    println!(
        "fraction of + steps {:.3}, tau_D {:?}",
        stats.frac_plus, stats.tau_d
    );
    println!("McLeish sums {:?}", stats.mcleish);
    Ok(())
}
