//! Pooled statistics over many runs, for the sampler and for the ±β walk.
use ale_core::ensemble::{run_ensemble, threads_from_env, worker_pool, Mode};
use ale_core::sampler::SimParams;

fn main() -> ale_core::Result<()> {
    let mut params = SimParams::new(1e-3, 4.0);
    params.seed = 3;
    let pool = worker_pool(threads_from_env()?)?;
    for mode in [Mode::Ssrw, Mode::Ale] {
        let rep = pool.install(|| run_ensemble(&params, 40, mode, None))?;
        println!(
            "{mode:?}: frac_plus {:.4} ± {:.4}, qv/4T within 10% in {:.0}% of runs, KS p = {:.3e}, stopped {:.0}%",
            rep.pooled_frac_plus,
            rep.frac_plus_band,
            100.0 * rep.qv_within,
            rep.ks.map_or(f64::NAN, |k| k.p_value),
            100.0 * rep.stop_frequency
        );
    }
    Ok(())
}
