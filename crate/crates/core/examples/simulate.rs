//! One simulation written to a run directory.
use ale_core::io::simulate_to_dir;
use ale_core::sampler::SimParams;

fn main() {
    let mut params = SimParams::new(1e-3, 4.0);
    params.seed = 7;
    let dir = std::env::temp_dir().join("ale-example-run");
    match simulate_to_dir(&params, 0, &dir) {
        Ok((run, stats)) => {
            for r in &run.records {
                println!(
                    "step {:>3}: sign {:+}, mass(+) {:.4}, mass(-) {:.4}, old-base mass {:.3e}",
                    r.step, r.sign, r.mass_plus, r.mass_minus, r.mass_old
                );
            }
            println!(
                "tau_D = {:?}; files in {}",
                stats.stats.tau_d,
                dir.display()
            );
        }
        Err(f) => eprintln!("aborted: {f}"),
    }
}
