//! A large-ν cluster rendered to SVG. Pass the step count as the first argument (default 300).
use ale_core::io::boundary_svg;
use ale_core::sampler::SimParams;
use ale_core::sim::simulate;

fn main() -> ale_core::Result<()> {
    let mut params = SimParams::new(1e-4, 8.0);
    params.total = None;
    params.steps = Some(
        std::env::args()
            .nth(1)
            .and_then(|a| a.parse().ok())
            .unwrap_or(300),
    );
    params.refine_old_basepoints = false;
    let run = simulate(&params, 0, |_| {})?;
    let path = std::env::temp_dir().join("ale-random-walk-cluster.svg");
    std::fs::write(&path, boundary_svg(&run.state.boundary_trace(4)))?;
    println!(
        "{} particles (stopped at {:?}); wrote {}",
        run.state.n(),
        run.state.stopped_at(),
        path.display()
    );
    Ok(())
}
