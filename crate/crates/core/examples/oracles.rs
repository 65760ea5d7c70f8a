//! Every oracle suite with its fitted constants.
use ale_core::oracle::{run_suite, Suite};

fn main() -> ale_core::Result<()> {
    for r in run_suite(Suite::All)? {
        println!(
            "{:<22} {}  worst {:.3e}  envelope {:.3e}",
            r.id,
            if r.pass { "PASS" } else { "FAIL" },
            r.worst_residual,
            r.envelope
        );
        for (k, v) in r.constants.iter().filter(|(k, _)| !k.contains('#')) {
            println!("    {k} = {v:.4e}");
        }
    }
    Ok(())
}
