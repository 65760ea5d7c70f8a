//! Regular, tip and singular parts of the density of simulated clusters.
use ale_core::oracle::{check_region_masses, classify_regions, random_small_clusters, Region};
use ale_core::sampler::{build_density, GridConfig};

fn main() -> ale_core::Result<()> {
    for s in random_small_clusters(8, 8, 2024)? {
        let grid = build_density(&s, &GridConfig::default(), true)?;
        let cls = classify_regions(&s, &grid, 0.25)?;
        let m = check_region_masses(&grid, &cls, 1e-3);
        println!(
            "n = {}: cells regular {}, tip {}, singular {}, residue {}; non-pole mass {:.3e}",
            s.n(),
            cls.count(Region::Regular),
            cls.count(Region::Tip),
            cls.labels
                .iter()
                .filter(|l| matches!(l, Region::Singular(_)))
                .count(),
            cls.residue,
            m.constants["mass_non_pole"]
        );
    }
    Ok(())
}
