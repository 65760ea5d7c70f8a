//! Every output format parses back to what was written.

use std::io::Cursor;

use ale_core::angle::AnchoredAngle;
use ale_core::driver::{DriverPath, McLeishSums, StatsReport};
use ale_core::ensemble::{summarize, Mode};
use ale_core::io::{
    driver_csv, parse_driver_csv, parse_params, read_json, read_jsonl, write_json, JsonlWriter,
};
use ale_core::oracle::{run_suite, OracleReport, Suite};
use ale_core::sampler::SimParams;
use ale_core::sim::{RunRecord, StepMoments};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3f64..1e3,
        (-300.0f64..300.0).prop_map(|e| 10f64.powf(e)),
        Just(0.0)
    ]
}

prop_compose! {
    fn record()(step in 2usize..10_000, m in -1000i64..1000, r in finite(), base in finite(), cap in finite(),
                sign in prop::sample::select(vec![1i8, -1]), masses in prop::array::uniform5(finite()),
                moments in prop::array::uniform3(finite()), stopped in any::<bool>()) -> RunRecord {
        RunRecord {
            step,
            angle: AnchoredAngle { m, r, base },
            capacity: cap,
            sign,
            residual: r,
            log_z: masses[0],
            mass_plus: masses[1],
            mass_minus: masses[2],
            mass_far: masses[3],
            mass_old: masses[4],
            d_bound: cap,
            moments: StepMoments { m1: moments[0], m2: moments[1], tail2: moments[2] },
            stopped,
            wall_ms: 0.0,
        }
    }
}

prop_compose! {
    fn stats()(steps in prop::collection::vec(finite(), 2..40), tau in prop::option::of(1usize..100), frac in 0.0f64..1.0) -> StatsReport {
        StatsReport {
            tau_d: tau,
            steps: steps.len() - 1,
            frac_plus: frac,
            qv: steps[0].abs(),
            mcleish: McLeishSums { tail2: steps[1].abs(), m2: steps[0].abs(), abs_m1: frac },
            endpoint: steps[1],
            horizon: 1.0,
            offsets: steps.iter().map(|s| s.abs()).collect(),
        }
    }
}

proptest! {
    #[test]
    fn run_records_round_trip(records in prop::collection::vec(record(), 0..20)) {
        let mut w = JsonlWriter::new(Vec::new());
        for r in &records {
            w.write(r).unwrap();
        }
        let bytes = w.into_inner();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        std::fs::write(&path, &bytes).unwrap();
        let back: Vec<RunRecord> = read_jsonl(&path).unwrap();
        prop_assert_eq!(back, records);
        prop_assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), Cursor::new(&bytes).get_ref().split(|&b| b == b'\n').filter(|l| !l.is_empty()).count());
    }

    #[test]
    fn driver_csv_round_trips(angles in prop::collection::vec(finite(), 1..100)) {
        let p = DriverPath::from_angles(1e-3, &angles);
        prop_assert_eq!(parse_driver_csv(&driver_csv(&p)).unwrap(), p.steps);
    }

    #[test]
    fn params_round_trip(c in 1e-5f64..0.5, nu in 0.0f64..10.0, n in prop::option::of(0usize..5000), seed in any::<u64>(), refine in any::<bool>()) {
        let mut p = SimParams::new(c, nu);
        p.steps = n;
        p.seed = seed;
        p.refine_old_basepoints = refine;
        let text = serde_json::to_string(&p).unwrap();
        prop_assert_eq!(parse_params(&text).unwrap().0, p);
    }

    #[test]
    fn ensemble_report_round_trips(reports in prop::collection::vec(stats(), 1..40)) {
        let rep = summarize(Mode::Ale, &SimParams::new(1e-3, 4.0), reports).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ensemble_stats.json");
        write_json(&path, &rep).unwrap();
        prop_assert_eq!(read_json::<ale_core::ensemble::EnsembleReport>(&path).unwrap(), rep);
    }
}

#[test]
fn oracle_reports_round_trip() {
    let reports = run_suite(Suite::Slit).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("oracle_reports.json");
    write_json(&path, &reports).unwrap();
    assert_eq!(read_json::<Vec<OracleReport>>(&path).unwrap(), reports);
}
