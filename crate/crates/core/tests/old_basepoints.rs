//! Lobe heights on an ideal path against values computed independently at
//! 80 significant digits (direct composition of the slit maps, no offset
//! tracking, no linearization).

use ale_core::cluster::ClusterState;

const C: f64 = 1e-3;

fn ideal(signs: &[i8]) -> ClusterState {
    let sigma = C.powi(6);
    let mut s = ClusterState::new(C, 4.0, 0.0, sigma, 0.25).unwrap();
    s.append_step(1, 0.0, C).unwrap();
    for &sg in signs {
        s.append_step(sg, 0.0, C).unwrap();
    }
    s
}

#[test]
fn newest_pole_peaks_match_extended_precision() {
    let s = ideal(&[-1, 1, 1, -1, 1]);
    let plus = s.log_abs_phi_prime(s.pole_point(1, 0.0, s.sigma)).unwrap();
    let minus = s.log_abs_phi_prime(s.pole_point(-1, 0.0, s.sigma)).unwrap();
    assert!((plus - 34.2634325403593).abs() < 1e-6, "{plus}");
    assert!((minus - 34.3315769753078).abs() < 1e-6, "{minus}");
}

#[test]
fn newest_old_basepoint_matches_extended_precision() {
    let s = ideal(&[-1, 1, 1, -1, 1]);
    let j = s.n() - 1;
    let z = s.basepoint(j).unwrap();
    let rel = (z * s.particle(s.n()).rotation().conj()).arg();
    assert!((rel - -0.14139071241026089).abs() < 1e-12, "{rel}");
    let log_kappa = s.log_basepoint_stretch(j).unwrap();
    assert!((log_kappa - 0.111771935721107).abs() < 1e-9, "{log_kappa}");
    let peak = s
        .log_abs_phi_prime_old_base(j, log_kappa, s.sigma, 0.0)
        .unwrap();
    assert!((peak - 34.6213982498441).abs() < 1e-6, "{peak}");
}

#[test]
fn old_basepoint_outgrows_newest_poles_at_practical_sigma() {
    let s = ideal(&[-1, 1, 1, -1, 1]);
    let j = s.n() - 1;
    let lk = s.log_basepoint_stretch(j).unwrap();
    let old = s.log_abs_phi_prime_old_base(j, lk, s.sigma, 0.0).unwrap();
    let newest = s.log_abs_phi_prime(s.pole_point(1, 0.0, s.sigma)).unwrap();
    assert!(old > newest);
}
