use dicke_core::equilibria::{
    bifurcation_scan, classify, critical_points, ground_state_energy, gspt_curves, hamiltonian_eigenvalues,
    write_phase_diagram_csv, Complex, Stability,
};
use dicke_core::{jacobian_at, vector_field, ModelParams, PhaseState};
use nalgebra::Matrix4;
use proptest::prelude::*;

fn unit(gamma: f64) -> ModelParams {
    ModelParams::new(1.0, 1.0, gamma).unwrap()
}

fn sorted(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    v
}

fn oracle_eigenvalues(j: &[[f64; 4]; 4]) -> Vec<(f64, f64)> {
    let m = Matrix4::from_fn(|r, c| j[r][c]);
    sorted(m.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect())
}

fn ours(ev: [Complex; 4]) -> Vec<(f64, f64)> {
    sorted(ev.iter().map(|z| (z.re, z.im)).collect())
}

/// Minimum of `H` with `p = P = 0` and `q` eliminated at its optimum.
fn brute_ground_energy(mp: &ModelParams) -> f64 {
    let reduced = |qa: f64| {
        let s = qa * qa;
        mp.omega0 * s / 2.0 - mp.gamma * mp.gamma * s * (4.0 - s) / (2.0 * mp.omega) - mp.omega0
    };
    let n = 20_000;
    let (mut best_x, mut best) = (0.0, reduced(0.0));
    for i in 0..=n {
        let x = 2.0 * i as f64 / n as f64;
        if reduced(x) < best {
            best = reduced(x);
            best_x = x;
        }
    }
    let h = 2.0 / n as f64;
    let (mut a, mut b) = ((best_x - h).max(0.0), (best_x + h).min(2.0));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if reduced(c) < reduced(d) {
            b = d;
        } else {
            a = c;
        }
    }
    reduced(0.5 * (a + b)).min(best)
}

#[test]
fn equilibrium_sets() {
    assert_eq!(critical_points(&unit(0.4)).unwrap(), vec![PhaseState::ORIGIN]);
    assert_eq!(critical_points(&unit(0.5)).unwrap(), vec![PhaseState::ORIGIN]);
    let pts = critical_points(&unit(1.0)).unwrap();
    assert_eq!(pts.len(), 3);
    assert!((pts[1].q() - 1.93649).abs() < 1e-5 && (pts[1].atom_q() + 1.22474).abs() < 1e-5);
    assert!((pts[2].q() + 1.93649).abs() < 1e-5 && (pts[2].atom_q() - 1.22474).abs() < 1e-5);
}

#[test]
fn origin_eigenvalues() {
    let r = classify(&PhaseState::ORIGIN, &unit(1.0)).unwrap();
    assert_eq!(r.classification, Stability::Saddle);
    let got = ours(r.eigenvalues);
    let want = sorted(vec![(-1.0, 0.0), (1.0, 0.0), (0.0, -3f64.sqrt()), (0.0, 3f64.sqrt())]);
    for (a, b) in got.iter().zip(&want) {
        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9, "{got:?}");
    }
    assert_eq!(classify(&PhaseState::ORIGIN, &unit(0.25)).unwrap().classification, Stability::Center);
    let bt = classify(&PhaseState::ORIGIN, &unit(0.5)).unwrap();
    assert_eq!(bt.classification, Stability::DegenerateBt);
    assert_eq!(bt.eigenvalues.iter().filter(|z| z.abs() < 1e-9).count(), 2);
}

#[test]
fn non_equilibrium_is_rejected() {
    let s = PhaseState::new(0.0, 1.0, 0.0, 0.0).unwrap();
    assert!(classify(&s, &unit(1.0)).is_err());
}

#[test]
fn ground_energy_examples() {
    let mp = unit(0.5);
    assert_eq!(ground_state_energy(0.4, &mp), -1.0);
    assert!((ground_state_energy(1.0, &mp) + 2.125).abs() < 1e-12);
    assert_eq!(ground_state_energy(0.5, &mp), -1.0);
}

#[test]
fn gspt_examples() {
    let mp = ModelParams::resonant(1.0);
    let recs = gspt_curves(&[0.5, 1.0, 2.0], &mp).unwrap();
    assert_eq!((recs[0].e0, recs[0].n_cl, recs[0].jz_cl), (-1.0, 0.0, 0.0));
    assert_eq!((recs[1].e0, recs[1].n_cl, recs[1].jz_cl), (-1.0, 0.0, 0.0));
    assert!((recs[2].e0 + 2.125).abs() < 1e-12);
    assert!((recs[2].n_cl - 1.875).abs() < 1e-12);
    assert!((recs[2].jz_cl - 0.75).abs() < 1e-12);
}

#[test]
fn ground_energy_matches_direct_minimum() {
    for (w, w0) in [(1.0, 1.0), (0.5, 0.7), (2.0, 0.3)] {
        for i in 0..100 {
            let mp = ModelParams::new(w, w0, 0.0).unwrap().with_gamma_ratio(3.0 * i as f64 / 99.0);
            let brute = brute_ground_energy(&mp);
            let closed = ground_state_energy(mp.gamma, &mp);
            assert!((closed - brute).abs() < 1e-10, "ω={w} ω₀={w0} i={i}: {closed} vs {brute}");
        }
    }
}

#[test]
fn bifurcation_counts() {
    let scan = bifurcation_scan(&[0.8, 1.0, 1.2], &ModelParams::resonant(1.0)).unwrap();
    let counts: Vec<usize> = scan.iter().map(|r| r.count).collect();
    assert_eq!(counts, vec![1, 1, 3]);
    assert_eq!(scan[0].origin_class, Stability::Center);
    assert_eq!(scan[1].origin_class, Stability::DegenerateBt);
    assert_eq!(scan[2].origin_class, Stability::Saddle);
    assert!(bifurcation_scan(&[1.2, 0.8], &ModelParams::resonant(1.0)).is_err());
}

#[test]
fn phase_diagram_csv() {
    let mp = ModelParams::resonant(1.0);
    let grid = [0.0, 1.0, 2.0];
    let mut buf = Vec::new();
    write_phase_diagram_csv(&mut buf, &gspt_curves(&grid, &mp).unwrap(), &bifurcation_scan(&grid, &mp).unwrap()).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "gamma_ratio,E0,n_cl,jz_cl,count,class");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].ends_with(",1,degenerate-BT"));
    assert!(lines[3].ends_with(",3,saddle"));
}

fn params() -> impl Strategy<Value = ModelParams> {
    (0.2..2.0f64, 0.2..2.0f64, 0.0..3.0f64)
        .prop_map(|(w, w0, r)| ModelParams::new(w, w0, 0.0).unwrap().with_gamma_ratio(r))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn equilibria_are_stationary(mp in params()) {
        for p in critical_points(&mp).unwrap() {
            for v in vector_field(&p, &mp).unwrap() {
                prop_assert!(v.abs() < 1e-10, "{v}");
            }
        }
    }

    #[test]
    fn eigenvalues_match_dense_solver(mp in params()) {
        for p in critical_points(&mp).unwrap() {
            let j = jacobian_at(&p, &mp).unwrap();
            let got = ours(hamiltonian_eigenvalues(&j));
            let want = oracle_eigenvalues(&j);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a.0 - b.0).abs() < 1e-7 && (a.1 - b.1).abs() < 1e-7, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn count_changes_at_critical_coupling(mp in params()) {
        let n = critical_points(&mp).unwrap().len();
        prop_assert_eq!(n, if mp.gamma > mp.gamma_c() { 3 } else { 1 });
    }
}
