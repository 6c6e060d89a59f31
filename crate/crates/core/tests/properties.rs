use proptest::prelude::*;
use tdspectra::cascaded::{ensemble_excitation, EnsembleSpec, Schedule};
use tdspectra::lindblad::evolve_sampled;
use tdspectra::*;

fn strong() -> ThreeLevelParams {
    ThreeLevelParams::default()
}

fn weak() -> ThreeLevelParams {
    ThreeLevelParams::default().with_rabi(0.2, 0.2)
}

#[test]
fn halving_dt_changes_source_state_little() {
    for p in [strong(), weak()] {
        let m = three_level_model(&p, Frame::Rotating).unwrap();
        let rho0 = DensityMatrix::basis(m.space(), 1).unwrap();
        let times = [1.0, 50.0, 100.0, 200.0];
        let a = evolve_sampled(&m, &rho0, 0.0, &times, 0.01).unwrap();
        let b = evolve_sampled(&m, &rho0, 0.0, &times, 0.005).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!(x.as_operator().max_abs_diff(y.as_operator()) <= 1e-6);
        }
    }
}

#[test]
fn weak_peaks_within_truncation_resolution() {
    let p = weak();
    let m = three_level_model(&p, Frame::Rotating).unwrap();
    let det = DetectionOperator::for_source(&p, Frame::Rotating).unwrap();
    let t_max = 200.0;
    let wk = wk_spectrum(&m, &det, &linspace(0.0, 12.0, 601), t_max, 0.02, WkOptions::default()).unwrap();
    let ws = find_peaks(&wk.trace, 0.05).omegas();
    let slack = 2.0 * 2.0 * std::f64::consts::PI / t_max;
    assert_eq!(ws.len(), 2);
    assert!((ws[0] - 4.0).abs() <= slack && (ws[1] - 8.0).abs() <= slack, "{ws:?}");
}

#[test]
fn upper_triangle_matches_independent_regression() {
    let p = strong();
    let m = three_level_model(&p, Frame::Rotating).unwrap();
    let det = DetectionOperator::for_source(&p, Frame::Rotating).unwrap();
    let rho0 = DensityMatrix::basis(m.space(), 1).unwrap();
    let grid = correlation_grid(&m, &rho0, &det, 6.0, 12, 0.01).unwrap();
    let id = Operator::identity(m.space());
    let dt = grid.spacing();
    for row in [0usize, 3, 7] {
        let t1 = row as f64 * dt;
        let taus: Vec<f64> = (1..=12 - row).map(|k| k as f64 * dt).collect();
        // ⟨O†(t₁)O(t₂)⟩ for t₂ > t₁, regressed forward from t₁.
        let mut direct = vec![C64::new(0.0, 0.0); taus.len()];
        for (oa, na) in det.components() {
            for (ob, nb) in det.components() {
                let vals = qrt_sandwich(&m, &rho0, &oa.dagger(), ob, &id, t1, &taus, 0.01).unwrap();
                for (k, v) in vals.iter().enumerate() {
                    let t2 = t1 + taus[k];
                    direct[k] += v * C64::from_polar(1.0, na * t1 - nb * t2);
                }
            }
        }
        for (k, v) in direct.iter().enumerate() {
            let col = row + 1 + k;
            assert!((grid.values()[(row, col)] - v).norm() <= 1e-7, "({row}, {col})");
        }
    }
}

#[test]
fn stationary_grid_reproduces_stationary_peaks() {
    for (p, k) in [(weak(), 2), (strong(), 8)] {
        let m = three_level_model(&p, Frame::Rotating).unwrap();
        let det = DetectionOperator::for_source(&p, Frame::Rotating).unwrap();
        let omegas = linspace(0.0, 12.0, 128);
        let domega = omegas[1] - omegas[0];
        let wk = wk_spectrum(&m, &det, &omegas, 200.0, 0.02, WkOptions::default()).unwrap();
        let reference = find_peaks(&wk.trace, 0.05);
        assert_eq!(reference.len(), k);
        let ss = steady_state(&m).unwrap();
        let grid = correlation_grid(&m, &ss, &det, 100.0, 800, 0.02).unwrap();
        let phys = &physical_spectrum_scan(&grid, &[100.0], &omegas, 0.1).unwrap()[0];
        let got = find_peaks(phys, 0.0).top_n(k);
        for (a, b) in got.refined_omegas().iter().zip(reference.refined_omegas()) {
            assert!((a - b).abs() <= domega, "{a} vs {b}");
        }
    }
}

#[test]
fn uncoupled_joint_state_stays_a_product() {
    let cp = CascadedParams { p: 0.0, omega_b: 3.0, ..CascadedParams::default() };
    let joint = build_cascaded(&cp).unwrap();
    let rho0 = DensityMatrix::pure(&joint.initial_state(1).unwrap());
    let times: Vec<f64> = (0..=20).map(|k| 5.0 * k as f64).collect();
    let series = evolve_sampled(joint.model(), &rho0, 0.0, &times, 0.01).unwrap();
    let src = joint.source_model().unwrap();
    let alone = evolve_sampled(&src, &partial_trace(&rho0, 0).unwrap(), 0.0, &times, 0.01).unwrap();
    for (rho, a) in series.states.iter().zip(&alone.states) {
        let ra = partial_trace(rho, 0).unwrap();
        let rb = partial_trace(rho, 1).unwrap();
        assert!((ra.purity() - a.purity()).abs() <= 1e-8);
        // An undriven analyzer starting in |g⟩ stays there.
        assert!((rb.purity() - 1.0).abs() <= 1e-8);
        let product = tensor(ra.as_operator(), rb.as_operator());
        assert!(product.max_abs_diff(rho.as_operator()) <= 1e-8);
    }
}

#[test]
fn trajectory_mean_tracks_master_equation() {
    let m = build_cascaded(&CascadedParams { p: 0.1, omega_b: 4.0, ..CascadedParams::default() }).unwrap();
    let psi0 = m.initial_state(1).unwrap();
    // Early excitation comes from rare jumps, where the sample spread is not
    // yet a fair error bar; compare once most trajectories have decayed.
    let schedule = Schedule { t_final: 20.0, dt: 0.01, record_interval: 5.0 };
    let spec = EnsembleSpec { n_traj: 1000, base_seed: 9, freq_index: 0, schedule };
    let ens = ensemble_excitation(&m, &psi0, &spec).unwrap();
    let me = me_excitation(&m, &DensityMatrix::pure(&psi0), &schedule.times(), 0.01).unwrap();
    for k in 2..ens.times.len() {
        let gap = (ens.p_excited[k] - me.p_excited[k]).abs();
        assert!(gap <= 4.0 * ens.stderr[k], "t = {}: {gap} vs {}", ens.times[k], ens.stderr[k]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn analyzer_never_disturbs_source(omega_b in 0.0..12.0f64, pick in 0usize..3, level in 0usize..3) {
        let p = [0.0, 0.005, 0.1][pick];
        let joint = build_cascaded(&CascadedParams { p, omega_b, ..CascadedParams::default() }).unwrap();
        let rho0 = DensityMatrix::pure(&joint.initial_state(level).unwrap());
        let times: Vec<f64> = (0..=10).map(|k| 1.5 * k as f64).collect();
        let series = evolve_sampled(joint.model(), &rho0, 0.0, &times, 0.01).unwrap();
        let alone = evolve_sampled(&joint.source_model().unwrap(), &partial_trace(&rho0, 0).unwrap(), 0.0, &times, 0.01)
            .unwrap();
        for (rho, a) in series.states.iter().zip(&alone.states) {
            let reduced = partial_trace(rho, 0).unwrap();
            prop_assert!(reduced.as_operator().max_abs_diff(a.as_operator()) <= 1e-8);
        }
    }

    #[test]
    fn excitation_is_a_probability(omega_b in 0.0..12.0f64, p in 0.0..1.0f64, rabi in 0.0..3.0f64) {
        let cp = CascadedParams { source: ThreeLevelParams::default().with_rabi(rabi, rabi), p, omega_b, gamma_b: 0.05 };
        let m = build_cascaded(&cp).unwrap();
        let rho0 = DensityMatrix::pure(&m.initial_state(1).unwrap());
        let rec = me_excitation(&m, &rho0, &[2.0, 5.0, 10.0], 0.01).unwrap();
        prop_assert!(rec.p_excited.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
