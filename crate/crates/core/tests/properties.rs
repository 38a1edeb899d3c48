use std::f64::consts::PI;

use cavity_phase::evolve::{evolve, EvolveOptions, StateVector};
use cavity_phase::model::{coupling_matrix, Basis, CavityConfig, Geometry};
use cavity_phase::phase::{unwrap, wrap};
use cavity_phase::rwa::{lorentzian, rabi_amplitudes, RabiSolution, ResonanceSpec};
use cavity_phase::scan::fit_lorentzian;
use cavity_phase::spin::{spin_state, SpinConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn wrap_lands_in_principal_range(x in -1e4f64..1e4) {
        let w = wrap(x);
        prop_assert!(w > -PI - 1e-12 && w <= PI + 1e-12);
        let k = ((x - w) / (2.0 * PI)).round();
        prop_assert!((x - w - 2.0 * PI * k).abs() < 1e-9);
    }

    #[test]
    fn unwrap_removes_branch_cuts(start in -3.0f64..3.0, step in -0.5f64..0.5, n in 2usize..200) {
        let truth: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
        let wrapped: Vec<f64> = truth.iter().map(|&x| wrap(x)).collect();
        let back = unwrap(&wrapped);
        let offset = back[0] - truth[0];
        for (a, b) in back.iter().zip(&truth) {
            prop_assert!((a - b - offset).abs() < 1e-9);
        }
    }

    #[test]
    fn rabi_amplitudes_stay_normalised(
        gamma in 1e-4f64..1.0, delta in -2.0f64..2.0, eta in -3.0f64..3.0, t in 0.0f64..1e3,
    ) {
        let sol = RabiSolution::from_width(gamma, delta, eta, 0.01);
        let (ck, cn) = rabi_amplitudes(t, &sol, delta);
        prop_assert!((ck.norm_sqr() + cn.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lorentzian_fit_recovers_parameters(
        a in 0.1f64..1.0, c in 5.0f64..50.0, f in 0.01f64..1.0,
    ) {
        let pts: Vec<(f64, f64)> = (0..21)
            .map(|i| c + f * (i as f64 - 10.0) / 5.0)
            .map(|x| (x, a / (1.0 + (2.0 * (x - c) / f).powi(2))))
            .collect();
        let fit = fit_lorentzian(&pts, (a * 0.8, c + 0.1 * f, f * 1.3), None).unwrap();
        prop_assert!((fit.center - c).abs() < 1e-6 * f);
        prop_assert!((fit.fwhm / f - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lorentzian_peaks_at_one(k in 1usize..4, order in 1u32..4, gamma in 1e-4f64..0.1) {
        let basis = Basis::new(Geometry::Cylindrical, 6).unwrap();
        let spec = ResonanceSpec::exact(k, k + 1, order, basis.omega_nk(k + 1, k)).unwrap();
        prop_assert!((lorentzian(spec.drive_omega(), &spec, gamma) - 1.0).abs() < 1e-12);
        let off = spec.at_omega(spec.drive_omega() * 1.01);
        prop_assert!(lorentzian(off.drive_omega(), &off, gamma) < 1.0);
    }

    #[test]
    fn spin_state_is_normalised(alpha in 0.001f64..1.5, t in 0.0f64..500.0) {
        let cfg = SpinConfig::resonant(alpha, 1.0).unwrap();
        let s = spin_state(t, &cfg);
        prop_assert!((s[0].norm_sqr() + s[1].norm_sqr() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn coupling_is_antisymmetric() {
    for g in [Geometry::Cylindrical, Geometry::Spherical] {
        let eta = coupling_matrix(g, 10).unwrap();
        assert!(eta.antisymmetry_defect() < 1e-10);
        for i in 0..10 {
            assert!(eta.get(i, i).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn evolution_preserves_norm(eps in 0.0f64..0.2, omega in 5.0f64..70.0, m in 3usize..7) {
        let cfg = CavityConfig::new(Geometry::Cylindrical, eps, omega)
            .unwrap()
            .with_basis_size(m)
            .unwrap();
        let basis = Basis::for_config(&cfg).unwrap();
        let opts = EvolveOptions { steps_per_period: 64, tolerance: 1e-11, ..EvolveOptions::default() };
        let traj = evolve(&cfg, &basis, &StateVector::ground(m), 3.0, &opts).unwrap();
        prop_assert!(traj.max_norm_drift() < 1e-8);
    }
}
