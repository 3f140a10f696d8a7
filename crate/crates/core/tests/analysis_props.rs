use htc_core::analysis::{
    locking_label, power_spectrum, rational_order, rational_order_bounded, relative_frequency, AnalysisConfig, Phase,
    Rational, Window,
};
use htc_core::{BlochPair, ModelParameters, Trajectory};
use proptest::prelude::*;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `m_C^z` oscillates at `w`, `m_D^z` at `w * ratio` plus a weaker partial at `w * 0.37`.
fn synthetic(w: f64, ratio: f64, dt: f64, scale_c: f64, scale_d: f64, offset: f64, sub: f64) -> Trajectory {
    let times: Vec<f64> = (0..4096).map(|i| i as f64 * dt).collect();
    let samples = times
        .iter()
        .map(|t| {
            let cz = scale_c * (w * t).cos();
            let dz = offset + scale_d * ((w * ratio * t).sin() + sub * (0.37 * w * t).cos());
            BlochPair::new([0.0, 0.0, cz], [0.0, 0.0, dz])
        })
        .collect();
    Trajectory { times, samples, meta: ModelParameters::coherent_reference(0.1) }
}

fn result(t: &Trajectory) -> htc_core::analysis::LockingResult {
    match relative_frequency(t, &AnalysisConfig::default()).unwrap() {
        Phase::Oscillating(r) => r,
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectrum_normalisation_ignores_amplitude_and_offset(
        scale in 1e-3f64..1e3, offset in -5.0f64..5.0, w in 0.5f64..3.0,
    ) {
        let x: Vec<f64> = (0..1000).map(|i| (w * i as f64 * 0.05).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| offset + scale * v).collect();
        let a = power_spectrum(&x, 0.05, 0.2, Window::Hann).unwrap();
        let b = power_spectrum(&y, 0.05, 0.2, Window::Hann).unwrap();
        for (p, q) in a.amplitudes.iter().zip(&b.amplitudes) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn locking_is_invariant_under_rescaling(
        scale_c in 0.01f64..1.0, scale_d in 0.01f64..1.0, offset in -0.5f64..0.5,
        time_scale in 0.25f64..4.0, p in 2u64..9,
    ) {
        let ratio = 1.0 / p as f64;
        let base = synthetic(1.7, ratio, 0.05, 1.0, 1.0, 0.0, 0.3);
        let moved = synthetic(1.7 / time_scale, ratio, 0.05 * time_scale, scale_c, scale_d, offset, 0.3);
        let (a, b) = (result(&base), result(&moved));
        prop_assert!((a.omega_r - b.omega_r).abs() < 1e-9, "{} vs {}", a.omega_r, b.omega_r);
        prop_assert!((a.omega_ctc - b.omega_ctc * time_scale).abs() < 1e-9);
        prop_assert_eq!(a.order, b.order);
        let cfg = AnalysisConfig::default();
        let (la, lb) = (locking_label(&base, &cfg).unwrap(), locking_label(&moved, &cfg).unwrap());
        prop_assert_eq!(la.label, lb.label);
        prop_assert!((la.amplitude - lb.amplitude).abs() < 1e-9);
    }

    #[test]
    fn exact_ratios_are_recovered(p in 1u64..=40, q in 1u64..=12) {
        prop_assume!(gcd(p, q) == 1);
        let r = rational_order_bounded(q as f64 / p as f64, 12, 40, 1e-9);
        prop_assert_eq!(r, Some(Rational { p, q }));
    }

    #[test]
    fn rational_order_is_sound(omega_r in 0.01f64..2.0, q_max in 1u64..20, tol in 1e-6f64..1e-2) {
        if let Some(r) = rational_order(omega_r, q_max, tol) {
            prop_assert!(r.q <= q_max);
            prop_assert_eq!(gcd(r.p, r.q), 1);
            prop_assert!((omega_r - r.q as f64 / r.p as f64).abs() <= tol);
        }
    }

    #[test]
    fn labels_shrink_as_threshold_rises(sub in 0.0f64..3.0, lo in 0.0f64..1.0, gap in 0.0f64..1.0) {
        let t = synthetic(1.7, 0.25, 0.05, 1.0, 1.0, 0.0, sub);
        let low = AnalysisConfig { amp_threshold: lo, ..Default::default() };
        let high = AnalysisConfig { amp_threshold: lo + gap, ..Default::default() };
        let (a, b) = (locking_label(&t, &low).unwrap(), locking_label(&t, &high).unwrap());
        if b.label.is_some() {
            prop_assert_eq!(a.label, b.label);
        }
    }
}

#[test]
fn rational_order_examples() {
    assert_eq!(rational_order(0.25, 12, 1e-3), Some(Rational { p: 4, q: 1 }));
    assert_eq!(rational_order(0.3, 12, 1e-3), Some(Rational { p: 10, q: 3 }));
    assert_eq!(rational_order(0.2857, 12, 1e-3), Some(Rational { p: 7, q: 2 }));
    assert_eq!(rational_order(1.0 / std::f64::consts::PI, 3, 1e-4), None);
}
