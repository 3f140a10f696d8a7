use htc_core::meanfield::{ctc_fixed_point, integrate, norm_drift, rhs, IntegratorConfig};
use htc_core::{BlochPair, CouplingScheme, ModelParameters};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0f64..1.0)
}

fn scheme() -> impl Strategy<Value = CouplingScheme> {
    prop::sample::select(CouplingScheme::ALL.to_vec())
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn derivative_is_tangent_to_both_spheres(
        scheme in scheme(), c in vec3(), d in vec3(),
        omega in -4.0f64..4.0, j in -1.0f64..1.0, h in -1.0f64..1.0, eta in -2.0f64..2.0,
    ) {
        let p = ModelParameters::new(scheme, omega, j, h, eta);
        let s = BlochPair::new(c, d);
        let ds = rhs(scheme, &p, &s);
        prop_assert!(dot(&s.m_c, &ds.m_c).abs() < 1e-12);
        prop_assert!(dot(&s.m_d, &ds.m_d).abs() < 1e-12);
    }

    /// With `eta = 0` perturbing one subsystem leaves the other's derivative untouched.
    #[test]
    fn zero_coupling_decouples(scheme in scheme(), c in vec3(), d in vec3(), kick in vec3()) {
        let p = ModelParameters::new(scheme, 2.0, 0.1, 0.25, 0.0);
        let s = BlochPair::new(c, d);
        let base = rhs(scheme, &p, &s);
        let moved_d = rhs(scheme, &p, &BlochPair::new(c, [d[0] + kick[0], d[1] + kick[1], d[2] + kick[2]]));
        let moved_c = rhs(scheme, &p, &BlochPair::new([c[0] + kick[0], c[1] + kick[1], c[2] + kick[2]], d));
        prop_assert_eq!(base.m_c, moved_d.m_c);
        prop_assert_eq!(base.m_d, moved_c.m_d);
    }

    /// A finite-difference derivative in `eta` is nonzero for a generic state:
    /// the coupling does enter both halves.
    #[test]
    fn coupling_enters_both_halves(scheme in scheme(), c in vec3(), d in vec3()) {
        prop_assume!(c.iter().all(|v| v.abs() > 0.1) && d.iter().all(|v| v.abs() > 0.1));
        let h = 1e-6;
        let a = rhs(scheme, &ModelParameters::new(scheme, 2.0, 0.1, 0.25, 0.3), &BlochPair::new(c, d));
        let b = rhs(scheme, &ModelParameters::new(scheme, 2.0, 0.1, 0.25, 0.3 + h), &BlochPair::new(c, d));
        let dc = (0..3).map(|i| (b.m_c[i] - a.m_c[i]) / h).fold(0.0f64, |m, v| m.max(v.abs()));
        let dd = (0..3).map(|i| (b.m_d[i] - a.m_d[i]) / h).fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(dc > 1e-6 && dd > 1e-6, "{dc} {dd}");
    }

    #[test]
    fn validation_is_idempotent(omega in -5.0f64..5.0, kappa in 0.1f64..5.0, eta in -1.0f64..1.0, n in 1usize..50) {
        let p = ModelParameters { kappa, ..ModelParameters::new(CouplingScheme::SpinExchange, omega, 0.1, 0.2, eta).with_n(n) };
        let once = p.validate().unwrap();
        prop_assert_eq!(once.validate().unwrap(), once);
        let scaled = once.in_kappa_units();
        prop_assert!((scaled.omega - omega / kappa).abs() < 1e-12);
        prop_assert_eq!(scaled.in_kappa_units(), scaled);
    }
}

#[test]
fn integration_keeps_norms_over_long_runs() {
    for scheme in CouplingScheme::ALL {
        let p = ModelParameters::new(scheme, 2.0, 0.1, 0.25, 0.4);
        let s0 = BlochPair::new([0.6, 0.0, 0.8], [0.0, 0.6, 0.8]);
        let cfg = IntegratorConfig::default();
        let traj = integrate(&p, &s0, 500.0, &cfg).unwrap();
        let (dc, dd) = norm_drift(&traj);
        assert!(dc.max(dd) < 10.0 * cfg.rel_tol, "{scheme:?}: {dc:e} {dd:e}");
    }
}

/// Below the threshold `Omega < kappa` the isolated CTC relaxes to the
/// analytic fixed point from any start on the sphere.
#[test]
fn subcritical_ctc_reaches_fixed_point() {
    for omega in [0.2, 0.5, 0.9] {
        let p = ModelParameters { omega, ..ModelParameters::coherent_reference(0.0) };
        let fp = ctc_fixed_point(omega, 1.0).unwrap();
        for start in [[0.0, 0.0, 1.0], [0.6, 0.0, 0.8], [0.0, -0.8, 0.6]] {
            let traj =
                integrate(&p, &BlochPair::new(start, [0.0, 0.0, 1.0]), 400.0, &IntegratorConfig::default()).unwrap();
            let end = traj.samples.last().unwrap().m_c;
            let err = (0..3).map(|i| (end[i] - fp[i]).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "omega={omega} start={start:?}: {end:?} vs {fp:?}");
        }
    }
}
