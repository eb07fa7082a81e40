//! Property tests for the norm scale, the transforms and the smoothing
//! family over arbitrary coefficient data, not just the seeded samples.

use num_complex::Complex64;
use proptest::prelude::*;

use scale_calculus::smoothing::SmoothingFamily;
use scale_calculus::{analyze, GradedVector, NormScale};

const MAX_LEVEL: usize = 5;

fn arb_real_vector(max_bandwidth: usize) -> impl Strategy<Value = GradedVector> {
    (1..=max_bandwidth).prop_flat_map(|n| {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n + 1).prop_map(move |half| {
            let coeffs: Vec<Complex64> = half
                .into_iter()
                .map(|(re, im)| Complex64::new(re, im))
                .collect();
            GradedVector::from_half_spectrum(n, &coeffs).expect("well-formed")
        })
    })
}

proptest! {
    #[test]
    fn norms_are_monotone_in_the_level(u in arb_real_vector(24)) {
        let scale = NormScale::new(MAX_LEVEL);
        prop_assert!(scale.is_norm_monotone(&u));
        for k in 0..MAX_LEVEL {
            prop_assert!(u.norm(k) <= u.norm(k + 1) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn triangle_inequality_and_homogeneity(
        u in arb_real_vector(16),
        v in arb_real_vector(16),
        a in -4.0f64..4.0,
    ) {
        let v = v.with_bandwidth(u.bandwidth());
        for k in 0..=MAX_LEVEL {
            let lhs = u.add(&v).norm(k);
            prop_assert!(lhs <= (u.norm(k) + v.norm(k)) * (1.0 + 1e-12));
            let hom = u.scale(a).norm(k);
            prop_assert!((hom - a.abs() * u.norm(k)).abs() <= 1e-12 * hom.max(1.0));
        }
    }

    #[test]
    fn rotation_preserves_every_level_norm(u in arb_real_vector(24), s in -10.0f64..10.0) {
        let r = u.rotate(s);
        for k in 0..=MAX_LEVEL {
            let (a, b) = (u.norm(k), r.norm(k));
            prop_assert!((a - b).abs() <= 1e-14 * a.max(1.0), "level {k}: {a} vs {b}");
        }
    }

    #[test]
    fn differentiation_loses_exactly_one_level(u in arb_real_vector(24)) {
        let du = u.differentiate();
        for k in 0..MAX_LEVEL {
            prop_assert!(du.norm(k) <= u.norm(k + 1) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn transform_round_trip_is_tight(u in arb_real_vector(24)) {
        let grid = 4 * u.bandwidth() + 1;
        let samples = u.synthesize(grid).unwrap();
        let back = analyze(&samples, u.bandwidth()).unwrap();
        let err = back.sub(&u).norm(0);
        prop_assert!(err <= 1e-12 * u.norm(0).max(1.0), "round trip error {err}");
    }

    #[test]
    fn smoothing_is_idempotent_and_contractive(
        u in arb_real_vector(24),
        t in 0.0f64..4.0,
    ) {
        let family = SmoothingFamily::sharp();
        let once = family.smooth(&u, t).unwrap();
        let twice = family.smooth(&once, t).unwrap();
        prop_assert_eq!(&once, &twice);
        // both defining inequalities with p = 0, C = 1 on this sample
        for m in 0..=4usize {
            let um = u.norm(m);
            if um == 0.0 { continue; }
            for n in 0..=4usize {
                let bound1 = (1.0 + ((n as f64 - m as f64) * t).exp()) * um;
                prop_assert!(once.norm(n) <= bound1 * (1.0 + 1e-12));
                if m >= n {
                    let bound2 = (-((m - n) as f64) * t).exp() * um;
                    prop_assert!(u.sub(&once).norm(n) <= bound2 * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact(u in arb_real_vector(16)) {
        let text = serde_json::to_string(&u).unwrap();
        let v: GradedVector = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(u, v);
    }

    #[test]
    fn dealiased_product_matches_grid_values(
        u in arb_real_vector(12),
        v in arb_real_vector(12),
    ) {
        // the truncated product must agree with the pointwise grid product
        // on the modes it keeps: compare against a Toeplitz convolution
        let v = v.with_bandwidth(u.bandwidth());
        let p = u.pointwise_product(&v).unwrap();
        let nb = u.bandwidth() as i64;
        for n in -nb..=nb {
            let mut conv = Complex64::new(0.0, 0.0);
            for m in -nb..=nb {
                let k = n - m;
                if k.abs() <= nb {
                    conv += u.coeff(m) * v.coeff(k);
                }
            }
            let got = p.coeff(n);
            prop_assert!((got - conv).norm() <= 1e-12 * (conv.norm() + 1.0));
        }
    }
}
