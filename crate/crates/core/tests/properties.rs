use num_complex::Complex64;
use pfista::frame::{analyze, projected_prox, soft_threshold, synthesize, FilterFamily, FrameSpec};
use pfista::mask::{make_mask, Density, MaskSpec};
use pfista::sense::{sense_adjoint, sense_forward, synth_sensitivities};
use pfista::spirit::{kernels_to_image_weights, spirit_consistency_apply, SpiritKernelSet};
use pfista::tensor::{ComplexImage, MultiCoilImage};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn image(seed: u64, n: usize) -> ComplexImage {
    ComplexImage::random(n, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn family(db4: bool) -> FilterFamily {
    if db4 {
        FilterFamily::Db4
    } else {
        FilterFamily::Haar
    }
}

fn diff_norm(a: &ComplexImage, b: &ComplexImage) -> f64 {
    let mut d = a.clone();
    d.axpy(Complex64::new(-1.0, 0.0), b);
    d.norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prox_is_nonexpansive(s1 in any::<u64>(), s2 in any::<u64>(), t in 0.0f64..2.0, db4 in any::<bool>()) {
        let spec = FrameSpec::new(family(db4), 2);
        let (a, b) = (image(s1, 16), image(s2, 16));
        let pa = projected_prox(&a, t, &spec).unwrap();
        let pb = projected_prox(&b, t, &spec).unwrap();
        prop_assert!(diff_norm(&pa, &pb) <= diff_norm(&a, &b) * (1.0 + 1e-12));
    }

    #[test]
    fn threshold_is_monotone(seed in any::<u64>(), t1 in 0.0f64..1.5, dt in 0.0f64..1.5) {
        let spec = FrameSpec::new(FilterFamily::Haar, 2);
        let coeffs = analyze(&image(seed, 16), &spec).unwrap();
        let lo = soft_threshold(&coeffs, t1).unwrap();
        let hi = soft_threshold(&coeffs, t1 + dt).unwrap();
        for (a, b) in lo.bands.iter().zip(&hi.bands) {
            for (u, v) in a.data().iter().zip(b.data()) {
                prop_assert!(v.norm() <= u.norm() + 1e-15);
            }
        }
        let same = soft_threshold(&coeffs, 0.0).unwrap();
        prop_assert_eq!(same.bands, coeffs.bands);
    }

    #[test]
    fn frame_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, db4 in any::<bool>()) {
        let spec = FrameSpec::new(family(db4), 3);
        let (x, y) = (image(s1, 16), image(s2, 16));
        let mut mix = x.clone();
        mix.scale(a);
        mix.axpy(Complex64::new(b, 0.0), &y);
        let lhs = analyze(&mix, &spec).unwrap();
        let (px, py) = (analyze(&x, &spec).unwrap(), analyze(&y, &spec).unwrap());
        let scale = a.abs() * x.norm() + b.abs() * y.norm();
        let mut err = 0.0;
        for ((l, u), v) in lhs.bands.iter().zip(&px.bands).zip(&py.bands) {
            let mut d = l.clone();
            d.axpy(Complex64::new(-a, 0.0), u);
            d.axpy(Complex64::new(-b, 0.0), v);
            err += d.norm_sqr();
        }
        prop_assert!(err.sqrt() <= 1e-12 * scale.max(1e-300));
        let back = synthesize(&lhs, &spec).unwrap();
        prop_assert!(diff_norm(&back, &mix) <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn mask_application_is_idempotent(seed in any::<u64>(), rate in 0.2f64..1.0) {
        let mask = make_mask(&MaskSpec { rate, acs_lines: 2, seed, density: Density::VariableDensityGaussian }, 16, 16).unwrap();
        let mut once = image(seed, 16);
        mask.apply_in_place(&mut once);
        let mut twice = once.clone();
        mask.apply_in_place(&mut twice);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn sense_forward_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in -2.0f64..2.0, coils in 1usize..5) {
        let maps = synth_sensitivities(16, 16, coils, s1).unwrap();
        let mask = make_mask(&MaskSpec { rate: 0.5, acs_lines: 4, seed: s2, density: Density::UniformRandom }, 16, 16).unwrap();
        let (x, y) = (image(s1, 16), image(s2, 16));
        let mut mix = x.clone();
        mix.scale(a);
        mix.axpy(Complex64::new(1.0, 0.0), &y);
        let mut expected = sense_forward(&x, &maps, &mask).unwrap();
        expected.scale(a);
        expected.axpy(1.0, &sense_forward(&y, &maps, &mask).unwrap());
        let got = sense_forward(&mix, &maps, &mask).unwrap();
        prop_assert!(got.sub(&expected).norm() <= 1e-12 * (a.abs() * x.norm() + y.norm()));
        // adjoint of masked data ignores unsampled entries
        let back = sense_adjoint(&got, &maps, &mask).unwrap();
        prop_assert!(back.norm() <= got.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn consistency_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, coils in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ks = SpiritKernelSet::zeros(coils, 3);
        for t in 0..coils {
            for s in 0..coils {
                let mut k = ComplexImage::random(3, 3, &mut rng);
                if t == s {
                    k.set(1, 1, Complex64::new(0.0, 0.0));
                }
                *ks.kernel_mut(t, s) = k;
            }
        }
        let w = kernels_to_image_weights(&ks, 12, 12).unwrap();
        let stack = |rng: &mut ChaCha8Rng| {
            MultiCoilImage::new((0..coils).map(|_| ComplexImage::random(12, 12, rng)).collect()).unwrap()
        };
        let (x, y) = (stack(&mut rng), stack(&mut rng));
        let mut mix = x.clone();
        mix.scale(a);
        mix.axpy(1.0, &y);
        let mut expected = spirit_consistency_apply(&x, &w).unwrap();
        expected.scale(a);
        expected.axpy(1.0, &spirit_consistency_apply(&y, &w).unwrap());
        let got = spirit_consistency_apply(&mix, &w).unwrap();
        prop_assert!(got.sub(&expected).norm() <= 1e-12 * (a.abs() * x.norm() + y.norm()) * 10.0);
    }
}
