use num_complex::Complex64;
use pfista::mask::AcsBand;
use pfista::phantom::{gen_phantom, PhantomKind, PhantomSpec};
use pfista::sense::estimate_sensitivities;
use pfista::spirit::{calibrate_kernels, calibration_residual, Ridge};
use pfista::tensor::MultiCoilKSpace;

fn smooth_phantom(acs_seed: u64) -> pfista::phantom::Phantom {
    gen_phantom(&PhantomSpec {
        kind: PhantomKind::SmoothBlobs,
        rows: 64,
        cols: 64,
        coils: 4,
        noise_std: 0.0,
        seed: acs_seed,
    })
    .unwrap()
}

/// Map magnitudes compared over the object support; outside it the
/// estimator has nothing to divide by.
#[test]
fn estimated_maps_track_truth() {
    let p = smooth_phantom(5);
    let band = AcsBand::centered(16, 64);
    let est = estimate_sensitivities(&p.kspace, band).unwrap();
    assert!(est.normalization_error() <= 1e-10);
    let mag = p.truth.magnitude();
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (e, t) in est.maps().iter().zip(p.maps.maps()) {
        for ((a, b), m) in e.data().iter().zip(t.data()).zip(&mag) {
            if *m >= 0.05 * peak {
                num += (a.norm() - b.norm()).powi(2);
                den += b.norm_sqr();
            }
        }
    }
    let err = (num / den).sqrt();
    assert!(err <= 0.15, "map magnitude RLNE {err}");
}

#[test]
fn single_coil_estimate_is_unit_magnitude() {
    let p = gen_phantom(&PhantomSpec { coils: 1, rows: 32, cols: 32, ..Default::default() }).unwrap();
    let est = estimate_sensitivities(&p.kspace, AcsBand::centered(8, 32)).unwrap();
    for v in est.maps()[0].data() {
        assert!((v.norm() - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn empty_band_is_rejected() {
    let p = gen_phantom(&PhantomSpec { rows: 16, cols: 16, ..Default::default() }).unwrap();
    assert!(estimate_sensitivities(&p.kspace, AcsBand { start: 8, len: 0 }).is_err());
}

#[test]
fn calibration_fits_smooth_acs() {
    let p = smooth_phantom(9);
    let band = AcsBand::centered(22, 64);
    let ks = calibrate_kernels(&p.kspace, band, 5, Ridge::default()).unwrap();
    assert!(ks.self_center_zero());
    let res = calibration_residual(&p.kspace, band, &ks);
    assert!(res <= 0.05, "calibration residual {res}");
}

#[test]
fn single_coil_kernel_has_zero_centre() {
    let p = gen_phantom(&PhantomSpec { coils: 1, rows: 32, cols: 32, ..Default::default() }).unwrap();
    let ks = calibrate_kernels(&p.kspace, AcsBand::centered(16, 32), 3, Ridge::default()).unwrap();
    assert_eq!(ks.kernel(0, 0).get(1, 1), Complex64::new(0.0, 0.0));
}

#[test]
fn too_few_acs_lines_name_the_requirement() {
    let p = gen_phantom(&PhantomSpec { rows: 16, cols: 32, ..Default::default() }).unwrap();
    let err = calibrate_kernels(&p.kspace, AcsBand::centered(5, 32), 5, Ridge::default()).unwrap_err();
    assert!(err.to_string().contains("ACS"), "{err}");
}

#[test]
fn calibration_is_permutation_equivariant() {
    let p = smooth_phantom(13);
    let band = AcsBand::centered(22, 64);
    let perm = [2usize, 0, 3, 1];
    let shuffled = MultiCoilKSpace::new(perm.iter().map(|&i| p.kspace.coil(i).clone()).collect()).unwrap();
    let a = calibrate_kernels(&p.kspace, band, 5, Ridge::default()).unwrap();
    let b = calibrate_kernels(&shuffled, band, 5, Ridge::default()).unwrap();
    let mut worst: f64 = 0.0;
    for t in 0..4 {
        for s in 0..4 {
            let mut d = b.kernel(t, s).clone();
            d.axpy(Complex64::new(-1.0, 0.0), a.kernel(perm[t], perm[s]));
            worst = worst.max(d.norm() / a.kernel(perm[t], perm[s]).norm().max(1e-300));
        }
    }
    // columns are reordered in the normal equations, so agreement is to rounding
    assert!(worst <= 1e-8, "{worst}");
}
