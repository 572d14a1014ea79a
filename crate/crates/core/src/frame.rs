//! Shift-invariant (undecimated, à trous) 2-D wavelet transform used as a
//! Parseval tight frame Ψ, so Ψ*Ψ = I exactly.
//!
//! Each level filters the current approximation along columns then rows
//! with the low/high-pass pair dilated by 2^level and scaled by 1/√2, with
//! periodic boundaries. Per axis |H|²/2 + |G|²/2 = 1 holds at every
//! frequency, which makes each level (and therefore the cascade) energy
//! preserving. Bands are stored as `[LH, HL, HH]` for level 1..=L followed
//! by the final scaling band.

use std::f64::consts::SQRT_2;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{ComplexImage, MultiCoilImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterFamily {
    Haar,
    /// Four-tap Daubechies filter (two vanishing moments).
    Db4,
}

impl FromStr for FilterFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(FilterFamily::Haar),
            "db4" => Ok(FilterFamily::Db4),
            other => Err(Error::InvalidArgument(format!("unknown filter family {other:?}"))),
        }
    }
}

impl FilterFamily {
    /// Orthonormal low-pass filter (Σh = √2, Σh² = 1).
    pub fn lowpass(self) -> Vec<f64> {
        match self {
            FilterFamily::Haar => vec![1.0 / SQRT_2, 1.0 / SQRT_2],
            FilterFamily::Db4 => {
                let s3 = 3f64.sqrt();
                let d = 4.0 * SQRT_2;
                vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
            }
        }
    }

    /// Quadrature mirror high-pass, g[n] = (-1)^n h[L-1-n].
    pub fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let n = h.len();
        (0..n)
            .map(|i| if i % 2 == 0 { h[n - 1 - i] } else { -h[n - 1 - i] })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub family: FilterFamily,
    pub levels: usize,
    /// When false the coarsest scaling band is left unthresholded.
    pub threshold_scaling_band: bool,
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec {
            family: FilterFamily::Db4,
            levels: 4,
            threshold_scaling_band: true,
        }
    }
}

impl FrameSpec {
    pub fn new(family: FilterFamily, levels: usize) -> Self {
        FrameSpec {
            family,
            levels,
            threshold_scaling_band: true,
        }
    }

    pub fn band_count(&self) -> usize {
        3 * self.levels + 1
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidArgument("frame needs at least one level".into()));
        }
        let span = 1usize.checked_shl(self.levels as u32).unwrap_or(usize::MAX);
        if span > rows.min(cols) {
            return Err(Error::Shape(format!(
                "{} levels need 2^levels <= min(rows, cols), got {rows}x{cols}",
                self.levels
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameCoefficients {
    pub bands: Vec<ComplexImage>,
    pub levels: usize,
    pub family: FilterFamily,
}

impl FrameCoefficients {
    pub fn norm_sqr(&self) -> f64 {
        self.bands.iter().map(|b| b.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.bands
            .iter()
            .flat_map(|b| b.data().iter())
            .map(|v| v.norm())
            .sum()
    }

    pub fn scaling_band(&self) -> &ComplexImage {
        self.bands.last().expect("at least one band")
    }
}

/// Filter taps (already scaled by 1/√2) with their dilated offsets.
struct Taps {
    coeffs: Vec<f64>,
    step: usize,
}

fn level_taps(family: FilterFamily, level: usize) -> (Taps, Taps) {
    let step = 1 << level;
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x / SQRT_2).collect();
    (
        Taps { coeffs: scale(family.lowpass()), step },
        Taps { coeffs: scale(family.highpass()), step },
    )
}

#[derive(Clone, Copy)]
enum Axis {
    Rows,
    Cols,
}

/// out[n] += f · in[n − shift] along `axis`, circularly.
fn accumulate_shifted(out: &mut [Complex64], src: &[Complex64], rows: usize, cols: usize, f: f64, shift: isize, axis: Axis) {
    match axis {
        Axis::Cols => {
            let s = shift.rem_euclid(cols as isize) as usize;
            for (o, i) in out.chunks_exact_mut(cols).zip(src.chunks_exact(cols)) {
                for (a, b) in o[s..].iter_mut().zip(&i[..cols - s]) {
                    *a += b * f;
                }
                for (a, b) in o[..s].iter_mut().zip(&i[cols - s..]) {
                    *a += b * f;
                }
            }
        }
        Axis::Rows => {
            let s = shift.rem_euclid(rows as isize) as usize;
            for r in 0..rows {
                let from = (r + rows - s) % rows;
                let o = &mut out[r * cols..(r + 1) * cols];
                for (a, b) in o.iter_mut().zip(&src[from * cols..(from + 1) * cols]) {
                    *a += b * f;
                }
            }
        }
    }
}

/// Circular convolution along one axis: out[n] = Σ_k f[k] in[n − k·step].
fn filter_axis(img: &ComplexImage, taps: &Taps, axis: Axis) -> ComplexImage {
    filter_signed(img, taps, axis, 1)
}

/// Adjoint of [`filter_axis`]: out[n] = Σ_k f[k] in[n + k·step].
fn filter_axis_adjoint(img: &ComplexImage, taps: &Taps, axis: Axis) -> ComplexImage {
    filter_signed(img, taps, axis, -1)
}

fn filter_signed(img: &ComplexImage, taps: &Taps, axis: Axis, sign: isize) -> ComplexImage {
    let (rows, cols) = img.dims();
    let mut out = ComplexImage::zeros(rows, cols);
    for (k, &f) in taps.coeffs.iter().enumerate() {
        let shift = sign * (k * taps.step) as isize;
        accumulate_shifted(out.data_mut(), img.data(), rows, cols, f, shift, axis);
    }
    out
}

pub fn analyze(img: &ComplexImage, spec: &FrameSpec) -> Result<FrameCoefficients> {
    spec.validate(img.rows(), img.cols())?;
    let mut bands = Vec::with_capacity(spec.band_count());
    let mut approx = img.clone();
    for level in 0..spec.levels {
        let (lo, hi) = level_taps(spec.family, level);
        let l = filter_axis(&approx, &lo, Axis::Cols);
        let h = filter_axis(&approx, &hi, Axis::Cols);
        let ll = filter_axis(&l, &lo, Axis::Rows);
        bands.push(filter_axis(&l, &hi, Axis::Rows));
        bands.push(filter_axis(&h, &lo, Axis::Rows));
        bands.push(filter_axis(&h, &hi, Axis::Rows));
        approx = ll;
    }
    bands.push(approx);
    Ok(FrameCoefficients {
        bands,
        levels: spec.levels,
        family: spec.family,
    })
}

/// Adjoint of [`analyze`]; also its left inverse.
pub fn synthesize(coeffs: &FrameCoefficients, spec: &FrameSpec) -> Result<ComplexImage> {
    if coeffs.levels != spec.levels
        || coeffs.family != spec.family
        || coeffs.bands.len() != spec.band_count()
    {
        return Err(Error::Shape(format!(
            "coefficients ({} bands, {} levels) do not match frame spec ({} levels)",
            coeffs.bands.len(),
            coeffs.levels,
            spec.levels
        )));
    }
    let (rows, cols) = coeffs.bands[0].dims();
    if coeffs.bands.iter().any(|b| b.dims() != (rows, cols)) {
        return Err(Error::Shape("frame bands differ in size".into()));
    }
    spec.validate(rows, cols)?;

    let mut approx = coeffs.bands[spec.levels * 3].clone();
    for level in (0..spec.levels).rev() {
        let (lo, hi) = level_taps(spec.family, level);
        let b = &coeffs.bands[level * 3..level * 3 + 3];
        let mut l = filter_axis_adjoint(&approx, &lo, Axis::Rows);
        l.axpy(Complex64::new(1.0, 0.0), &filter_axis_adjoint(&b[0], &hi, Axis::Rows));
        let mut h = filter_axis_adjoint(&b[1], &lo, Axis::Rows);
        h.axpy(Complex64::new(1.0, 0.0), &filter_axis_adjoint(&b[2], &hi, Axis::Rows));
        let mut next = filter_axis_adjoint(&l, &lo, Axis::Cols);
        next.axpy(Complex64::new(1.0, 0.0), &filter_axis_adjoint(&h, &hi, Axis::Cols));
        approx = next;
    }
    Ok(approx)
}

/// Complex soft-thresholding: magnitude shrinks by `t`, phase is kept.
pub fn soft_threshold_value(v: Complex64, t: f64) -> Complex64 {
    let mag = v.norm();
    if mag <= t {
        Complex64::new(0.0, 0.0)
    } else {
        v * ((mag - t) / mag)
    }
}

pub fn soft_threshold(coeffs: &FrameCoefficients, threshold: f64) -> Result<FrameCoefficients> {
    soft_threshold_bands(coeffs, threshold, true)
}

fn soft_threshold_bands(
    coeffs: &FrameCoefficients,
    threshold: f64,
    include_scaling: bool,
) -> Result<FrameCoefficients> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be >= 0, got {threshold}")));
    }
    let last = coeffs.bands.len() - 1;
    let bands = coeffs
        .bands
        .iter()
        .enumerate()
        .map(|(i, band)| {
            if i == last && !include_scaling {
                return band.clone();
            }
            let mut out = band.clone();
            out.data_mut()
                .iter_mut()
                .for_each(|v| *v = soft_threshold_value(*v, threshold));
            out
        })
        .collect();
    Ok(FrameCoefficients {
        bands,
        levels: coeffs.levels,
        family: coeffs.family,
    })
}

/// Ψ* T_t(Ψ img).
pub fn projected_prox(img: &ComplexImage, threshold: f64, spec: &FrameSpec) -> Result<ComplexImage> {
    let coeffs = analyze(img, spec)?;
    let shrunk = soft_threshold_bands(&coeffs, threshold, spec.threshold_scaling_band)?;
    synthesize(&shrunk, spec)
}

/// Coil-by-coil [`projected_prox`].
pub fn projected_prox_multi(x: &MultiCoilImage, threshold: f64, spec: &FrameSpec) -> Result<MultiCoilImage> {
    let coils = par::map_slice(x.coils(), |c| projected_prox(c, threshold, spec))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    MultiCoilImage::new(coils)
}

/// Coil-by-coil [`analyze`].
pub fn analyze_multi(x: &MultiCoilImage, spec: &FrameSpec) -> Result<Vec<FrameCoefficients>> {
    par::map_slice(x.coils(), |c| analyze(c, spec)).into_iter().collect()
}

/// Coil-by-coil [`synthesize`].
pub fn synthesize_multi(coeffs: &[FrameCoefficients], spec: &FrameSpec) -> Result<MultiCoilImage> {
    let coils = par::map_slice(coeffs, |c| synthesize(c, spec))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    MultiCoilImage::new(coils)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::inner_product;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diff_norm(a: &ComplexImage, b: &ComplexImage) -> f64 {
        let mut d = a.clone();
        d.axpy(c(-1.0, 0.0), b);
        d.norm()
    }

    #[test]
    fn filters_are_orthonormal_qmf_pairs() {
        for fam in [FilterFamily::Haar, FilterFamily::Db4] {
            let h = fam.lowpass();
            let g = fam.highpass();
            let sum: f64 = h.iter().sum();
            assert!((sum - SQRT_2).abs() < 1e-15);
            assert!((h.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(g.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn soft_threshold_scalar_cases() {
        assert!((soft_threshold_value(c(2.0, 0.0), 0.5) - c(1.5, 0.0)).norm() < 1e-15);
        assert_eq!(soft_threshold_value(c(0.3, 0.0), 0.5), c(0.0, 0.0));
        assert!((soft_threshold_value(c(0.0, 3.0), 1.0) - c(0.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn negative_threshold_rejected() {
        let img = ComplexImage::zeros(8, 8);
        let coeffs = analyze(&img, &FrameSpec::new(FilterFamily::Haar, 1)).unwrap();
        assert!(soft_threshold(&coeffs, -1.0).is_err());
        assert!(soft_threshold(&coeffs, f64::NAN).is_err());
    }

    #[test]
    fn zero_image_has_zero_bands() {
        let spec = FrameSpec::new(FilterFamily::Db4, 2);
        let coeffs = analyze(&ComplexImage::zeros(8, 8), &spec).unwrap();
        assert_eq!(coeffs.bands.len(), 7);
        assert_eq!(coeffs.norm(), 0.0);
        assert_eq!(synthesize(&coeffs, &spec).unwrap(), ComplexImage::zeros(8, 8));
    }

    #[test]
    fn haar_constant_image_has_no_detail() {
        let spec = FrameSpec::new(FilterFamily::Haar, 1);
        let img = ComplexImage::from_fn(8, 8, |_, _| c(2.0, -1.0));
        let coeffs = analyze(&img, &spec).unwrap();
        for band in &coeffs.bands[..3] {
            assert!(band.norm() < 1e-14);
        }
        assert!((coeffs.scaling_band().norm() - img.norm()).abs() < 1e-12);
    }

    #[test]
    fn energy_preservation_and_perfect_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for fam in [FilterFamily::Haar, FilterFamily::Db4] {
            for &(r, cc, lv) in &[(32, 32, 3), (16, 24, 2), (64, 64, 4), (8, 8, 3)] {
                let spec = FrameSpec::new(fam, lv);
                let x = ComplexImage::random(r, cc, &mut rng);
                let coeffs = analyze(&x, &spec).unwrap();
                assert!((coeffs.norm() - x.norm()).abs() <= 1e-10 * x.norm());
                let back = synthesize(&coeffs, &spec).unwrap();
                assert!(diff_norm(&back, &x) <= 1e-10 * x.norm());
            }
        }
    }

    #[test]
    fn synthesize_is_adjoint_of_analyze() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let spec = FrameSpec::new(FilterFamily::Db4, 3);
        let x = ComplexImage::random(16, 16, &mut rng);
        let alpha = FrameCoefficients {
            bands: (0..spec.band_count()).map(|_| ComplexImage::random(16, 16, &mut rng)).collect(),
            levels: 3,
            family: FilterFamily::Db4,
        };
        let ax = analyze(&x, &spec).unwrap();
        let lhs: Complex64 = ax
            .bands
            .iter()
            .zip(&alpha.bands)
            .map(|(a, b)| inner_product(a.data(), b.data()).unwrap())
            .sum();
        let rhs = inner_product(x.data(), synthesize(&alpha, &spec).unwrap().data()).unwrap();
        assert!((lhs - rhs).norm() <= 1e-10 * x.norm() * alpha.norm());
    }

    #[test]
    fn incompatible_dims_rejected() {
        let spec = FrameSpec::new(FilterFamily::Db4, 4);
        assert!(analyze(&ComplexImage::zeros(8, 32), &spec).is_err());
        let coeffs = analyze(&ComplexImage::zeros(16, 16), &spec).unwrap();
        let mut wrong = coeffs.clone();
        wrong.bands.pop();
        assert!(synthesize(&wrong, &spec).is_err());
        assert!(synthesize(&coeffs, &FrameSpec::new(FilterFamily::Haar, 4)).is_err());
    }

    #[test]
    fn prox_with_zero_threshold_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let spec = FrameSpec::default();
        let x = ComplexImage::random(32, 32, &mut rng);
        let p = projected_prox(&x, 0.0, &spec).unwrap();
        assert!(diff_norm(&p, &x) <= 1e-10 * x.norm());
        assert_eq!(projected_prox(&ComplexImage::zeros(32, 32), 0.7, &spec).unwrap(), ComplexImage::zeros(32, 32));
    }

    #[test]
    fn scaling_band_exemption() {
        let spec = FrameSpec {
            threshold_scaling_band: false,
            ..FrameSpec::new(FilterFamily::Haar, 2)
        };
        let img = ComplexImage::from_fn(8, 8, |_, _| c(1.0, 0.0));
        // constant image lives only in the scaling band, so it survives
        let p = projected_prox(&img, 10.0, &spec).unwrap();
        assert!(diff_norm(&p, &img) < 1e-12);
        let p = projected_prox(&img, 10.0, &FrameSpec::new(FilterFamily::Haar, 2)).unwrap();
        assert!(p.norm() < 1e-12);
    }
}
