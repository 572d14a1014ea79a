//! SENSE system operator A = Ũ F̃ C and coil sensitivity maps.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fourier::{centered_to_internal, Fft2};
use crate::mask::{AcsBand, SamplingMask};
use crate::par;
use crate::tensor::{ComplexImage, MultiCoilImage, MultiCoilKSpace};

/// Per-coil complex sensitivity maps (the diagonals of C_j).
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivitySet {
    maps: Vec<ComplexImage>,
}

impl SensitivitySet {
    pub fn new(maps: Vec<ComplexImage>) -> Result<Self> {
        // validates equal dims
        let stack = MultiCoilImage::new(maps)?;
        Ok(SensitivitySet { maps: stack.into_coils() })
    }

    /// Rescales every pixel so that Σ_j |C_j(r)|² = 1. Pixels where all maps
    /// vanish get 1/√J magnitude.
    pub fn normalized(mut self) -> Self {
        let j = self.maps.len();
        let n = self.maps[0].len();
        for p in 0..n {
            let ss: f64 = self.maps.iter().map(|m| m.data()[p].norm_sqr()).sum();
            if ss > 0.0 {
                let s = 1.0 / ss.sqrt();
                self.maps.iter_mut().for_each(|m| m.data_mut()[p] *= s);
            } else {
                let v = Complex64::new(1.0 / (j as f64).sqrt(), 0.0);
                self.maps.iter_mut().for_each(|m| m.data_mut()[p] = v);
            }
        }
        self
    }

    pub fn maps(&self) -> &[ComplexImage] {
        &self.maps
    }

    pub fn num_coils(&self) -> usize {
        self.maps.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.maps[0].dims()
    }

    pub fn as_stack(&self) -> MultiCoilImage {
        MultiCoilImage::new(self.maps.clone()).expect("maps share dims")
    }

    /// max_r |Σ_j |C_j(r)|² − 1|
    pub fn normalization_error(&self) -> f64 {
        let n = self.maps[0].len();
        (0..n)
            .map(|p| {
                let ss: f64 = self.maps.iter().map(|m| m.data()[p].norm_sqr()).sum();
                (ss - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Smooth synthetic maps: Gaussian lobes around the field of view with a
/// slowly varying phase, normalized so that CᴴC = I.
pub fn synth_sensitivities(rows: usize, cols: usize, coils: usize, seed: u64) -> Result<SensitivitySet> {
    if coils == 0 {
        return Err(Error::InvalidArgument("at least one coil is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e45e);
    let sigma = 0.35;
    let maps = (0..coils)
        .map(|j| {
            let angle = 2.0 * PI * j as f64 / coils as f64 + rng.random_range(-0.2..0.2);
            let radius = if coils == 1 { 0.0 } else { 0.45 };
            let (cu, cv) = (radius * angle.cos(), radius * angle.sin());
            let phase0 = rng.random_range(-PI..PI);
            let (a, b) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            ComplexImage::from_fn(rows, cols, |r, c| {
                let u = (r as f64 - rows as f64 / 2.0) / rows as f64;
                let v = (c as f64 - cols as f64 / 2.0) / cols as f64;
                let d2 = (u - cu).powi(2) + (v - cv).powi(2);
                let mag = (-d2 / (2.0 * sigma * sigma)).exp();
                Complex64::from_polar(mag, phase0 + 2.0 * PI * (a * u + b * v))
            })
        })
        .collect();
    Ok(SensitivitySet::new(maps)?.normalized())
}

/// Raised-cosine taper of length `len`, strictly positive at both ends.
fn raised_cosine(len: usize) -> Vec<f64> {
    (0..len)
        .map(|t| 0.5 * (1.0 - (2.0 * PI * (t + 1) as f64 / (len + 1) as f64).cos()))
        .collect()
}

/// Low-resolution map estimate from the fully sampled centre of k-space.
///
/// The ACS columns (and an equally wide band of rows) are apodized with a
/// raised cosine, transformed to the image domain and divided by their
/// root-sum-of-squares. Pixels whose SSOS is below 1e-8·max get a uniform
/// 1/√J magnitude.
pub fn estimate_sensitivities(acs_kspace: &MultiCoilKSpace, band: AcsBand) -> Result<SensitivitySet> {
    let (rows, cols) = acs_kspace.dims();
    if band.len == 0 {
        return Err(Error::InvalidArgument("ACS band is empty".into()));
    }
    if band.start + band.len > cols {
        return Err(Error::Shape(format!("ACS band {band:?} exceeds {cols} columns")));
    }
    let col_window = raised_cosine(band.len);
    let row_len = band.len.min(rows);
    let row_window = raised_cosine(row_len);
    let row_start = rows / 2 - row_len / 2;

    let mut window = ComplexImage::zeros(rows, cols);
    for (tr, wr) in row_window.iter().enumerate() {
        let r = centered_to_internal(row_start + tr, rows);
        for (tc, wc) in col_window.iter().enumerate() {
            let c = centered_to_internal(band.start + tc, cols);
            window.set(r, c, Complex64::new(wr * wc, 0.0));
        }
    }

    let fft = Fft2::cached(rows, cols);
    let lowres: Vec<ComplexImage> = par::map_slice(acs_kspace.coils(), |k| fft.inverse(&k.mul(&window)));
    let j = lowres.len();
    let n = rows * cols;
    let ssos: Vec<f64> = (0..n)
        .map(|p| lowres.iter().map(|m| m.data()[p].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let floor = 1e-8 * ssos.iter().cloned().fold(0.0, f64::max);

    let maps = lowres
        .iter()
        .map(|img| {
            let data = img
                .data()
                .iter()
                .zip(&ssos)
                .map(|(v, &s)| {
                    if s > floor && s > 0.0 {
                        v / s
                    } else {
                        let phase = if v.norm() > 0.0 { v / v.norm() } else { Complex64::new(1.0, 0.0) };
                        phase / (j as f64).sqrt()
                    }
                })
                .collect();
            ComplexImage::from_vec(rows, cols, data).expect("dims preserved")
        })
        .collect();
    // exact renormalization removes rounding drift
    Ok(SensitivitySet::new(maps)?.normalized())
}

/// A = Ũ F̃ C with its adjoint, sharing one FFT plan.
#[derive(Clone)]
pub struct SenseOperator {
    maps: SensitivitySet,
    mask: SamplingMask,
    fft: Arc<Fft2>,
}

impl SenseOperator {
    pub fn new(maps: SensitivitySet, mask: SamplingMask) -> Result<Self> {
        if maps.dims() != mask.dims() {
            return Err(Error::Shape(format!(
                "maps {:?} vs mask {:?}",
                maps.dims(),
                mask.dims()
            )));
        }
        let (rows, cols) = maps.dims();
        Ok(SenseOperator {
            maps,
            mask,
            fft: Fft2::cached(rows, cols),
        })
    }

    pub fn maps(&self) -> &SensitivitySet {
        &self.maps
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn dims(&self) -> (usize, usize) {
        self.maps.dims()
    }

    pub fn num_coils(&self) -> usize {
        self.maps.num_coils()
    }

    pub fn forward(&self, x: &ComplexImage) -> Result<MultiCoilKSpace> {
        if x.dims() != self.dims() {
            return Err(Error::Shape(format!("image {:?} vs maps {:?}", x.dims(), self.dims())));
        }
        let coils = par::map_slice(self.maps.maps(), |c| {
            let mut k = c.mul(x);
            self.fft.forward_in_place(k.data_mut());
            self.mask.apply_in_place(&mut k);
            k
        });
        MultiCoilKSpace::new(coils)
    }

    pub fn adjoint(&self, y: &MultiCoilKSpace) -> Result<ComplexImage> {
        if y.dims() != self.dims() || y.num_coils() != self.num_coils() {
            return Err(Error::Shape(format!(
                "k-space {} coils {:?} vs maps {} coils {:?}",
                y.num_coils(),
                y.dims(),
                self.num_coils(),
                self.dims()
            )));
        }
        let (rows, cols) = self.dims();
        let parts = par::map_range(y.num_coils(), |j| {
            let mut k = y.coil(j).clone();
            self.mask.apply_in_place(&mut k);
            self.fft.inverse_in_place(k.data_mut());
            self.maps.maps()[j].conj_mul(&k)
        });
        // fixed coil order for a deterministic sum
        let mut out = ComplexImage::zeros(rows, cols);
        for p in &parts {
            out.axpy(Complex64::new(1.0, 0.0), p);
        }
        Ok(out)
    }

    /// AᴴA x
    pub fn normal(&self, x: &ComplexImage) -> Result<ComplexImage> {
        self.adjoint(&self.forward(x)?)
    }
}

/// Per coil: mask ⊙ F(C_j ⊙ x).
pub fn sense_forward(x: &ComplexImage, maps: &SensitivitySet, mask: &SamplingMask) -> Result<MultiCoilKSpace> {
    SenseOperator::new(maps.clone(), mask.clone())?.forward(x)
}

/// Σ_j conj(C_j) ⊙ Fᴴ(mask ⊙ y_j).
pub fn sense_adjoint(y: &MultiCoilKSpace, maps: &SensitivitySet, mask: &SamplingMask) -> Result<ComplexImage> {
    SenseOperator::new(maps.clone(), mask.clone())?.adjoint(y)
}

/// Certified step size for normalized maps: ‖AᴴA‖₂ ≤ 1, so γ ≤ 1.
pub fn sense_gamma_bound() -> f64 {
    1.0
}
