//! Dense complex arrays shared by every operator.
//!
//! Layout is row-major within an image and coil-major across coils, which is
//! also the on-disk order used by [`crate::io`].

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Single complex image (or k-space grid), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexImage {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("image dims must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} image",
                data.len()
            )));
        }
        Ok(ComplexImage { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        ComplexImage { rows, cols, data }
    }

    /// I.i.d. standard complex Gaussian entries.
    pub fn random<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn same_dims(&self, other: &ComplexImage) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// Pointwise product.
    pub fn mul(&self, other: &ComplexImage) -> ComplexImage {
        debug_assert!(self.same_dims(other));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        ComplexImage { rows: self.rows, cols: self.cols, data }
    }

    /// Pointwise `conj(self) * other`.
    pub fn conj_mul(&self, other: &ComplexImage) -> ComplexImage {
        debug_assert!(self.same_dims(other));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .collect();
        ComplexImage { rows: self.rows, cols: self.cols, data }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: Complex64, other: &ComplexImage) {
        debug_assert!(self.same_dims(other));
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += alpha * b);
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm()).collect()
    }
}

/// Σ conj(a_i) · b_i
pub fn inner_product(a: &[Complex64], b: &[Complex64]) -> Result<Complex64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "inner product of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x.conj() * y).sum())
}

macro_rules! coil_stack {
    ($name:ident, $what:literal) => {
        #[doc = concat!("Ordered stack of equally sized ", $what, ", one per coil.")]
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            coils: Vec<ComplexImage>,
        }

        impl $name {
            pub fn new(coils: Vec<ComplexImage>) -> Result<Self> {
                let first = coils
                    .first()
                    .ok_or_else(|| Error::Shape("at least one coil is required".into()))?;
                if coils.iter().any(|c| !c.same_dims(first)) {
                    return Err(Error::Shape("coil grids differ in size".into()));
                }
                Ok($name { coils })
            }

            pub fn zeros(coils: usize, rows: usize, cols: usize) -> Self {
                $name {
                    coils: (0..coils).map(|_| ComplexImage::zeros(rows, cols)).collect(),
                }
            }

            /// Splits a flat coil-major buffer into coil grids.
            pub fn from_flat(coils: usize, rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
                if coils == 0 || data.len() != coils * rows * cols {
                    return Err(Error::Shape(format!(
                        "{} values for {coils} coils of {rows}x{cols}",
                        data.len()
                    )));
                }
                let n = rows * cols;
                let grids = data
                    .chunks(n)
                    .map(|c| ComplexImage::from_vec(rows, cols, c.to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                Ok($name { coils: grids })
            }

            pub fn num_coils(&self) -> usize {
                self.coils.len()
            }

            pub fn rows(&self) -> usize {
                self.coils[0].rows()
            }

            pub fn cols(&self) -> usize {
                self.coils[0].cols()
            }

            pub fn dims(&self) -> (usize, usize) {
                self.coils[0].dims()
            }

            pub fn coils(&self) -> &[ComplexImage] {
                &self.coils
            }

            pub fn coils_mut(&mut self) -> &mut [ComplexImage] {
                &mut self.coils
            }

            pub fn coil(&self, j: usize) -> &ComplexImage {
                &self.coils[j]
            }

            pub fn into_coils(self) -> Vec<ComplexImage> {
                self.coils
            }

            pub fn to_flat(&self) -> Vec<Complex64> {
                self.coils.iter().flat_map(|c| c.data().iter().copied()).collect()
            }

            pub fn norm_sqr(&self) -> f64 {
                self.coils.iter().map(|c| c.norm_sqr()).sum()
            }

            pub fn norm(&self) -> f64 {
                self.norm_sqr().sqrt()
            }

            pub fn is_finite(&self) -> bool {
                self.coils.iter().all(|c| c.is_finite())
            }

            pub fn same_shape(&self, other: &Self) -> bool {
                self.num_coils() == other.num_coils() && self.dims() == other.dims()
            }

            /// Σ_j ⟨self_j, other_j⟩, summed in coil order.
            pub fn inner(&self, other: &Self) -> Complex64 {
                self.coils
                    .iter()
                    .zip(&other.coils)
                    .map(|(a, b)| inner_product(a.data(), b.data()).expect("equal coil dims"))
                    .sum()
            }

            pub fn scale(&mut self, s: f64) {
                self.coils.iter_mut().for_each(|c| c.scale(s));
            }

            /// `self += alpha * other`
            pub fn axpy(&mut self, alpha: f64, other: &Self) {
                let a = Complex64::new(alpha, 0.0);
                self.coils
                    .iter_mut()
                    .zip(&other.coils)
                    .for_each(|(x, y)| x.axpy(a, y));
            }

            pub fn sub(&self, other: &Self) -> Self {
                let mut out = self.clone();
                out.axpy(-1.0, other);
                out
            }
        }
    };
}

coil_stack!(MultiCoilImage, "image-domain coil images");
coil_stack!(MultiCoilKSpace, "k-space coil grids");

impl From<ComplexImage> for MultiCoilImage {
    fn from(img: ComplexImage) -> Self {
        MultiCoilImage { coils: vec![img] }
    }
}

/// Square root of the sum of squares across coils.
pub fn ssos(x: &MultiCoilImage) -> Vec<f64> {
    let n = x.coil(0).len();
    let mut acc = vec![0.0; n];
    for coil in x.coils() {
        for (a, v) in acc.iter_mut().zip(coil.data()) {
            *a += v.norm_sqr();
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}
