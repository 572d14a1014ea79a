//! 1-D Cartesian undersampling masks (whole phase-encode columns) and the
//! undersampling operator.

use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{centered_to_internal, internal_to_centered};
use crate::tensor::{ComplexImage, MultiCoilKSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Density {
    UniformRandom,
    VariableDensityGaussian,
}

impl FromStr for Density {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform-random" => Ok(Density::UniformRandom),
            "gaussian" | "variable-density-gaussian" => Ok(Density::VariableDensityGaussian),
            other => Err(Error::InvalidArgument(format!("unknown density {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub rate: f64,
    pub acs_lines: usize,
    pub seed: u64,
    pub density: Density,
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec {
            rate: 0.34,
            acs_lines: 8,
            seed: 0,
            density: Density::VariableDensityGaussian,
        }
    }
}

/// Contiguous run of fully sampled columns, in centred (fftshifted) column
/// coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcsBand {
    pub start: usize,
    pub len: usize,
}

impl AcsBand {
    /// Band of `len` columns centred on the DC column.
    pub fn centered(len: usize, cols: usize) -> Self {
        AcsBand {
            start: cols / 2 - len / 2,
            len,
        }
    }

    pub fn contains_centered(&self, c: usize) -> bool {
        c >= self.start && c < self.start + self.len
    }

    /// Internal (DC-at-zero) column indices, in centred order.
    pub fn internal_columns(&self, cols: usize) -> Vec<usize> {
        (self.start..self.start + self.len)
            .map(|c| centered_to_internal(c, cols))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    rows: usize,
    cols: usize,
    /// Column selection in internal layout.
    columns: Vec<bool>,
    acs: AcsBand,
}

impl SamplingMask {
    pub fn full(rows: usize, cols: usize) -> Self {
        SamplingMask {
            rows,
            cols,
            columns: vec![true; cols],
            acs: AcsBand { start: 0, len: cols },
        }
    }

    /// Builds a mask from an internal-layout column selection. The ACS band
    /// is the contiguous selected run around the DC column.
    pub fn from_columns(rows: usize, cols: usize, columns: Vec<bool>) -> Result<Self> {
        if columns.len() != cols || rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "{} column flags for a {rows}x{cols} mask",
                columns.len()
            )));
        }
        let centred = |c: usize| columns[centered_to_internal(c, cols)];
        let mid = cols / 2;
        let acs = if !centred(mid) {
            AcsBand { start: mid, len: 0 }
        } else {
            let mut lo = mid;
            while lo > 0 && centred(lo - 1) {
                lo -= 1;
            }
            let mut hi = mid + 1;
            while hi < cols && centred(hi) {
                hi += 1;
            }
            AcsBand { start: lo, len: hi - lo }
        };
        Ok(SamplingMask { rows, cols, columns, acs })
    }

    /// Reads a stored 0/1 grid; every selected column must be fully sampled.
    pub fn from_grid(grid: &ComplexImage) -> Result<Self> {
        let (rows, cols) = grid.dims();
        let mut columns = vec![false; cols];
        for (c, col) in columns.iter_mut().enumerate() {
            let on: Vec<bool> = (0..rows).map(|r| grid.get(r, c).norm() > 0.5).collect();
            if on.iter().any(|&v| v != on[0]) {
                return Err(Error::InvalidArgument(format!(
                    "column {c} is partially sampled; only whole-column masks are supported"
                )));
            }
            *col = on[0];
        }
        Self::from_columns(rows, cols, columns)
    }

    pub fn to_grid(&self) -> ComplexImage {
        ComplexImage::from_fn(self.rows, self.cols, |_, c| {
            Complex64::new(if self.columns[c] { 1.0 } else { 0.0 }, 0.0)
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

    pub fn acs_band(&self) -> AcsBand {
        self.acs
    }

    pub fn column_selected(&self, c: usize) -> bool {
        self.columns[c]
    }

    pub fn keep(&self, _r: usize, c: usize) -> bool {
        self.columns[c]
    }

    pub fn selected_columns(&self) -> usize {
        self.columns.iter().filter(|&&v| v).count()
    }

    pub fn rate(&self) -> f64 {
        self.selected_columns() as f64 / self.cols as f64
    }

    pub fn is_empty(&self) -> bool {
        self.selected_columns() == 0
    }

    /// Pointwise zeroing of unsampled locations, in place.
    pub fn apply_in_place(&self, k: &mut ComplexImage) {
        debug_assert_eq!(k.dims(), self.dims());
        let cols = self.cols;
        for (i, v) in k.data_mut().iter_mut().enumerate() {
            if !self.columns[i % cols] {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }
}

fn gaussian_pdf(c: usize, cols: usize) -> f64 {
    let x = c as f64 - (cols / 2) as f64;
    let sigma = cols as f64 / 6.0;
    (-0.5 * (x / sigma).powi(2)).exp()
}

pub fn make_mask(spec: &MaskSpec, rows: usize, cols: usize) -> Result<SamplingMask> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("mask dims must be positive".into()));
    }
    if !(spec.rate > 0.0 && spec.rate <= 1.0) {
        return Err(Error::InvalidArgument(format!("rate {} outside (0, 1]", spec.rate)));
    }
    let target = (spec.rate * cols as f64).round() as usize;
    if spec.acs_lines == 0 || spec.acs_lines > cols || spec.acs_lines > target {
        return Err(Error::InvalidArgument(format!(
            "{} ACS lines cannot fit in {target} sampled columns of {cols}",
            spec.acs_lines
        )));
    }
    let acs = AcsBand::centered(spec.acs_lines, cols);

    // Weighted sampling without replacement: keep the `remaining` largest
    // keys u^(1/w) (Efraimidis-Spirakis), with a fixed-seed stream.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut keyed: Vec<(f64, usize)> = (0..cols)
        .filter(|&c| !acs.contains_centered(c))
        .map(|c| {
            let w = match spec.density {
                Density::UniformRandom => 1.0,
                Density::VariableDensityGaussian => gaussian_pdf(c, cols).max(1e-12),
            };
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (u.ln() / w, c)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut columns = vec![false; cols];
    for c in acs.internal_columns(cols) {
        columns[c] = true;
    }
    for &(_, c) in keyed.iter().take(target - spec.acs_lines) {
        columns[centered_to_internal(c, cols)] = true;
    }
    Ok(SamplingMask {
        rows,
        cols,
        columns,
        acs,
    })
}

/// Zeroes every unsampled location of every coil.
pub fn apply_undersample(k: &MultiCoilKSpace, mask: &SamplingMask) -> Result<MultiCoilKSpace> {
    if k.dims() != mask.dims() {
        return Err(Error::Shape(format!(
            "k-space {:?} vs mask {:?}",
            k.dims(),
            mask.dims()
        )));
    }
    let mut out = k.clone();
    for coil in out.coils_mut() {
        mask.apply_in_place(coil);
    }
    Ok(out)
}

/// Centred column index of internal column `c`; used when printing masks.
pub fn centered_column(c: usize, cols: usize) -> usize {
    internal_to_centered(c, cols)
}
