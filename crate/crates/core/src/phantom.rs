//! Synthetic multi-coil test data.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Fft2;
use crate::sense::{synth_sensitivities, SensitivitySet};
use crate::tensor::{ComplexImage, MultiCoilImage, MultiCoilKSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    SheppLogan,
    SmoothBlobs,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shepp-logan" => Ok(PhantomKind::SheppLogan),
            "smooth-blobs" => Ok(PhantomKind::SmoothBlobs),
            other => Err(Error::InvalidArgument(format!("unknown phantom {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub rows: usize,
    pub cols: usize,
    pub coils: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            kind: PhantomKind::SheppLogan,
            rows: 64,
            cols: 64,
            coils: 4,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Phantom {
    pub truth: ComplexImage,
    pub coils: MultiCoilImage,
    pub kspace: MultiCoilKSpace,
    pub maps: SensitivitySet,
}

// (intensity, semi-axis x, semi-axis y, centre x, centre y, angle in degrees)
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Normalized coordinates in [-1, 1), y pointing up.
fn coords(r: usize, c: usize, rows: usize, cols: usize) -> (f64, f64) {
    let x = 2.0 * c as f64 / cols as f64 - 1.0;
    let y = 1.0 - 2.0 * r as f64 / rows as f64;
    (x, y)
}

fn shepp_logan(rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = coords(r, c, rows, cols);
            let mut v = 0.0;
            for &(a, ax, ay, cx, cy, deg) in &SHEPP_LOGAN {
                let th = deg.to_radians();
                let (dx, dy) = (x - cx, y - cy);
                let u = dx * th.cos() + dy * th.sin();
                let w = -dx * th.sin() + dy * th.cos();
                if (u / ax).powi(2) + (w / ay).powi(2) <= 1.0 {
                    v += a;
                }
            }
            out[r * cols + c] = v;
        }
    }
    out
}

fn smooth_blobs(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb10b);
    let unit = rand_distr::Uniform::new(0.0f64, 1.0).expect("valid range");
    let blobs: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let cx = 1.2 * unit.sample(&mut rng) - 0.6;
            let cy = 1.2 * unit.sample(&mut rng) - 0.6;
            let s = 0.12 + 0.2 * unit.sample(&mut rng);
            let a = 0.4 + 0.6 * unit.sample(&mut rng);
            (cx, cy, s, a)
        })
        .collect();
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = coords(r, c, rows, cols);
            out[r * cols + c] = blobs
                .iter()
                .map(|&(cx, cy, s, a)| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp())
                .sum();
        }
    }
    out
}

/// Magnitude image with a smooth phase ramp.
pub fn phantom_image(kind: PhantomKind, rows: usize, cols: usize, seed: u64) -> ComplexImage {
    let mag = match kind {
        PhantomKind::SheppLogan => shepp_logan(rows, cols),
        PhantomKind::SmoothBlobs => smooth_blobs(rows, cols, seed),
    };
    ComplexImage::from_fn(rows, cols, |r, c| {
        let (x, y) = coords(r, c, rows, cols);
        let phase = 0.6 * x + 0.3 * y + 0.4 * x * y;
        Complex64::from_polar(mag[r * cols + c], phase)
    })
}

pub fn gen_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    if spec.rows == 0 || spec.cols == 0 || spec.coils == 0 {
        return Err(Error::InvalidArgument("phantom dims and coil count must be positive".into()));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise_std must be >= 0, got {}", spec.noise_std)));
    }
    let truth = phantom_image(spec.kind, spec.rows, spec.cols, spec.seed);
    let maps = synth_sensitivities(spec.rows, spec.cols, spec.coils, spec.seed)?;
    let coils = MultiCoilImage::new(maps.maps().iter().map(|m| m.mul(&truth)).collect())?;
    let fft = Fft2::cached(spec.rows, spec.cols);
    let mut kspace = MultiCoilKSpace::new(coils.coils().iter().map(|c| fft.forward(c)).collect())?;
    if spec.noise_std > 0.0 {
        // complex noise with E|n|² = noise_std²
        let normal = Normal::new(0.0, spec.noise_std / 2f64.sqrt()).expect("finite std");
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x4015e);
        for k in kspace.coils_mut() {
            for v in k.data_mut() {
                *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
    }
    Ok(Phantom {
        truth,
        coils,
        kspace,
        maps,
    })
}
