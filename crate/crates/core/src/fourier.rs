//! Orthonormal 2-D DFT (DC at index (0,0)) and shift helpers.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::par;
use crate::tensor::ComplexImage;

/// Row and column plans for one grid size. Plans are immutable and shared.
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    /// Shared plan for `rows x cols`, created on first use.
    pub fn cached(rows: usize, cols: usize) -> Arc<Fft2> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Fft2>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("fft plan cache poisoned");
        guard
            .entry((rows, cols))
            .or_insert_with(|| Arc::new(Fft2::new(rows, cols)))
            .clone()
    }

    fn run(&self, data: &mut [Complex64], dir: Direction) {
        assert_eq!(data.len(), self.rows * self.cols, "grid size does not match plan");
        let (row_plan, col_plan) = match dir {
            Direction::Forward => (&self.row_fwd, &self.col_fwd),
            Direction::Inverse => (&self.row_inv, &self.col_inv),
        };
        par::for_each_chunk_mut(data, self.cols, |_, row| row_plan.process(row));

        let mut t = transpose(data, self.rows, self.cols);
        par::for_each_chunk_mut(&mut t, self.rows, |_, col| col_plan.process(col));
        let back = transpose(&t, self.cols, self.rows);

        let s = 1.0 / ((self.rows * self.cols) as f64).sqrt();
        for (d, v) in data.iter_mut().zip(back) {
            *d = v * s;
        }
    }

    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.run(data, Direction::Forward);
    }

    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.run(data, Direction::Inverse);
    }

    pub fn forward(&self, img: &ComplexImage) -> ComplexImage {
        let mut out = img.clone();
        self.forward_in_place(out.data_mut());
        out
    }

    pub fn inverse(&self, k: &ComplexImage) -> ComplexImage {
        let mut out = k.clone();
        self.inverse_in_place(out.data_mut());
        out
    }
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Unitary forward DFT, `‖F x‖ = ‖x‖`.
pub fn fft2_unitary(img: &ComplexImage) -> ComplexImage {
    Fft2::cached(img.rows(), img.cols()).forward(img)
}

/// Unitary inverse DFT, the adjoint of [`fft2_unitary`].
pub fn ifft2_unitary(k: &ComplexImage) -> ComplexImage {
    Fft2::cached(k.rows(), k.cols()).inverse(k)
}

/// Moves the DC sample from (0,0) to (rows/2, cols/2).
pub fn fftshift(img: &ComplexImage) -> ComplexImage {
    let (rows, cols) = img.dims();
    ComplexImage::from_fn(rows, cols, |r, c| {
        img.get((r + rows - rows / 2) % rows, (c + cols - cols / 2) % cols)
    })
}

/// Inverse of [`fftshift`].
pub fn ifftshift(img: &ComplexImage) -> ComplexImage {
    let (rows, cols) = img.dims();
    ComplexImage::from_fn(rows, cols, |r, c| img.get((r + rows / 2) % rows, (c + cols / 2) % cols))
}

/// Internal (DC-at-zero) index of centred index `i` on an axis of length `n`.
pub fn centered_to_internal(i: usize, n: usize) -> usize {
    (i + n - n / 2) % n
}

/// Centred index of internal index `i` on an axis of length `n`.
pub fn internal_to_centered(i: usize, n: usize) -> usize {
    (i + n / 2) % n
}
