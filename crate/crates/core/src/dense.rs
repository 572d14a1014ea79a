//! Explicit dense matrices for tiny grids. These are test oracles: they
//! assemble operators entry by entry, without the FFT or the pointwise
//! weight shortcuts, so they can check the fast paths independently.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mask::SamplingMask;
use crate::sense::SensitivitySet;
use crate::spirit::{SpiritImageWeights, SpiritKernelSet};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Largest grid (rows·cols·coils) the oracles accept.
pub const MAX_DENSE_DIM: usize = 1024;

fn check_size(n: usize) -> Result<()> {
    if n > MAX_DENSE_DIM {
        return Err(Error::InvalidArgument(format!(
            "dense oracle limited to {MAX_DENSE_DIM} unknowns, got {n}"
        )));
    }
    Ok(())
}

/// Unitary 2-D DFT matrix acting on row-major vectors.
pub fn dft_matrix(rows: usize, cols: usize) -> DMatrix<Complex64> {
    let n = rows * cols;
    let tau = 2.0 * std::f64::consts::PI;
    let s = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |p, q| {
        let (pr, pc) = (p / cols, p % cols);
        let (qr, qc) = (q / cols, q % cols);
        let phase = -tau * (((pr * qr) % rows) as f64 / rows as f64 + ((pc * qc) % cols) as f64 / cols as f64);
        Complex64::from_polar(s, phase)
    })
}

fn mask_diag(mask: &SamplingMask) -> DMatrix<Complex64> {
    let (rows, cols) = mask.dims();
    let n = rows * cols;
    DMatrix::from_fn(n, n, |p, q| {
        if p == q && mask.keep(p / cols, p % cols) {
            ONE
        } else {
            ZERO
        }
    })
}

/// Fᴴ diag(mask) F
pub fn sampling_projector(mask: &SamplingMask) -> DMatrix<Complex64> {
    let (rows, cols) = mask.dims();
    let f = dft_matrix(rows, cols);
    f.adjoint() * mask_diag(mask) * f
}

/// Σ_j diag(C̄_j) Fᴴ diag(mask) F diag(C_j)
pub fn sense_normal_dense(maps: &SensitivitySet, mask: &SamplingMask) -> Result<DMatrix<Complex64>> {
    let (rows, cols) = maps.dims();
    if mask.dims() != (rows, cols) {
        return Err(Error::Shape("maps and mask differ in size".into()));
    }
    let n = rows * cols;
    check_size(n)?;
    let q = sampling_projector(mask);
    let mut out = DMatrix::<Complex64>::zeros(n, n);
    for c in maps.maps() {
        let d = c.data();
        out += DMatrix::from_fn(n, n, |p, s| d[p].conj() * q[(p, s)] * d[s]);
    }
    Ok(out)
}

/// Circular k-space correlation by one kernel as an N×N matrix:
/// (K y)(p) = Σ_{a,b} K[a][b] y(p + (a − h, b − h)).
pub fn kspace_correlation_matrix(kernel: &crate::tensor::ComplexImage, rows: usize, cols: usize) -> DMatrix<Complex64> {
    let n = rows * cols;
    let k = kernel.rows();
    let h = k / 2;
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for pr in 0..rows {
        for pc in 0..cols {
            for a in 0..k {
                for b in 0..k {
                    let qr = (pr + rows + a % rows - h % rows) % rows;
                    let qc = (pc + cols + b % cols - h % cols) % cols;
                    m[(pr * cols + pc, qr * cols + qc)] += kernel.get(a, b);
                }
            }
        }
    }
    m
}

/// Block matrix W − I built from the kernels through explicit k-space
/// correlation: W_{j,i} = Fᴴ K_{j,i} F.
pub fn consistency_dense(kernels: &SpiritKernelSet, rows: usize, cols: usize) -> Result<DMatrix<Complex64>> {
    let j = kernels.num_coils();
    let n = rows * cols;
    check_size(j * n)?;
    let f = dft_matrix(rows, cols);
    let fh = f.adjoint();
    let mut d = DMatrix::<Complex64>::zeros(j * n, j * n);
    for t in 0..j {
        for s in 0..j {
            let block = &fh * kspace_correlation_matrix(kernels.kernel(t, s), rows, cols) * &f;
            d.view_mut((t * n, s * n), (n, n)).copy_from(&block);
        }
    }
    for p in 0..j * n {
        d[(p, p)] -= ONE;
    }
    Ok(d)
}

/// Block matrix W − I assembled from the pointwise image weights.
pub fn consistency_dense_from_weights(w: &SpiritImageWeights) -> Result<DMatrix<Complex64>> {
    let j = w.num_coils();
    let (rows, cols) = w.dims();
    let n = rows * cols;
    check_size(j * n)?;
    let mut d = DMatrix::<Complex64>::zeros(j * n, j * n);
    for t in 0..j {
        for s in 0..j {
            for (p, v) in w.weight(t, s).data().iter().enumerate() {
                d[(t * n + p, s * n + p)] = *v;
            }
        }
    }
    for p in 0..j * n {
        d[(p, p)] -= ONE;
    }
    Ok(d)
}

/// AᴴA = diag(Fᴴ M F, …) + λ₁ DᴴD with D = W − I given densely.
pub fn spirit_normal_dense(
    consistency: &DMatrix<Complex64>,
    mask: &SamplingMask,
    coils: usize,
    lambda1: f64,
) -> Result<DMatrix<Complex64>> {
    let (rows, cols) = mask.dims();
    let n = rows * cols;
    if consistency.nrows() != coils * n {
        return Err(Error::Shape("consistency matrix does not match mask and coil count".into()));
    }
    let q = sampling_projector(mask);
    let mut out = consistency.adjoint() * consistency * Complex64::new(lambda1, 0.0);
    for t in 0..coils {
        let mut view = out.view_mut((t * n, t * n), (n, n));
        view += &q;
    }
    Ok(out)
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn max_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Keeps only the blocks (a, a + offset) of a J×J block matrix with n×n
/// blocks; negative offsets select the lower block diagonals.
pub fn block_offset(m: &DMatrix<Complex64>, coils: usize, offset: isize) -> DMatrix<Complex64> {
    let n = m.nrows() / coils;
    let mut out = DMatrix::<Complex64>::zeros(m.nrows(), m.ncols());
    for a in 0..coils as isize {
        let b = a + offset;
        if b < 0 || b >= coils as isize {
            continue;
        }
        let (a, b) = (a as usize, b as usize);
        out.view_mut((a * n, b * n), (n, n)).copy_from(&m.view((a * n, b * n), (n, n)));
    }
    out
}

/// Dense spectral summary of one SPIRiT instance.
#[derive(Clone, Debug)]
pub struct DenseSpiritReport {
    pub lambda_max: f64,
    pub offset_norms: Vec<f64>,
    /// ‖Z_i + Z_{−i}‖₂ for offsets 1..J
    pub paired_norms: Vec<f64>,
}

pub fn spirit_dense_report(
    consistency: &DMatrix<Complex64>,
    mask: &SamplingMask,
    coils: usize,
    lambda1: f64,
) -> Result<DenseSpiritReport> {
    let normal = spirit_normal_dense(consistency, mask, coils, lambda1)?;
    let z = consistency.adjoint() * consistency;
    let offset_norms = (0..coils as isize).map(|i| spectral_norm(&block_offset(&z, coils, i))).collect();
    let paired_norms = (1..coils as isize)
        .map(|i| spectral_norm(&(block_offset(&z, coils, i) + block_offset(&z, coils, -i))))
        .collect();
    Ok(DenseSpiritReport {
        lambda_max: max_eigenvalue(&normal),
        offset_norms,
        paired_norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::fft2_unitary;
    use crate::tensor::ComplexImage;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dft_matrix_matches_fft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = ComplexImage::random(4, 6, &mut rng);
        let f = dft_matrix(4, 6);
        let v = nalgebra::DVector::from_column_slice(x.data());
        let y = f * v;
        let k = fft2_unitary(&x);
        for (a, b) in y.iter().zip(k.data()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn projector_is_idempotent() {
        let mask = SamplingMask::from_columns(4, 4, vec![true, false, true, false]).unwrap();
        let q = sampling_projector(&mask);
        let diff = &q * &q - &q;
        assert!(diff.norm() < 1e-12);
        assert!((max_eigenvalue(&q) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_offsets_sum_to_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = DMatrix::from_fn(6, 6, |_, _| {
            let v: f64 = rand::Rng::random(&mut rng);
            Complex64::new(v, -v)
        });
        let mut sum = DMatrix::<Complex64>::zeros(6, 6);
        for i in -2..=2 {
            sum += block_offset(&m, 3, i);
        }
        assert!((sum - m).norm() < 1e-14);
    }

    #[test]
    fn rejects_large_grids() {
        let maps = crate::sense::synth_sensitivities(64, 64, 1, 0).unwrap();
        assert!(sense_normal_dense(&maps, &SamplingMask::full(64, 64)).is_err());
    }
}
