//! SPIRiT calibration, the image-domain consistency operator (W − I), and
//! the closed-form bound on the system operator's spectral norm.
//!
//! Kernel convention: `K[j][i]` is a k×k grid with centre tap (k/2, k/2);
//! the consistency relation in k-space is
//!
//! ```text
//! y_j(p) = Σ_i Σ_s K[j][i](s + h) · y_i(p + s),   s ∈ [-h, h]², h = k/2
//! ```
//!
//! with circular indexing. Under the unitary FFT this is the pointwise
//! product x_j = Σ_i w[j][i] ⊙ x_i with
//! w(r) = Σ_s K(s + h) exp(-2πi (s_r r_r / R + s_c r_c / C)).

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{fftshift, Fft2};
use crate::mask::{AcsBand, SamplingMask};
use crate::par;
use crate::tensor::{ComplexImage, MultiCoilImage, MultiCoilKSpace};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// J×J grid of k×k k-space kernels, stored target-major (`j * J + i`).
#[derive(Clone, Debug, PartialEq)]
pub struct SpiritKernelSet {
    coils: usize,
    size: usize,
    kernels: Vec<ComplexImage>,
}

impl SpiritKernelSet {
    pub fn new(coils: usize, size: usize, kernels: Vec<ComplexImage>) -> Result<Self> {
        if size % 2 == 0 || size == 0 {
            return Err(Error::InvalidArgument(format!("kernel size must be odd, got {size}")));
        }
        if coils == 0 || kernels.len() != coils * coils {
            return Err(Error::Shape(format!("{} kernels for {coils} coils", kernels.len())));
        }
        if kernels.iter().any(|k| k.dims() != (size, size)) {
            return Err(Error::Shape(format!("kernels must be {size}x{size}")));
        }
        Ok(SpiritKernelSet { coils, size, kernels })
    }

    pub fn zeros(coils: usize, size: usize) -> Self {
        SpiritKernelSet {
            coils,
            size,
            kernels: (0..coils * coils).map(|_| ComplexImage::zeros(size, size)).collect(),
        }
    }

    pub fn num_coils(&self) -> usize {
        self.coils
    }

    pub fn kernel_size(&self) -> usize {
        self.size
    }

    pub fn center(&self) -> usize {
        self.size / 2
    }

    /// Kernel predicting coil `target` from coil `source`.
    pub fn kernel(&self, target: usize, source: usize) -> &ComplexImage {
        &self.kernels[target * self.coils + source]
    }

    pub fn kernel_mut(&mut self, target: usize, source: usize) -> &mut ComplexImage {
        &mut self.kernels[target * self.coils + source]
    }

    pub fn self_center_zero(&self) -> bool {
        let h = self.center();
        (0..self.coils).all(|j| self.kernel(j, j).get(h, h) == ZERO)
    }

    /// Flat `[J, J, k, k]` buffer for serialization.
    pub fn to_flat(&self) -> Vec<Complex64> {
        self.kernels.iter().flat_map(|k| k.data().iter().copied()).collect()
    }

    pub fn from_flat(coils: usize, size: usize, data: &[Complex64]) -> Result<Self> {
        let n = size * size;
        if data.len() != coils * coils * n {
            return Err(Error::Shape(format!(
                "{} values for {coils}x{coils} kernels of size {size}",
                data.len()
            )));
        }
        let kernels = data
            .chunks(n)
            .map(|c| ComplexImage::from_vec(size, size, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(coils, size, kernels)
    }
}

/// Image-domain diagonals w[j][i] of the blocks W_{j,i}.
#[derive(Clone, Debug, PartialEq)]
pub struct SpiritImageWeights {
    coils: usize,
    weights: Vec<ComplexImage>,
}

impl SpiritImageWeights {
    pub fn new(coils: usize, weights: Vec<ComplexImage>) -> Result<Self> {
        if coils == 0 || weights.len() != coils * coils {
            return Err(Error::Shape(format!("{} weight maps for {coils} coils", weights.len())));
        }
        let dims = weights[0].dims();
        if weights.iter().any(|w| w.dims() != dims) {
            return Err(Error::Shape("weight maps differ in size".into()));
        }
        Ok(SpiritImageWeights { coils, weights })
    }

    pub fn num_coils(&self) -> usize {
        self.coils
    }

    pub fn dims(&self) -> (usize, usize) {
        self.weights[0].dims()
    }

    pub fn weight(&self, target: usize, source: usize) -> &ComplexImage {
        &self.weights[target * self.coils + source]
    }

    pub fn to_flat(&self) -> Vec<Complex64> {
        self.weights.iter().flat_map(|k| k.data().iter().copied()).collect()
    }

    pub fn from_flat(coils: usize, rows: usize, cols: usize, data: &[Complex64]) -> Result<Self> {
        let n = rows * cols;
        if data.len() != coils * coils * n {
            return Err(Error::Shape(format!("{} values for {coils}x{coils} weight maps", data.len())));
        }
        let weights = data
            .chunks(n)
            .map(|c| ComplexImage::from_vec(rows, cols, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(coils, weights)
    }
}

/// Options for [`calibrate_kernels`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ridge {
    /// Absolute Tikhonov weight on ‖k‖².
    Absolute(f64),
    /// Weight = factor · ‖calibration matrix‖_F² / columns.
    Relative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-6)
    }
}

/// Least-squares kernel fit on the fully sampled ACS columns.
///
/// Equations are taken at every ACS position whose k×k neighbourhood lies
/// inside the band (no wrap-around), over all rows. For target coil j the
/// centre tap of coil j is excluded, so that point never predicts itself.
pub fn calibrate_kernels(
    acs: &MultiCoilKSpace,
    band: AcsBand,
    kernel_size: usize,
    ridge: Ridge,
) -> Result<SpiritKernelSet> {
    if kernel_size % 2 == 0 || kernel_size == 0 {
        return Err(Error::InvalidArgument(format!("kernel size must be odd, got {kernel_size}")));
    }
    let (rows, cols) = acs.dims();
    if band.start + band.len > cols {
        return Err(Error::Shape(format!("ACS band {band:?} exceeds {cols} columns")));
    }
    let coils = acs.num_coils();
    let k = kernel_size;
    let h = k / 2;
    let taps = k * k;
    let unknowns = coils * taps - 1;
    let fit_rows = rows.saturating_sub(k - 1);
    let fit_cols = band.len.saturating_sub(k - 1);
    let equations = fit_rows * fit_cols;
    if equations < unknowns || fit_rows == 0 {
        let needed_cols = if fit_rows == 0 {
            usize::MAX
        } else {
            k - 1 + unknowns.div_ceil(fit_rows)
        };
        return Err(Error::Underdetermined {
            equations,
            unknowns,
            required_rows: rows.max(k),
            required_cols: needed_cols,
        });
    }

    let centred: Vec<ComplexImage> = acs.coils().iter().map(fftshift).collect();
    // full neighbourhood matrix, columns ordered (coil, a, b)
    let ncols = coils * taps;
    let mut a = DMatrix::<Complex64>::zeros(equations, ncols);
    let mut eq = 0;
    for pr in h..rows - h {
        for pc in band.start + h..band.start + band.len - h {
            for (i, grid) in centred.iter().enumerate() {
                for da in 0..k {
                    for db in 0..k {
                        a[(eq, i * taps + da * k + db)] = grid.get(pr + da - h, pc + db - h);
                    }
                }
            }
            eq += 1;
        }
    }
    let gram = a.adjoint() * &a;

    let kernels_per_target: Vec<Result<Vec<ComplexImage>>> = par::map_range(coils, |j| {
        let centre_col = j * taps + h * k + h;
        let keep: Vec<usize> = (0..ncols).filter(|&c| c != centre_col).collect();
        let m = keep.len();
        let mut g = DMatrix::<Complex64>::zeros(m, m);
        let mut rhs = DVector::<Complex64>::zeros(m);
        for (u, &cu) in keep.iter().enumerate() {
            rhs[u] = gram[(cu, centre_col)];
            for (v, &cv) in keep.iter().enumerate() {
                g[(u, v)] = gram[(cu, cv)];
            }
        }
        let rho = match ridge {
            Ridge::Absolute(v) => v,
            Ridge::Relative(f) => f * (0..m).map(|u| g[(u, u)].re).sum::<f64>() / m as f64,
        };
        for u in 0..m {
            g[(u, u)] += Complex64::new(rho, 0.0);
        }
        let chol = Cholesky::new(g).ok_or_else(|| {
            Error::LinearAlgebra(format!(
                "calibration normal matrix for coil {j} is not positive definite; increase the ridge"
            ))
        })?;
        let sol = chol.solve(&rhs);
        let mut full = vec![ZERO; ncols];
        for (u, &cu) in keep.iter().enumerate() {
            full[cu] = sol[u];
        }
        full.chunks(taps)
            .map(|c| ComplexImage::from_vec(k, k, c.to_vec()))
            .collect()
    });

    let mut kernels = Vec::with_capacity(coils * coils);
    for per_target in kernels_per_target {
        kernels.extend(per_target?);
    }
    SpiritKernelSet::new(coils, k, kernels)
}

/// Relative residual ‖predicted − actual‖/‖actual‖ of the kernels on the
/// calibration equations.
pub fn calibration_residual(acs: &MultiCoilKSpace, band: AcsBand, kernels: &SpiritKernelSet) -> f64 {
    let (rows, _) = acs.dims();
    let k = kernels.kernel_size();
    let h = k / 2;
    let coils = acs.num_coils();
    let centred: Vec<ComplexImage> = acs.coils().iter().map(fftshift).collect();
    let (mut err, mut total) = (0.0, 0.0);
    for pr in h..rows.saturating_sub(h) {
        for pc in band.start + h..(band.start + band.len).saturating_sub(h) {
            for j in 0..coils {
                let mut pred = ZERO;
                for (i, grid) in centred.iter().enumerate() {
                    let ker = kernels.kernel(j, i);
                    for da in 0..k {
                        for db in 0..k {
                            pred += ker.get(da, db) * grid.get(pr + da - h, pc + db - h);
                        }
                    }
                }
                let actual = centred[j].get(pr, pc);
                err += (pred - actual).norm_sqr();
                total += actual.norm_sqr();
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        (err / total).sqrt()
    }
}

/// Zero-pads each kernel onto the full grid and transforms it so that
/// k-space circular correlation becomes pointwise multiplication.
pub fn kernels_to_image_weights(kernels: &SpiritKernelSet, rows: usize, cols: usize) -> Result<SpiritImageWeights> {
    let k = kernels.kernel_size();
    if k > rows || k > cols {
        return Err(Error::Shape(format!("kernel size {k} exceeds grid {rows}x{cols}")));
    }
    let h = k / 2;
    let fft = Fft2::cached(rows, cols);
    let scale = ((rows * cols) as f64).sqrt();
    let j = kernels.num_coils();
    let weights = par::map_range(j * j, |idx| {
        let ker = &kernels.kernels[idx];
        let mut pad = ComplexImage::zeros(rows, cols);
        for a in 0..k {
            for b in 0..k {
                let r = (a + rows - h) % rows;
                let c = (b + cols - h) % cols;
                pad.set(r, c, pad.get(r, c) + ker.get(a, b));
            }
        }
        let mut w = fft.forward(&pad);
        w.scale(scale);
        w
    });
    SpiritImageWeights::new(j, weights)
}

fn check_weights(x: &MultiCoilImage, w: &SpiritImageWeights) -> Result<()> {
    if x.num_coils() != w.num_coils() || x.dims() != w.dims() {
        return Err(Error::Shape(format!(
            "{} coils {:?} vs weights for {} coils {:?}",
            x.num_coils(),
            x.dims(),
            w.num_coils(),
            w.dims()
        )));
    }
    Ok(())
}

/// (W − I)x: coil j output is Σ_i w[j][i] ⊙ x_i − x_j.
pub fn spirit_consistency_apply(x: &MultiCoilImage, w: &SpiritImageWeights) -> Result<MultiCoilImage> {
    check_weights(x, w)?;
    let j = x.num_coils();
    let coils = par::map_range(j, |t| {
        let mut out = x.coil(t).clone();
        out.scale(-1.0);
        for s in 0..j {
            let wx = w.weight(t, s).mul(x.coil(s));
            out.axpy(ONE, &wx);
        }
        out
    });
    MultiCoilImage::new(coils)
}

/// (W − I)ᴴy: coil i output is Σ_j conj(w[j][i]) ⊙ y_j − y_i.
pub fn spirit_consistency_adjoint(y: &MultiCoilImage, w: &SpiritImageWeights) -> Result<MultiCoilImage> {
    check_weights(y, w)?;
    let j = y.num_coils();
    let coils = par::map_range(j, |s| {
        let mut out = y.coil(s).clone();
        out.scale(-1.0);
        for t in 0..j {
            let wy = w.weight(t, s).conj_mul(y.coil(t));
            out.axpy(ONE, &wy);
        }
        out
    });
    MultiCoilImage::new(coils)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    /// Σ of offset-block norms, taken literally as the bound c.
    Paper,
    /// 1 + λ₁ · Σ of offset-block norms.
    Safe,
}

impl std::str::FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(BoundKind::Paper),
            "safe" => Ok(BoundKind::Safe),
            other => Err(Error::InvalidArgument(format!("unknown bound {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpiritBoundReport {
    pub c_paper: f64,
    pub c_safe: f64,
    pub z: usize,
    pub per_offset_norms: Vec<f64>,
}

impl SpiritBoundReport {
    pub fn c(&self, kind: BoundKind) -> f64 {
        match kind {
            BoundKind::Paper => self.c_paper,
            BoundKind::Safe => self.c_safe,
        }
    }
}

/// Pointwise diagonals of Z_{a,b} = Σ_m D_{m,a}ᴴ D_{m,b}, D = W − I, for
/// `b >= a`, indexed `[a][b - a]`.
pub fn z_diagonals(w: &SpiritImageWeights) -> Vec<Vec<ComplexImage>> {
    let j = w.num_coils();
    let (rows, cols) = w.dims();
    let n = rows * cols;
    let d = |m: usize, i: usize, p: usize| -> Complex64 {
        let v = w.weight(m, i).data()[p];
        if m == i {
            v - ONE
        } else {
            v
        }
    };
    par::map_range(j, |a| {
        (a..j)
            .map(|b| {
                let data = (0..n)
                    .map(|p| (0..j).map(|m| d(m, a, p).conj() * d(m, b, p)).sum())
                    .collect();
                ComplexImage::from_vec(rows, cols, data).expect("dims")
            })
            .collect()
    })
}

/// Closed-form bound on ‖AᴴA‖₂ for the SPIRiT model.
///
/// ‖Z_diag,i‖₂ is the largest |z| on the i-th block off-diagonal (each block
/// is diagonal, so the offset-block matrix is a permuted diagonal). With
/// z = ⌊J/2⌋, c_paper = Σ_{i=-z..z} ‖Z_diag,i‖ + Σ_{i=z+1..J-1} ‖Z_diag,i‖
/// and c_safe = 1 + λ₁ · c_paper.
pub fn spirit_bound(w: &SpiritImageWeights, lambda1: f64) -> Result<SpiritBoundReport> {
    if !(lambda1 > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda1 must be > 0, got {lambda1}")));
    }
    let j = w.num_coils();
    let z = z_diagonals(w);
    let per_offset_norms: Vec<f64> = (0..j)
        .map(|off| {
            (0..j - off)
                .map(|a| z[a][off].data().iter().map(|v| v.norm()).fold(0.0, f64::max))
                .fold(0.0, f64::max)
        })
        .collect();
    let split = j / 2;
    // Z is Hermitian, so offsets -i and i share a norm.
    let mut sum = per_offset_norms[0];
    for norm in per_offset_norms.iter().take(split + 1).skip(1) {
        sum += 2.0 * norm;
    }
    for norm in per_offset_norms.iter().skip(split + 1) {
        sum += norm;
    }
    Ok(SpiritBoundReport {
        c_paper: sum,
        c_safe: 1.0 + lambda1 * sum,
        z: split,
        per_offset_norms,
    })
}

/// F̃ᴴŨᵀŨF̃x + λ₁(W − I)ᴴ(W − I)x
pub fn spirit_normal_apply(
    x: &MultiCoilImage,
    w: &SpiritImageWeights,
    mask: &SamplingMask,
    lambda1: f64,
) -> Result<MultiCoilImage> {
    check_weights(x, w)?;
    if x.dims() != mask.dims() {
        return Err(Error::Shape(format!("image {:?} vs mask {:?}", x.dims(), mask.dims())));
    }
    let (rows, cols) = x.dims();
    let fft = Fft2::cached(rows, cols);
    let data = par::map_slice(x.coils(), |c| {
        let mut k = fft.forward(c);
        mask.apply_in_place(&mut k);
        fft.inverse_in_place(k.data_mut());
        k
    });
    let mut out = MultiCoilImage::new(data)?;
    let dx = spirit_consistency_apply(x, w)?;
    out.axpy(lambda1, &spirit_consistency_adjoint(&dx, w)?);
    Ok(out)
}

/// Stacked system A = [ŨF̃; −√λ₁(W − I)] with measured data y.
#[derive(Clone)]
pub struct SpiritOperator {
    weights: SpiritImageWeights,
    mask: SamplingMask,
    lambda1: f64,
}

impl SpiritOperator {
    pub fn new(weights: SpiritImageWeights, mask: SamplingMask, lambda1: f64) -> Result<Self> {
        if weights.dims() != mask.dims() {
            return Err(Error::Shape(format!("weights {:?} vs mask {:?}", weights.dims(), mask.dims())));
        }
        if !(lambda1 > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda1 must be > 0, got {lambda1}")));
        }
        Ok(SpiritOperator { weights, mask, lambda1 })
    }

    pub fn weights(&self) -> &SpiritImageWeights {
        &self.weights
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn num_coils(&self) -> usize {
        self.weights.num_coils()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.weights.dims()
    }

    /// Ũ F̃ x
    pub fn sample(&self, x: &MultiCoilImage) -> Result<MultiCoilKSpace> {
        check_weights(x, &self.weights)?;
        let (rows, cols) = self.dims();
        let fft = Fft2::cached(rows, cols);
        let coils = par::map_slice(x.coils(), |c| {
            let mut k = fft.forward(c);
            self.mask.apply_in_place(&mut k);
            k
        });
        MultiCoilKSpace::new(coils)
    }

    /// F̃ᴴ Ũᵀ y
    pub fn sample_adjoint(&self, y: &MultiCoilKSpace) -> Result<MultiCoilImage> {
        if y.num_coils() != self.num_coils() || y.dims() != self.dims() {
            return Err(Error::Shape("k-space does not match operator".into()));
        }
        let (rows, cols) = self.dims();
        let fft = Fft2::cached(rows, cols);
        let coils = par::map_slice(y.coils(), |c| {
            let mut k = c.clone();
            self.mask.apply_in_place(&mut k);
            fft.inverse_in_place(k.data_mut());
            k
        });
        MultiCoilImage::new(coils)
    }

    pub fn normal(&self, x: &MultiCoilImage) -> Result<MultiCoilImage> {
        spirit_normal_apply(x, &self.weights, &self.mask, self.lambda1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{fft2_unitary, ifft2_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_kernels(coils: usize, size: usize, scale: f64, seed: u64) -> SpiritKernelSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ks = SpiritKernelSet::zeros(coils, size);
        for t in 0..coils {
            for s in 0..coils {
                let mut k = ComplexImage::random(size, size, &mut rng);
                k.scale(scale);
                if t == s {
                    k.set(size / 2, size / 2, ZERO);
                }
                *ks.kernel_mut(t, s) = k;
            }
        }
        ks
    }

    fn random_stack(coils: usize, rows: usize, cols: usize, seed: u64) -> MultiCoilImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MultiCoilImage::new((0..coils).map(|_| ComplexImage::random(rows, cols, &mut rng)).collect()).unwrap()
    }

    /// Direct k-space circular correlation, coil by coil.
    fn correlate_kspace(kernels: &SpiritKernelSet, y: &[ComplexImage]) -> Vec<ComplexImage> {
        let (rows, cols) = y[0].dims();
        let k = kernels.kernel_size();
        let h = k as isize / 2;
        (0..kernels.num_coils())
            .map(|t| {
                ComplexImage::from_fn(rows, cols, |r, c| {
                    let mut acc = ZERO;
                    for (s, ys) in y.iter().enumerate() {
                        for a in 0..k {
                            for b in 0..k {
                                let rr = (r as isize + a as isize - h).rem_euclid(rows as isize) as usize;
                                let cc = (c as isize + b as isize - h).rem_euclid(cols as isize) as usize;
                                acc += kernels.kernel(t, s).get(a, b) * ys.get(rr, cc);
                            }
                        }
                    }
                    acc
                })
            })
            .collect()
    }

    #[test]
    fn identity_kernel_gives_unit_weight() {
        let mut ks = SpiritKernelSet::zeros(2, 3);
        ks.kernel_mut(0, 0).set(1, 1, ONE);
        ks.kernel_mut(1, 1).set(1, 1, ONE);
        let w = kernels_to_image_weights(&ks, 8, 6).unwrap();
        for t in 0..2 {
            for v in w.weight(t, t).data() {
                assert!((v - ONE).norm() < 1e-12);
            }
            assert_eq!(w.weight(t, 1 - t).norm(), 0.0);
        }
    }

    #[test]
    fn zero_kernels_give_zero_weights() {
        let w = kernels_to_image_weights(&SpiritKernelSet::zeros(3, 5), 8, 8).unwrap();
        assert!((0..3).all(|t| (0..3).all(|s| w.weight(t, s).norm() == 0.0)));
        assert!(kernels_to_image_weights(&SpiritKernelSet::zeros(1, 9), 8, 8).is_err());
    }

    #[test]
    fn image_weights_match_kspace_correlation() {
        for (coils, rows, cols, seed) in [(2, 8, 8, 1), (3, 12, 10, 2), (4, 16, 16, 3)] {
            let ks = random_kernels(coils, 3, 0.3, seed);
            let w = kernels_to_image_weights(&ks, rows, cols).unwrap();
            let x = random_stack(coils, rows, cols, seed + 10);
            let y: Vec<_> = x.coils().iter().map(fft2_unitary).collect();
            let corr = correlate_kspace(&ks, &y);
            for t in 0..coils {
                let mut img = ComplexImage::zeros(rows, cols);
                for s in 0..coils {
                    img.axpy(ONE, &w.weight(t, s).mul(x.coil(s)));
                }
                let mut d = ifft2_unitary(&corr[t]);
                d.axpy(-ONE, &img);
                assert!(d.norm() <= 1e-10 * x.norm());
            }
        }
    }

    #[test]
    fn consistency_adjoint() {
        for coils in [1, 2, 4] {
            let ks = random_kernels(coils, 3, 0.4, coils as u64);
            let w = kernels_to_image_weights(&ks, 12, 12).unwrap();
            let x = random_stack(coils, 12, 12, 50);
            let y = random_stack(coils, 12, 12, 51);
            let lhs = spirit_consistency_apply(&x, &w).unwrap().inner(&y);
            let rhs = x.inner(&spirit_consistency_adjoint(&y, &w).unwrap());
            assert!((lhs - rhs).norm() <= 1e-12 * x.norm() * y.norm());
        }
        let w = kernels_to_image_weights(&random_kernels(2, 3, 0.4, 1), 8, 8).unwrap();
        let zero = MultiCoilImage::zeros(2, 8, 8);
        assert_eq!(spirit_consistency_apply(&zero, &w).unwrap().norm(), 0.0);
        assert!(spirit_consistency_apply(&MultiCoilImage::zeros(3, 8, 8), &w).is_err());
    }

    #[test]
    fn normal_is_self_adjoint() {
        let ks = random_kernels(3, 3, 0.3, 8);
        let w = kernels_to_image_weights(&ks, 10, 10).unwrap();
        let mask = SamplingMask::from_columns(10, 10, (0..10).map(|c| c % 3 != 1).collect()).unwrap();
        let x = random_stack(3, 10, 10, 1);
        let y = random_stack(3, 10, 10, 2);
        let mx = spirit_normal_apply(&x, &w, &mask, 0.7).unwrap();
        let my = spirit_normal_apply(&y, &w, &mask, 0.7).unwrap();
        assert!((mx.inner(&y) - x.inner(&my)).norm() <= 1e-12 * x.norm() * y.norm());
        assert_eq!(spirit_normal_apply(&MultiCoilImage::zeros(3, 10, 10), &w, &mask, 0.7).unwrap().norm(), 0.0);
    }

    #[test]
    fn single_coil_zero_kernel_bound() {
        let w = kernels_to_image_weights(&SpiritKernelSet::zeros(1, 3), 8, 8).unwrap();
        let rep = spirit_bound(&w, 1.0).unwrap();
        assert_eq!(rep.per_offset_norms, vec![1.0]);
        assert_eq!(rep.c_paper, 1.0);
        assert_eq!(rep.c_safe, 2.0);
        assert_eq!(rep.z, 0);
        let rep = spirit_bound(&w, 0.25).unwrap();
        assert_eq!(rep.c_safe, 1.25);
        assert!(spirit_bound(&w, 0.0).is_err());
    }

    #[test]
    fn bound_sums_offsets_with_hermitian_mirror() {
        let ks = random_kernels(4, 3, 0.2, 12);
        let w = kernels_to_image_weights(&ks, 8, 8).unwrap();
        let rep = spirit_bound(&w, 2.0).unwrap();
        let n = &rep.per_offset_norms;
        assert_eq!(rep.z, 2);
        let expected = n[0] + 2.0 * (n[1] + n[2]) + n[3];
        assert!((rep.c_paper - expected).abs() < 1e-12);
        assert!((rep.c_safe - (1.0 + 2.0 * expected)).abs() < 1e-12);
        assert!(n.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn calibration_excludes_own_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = MultiCoilKSpace::new(vec![ComplexImage::random(16, 16, &mut rng)]).unwrap();
        let ks = calibrate_kernels(&k, AcsBand::centered(10, 16), 3, Ridge::default()).unwrap();
        assert!(ks.self_center_zero());
    }

    #[test]
    fn calibration_rejects_small_acs() {
        let k = MultiCoilKSpace::zeros(4, 8, 16);
        let err = calibrate_kernels(&k, AcsBand::centered(5, 16), 5, Ridge::default()).unwrap_err();
        match err {
            Error::Underdetermined { unknowns, required_cols, .. } => {
                assert_eq!(unknowns, 99);
                assert!(required_cols > 5);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(calibrate_kernels(&k, AcsBand::centered(8, 16), 4, Ridge::default()).is_err());
    }

    #[test]
    fn kernel_set_validation() {
        assert!(SpiritKernelSet::new(2, 4, vec![]).is_err());
        assert!(SpiritKernelSet::new(2, 3, vec![ComplexImage::zeros(3, 3); 3]).is_err());
        let ks = random_kernels(2, 3, 1.0, 1);
        let back = SpiritKernelSet::from_flat(2, 3, &ks.to_flat()).unwrap();
        assert_eq!(back, ks);
    }
}
