//! Smooth data terms seen by the solver and the step-size rules, with
//! operator-application accounting.
//!
//! One application is one use of the system operator A or its adjoint Aᴴ.
//! A gradient (or a normal-operator product) therefore costs 2 and a plain
//! misfit evaluation costs 1.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::SamplingMask;
use crate::sense::{SenseOperator, SensitivitySet};
use crate::spirit::{spirit_consistency_adjoint, spirit_consistency_apply, SpiritImageWeights, SpiritOperator};
use crate::tensor::{MultiCoilImage, MultiCoilKSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sense,
    Spirit,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sense" => Ok(ModelKind::Sense),
            "spirit" => Ok(ModelKind::Spirit),
            other => Err(Error::InvalidArgument(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Default)]
pub struct OpCounter(AtomicU64);

impl OpCounter {
    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

/// f(x) = ½‖Ax − y‖² for a linear system A with data y.
pub trait DataTerm: Sync {
    /// (components, rows, cols) of the unknown.
    fn unknown_shape(&self) -> (usize, usize, usize);

    fn counter(&self) -> &OpCounter;

    /// Aᴴy, uncounted.
    fn adjoint_data(&self) -> Result<MultiCoilImage>;

    /// f(x), uncounted.
    fn evaluate(&self, x: &MultiCoilImage) -> Result<f64>;

    /// (f(x), ∇f(x) = Aᴴ(Ax − y)), uncounted.
    fn evaluate_with_gradient(&self, x: &MultiCoilImage) -> Result<(f64, MultiCoilImage)>;

    /// AᴴA x, uncounted.
    fn normal_uncounted(&self, x: &MultiCoilImage) -> Result<MultiCoilImage>;

    /// Zero-filled start Aᴴy; costs 1.
    fn zero_filled(&self) -> Result<MultiCoilImage> {
        self.counter().add(1);
        self.adjoint_data()
    }

    /// Costs 1.
    fn misfit(&self, x: &MultiCoilImage) -> Result<f64> {
        self.counter().add(1);
        self.evaluate(x)
    }

    /// Costs 2.
    fn misfit_and_gradient(&self, x: &MultiCoilImage) -> Result<(f64, MultiCoilImage)> {
        self.counter().add(2);
        self.evaluate_with_gradient(x)
    }

    /// Costs 2.
    fn normal(&self, x: &MultiCoilImage) -> Result<MultiCoilImage> {
        self.counter().add(2);
        self.normal_uncounted(x)
    }

    fn check(&self, x: &MultiCoilImage) -> Result<()> {
        let (c, r, k) = self.unknown_shape();
        if x.num_coils() != c || x.dims() != (r, k) {
            return Err(Error::Shape(format!(
                "unknown has {} components of {:?}, expected {c} of ({r}, {k})",
                x.num_coils(),
                x.dims()
            )));
        }
        Ok(())
    }
}

fn single(x: &MultiCoilImage) -> Result<&crate::tensor::ComplexImage> {
    if x.num_coils() != 1 {
        return Err(Error::Shape(format!("SENSE unknown has 1 component, got {}", x.num_coils())));
    }
    Ok(x.coil(0))
}

/// SENSE data term: A = ŨF̃C acting on the composite image.
pub struct SenseProblem {
    op: SenseOperator,
    data: MultiCoilKSpace,
    counter: OpCounter,
}

impl SenseProblem {
    pub fn new(maps: SensitivitySet, mask: SamplingMask, data: MultiCoilKSpace) -> Result<Self> {
        let op = SenseOperator::new(maps, mask)?;
        if data.num_coils() != op.num_coils() || data.dims() != op.dims() {
            return Err(Error::Shape(format!(
                "k-space has {} coils of {:?}, maps have {} of {:?}",
                data.num_coils(),
                data.dims(),
                op.num_coils(),
                op.dims()
            )));
        }
        Ok(SenseProblem {
            op,
            data,
            counter: OpCounter::default(),
        })
    }

    pub fn operator(&self) -> &SenseOperator {
        &self.op
    }

    pub fn data(&self) -> &MultiCoilKSpace {
        &self.data
    }

    fn residual(&self, x: &MultiCoilImage) -> Result<MultiCoilKSpace> {
        self.check(x)?;
        let mut r = self.op.forward(single(x)?)?;
        r.axpy(-1.0, &self.data);
        Ok(r)
    }
}

impl DataTerm for SenseProblem {
    fn unknown_shape(&self) -> (usize, usize, usize) {
        let (r, c) = self.op.dims();
        (1, r, c)
    }

    fn counter(&self) -> &OpCounter {
        &self.counter
    }

    fn adjoint_data(&self) -> Result<MultiCoilImage> {
        Ok(self.op.adjoint(&self.data)?.into())
    }

    fn evaluate(&self, x: &MultiCoilImage) -> Result<f64> {
        Ok(0.5 * self.residual(x)?.norm_sqr())
    }

    fn evaluate_with_gradient(&self, x: &MultiCoilImage) -> Result<(f64, MultiCoilImage)> {
        let r = self.residual(x)?;
        Ok((0.5 * r.norm_sqr(), self.op.adjoint(&r)?.into()))
    }

    fn normal_uncounted(&self, x: &MultiCoilImage) -> Result<MultiCoilImage> {
        self.check(x)?;
        Ok(self.op.normal(single(x)?)?.into())
    }
}

/// SPIRiT data term: A = [ŨF̃; −√λ₁(W − I)], data [y; 0].
pub struct SpiritProblem {
    op: SpiritOperator,
    data: MultiCoilKSpace,
    counter: OpCounter,
}

impl SpiritProblem {
    pub fn new(weights: SpiritImageWeights, mask: SamplingMask, data: MultiCoilKSpace, lambda1: f64) -> Result<Self> {
        let op = SpiritOperator::new(weights, mask, lambda1)?;
        if data.num_coils() != op.num_coils() || data.dims() != op.dims() {
            return Err(Error::Shape(format!(
                "k-space has {} coils of {:?}, weights have {} of {:?}",
                data.num_coils(),
                data.dims(),
                op.num_coils(),
                op.dims()
            )));
        }
        Ok(SpiritProblem {
            op,
            data,
            counter: OpCounter::default(),
        })
    }

    pub fn operator(&self) -> &SpiritOperator {
        &self.op
    }

    pub fn data(&self) -> &MultiCoilKSpace {
        &self.data
    }

    fn parts(&self, x: &MultiCoilImage) -> Result<(MultiCoilKSpace, MultiCoilImage)> {
        self.check(x)?;
        let mut r = self.op.sample(x)?;
        r.axpy(-1.0, &self.data);
        let d = spirit_consistency_apply(x, self.op.weights())?;
        Ok((r, d))
    }
}

impl DataTerm for SpiritProblem {
    fn unknown_shape(&self) -> (usize, usize, usize) {
        let (r, c) = self.op.dims();
        (self.op.num_coils(), r, c)
    }

    fn counter(&self) -> &OpCounter {
        &self.counter
    }

    fn adjoint_data(&self) -> Result<MultiCoilImage> {
        self.op.sample_adjoint(&self.data)
    }

    fn evaluate(&self, x: &MultiCoilImage) -> Result<f64> {
        let (r, d) = self.parts(x)?;
        Ok(0.5 * r.norm_sqr() + 0.5 * self.op.lambda1() * d.norm_sqr())
    }

    fn evaluate_with_gradient(&self, x: &MultiCoilImage) -> Result<(f64, MultiCoilImage)> {
        let (r, d) = self.parts(x)?;
        let f = 0.5 * r.norm_sqr() + 0.5 * self.op.lambda1() * d.norm_sqr();
        let mut g = self.op.sample_adjoint(&r)?;
        g.axpy(self.op.lambda1(), &spirit_consistency_adjoint(&d, self.op.weights())?);
        Ok((f, g))
    }

    fn normal_uncounted(&self, x: &MultiCoilImage) -> Result<MultiCoilImage> {
        self.check(x)?;
        self.op.normal(x)
    }
}
