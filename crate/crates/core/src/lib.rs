//! Projected FISTA (pFISTA) for SENSE and SPIRiT parallel MRI with
//! closed-form step-size bounds.
//!
//! Arrays use the DC-at-(0,0) layout throughout; k-space masks select whole
//! phase-encode columns.

pub mod dense;
pub mod error;
pub mod experiment;
pub mod fourier;
pub mod frame;
pub mod io;
pub mod mask;
pub mod model;
pub mod par;
pub mod phantom;
pub mod sense;
pub mod solver;
pub mod spirit;
pub mod stepsize;
pub mod tensor;

pub use error::{Error, Result};
pub use frame::{FilterFamily, FrameSpec};
pub use mask::{make_mask, AcsBand, Density, MaskSpec, SamplingMask};
pub use model::{DataTerm, ModelKind, SenseProblem, SpiritProblem};
pub use phantom::{gen_phantom, Phantom, PhantomKind, PhantomSpec};
pub use sense::{SenseOperator, SensitivitySet};
pub use solver::{pfista_sense, pfista_spirit, PfistaConfig, ReconResult, SolverTrace, StepSource, StopReason};
pub use spirit::{BoundKind, SpiritBoundReport, SpiritImageWeights, SpiritKernelSet};
pub use stepsize::{StepRule, StepRuleKind, StepsizeReport};
pub use tensor::{ComplexImage, MultiCoilImage, MultiCoilKSpace};
