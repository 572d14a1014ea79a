//! The pFISTA iteration for the SENSE and SPIRiT data terms.
//!
//! ```text
//! x⁰ = x̂⁰ = Aᴴy,  t⁰ = 1
//! xᵏ⁺¹ = Ψ* T_{γλ}(Ψ(x̂ᵏ − γ∇f(x̂ᵏ)))
//! tᵏ⁺¹ = (1 + √(1 + 4tᵏ²)) / 2
//! x̂ᵏ⁺¹ = xᵏ⁺¹ + (tᵏ − 1)/tᵏ⁺¹ · (xᵏ⁺¹ − xᵏ)
//! ```

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{analyze, projected_prox_multi, synthesize, FrameSpec};
use crate::mask::SamplingMask;
use crate::model::{DataTerm, SenseProblem, SpiritProblem};
use crate::sense::SensitivitySet;
use crate::spirit::SpiritImageWeights;
use crate::stepsize::backtracking_step;
use crate::tensor::{ssos, ComplexImage, MultiCoilImage, MultiCoilKSpace};

/// Iterates whose norm grows past this multiple of the start are treated as
/// divergent.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSource {
    Fixed { gamma: f64 },
    Backtracking { gamma_init: f64, eta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfistaConfig {
    pub lambda: f64,
    /// Weight of the consistency term; SPIRiT only.
    pub lambda1: f64,
    pub step: StepSource,
    pub max_iters: usize,
    pub rel_change_tol: f64,
    pub frame: FrameSpec,
    pub record_every: usize,
    /// Operator applications spent before the loop (step-size setup),
    /// added to every trace row.
    pub initial_op_count: u64,
}

impl PfistaConfig {
    pub fn sense_default(gamma: f64) -> Self {
        PfistaConfig {
            lambda: 1e-3,
            lambda1: 1.0,
            step: StepSource::Fixed { gamma },
            max_iters: 100,
            rel_change_tol: 0.0,
            frame: FrameSpec::default(),
            record_every: 1,
            initial_op_count: 0,
        }
    }

    pub fn spirit_default(gamma: f64) -> Self {
        PfistaConfig {
            lambda: 1e-4,
            ..Self::sense_default(gamma)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.max_iters == 0 || self.record_every == 0 {
            return Err(Error::InvalidArgument("max_iters and record_every must be >= 1".into()));
        }
        if !(self.rel_change_tol >= 0.0) {
            return Err(Error::InvalidArgument("rel_change_tol must be >= 0".into()));
        }
        match self.step {
            StepSource::Fixed { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::InvalidArgument(format!("gamma must be > 0, got {gamma}")))
            }
            StepSource::Backtracking { gamma_init, eta } if !(gamma_init > 0.0 && eta > 1.0) => {
                Err(Error::InvalidArgument("backtracking needs gamma_init > 0 and eta > 1".into()))
            }
            _ => Ok(()),
        }
    }

    fn initial_gamma(&self) -> f64 {
        match self.step {
            StepSource::Fixed { gamma } => gamma,
            StepSource::Backtracking { gamma_init, .. } => gamma_init,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub rlne: Option<f64>,
    pub t: f64,
    pub gamma: f64,
    pub op_apps: u64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
}

pub const TRACE_HEADER: &str = "iter,objective,rlne,t,gamma,op_apps,wall_ms";

impl SolverTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.objective).collect()
    }

    pub fn min_objective(&self) -> f64 {
        self.rows.iter().map(|r| r.objective).fold(f64::INFINITY, f64::min)
    }

    /// First recorded iteration whose objective is at or below `target`.
    pub fn first_iter_below(&self, target: f64) -> Option<&TraceRow> {
        self.rows.iter().find(|r| r.objective <= target)
    }

    /// CSV with the fixed header. `include_wall` = false blanks the timing
    /// column so that outputs are byte-reproducible.
    pub fn to_csv(&self, include_wall: bool) -> String {
        let mut s = String::from(TRACE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let rlne = r.rlne.map(|v| format!("{v:.17e}")).unwrap_or_default();
            let wall = if include_wall { format!("{:.3}", r.wall_ms) } else { String::new() };
            s.push_str(&format!(
                "{},{:.17e},{},{:.17e},{:.17e},{},{}\n",
                r.iter, r.objective, rlne, r.t, r.gamma, r.op_apps, wall
            ));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxIters,
    RelChange,
}

#[derive(Clone, Debug)]
pub struct ReconResult {
    /// One component for SENSE, one per coil for SPIRiT.
    pub image: MultiCoilImage,
    pub trace: SolverTrace,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub final_gamma: f64,
}

impl ReconResult {
    pub fn composite(&self) -> &ComplexImage {
        self.image.coil(0)
    }
}

/// Relative ℓ2 error between two magnitude images.
pub fn rlne_values(reference: &[f64], reconstruction: &[f64]) -> Result<f64> {
    if reference.len() != reconstruction.len() {
        return Err(Error::Shape(format!("{} vs {} pixels", reference.len(), reconstruction.len())));
    }
    let den: f64 = reference.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::InvalidArgument("reference image is zero".into()));
    }
    let num: f64 = reference.iter().zip(reconstruction).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((num / den).sqrt())
}

/// RLNE of magnitude images.
pub fn rlne(reference: &ComplexImage, reconstruction: &ComplexImage) -> Result<f64> {
    rlne_values(&reference.magnitude(), &reconstruction.magnitude())
}

/// RLNE of SSOS combinations.
pub fn rlne_multicoil(reference: &MultiCoilImage, reconstruction: &MultiCoilImage) -> Result<f64> {
    rlne_values(&ssos(reference), &ssos(reconstruction))
}

/// F(Ψx) = λ‖Ψx‖₁ + ½‖y − AΨ*Ψx‖² + (1/2γ)‖ΨΨ*Ψx − Ψx‖², evaluated term by
/// term on the coefficients of each component. Uncounted.
pub fn objective_value(data: &dyn DataTerm, x: &MultiCoilImage, lambda: f64, gamma: f64, frame: &FrameSpec) -> Result<f64> {
    let mut l1 = 0.0;
    let mut gap = 0.0;
    let mut synth = Vec::with_capacity(x.num_coils());
    for c in x.coils() {
        let alpha = analyze(c, frame)?;
        let bands = if frame.threshold_scaling_band {
            &alpha.bands[..]
        } else {
            &alpha.bands[..alpha.bands.len() - 1]
        };
        l1 += bands.iter().flat_map(|b| b.data()).map(|v| v.norm()).sum::<f64>();
        let s = synthesize(&alpha, frame)?;
        let again = analyze(&s, frame)?;
        gap += again
            .bands
            .iter()
            .zip(&alpha.bands)
            .map(|(a, b)| a.data().iter().zip(b.data()).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>())
            .sum::<f64>();
        synth.push(s);
    }
    let misfit = data.evaluate(&MultiCoilImage::new(synth)?)?;
    Ok(lambda * l1 + misfit + gap / (2.0 * gamma))
}

fn next_t(t: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0
}

/// Reference magnitudes for the RLNE column.
pub enum Reference<'a> {
    None,
    Magnitude(&'a [f64]),
}

fn reference_rlne(reference: &Reference, x: &MultiCoilImage) -> Result<Option<f64>> {
    match reference {
        Reference::None => Ok(None),
        Reference::Magnitude(m) => rlne_values(m, &ssos(x)).map(Some),
    }
}

/// The loop shared by both models.
pub fn run_pfista(data: &dyn DataTerm, cfg: &PfistaConfig, reference: Reference) -> Result<ReconResult> {
    cfg.validate()?;
    let (_, rows, cols) = data.unknown_shape();
    cfg.frame.validate(rows, cols)?;
    let start = Instant::now();
    let ops = |d: &dyn DataTerm| cfg.initial_op_count + d.counter().get();

    let x0 = data.zero_filled()?;
    let norm0 = x0.norm().max(f64::MIN_POSITIVE);
    let mut gamma = cfg.initial_gamma();
    let mut trace = SolverTrace::default();
    trace.rows.push(TraceRow {
        iter: 0,
        objective: objective_value(data, &x0, cfg.lambda, gamma, &cfg.frame)?,
        rlne: reference_rlne(&reference, &x0)?,
        t: 1.0,
        gamma,
        op_apps: ops(data),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    });

    let mut x = x0.clone();
    let mut xhat = x0;
    let mut t = 1.0;
    let mut stop_reason = StopReason::MaxIters;
    let mut converged = false;

    for k in 1..=cfg.max_iters {
        let (f_hat, grad) = data.misfit_and_gradient(&xhat)?;
        let step = |g: f64| -> Result<MultiCoilImage> {
            let mut z = xhat.clone();
            z.axpy(-g, &grad);
            projected_prox_multi(&z, g * cfg.lambda, &cfg.frame)
        };
        let x_next = match cfg.step {
            StepSource::Fixed { .. } => step(gamma)?,
            StepSource::Backtracking { gamma_init, eta } => {
                let out = backtracking_step(gamma, eta, gamma_init, f_hat, &grad, &xhat, |g| {
                    let p = step(g)?;
                    let fp = data.misfit(&p)?;
                    Ok((p, fp))
                });
                match out {
                    Ok(o) => {
                        gamma = o.gamma;
                        o.point
                    }
                    Err(e @ Error::StepUnderflow { .. }) => {
                        return Err(Error::Diverged {
                            iteration: k,
                            reason: e.to_string(),
                            trace: Box::new(trace),
                        })
                    }
                    Err(e) => return Err(e),
                }
            }
        };

        let xn = x_next.norm();
        if !x_next.is_finite() || !xn.is_finite() || xn > DIVERGENCE_FACTOR * norm0 {
            let reason = if x_next.is_finite() {
                format!("iterate norm {xn:e} exceeds {DIVERGENCE_FACTOR:e} x start norm {norm0:e}")
            } else {
                "non-finite iterate".to_string()
            };
            return Err(Error::Diverged {
                iteration: k,
                reason,
                trace: Box::new(trace),
            });
        }

        let t_next = next_t(t);
        let diff = x_next.sub(&x);
        let rel = diff.norm() / x.norm().max(f64::MIN_POSITIVE);
        xhat = x_next.clone();
        xhat.axpy((t - 1.0) / t_next, &diff);
        x = x_next;
        t = t_next;

        let stop = cfg.rel_change_tol > 0.0 && rel <= cfg.rel_change_tol;
        if k % cfg.record_every == 0 || k == cfg.max_iters || stop {
            let objective = objective_value(data, &x, cfg.lambda, gamma, &cfg.frame)?;
            if !objective.is_finite() {
                return Err(Error::Diverged {
                    iteration: k,
                    reason: "non-finite objective".into(),
                    trace: Box::new(trace),
                });
            }
            trace.rows.push(TraceRow {
                iter: k,
                objective,
                rlne: reference_rlne(&reference, &x)?,
                t,
                gamma,
                op_apps: ops(data),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        if stop {
            stop_reason = StopReason::RelChange;
            converged = true;
            break;
        }
    }

    Ok(ReconResult {
        image: x,
        trace,
        converged,
        stop_reason,
        final_gamma: gamma,
    })
}

/// pFISTA on the SENSE model. Returns the composite image as the single
/// component of `image`.
pub fn pfista_sense(
    y: &MultiCoilKSpace,
    maps: &SensitivitySet,
    mask: &SamplingMask,
    cfg: &PfistaConfig,
    reference: Option<&ComplexImage>,
) -> Result<ReconResult> {
    let problem = SenseProblem::new(maps.clone(), mask.clone(), y.clone())?;
    let mag = reference.map(|r| r.magnitude());
    let r = match &mag {
        Some(m) => Reference::Magnitude(m),
        None => Reference::None,
    };
    run_pfista(&problem, cfg, r)
}

/// pFISTA on the SPIRiT model; `cfg.lambda1` weights the consistency term.
pub fn pfista_spirit(
    y: &MultiCoilKSpace,
    weights: &SpiritImageWeights,
    mask: &SamplingMask,
    cfg: &PfistaConfig,
    reference: Option<&MultiCoilImage>,
) -> Result<ReconResult> {
    let problem = SpiritProblem::new(weights.clone(), mask.clone(), y.clone(), cfg.lambda1)?;
    let mag = reference.map(ssos);
    let r = match &mag {
        Some(m) => Reference::Magnitude(m),
        None => Reference::None,
    };
    run_pfista(&problem, cfg, r)
}
