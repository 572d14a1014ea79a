//! End-to-end pipelines used by the CLI and the acceptance suite: dataset
//! synthesis, model setup, single reconstructions, γ sweeps and step-rule
//! comparisons.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameSpec;
use crate::mask::{apply_undersample, make_mask, Density, MaskSpec, SamplingMask};
use crate::model::{DataTerm, ModelKind, SenseProblem, SpiritProblem};
use crate::par;
use crate::phantom::{gen_phantom, PhantomKind, PhantomSpec};
use crate::sense::{estimate_sensitivities, SensitivitySet};
use crate::solver::{rlne_values, run_pfista, PfistaConfig, Reference, SolverTrace, StepSource, StopReason};
use crate::spirit::{
    calibrate_kernels, kernels_to_image_weights, spirit_bound, BoundKind, Ridge, SpiritBoundReport, SpiritImageWeights,
    SpiritKernelSet,
};
use crate::stepsize::{power_iteration_gamma, recommended_gamma, NormalOperator, StepRule, StepRuleKind, StepsizeReport};
use crate::tensor::{ssos, ComplexImage, MultiCoilKSpace};

/// Measured data plus whatever side information is available.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub truth: Option<ComplexImage>,
    pub maps: Option<SensitivitySet>,
    pub mask: SamplingMask,
    pub y: MultiCoilKSpace,
}

pub fn bundled_phantom_spec() -> PhantomSpec {
    PhantomSpec {
        kind: PhantomKind::SheppLogan,
        rows: 64,
        cols: 64,
        coils: 4,
        noise_std: 0.0,
        seed: 7,
    }
}

pub fn bundled_mask_spec() -> MaskSpec {
    MaskSpec {
        rate: 0.34,
        acs_lines: 12,
        seed: 7,
        density: Density::VariableDensityGaussian,
    }
}

impl Dataset {
    pub fn synthetic(phantom: &PhantomSpec, mask: &MaskSpec) -> Result<Self> {
        let p = gen_phantom(phantom)?;
        let mask = make_mask(mask, phantom.rows, phantom.cols)?;
        let y = apply_undersample(&p.kspace, &mask)?;
        Ok(Dataset {
            truth: Some(p.truth),
            maps: Some(p.maps),
            mask,
            y,
        })
    }

    /// 64×64 Shepp-Logan, 4 coils, rate 0.34 with 12 centred ACS columns.
    pub fn bundled() -> Result<Self> {
        Self::synthetic(&bundled_phantom_spec(), &bundled_mask_spec())
    }

    pub fn dims(&self) -> (usize, usize) {
        self.y.dims()
    }

    pub fn reference_magnitude(&self) -> Option<Vec<f64>> {
        self.truth.as_ref().map(|t| t.magnitude())
    }

    /// Ground-truth maps when present, otherwise estimated from the ACS band.
    pub fn sense_maps(&self) -> Result<SensitivitySet> {
        match &self.maps {
            Some(m) => Ok(m.clone()),
            None => estimate_sensitivities(&self.y, self.mask.acs_band()),
        }
    }
}

/// Calibrated SPIRiT model pieces.
#[derive(Clone, Debug)]
pub struct SpiritSetup {
    pub kernels: SpiritKernelSet,
    pub weights: SpiritImageWeights,
    pub bound: SpiritBoundReport,
}

pub fn prepare_spirit(data: &Dataset, kernel_size: usize, ridge: Ridge, lambda1: f64) -> Result<SpiritSetup> {
    let kernels = calibrate_kernels(&data.y, data.mask.acs_band(), kernel_size, ridge)?;
    let (rows, cols) = data.dims();
    let weights = kernels_to_image_weights(&kernels, rows, cols)?;
    let bound = spirit_bound(&weights, lambda1)?;
    Ok(SpiritSetup { kernels, weights, bound })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "choice", rename_all = "kebab-case")]
pub enum StepChoice {
    Rule(StepRule),
    /// Explicit γ, bypassing every rule.
    Gamma { gamma: f64 },
    /// Multiple of the recommended (certified) γ.
    Multiplier { factor: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconRequest {
    pub model: ModelKind,
    pub lambda: f64,
    pub lambda1: f64,
    pub step: StepChoice,
    pub bound: BoundKind,
    pub max_iters: usize,
    pub frame: FrameSpec,
    pub kernel_size: usize,
    pub rel_change_tol: f64,
    pub record_every: usize,
}

impl ReconRequest {
    pub fn new(model: ModelKind) -> Self {
        ReconRequest {
            model,
            lambda: match model {
                ModelKind::Sense => 1e-3,
                ModelKind::Spirit => 1e-4,
            },
            lambda1: 1.0,
            step: StepChoice::Rule(StepRule::default()),
            bound: BoundKind::Safe,
            max_iters: 100,
            frame: FrameSpec::default(),
            kernel_size: 5,
            rel_change_tol: 0.0,
            record_every: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub request: ReconRequest,
    pub step: StepsizeReport,
    pub bound: Option<SpiritBoundReport>,
    pub trace: SolverTrace,
    /// Final iterate; one component for SENSE, one per coil for SPIRiT.
    pub image: Option<crate::tensor::MultiCoilImage>,
    pub stop_reason: Option<StopReason>,
    /// Divergence message when the run was stopped by the safeguard.
    pub diverged: Option<String>,
    pub zero_filled_rlne: Option<f64>,
    pub final_gamma: f64,
}

impl RunOutcome {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().map(|r| r.objective).unwrap_or(f64::NAN)
    }

    pub fn final_rlne(&self) -> Option<f64> {
        self.trace.last().and_then(|r| r.rlne)
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged.is_some()
    }
}

enum Problem {
    Sense(SenseProblem),
    Spirit(SpiritProblem),
}

impl Problem {
    fn as_dyn(&self) -> &dyn DataTerm {
        match self {
            Problem::Sense(p) => p,
            Problem::Spirit(p) => p,
        }
    }
}

fn build_problem(data: &Dataset, req: &ReconRequest, spirit: Option<&SpiritSetup>) -> Result<Problem> {
    Ok(match req.model {
        ModelKind::Sense => Problem::Sense(SenseProblem::new(data.sense_maps()?, data.mask.clone(), data.y.clone())?),
        ModelKind::Spirit => {
            let s = spirit.ok_or_else(|| Error::InvalidArgument("SPIRiT run needs calibrated weights".into()))?;
            Problem::Spirit(SpiritProblem::new(s.weights.clone(), data.mask.clone(), data.y.clone(), req.lambda1)?)
        }
    })
}

/// Runs one reconstruction. Divergence is reported inside the outcome, not
/// as an error, so sweeps survive super-critical steps.
pub fn run_recon(data: &Dataset, req: &ReconRequest, spirit: Option<&SpiritSetup>) -> Result<RunOutcome> {
    let owned;
    let spirit = match (req.model, spirit) {
        (ModelKind::Spirit, None) => {
            owned = prepare_spirit(data, req.kernel_size, Ridge::default(), req.lambda1)?;
            Some(&owned)
        }
        (_, s) => s,
    };
    let bound = match (req.model, spirit) {
        (ModelKind::Spirit, Some(s)) => {
            // the bound depends on λ₁; recompute in case the setup used another
            Some(spirit_bound(&s.weights, req.lambda1)?)
        }
        _ => None,
    };
    let problem = build_problem(data, req, spirit)?;
    let dt = problem.as_dyn();

    let recommended = || recommended_gamma(req.model, bound.as_ref(), req.bound);
    let (step, source) = match req.step {
        StepChoice::Gamma { gamma } => (
            StepsizeReport {
                gamma,
                setup_op_applications: 0,
                per_iteration_extra: 0,
            },
            StepSource::Fixed { gamma },
        ),
        StepChoice::Multiplier { factor } => {
            let mut r = recommended()?;
            r.gamma *= factor;
            (r, StepSource::Fixed { gamma: r.gamma })
        }
        StepChoice::Rule(rule) => {
            rule.validate()?;
            match rule.kind {
                StepRuleKind::Recommended => {
                    let r = recommended()?;
                    (r, StepSource::Fixed { gamma: r.gamma })
                }
                StepRuleKind::PowerIteration => {
                    let r = power_iteration_gamma(&NormalOperator(dt), &rule)?;
                    (r, StepSource::Fixed { gamma: r.gamma })
                }
                StepRuleKind::Backtracking => (
                    StepsizeReport {
                        gamma: rule.gamma_init,
                        setup_op_applications: 0,
                        per_iteration_extra: 1,
                    },
                    StepSource::Backtracking {
                        gamma_init: rule.gamma_init,
                        eta: rule.eta,
                    },
                ),
            }
        }
    };
    dt.counter().reset();

    let reference = data.reference_magnitude();
    let zero_filled_rlne = match &reference {
        Some(m) => Some(rlne_values(m, &ssos(&dt.adjoint_data()?))?),
        None => None,
    };

    let cfg = PfistaConfig {
        lambda: req.lambda,
        lambda1: req.lambda1,
        step: source,
        max_iters: req.max_iters,
        rel_change_tol: req.rel_change_tol,
        frame: req.frame,
        record_every: req.record_every,
        initial_op_count: step.setup_op_applications,
    };
    let r = match &reference {
        Some(m) => Reference::Magnitude(m),
        None => Reference::None,
    };
    let mut outcome = RunOutcome {
        request: req.clone(),
        step,
        bound,
        trace: SolverTrace::default(),
        image: None,
        stop_reason: None,
        diverged: None,
        zero_filled_rlne,
        final_gamma: step.gamma,
    };
    match run_pfista(dt, &cfg, r) {
        Ok(res) => {
            outcome.trace = res.trace;
            outcome.image = Some(res.image);
            outcome.stop_reason = Some(res.stop_reason);
            outcome.final_gamma = res.final_gamma;
        }
        Err(Error::Diverged { iteration, reason, trace }) => {
            outcome.trace = *trace;
            outcome.diverged = Some(format!("iteration {iteration}: {reason}"));
        }
        Err(e) => return Err(e),
    }
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma_mult: f64,
    pub gamma: f64,
    pub final_objective: f64,
    pub final_rlne: Option<f64>,
    /// First iteration at or below 1.01 × the best final objective over the
    /// non-divergent runs of the sweep; `None` if never reached.
    pub iters_to_target: Option<usize>,
    pub diverged: bool,
}

pub const SWEEP_HEADER: &str = "gamma_mult,gamma,final_objective,final_rlne,iters_to_1.01x_final";

pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunOutcome>,
    pub target: f64,
}

impl SweepOutput {
    /// Larger multipliers (among non-divergent runs, taken in the order
    /// given) never need more iterations; unreached counts as infinite.
    pub fn ordering_holds(&self) -> bool {
        let mut pairs: Vec<(f64, usize)> = self
            .rows
            .iter()
            .filter(|r| !r.diverged)
            .map(|r| (r.gamma_mult, r.iters_to_target.unwrap_or(usize::MAX)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.windows(2).all(|w| w[1].1 <= w[0].1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(SWEEP_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.17e},{:.17e},{},{}\n",
                r.gamma_mult,
                r.gamma,
                r.final_objective,
                r.final_rlne.map(|v| format!("{v:.17e}")).unwrap_or_default(),
                r.iters_to_target.map(|v| v.to_string()).unwrap_or_default()
            ));
        }
        s
    }
}

/// Runs one reconstruction per multiplier of the certified γ, up to `jobs`
/// at a time.
pub fn run_sweep(data: &Dataset, base: &ReconRequest, multipliers: &[f64], jobs: usize) -> Result<SweepOutput> {
    if multipliers.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one multiplier".into()));
    }
    let spirit = match base.model {
        ModelKind::Spirit => Some(prepare_spirit(data, base.kernel_size, Ridge::default(), base.lambda1)?),
        ModelKind::Sense => None,
    };
    let runs: Vec<Result<RunOutcome>> = par::with_jobs(jobs, || {
        par::map_slice(multipliers, |&m| {
            let req = ReconRequest {
                step: StepChoice::Multiplier { factor: m },
                ..base.clone()
            };
            run_recon(data, &req, spirit.as_ref())
        })
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let best = runs
        .iter()
        .filter(|r| !r.is_diverged())
        .map(|r| r.final_objective())
        .fold(f64::INFINITY, f64::min);
    let target = 1.01 * best;
    let rows = multipliers
        .iter()
        .zip(&runs)
        .map(|(&m, r)| SweepRow {
            gamma_mult: m,
            gamma: r.step.gamma,
            final_objective: r.final_objective(),
            final_rlne: r.final_rlne(),
            iters_to_target: if r.is_diverged() {
                None
            } else {
                r.trace.first_iter_below(target).map(|row| row.iter)
            },
            diverged: r.is_diverged(),
        })
        .collect();
    Ok(SweepOutput { rows, runs, target })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRuleRow {
    pub rule: StepRuleKind,
    pub gamma: f64,
    pub setup_ops: u64,
    pub iters_to_target: Option<usize>,
    /// Setup plus loop applications when the target was first reached.
    pub total_ops: Option<u64>,
    pub wall_ms: f64,
    pub reached: bool,
    /// total_ops / recommended total_ops
    pub ratio_to_recommended: Option<f64>,
}

pub const STEPRULE_HEADER: &str =
    "rule,gamma,setup_ops,iters_to_target,total_ops,wall_ms,reached,ratio_to_recommended";

pub struct StepRuleComparison {
    pub target: f64,
    pub rows: Vec<StepRuleRow>,
}

fn rule_name(k: StepRuleKind) -> &'static str {
    match k {
        StepRuleKind::Recommended => "recommended",
        StepRuleKind::PowerIteration => "power",
        StepRuleKind::Backtracking => "backtracking",
    }
}

impl StepRuleComparison {
    pub fn row(&self, kind: StepRuleKind) -> Option<&StepRuleRow> {
        self.rows.iter().find(|r| r.rule == kind)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(STEPRULE_HEADER);
        s.push('\n');
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.17e},{},{},{},{:.3},{},{}\n",
                rule_name(r.rule),
                r.gamma,
                r.setup_ops,
                opt(r.iters_to_target.map(|v| v.to_string())),
                opt(r.total_ops.map(|v| v.to_string())),
                r.wall_ms,
                r.reached,
                opt(r.ratio_to_recommended.map(|v| format!("{v:.6}")))
            ));
        }
        s
    }
}

/// Runs the three step rules to a common target: 1.01 × the smallest
/// objective of the recommended-rule run.
pub fn compare_steprules(data: &Dataset, base: &ReconRequest, rule: StepRule) -> Result<StepRuleComparison> {
    let spirit = match base.model {
        ModelKind::Spirit => Some(prepare_spirit(data, base.kernel_size, Ridge::default(), base.lambda1)?),
        ModelKind::Sense => None,
    };
    let kinds = [StepRuleKind::Recommended, StepRuleKind::PowerIteration, StepRuleKind::Backtracking];
    let mut runs = Vec::new();
    for kind in kinds {
        let req = ReconRequest {
            step: StepChoice::Rule(StepRule { kind, ..rule }),
            ..base.clone()
        };
        let start = Instant::now();
        let out = run_recon(data, &req, spirit.as_ref())?;
        runs.push((kind, out, start.elapsed().as_secs_f64() * 1e3));
    }
    let target = 1.01 * runs[0].1.trace.min_objective();
    let mut rows: Vec<StepRuleRow> = runs
        .iter()
        .map(|(kind, out, total_wall)| {
            let hit = if out.is_diverged() {
                None
            } else {
                out.trace.first_iter_below(target)
            };
            StepRuleRow {
                rule: *kind,
                gamma: out.step.gamma,
                setup_ops: out.step.setup_op_applications,
                iters_to_target: hit.map(|r| r.iter),
                total_ops: hit.map(|r| r.op_apps),
                wall_ms: hit.map(|r| r.wall_ms).unwrap_or(*total_wall),
                reached: hit.is_some(),
                ratio_to_recommended: None,
            }
        })
        .collect();
    let base_ops = rows[0].total_ops;
    for r in &mut rows {
        r.ratio_to_recommended = match (r.total_ops, base_ops) {
            (Some(a), Some(b)) if b > 0 => Some(a as f64 / b as f64),
            _ => None,
        };
    }
    Ok(StepRuleComparison { target, rows })
}

/// Bound report plus an optional dense check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundOutput {
    #[serde(flatten)]
    pub report: SpiritBoundReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_lambda_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
}

/// Dense λ_max(AᴴA) from the kernels, for grids within the oracle limit.
pub fn verify_bound_dense(setup: &SpiritSetup, mask: &SamplingMask, lambda1: f64) -> Result<(f64, f64)> {
    let (rows, cols) = mask.dims();
    let d = crate::dense::consistency_dense(&setup.kernels, rows, cols)?;
    let normal = crate::dense::spirit_normal_dense(&d, mask, setup.kernels.num_coils(), lambda1)?;
    let lmax = crate::dense::max_eigenvalue(&normal);
    Ok((lmax, setup.bound.c_safe - lmax))
}
