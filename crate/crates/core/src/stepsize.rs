//! Step-size rules: the closed-form bounds, power iteration on the normal
//! operator, and FISTA backtracking.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DataTerm, ModelKind};
use crate::sense::sense_gamma_bound;
use crate::spirit::{BoundKind, SpiritBoundReport};
use crate::tensor::{ComplexImage, MultiCoilImage};

const POWER_SEED: u64 = 0x9057_e1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRuleKind {
    Recommended,
    PowerIteration,
    Backtracking,
}

impl std::str::FromStr for StepRuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recommended" => Ok(StepRuleKind::Recommended),
            "power" | "power-iteration" => Ok(StepRuleKind::PowerIteration),
            "backtracking" => Ok(StepRuleKind::Backtracking),
            other => Err(Error::InvalidArgument(format!("unknown step rule {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    pub kind: StepRuleKind,
    pub gamma_init: f64,
    pub eta: f64,
    pub power_iters: usize,
    pub power_tol: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule {
            kind: StepRuleKind::Recommended,
            gamma_init: 1.0,
            eta: 2.0,
            power_iters: 100,
            power_tol: 1e-4,
        }
    }
}

impl StepRule {
    pub fn with_kind(kind: StepRuleKind) -> Self {
        StepRule { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 1.0) {
            return Err(Error::InvalidArgument(format!("eta must be > 1, got {}", self.eta)));
        }
        if !(self.power_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("power_tol must be > 0, got {}", self.power_tol)));
        }
        if self.power_iters == 0 {
            return Err(Error::InvalidArgument("power_iters must be >= 1".into()));
        }
        if !(self.gamma_init > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma_init must be > 0, got {}", self.gamma_init)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepsizeReport {
    pub gamma: f64,
    pub setup_op_applications: u64,
    /// Extra applications per solver iteration on top of the gradient
    /// (0 for one-shot rules; for backtracking this is a lower bound, the
    /// trace records the actual count).
    pub per_iteration_extra: u64,
}

/// Closed-form step: 1 for SENSE, 1/c for SPIRiT. Costs no operator
/// applications.
pub fn recommended_gamma(
    model: ModelKind,
    bound: Option<&SpiritBoundReport>,
    kind: BoundKind,
) -> Result<StepsizeReport> {
    let gamma = match (model, bound) {
        (ModelKind::Sense, _) => sense_gamma_bound(),
        (ModelKind::Spirit, Some(b)) => {
            let c = b.c(kind);
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::InvalidArgument(format!("bound c = {c} is not a positive number")));
            }
            1.0 / c
        }
        (ModelKind::Spirit, None) => {
            return Err(Error::InvalidArgument("SPIRiT step needs a bound report".into()));
        }
    };
    Ok(StepsizeReport {
        gamma,
        setup_op_applications: 0,
        per_iteration_extra: 0,
    })
}

/// A self-adjoint positive semidefinite operator on multi-coil images.
pub trait SelfAdjointOperator {
    fn shape(&self) -> (usize, usize, usize);
    fn apply(&self, x: &MultiCoilImage) -> Result<MultiCoilImage>;
    /// Operator applications charged per call.
    fn cost(&self) -> u64 {
        2
    }
}

/// The counted normal operator AᴴA of a data term.
pub struct NormalOperator<'a, D: DataTerm + ?Sized>(pub &'a D);

impl<D: DataTerm + ?Sized> SelfAdjointOperator for NormalOperator<'_, D> {
    fn shape(&self) -> (usize, usize, usize) {
        self.0.unknown_shape()
    }

    fn apply(&self, x: &MultiCoilImage) -> Result<MultiCoilImage> {
        self.0.normal(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerEstimate {
    pub lambda_max: f64,
    pub iterations: usize,
}

/// Power iteration from a fixed-seed Gaussian start. Stops when successive
/// Rayleigh quotients agree to `tol` relative, or after `max_iters`.
pub fn power_iteration(op: &dyn SelfAdjointOperator, max_iters: usize, tol: f64) -> Result<PowerEstimate> {
    let (c, r, k) = op.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v = MultiCoilImage::new((0..c).map(|_| ComplexImage::random(r, k, &mut rng)).collect())?;
    v.scale(1.0 / v.norm());
    let mut lambda = 0.0;
    let mut iterations = 0;
    for it in 1..=max_iters {
        let av = op.apply(&v)?;
        iterations = it;
        let next = v.inner(&av).re;
        let norm = av.norm();
        if !(norm > 1e-300) {
            lambda = 0.0;
            break;
        }
        let done = it > 1 && (next - lambda).abs() <= tol * next.abs();
        lambda = next;
        if done {
            break;
        }
        v = av;
        v.scale(1.0 / norm);
    }
    if !(lambda > 1e-14) {
        return Err(Error::ZeroOperator(lambda));
    }
    Ok(PowerEstimate {
        lambda_max: lambda,
        iterations,
    })
}

/// γ = 1 / (λ̂ (1 + tol)); setup cost counts every operator call.
pub fn power_iteration_gamma(op: &dyn SelfAdjointOperator, rule: &StepRule) -> Result<StepsizeReport> {
    rule.validate()?;
    let est = power_iteration(op, rule.power_iters, rule.power_tol)?;
    Ok(StepsizeReport {
        gamma: 1.0 / (est.lambda_max * (1.0 + rule.power_tol)),
        setup_op_applications: est.iterations as u64 * op.cost(),
        per_iteration_extra: 0,
    })
}

#[derive(Clone, Debug)]
pub struct BacktrackOutcome {
    pub gamma: f64,
    pub point: MultiCoilImage,
    pub value: f64,
    pub trials: usize,
}

/// Right-hand side of the sufficient-decrease test:
/// f(x̂) + Re⟨g, p − x̂⟩ + ‖p − x̂‖² / (2γ).
pub fn quadratic_model(f_at_point: f64, grad: &MultiCoilImage, point: &MultiCoilImage, candidate: &MultiCoilImage, gamma: f64) -> f64 {
    let d = candidate.sub(point);
    f_at_point + grad.inner(&d).re + d.norm_sqr() / (2.0 * gamma)
}

/// FISTA backtracking. Starting from `gamma`, shrinks by `eta` until the
/// candidate produced by `candidate(γ)` (returning the point and its
/// smooth value) passes the sufficient-decrease test. The accepted γ is
/// never larger than the input γ.
pub fn backtracking_step<F>(
    gamma: f64,
    eta: f64,
    gamma_init: f64,
    f_at_point: f64,
    grad: &MultiCoilImage,
    point: &MultiCoilImage,
    mut candidate: F,
) -> Result<BacktrackOutcome>
where
    F: FnMut(f64) -> Result<(MultiCoilImage, f64)>,
{
    if !(eta > 1.0) {
        return Err(Error::InvalidArgument(format!("eta must be > 1, got {eta}")));
    }
    let floor = 1e-12 * gamma_init;
    let mut g = gamma;
    let mut trials = 0;
    loop {
        if g < floor {
            return Err(Error::StepUnderflow { gamma: g, floor });
        }
        let (p, fp) = candidate(g)?;
        trials += 1;
        let model = quadratic_model(f_at_point, grad, point, &p, g);
        let slack = 1e-12 * (f_at_point.abs() + model.abs()).max(f64::MIN_POSITIVE);
        if fp.is_finite() && fp <= model + slack {
            return Ok(BacktrackOutcome {
                gamma: g,
                point: p,
                value: fp,
                trials,
            });
        }
        g /= eta;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    struct Diagonal(Vec<f64>);

    impl SelfAdjointOperator for Diagonal {
        fn shape(&self) -> (usize, usize, usize) {
            (1, 1, self.0.len())
        }

        fn apply(&self, x: &MultiCoilImage) -> Result<MultiCoilImage> {
            let data = x.coil(0).data().iter().zip(&self.0).map(|(v, d)| v * *d).collect();
            Ok(ComplexImage::from_vec(1, self.0.len(), data)?.into())
        }
    }

    fn scalar(v: f64) -> MultiCoilImage {
        ComplexImage::from_vec(1, 1, vec![Complex64::new(v, 0.0)]).unwrap().into()
    }

    #[test]
    fn identity_and_known_spectrum() {
        let id = Diagonal(vec![1.0; 6]);
        let est = power_iteration(&id, 100, 1e-10).unwrap();
        assert!((est.lambda_max - 1.0).abs() < 1e-10);
        let rep = power_iteration_gamma(&id, &StepRule::default()).unwrap();
        assert!((rep.gamma - 1.0 / (1.0 + 1e-4)).abs() < 1e-12);
        assert_eq!(rep.setup_op_applications, 2 * 2);

        let d = Diagonal(vec![1.0, 2.0, 4.0]);
        let rule = StepRule::default();
        let est = power_iteration(&d, rule.power_iters, rule.power_tol).unwrap();
        assert!((est.lambda_max - 4.0).abs() <= 4.0 * 1e-3);
        assert!(est.lambda_max <= 4.0 + 1e-12);
    }

    #[test]
    fn zero_operator_errors() {
        let z = Diagonal(vec![0.0; 4]);
        assert!(matches!(power_iteration_gamma(&z, &StepRule::default()), Err(Error::ZeroOperator(_))));
    }

    #[test]
    fn recommended_values() {
        assert_eq!(recommended_gamma(ModelKind::Sense, None, BoundKind::Safe).unwrap().gamma, 1.0);
        let rep = SpiritBoundReport {
            c_paper: 1.0,
            c_safe: 2.0,
            z: 0,
            per_offset_norms: vec![1.0],
        };
        let s = recommended_gamma(ModelKind::Spirit, Some(&rep), BoundKind::Safe).unwrap();
        assert_eq!(s.gamma, 0.5);
        assert_eq!(s.setup_op_applications, 0);
        assert_eq!(recommended_gamma(ModelKind::Spirit, Some(&rep), BoundKind::Paper).unwrap().gamma, 1.0);
        assert!(recommended_gamma(ModelKind::Spirit, None, BoundKind::Safe).is_err());
    }

    /// f(x) = L/2 x², plain gradient candidate.
    fn quadratic_case(l: f64, gamma: f64) -> BacktrackOutcome {
        let x = 3.0;
        let point = scalar(x);
        let grad = scalar(l * x);
        backtracking_step(gamma, 2.0, gamma, 0.5 * l * x * x, &grad, &point, |g| {
            let p = x - g * l * x;
            Ok((scalar(p), 0.5 * l * p * p))
        })
        .unwrap()
    }

    #[test]
    fn backtracking_on_quadratic() {
        for l in [0.5, 1.0, 3.0] {
            let ok = quadratic_case(l, 1.0 / l);
            assert_eq!(ok.trials, 1);
            assert_eq!(ok.gamma, 1.0 / l);
            let shrunk = quadratic_case(l, 2.0 / l);
            assert_eq!(shrunk.trials, 2);
            assert!((shrunk.gamma - 1.0 / l).abs() < 1e-15);
        }
    }

    #[test]
    fn backtracking_underflow() {
        let point = scalar(1.0);
        let grad = scalar(0.0);
        let err = backtracking_step(1.0, 2.0, 1.0, 0.0, &grad, &point, |_| Ok((scalar(1.0), 1.0))).unwrap_err();
        assert!(matches!(err, Error::StepUnderflow { .. }));
        assert!(backtracking_step(1.0, 1.0, 1.0, 0.0, &grad, &point, |_| Ok((scalar(1.0), 0.0))).is_err());
    }
}
