//! Baseline responses and treatment-effect models.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::Rng;

use crate::error::{Error, Result};
use crate::propagation::InfectionState;
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EffectKind {
    Multiplicative,
    Additive,
}

impl EffectKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Multiplicative => "multiplicative",
            Self::Additive => "additive",
        }
    }

    /// The lambda at which exposure changes nothing.
    pub fn no_effect_lambda(self) -> f64 {
        match self {
            Self::Multiplicative => 1.0,
            Self::Additive => 0.0,
        }
    }
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EffectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiplicative" => Ok(Self::Multiplicative),
            "additive" => Ok(Self::Additive),
            other => Err(Error::InvalidParameter(format!(
                "unknown effect kind {other:?} (expected multiplicative or additive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectModel {
    pub kind: EffectKind,
    pub lambda: f64,
}

impl EffectModel {
    pub fn new(kind: EffectKind, lambda: f64) -> Result<Self> {
        let model = Self { kind, lambda };
        model.validate()?;
        Ok(model)
    }

    pub fn multiplicative(lambda: f64) -> Self {
        Self {
            kind: EffectKind::Multiplicative,
            lambda,
        }
    }

    pub fn additive(lambda: f64) -> Self {
        Self {
            kind: EffectKind::Additive,
            lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda {} is not finite",
                self.lambda
            )));
        }
        if self.kind == EffectKind::Multiplicative && self.lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "multiplicative lambda {} must be > 0",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn is_no_effect(&self) -> bool {
        self.lambda == self.kind.no_effect_lambda()
    }

    /// Outcome of an exposed node with baseline `b`.
    pub fn apply(&self, b: f64) -> f64 {
        match self.kind {
            EffectKind::Multiplicative => self.lambda * b,
            EffectKind::Additive => self.lambda + b,
        }
    }
}

impl fmt::Display for EffectModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(lambda={})", self.kind, self.lambda)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeVector {
    pub y: Vec<f64>,
    pub baseline: Vec<f64>,
}

/// I.i.d. uniform baselines on the open interval `(0, 1)`.
pub fn draw_baseline(n: usize, key: &StreamKey) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let mut rng = key.derive();
    Ok((0..n).map(|_| rng.sample(Open01)).collect())
}

/// Exposed nodes receive the effect whether they were treated directly or
/// reached by propagation.
pub fn realize(
    baseline: &[f64],
    final_state: &InfectionState,
    model: &EffectModel,
) -> Result<OutcomeVector> {
    if baseline.len() != final_state.exposed.len() {
        return Err(Error::LengthMismatch {
            expected: final_state.exposed.len(),
            actual: baseline.len(),
        });
    }
    model.validate()?;
    let y = baseline
        .iter()
        .zip(&final_state.exposed)
        .map(|(&b, &e)| if e { model.apply(b) } else { b })
        .collect();
    Ok(OutcomeVector {
        y,
        baseline: baseline.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn state(bits: &[u8]) -> InfectionState {
        InfectionState {
            exposed: bits.iter().map(|&b| b == 1).collect(),
            t: 1,
        }
    }

    #[test]
    fn baseline_support_and_determinism() {
        let key = StreamKey::new(3).child("baseline", 0);
        let a = draw_baseline(1000, &key).unwrap();
        assert!(a.iter().all(|&b| b > 0.0 && b < 1.0));
        assert_eq!(a, draw_baseline(1000, &key).unwrap());
        assert!(draw_baseline(0, &key).is_err());
    }

    #[test]
    fn baseline_moments() {
        let n = 1_000_000;
        let b = draw_baseline(n, &StreamKey::new(99)).unwrap();
        let mean = b.iter().sum::<f64>() / n as f64;
        let var = b.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        // Var(U) = 1/12; Var(sample variance) = (mu4 - sigma^4)/n = (1/80 - 1/144)/n
        let mean_se = (1.0 / 12.0 / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * mean_se, "mean {mean}");
        let sd = var.sqrt();
        let var_se = ((1.0 / 80.0 - 1.0 / 144.0) / n as f64).sqrt();
        let sd_se = var_se / (2.0 * (1.0_f64 / 12.0).sqrt());
        assert!(
            (sd - (1.0_f64 / 12.0).sqrt()).abs() < 3.0 * sd_se,
            "sd {sd}"
        );
    }

    #[test]
    fn additive_effect_on_exposed_node() {
        let out = realize(&[0.5, 0.5], &state(&[1, 0]), &EffectModel::additive(0.26)).unwrap();
        assert_abs_diff_eq!(out.y[0], 0.76, epsilon = 1e-15);
        assert_eq!(out.y[1], 0.5);
    }

    #[test]
    fn no_effect_points_leave_baseline() {
        let b = [0.1, 0.4, 0.9];
        for model in [EffectModel::multiplicative(1.0), EffectModel::additive(0.0)] {
            assert!(model.is_no_effect());
            let out = realize(&b, &state(&[1, 1, 0]), &model).unwrap();
            assert_eq!(out.y, b.to_vec());
        }
    }

    #[test]
    fn effect_sizes_relative_to_uniform_sd() {
        let sd = (1.0_f64 / 12.0).sqrt();
        assert_abs_diff_eq!(0.26 / sd, 0.900_666, epsilon = 1e-6);
        assert_abs_diff_eq!(0.63 / sd, 2.182_384, epsilon = 1e-6);
    }

    #[test]
    fn invalid_models() {
        assert!(EffectModel::new(EffectKind::Multiplicative, 0.0).is_err());
        assert!(EffectModel::new(EffectKind::Multiplicative, -0.5).is_err());
        assert!(EffectModel::new(EffectKind::Additive, f64::NAN).is_err());
        assert!(EffectModel::new(EffectKind::Additive, -0.3).is_ok());
        assert!(realize(&[0.5], &state(&[1, 0]), &EffectModel::additive(0.1)).is_err());
    }
}
