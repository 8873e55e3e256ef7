//! Design-based estimation of exposure contrasts.
//!
//! Horvitz-Thompson and Hajek means weight each unit by the inverse of its
//! probability of landing in its realized condition. Variances use the
//! conservative Horvitz-Thompson form: exact pairwise terms where the joint
//! probability is positive, and a Young's-inequality bound where it is zero.
//! All means and variances are on the per-node scale (totals divided by n).

use std::fmt;
use std::str::FromStr;

use statrs::function::erf::erfc;

use crate::design::ExposureProbs;
use crate::error::{Error, Result};
use crate::exposure::{condition_counts, ExposureCondition};
use crate::joint::ContrastJoint;

/// Lower bound applied to every variance estimate.
pub const VARIANCE_FLOOR: f64 = 1e-12;
/// Significance level of the Wald test.
pub const DEFAULT_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExposureContrast {
    pub high: ExposureCondition,
    pub low: ExposureCondition,
}

impl ExposureContrast {
    pub fn new(high: ExposureCondition, low: ExposureCondition) -> Result<Self> {
        if high == low {
            return Err(Error::InvalidParameter(
                "contrast needs two different conditions".into(),
            ));
        }
        Ok(Self { high, low })
    }
}

impl Default for ExposureContrast {
    /// Indirectly exposed controls against isolated controls.
    fn default() -> Self {
        Self {
            high: ExposureCondition::D01,
            low: ExposureCondition::D00,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    HorvitzThompson,
    Hajek,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Self::HorvitzThompson => "ht",
            Self::Hajek => "hajek",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ht" => Ok(Self::HorvitzThompson),
            "hajek" => Ok(Self::Hajek),
            other => Err(Error::InvalidParameter(format!(
                "unknown estimator {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimator: Estimator,
    pub tau_hat: f64,
    pub variance_hat: f64,
    pub z_score: f64,
    pub p_value: f64,
    pub n_d1: usize,
    pub n_d01: usize,
    pub n_d00: usize,
}

impl EstimateReport {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

fn check_lengths(y: &[f64], conditions: &[ExposureCondition], n: usize) -> Result<()> {
    for len in [y.len(), conditions.len()] {
        if len != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    Ok(())
}

/// `(1/n) * sum over condition k of y_i / pi_i(k)`; zero when nobody is in `k`.
pub fn ht_mean(
    y: &[f64],
    conditions: &[ExposureCondition],
    pi: &ExposureProbs,
    k: ExposureCondition,
) -> Result<f64> {
    check_lengths(y, conditions, pi.n())?;
    let mut total = 0.0;
    for (i, (&yi, &c)) in y.iter().zip(conditions).enumerate() {
        if c != k {
            continue;
        }
        let p = pi.get(i, k);
        if p <= 0.0 {
            return Err(Error::Positivity {
                node: i,
                condition: k,
            });
        }
        total += yi / p;
    }
    Ok(total / y.len() as f64)
}

pub fn ht_tau(
    y: &[f64],
    conditions: &[ExposureCondition],
    pi: &ExposureProbs,
    contrast: ExposureContrast,
) -> Result<f64> {
    Ok(ht_mean(y, conditions, pi, contrast.high)? - ht_mean(y, conditions, pi, contrast.low)?)
}

/// Ratio-form mean `sum(y/pi) / sum(1/pi)` over condition `k`.
pub fn hajek_mean(
    y: &[f64],
    conditions: &[ExposureCondition],
    pi: &ExposureProbs,
    k: ExposureCondition,
) -> Result<f64> {
    check_lengths(y, conditions, pi.n())?;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (&yi, &c)) in y.iter().zip(conditions).enumerate() {
        if c != k {
            continue;
        }
        let p = pi.get(i, k);
        if p <= 0.0 {
            return Err(Error::Positivity {
                node: i,
                condition: k,
            });
        }
        num += yi / p;
        den += 1.0 / p;
    }
    if den == 0.0 {
        return Err(Error::EmptyCondition(k));
    }
    Ok(num / den)
}

pub fn hajek_tau(
    y: &[f64],
    conditions: &[ExposureCondition],
    pi: &ExposureProbs,
    contrast: ExposureContrast,
) -> Result<f64> {
    Ok(
        hajek_mean(y, conditions, pi, contrast.high)?
            - hajek_mean(y, conditions, pi, contrast.low)?,
    )
}

/// Conservative variance of the Horvitz-Thompson contrast, floored at
/// [`VARIANCE_FLOOR`].
pub fn ht_variance(
    y: &[f64],
    conditions: &[ExposureCondition],
    joint: &ContrastJoint,
) -> Result<f64> {
    Ok(contrast_variance(y, conditions, joint)?.max(VARIANCE_FLOOR))
}

/// Linearized variance of the Hajek contrast: the Horvitz-Thompson form
/// applied to residuals from each condition's Hajek mean, each scaled by
/// `n / N_k` where `N_k` is the realized sum of inverse probabilities in
/// condition `k`.
pub fn hajek_variance(
    y: &[f64],
    conditions: &[ExposureCondition],
    joint: &ContrastJoint,
) -> Result<f64> {
    let marginals = marginals_of(joint);
    let mu_high = hajek_mean(y, conditions, &marginals, joint.high)?;
    let mu_low = hajek_mean(y, conditions, &marginals, joint.low)?;
    let weight_total = |k: ExposureCondition| -> f64 {
        conditions
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == k)
            .map(|(i, _)| 1.0 / marginals.get(i, k))
            .sum()
    };
    let nf = y.len() as f64;
    let scale_high = nf / weight_total(joint.high);
    let scale_low = nf / weight_total(joint.low);
    let residuals: Vec<f64> = y
        .iter()
        .zip(conditions)
        .map(|(&yi, &c)| {
            if c == joint.high {
                (yi - mu_high) * scale_high
            } else if c == joint.low {
                (yi - mu_low) * scale_low
            } else {
                0.0
            }
        })
        .collect();
    Ok(contrast_variance(&residuals, conditions, joint)?.max(VARIANCE_FLOOR))
}

fn marginals_of(joint: &ContrastJoint) -> ExposureProbs {
    let mut rows = vec![[0.0; 3]; joint.n()];
    for (i, row) in rows.iter_mut().enumerate() {
        row[joint.high.index()] = joint.pi_high[i];
        row[joint.low.index()] = joint.pi_low[i];
    }
    ExposureProbs::from_rows(rows)
}

/// Unfloored variance estimate of `mu(high) - mu(low)` with values `v`.
///
/// Units whose marginal probability for a condition is zero lie outside
/// that condition's support and contribute no pairwise terms.
pub(crate) fn contrast_variance(
    v: &[f64],
    conditions: &[ExposureCondition],
    joint: &ContrastJoint,
) -> Result<f64> {
    let n = joint.n();
    check_lengths(v, conditions, n)?;
    let (high, low) = (joint.high, joint.low);
    for (i, &c) in conditions.iter().enumerate() {
        let p = if c == high {
            joint.pi_high[i]
        } else if c == low {
            joint.pi_low[i]
        } else {
            continue;
        };
        if p <= 0.0 {
            return Err(Error::Positivity {
                node: i,
                condition: c,
            });
        }
    }
    let weighted = |i: usize, pi: &[f64]| v[i] / pi[i];

    let single = |k: ExposureCondition, pi: &[f64], rows: &[Vec<(usize, f64)>]| -> f64 {
        let mut total = 0.0;
        for i in (0..n).filter(|&i| conditions[i] == k) {
            let a = weighted(i, pi);
            total += (1.0 - pi[i]) * a * a;
            for &(j, pij) in &rows[i] {
                if pi[j] <= 0.0 {
                    continue;
                }
                if pij == 0.0 {
                    // ordered pairs (i, j) and (j, i) each contribute half
                    total += v[i] * v[i] / pi[i];
                } else if conditions[j] == k {
                    total += (pij - pi[i] * pi[j]) / pij * a * weighted(j, pi);
                }
            }
        }
        total
    };
    let var_high = single(high, &joint.pi_high, &joint.high_high);
    let var_low = single(low, &joint.pi_low, &joint.low_low);

    let mut cov = 0.0;
    for i in (0..n).filter(|&i| conditions[i] == high) {
        let a = weighted(i, &joint.pi_high);
        for &(j, pij) in &joint.high_low[i] {
            if joint.pi_low[j] <= 0.0 {
                continue;
            }
            if pij == 0.0 {
                cov -= v[i] * v[i] / (2.0 * joint.pi_high[i]);
            } else if conditions[j] == low {
                cov += (pij - joint.pi_high[i] * joint.pi_low[j]) / pij
                    * a
                    * weighted(j, &joint.pi_low);
            }
        }
    }
    for j in (0..n).filter(|&j| conditions[j] == low) {
        for &(i, pij) in &joint.low_high[j] {
            if pij == 0.0 && joint.pi_high[i] > 0.0 {
                cov -= v[j] * v[j] / (2.0 * joint.pi_low[j]);
            }
        }
    }
    let nf = n as f64;
    Ok((var_high + var_low - 2.0 * cov) / (nf * nf))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldOutcome {
    pub z_score: f64,
    pub p_value: f64,
    pub rejected: bool,
}

/// Two-sided normal-approximation test of a zero contrast.
pub fn wald_test(tau_hat: f64, variance_hat: f64, level: f64) -> Result<WaldOutcome> {
    if !(variance_hat > 0.0) || !variance_hat.is_finite() {
        return Err(Error::DegenerateVariance(variance_hat));
    }
    let z_score = tau_hat / variance_hat.sqrt();
    let p_value = erfc(z_score.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(WaldOutcome {
        z_score,
        p_value,
        rejected: p_value < level,
    })
}

/// Point estimate, variance and Wald test for one estimator.
pub fn estimate(
    estimator: Estimator,
    y: &[f64],
    conditions: &[ExposureCondition],
    joint: &ContrastJoint,
) -> Result<EstimateReport> {
    let contrast = ExposureContrast {
        high: joint.high,
        low: joint.low,
    };
    let marginals = marginals_of(joint);
    let (tau_hat, variance_hat) = match estimator {
        Estimator::HorvitzThompson => (
            ht_tau(y, conditions, &marginals, contrast)?,
            ht_variance(y, conditions, joint)?,
        ),
        Estimator::Hajek => (
            hajek_tau(y, conditions, &marginals, contrast)?,
            hajek_variance(y, conditions, joint)?,
        ),
    };
    let wald = wald_test(tau_hat, variance_hat, DEFAULT_LEVEL)?;
    let (n_d1, n_d01, n_d00) = condition_counts(conditions);
    Ok(EstimateReport {
        estimator,
        tau_hat,
        variance_hat,
        z_score: wald.z_score,
        p_value: wald.p_value,
        n_d1,
        n_d01,
        n_d00,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{exposure_probs_closed_form, Design};
    use crate::graph::Graph;
    use crate::joint::{ClosedFormJoint, TabulatedJoint};
    use approx::assert_abs_diff_eq;
    use ExposureCondition::*;

    fn path_setup() -> (Vec<ExposureCondition>, ExposureProbs) {
        let g = Graph::path(3);
        let pi = exposure_probs_closed_form(&Design::Bernoulli { alpha: 0.5 }, &g).unwrap();
        (vec![D1, D01, D00], pi)
    }

    #[test]
    fn ht_mean_hand_evaluation() {
        let (c, pi) = path_setup();
        let y = [0.9, 0.4, 0.7];
        assert_abs_diff_eq!(
            ht_mean(&y, &c, &pi, D01).unwrap(),
            0.4 / 0.375 / 3.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            ht_mean(&y, &c, &pi, D01).unwrap(),
            0.355_555_555_6,
            epsilon = 1e-9
        );
        // node 2 has degree 1: pi(d00) = 0.5 * 0.5 = 0.25
        assert_abs_diff_eq!(
            ht_mean(&y, &c, &pi, D00).unwrap(),
            0.933_333_333_3,
            epsilon = 1e-9
        );
        let tau = ht_tau(&y, &c, &pi, ExposureContrast::default()).unwrap();
        assert_abs_diff_eq!(tau, -0.577_777_777_8, epsilon = 1e-9);
    }

    #[test]
    fn ht_mean_empty_condition_is_zero() {
        let (_, pi) = path_setup();
        let c = [D1, D1, D1];
        assert_eq!(ht_mean(&[0.1, 0.2, 0.3], &c, &pi, D00).unwrap(), 0.0);
    }

    #[test]
    fn ht_mean_with_unit_probabilities_is_sample_mean() {
        let pi = ExposureProbs::from_rows(vec![[0.0, 1.0, 0.0]; 4]);
        let y = [0.1, 0.2, 0.6, 0.9];
        assert_abs_diff_eq!(
            ht_mean(&y, &[D00; 4], &pi, D00).unwrap(),
            0.45,
            epsilon = 1e-15
        );
    }

    #[test]
    fn ht_mean_positivity_violation() {
        let pi = ExposureProbs::from_rows(vec![[0.5, 0.5, 0.0]; 2]);
        assert!(matches!(
            ht_mean(&[1.0, 1.0], &[D01, D00], &pi, D01),
            Err(Error::Positivity {
                node: 0,
                condition: D01
            })
        ));
    }

    #[test]
    fn ht_tau_symmetric_conditions_cancel() {
        let pi = ExposureProbs::from_rows(vec![[0.2, 0.4, 0.4]; 4]);
        let y = [0.3, 0.3, 0.8, 0.8];
        let c = [D01, D00, D01, D00];
        assert_eq!(
            ht_tau(&y, &c, &pi, ExposureContrast::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn hajek_properties() {
        let pi = ExposureProbs::from_rows(vec![
            [0.1, 0.2, 0.7],
            [0.1, 0.6, 0.3],
            [0.1, 0.3, 0.6],
            [0.1, 0.8, 0.1],
        ]);
        let c = [D01, D00, D01, D00];
        // single node: its own outcome
        assert_eq!(
            hajek_mean(&[0.4, 0.9, 0.1, 0.2], &[D01, D00, D1, D1], &pi, D01).unwrap(),
            0.4
        );
        // constant outcome: the constant
        assert_abs_diff_eq!(
            hajek_mean(&[0.7; 4], &c, &pi, D00).unwrap(),
            0.7,
            epsilon = 1e-15
        );
        // equal probabilities: plain mean
        let flat = ExposureProbs::from_rows(vec![[0.2, 0.4, 0.4]; 4]);
        assert_abs_diff_eq!(
            hajek_mean(&[0.1, 0.2, 0.5, 0.6], &c, &flat, D01).unwrap(),
            0.3,
            epsilon = 1e-15
        );
        assert!(matches!(
            hajek_mean(&[0.1; 4], &[D1; 4], &pi, D00),
            Err(Error::EmptyCondition(D00))
        ));
    }

    #[test]
    fn hajek_is_scale_invariant_and_ht_is_not() {
        let rows = vec![[0.1, 0.2, 0.7], [0.1, 0.6, 0.3], [0.1, 0.3, 0.6]];
        let scaled: Vec<[f64; 3]> = rows.iter().map(|r| [r[0], r[1], r[2] * 0.5]).collect();
        let (a, b) = (
            ExposureProbs::from_rows(rows),
            ExposureProbs::from_rows(scaled),
        );
        let y = [0.3, 0.5, 0.9];
        let c = [D01, D00, D01];
        assert_abs_diff_eq!(
            hajek_mean(&y, &c, &a, D01).unwrap(),
            hajek_mean(&y, &c, &b, D01).unwrap(),
            epsilon = 1e-15
        );
        assert!(
            (ht_mean(&y, &c, &a, D01).unwrap() - ht_mean(&y, &c, &b, D01).unwrap()).abs() > 0.1
        );
    }

    #[test]
    fn deterministic_design_has_zero_variance() {
        // pi = 1 for the realized condition of every node
        let c = vec![D01, D00, D01, D00];
        let tab = TabulatedJoint::from_weighted(
            4,
            &[(D01, D01), (D00, D00), (D01, D00)],
            [(c.clone(), 1.0)],
        );
        let joint = ContrastJoint::new(&tab, D01, D00).unwrap();
        let y = [0.2, 0.4, 0.6, 0.8];
        assert_eq!(contrast_variance(&y, &c, &joint).unwrap(), 0.0);
        assert_eq!(ht_variance(&y, &c, &joint).unwrap(), VARIANCE_FLOOR);
    }

    #[test]
    fn single_units_with_zero_cross_probability() {
        // Two nodes; each assignment puts exactly one in d01 and the other in
        // d00 with probability 1/2. Within-condition joints are zero except
        // the diagonal, cross joints are 1/2 off the diagonal.
        let a = vec![D01, D00];
        let b = vec![D00, D01];
        let tab = TabulatedJoint::from_weighted(
            2,
            &[(D01, D01), (D00, D00), (D01, D00)],
            [(a.clone(), 0.5), (b, 0.5)],
        );
        let joint = ContrastJoint::new(&tab, D01, D00).unwrap();
        let y = [0.3, 0.8];
        // direct evaluation, all pi = 1/2:
        // V_high = (1 - .5)(.3/.5)^2 + Young(0,1 zero pair) .3^2/.5
        // V_low  = (1 - .5)(.8/.5)^2 + .8^2/.5
        // Cov    = (pi01 - pi0 pi1)/pi01 * (.3/.5)(.8/.5) - .3^2/(2*.5) - .8^2/(2*.5)
        let v_high = 0.5 * 0.36 + 0.09 / 0.5 * 1.0;
        let v_low = 0.5 * 2.56 + 0.64 / 0.5;
        let cov = (0.5 - 0.25) / 0.5 * 0.6 * 1.6 - 0.09 - 0.64;
        let want = (v_high + v_low - 2.0 * cov) / 4.0;
        assert_abs_diff_eq!(
            contrast_variance(&y, &a, &joint).unwrap(),
            want,
            epsilon = 1e-12
        );
    }

    #[test]
    fn wald_boundaries() {
        let zero = wald_test(0.0, 1.0, 0.05).unwrap();
        assert_eq!(zero.p_value, 1.0);
        assert!(!zero.rejected);
        let edge = wald_test(1.959_964, 1.0, 0.05).unwrap();
        assert_abs_diff_eq!(edge.p_value, 0.05, epsilon = 1e-6);
        let neg = wald_test(-1.959_964, 1.0, 0.05).unwrap();
        assert_eq!(edge.p_value, neg.p_value);
        assert!(wald_test(50.0, 1e-4, 0.05).unwrap().rejected);
        assert!(wald_test(1.0, 0.0, 0.05).is_err());
        assert!(wald_test(1.0, f64::NAN, 0.05).is_err());
    }

    #[test]
    fn estimate_reports_counts() {
        let g = Graph::path(3);
        let d = Design::Bernoulli { alpha: 0.5 };
        let joint = ContrastJoint::new(&ClosedFormJoint::new(&d, &g).unwrap(), D01, D00).unwrap();
        let report = estimate(
            Estimator::HorvitzThompson,
            &[0.9, 0.4, 0.7],
            &[D1, D01, D00],
            &joint,
        )
        .unwrap();
        assert_eq!((report.n_d1, report.n_d01, report.n_d00), (1, 1, 1));
        assert_abs_diff_eq!(report.tau_hat, -0.577_777_777_8, epsilon = 1e-9);
        assert!(report.variance_hat > 0.0);
        assert!((0.0..=1.0).contains(&report.p_value));
    }
}
