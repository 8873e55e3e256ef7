//! Treatment-assignment laws and the exposure probabilities they induce.

use std::fmt;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exposure::{classify_slice, ExposureCondition};
use crate::graph::Graph;
use crate::rng::StreamKey;

/// Per-node probability bounds under a degree-tilted design.
pub const TILT_CLAMP: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Design {
    /// Independent `Z_i ~ Bernoulli(alpha)`.
    Bernoulli { alpha: f64 },
    /// Uniform over all subsets of exactly `n_treated` nodes.
    CompleteCount { n_treated: usize },
    /// Independent draws with `p_i = alpha + gamma * standardized degree`,
    /// clamped and re-centered on `alpha`.
    DegreeTilted { alpha: f64, gamma: f64 },
}

impl Design {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Bernoulli { .. } => "bernoulli",
            Self::CompleteCount { .. } => "complete",
            Self::DegreeTilted { .. } => "tilted",
        }
    }

    /// Coordinates are independent, so exposure probabilities factor.
    pub fn is_independent(&self) -> bool {
        !matches!(self, Self::CompleteCount { .. })
    }

    pub fn validate(&self, g: &Graph) -> Result<()> {
        match *self {
            Self::Bernoulli { alpha } | Self::DegreeTilted { alpha, .. }
                if !(alpha > 0.0 && alpha < 1.0) =>
            {
                Err(Error::InvalidDesign(format!(
                    "alpha {alpha} outside (0, 1)"
                )))
            }
            Self::DegreeTilted { gamma, .. } if !gamma.is_finite() => {
                Err(Error::InvalidDesign(format!("gamma {gamma} is not finite")))
            }
            Self::CompleteCount { n_treated } if n_treated == 0 || n_treated >= g.n() => Err(
                Error::InvalidDesign(format!("n_treated {n_treated} outside (0, {})", g.n())),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bernoulli { alpha } => write!(f, "bernoulli(alpha={alpha})"),
            Self::CompleteCount { n_treated } => write!(f, "complete(n_treated={n_treated})"),
            Self::DegreeTilted { alpha, gamma } => {
                write!(f, "tilted(alpha={alpha}, gamma={gamma})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AssignmentVector(Vec<bool>);

impl AssignmentVector {
    pub fn new(z: Vec<bool>) -> Self {
        Self(z)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn treated_count(&self) -> usize {
        self.0.iter().filter(|&&t| t).count()
    }

    pub fn into_inner(self) -> Vec<bool> {
        self.0
    }
}

impl From<Vec<bool>> for AssignmentVector {
    fn from(z: Vec<bool>) -> Self {
        Self(z)
    }
}

/// `P(Z_i = 1)` for every node.
pub fn inclusion_probabilities(d: &Design, g: &Graph) -> Result<Vec<f64>> {
    d.validate(g)?;
    let n = g.n();
    match *d {
        Design::Bernoulli { alpha } => Ok(vec![alpha; n]),
        Design::CompleteCount { n_treated } => Ok(vec![n_treated as f64 / n as f64; n]),
        Design::DegreeTilted { alpha, gamma } => tilted_probabilities(g, alpha, gamma),
    }
}

fn tilted_probabilities(g: &Graph, alpha: f64, gamma: f64) -> Result<Vec<f64>> {
    let n = g.n();
    if gamma == 0.0 {
        return Ok(vec![alpha; n]);
    }
    let degrees: Vec<f64> = g.degrees().into_iter().map(|k| k as f64).collect();
    let mean = degrees.iter().sum::<f64>() / n as f64;
    let var = degrees.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return Err(Error::TiltImpossible);
    }
    let sd = var.sqrt();
    let (lo, hi) = TILT_CLAMP;
    let mut p: Vec<f64> = degrees
        .iter()
        .map(|k| (alpha + gamma * (k - mean) / sd).clamp(lo, hi))
        .collect();
    // one additive re-centering pass, then clamp again
    let shift = alpha - p.iter().sum::<f64>() / n as f64;
    for pi in &mut p {
        *pi = (*pi + shift).clamp(lo, hi);
    }
    Ok(p)
}

pub fn draw_assignment(d: &Design, g: &Graph, key: &StreamKey) -> Result<AssignmentVector> {
    let sampler = AssignmentSampler::new(d, g)?;
    Ok(sampler.draw(key))
}

/// Pre-validated design with its per-node probabilities, for repeated draws.
#[derive(Debug, Clone)]
pub struct AssignmentSampler {
    design: Design,
    n: usize,
    probabilities: Vec<f64>,
}

impl AssignmentSampler {
    pub fn new(d: &Design, g: &Graph) -> Result<Self> {
        Ok(Self {
            design: *d,
            n: g.n(),
            probabilities: inclusion_probabilities(d, g)?,
        })
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn draw(&self, key: &StreamKey) -> AssignmentVector {
        AssignmentVector(self.draw_bits(key))
    }

    pub(crate) fn draw_bits(&self, key: &StreamKey) -> Vec<bool> {
        let mut rng = key.derive();
        match self.design {
            Design::CompleteCount { n_treated } => {
                let mut z = vec![false; self.n];
                for i in index::sample(&mut rng, self.n, n_treated) {
                    z[i] = true;
                }
                z
            }
            Design::Bernoulli { .. } | Design::DegreeTilted { .. } => self
                .probabilities
                .iter()
                .map(|&p| rng.random::<f64>() < p)
                .collect(),
        }
    }
}

/// Per-node exposure-condition probabilities, columns `d1, d00, d01`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureProbs {
    rows: Vec<[f64; 3]>,
}

impl ExposureProbs {
    pub fn from_rows(rows: Vec<[f64; 3]>) -> Self {
        Self { rows }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[[f64; 3]] {
        &self.rows
    }

    pub fn get(&self, i: usize, condition: ExposureCondition) -> f64 {
        self.rows[i][condition.index()]
    }

    pub fn column(&self, condition: ExposureCondition) -> Vec<f64> {
        self.rows.iter().map(|r| r[condition.index()]).collect()
    }
}

pub fn exposure_probs_closed_form(d: &Design, g: &Graph) -> Result<ExposureProbs> {
    if !d.is_independent() {
        return Err(Error::UnsupportedDesign(d.kind()));
    }
    let p = inclusion_probabilities(d, g)?;
    Ok(closed_form_from_probabilities(g, &p))
}

pub(crate) fn closed_form_from_probabilities(g: &Graph, p: &[f64]) -> ExposureProbs {
    let rows = (0..g.n())
        .map(|i| {
            let none_treated: f64 = g.neighbors(i).iter().map(|&j| 1.0 - p[j]).product();
            let untreated = 1.0 - p[i];
            [
                p[i],
                untreated * none_treated,
                untreated * (1.0 - none_treated),
            ]
        })
        .collect();
    ExposureProbs { rows }
}

/// Empirical condition frequencies over `replications` draws. Replication
/// `r` uses stream `key/rep/r`, so the result does not depend on the
/// number of worker threads.
pub fn exposure_probs_monte_carlo(
    d: &Design,
    g: &Graph,
    replications: usize,
    key: &StreamKey,
) -> Result<ExposureProbs> {
    if replications == 0 {
        return Err(Error::InvalidParameter("replications must be >= 1".into()));
    }
    let sampler = AssignmentSampler::new(d, g)?;
    let n = g.n();
    let counts = (0..replications as u64)
        .into_par_iter()
        .fold(
            || vec![[0u64; 3]; n],
            |mut acc, r| {
                let z = sampler.draw_bits(&key.child("rep", r));
                for (i, c) in classify_slice(g, &z).into_iter().enumerate() {
                    acc[i][c.index()] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![[0u64; 3]; n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    for k in 0..3 {
                        x[k] += y[k];
                    }
                }
                a
            },
        );
    let total = replications as f64;
    Ok(ExposureProbs {
        rows: counts
            .into_iter()
            .map(|c| c.map(|v| v as f64 / total))
            .collect(),
    })
}

/// Pearson correlation between node degree and the assignment indicator.
pub fn realized_degree_correlation(z: &AssignmentVector, g: &Graph) -> Result<f64> {
    if z.len() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            actual: z.len(),
        });
    }
    let k: Vec<f64> = g.degrees().into_iter().map(|d| d as f64).collect();
    let t: Vec<f64> = z
        .as_slice()
        .iter()
        .map(|&b| f64::from(u8::from(b)))
        .collect();
    pearson(&k, &t)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return Err(Error::UndefinedCorrelation("degree"));
    }
    if syy <= 0.0 {
        return Err(Error::UndefinedCorrelation("assignment"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn key(seed: u64) -> StreamKey {
        StreamKey::new(seed)
    }

    #[test]
    fn bernoulli_mean_treated_count() {
        let g = Graph::empty(10);
        let d = Design::Bernoulli { alpha: 0.5 };
        let draws = 10_000;
        let total: usize = (0..draws)
            .map(|s| draw_assignment(&d, &g, &key(s)).unwrap().treated_count())
            .sum();
        let mean = total as f64 / draws as f64;
        let se = (10.0_f64 * 0.25 / draws as f64).sqrt();
        assert!((mean - 5.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn zero_tilt_reproduces_bernoulli_draws() {
        let g = Graph::star(7);
        for s in 0..50 {
            let a = draw_assignment(&Design::Bernoulli { alpha: 0.3 }, &g, &key(s)).unwrap();
            let b = draw_assignment(
                &Design::DegreeTilted {
                    alpha: 0.3,
                    gamma: 0.0,
                },
                &g,
                &key(s),
            )
            .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn tilt_favors_star_center() {
        // degrees (9, 1 x 9): mean 1.8, sd 2.4, standardized (3, -1/3)
        let g = Graph::star(9);
        let p = inclusion_probabilities(
            &Design::DegreeTilted {
                alpha: 0.15,
                gamma: 0.2,
            },
            &g,
        )
        .unwrap();
        assert_abs_diff_eq!(p[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.15 - 0.2 / 3.0, epsilon = 1e-12);
        assert!(p[0] > p[1]);
    }

    #[test]
    fn tilt_on_path_raises_middle() {
        // degrees (1, 2, 1): standardized (-1/sqrt2, sqrt2, -1/sqrt2)
        let p = inclusion_probabilities(
            &Design::DegreeTilted {
                alpha: 0.5,
                gamma: 0.1,
            },
            &Graph::path(3),
        )
        .unwrap();
        let s = std::f64::consts::SQRT_2;
        assert_abs_diff_eq!(p[1], 0.5 + 0.1 * s, epsilon = 1e-12);
        assert_abs_diff_eq!(p[0], 0.5 - 0.1 / s, epsilon = 1e-12);
        assert_eq!(p[0], p[2]);
        assert!(p[1] > p[0]);
    }

    #[test]
    fn tilt_clamps_and_recenters() {
        let g = Graph::star(20);
        let p = inclusion_probabilities(
            &Design::DegreeTilted {
                alpha: 0.1,
                gamma: 5.0,
            },
            &g,
        )
        .unwrap();
        assert!(p.iter().all(|&x| (0.01..=0.99).contains(&x)));
    }

    #[test]
    fn tilt_on_regular_graph_is_impossible() {
        let d = Design::DegreeTilted {
            alpha: 0.2,
            gamma: 0.1,
        };
        assert!(matches!(
            inclusion_probabilities(&d, &Graph::cycle(6)),
            Err(Error::TiltImpossible)
        ));
    }

    #[test]
    fn inclusion_probabilities_simple_designs() {
        let g = Graph::path(4);
        assert_eq!(
            inclusion_probabilities(&Design::Bernoulli { alpha: 0.3 }, &g).unwrap(),
            vec![0.3; 4]
        );
        assert_eq!(
            inclusion_probabilities(&Design::CompleteCount { n_treated: 2 }, &g).unwrap(),
            vec![0.5; 4]
        );
    }

    #[test]
    fn complete_count_draws_exact_size() {
        let g = Graph::path(9);
        let d = Design::CompleteCount { n_treated: 4 };
        for s in 0..100 {
            assert_eq!(draw_assignment(&d, &g, &key(s)).unwrap().treated_count(), 4);
        }
    }

    #[test]
    fn invalid_designs_rejected() {
        let g = Graph::path(4);
        for d in [
            Design::Bernoulli { alpha: 0.0 },
            Design::Bernoulli { alpha: 1.0 },
            Design::CompleteCount { n_treated: 0 },
            Design::CompleteCount { n_treated: 4 },
            Design::DegreeTilted {
                alpha: 0.5,
                gamma: f64::NAN,
            },
        ] {
            assert!(
                matches!(d.validate(&g), Err(Error::InvalidDesign(_))),
                "{d}"
            );
        }
    }

    #[test]
    fn closed_form_path_middle_node() {
        let pi =
            exposure_probs_closed_form(&Design::Bernoulli { alpha: 0.5 }, &Graph::path(3)).unwrap();
        assert_eq!(pi.rows()[1], [0.5, 0.125, 0.375]);
        assert_eq!(pi.rows()[0], [0.5, 0.25, 0.25]);
    }

    #[test]
    fn closed_form_isolated_node() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let pi = exposure_probs_closed_form(&Design::Bernoulli { alpha: 0.2 }, &g).unwrap();
        assert_eq!(pi.get(2, ExposureCondition::D01), 0.0);
        assert_abs_diff_eq!(pi.get(2, ExposureCondition::D00), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_small_alpha_limit() {
        let pi = exposure_probs_closed_form(&Design::Bernoulli { alpha: 1e-12 }, &Graph::star(6))
            .unwrap();
        for row in pi.rows() {
            assert_abs_diff_eq!(row[1], 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn closed_form_rejects_complete_count() {
        assert!(matches!(
            exposure_probs_closed_form(&Design::CompleteCount { n_treated: 1 }, &Graph::path(3)),
            Err(Error::UnsupportedDesign("complete"))
        ));
    }

    #[test]
    fn monte_carlo_single_replication_is_one_hot() {
        let g = Graph::cycle(7);
        let pi =
            exposure_probs_monte_carlo(&Design::Bernoulli { alpha: 0.4 }, &g, 1, &key(3)).unwrap();
        for row in pi.rows() {
            let mut sorted = *row;
            sorted.sort_by(f64::total_cmp);
            assert_eq!(sorted, [0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn monte_carlo_complete_count_on_path() {
        // treat 0 -> d1, treat 1 -> d01, treat 2 -> d00 for node 0
        let pi = exposure_probs_monte_carlo(
            &Design::CompleteCount { n_treated: 1 },
            &Graph::path(3),
            60_000,
            &key(9),
        )
        .unwrap();
        let se = (1.0_f64 / 3.0 * 2.0 / 3.0 / 60_000.0).sqrt();
        for &v in &pi.rows()[0] {
            assert!((v - 1.0 / 3.0).abs() < 3.0 * se, "{v}");
        }
    }

    #[test]
    fn monte_carlo_matches_closed_form_on_path() {
        let g = Graph::path(3);
        let d = Design::Bernoulli { alpha: 0.5 };
        let reps = 100_000;
        let mc = exposure_probs_monte_carlo(&d, &g, reps, &key(1)).unwrap();
        let exact = [0.5, 0.125, 0.375];
        for (v, p) in mc.rows()[1].iter().zip(exact) {
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((v - p).abs() < 3.0 * se, "{v} vs {p}");
        }
    }

    #[test]
    fn star_center_only_has_unit_correlation() {
        let z = AssignmentVector::new(vec![true, false, false, false, false]);
        let r = realized_degree_correlation(&z, &Graph::star(4)).unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn correlation_undefined_cases() {
        let all = AssignmentVector::new(vec![true; 5]);
        assert!(matches!(
            realized_degree_correlation(&all, &Graph::star(4)),
            Err(Error::UndefinedCorrelation("assignment"))
        ));
        let z = AssignmentVector::new(vec![true, false, false, false, false, false]);
        assert!(matches!(
            realized_degree_correlation(&z, &Graph::cycle(6)),
            Err(Error::UndefinedCorrelation("degree"))
        ));
    }
}
