//! Randomization inference with the k-sample Anderson-Darling statistic.
//!
//! Outcomes are first mapped back to what they would have been without
//! treatment under a hypothesized effect. Re-drawing assignments from the
//! design and re-classifying nodes then gives the null distribution of the
//! statistic comparing exposure groups.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::design::{AssignmentSampler, AssignmentVector, Design};
use crate::error::{Error, Result};
use crate::exposure::{classify_slice, ExposureCondition};
use crate::graph::Graph;
use crate::outcomes::EffectKind;
use crate::propagation::infection_probability;
use crate::rng::StreamKey;

/// Give up after this many draws per requested permutation.
pub const MAX_ATTEMPTS_PER_PERMUTATION: usize = 10;

const EXCLUDED: u8 = u8::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NullKind {
    /// `d1`, `d01` and `d00` share one outcome distribution.
    AllThree,
    /// `d01` and `d00` share one distribution; treated nodes are ignored.
    ControlsOnly,
}

impl NullKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::AllThree => "all3",
            Self::ControlsOnly => "controls",
        }
    }

    pub fn group_count(self) -> usize {
        match self {
            Self::AllThree => 3,
            Self::ControlsOnly => 2,
        }
    }

    /// Group index of a node in `condition`, or `None` if it is left out.
    pub fn group_of(self, condition: ExposureCondition) -> Option<usize> {
        match (self, condition) {
            (Self::ControlsOnly, ExposureCondition::D1) => None,
            (Self::ControlsOnly, c) => Some(c.index() - 1),
            (Self::AllThree, c) => Some(c.index()),
        }
    }
}

impl fmt::Display for NullKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NullKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all3" => Ok(Self::AllThree),
            "controls" => Ok(Self::ControlsOnly),
            other => Err(Error::InvalidParameter(format!(
                "unknown null kind {other:?}"
            ))),
        }
    }
}

/// Hypothesized effect used to undo treatment before permuting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub effect: EffectKind,
    pub lambda: f64,
    pub temperature: f64,
}

impl Hypothesis {
    /// The sharp null of no effect at all.
    pub fn no_effect() -> Self {
        Self {
            effect: EffectKind::Multiplicative,
            lambda: 1.0,
            temperature: f64::INFINITY,
        }
    }

    pub fn is_no_effect(&self) -> bool {
        self.lambda == self.effect.no_effect_lambda()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "hypothesized lambda {} is not finite",
                self.lambda
            )));
        }
        if self.effect == EffectKind::Multiplicative && self.lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "hypothesized multiplicative lambda {} must be > 0",
                self.lambda
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "hypothesized temperature {} must be > 0",
                self.temperature
            )));
        }
        Ok(())
    }
}

impl Default for Hypothesis {
    fn default() -> Self {
        Self::no_effect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullSpec {
    pub kind: NullKind,
    pub hypothesis: Hypothesis,
}

impl NullSpec {
    pub fn no_effect(kind: NullKind) -> Self {
        Self {
            kind,
            hypothesis: Hypothesis::no_effect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationResult {
    pub observed_stat: f64,
    pub null_stats: Vec<f64>,
    pub p_value: f64,
    /// Observed group sizes, in group order.
    pub group_sizes: Vec<usize>,
    /// Draws rejected because a compared group was empty.
    pub rejected_draws: usize,
}

/// Outcomes with the hypothesized effect removed.
///
/// Treated nodes have the effect inverted exactly. An untreated node with
/// degree `k` and `m` treated neighbors was exposed with probability
/// `q = 1/(1 + exp((2/F)(k - 2m)))`, and its outcome is divided by (or
/// shifted by) the expected effect `1 + (lambda - 1) q` (or `lambda q`).
/// At the no-effect point this is the identity.
pub fn adjust_outcomes(
    y: &[f64],
    z: &AssignmentVector,
    g: &Graph,
    hypothesis: &Hypothesis,
) -> Result<Vec<f64>> {
    hypothesis.validate()?;
    for len in [y.len(), z.len()] {
        if len != g.n() {
            return Err(Error::LengthMismatch {
                expected: g.n(),
                actual: len,
            });
        }
    }
    if hypothesis.is_no_effect() {
        return Ok(y.to_vec());
    }
    let treated = z.as_slice();
    let lambda = hypothesis.lambda;
    let mut out = Vec::with_capacity(y.len());
    for (i, &yi) in y.iter().enumerate() {
        let adjusted = if treated[i] {
            match hypothesis.effect {
                EffectKind::Multiplicative => yi / lambda,
                EffectKind::Additive => yi - lambda,
            }
        } else {
            let neighbors = g.neighbors(i);
            let m = neighbors.iter().filter(|&&j| treated[j]).count();
            let q = infection_probability(neighbors.len(), m, hypothesis.temperature)?;
            match hypothesis.effect {
                EffectKind::Multiplicative => yi / (1.0 + (lambda - 1.0) * q),
                EffectKind::Additive => yi - lambda * q,
            }
        };
        out.push(adjusted);
    }
    Ok(out)
}

/// Sorted view of one outcome vector, reused across many group labelings.
struct RankedSample {
    order: Vec<usize>,
    /// end (exclusive) of each run of equal values in `order`
    run_ends: Vec<usize>,
}

impl RankedSample {
    fn new(values: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
        let mut run_ends = Vec::new();
        for pos in 1..order.len() {
            if values[order[pos]] != values[order[pos - 1]] {
                run_ends.push(pos);
            }
        }
        if !order.is_empty() {
            run_ends.push(order.len());
        }
        Self { order, run_ends }
    }

    /// Midrank statistic for the groups given by `labels`; `None` when some
    /// group is empty.
    fn statistic(&self, labels: &[u8], k: usize, scratch: &mut Scratch) -> Option<f64> {
        scratch.reset(k);
        for &label in labels {
            if label != EXCLUDED {
                scratch.sizes[label as usize] += 1;
            }
        }
        if scratch.sizes.contains(&0) {
            return None;
        }
        let total: usize = scratch.sizes.iter().sum();
        let nf = total as f64;
        let mut below = 0.0;
        let mut start = 0;
        let mut sum = 0.0;
        for &end in &self.run_ends {
            scratch.tally.iter_mut().for_each(|t| *t = 0);
            let mut run = 0usize;
            for &node in &self.order[start..end] {
                let label = labels[node];
                if label != EXCLUDED {
                    scratch.tally[label as usize] += 1;
                    run += 1;
                }
            }
            start = end;
            if run == 0 {
                continue;
            }
            let l = run as f64;
            let b = below + l / 2.0;
            let denom = b * (nf - b) - nf * l / 4.0;
            if denom > 0.0 {
                for g in 0..k {
                    let m = scratch.cum[g] as f64 + scratch.tally[g] as f64 / 2.0;
                    let ng = scratch.sizes[g] as f64;
                    let dev = nf * m - ng * b;
                    sum += l / nf * dev * dev / denom / ng;
                }
            }
            for g in 0..k {
                scratch.cum[g] += scratch.tally[g];
            }
            below += l;
        }
        Some(sum * (nf - 1.0) / nf)
    }
}

#[derive(Default)]
struct Scratch {
    sizes: Vec<usize>,
    tally: Vec<usize>,
    cum: Vec<usize>,
}

impl Scratch {
    fn reset(&mut self, k: usize) {
        for v in [&mut self.sizes, &mut self.tally, &mut self.cum] {
            v.clear();
            v.resize(k, 0);
        }
    }
}

/// k-sample Anderson-Darling statistic with midranks for ties.
///
/// Every group needs at least one observation. The statistic is zero when
/// all values coincide.
pub fn ad_ksample(groups: &[&[f64]]) -> Result<f64> {
    if groups.len() < 2 {
        return Err(Error::InvalidParameter("need at least two groups".into()));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::TooFewObservations);
    }
    if groups.len() >= EXCLUDED as usize {
        return Err(Error::InvalidParameter("too many groups".into()));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        if group.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("NaN in sample".into()));
        }
        values.extend_from_slice(group);
        labels.extend(std::iter::repeat_n(g as u8, group.len()));
    }
    let ranked = RankedSample::new(&values);
    ranked
        .statistic(&labels, groups.len(), &mut Scratch::default())
        .ok_or(Error::TooFewObservations)
}

fn labels_for(conditions: &[ExposureCondition], kind: NullKind, out: &mut Vec<u8>) {
    out.clear();
    out.extend(
        conditions
            .iter()
            .map(|&c| kind.group_of(c).map_or(EXCLUDED, |g| g as u8)),
    );
}

/// Permutation p-value `(1 + #{null >= observed}) / (1 + permutations)`.
///
/// Draw `a` uses stream `key/perm/a`. Draws leaving a compared group empty
/// are discarded and replaced; the test fails with
/// [`Error::DegenerateDesign`] if fewer than `permutations` usable draws
/// turn up in `10 * permutations` attempts.
pub fn permutation_test(
    g: &Graph,
    design: &Design,
    y: &[f64],
    z: &AssignmentVector,
    null: &NullSpec,
    permutations: usize,
    key: &StreamKey,
) -> Result<PermutationResult> {
    let sampler = AssignmentSampler::new(design, g)?;
    permutation_test_with(g, &sampler, y, z, null, permutations, key)
}

pub(crate) fn permutation_test_with(
    g: &Graph,
    sampler: &AssignmentSampler,
    y: &[f64],
    z: &AssignmentVector,
    null: &NullSpec,
    permutations: usize,
    key: &StreamKey,
) -> Result<PermutationResult> {
    if permutations == 0 {
        return Err(Error::InvalidParameter("permutations must be >= 1".into()));
    }
    if y.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("NaN outcome".into()));
    }
    let adjusted = adjust_outcomes(y, z, g, &null.hypothesis)?;
    let ranked = RankedSample::new(&adjusted);
    let k = null.kind.group_count();
    let mut scratch = Scratch::default();
    let mut labels = Vec::with_capacity(g.n());

    let observed = classify_slice(g, z.as_slice());
    labels_for(&observed, null.kind, &mut labels);
    let observed_stat = match ranked.statistic(&labels, k, &mut scratch) {
        Some(stat) => stat,
        None => {
            let empty = ExposureCondition::ALL
                .into_iter()
                .find(|&c| null.kind.group_of(c).is_some() && !observed.contains(&c))
                .unwrap_or(ExposureCondition::D00);
            return Err(Error::EmptyCondition(empty));
        }
    };
    let group_sizes = scratch.sizes.clone();

    let max_attempts = permutations * MAX_ATTEMPTS_PER_PERMUTATION;
    let mut null_stats = Vec::with_capacity(permutations);
    let mut attempt = 0usize;
    while null_stats.len() < permutations && attempt < max_attempts {
        let draw = sampler.draw_bits(&key.child("perm", attempt as u64));
        attempt += 1;
        labels_for(&classify_slice(g, &draw), null.kind, &mut labels);
        if let Some(stat) = ranked.statistic(&labels, k, &mut scratch) {
            null_stats.push(stat);
        }
    }
    let rejected_draws = attempt - null_stats.len();
    if null_stats.len() < permutations {
        return Err(Error::DegenerateDesign {
            failed: rejected_draws,
            attempts: attempt,
        });
    }
    // relative slack so that labelings equal to the observed one always count
    let threshold = observed_stat - observed_stat.abs() * 1e-12;
    let extreme = null_stats.iter().filter(|&&s| s >= threshold).count();
    let p_value = (1 + extreme) as f64 / (1 + permutations) as f64;
    Ok(PermutationResult {
        observed_stat,
        null_stats,
        p_value,
        group_sizes,
        rejected_draws,
    })
}
