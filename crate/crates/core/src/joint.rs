//! Pairwise exposure probabilities `P(D_i = k, D_j = l)`.
//!
//! For independent designs these factor into products of `1 - p_u` over
//! neighborhood unions, so they are computed exactly. Nodes more than two
//! hops apart have disjoint closed neighborhoods and are independent; only
//! nearby pairs are stored. Dependent designs fall back to tabulated
//! frequencies over Monte Carlo draws.

use rayon::prelude::*;

use crate::design::{AssignmentSampler, Design, ExposureProbs};
use crate::error::{Error, Result};
use crate::exposure::{classify_slice, ExposureCondition};
use crate::graph::Graph;
use crate::rng::StreamKey;

use ExposureCondition::{D00, D01, D1};

/// Default number of design draws for tabulated joint probabilities.
pub const DEFAULT_JOINT_REPLICATIONS: usize = 10_000;

pub trait JointExposure: Sync {
    fn n(&self) -> usize;

    /// `P(D_i = k, D_j = l)`. Must return exactly `0.0` for impossible
    /// combinations.
    fn joint(&self, i: usize, k: ExposureCondition, j: usize, l: ExposureCondition) -> f64;

    /// Nodes `j != i` whose condition may depend on node `i`'s. Pairs not
    /// listed are treated as independent.
    fn dependent_on(&self, i: usize) -> Vec<usize>;
}

#[derive(Debug, Clone, Copy)]
struct NearPair {
    j: usize,
    adjacent: bool,
    /// `|N(i) ∩ N(j)|`
    shared: usize,
    /// `prod over N(i) ∩ N(j) of (1 - p)`
    shared_untreated: f64,
}

/// Exact joint probabilities under independent assignment.
#[derive(Debug, Clone)]
pub struct ClosedFormJoint {
    p: Vec<f64>,
    degree: Vec<usize>,
    /// `P(N(i) all untreated)`
    open_untreated: Vec<f64>,
    near: Vec<Vec<NearPair>>,
}

impl ClosedFormJoint {
    pub fn new(d: &Design, g: &Graph) -> Result<Self> {
        if !d.is_independent() {
            return Err(Error::UnsupportedDesign(d.kind()));
        }
        let p = crate::design::inclusion_probabilities(d, g)?;
        Ok(Self::from_probabilities(g, p))
    }

    pub fn from_probabilities(g: &Graph, p: Vec<f64>) -> Self {
        let n = g.n();
        let open_untreated = (0..n)
            .map(|i| g.neighbors(i).iter().map(|&w| 1.0 - p[w]).product())
            .collect();
        let near = (0..n)
            .map(|i| {
                // accumulate over paths i - w - j
                let mut acc: Vec<(usize, usize, f64)> = Vec::new();
                for &w in g.neighbors(i) {
                    for &j in g.neighbors(w) {
                        if j != i {
                            acc.push((j, 1, 1.0 - p[w]));
                        }
                    }
                }
                for &j in g.neighbors(i) {
                    acc.push((j, 0, 1.0));
                }
                acc.sort_unstable_by_key(|e| e.0);
                let mut pairs: Vec<NearPair> = Vec::new();
                for (j, count, factor) in acc {
                    match pairs.last_mut() {
                        Some(last) if last.j == j => {
                            last.shared += count;
                            last.shared_untreated *= factor;
                        }
                        _ => pairs.push(NearPair {
                            j,
                            adjacent: g.is_adjacent(i, j),
                            shared: count,
                            shared_untreated: factor,
                        }),
                    }
                }
                pairs
            })
            .collect();
        Self {
            p,
            degree: g.degrees(),
            open_untreated,
            near,
        }
    }

    pub fn marginals(&self) -> ExposureProbs {
        ExposureProbs::from_rows(
            (0..self.p.len())
                .map(|i| {
                    let u = 1.0 - self.p[i];
                    [
                        self.p[i],
                        u * self.open_untreated[i],
                        u * (1.0 - self.open_untreated[i]),
                    ]
                })
                .collect(),
        )
    }

    fn pair(&self, i: usize, j: usize) -> NearPair {
        let row = &self.near[i];
        match row.binary_search_by_key(&j, |e| e.j) {
            Ok(pos) => row[pos],
            Err(_) => NearPair {
                j,
                adjacent: false,
                shared: 0,
                shared_untreated: 1.0,
            },
        }
    }

    fn marginal(&self, i: usize, k: ExposureCondition) -> f64 {
        let u = 1.0 - self.p[i];
        match k {
            D1 => self.p[i],
            D00 => u * self.open_untreated[i],
            D01 => u * (1.0 - self.open_untreated[i]),
        }
    }

    /// `D_i = d00` and `D_j = d01`.
    fn isolated_and_exposed(&self, i: usize, j: usize, pair: &NearPair) -> f64 {
        let adj = usize::from(pair.adjacent);
        // N(j) ∩ N[i] = shared ∪ {i if adjacent}
        if pair.shared + adj == self.degree[j] {
            return 0.0;
        }
        let (ui, uj) = (1.0 - self.p[i], 1.0 - self.p[j]);
        let closed_i = ui * self.open_untreated[i];
        let isolated_with_j = if pair.adjacent {
            closed_i
        } else {
            closed_i * uj
        };
        let overlap = pair.shared_untreated * if pair.adjacent { ui } else { 1.0 };
        let rest_untreated = self.open_untreated[j] / overlap;
        isolated_with_j * (1.0 - rest_untreated)
    }
}

impl JointExposure for ClosedFormJoint {
    fn n(&self) -> usize {
        self.p.len()
    }

    fn joint(&self, i: usize, k: ExposureCondition, j: usize, l: ExposureCondition) -> f64 {
        if i == j {
            return if k == l { self.marginal(i, k) } else { 0.0 };
        }
        let pair = self.pair(i, j);
        let (pi, pj) = (self.p[i], self.p[j]);
        let (ui, uj) = (1.0 - pi, 1.0 - pj);
        match (k, l) {
            (D1, D1) => pi * pj,
            (D1, D00) => {
                if pair.adjacent {
                    0.0
                } else {
                    pi * uj * self.open_untreated[j]
                }
            }
            (D1, D01) => {
                if pair.adjacent {
                    pi * uj
                } else {
                    pi * uj * (1.0 - self.open_untreated[j])
                }
            }
            (D00, D1) | (D01, D1) => self.joint(j, l, i, k),
            (D00, D00) => {
                let closed = ui * self.open_untreated[i] * uj * self.open_untreated[j];
                let overlap = pair.shared_untreated * if pair.adjacent { ui * uj } else { 1.0 };
                closed / overlap
            }
            (D00, D01) => self.isolated_and_exposed(i, j, &pair),
            (D01, D00) => self.isolated_and_exposed(j, i, &pair),
            (D01, D01) => {
                let adj = usize::from(pair.adjacent);
                if self.degree[i] == adj || self.degree[j] == adj {
                    return 0.0;
                }
                // X = N(i) \ {j}, Y = N(j) \ {i}, X ∩ Y = shared
                let x_none = self.open_untreated[i] / if pair.adjacent { uj } else { 1.0 };
                let y_none = self.open_untreated[j] / if pair.adjacent { ui } else { 1.0 };
                let y_minus_x_none = y_none / pair.shared_untreated;
                let both = (1.0 - y_none) - x_none * (1.0 - y_minus_x_none);
                ui * uj * both.max(0.0)
            }
        }
    }

    fn dependent_on(&self, i: usize) -> Vec<usize> {
        self.near[i].iter().map(|e| e.j).collect()
    }
}

/// Joint probabilities tabulated from weighted assignment draws, for a
/// fixed set of condition pairs.
#[derive(Debug, Clone)]
pub struct TabulatedJoint {
    n: usize,
    pairs: Vec<(ExposureCondition, ExposureCondition)>,
    /// one row-major `n x n` table per entry of `pairs`
    tables: Vec<Vec<f64>>,
    marginals: Vec<[f64; 3]>,
}

impl TabulatedJoint {
    /// Tabulate over `replications` draws from `d`. Draw `r` uses stream
    /// `key/rep/r`.
    pub fn monte_carlo(
        d: &Design,
        g: &Graph,
        pairs: &[(ExposureCondition, ExposureCondition)],
        replications: usize,
        key: &StreamKey,
    ) -> Result<Self> {
        if replications == 0 {
            return Err(Error::InvalidParameter("replications must be >= 1".into()));
        }
        let sampler = AssignmentSampler::new(d, g)?;
        let weight = 1.0 / replications as f64;
        let n = g.n();
        let partial = (0..replications as u64)
            .into_par_iter()
            .fold(
                || Self::zeros(n, pairs),
                |mut acc, r| {
                    let z = sampler.draw_bits(&key.child("rep", r));
                    acc.add_counts(&classify_slice(g, &z), 1.0);
                    acc
                },
            )
            .reduce(
                || Self::zeros(n, pairs),
                |mut a, b| {
                    a.merge(&b);
                    a
                },
            );
        Ok(partial.scaled(weight))
    }

    /// Tabulate from explicit `(conditions, probability)` pairs, e.g. a full
    /// enumeration of a small design.
    pub fn from_weighted<I>(
        n: usize,
        pairs: &[(ExposureCondition, ExposureCondition)],
        draws: I,
    ) -> Self
    where
        I: IntoIterator<Item = (Vec<ExposureCondition>, f64)>,
    {
        let mut table = Self::zeros(n, pairs);
        for (conditions, weight) in draws {
            table.add_counts(&conditions, weight);
        }
        table
    }

    fn zeros(n: usize, pairs: &[(ExposureCondition, ExposureCondition)]) -> Self {
        Self {
            n,
            pairs: pairs.to_vec(),
            tables: vec![vec![0.0; n * n]; pairs.len()],
            marginals: vec![[0.0; 3]; n],
        }
    }

    fn add_counts(&mut self, conditions: &[ExposureCondition], weight: f64) {
        for (i, c) in conditions.iter().enumerate() {
            self.marginals[i][c.index()] += weight;
        }
        for (pair, table) in self.pairs.iter().zip(&mut self.tables) {
            let left: Vec<usize> = members(conditions, pair.0);
            let right: Vec<usize> = members(conditions, pair.1);
            for &i in &left {
                let row = &mut table[i * self.n..(i + 1) * self.n];
                for &j in &right {
                    row[j] += weight;
                }
            }
        }
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self.tables.iter_mut().zip(&other.tables) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.marginals.iter_mut().zip(&other.marginals) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
    }

    fn scaled(mut self, factor: f64) -> Self {
        for table in &mut self.tables {
            for x in table.iter_mut() {
                *x *= factor;
            }
        }
        for row in &mut self.marginals {
            for x in row.iter_mut() {
                *x *= factor;
            }
        }
        self
    }

    pub fn marginals(&self) -> ExposureProbs {
        ExposureProbs::from_rows(self.marginals.clone())
    }
}

fn members(conditions: &[ExposureCondition], k: ExposureCondition) -> Vec<usize> {
    conditions
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| (c == k).then_some(i))
        .collect()
}

impl JointExposure for TabulatedJoint {
    fn n(&self) -> usize {
        self.n
    }

    fn joint(&self, i: usize, k: ExposureCondition, j: usize, l: ExposureCondition) -> f64 {
        if i == j {
            return if k == l {
                self.marginals[i][k.index()]
            } else {
                0.0
            };
        }
        if let Some(pos) = self.pairs.iter().position(|&p| p == (k, l)) {
            return self.tables[pos][i * self.n + j];
        }
        if let Some(pos) = self.pairs.iter().position(|&p| p == (l, k)) {
            return self.tables[pos][j * self.n + i];
        }
        panic!("condition pair ({k}, {l}) was not tabulated");
    }

    fn dependent_on(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| j != i).collect()
    }
}

/// One row of pair entries `(j, P(D_i = a, D_j = b))`.
type PairRow = Vec<(usize, f64)>;

/// Joint probabilities needed for the variance of one contrast, laid out
/// for fast summation over realized conditions.
#[derive(Debug, Clone)]
pub struct ContrastJoint {
    pub(crate) high: ExposureCondition,
    pub(crate) low: ExposureCondition,
    pub(crate) pi_high: Vec<f64>,
    pub(crate) pi_low: Vec<f64>,
    /// `(high at i, high at j)` for dependent `j != i`
    pub(crate) high_high: Vec<PairRow>,
    pub(crate) low_low: Vec<PairRow>,
    /// `(high at i, low at j)` for dependent `j`, including `j == i`
    pub(crate) high_low: Vec<PairRow>,
    /// `(low at j, high at i)` transposed view of `high_low`, indexed by `j`
    pub(crate) low_high: Vec<PairRow>,
}

impl ContrastJoint {
    pub fn new(
        source: &dyn JointExposure,
        high: ExposureCondition,
        low: ExposureCondition,
    ) -> Result<Self> {
        if high == low {
            return Err(Error::InvalidParameter(
                "contrast needs two different conditions".into(),
            ));
        }
        let n = source.n();
        let pi_high: Vec<f64> = (0..n).map(|i| source.joint(i, high, i, high)).collect();
        let pi_low: Vec<f64> = (0..n).map(|i| source.joint(i, low, i, low)).collect();
        let rows: Vec<(PairRow, PairRow, PairRow)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut hh = Vec::new();
                let mut ll = Vec::new();
                let mut hl = vec![(i, 0.0)];
                for j in source.dependent_on(i) {
                    hh.push((j, source.joint(i, high, j, high)));
                    ll.push((j, source.joint(i, low, j, low)));
                    hl.push((j, source.joint(i, high, j, low)));
                }
                (hh, ll, hl)
            })
            .collect();
        let mut high_high = Vec::with_capacity(n);
        let mut low_low = Vec::with_capacity(n);
        let mut high_low = Vec::with_capacity(n);
        let mut low_high: Vec<PairRow> = vec![Vec::new(); n];
        for (i, (hh, ll, hl)) in rows.into_iter().enumerate() {
            for &(j, v) in &hl {
                low_high[j].push((i, v));
            }
            high_high.push(hh);
            low_low.push(ll);
            high_low.push(hl);
        }
        Ok(Self {
            high,
            low,
            pi_high,
            pi_low,
            high_high,
            low_low,
            high_low,
            low_high,
        })
    }

    pub fn n(&self) -> usize {
        self.pi_high.len()
    }

    pub fn high(&self) -> ExposureCondition {
        self.high
    }

    pub fn low(&self) -> ExposureCondition {
        self.low
    }
}
