//! Monte Carlo power estimation over grids of scenarios.
//!
//! Each replicate draws an assignment, propagates it, draws baselines,
//! realizes outcomes and runs every requested test. Replicates and cells
//! run in parallel on the current rayon pool; all randomness comes from
//! stream keys indexed by cell and replicate, and aggregation happens in
//! index order, so tables do not depend on the number of workers.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::design::{realized_degree_correlation, AssignmentSampler, Design, ExposureProbs};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimateReport, Estimator, ExposureContrast, DEFAULT_LEVEL};
use crate::exposure::{classify_slice, condition_counts, ExposureCondition};
use crate::graph::Graph;
use crate::joint::{ClosedFormJoint, ContrastJoint, TabulatedJoint, DEFAULT_JOINT_REPLICATIONS};
use crate::outcomes::{draw_baseline, realize, EffectKind, EffectModel};
use crate::propagation::{self, PropagationModel};
use crate::ritest::{permutation_test_with, Hypothesis, NullKind, NullSpec};
use crate::rng::StreamKey;

/// Realized-correlation bin width used by the degree-correlation study.
pub const DEFAULT_BIN_WIDTH: f64 = 0.05;

pub const POWER_HEADER: &str = "design,alpha,gamma,propagation,temperature,effect,lambda,test,replicates,excluded,power,mc_se,mean_n_d1,mean_n_d01,mean_n_d00,mean_degcor";
pub const EXPOSURE_HEADER: &str = "node,pi_d1,pi_d00,pi_d01,method";
pub const ESTIMATE_HEADER: &str = "replicate,estimator,tau_hat,var_hat,z,p,n_d1,n_d01,n_d00";
pub const TEST_HEADER: &str = "replicate,null_kind,stat,p,n_groups,group_sizes";
pub const DEGCOR_HEADER: &str =
    "gamma,bin,corr_lo,corr_hi,replicates,excluded,rejections,power,mc_se,mean_degcor";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestKind {
    HtWald,
    HajekWald,
    RiAll3,
    RiControls,
}

impl TestKind {
    pub const ALL: [TestKind; 4] = [
        Self::HtWald,
        Self::HajekWald,
        Self::RiAll3,
        Self::RiControls,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::HtWald => "ht_wald",
            Self::HajekWald => "hajek_wald",
            Self::RiAll3 => "ri_all3",
            Self::RiControls => "ri_controls",
        }
    }

    fn estimator(self) -> Option<Estimator> {
        match self {
            Self::HtWald => Some(Estimator::HorvitzThompson),
            Self::HajekWald => Some(Estimator::Hajek),
            _ => None,
        }
    }

    fn null_kind(self) -> Option<NullKind> {
        match self {
            Self::RiAll3 => Some(NullKind::AllThree),
            Self::RiControls => Some(NullKind::ControlsOnly),
            _ => None,
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown test {s:?}")))
    }
}

/// One cell of a power study.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub design: Design,
    pub propagation: PropagationModel,
    pub effect: EffectModel,
    pub tests: Vec<TestKind>,
    pub replicates: usize,
    pub permutations: usize,
    pub contrast: ExposureContrast,
    /// Effect removed before permuting in the randomization tests.
    pub hypothesis: Hypothesis,
    /// Draws used to tabulate joint probabilities for dependent designs.
    pub joint_replications: usize,
    pub level: f64,
}

impl Scenario {
    pub fn new(design: Design, propagation: PropagationModel, effect: EffectModel) -> Self {
        Self {
            design,
            propagation,
            effect,
            tests: TestKind::ALL.to_vec(),
            replicates: 200,
            permutations: 500,
            contrast: ExposureContrast::default(),
            hypothesis: Hypothesis::no_effect(),
            joint_replications: DEFAULT_JOINT_REPLICATIONS,
            level: DEFAULT_LEVEL,
        }
    }

    pub fn validate(&self, g: &Graph) -> Result<()> {
        self.design.validate(g)?;
        self.propagation.validate()?;
        self.effect.validate()?;
        self.hypothesis.validate()?;
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be >= 1".into()));
        }
        if self.permutations == 0 && self.tests.iter().any(|t| t.null_kind().is_some()) {
            return Err(Error::InvalidParameter("permutations must be >= 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "level {} outside (0, 1)",
                self.level
            )));
        }
        Ok(())
    }

    /// Treated fraction, exact for independent designs.
    pub fn alpha(&self, n: usize) -> f64 {
        match self.design {
            Design::Bernoulli { alpha } | Design::DegreeTilted { alpha, .. } => alpha,
            Design::CompleteCount { n_treated } => n_treated as f64 / n as f64,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self.design {
            Design::DegreeTilted { gamma, .. } => Some(gamma),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestOutcome {
    Estimate(EstimateReport),
    Randomization {
        statistic: f64,
        p_value: f64,
        group_sizes: Vec<usize>,
    },
    /// A compared condition was empty, positivity failed, or the design
    /// could not produce usable permutations.
    Excluded,
}

impl TestOutcome {
    pub fn p_value(&self) -> Option<f64> {
        match self {
            Self::Estimate(r) => Some(r.p_value),
            Self::Randomization { p_value, .. } => Some(*p_value),
            Self::Excluded => None,
        }
    }

    pub fn rejects(&self, level: f64) -> Option<bool> {
        self.p_value().map(|p| p < level)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub n_d1: usize,
    pub n_d01: usize,
    pub n_d00: usize,
    pub degcor: Option<f64>,
    /// One entry per test of the scenario, in the same order.
    pub outcomes: Vec<TestOutcome>,
}

/// Per-scenario quantities shared by all replicates.
pub struct CellContext {
    sampler: AssignmentSampler,
    joint: Option<ContrastJoint>,
}

impl CellContext {
    pub fn new(g: &Graph, scenario: &Scenario, key: &StreamKey) -> Result<Self> {
        scenario.validate(g)?;
        let sampler = AssignmentSampler::new(&scenario.design, g)?;
        let needs_joint = scenario.tests.iter().any(|t| t.estimator().is_some());
        let joint = if needs_joint {
            Some(contrast_joint(g, scenario, key)?)
        } else {
            None
        };
        Ok(Self { sampler, joint })
    }
}

fn contrast_joint(g: &Graph, scenario: &Scenario, key: &StreamKey) -> Result<ContrastJoint> {
    let (high, low) = (scenario.contrast.high, scenario.contrast.low);
    if scenario.design.is_independent() {
        ContrastJoint::new(&ClosedFormJoint::new(&scenario.design, g)?, high, low)
    } else {
        let table = TabulatedJoint::monte_carlo(
            &scenario.design,
            g,
            &[(high, high), (low, low), (high, low)],
            scenario.joint_replications,
            &key.child("joint", 0),
        )?;
        ContrastJoint::new(&table, high, low)
    }
}

/// Run replicate `r` of a scenario with stream `key/rep/r`.
pub fn run_replicate(
    g: &Graph,
    scenario: &Scenario,
    ctx: &CellContext,
    r: usize,
    key: &StreamKey,
) -> Result<ReplicateRecord> {
    let rkey = key.child("rep", r as u64);
    let z = ctx.sampler.draw(&rkey.child("assign", 0));
    let state = propagation::run(g, &z, &scenario.propagation, &rkey.child("prop", 0))?;
    let baseline = draw_baseline(g.n(), &rkey.child("baseline", 0))?;
    let y = realize(&baseline, &state, &scenario.effect)?.y;
    let conditions = classify_slice(g, z.as_slice());
    let (n_d1, n_d01, n_d00) = condition_counts(&conditions);
    let degcor = realized_degree_correlation(&z, g).ok();

    let count = |c: ExposureCondition| match c {
        ExposureCondition::D1 => n_d1,
        ExposureCondition::D01 => n_d01,
        ExposureCondition::D00 => n_d00,
    };
    let mut outcomes = Vec::with_capacity(scenario.tests.len());
    for &test in &scenario.tests {
        let outcome = if let Some(estimator) = test.estimator() {
            let joint = ctx.joint.as_ref().expect("joint probabilities prepared");
            if count(scenario.contrast.high) == 0 || count(scenario.contrast.low) == 0 {
                TestOutcome::Excluded
            } else {
                match estimate(estimator, &y, &conditions, joint) {
                    Ok(report) => TestOutcome::Estimate(report),
                    Err(Error::Positivity { .. }) | Err(Error::EmptyCondition(_)) => {
                        TestOutcome::Excluded
                    }
                    Err(e) => return Err(e),
                }
            }
        } else {
            let null = NullSpec {
                kind: test.null_kind().expect("randomization test"),
                hypothesis: scenario.hypothesis,
            };
            match permutation_test_with(
                g,
                &ctx.sampler,
                &y,
                &z,
                &null,
                scenario.permutations,
                &rkey.child("perm", 0),
            ) {
                Ok(res) => TestOutcome::Randomization {
                    statistic: res.observed_stat,
                    p_value: res.p_value,
                    group_sizes: res.group_sizes,
                },
                Err(Error::EmptyCondition(_)) | Err(Error::DegenerateDesign { .. }) => {
                    TestOutcome::Excluded
                }
                Err(e) => return Err(e),
            }
        };
        outcomes.push(outcome);
    }
    Ok(ReplicateRecord {
        replicate: r,
        n_d1,
        n_d01,
        n_d00,
        degcor,
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub scenario: Scenario,
    pub n: usize,
    pub records: Vec<ReplicateRecord>,
}

pub fn run_cell(g: &Graph, scenario: &Scenario, key: &StreamKey) -> Result<CellResult> {
    let ctx = CellContext::new(g, scenario, key)?;
    let records = (0..scenario.replicates)
        .into_par_iter()
        .map(|r| run_replicate(g, scenario, &ctx, r, key))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(CellResult {
        scenario: scenario.clone(),
        n: g.n(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub design: &'static str,
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub propagation: &'static str,
    pub temperature: Option<f64>,
    pub effect: EffectKind,
    pub lambda: f64,
    pub test: TestKind,
    pub replicates: usize,
    pub excluded: usize,
    /// NaN when every replicate was excluded.
    pub power: f64,
    pub mc_se: f64,
    pub mean_n_d1: f64,
    pub mean_n_d01: f64,
    pub mean_n_d00: f64,
    pub mean_degcor: Option<f64>,
}

impl CellResult {
    pub fn power_rows(&self) -> Vec<PowerRow> {
        let s = &self.scenario;
        let reps = self.records.len();
        let mean = |f: &dyn Fn(&ReplicateRecord) -> usize| {
            self.records.iter().map(|r| f(r) as f64).sum::<f64>() / reps as f64
        };
        let defined: Vec<f64> = self.records.iter().filter_map(|r| r.degcor).collect();
        let mean_degcor =
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        let (mean_n_d1, mean_n_d01, mean_n_d00) =
            (mean(&|r| r.n_d1), mean(&|r| r.n_d01), mean(&|r| r.n_d00));
        s.tests
            .iter()
            .enumerate()
            .map(|(t, &test)| {
                let decisions: Vec<bool> = self
                    .records
                    .iter()
                    .filter_map(|r| r.outcomes[t].rejects(s.level))
                    .collect();
                let (power, mc_se) = proportion(&decisions);
                PowerRow {
                    design: s.design.kind(),
                    alpha: s.alpha(self.n),
                    gamma: s.gamma(),
                    propagation: s.propagation.kind(),
                    temperature: s.propagation.temperature(),
                    effect: s.effect.kind,
                    lambda: s.effect.lambda,
                    test,
                    replicates: reps,
                    excluded: reps - decisions.len(),
                    power,
                    mc_se,
                    mean_n_d1,
                    mean_n_d01,
                    mean_n_d00,
                    mean_degcor,
                }
            })
            .collect()
    }

    pub fn write_estimates<W: Write>(&self, seed: u64, mut w: W) -> io::Result<()> {
        writeln!(w, "# seed={seed}")?;
        writeln!(w, "{ESTIMATE_HEADER}")?;
        for rec in &self.records {
            for out in &rec.outcomes {
                if let TestOutcome::Estimate(e) = out {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{},{}",
                        rec.replicate,
                        e.estimator,
                        num(e.tau_hat),
                        num(e.variance_hat),
                        num(e.z_score),
                        num(e.p_value),
                        e.n_d1,
                        e.n_d01,
                        e.n_d00
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn write_tests<W: Write>(&self, seed: u64, mut w: W) -> io::Result<()> {
        writeln!(w, "# seed={seed}")?;
        writeln!(w, "{TEST_HEADER}")?;
        for rec in &self.records {
            for (out, test) in rec.outcomes.iter().zip(&self.scenario.tests) {
                if let TestOutcome::Randomization {
                    statistic,
                    p_value,
                    group_sizes,
                } = out
                {
                    let sizes: Vec<String> = group_sizes.iter().map(|s| s.to_string()).collect();
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        rec.replicate,
                        test.null_kind().expect("randomization test"),
                        num(*statistic),
                        num(*p_value),
                        group_sizes.len(),
                        sizes.join(";")
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Rejection rate and its binomial standard error.
fn proportion(decisions: &[bool]) -> (f64, f64) {
    if decisions.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = decisions.len() as f64;
    let p = decisions.iter().filter(|&&d| d).count() as f64 / n;
    (p, (p * (1.0 - p) / n).sqrt())
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        x.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), num)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DesignFamily {
    Bernoulli,
    CompleteCount,
    DegreeTilted,
}

impl FromStr for DesignFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(Self::Bernoulli),
            "complete" => Ok(Self::CompleteCount),
            "tilted" => Ok(Self::DegreeTilted),
            other => Err(Error::InvalidParameter(format!("unknown design {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PropagationFamily {
    Ising,
    Perfect,
}

impl FromStr for PropagationFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ising" => Ok(Self::Ising),
            "perfect" => Ok(Self::Perfect),
            other => Err(Error::InvalidParameter(format!(
                "unknown propagation {other:?}"
            ))),
        }
    }
}

/// Cartesian grid of scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGrid {
    pub designs: Vec<DesignFamily>,
    pub alphas: Vec<f64>,
    /// Only used by tilted designs.
    pub gammas: Vec<f64>,
    pub propagations: Vec<PropagationFamily>,
    /// Only used by Ising propagation.
    pub temperatures: Vec<f64>,
    pub steps: usize,
    pub require_treated_neighbor: bool,
    pub effects: Vec<EffectKind>,
    pub lambdas: Vec<f64>,
    pub tests: Vec<TestKind>,
    pub replicates: usize,
    pub permutations: usize,
    pub joint_replications: usize,
}

impl ScenarioGrid {
    /// Cells in a fixed order: design, alpha, gamma, propagation,
    /// temperature, effect, lambda. Complete designs treat
    /// `round(alpha * n)` nodes.
    pub fn scenarios(&self, n: usize) -> Vec<Scenario> {
        let mut out = Vec::new();
        for &family in &self.designs {
            for &alpha in &self.alphas {
                let designs: Vec<Design> = match family {
                    DesignFamily::Bernoulli => vec![Design::Bernoulli { alpha }],
                    DesignFamily::CompleteCount => vec![Design::CompleteCount {
                        n_treated: (alpha * n as f64).round() as usize,
                    }],
                    DesignFamily::DegreeTilted => self
                        .gammas
                        .iter()
                        .map(|&gamma| Design::DegreeTilted { alpha, gamma })
                        .collect(),
                };
                for design in designs {
                    for &prop in &self.propagations {
                        let models: Vec<PropagationModel> = match prop {
                            PropagationFamily::Perfect => {
                                vec![PropagationModel::Perfect { steps: self.steps }]
                            }
                            PropagationFamily::Ising => self
                                .temperatures
                                .iter()
                                .map(|&temperature| PropagationModel::Ising {
                                    temperature,
                                    steps: self.steps,
                                    require_treated_neighbor: self.require_treated_neighbor,
                                })
                                .collect(),
                        };
                        for model in models {
                            for &kind in &self.effects {
                                for &lambda in &self.lambdas {
                                    let mut s =
                                        Scenario::new(design, model, EffectModel { kind, lambda });
                                    s.tests = self.tests.clone();
                                    s.replicates = self.replicates;
                                    s.permutations = self.permutations;
                                    s.joint_replications = self.joint_replications;
                                    out.push(s);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerTable {
    pub seed: u64,
    pub rows: Vec<PowerRow>,
}

impl PowerTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "{POWER_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.design,
                num(r.alpha),
                opt(r.gamma),
                r.propagation,
                opt(r.temperature),
                r.effect,
                num(r.lambda),
                r.test,
                r.replicates,
                r.excluded,
                num(r.power),
                num(r.mc_se),
                num(r.mean_n_d1),
                num(r.mean_n_d01),
                num(r.mean_n_d00),
                opt(r.mean_degcor)
            )?;
        }
        Ok(())
    }

    pub fn find(&self, pred: impl Fn(&PowerRow) -> bool) -> Option<&PowerRow> {
        self.rows.iter().find(|r| pred(r))
    }
}

/// Run every cell of `grid`; cell `c` uses stream `seed/cell/c`.
///
/// On failure the error of the first failing cell (in grid order) is
/// returned.
pub fn run_grid_cells(g: &Graph, grid: &ScenarioGrid, seed: u64) -> Result<Vec<CellResult>> {
    let key = StreamKey::new(seed);
    let cells = grid.scenarios(g.n());
    let results: Vec<Result<CellResult>> = cells
        .par_iter()
        .enumerate()
        .map(|(c, s)| run_cell(g, s, &key.child("cell", c as u64)))
        .collect();
    results.into_iter().collect()
}

pub fn run_grid(g: &Graph, grid: &ScenarioGrid, seed: u64) -> Result<PowerTable> {
    Ok(power_table(&run_grid_cells(g, grid, seed)?, seed))
}

pub fn power_table(cells: &[CellResult], seed: u64) -> PowerTable {
    PowerTable {
        seed,
        rows: cells.iter().flat_map(|c| c.power_rows()).collect(),
    }
}

pub fn write_exposure_probs<W: Write>(
    probs: &ExposureProbs,
    method: &str,
    seed: u64,
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "# seed={seed}")?;
    writeln!(w, "{EXPOSURE_HEADER}")?;
    for (i, row) in probs.rows().iter().enumerate() {
        writeln!(
            w,
            "{i},{},{},{},{method}",
            num(row[ExposureCondition::D1.index()]),
            num(row[ExposureCondition::D00.index()]),
            num(row[ExposureCondition::D01.index()])
        )?;
    }
    Ok(())
}

/// Sweep of degree tilts for the correlation-versus-power study.
#[derive(Debug, Clone, PartialEq)]
pub struct DegcorStudy {
    pub alpha: f64,
    pub gammas: Vec<f64>,
    pub propagation: PropagationModel,
    pub effect: EffectModel,
    pub replicates: usize,
    pub bin_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegcorBin {
    /// `None` for bins pooled over all gammas.
    pub gamma: Option<f64>,
    /// `floor(correlation / bin_width)`
    pub bin: i64,
    pub lower: f64,
    pub upper: f64,
    pub replicates: usize,
    pub excluded: usize,
    pub rejections: usize,
    pub power: f64,
    pub mc_se: f64,
    pub mean_degcor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegcorTable {
    pub seed: u64,
    pub bin_width: f64,
    pub bins: Vec<DegcorBin>,
}

impl DegcorTable {
    pub fn pooled(&self) -> impl Iterator<Item = &DegcorBin> {
        self.bins.iter().filter(|b| b.gamma.is_none())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "{DEGCOR_HEADER}")?;
        for b in &self.bins {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                b.gamma.map_or_else(|| "all".to_string(), num),
                b.bin,
                num(b.lower),
                num(b.upper),
                b.replicates,
                b.excluded,
                b.rejections,
                num(b.power),
                num(b.mc_se),
                num(b.mean_degcor)
            )?;
        }
        Ok(())
    }
}

/// Horvitz-Thompson Wald rejections of the d01-versus-d00 contrast under
/// degree-tilted designs, binned by realized degree-treatment correlation.
/// Gamma `i` uses stream `seed/gamma/i`. Replicates whose correlation is
/// undefined are dropped; excluded tests count against their bin.
pub fn degree_correlation_study(g: &Graph, study: &DegcorStudy, seed: u64) -> Result<DegcorTable> {
    if !(study.bin_width > 0.0) || !study.bin_width.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bin width {} must be positive",
            study.bin_width
        )));
    }
    if study.gammas.is_empty() {
        return Err(Error::InvalidParameter("no gammas to sweep".into()));
    }
    let key = StreamKey::new(seed);
    let cells: Vec<Result<CellResult>> = study
        .gammas
        .par_iter()
        .enumerate()
        .map(|(i, &gamma)| {
            let mut s = Scenario::new(
                Design::DegreeTilted {
                    alpha: study.alpha,
                    gamma,
                },
                study.propagation,
                study.effect,
            );
            s.tests = vec![TestKind::HtWald];
            s.replicates = study.replicates;
            run_cell(g, &s, &key.child("gamma", i as u64))
        })
        .collect();

    let mut per_gamma = Vec::new();
    let mut pooled: Vec<(f64, Option<bool>)> = Vec::new();
    for (cell, &gamma) in cells.into_iter().zip(&study.gammas) {
        let cell = cell?;
        let level = cell.scenario.level;
        let points: Vec<(f64, Option<bool>)> = cell
            .records
            .iter()
            .filter_map(|r| r.degcor.map(|c| (c, r.outcomes[0].rejects(level))))
            .collect();
        per_gamma.extend(bin_points(&points, study.bin_width, Some(gamma)));
        pooled.extend(points);
    }
    let mut bins = per_gamma;
    bins.extend(bin_points(&pooled, study.bin_width, None));
    Ok(DegcorTable {
        seed,
        bin_width: study.bin_width,
        bins,
    })
}

fn bin_points(points: &[(f64, Option<bool>)], width: f64, gamma: Option<f64>) -> Vec<DegcorBin> {
    let mut ids: Vec<i64> = points
        .iter()
        .map(|&(c, _)| (c / width).floor() as i64)
        .collect();
    let keyed: Vec<(i64, f64, Option<bool>)> = ids
        .iter()
        .zip(points)
        .map(|(&b, &(c, d))| (b, c, d))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|bin| {
            let members: Vec<&(i64, f64, Option<bool>)> =
                keyed.iter().filter(|p| p.0 == bin).collect();
            let decisions: Vec<bool> = members.iter().filter_map(|p| p.2).collect();
            let (power, mc_se) = proportion(&decisions);
            DegcorBin {
                gamma,
                bin,
                lower: tidy(bin as f64 * width),
                upper: tidy((bin + 1) as f64 * width),
                replicates: members.len(),
                excluded: members.len() - decisions.len(),
                rejections: decisions.iter().filter(|&&d| d).count(),
                power,
                mc_se,
                mean_degcor: members.iter().map(|p| p.1).sum::<f64>() / members.len() as f64,
            }
        })
        .collect()
}

/// Drop floating-point noise from bin edges such as `3.0 * 0.05`.
fn tidy(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendFit {
    pub slope: f64,
    pub se: f64,
}

impl TrendFit {
    pub fn z(&self) -> f64 {
        self.slope / self.se
    }
}

/// Weighted least-squares slope of bin power on mean bin correlation,
/// weights equal to the number of tested replicates per bin. The standard
/// error uses the pooled rejection rate, as in a trend test for
/// proportions.
pub fn power_trend<'a>(bins: impl IntoIterator<Item = &'a DegcorBin>) -> Result<TrendFit> {
    let pts: Vec<(f64, f64, f64)> = bins
        .into_iter()
        .filter(|b| b.replicates > b.excluded)
        .map(|b| ((b.replicates - b.excluded) as f64, b.mean_degcor, b.power))
        .collect();
    let w: f64 = pts.iter().map(|p| p.0).sum();
    if pts.len() < 2 || w == 0.0 {
        return Err(Error::InvalidParameter(
            "need at least two non-empty bins".into(),
        ));
    }
    let xbar = pts.iter().map(|p| p.0 * p.1).sum::<f64>() / w;
    let pbar = pts.iter().map(|p| p.0 * p.2).sum::<f64>() / w;
    let sxx: f64 = pts.iter().map(|p| p.0 * (p.1 - xbar).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidParameter("bins share one correlation".into()));
    }
    let sxy: f64 = pts.iter().map(|p| p.0 * (p.1 - xbar) * (p.2 - pbar)).sum();
    Ok(TrendFit {
        slope: sxy / sxx,
        se: (pbar * (1.0 - pbar) / sxx).sqrt(),
    })
}
