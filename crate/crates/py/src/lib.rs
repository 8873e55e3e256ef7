//! Python bindings for the netprop simulation library.

// pyo3 0.22 macro expansion trips this lint on every PyResult return
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use netprop::design::{draw_assignment, exposure_probs_closed_form, exposure_probs_monte_carlo};
use netprop::exposure::classify;
use netprop::graph::{self, GeneratorKind, GraphProfile};
use netprop::harness::run_cell;
use netprop::joint::{ClosedFormJoint, ContrastJoint, TabulatedJoint};
use netprop::ritest;
use netprop::{
    estimators, propagation, AssignmentVector, Design, EffectKind, EffectModel, Estimator,
    ExposureCondition, PropagationModel, Scenario, StreamKey, TestKind,
};

fn to_py(e: netprop::Error) -> PyErr {
    use netprop::Error::*;
    match e {
        Parse { .. }
        | SelfLoop { .. }
        | EmptyEdgeList
        | NodeOutOfRange { .. }
        | InvalidProfile(_)
        | InvalidDesign(_)
        | UnsupportedDesign(_)
        | InvalidParameter(_)
        | LengthMismatch { .. }
        | InvalidNeighborhood { .. }
        | TiltImpossible => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

#[pyclass(name = "Graph", module = "netprop_py", frozen)]
#[derive(Clone)]
struct PyGraph {
    inner: graph::Graph,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        let inner = graph::Graph::from_edges(n, edges).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: graph::load_edge_list(path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: graph::parse_edge_list(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n, density, seed, generator = "random-geometric"))]
    fn generate(n: usize, density: f64, seed: u64, generator: &str) -> PyResult<Self> {
        let generator: GeneratorKind = generator.parse().map_err(to_py)?;
        let profile = GraphProfile::new(n, density, generator).map_err(to_py)?;
        Ok(Self {
            inner: graph::generate(&profile, seed).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    #[getter]
    fn density(&self) -> f64 {
        self.inner.density()
    }

    fn degrees(&self) -> Vec<usize> {
        self.inner.degrees()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        if i >= self.inner.n() {
            return Err(PyValueError::new_err(format!("node {i} out of range")));
        }
        Ok(self.inner.neighbors(i).to_vec())
    }

    fn to_edge_list(&self) -> String {
        self.inner.to_edge_list_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(n={}, edges={})",
            self.inner.n(),
            self.inner.edge_count()
        )
    }
}

fn design_from(
    kind: &str,
    alpha: f64,
    gamma: f64,
    n_treated: Option<usize>,
    n: usize,
) -> PyResult<Design> {
    match kind {
        "bernoulli" => Ok(Design::Bernoulli { alpha }),
        "tilted" => Ok(Design::DegreeTilted { alpha, gamma }),
        "complete" => Ok(Design::CompleteCount {
            n_treated: n_treated.unwrap_or_else(|| (alpha * n as f64).round() as usize),
        }),
        other => Err(PyValueError::new_err(format!("unknown design {other:?}"))),
    }
}

fn propagation_from(kind: &str, temperature: f64, steps: usize) -> PyResult<PropagationModel> {
    match kind {
        "ising" => Ok(PropagationModel::Ising {
            temperature,
            steps,
            require_treated_neighbor: false,
        }),
        "perfect" => Ok(PropagationModel::Perfect { steps }),
        other => Err(PyValueError::new_err(format!(
            "unknown propagation {other:?}"
        ))),
    }
}

#[pyfunction]
fn infection_probability(k: usize, m: usize, temperature: f64) -> PyResult<f64> {
    propagation::infection_probability(k, m, temperature).map_err(to_py)
}

/// Rows of `(pi_d1, pi_d00, pi_d01)` per node.
#[pyfunction]
#[pyo3(signature = (g, design = "bernoulli", alpha = 0.5, gamma = 0.0, n_treated = None, method = "closed", replications = 100_000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn exposure_probs(
    g: &PyGraph,
    design: &str,
    alpha: f64,
    gamma: f64,
    n_treated: Option<usize>,
    method: &str,
    replications: usize,
    seed: u64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let d = design_from(design, alpha, gamma, n_treated, g.inner.n())?;
    let probs = match method {
        "closed" => exposure_probs_closed_form(&d, &g.inner),
        "mc" => exposure_probs_monte_carlo(&d, &g.inner, replications, &StreamKey::new(seed)),
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    }
    .map_err(to_py)?;
    Ok(probs.rows().iter().map(|r| (r[0], r[1], r[2])).collect())
}

#[pyfunction]
#[pyo3(signature = (g, seed, design = "bernoulli", alpha = 0.5, gamma = 0.0, n_treated = None))]
fn assign(
    g: &PyGraph,
    seed: u64,
    design: &str,
    alpha: f64,
    gamma: f64,
    n_treated: Option<usize>,
) -> PyResult<Vec<bool>> {
    let d = design_from(design, alpha, gamma, n_treated, g.inner.n())?;
    Ok(draw_assignment(&d, &g.inner, &StreamKey::new(seed))
        .map_err(to_py)?
        .into_inner())
}

/// Condition labels ("d1", "d00", "d01") for an assignment.
#[pyfunction]
fn exposure_conditions(g: &PyGraph, z: Vec<bool>) -> PyResult<Vec<&'static str>> {
    let c = classify(&g.inner, &AssignmentVector::new(z)).map_err(to_py)?;
    Ok(c.into_iter().map(ExposureCondition::label).collect())
}

#[pyfunction]
#[pyo3(signature = (g, z, seed, propagation = "ising", temperature = 50.0, steps = 1))]
fn propagate(
    g: &PyGraph,
    z: Vec<bool>,
    seed: u64,
    propagation: &str,
    temperature: f64,
    steps: usize,
) -> PyResult<Vec<bool>> {
    let model = propagation_from(propagation, temperature, steps)?;
    let s = propagation::run(
        &g.inner,
        &AssignmentVector::new(z),
        &model,
        &StreamKey::new(seed),
    )
    .map_err(to_py)?;
    Ok(s.exposed)
}

#[pyfunction]
fn ad_ksample(groups: Vec<Vec<f64>>) -> PyResult<f64> {
    let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
    ritest::ad_ksample(&refs).map_err(to_py)
}

/// Wald test of the d01-versus-d00 contrast for observed outcomes.
#[pyfunction]
#[pyo3(signature = (g, y, z, estimator = "ht", design = "bernoulli", alpha = 0.5, gamma = 0.0, n_treated = None, replications = 10_000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn wald<'py>(
    py: Python<'py>,
    g: &PyGraph,
    y: Vec<f64>,
    z: Vec<bool>,
    estimator: &str,
    design: &str,
    alpha: f64,
    gamma: f64,
    n_treated: Option<usize>,
    replications: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let estimator: Estimator = estimator.parse().map_err(to_py)?;
    let d = design_from(design, alpha, gamma, n_treated, g.inner.n())?;
    let (high, low) = (ExposureCondition::D01, ExposureCondition::D00);
    let joint = if d.is_independent() {
        ContrastJoint::new(
            &ClosedFormJoint::new(&d, &g.inner).map_err(to_py)?,
            high,
            low,
        )
    } else {
        let table = TabulatedJoint::monte_carlo(
            &d,
            &g.inner,
            &[(high, high), (low, low), (high, low)],
            replications,
            &StreamKey::new(seed),
        )
        .map_err(to_py)?;
        ContrastJoint::new(&table, high, low)
    }
    .map_err(to_py)?;
    let conditions = classify(&g.inner, &AssignmentVector::new(z)).map_err(to_py)?;
    let r = estimators::estimate(estimator, &y, &conditions, &joint).map_err(to_py)?;
    let out = PyDict::new_bound(py);
    out.set_item("estimator", r.estimator.label())?;
    out.set_item("tau_hat", r.tau_hat)?;
    out.set_item("var_hat", r.variance_hat)?;
    out.set_item("z", r.z_score)?;
    out.set_item("p", r.p_value)?;
    out.set_item("n_d1", r.n_d1)?;
    out.set_item("n_d01", r.n_d01)?;
    out.set_item("n_d00", r.n_d00)?;
    Ok(out)
}

/// Power of each requested test in one scenario, as a list of dicts.
#[pyfunction]
#[pyo3(signature = (g, seed, design = "bernoulli", alpha = 0.05, gamma = 0.0, propagation = "ising", temperature = 50.0, effect = "multiplicative", lam = 0.63, tests = None, replicates = 200, permutations = 500))]
#[allow(clippy::too_many_arguments)]
fn power<'py>(
    py: Python<'py>,
    g: &PyGraph,
    seed: u64,
    design: &str,
    alpha: f64,
    gamma: f64,
    propagation: &str,
    temperature: f64,
    effect: &str,
    lam: f64,
    tests: Option<Vec<String>>,
    replicates: usize,
    permutations: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let d = design_from(design, alpha, gamma, None, g.inner.n())?;
    let model = propagation_from(propagation, temperature, 1)?;
    let kind: EffectKind = effect.parse().map_err(to_py)?;
    let mut s = Scenario::new(d, model, EffectModel { kind, lambda: lam });
    if let Some(tests) = tests {
        s.tests = tests
            .iter()
            .map(|t| t.parse::<TestKind>())
            .collect::<Result<_, _>>()
            .map_err(to_py)?;
    }
    s.replicates = replicates;
    s.permutations = permutations;
    let graph = g.inner.clone();
    let cell = py
        .allow_threads(move || run_cell(&graph, &s, &StreamKey::new(seed).child("cell", 0)))
        .map_err(to_py)?;
    cell.power_rows()
        .into_iter()
        .map(|r| {
            let row = PyDict::new_bound(py);
            row.set_item("test", r.test.label())?;
            row.set_item("replicates", r.replicates)?;
            row.set_item("excluded", r.excluded)?;
            row.set_item("power", r.power)?;
            row.set_item("mc_se", r.mc_se)?;
            row.set_item("mean_n_d1", r.mean_n_d1)?;
            row.set_item("mean_n_d01", r.mean_n_d01)?;
            row.set_item("mean_n_d00", r.mean_n_d00)?;
            row.set_item("mean_degcor", r.mean_degcor)?;
            Ok(row)
        })
        .collect()
}

#[pymodule]
fn netprop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(infection_probability, m)?)?;
    m.add_function(wrap_pyfunction!(exposure_probs, m)?)?;
    m.add_function(wrap_pyfunction!(assign, m)?)?;
    m.add_function(wrap_pyfunction!(exposure_conditions, m)?)?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(ad_ksample, m)?)?;
    m.add_function(wrap_pyfunction!(wald, m)?)?;
    m.add_function(wrap_pyfunction!(power, m)?)?;
    Ok(())
}
