use netprop::graph::{generate, GeneratorKind, GraphProfile};
use netprop::harness::{
    run_cell, run_grid, DesignFamily, PropagationFamily, ScenarioGrid, TestOutcome,
};
use netprop::{
    Design, EffectKind, EffectModel, Graph, PropagationModel, Scenario, StreamKey, TestKind,
};

fn graph() -> Graph {
    generate(
        &GraphProfile::new(120, 0.05, GeneratorKind::RandomGeometric).unwrap(),
        3,
    )
    .unwrap()
}

fn grid() -> ScenarioGrid {
    ScenarioGrid {
        designs: vec![DesignFamily::Bernoulli, DesignFamily::CompleteCount],
        alphas: vec![0.2],
        gammas: vec![],
        propagations: vec![PropagationFamily::Ising, PropagationFamily::Perfect],
        temperatures: vec![10.0],
        steps: 1,
        require_treated_neighbor: false,
        effects: vec![EffectKind::Multiplicative],
        lambdas: vec![0.63],
        tests: TestKind::ALL.to_vec(),
        replicates: 12,
        permutations: 19,
        joint_replications: 500,
    }
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn power_table_independent_of_worker_count() {
    let g = graph();
    let one = in_pool(1, || run_grid(&g, &grid(), 11).unwrap());
    let four = in_pool(4, || run_grid(&g, &grid(), 11).unwrap());
    let (mut a, mut b) = (Vec::new(), Vec::new());
    one.write_csv(&mut a).unwrap();
    four.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    assert_eq!(one.rows.len(), 2 * 2 * 4);
}

#[test]
fn different_seeds_differ() {
    let g = graph();
    let a = run_grid(&g, &grid(), 1).unwrap();
    let b = run_grid(&g, &grid(), 2).unwrap();
    assert_ne!(a.rows, b.rows);
}

#[test]
fn perfect_cells_report_na_temperature() {
    let g = graph();
    let table = run_grid(&g, &grid(), 5).unwrap();
    let mut csv = Vec::new();
    table.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("# seed=5\n"));
    assert!(text
        .lines()
        .any(|l| l.starts_with("bernoulli,0.2,NA,perfect,NA,")));
}

#[test]
fn null_p_values_look_uniform() {
    let g = graph();
    let mut s = Scenario::new(
        Design::Bernoulli { alpha: 0.2 },
        PropagationModel::ising(10.0),
        EffectModel::multiplicative(1.0),
    );
    s.tests = vec![TestKind::RiControls];
    s.replicates = 300;
    s.permutations = 99;
    let cell = run_cell(&g, &s, &StreamKey::new(21)).unwrap();
    let mut p: Vec<f64> = cell
        .records
        .iter()
        .filter_map(|r| r.outcomes[0].p_value())
        .collect();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = p.len() as f64;
    // Kolmogorov-Smirnov distance to U(0,1); p-values live on a grid of
    // step 1/100, so allow for that discreteness on top of the 1% band
    let d = p
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / m - x).abs().max((x - i as f64 / m).abs()))
        .fold(0.0, f64::max);
    assert!(d < 1.63 / m.sqrt() + 0.01, "KS distance {d}");
}

#[test]
fn wald_tests_excluded_when_condition_empty() {
    // complete graph: every control has a treated neighbor whenever anyone
    // is treated, so d00 is empty
    let n = 8;
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let g = Graph::from_edges(n, edges).unwrap();
    let mut s = Scenario::new(
        Design::CompleteCount { n_treated: 3 },
        PropagationModel::perfect(),
        EffectModel::multiplicative(0.63),
    );
    s.tests = vec![TestKind::HtWald];
    s.replicates = 5;
    s.joint_replications = 200;
    let cell = run_cell(&g, &s, &StreamKey::new(1)).unwrap();
    assert!(cell
        .records
        .iter()
        .all(|r| r.outcomes[0] == TestOutcome::Excluded));
    let row = &cell.power_rows()[0];
    assert_eq!(row.excluded, 5);
    assert!(row.power.is_nan());
}
