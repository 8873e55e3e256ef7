use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn netprop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netprop"))
        .args(args)
        .current_dir(dir)
        .env_remove("NETPROP_OUT")
        .output()
        .expect("spawn netprop")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn leftovers(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for e in walk(dir) {
        if e.ends_with(".partial") {
            out.push(e);
        }
    }
    out
}

fn walk(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p.to_string_lossy().into_owned());
        }
    }
    out
}

#[test]
fn exposure_probs_on_path() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = write(tmp.path(), "path.edges", "0 1\n1 2\n");
    let cfg = write(
        tmp.path(),
        "run.toml",
        &format!(
            "seed = 11\n[graph]\npath = {edges:?}\n[design]\nkind = \"bernoulli\"\nalpha = 0.5\n"
        ),
    );
    let out = netprop(
        tmp.path(),
        &["exposure-probs", "--config", &cfg, "--out", "o"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(tmp.path().join("o/exposure_probs.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# seed=11");
    assert_eq!(lines[1], "node,pi_d1,pi_d00,pi_d01,method");
    assert_eq!(lines[2], "0,0.5,0.25,0.25,closed");
    assert_eq!(lines[3], "1,0.5,0.125,0.375,closed");
    assert_eq!(lines.len(), 5);
}

#[test]
fn monte_carlo_exposure_is_close_to_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = write(tmp.path(), "path.edges", "0 1\n1 2\n");
    let cfg = write(
        tmp.path(),
        "run.toml",
        &format!(
            "[graph]\npath = {edges:?}\n[design]\nalpha = 0.5\n[exposure]\nmethod = \"mc\"\nreplications = 20000\n"
        ),
    );
    let out = netprop(
        tmp.path(),
        &["exposure-probs", "--config", &cfg, "--seed", "3"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(tmp.path().join("exposure_probs.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(3).unwrap().split(',').collect();
    let d00: f64 = row[2].parse().unwrap();
    assert!((d00 - 0.125).abs() < 0.01, "{d00}");
    assert_eq!(row[4], "mc");
}

#[test]
fn missing_seed_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = netprop(tmp.path(), &["generate-graph", "--preset", "desk"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(walk(tmp.path()).is_empty());
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", "seed = 1\n[design]\nalpah = 0.2\n");
    let out = netprop(tmp.path(), &["generate-graph", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpah"));
}

#[test]
fn closed_form_on_complete_design_is_unsupported() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = write(tmp.path(), "path.edges", "0 1\n1 2\n");
    let cfg = write(
        tmp.path(),
        "run.toml",
        &format!(
            "seed = 5\n[graph]\npath = {edges:?}\n[design]\nkind = \"complete\"\nn_treated = 1\n"
        ),
    );
    let out = netprop(tmp.path(), &["exposure-probs", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("exposure_probs.csv").exists());
    assert!(leftovers(tmp.path()).is_empty());
}

#[test]
fn malformed_edge_list_leaves_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = write(tmp.path(), "bad.edges", "0 1\n2 2\n");
    let cfg = write(
        tmp.path(),
        "run.toml",
        &format!("seed = 5\n[graph]\npath = {edges:?}\n"),
    );
    let out = netprop(tmp.path(), &["power", "--config", &cfg, "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let o = tmp.path().join("o");
    assert!(!o.exists() || walk(&o).is_empty());
}

#[test]
fn tilt_on_regular_graph_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = write(tmp.path(), "cycle.edges", "0 1\n1 2\n2 3\n3 0\n");
    let cfg = write(
        tmp.path(),
        "run.toml",
        &format!("seed = 5\n[graph]\npath = {edges:?}\n[design]\nkind = \"tilted\"\nalpha = 0.3\ngamma = 0.05\n"),
    );
    let out = netprop(tmp.path(), &["exposure-probs", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(walk(tmp.path()).iter().all(|p| !p.ends_with(".csv")));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "blocker", "");
    let out = netprop(
        tmp.path(),
        &[
            "generate-graph",
            "--preset",
            "desk",
            "--seed",
            "1",
            "--out",
            "blocker/sub",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn generate_graph_reports_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "run.toml",
        "seed = 9\n[graph]\nn = 40\ndensity = 0.1\n",
    );
    let out = netprop(tmp.path(), &["generate-graph", "--config", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("n=40 edges="), "{stdout}");
    let g = netprop::graph::load_edge_list(tmp.path().join("graph.edges")).unwrap();
    assert_eq!(g.n(), 40);
    assert!(stdout.contains(&format!("edges={}", g.edge_count())));
}

#[test]
fn env_var_sets_output_dir_and_flag_overrides_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "run.toml",
        "seed = 9\n[graph]\nn = 20\ndensity = 0.2\n",
    );
    let run = |extra: &[&str]| {
        let mut args = vec!["generate-graph", "--config", &cfg];
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_netprop"))
            .args(&args)
            .current_dir(tmp.path())
            .env("NETPROP_OUT", "from_env")
            .output()
            .unwrap()
    };
    assert!(run(&[]).status.success());
    assert!(tmp.path().join("from_env/graph.edges").exists());
    assert!(run(&["--out", "from_flag"]).status.success());
    assert!(tmp.path().join("from_flag/graph.edges").exists());
}

#[test]
fn power_writes_header_and_details() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "run.toml",
        "seed = 21\n[graph]\nn = 30\ndensity = 0.15\n[design]\nalpha = 0.3\n\
         [propagation]\nkind = \"perfect\"\n\
         [grid]\nreplicates = 6\npermutations = 19\n[output]\ndetails = true\n",
    );
    let out = netprop(tmp.path(), &["power", "--config", &cfg, "--workers", "2"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(tmp.path().join("power.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# seed=21"));
    assert_eq!(lines.next(), Some(netprop::harness::POWER_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        // Perfect propagation has no temperature.
        assert_eq!(r.split(',').nth(4), Some("NA"));
    }
    let est = fs::read_to_string(tmp.path().join("details/cell0_estimates.csv")).unwrap();
    assert!(est.starts_with("# seed=21\nreplicate,estimator,"));
    assert!(tmp.path().join("details/cell0_tests.csv").exists());
    assert!(leftovers(tmp.path()).is_empty());
}

#[test]
fn zero_workers_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = netprop(
        tmp.path(),
        &[
            "generate-graph",
            "--preset",
            "desk",
            "--seed",
            "1",
            "--workers",
            "0",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}
