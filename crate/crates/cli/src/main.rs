//! `netprop`: graph generation, exposure probabilities, power grids and the
//! degree-correlation study from a config file and a seed.

mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, ExposureMethod, GraphSource, Preset, RunConfig, OUT_ENV};
use netprop::design::{exposure_probs_closed_form, exposure_probs_monte_carlo};
use netprop::graph::{generate, load_edge_list};
use netprop::harness::{
    degree_correlation_study, power_table, power_trend, run_grid_cells, write_exposure_probs,
    DegcorStudy, ScenarioGrid,
};
use netprop::{EffectModel, Graph, PropagationModel, StreamKey};

#[derive(Parser)]
#[command(
    name = "netprop",
    version,
    about = "Power analysis for network experiments with treatment propagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML file with dotted keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; required here or in the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a graph from the configured profile and write its edge list
    GenerateGraph,
    /// Write per-node exposure probabilities for the configured design
    ExposureProbs,
    /// Run the power grid
    Power,
    /// Run the degree-correlation study
    Degcor,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.0)
    }
}

impl From<netprop::Error> for Failure {
    fn from(e: netprop::Error) -> Self {
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
            | Io { .. } => Self::Config(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("netprop: config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("netprop: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = match cli.preset {
        Some(p) => RunConfig::preset(p),
        None => RunConfig::default(),
    };
    if let Some(path) = &cli.config {
        cfg = RunConfig::load(path, cfg)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(dir) = std::env::var_os(OUT_ENV) {
        cfg.output_dir = PathBuf::from(dir);
    }
    if let Some(dir) = &cli.out {
        cfg.output_dir = dir.clone();
    }
    let seed = cfg.require_seed()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Failure::Config("--workers must be >= 1".into()));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", cfg.output_dir.display())))?;

    pool.install(|| match cli.command {
        Command::GenerateGraph => generate_graph(&cfg, seed),
        Command::ExposureProbs => exposure_probs(&cfg, seed),
        Command::Power => power(&cfg, seed),
        Command::Degcor => degcor(&cfg, seed),
    })
}

fn graph_seed(cfg: &RunConfig, seed: u64) -> u64 {
    cfg.graph_seed.unwrap_or(seed)
}

fn load_graph(cfg: &RunConfig, seed: u64) -> Result<Graph, Failure> {
    match &cfg.graph {
        Some(GraphSource::Path(path)) => Ok(load_edge_list(path)?),
        Some(GraphSource::Profile { .. }) => Ok(generate(&cfg.profile()?, graph_seed(cfg, seed))?),
        None => Err(Failure::Config(
            "no graph source: set graph.path or graph.n/graph.density, or use --preset".into(),
        )),
    }
}

/// Write through a temporary file so that a failed run leaves nothing
/// behind under `path`.
fn write_file(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), Failure> {
    let tmp = path.with_extension("partial");
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        drop(w);
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Failure::Runtime(format!("{}: {e}", path.display())));
    }
    Ok(())
}

fn generate_graph(cfg: &RunConfig, seed: u64) -> Result<(), Failure> {
    let profile = cfg.profile()?;
    let g = generate(&profile, graph_seed(cfg, seed))?;
    let path = cfg.output_dir.join("graph.edges");
    write_file(&path, |w| g.write_edge_list(w))?;
    println!(
        "n={} edges={} density={} path={}",
        g.n(),
        g.edge_count(),
        g.density(),
        path.display()
    );
    Ok(())
}

fn exposure_probs(cfg: &RunConfig, seed: u64) -> Result<(), Failure> {
    let g = load_graph(cfg, seed)?;
    let design = cfg.design(g.n())?;
    let (probs, method) = match cfg.exposure_method {
        ExposureMethod::Closed => (exposure_probs_closed_form(&design, &g)?, "closed"),
        ExposureMethod::MonteCarlo => (
            exposure_probs_monte_carlo(
                &design,
                &g,
                cfg.exposure_replications,
                &StreamKey::new(seed).child("exposure", 0),
            )?,
            "mc",
        ),
    };
    write_file(&cfg.output_dir.join("exposure_probs.csv"), |w| {
        write_exposure_probs(&probs, method, seed, w)
    })
}

fn grid(cfg: &RunConfig) -> ScenarioGrid {
    ScenarioGrid {
        designs: cfg.grid_designs.clone().unwrap_or(vec![cfg.design_kind]),
        alphas: cfg.grid_alphas.clone().unwrap_or(vec![cfg.alpha]),
        gammas: cfg.grid_gammas.clone().unwrap_or(vec![cfg.gamma]),
        propagations: cfg
            .grid_propagations
            .clone()
            .unwrap_or(vec![cfg.propagation_kind]),
        temperatures: cfg
            .grid_temperatures
            .clone()
            .unwrap_or(vec![cfg.temperature]),
        steps: cfg.steps,
        require_treated_neighbor: cfg.require_treated_neighbor,
        effects: cfg.grid_effects.clone().unwrap_or(vec![cfg.effect_kind]),
        lambdas: cfg.grid_lambdas.clone().unwrap_or(vec![cfg.lambda]),
        tests: cfg.tests.clone(),
        replicates: cfg.replicates,
        permutations: cfg.permutations,
        joint_replications: cfg.joint_replications,
    }
}

fn power(cfg: &RunConfig, seed: u64) -> Result<(), Failure> {
    let g = load_graph(cfg, seed)?;
    let cells = run_grid_cells(&g, &grid(cfg), seed)?;
    if cfg.output_details {
        let dir = cfg.output_dir.join("details");
        fs::create_dir_all(&dir)?;
        for (c, cell) in cells.iter().enumerate() {
            write_file(&dir.join(format!("cell{c}_estimates.csv")), |w| {
                cell.write_estimates(seed, w)
            })?;
            write_file(&dir.join(format!("cell{c}_tests.csv")), |w| {
                cell.write_tests(seed, w)
            })?;
        }
    }
    let table = power_table(&cells, seed);
    write_file(&cfg.output_dir.join("power.csv"), |w| table.write_csv(w))
}

fn degcor(cfg: &RunConfig, seed: u64) -> Result<(), Failure> {
    let g = load_graph(cfg, seed)?;
    let study = DegcorStudy {
        alpha: cfg.degcor_alpha,
        gammas: cfg.degcor_gammas.clone(),
        propagation: PropagationModel::Ising {
            temperature: cfg.degcor_temperature,
            steps: cfg.steps,
            require_treated_neighbor: cfg.require_treated_neighbor,
        },
        effect: EffectModel::multiplicative(cfg.degcor_lambda),
        replicates: cfg.degcor_replicates,
        bin_width: cfg.degcor_bin_width,
    };
    let table = degree_correlation_study(&g, &study, seed)?;
    write_file(&cfg.output_dir.join("degcor.csv"), |w| table.write_csv(w))?;
    match power_trend(table.pooled()) {
        Ok(fit) => println!("slope={} se={} z={}", fit.slope, fit.se, fit.z()),
        Err(e) => println!("slope undefined: {e}"),
    }
    Ok(())
}
