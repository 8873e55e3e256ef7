//! Run configuration: presets, a flat TOML file with dotted keys, and flag
//! overrides, applied in that order.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use netprop::graph::{GeneratorKind, GraphProfile};
use netprop::harness::{DesignFamily, PropagationFamily, DEFAULT_BIN_WIDTH};
use netprop::joint::DEFAULT_JOINT_REPLICATIONS;
use netprop::{Design, EffectKind, TestKind};

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "NETPROP_OUT";

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    Path(PathBuf),
    Profile {
        n: Option<usize>,
        density: Option<f64>,
        generator: GeneratorKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureMethod {
    Closed,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub graph: Option<GraphSource>,
    pub graph_seed: Option<u64>,

    pub design_kind: DesignFamily,
    pub alpha: f64,
    pub n_treated: Option<usize>,
    pub gamma: f64,

    pub propagation_kind: PropagationFamily,
    pub temperature: f64,
    pub steps: usize,
    pub require_treated_neighbor: bool,

    pub effect_kind: EffectKind,
    pub lambda: f64,

    pub grid_designs: Option<Vec<DesignFamily>>,
    pub grid_alphas: Option<Vec<f64>>,
    pub grid_gammas: Option<Vec<f64>>,
    pub grid_propagations: Option<Vec<PropagationFamily>>,
    pub grid_temperatures: Option<Vec<f64>>,
    pub grid_effects: Option<Vec<EffectKind>>,
    pub grid_lambdas: Option<Vec<f64>>,
    pub tests: Vec<TestKind>,
    pub replicates: usize,
    pub permutations: usize,
    pub joint_replications: usize,

    pub exposure_method: ExposureMethod,
    pub exposure_replications: usize,

    pub degcor_alpha: f64,
    pub degcor_gammas: Vec<f64>,
    pub degcor_temperature: f64,
    pub degcor_lambda: f64,
    pub degcor_replicates: usize,
    pub degcor_bin_width: f64,

    pub output_dir: PathBuf,
    pub output_details: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            graph: None,
            graph_seed: None,
            design_kind: DesignFamily::Bernoulli,
            alpha: 0.05,
            n_treated: None,
            gamma: 0.0,
            propagation_kind: PropagationFamily::Ising,
            temperature: 50.0,
            steps: 1,
            require_treated_neighbor: false,
            effect_kind: EffectKind::Multiplicative,
            lambda: 0.63,
            grid_designs: None,
            grid_alphas: None,
            grid_gammas: None,
            grid_propagations: None,
            grid_temperatures: None,
            grid_effects: None,
            grid_lambdas: None,
            tests: TestKind::ALL.to_vec(),
            replicates: 200,
            permutations: 500,
            joint_replications: DEFAULT_JOINT_REPLICATIONS,
            exposure_method: ExposureMethod::Closed,
            exposure_replications: 100_000,
            degcor_alpha: 0.05,
            degcor_gammas: vec![-0.04, -0.02, 0.0, 0.02, 0.04, 0.08],
            degcor_temperature: 50.0,
            degcor_lambda: 0.63,
            degcor_replicates: 200,
            degcor_bin_width: DEFAULT_BIN_WIDTH,
            output_dir: PathBuf::from("."),
            output_details: false,
        }
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let desk = GraphProfile::desk();
        let mut cfg = Self {
            graph: Some(GraphSource::Profile {
                n: Some(desk.n),
                density: Some(desk.target_density),
                generator: desk.generator,
            }),
            grid_designs: Some(vec![DesignFamily::Bernoulli]),
            grid_alphas: Some(vec![0.05, 0.25, 0.50]),
            grid_propagations: Some(vec![PropagationFamily::Ising, PropagationFamily::Perfect]),
            grid_temperatures: Some(vec![10.0, 50.0, 100.0]),
            grid_effects: Some(vec![EffectKind::Multiplicative, EffectKind::Additive]),
            grid_lambdas: Some(vec![0.26, 0.63]),
            ..Self::default()
        };
        if preset == Preset::Paper {
            cfg.replicates = 1000;
            cfg.degcor_replicates = 1000;
            cfg.grid_alphas = Some(vec![
                0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50,
            ]);
            cfg.grid_temperatures = Some((0..=10).map(|i| f64::from(i) * 10.0).collect());
        }
        cfg
    }

    pub fn load(path: &Path, base: Self) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .or_else(|e| err(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, base)
    }

    /// Overlay the keys of a TOML document on `base`.
    pub fn parse(text: &str, base: Self) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).or_else(|e| err(format!("invalid config: {e}")))?;
        let mut flat = BTreeMap::new();
        flatten("", &toml::Value::Table(table), &mut flat);
        let mut cfg = base;

        let has_path = flat.contains_key("graph.path");
        let profile_keys = ["graph.n", "graph.density", "graph.generator"];
        let has_profile = profile_keys.iter().any(|k| flat.contains_key(*k));
        if has_path && has_profile {
            return err("graph.path and graph.n/density/generator are mutually exclusive");
        }
        if has_path || has_profile {
            cfg.graph = None;
        }

        for (key, value) in &flat {
            let v = Value { key, value };
            match key.as_str() {
                "seed" => cfg.seed = Some(v.u64()?),
                "graph.path" => cfg.graph = Some(GraphSource::Path(PathBuf::from(v.str()?))),
                "graph.n" | "graph.density" | "graph.generator" => {}
                "graph.seed" => cfg.graph_seed = Some(v.u64()?),
                "design.kind" => cfg.design_kind = v.parse()?,
                "design.alpha" => cfg.alpha = v.f64()?,
                "design.n_treated" => cfg.n_treated = Some(v.usize()?),
                "design.gamma" => cfg.gamma = v.f64()?,
                "propagation.kind" => cfg.propagation_kind = v.parse()?,
                "propagation.temperature" => cfg.temperature = v.f64()?,
                "propagation.steps" => cfg.steps = v.usize()?,
                "propagation.require_treated_neighbor" => {
                    cfg.require_treated_neighbor = v.bool()?
                }
                "effects.kind" => cfg.effect_kind = v.parse()?,
                "effects.lambda" => cfg.lambda = v.f64()?,
                "grid.designs" => cfg.grid_designs = Some(v.list(|x| x.parse())?),
                "grid.alphas" => cfg.grid_alphas = Some(v.list(|x| x.f64())?),
                "grid.gammas" => cfg.grid_gammas = Some(v.list(|x| x.f64())?),
                "grid.propagations" => cfg.grid_propagations = Some(v.list(|x| x.parse())?),
                "grid.temperatures" => cfg.grid_temperatures = Some(v.list(|x| x.f64())?),
                "grid.effects" => cfg.grid_effects = Some(v.list(|x| x.parse())?),
                "grid.lambdas" => cfg.grid_lambdas = Some(v.list(|x| x.f64())?),
                "grid.tests" => cfg.tests = v.list(|x| x.parse())?,
                "grid.replicates" => cfg.replicates = v.usize()?,
                "grid.permutations" => cfg.permutations = v.usize()?,
                "grid.joint_replications" => cfg.joint_replications = v.usize()?,
                "exposure.method" => {
                    cfg.exposure_method = match v.str()? {
                        "closed" => ExposureMethod::Closed,
                        "mc" => ExposureMethod::MonteCarlo,
                        other => return err(format!("exposure.method: unknown method {other:?}")),
                    }
                }
                "exposure.replications" => cfg.exposure_replications = v.usize()?,
                "degcor.alpha" => cfg.degcor_alpha = v.f64()?,
                "degcor.gammas" => cfg.degcor_gammas = v.list(|x| x.f64())?,
                "degcor.temperature" => cfg.degcor_temperature = v.f64()?,
                "degcor.lambda" => cfg.degcor_lambda = v.f64()?,
                "degcor.replicates" => cfg.degcor_replicates = v.usize()?,
                "degcor.bin_width" => cfg.degcor_bin_width = v.f64()?,
                "output.dir" => cfg.output_dir = PathBuf::from(v.str()?),
                "output.details" => cfg.output_details = v.bool()?,
                other => return err(format!("unknown config key {other:?}")),
            }
        }

        if has_profile {
            let n = flat
                .get("graph.n")
                .map(|v| {
                    Value {
                        key: "graph.n",
                        value: v,
                    }
                    .usize()
                })
                .transpose()?;
            let density = flat
                .get("graph.density")
                .map(|v| {
                    Value {
                        key: "graph.density",
                        value: v,
                    }
                    .f64()
                })
                .transpose()?;
            let generator = flat
                .get("graph.generator")
                .map(|v| {
                    Value {
                        key: "graph.generator",
                        value: v,
                    }
                    .parse()
                })
                .transpose()?
                .unwrap_or(GeneratorKind::RandomGeometric);
            cfg.graph = Some(GraphSource::Profile {
                n,
                density,
                generator,
            });
        }
        Ok(cfg)
    }

    pub fn require_seed(&self) -> Result<u64> {
        match self.seed {
            Some(seed) => Ok(seed),
            None => err("a seed is required (--seed or the seed key)"),
        }
    }

    pub fn design(&self, n: usize) -> Result<Design> {
        Ok(match self.design_kind {
            DesignFamily::Bernoulli => Design::Bernoulli { alpha: self.alpha },
            DesignFamily::DegreeTilted => Design::DegreeTilted {
                alpha: self.alpha,
                gamma: self.gamma,
            },
            DesignFamily::CompleteCount => Design::CompleteCount {
                n_treated: self
                    .n_treated
                    .unwrap_or_else(|| (self.alpha * n as f64).round() as usize),
            },
        })
    }

    pub fn profile(&self) -> Result<GraphProfile> {
        match &self.graph {
            Some(GraphSource::Profile {
                n,
                density,
                generator,
            }) => {
                let (Some(n), Some(density)) = (n, density) else {
                    return err("graph profile needs graph.n and graph.density");
                };
                GraphProfile::new(*n, *density, *generator)
                    .or_else(|e| err(format!("graph profile: {e}")))
            }
            Some(GraphSource::Path(_)) => {
                err("generate-graph needs a graph profile, not graph.path")
            }
            None => {
                err("no graph source: set graph.path or graph.n/graph.density, or use --preset")
            }
        }
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut BTreeMap<String, toml::Value>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

struct Value<'a> {
    key: &'a str,
    value: &'a toml::Value,
}

impl Value<'_> {
    fn wrong<T>(&self, what: &str) -> Result<T> {
        err(format!("{}: expected {what}, got {}", self.key, self.value))
    }

    fn f64(&self) -> Result<f64> {
        match self.value {
            toml::Value::Float(x) => Ok(*x),
            toml::Value::Integer(i) => Ok(*i as f64),
            _ => self.wrong("a number"),
        }
    }

    fn u64(&self) -> Result<u64> {
        match self.value {
            toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            // seeds above i64::MAX can be written as strings
            toml::Value::String(s) => s.parse().or_else(|_| self.wrong("an unsigned integer")),
            _ => self.wrong("an unsigned integer"),
        }
    }

    fn usize(&self) -> Result<usize> {
        match self.value {
            toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            _ => self.wrong("a non-negative integer"),
        }
    }

    fn bool(&self) -> Result<bool> {
        match self.value {
            toml::Value::Boolean(b) => Ok(*b),
            _ => self.wrong("true or false"),
        }
    }

    fn str(&self) -> Result<&str> {
        match self.value {
            toml::Value::String(s) => Ok(s),
            _ => self.wrong("a string"),
        }
    }

    fn parse<T>(&self) -> Result<T>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        self.str()?
            .parse()
            .or_else(|e| err(format!("{}: {e}", self.key)))
    }

    fn list<T>(&self, item: impl Fn(&Value) -> Result<T>) -> Result<Vec<T>> {
        let toml::Value::Array(items) = self.value else {
            return self.wrong("a list");
        };
        if items.is_empty() {
            return err(format!("{}: list must not be empty", self.key));
        }
        items
            .iter()
            .map(|value| {
                item(&Value {
                    key: self.key,
                    value,
                })
            })
            .collect()
    }
}
