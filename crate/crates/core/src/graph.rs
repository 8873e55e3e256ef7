//! The fixed experimental graph.
//!
//! Graphs are undirected and simple, with dense node ids `0..n`. They can be
//! read from plain edge lists or generated from a [`GraphProfile`].

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Bisection steps allowed when calibrating the geometric radius.
pub const MAX_CALIBRATION_ITERATIONS: usize = 64;
/// Number of seeded layouts averaged per calibration step.
pub const CALIBRATION_DRAWS: usize = 16;
/// Relative density error accepted after calibration.
pub const CALIBRATION_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adjacency: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Build a graph from unordered pairs. Duplicates collapse; self-loops
    /// and ids `>= n` are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            for node in [a, b] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop { line: 0, node: a });
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self::from_canonical(n, set.into_iter().collect()))
    }

    fn from_canonical(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            n,
            adjacency,
            edges,
        }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_canonical(n, Vec::new())
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        Self::from_canonical(n, (1..n).map(|i| (i - 1, i)).collect())
    }

    /// Cycle on `n >= 3` nodes.
    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "a cycle needs at least three nodes");
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        edges.push((0, n - 1));
        edges.sort_unstable();
        Self::from_canonical(n, edges)
    }

    /// Star with center `0` and `leaves` leaves.
    pub fn star(leaves: usize) -> Self {
        Self::from_canonical(leaves + 1, (1..=leaves).map(|i| (0, i)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(i, j)` with `i < j`, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor list of `i`. Panics when `i` is out of range.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> Result<usize> {
        self.adjacency
            .get(i)
            .map(Vec::len)
            .ok_or(Error::NodeOutOfRange { node: i, n: self.n })
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        2.0 * self.edges.len() as f64 / (self.n as f64 * (self.n as f64 - 1.0))
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        2.0 * self.edges.len() as f64 / self.n as f64
    }

    /// Write the canonical edge list (`i j` per line, `i < j`, sorted).
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (a, b) in &self.edges {
            writeln!(out, "{a} {b}")?;
        }
        Ok(())
    }

    pub fn to_edge_list_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_edge_list(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("edge list is ASCII")
    }
}

/// Parse edge-list text. Lines starting with `#` and blank lines are skipped.
/// The node count is one more than the largest id seen.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut set = BTreeSet::new();
    let mut max_id = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let mut next_id = |what: &str| -> Result<usize> {
            let field = fields.next().ok_or_else(|| Error::Parse {
                line,
                message: format!("missing {what} node id"),
            })?;
            field.parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("invalid node id {field:?}"),
            })
        };
        let a = next_id("first")?;
        let b = next_id("second")?;
        if let Some(extra) = fields.next() {
            return Err(Error::Parse {
                line,
                message: format!("unexpected trailing field {extra:?}"),
            });
        }
        if a == b {
            return Err(Error::SelfLoop { line, node: a });
        }
        max_id = Some(max_id.unwrap_or(0).max(a).max(b));
        set.insert((a.min(b), a.max(b)));
    }
    let n = max_id.ok_or(Error::EmptyEdgeList)? + 1;
    Ok(Graph::from_canonical(n, set.into_iter().collect()))
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_edge_list(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    ErdosRenyi,
    RandomGeometric,
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ErdosRenyi => "erdos-renyi",
            Self::RandomGeometric => "random-geometric",
        })
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erdos-renyi" => Ok(Self::ErdosRenyi),
            "random-geometric" => Ok(Self::RandomGeometric),
            other => Err(Error::InvalidProfile(format!(
                "unknown generator {other:?} (expected erdos-renyi or random-geometric)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphProfile {
    pub n: usize,
    pub target_density: f64,
    pub generator: GeneratorKind,
}

impl GraphProfile {
    pub fn new(n: usize, target_density: f64, generator: GeneratorKind) -> Result<Self> {
        let profile = Self {
            n,
            target_density,
            generator,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// 868 nodes at 2.2% density, geometric.
    pub fn desk() -> Self {
        Self {
            n: 868,
            target_density: 0.022,
            generator: GeneratorKind::RandomGeometric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidProfile(format!("n = {} < 2", self.n)));
        }
        if !(self.target_density > 0.0 && self.target_density <= 1.0) {
            return Err(Error::InvalidProfile(format!(
                "density {} outside (0, 1]",
                self.target_density
            )));
        }
        Ok(())
    }
}

/// Generate a graph for `profile`. Bit-reproducible for a fixed seed.
pub fn generate(profile: &GraphProfile, seed: u64) -> Result<Graph> {
    profile.validate()?;
    let key = StreamKey::new(seed).child("graph", 0);
    match profile.generator {
        GeneratorKind::ErdosRenyi => Ok(erdos_renyi(
            profile.n,
            profile.target_density,
            &key.child("erdos-renyi", 0),
        )),
        GeneratorKind::RandomGeometric => {
            let radius = calibrate_radius(profile, &key)?;
            let points = uniform_points(profile.n, &key.child("layout", 0));
            Ok(geometric_graph(&points, radius))
        }
    }
}

fn erdos_renyi(n: usize, p: f64, key: &StreamKey) -> Graph {
    let mut rng = key.derive();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_canonical(n, edges)
}

fn uniform_points(n: usize, key: &StreamKey) -> Vec<(f64, f64)> {
    let mut rng = key.derive();
    (0..n).map(|_| (rng.random(), rng.random())).collect()
}

fn geometric_graph(points: &[(f64, f64)], radius: f64) -> Graph {
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for (i, &(xi, yi)) in points.iter().enumerate() {
        for (j, &(xj, yj)) in points.iter().enumerate().skip(i + 1) {
            let (dx, dy) = (xi - xj, yi - yj);
            if dx * dx + dy * dy <= r2 {
                edges.push((i, j));
            }
        }
    }
    Graph::from_canonical(points.len(), edges)
}

/// Bisect the connection radius so the mean density over
/// [`CALIBRATION_DRAWS`] seeded layouts lands on the target.
fn calibrate_radius(profile: &GraphProfile, key: &StreamKey) -> Result<f64> {
    let n = profile.n;
    let pairs = (n * (n - 1) / 2) as f64;
    // Sorted pairwise squared distances per layout make each density
    // evaluation a binary search.
    let layouts: Vec<Vec<f64>> = (0..CALIBRATION_DRAWS as u64)
        .map(|d| {
            let points = uniform_points(n, &key.child("calibration", d));
            let mut dist = Vec::with_capacity(n * (n - 1) / 2);
            for (i, &(xi, yi)) in points.iter().enumerate() {
                for &(xj, yj) in &points[i + 1..] {
                    dist.push((xi - xj).powi(2) + (yi - yj).powi(2));
                }
            }
            dist.sort_unstable_by(f64::total_cmp);
            dist
        })
        .collect();
    let mean_density = |radius: f64| {
        let r2 = radius * radius;
        layouts
            .iter()
            .map(|d| d.partition_point(|&x| x <= r2) as f64 / pairs)
            .sum::<f64>()
            / layouts.len() as f64
    };

    let target = profile.target_density;
    let (mut lo, mut hi) = (0.0_f64, std::f64::consts::SQRT_2);
    let mut best = (f64::INFINITY, hi, mean_density(hi));
    for _ in 0..MAX_CALIBRATION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let density = mean_density(mid);
        let rel = (density - target).abs() / target;
        if rel < best.0 {
            best = (rel, mid, density);
        }
        if rel <= 1e-3 {
            break;
        }
        if density < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (rel, radius, achieved) = best;
    if rel > CALIBRATION_TOLERANCE {
        return Err(Error::CalibrationFailed {
            target,
            achieved,
            iterations: MAX_CALIBRATION_ITERATIONS,
        });
    }
    Ok(radius)
}
