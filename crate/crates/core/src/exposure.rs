//! Observable exposure conditions.
//!
//! A node's condition depends only on the assignment vector and the graph,
//! never on where treatment actually spread.

use std::fmt;
use std::str::FromStr;

use crate::design::AssignmentVector;
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExposureCondition {
    /// Directly treated.
    D1,
    /// Untreated with no treated neighbor.
    D00,
    /// Untreated with at least one treated neighbor.
    D01,
}

impl ExposureCondition {
    /// Column order used for probability matrices: `d1, d00, d01`.
    pub const ALL: [ExposureCondition; 3] = [Self::D1, Self::D00, Self::D01];

    pub fn index(self) -> usize {
        match self {
            Self::D1 => 0,
            Self::D00 => 1,
            Self::D01 => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::D1 => "d1",
            Self::D00 => "d00",
            Self::D01 => "d01",
        }
    }
}

impl fmt::Display for ExposureCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ExposureCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d1" => Ok(Self::D1),
            "d00" => Ok(Self::D00),
            "d01" => Ok(Self::D01),
            other => Err(Error::InvalidParameter(format!(
                "unknown exposure condition {other:?}"
            ))),
        }
    }
}

pub fn classify(g: &Graph, z: &AssignmentVector) -> Result<Vec<ExposureCondition>> {
    if z.len() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            actual: z.len(),
        });
    }
    Ok(classify_slice(g, z.as_slice()))
}

pub(crate) fn classify_slice(g: &Graph, z: &[bool]) -> Vec<ExposureCondition> {
    (0..g.n())
        .map(|i| {
            if z[i] {
                ExposureCondition::D1
            } else if g.neighbors(i).iter().any(|&j| z[j]) {
                ExposureCondition::D01
            } else {
                ExposureCondition::D00
            }
        })
        .collect()
}

/// Counts in the order `(d1, d01, d00)`.
pub fn condition_counts(conditions: &[ExposureCondition]) -> (usize, usize, usize) {
    conditions
        .iter()
        .fold((0, 0, 0), |(d1, d01, d00), c| match c {
            ExposureCondition::D1 => (d1 + 1, d01, d00),
            ExposureCondition::D01 => (d1, d01 + 1, d00),
            ExposureCondition::D00 => (d1, d01, d00 + 1),
        })
}
