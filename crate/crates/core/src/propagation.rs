//! Spread of treatment from directly treated nodes.

use std::fmt;

use crate::design::AssignmentVector;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{uniform_at, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PropagationModel {
    /// Logistic infection in `k - 2m` with temperature `F`.
    Ising {
        temperature: f64,
        steps: usize,
        require_treated_neighbor: bool,
    },
    /// Every neighbor of an exposed node becomes exposed.
    Perfect { steps: usize },
}

impl PropagationModel {
    /// One synchronous Ising step, literal infection formula.
    pub fn ising(temperature: f64) -> Self {
        Self::Ising {
            temperature,
            steps: 1,
            require_treated_neighbor: false,
        }
    }

    pub fn perfect() -> Self {
        Self::Perfect { steps: 1 }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Ising { .. } => "ising",
            Self::Perfect { .. } => "perfect",
        }
    }

    pub fn steps(&self) -> usize {
        match *self {
            Self::Ising { steps, .. } | Self::Perfect { steps } => steps,
        }
    }

    pub fn temperature(&self) -> Option<f64> {
        match *self {
            Self::Ising { temperature, .. } => Some(temperature),
            Self::Perfect { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps() == 0 {
            return Err(Error::InvalidParameter("steps must be >= 1".into()));
        }
        if let Self::Ising { temperature, .. } = *self {
            if temperature.is_nan() || temperature < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "temperature {temperature} must be >= 0"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for PropagationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ising {
                temperature,
                steps,
                require_treated_neighbor,
            } => write!(
                f,
                "ising(F={temperature}, steps={steps}, require_treated_neighbor={require_treated_neighbor})"
            ),
            Self::Perfect { steps } => write!(f, "perfect(steps={steps})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfectionState {
    pub exposed: Vec<bool>,
    pub t: usize,
}

impl InfectionState {
    pub fn initial(z: &AssignmentVector) -> Self {
        Self {
            exposed: z.as_slice().to_vec(),
            t: 0,
        }
    }

    pub fn exposed_count(&self) -> usize {
        self.exposed.iter().filter(|&&e| e).count()
    }
}

/// Probability that an unexposed node with degree `k` and `m` exposed
/// neighbors becomes exposed: `1 / (1 + exp((2/F)(k - 2m)))`.
///
/// At `F = 0` this is the pointwise limit (1, 1/2 or 0 by the sign of
/// `k - 2m`); `F = inf` gives 1/2 everywhere.
pub fn infection_probability(k: usize, m: usize, temperature: f64) -> Result<f64> {
    if m > k {
        return Err(Error::InvalidNeighborhood { k, m });
    }
    if temperature.is_nan() || temperature < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "temperature {temperature} must be >= 0"
        )));
    }
    Ok(infection_probability_unchecked(k, m, temperature))
}

pub(crate) fn infection_probability_unchecked(k: usize, m: usize, temperature: f64) -> f64 {
    let balance = k as f64 - 2.0 * m as f64;
    if balance == 0.0 {
        return 0.5;
    }
    if temperature == 0.0 {
        return if balance < 0.0 { 1.0 } else { 0.0 };
    }
    let x = 2.0 / temperature * balance;
    // logistic(-x), evaluated without overflow
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Advance one synchronous step. Node `i`'s draw comes from position `i` of
/// the stream `key/t/s.t`, so the result is independent of visiting order.
pub fn step(
    g: &Graph,
    s: &InfectionState,
    model: &PropagationModel,
    key: &StreamKey,
) -> Result<InfectionState> {
    model.validate()?;
    if s.exposed.len() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            actual: s.exposed.len(),
        });
    }
    let mut next = s.exposed.clone();
    match *model {
        PropagationModel::Perfect { .. } => {
            for (i, slot) in next.iter_mut().enumerate() {
                if !s.exposed[i] && g.neighbors(i).iter().any(|&j| s.exposed[j]) {
                    *slot = true;
                }
            }
        }
        PropagationModel::Ising {
            temperature,
            require_treated_neighbor,
            ..
        } => {
            let mut rng = key.child("t", s.t as u64).derive();
            for (i, slot) in next.iter_mut().enumerate() {
                if s.exposed[i] {
                    continue;
                }
                let neighbors = g.neighbors(i);
                let m = neighbors.iter().filter(|&&j| s.exposed[j]).count();
                if require_treated_neighbor && m == 0 {
                    continue;
                }
                let q = infection_probability_unchecked(neighbors.len(), m, temperature);
                if uniform_at(&mut rng, i as u64) < q {
                    *slot = true;
                }
            }
        }
    }
    Ok(InfectionState {
        exposed: next,
        t: s.t + 1,
    })
}

/// Apply `model.steps()` steps starting from `exposed = z` at `t = 0`.
pub fn run(
    g: &Graph,
    z: &AssignmentVector,
    model: &PropagationModel,
    key: &StreamKey,
) -> Result<InfectionState> {
    model.validate()?;
    if z.len() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            actual: z.len(),
        });
    }
    let mut state = InfectionState::initial(z);
    for _ in 0..model.steps() {
        state = step(g, &state, model, key)?;
    }
    Ok(state)
}
