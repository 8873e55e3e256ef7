//! Simulation of randomized experiments on graphs where treatment spreads
//! to neighbors, and of the power of tests for that spillover.
//!
//! The pipeline runs assignment ([`design`]), propagation
//! ([`propagation`]), exposure classification ([`exposure`]), outcome
//! generation ([`outcomes`]), estimation ([`estimators`]) and randomization
//! tests ([`ritest`]). [`harness`] repeats it over grids of scenarios.
//! Every random draw comes from a [`rng::StreamKey`].

pub mod design;
pub mod error;
pub mod estimators;
pub mod exposure;
pub mod graph;
pub mod harness;
pub mod joint;
pub mod outcomes;
pub mod propagation;
pub mod ritest;
pub mod rng;

pub use design::{AssignmentVector, Design, ExposureProbs};
pub use error::{Error, Result};
pub use estimators::{EstimateReport, Estimator, ExposureContrast};
pub use exposure::ExposureCondition;
pub use graph::{GeneratorKind, Graph, GraphProfile};
pub use harness::{PowerTable, Scenario, ScenarioGrid, TestKind};
pub use outcomes::{EffectKind, EffectModel};
pub use propagation::{InfectionState, PropagationModel};
pub use ritest::{Hypothesis, NullKind, NullSpec, PermutationResult};
pub use rng::StreamKey;
