//! Grid market model, state estimation and the attacker/defender game.

pub mod attack;
pub mod error;
pub mod equilibrium;
pub mod estimation;
pub mod grid;
pub mod linalg;
pub mod lp;
pub mod market;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type GridCase = grid::GridCase<f64>;
pub type MeasurementModel = grid::MeasurementModel<f64>;
pub type MarketSolution = market::MarketSolution<f64>;
pub type EstimationResult = estimation::EstimationResult<f64>;
pub type AttackVector = estimation::AttackVector<f64>;
pub type ShiftFactors = grid::ShiftFactors<f64>;
pub type AttackerSpec = attack::AttackerSpec<f64>;
pub type AttackContext = attack::AttackContext<f64>;
pub type Outcome = attack::Outcome<f64>;
pub type DefenseEvaluation = equilibrium::DefenseEvaluation<f64>;
pub type HierarchicalResult = equilibrium::HierarchicalResult<f64>;
pub type LearningConfig = equilibrium::LearningConfig<f64>;
