//! Cooperative, surrogate-assisted optimization of fixed-time signal plans
//! for signalized road networks.

pub mod baselines;
pub mod decompose;
pub mod eda2;
pub mod evaluator;
pub mod experiment;
pub mod network;
pub mod plan;
pub mod rbf;
pub mod runlog;
pub mod scso;
pub mod sim;
pub mod stats;

pub use decompose::{newman_fast, Partition};
pub use evaluator::Evaluator;
pub use network::{load_scenario, TrafficScenario};
pub use plan::{PlanBounds, PlanLayout, SignalPlan};
pub use scso::{run_scso, ScsoConfig};
pub use sim::{SimConfig, Simulator};
