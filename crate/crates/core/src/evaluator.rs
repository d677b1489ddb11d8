//! Counted, timed fitness evaluation of full signal plans.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use thiserror::Error;

use crate::network::TrafficScenario;
use crate::plan::SignalPlan;
use crate::sim::{SimConfig, SimError, Simulator};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("objective failed: {0}")]
    Objective(String),
}

type ObjectiveFn = dyn Fn(&SignalPlan) -> Result<f64, EvalError> + Send + Sync;

/// Wraps a plan objective with a call counter and a wall-clock accumulator.
/// Both are atomic, so one evaluator may be shared across threads.
pub struct Evaluator {
    objective: Box<ObjectiveFn>,
    calls: AtomicU64,
    nanos: AtomicU64,
}

impl Evaluator {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&SignalPlan) -> Result<f64, EvalError> + Send + Sync + 'static,
    {
        Evaluator {
            objective: Box::new(f),
            calls: AtomicU64::new(0),
            nanos: AtomicU64::new(0),
        }
    }

    /// Average vehicle delay from the built-in simulator.
    pub fn simulator(scenario: &TrafficScenario, config: SimConfig) -> Result<Self, SimError> {
        let sim = Simulator::new(scenario, config)?;
        Ok(Self::from_fn(move |plan| Ok(sim.run(plan)?.avg_delay)))
    }

    pub fn evaluate(&self, plan: &SignalPlan) -> Result<f64, EvalError> {
        let start = Instant::now();
        let out = (self.objective)(plan);
        self.nanos
            .fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        self.calls.fetch_add(1, Ordering::Relaxed);
        out
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// Seconds spent inside the objective.
    pub fn busy_seconds(&self) -> f64 {
        self.nanos.load(Ordering::Relaxed) as f64 * 1e-9
    }
}

impl std::fmt::Debug for Evaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Evaluator")
            .field("calls", &self.calls())
            .finish_non_exhaustive()
    }
}
