//! Reference optimizers sharing the simulator budget: uniform random search
//! and the archive Gaussian EDA applied to the whole plan at once.

use std::time::Instant;

use rand::Rng;

use crate::eda2::{Bounds, Eda2Config, Eda2State};
use crate::evaluator::Evaluator;
use crate::plan::{round_plan, PlanBounds, PlanLayout, SignalPlan};
use crate::runlog::{RunLog, RunOutcome};
use crate::scso::ScsoError;

fn finish(log: &mut RunLog, evaluator: &Evaluator, busy_before: f64, started: Instant) {
    log.sim_wall_s = evaluator.busy_seconds() - busy_before;
    log.other_wall_s = (started.elapsed().as_secs_f64() - log.sim_wall_s).max(0.0);
}

/// Evaluates `budget` uniform integer plans and keeps the first best.
pub fn random_search<R: Rng + ?Sized>(
    evaluator: &Evaluator,
    layout: &PlanLayout,
    bounds: PlanBounds,
    budget: usize,
    rng: &mut R,
) -> Result<RunOutcome, ScsoError> {
    if budget == 0 {
        return Err(ScsoError::BudgetTooSmall {
            visit: 0,
            needed: 1,
            available: 0,
        });
    }
    let started = Instant::now();
    let busy_before = evaluator.busy_seconds();
    let mut log = RunLog::default();
    let mut best: Option<(SignalPlan, f64)> = None;
    for _ in 0..budget {
        let plan = SignalPlan(
            (0..layout.dim())
                .map(|_| rng.random_range(bounds.lower..=bounds.upper))
                .collect(),
        );
        let f = evaluator.evaluate(&plan)?;
        log.record(0, 0, f);
        if best.as_ref().is_none_or(|(_, b)| f < *b) {
            best = Some((plan, f));
        }
    }
    finish(&mut log, evaluator, busy_before, started);
    let (best_plan, best_fitness) = best.expect("budget >= 1");
    Ok(RunOutcome {
        best_plan,
        best_fitness,
        log,
    })
}

/// Runs the EDA directly on the full plan, rounding every candidate before it
/// is simulated, until `budget` simulations are spent.
pub fn eda2_global<R: Rng + ?Sized>(
    evaluator: &Evaluator,
    layout: &PlanLayout,
    bounds: PlanBounds,
    budget: usize,
    config: &Eda2Config,
    rng: &mut R,
) -> Result<RunOutcome, ScsoError> {
    if budget < config.population_size {
        return Err(ScsoError::BudgetTooSmall {
            visit: 0,
            needed: config.population_size,
            available: budget,
        });
    }
    let started = Instant::now();
    let busy_before = evaluator.busy_seconds();
    let search_box = Bounds::uniform(layout.dim(), bounds.lower as f64, bounds.upper as f64);
    let mut state = Eda2State::new(*config, search_box)?;
    let mut log = RunLog::default();
    let mut best: Option<(SignalPlan, f64)> = None;
    let mut spent = 0;
    while spent < budget {
        let points = state.ask(rng)?;
        let mut evaluated = Vec::with_capacity(points.len());
        let mut fitness = Vec::with_capacity(points.len());
        for p in points {
            if spent == budget {
                break;
            }
            let plan = SignalPlan(round_plan(&p, bounds));
            let f = evaluator.evaluate(&plan)?;
            spent += 1;
            log.record(0, 0, f);
            if best.as_ref().is_none_or(|(_, b)| f < *b) {
                best = Some((plan.clone(), f));
            }
            // the model learns from the rounded point that was actually simulated
            evaluated.push(plan.0.iter().map(|&v| v as f64).collect());
            fitness.push(f);
        }
        if evaluated.len() == config.population_size {
            state.tell(evaluated, fitness)?;
        }
    }
    finish(&mut log, evaluator, busy_before, started);
    let (best_plan, best_fitness) = best.expect("budget >= population size");
    Ok(RunOutcome {
        best_plan,
        best_fitness,
        log,
    })
}
