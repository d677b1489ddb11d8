//! Surrogate-assisted cooperative co-evolution over sub-networks.
//!
//! The full plan `x_b` is the shared context. Each visit to a sub-network
//! seeds a database of random sub-plans simulated inside `x_b`, then
//! alternates: fit a cubic RBF to the database, minimize it with the archive
//! Gaussian EDA, round the minimizer, and simulate it in context. After the
//! visit, the best sub-plan is written back into `x_b` if it improves the
//! context's fitness.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eda2::{run_eda2_batch, Bounds, Eda2Config, Eda2Error};
use crate::evaluator::{EvalError, Evaluator};
use crate::decompose::Partition;
use crate::plan::{insert_subplan, midpoint_plan, PlanBounds, PlanError, PlanLayout, SignalPlan};
use crate::rbf::{IncrementalRbf, RbfError};
use crate::runlog::{RunLog, RunOutcome, VisitSummary};

pub use crate::plan::round_plan;

#[derive(Debug, Error)]
pub enum ScsoError {
    #[error("budget too small: visit {visit} needs {needed} simulations, {available} available")]
    BudgetTooSmall {
        visit: usize,
        needed: usize,
        available: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Eda2(#[from] Eda2Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScsoConfig {
    /// Co-evolution cycles.
    pub cycles: usize,
    /// Total simulator calls, including the initial context evaluation.
    pub max_simulations: usize,
    /// Database seed size per sub-network dimension.
    pub k_multiplier: usize,
    pub eda2: Eda2Config,
    pub bounds: PlanBounds,
    pub seed: u64,
}

impl Default for ScsoConfig {
    fn default() -> Self {
        ScsoConfig {
            cycles: 2,
            max_simulations: 5000,
            k_multiplier: 3,
            eda2: Eda2Config::default(),
            bounds: PlanBounds::default(),
            seed: 0,
        }
    }
}

/// Splits `max_ts` evenly over `c·m` visits; the remainder goes one apiece to
/// the earliest visits.
pub fn allocate_budget(max_ts: usize, cycles: usize, groups: usize) -> Result<Vec<usize>, ScsoError> {
    if cycles == 0 || groups == 0 {
        return Err(ScsoError::InvalidConfig(format!(
            "cycles ({cycles}) and sub-networks ({groups}) must be positive"
        )));
    }
    let visits = cycles * groups;
    let base = max_ts / visits;
    let extra = max_ts % visits;
    Ok((0..visits).map(|v| base + usize::from(v < extra)).collect())
}

/// Simulated sub-plans for one sub-network, valid for the context they were simulated in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubDatabase {
    pub entries: Vec<(Vec<u32>, f64)>,
}

impl SubDatabase {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, sub: &[u32]) -> bool {
        self.entries.iter().any(|(p, _)| p == sub)
    }

    /// Lowest-fitness entry; the earliest wins ties.
    pub fn best(&self) -> Option<&(Vec<u32>, f64)> {
        self.entries
            .iter()
            .reduce(|a, b| if b.1 < a.1 { b } else { a })
    }
}

/// One sub-network evaluated inside a fixed context plan.
pub struct SubProblem<'a> {
    pub index: usize,
    pub context: &'a SignalPlan,
    pub layout: &'a PlanLayout,
    pub partition: &'a Partition,
    pub evaluator: &'a Evaluator,
}

impl SubProblem<'_> {
    pub fn dim(&self) -> usize {
        self.partition
            .members(self.index)
            .into_iter()
            .map(|j| self.layout.slot(j).1)
            .sum()
    }

    pub fn simulate(&self, sub: &[u32]) -> Result<f64, ScsoError> {
        let plan = insert_subplan(self.context, sub, self.layout, self.partition, self.index)?;
        Ok(self.evaluator.evaluate(&plan)?)
    }
}

fn random_subplan<R: Rng + ?Sized>(dim: usize, bounds: PlanBounds, rng: &mut R) -> Vec<u32> {
    (0..dim)
        .map(|_| rng.random_range(bounds.lower..=bounds.upper))
        .collect()
}

/// Moves `sub` by ±1 on random coordinates until it is not in `db`.
fn perturb_until_new<R: Rng + ?Sized>(
    mut sub: Vec<u32>,
    db: &SubDatabase,
    bounds: PlanBounds,
    rng: &mut R,
) -> Vec<u32> {
    if bounds.lower == bounds.upper {
        return sub;
    }
    let mut attempts = 0;
    while db.contains(&sub) && attempts < 10_000 {
        let k = rng.random_range(0..sub.len());
        let up = rng.random_bool(0.5);
        let v = sub[k];
        sub[k] = match (up, v) {
            (true, v) if v < bounds.upper => v + 1,
            (false, v) if v > bounds.lower => v - 1,
            (_, v) if v < bounds.upper => v + 1,
            (_, v) => v - 1,
        };
        attempts += 1;
    }
    sub
}

/// Runs one visit: seeds `db` up to `k = k_multiplier·n` entries, then spends the
/// rest of `budget` on surrogate-guided refinements. Every simulated sub-plan is
/// reported through `on_simulated`. Consumes exactly `budget` simulator calls.
pub fn optimize_subnetwork<R: Rng + ?Sized>(
    problem: &SubProblem<'_>,
    db: &mut SubDatabase,
    budget: usize,
    config: &ScsoConfig,
    rng: &mut R,
    mut on_simulated: impl FnMut(&[u32], f64),
) -> Result<(), ScsoError> {
    let dim = problem.dim();
    let k = config.k_multiplier * dim;
    let seeds = k.saturating_sub(db.len());
    if budget < seeds + 1 {
        return Err(ScsoError::BudgetTooSmall {
            visit: problem.index,
            needed: seeds + 1,
            available: budget,
        });
    }
    for _ in 0..seeds {
        let sub = random_subplan(dim, config.bounds, rng);
        let f = problem.simulate(&sub)?;
        on_simulated(&sub, f);
        db.entries.push((sub, f));
    }

    let search_box = Bounds::uniform(dim, config.bounds.lower as f64, config.bounds.upper as f64);
    let mut surrogate = IncrementalRbf::new();
    for _ in seeds..budget {
        let points: Vec<Vec<f64>> = db
            .entries
            .iter()
            .map(|(p, _)| p.iter().map(|&v| v as f64).collect())
            .collect();
        let values: Vec<f64> = db.entries.iter().map(|(_, f)| *f).collect();
        let candidate = match surrogate.fit(&points, &values) {
            Ok(model) => {
                let out = run_eda2_batch(
                    |xs| Ok::<_, Eda2Error>(model.values_columns(xs)),
                    &search_box,
                    &config.eda2,
                    rng,
                )?;
                round_plan(&out.best_point, config.bounds)
            }
            Err(RbfError::SingularSystem | RbfError::TooFewPoints { .. }) => db
                .best()
                .map(|(p, _)| p.clone())
                .unwrap_or_else(|| random_subplan(dim, config.bounds, rng)),
            Err(e @ RbfError::DimensionMismatch { .. }) => {
                unreachable!("database entries share one dimension: {e}")
            }
        };
        let candidate = perturb_until_new(candidate, db, config.bounds, rng);
        let f = problem.simulate(&candidate)?;
        on_simulated(&candidate, f);
        db.entries.push((candidate, f));
    }
    Ok(())
}

/// Runs the full cooperative loop and returns the final context plan.
pub fn run_scso(
    layout: &PlanLayout,
    partition: &Partition,
    config: &ScsoConfig,
    evaluator: &Evaluator,
) -> Result<RunOutcome, ScsoError> {
    let started = Instant::now();
    let busy_before = evaluator.busy_seconds();
    config.eda2.validate()?;
    if partition.junction_count() != layout.junction_count() {
        return Err(ScsoError::InvalidConfig(format!(
            "partition covers {} junctions, layout has {}",
            partition.junction_count(),
            layout.junction_count()
        )));
    }
    let m = partition.group_count();
    let budgets = allocate_budget(config.max_simulations, config.cycles, m)?;
    let dims: Vec<usize> = (0..m)
        .map(|i| {
            partition
                .members(i)
                .into_iter()
                .map(|j| layout.slot(j).1)
                .sum()
        })
        .collect();
    for (v, &b) in budgets.iter().enumerate() {
        let needed = config.k_multiplier * dims[v % m] + 1;
        if b < needed {
            return Err(ScsoError::BudgetTooSmall {
                visit: v,
                needed,
                available: b,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = RunLog::default();
    let mut context = midpoint_plan(layout, config.bounds);

    // The midpoint evaluation doubles as the first database entry of the first visit.
    let first_f = evaluator.evaluate(&context)?;
    log.record(0, 0, first_f);
    let mut context_fitness = first_f;
    let mut carried = Some((
        crate::plan::extract_subplan(&context, layout, partition, 0)?,
        first_f,
    ));

    for (v, &budget) in budgets.iter().enumerate() {
        let cycle = v / m;
        let i = v % m;
        let mut db = SubDatabase::default();
        let mut remaining = budget;
        if let Some(entry) = carried.take() {
            db.entries.push(entry);
            remaining -= 1;
        }
        let before = context_fitness;
        {
            let problem = SubProblem {
                index: i,
                context: &context,
                layout,
                partition,
                evaluator,
            };
            optimize_subnetwork(&problem, &mut db, remaining, config, &mut rng, |_, f| {
                log.record(cycle, i, f)
            })?;
        }
        if let Some((sub, f)) = db.best() {
            if *f < context_fitness {
                context = insert_subplan(&context, sub, layout, partition, i)?;
                context_fitness = *f;
            }
        }
        log.visits.push(VisitSummary {
            cycle,
            subnetwork: i,
            fitness_before: before,
            fitness_after: context_fitness,
            simulations: budget,
        });
    }

    let total = started.elapsed().as_secs_f64();
    log.sim_wall_s = evaluator.busy_seconds() - busy_before;
    log.other_wall_s = (total - log.sim_wall_s).max(0.0);
    Ok(RunOutcome {
        best_plan: context,
        best_fitness: context_fitness,
        log,
    })
}
