//! Multi-seed experiment batches and their CSV outputs.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{eda2_global, random_search};
use crate::decompose::{build_junction_graph, load_partition, newman_fast, DecomposeError, Partition};
use crate::eda2::Eda2Config;
use crate::evaluator::Evaluator;
use crate::network::{load_scenario, ScenarioError, TrafficScenario};
use crate::plan::{build_layout, PlanBounds, PlanLayout};
use crate::runlog::RunOutcome;
use crate::scso::{run_scso, ScsoConfig, ScsoError};
use crate::sim::{SimConfig, SimError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("seed {seed}: {source}")]
    Run {
        seed: u64,
        #[source]
        source: ScsoError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Scso,
    Eda2Global,
    Random,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Scso => "scso",
            Algorithm::Eda2Global => "eda2-global",
            Algorithm::Random => "random",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scso" => Ok(Algorithm::Scso),
            "eda2-global" => Ok(Algorithm::Eda2Global),
            "random" => Ok(Algorithm::Random),
            other => Err(format!("unknown algorithm {other:?} (expected scso, eda2-global or random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionSource {
    Newman,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: PathBuf,
    pub algorithm: Algorithm,
    pub partition: PartitionSource,
    pub cycles: usize,
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Simulator settings; the arrival seed is shared by every run so all
    /// algorithms face the same traffic.
    pub sim: SimConfig,
    pub eda2: Eda2Config,
    pub k_multiplier: usize,
}

impl ExperimentSpec {
    pub fn new(scenario: impl Into<PathBuf>, algorithm: Algorithm, out_dir: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            scenario: scenario.into(),
            algorithm,
            partition: PartitionSource::Newman,
            cycles: 2,
            budget: 5000,
            seeds: vec![0],
            out_dir: out_dir.into(),
            sim: SimConfig::default(),
            eda2: Eda2Config::default(),
            k_multiplier: 3,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.seeds.is_empty() {
            return Err(ExperimentError::Invalid("no seeds given".into()));
        }
        if self.budget == 0 {
            return Err(ExperimentError::Invalid("budget must be positive".into()));
        }
        if self.algorithm == Algorithm::Scso && self.cycles == 0 {
            return Err(ExperimentError::Invalid("cycles must be positive".into()));
        }
        Ok(())
    }

    fn bounds(&self) -> PlanBounds {
        self.sim.bounds
    }
}

/// A scenario with its plan layout and decomposition, ready to be optimized.
#[derive(Debug, Clone)]
pub struct PreparedProblem {
    pub scenario: TrafficScenario,
    pub layout: PlanLayout,
    pub partition: Partition,
}

impl PreparedProblem {
    pub fn load(scenario: &Path, source: &PartitionSource) -> Result<Self, ExperimentError> {
        let scenario = load_scenario(scenario)?;
        Self::from_scenario(scenario, source)
    }

    pub fn from_scenario(scenario: TrafficScenario, source: &PartitionSource) -> Result<Self, ExperimentError> {
        let layout = build_layout(&scenario);
        let partition = match source {
            PartitionSource::Newman => {
                if scenario.junctions.len() == 1 {
                    Partition::single(1)
                } else {
                    newman_fast(&build_junction_graph(&scenario)?)?
                }
            }
            PartitionSource::File(path) => load_partition(path, &scenario)?,
        };
        Ok(PreparedProblem {
            scenario,
            layout,
            partition,
        })
    }
}

/// One optimizer run on `problem` with the algorithm rng seeded by `seed`.
pub fn run_single(
    problem: &PreparedProblem,
    spec: &ExperimentSpec,
    seed: u64,
) -> Result<RunOutcome, ExperimentError> {
    let evaluator = Evaluator::simulator(&problem.scenario, spec.sim)?;
    let wrap = |source| ExperimentError::Run { seed, source };
    match spec.algorithm {
        Algorithm::Scso => {
            let config = ScsoConfig {
                cycles: spec.cycles,
                max_simulations: spec.budget,
                k_multiplier: spec.k_multiplier,
                eda2: spec.eda2,
                bounds: spec.bounds(),
                seed,
            };
            run_scso(&problem.layout, &problem.partition, &config, &evaluator).map_err(wrap)
        }
        Algorithm::Eda2Global => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            eda2_global(&evaluator, &problem.layout, spec.bounds(), spec.budget, &spec.eda2, &mut rng)
                .map_err(wrap)
        }
        Algorithm::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_search(&evaluator, &problem.layout, spec.bounds(), spec.budget, &mut rng).map_err(wrap)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub final_fitness: f64,
    pub sims_used: usize,
    pub sim_wall_s: f64,
    pub other_wall_s: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<SeedSummary>,
    pub outcomes: Vec<RunOutcome>,
}

impl ExperimentReport {
    pub fn final_fitness(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.final_fitness).collect()
    }

    pub fn median_fitness(&self) -> f64 {
        median(&self.final_fitness())
    }
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| ExperimentError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Csv {
        path: path.display().to_string(),
        source,
    }
}

pub fn run_log_path(out_dir: &Path, algorithm: Algorithm, seed: u64) -> PathBuf {
    out_dir.join(format!("{}_seed{seed}.csv", algorithm.name()))
}

fn write_seed_outputs(
    out_dir: &Path,
    algorithm: Algorithm,
    seed: u64,
    outcome: &RunOutcome,
) -> Result<(), ExperimentError> {
    let path = run_log_path(out_dir, algorithm, seed);
    outcome.log.write_csv(create(&path)?).map_err(csv_err(&path))?;
    if !outcome.log.visits.is_empty() {
        let path = out_dir.join(format!("{}_seed{seed}_visits.csv", algorithm.name()));
        outcome.log.write_visits_csv(create(&path)?).map_err(csv_err(&path))?;
    }
    let path = out_dir.join(format!("{}_seed{seed}_plan.json", algorithm.name()));
    let text = serde_json::to_string(&outcome.best_plan).expect("plans serialize");
    std::fs::write(&path, text + "\n").map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Runs every seed (in parallel), writing each seed's files as soon as it
/// finishes, then writes `summary.csv` with a trailing median row.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, ExperimentError> {
    spec.validate()?;
    let problem = PreparedProblem::load(&spec.scenario, &spec.partition)?;
    run_prepared(&problem, spec)
}

pub fn run_prepared(problem: &PreparedProblem, spec: &ExperimentSpec) -> Result<ExperimentReport, ExperimentError> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.out_dir).map_err(|source| ExperimentError::Io {
        path: spec.out_dir.display().to_string(),
        source,
    })?;
    let results: Vec<Result<RunOutcome, ExperimentError>> = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let outcome = run_single(problem, spec, seed)?;
            write_seed_outputs(&spec.out_dir, spec.algorithm, seed, &outcome)?;
            Ok(outcome)
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut outcomes = Vec::with_capacity(results.len());
    for (&seed, result) in spec.seeds.iter().zip(results) {
        let outcome = result?;
        rows.push(SeedSummary {
            seed,
            algorithm: spec.algorithm,
            final_fitness: outcome.best_fitness,
            sims_used: outcome.log.records.len(),
            sim_wall_s: outcome.log.sim_wall_s,
            other_wall_s: outcome.log.other_wall_s,
        });
        outcomes.push(outcome);
    }
    let report = ExperimentReport { rows, outcomes };
    write_summary(&spec.out_dir.join("summary.csv"), &report)?;
    Ok(report)
}

pub fn write_summary(path: &Path, report: &ExperimentReport) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = csv_err(path);
    let res: csv::Result<()> = (|| {
        w.write_record(["seed", "algo", "final_fitness", "sims_used", "sim_wall_s", "other_wall_s"])?;
        for r in &report.rows {
            w.write_record([
                r.seed.to_string(),
                r.algorithm.to_string(),
                r.final_fitness.to_string(),
                r.sims_used.to_string(),
                format!("{:.6}", r.sim_wall_s),
                format!("{:.6}", r.other_wall_s),
            ])?;
        }
        let med = |f: fn(&SeedSummary) -> f64| median(&report.rows.iter().map(f).collect::<Vec<_>>());
        let algo = report.rows.first().map_or(String::new(), |r| r.algorithm.to_string());
        w.write_record([
            "median".to_string(),
            algo,
            med(|r| r.final_fitness).to_string(),
            med(|r| r.sims_used as f64).to_string(),
            format!("{:.6}", med(|r| r.sim_wall_s)),
            format!("{:.6}", med(|r| r.other_wall_s)),
        ])?;
        w.flush()?;
        Ok(())
    })();
    res.map_err(err)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub cycles: usize,
    pub median_fitness: f64,
    pub best_fitness: f64,
    pub worst_fitness: f64,
}

/// Repeats an SCSO experiment for each cycle count, each in its own `c<k>`
/// subdirectory, and writes `sweep.csv` with one row per count.
pub fn run_cycle_sweep(
    problem: &PreparedProblem,
    spec: &ExperimentSpec,
    cycle_counts: &[usize],
) -> Result<Vec<SweepRow>, ExperimentError> {
    if spec.algorithm != Algorithm::Scso {
        return Err(ExperimentError::Invalid("cycle sweeps apply to scso only".into()));
    }
    let mut rows = Vec::with_capacity(cycle_counts.len());
    for &c in cycle_counts {
        let sub = ExperimentSpec {
            cycles: c,
            out_dir: spec.out_dir.join(format!("c{c}")),
            ..spec.clone()
        };
        let report = run_prepared(problem, &sub)?;
        let fit = report.final_fitness();
        rows.push(SweepRow {
            cycles: c,
            median_fitness: median(&fit),
            best_fitness: fit.iter().copied().fold(f64::INFINITY, f64::min),
            worst_fitness: fit.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let path = spec.out_dir.join("sweep.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let res: csv::Result<()> = (|| {
        w.write_record(["cycles", "median_fitness", "best_fitness", "worst_fitness"])?;
        for r in &rows {
            w.write_record([
                r.cycles.to_string(),
                r.median_fitness.to_string(),
                r.best_fitness.to_string(),
                r.worst_fitness.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(csv_err(&path))?;
    Ok(rows)
}

/// Reads the final-fitness column of a summary CSV (the median row is
/// skipped), or a headerless single-column list of numbers.
pub fn read_sample(path: &Path) -> Result<Vec<f64>, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let bad = |msg: String| ExperimentError::Invalid(format!("{}: {msg}", path.display()));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let header = lines.peek().copied().unwrap_or_default();
    if header.split(',').any(|h| h.trim() == "final_fitness") {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers().map_err(csv_err(path))?.clone();
        let col = headers.iter().position(|h| h.trim() == "final_fitness").expect("checked");
        let seed_col = headers.iter().position(|h| h.trim() == "seed");
        let mut out = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err(path))?;
            if seed_col.is_some_and(|c| rec.get(c) == Some("median")) {
                continue;
            }
            let v = rec.get(col).unwrap_or_default();
            out.push(v.trim().parse().map_err(|_| bad(format!("not a number: {v:?}")))?);
        }
        Ok(out)
    } else {
        lines
            .map(|l| l.trim().parse().map_err(|_| bad(format!("not a number: {l:?}"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in [Algorithm::Scso, Algorithm::Eda2Global, Algorithm::Random] {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("pso".parse::<Algorithm>().is_err());
    }

    #[test]
    fn empty_seed_list_rejected() {
        let mut spec = ExperimentSpec::new("x.json", Algorithm::Random, "out");
        spec.seeds.clear();
        assert!(matches!(spec.validate(), Err(ExperimentError::Invalid(_))));
    }
}
