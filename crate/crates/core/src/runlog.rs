//! Per-simulation run records and their CSV form.

use std::io::Write;

use serde::Serialize;

use crate::plan::SignalPlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimRecord {
    pub sim_index: usize,
    pub cycle: usize,
    pub subnetwork: usize,
    pub candidate_fitness: f64,
    pub best_so_far: f64,
}

/// Fitness of the context plan before and after one sub-network visit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VisitSummary {
    pub cycle: usize,
    pub subnetwork: usize,
    pub fitness_before: f64,
    pub fitness_after: f64,
    pub simulations: usize,
}

impl VisitSummary {
    pub fn delay_reduction(&self) -> f64 {
        self.fitness_before - self.fitness_after
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<SimRecord>,
    pub visits: Vec<VisitSummary>,
    pub sim_wall_s: f64,
    pub other_wall_s: f64,
}

impl RunLog {
    pub fn record(&mut self, cycle: usize, subnetwork: usize, fitness: f64) {
        let best_so_far = self
            .records
            .last()
            .map_or(fitness, |r| r.best_so_far.min(fitness));
        self.records.push(SimRecord {
            sim_index: self.records.len(),
            cycle,
            subnetwork,
            candidate_fitness: fitness,
            best_so_far,
        });
    }

    pub fn best_so_far(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_so_far).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Delay reduction per visit, as `cycle,subnetwork,fitness_before,fitness_after,delay_reduction,simulations`.
    pub fn write_visits_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "cycle",
            "subnetwork",
            "fitness_before",
            "fitness_after",
            "delay_reduction",
            "simulations",
        ])?;
        for v in &self.visits {
            w.write_record([
                v.cycle.to_string(),
                v.subnetwork.to_string(),
                v.fitness_before.to_string(),
                v.fitness_after.to_string(),
                v.delay_reduction().to_string(),
                v.simulations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Final plan of an optimizer run with its log.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub best_plan: SignalPlan,
    pub best_fitness: f64,
    pub log: RunLog,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_so_far_tracks_running_minimum() {
        let mut log = RunLog::default();
        for f in [5.0, 7.0, 3.0, 4.0] {
            log.record(0, 0, f);
        }
        assert_eq!(log.best_so_far(), vec![5.0, 5.0, 3.0, 3.0]);
        assert_eq!(log.records[3].sim_index, 3);
    }

    #[test]
    fn csv_columns() {
        let mut log = RunLog::default();
        log.record(1, 2, 10.5);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "sim_index,cycle,subnetwork,candidate_fitness,best_so_far\n0,1,2,10.5,10.5\n"
        );
    }
}
