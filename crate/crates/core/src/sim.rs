//! Discrete-time (1 s) store-and-forward traffic simulator.
//!
//! Vehicles cross a link in `ceil(length / free_speed)` seconds, then wait in a
//! FIFO queue for their movement (approach, turn) at the downstream stop line.
//! A green movement discharges one vehicle per saturation headway. Receiving
//! links have unbounded storage. Arrivals and turn choices come from a
//! counter-based hash of the seed, so the arrival stream does not depend on the
//! signal plan.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Direction, JunctionKind, TrafficScenario, Turn};
use crate::plan::{build_layout, PlanBounds, PlanError, PlanLayout, SignalPlan};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid plan: {0}")]
    InvalidPlan(#[from] PlanError),
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
    #[error("entrance index {0} out of range")]
    UnknownEntrance(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Simulated seconds.
    pub horizon: u32,
    /// Seconds between successive discharges of one movement.
    pub saturation_headway: f64,
    pub seed: u64,
    /// Phase duration bounds enforced on incoming plans.
    pub bounds: PlanBounds,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 500,
            saturation_headway: 2.0,
            seed: 0,
            bounds: PlanBounds::default(),
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<(), SimError> {
        if self.horizon < 1 {
            return Err(SimError::InvalidConfig("horizon must be at least 1 s".into()));
        }
        if !(self.saturation_headway >= 1.0) {
            return Err(SimError::InvalidConfig(format!(
                "saturation headway must be at least 1 s, got {}",
                self.saturation_headway
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub avg_delay: f64,
    pub total_delay: f64,
    pub vehicles_entered: u64,
    pub vehicles_exited: u64,
    pub vehicles_in_network: u64,
    /// Wall-clock seconds spent in the run.
    pub wall_time: f64,
}

/// Phase active at time `t` for a junction with the given phase durations.
pub fn phase_at(durations: &[u32], t: u64) -> usize {
    let cycle: u64 = durations.iter().map(|&d| d as u64).sum();
    if cycle == 0 {
        return 0;
    }
    let mut r = t % cycle;
    for (k, &d) in durations.iter().enumerate() {
        if r < d as u64 {
            return k;
        }
        r -= d as u64;
    }
    durations.len() - 1
}

/// Same as [`phase_at`], addressing the junction through a plan layout.
pub fn phase_at_junction(plan: &SignalPlan, layout: &PlanLayout, junction: usize, t: u64) -> usize {
    phase_at(&plan.durations()[layout.junction_range(junction)], t)
}

/// Phase table.
///
/// Crossroads: P0 north/south through and right, P1 north/south left,
/// P2 east/west through and right, P3 east/west left. T-junctions give each
/// present approach (in N, E, S, W order) its own phase with all movements green.
pub fn movement_green(
    kind: JunctionKind,
    approaches: &[Direction],
    phase: usize,
    approach: Direction,
    turn: Turn,
) -> bool {
    match kind {
        JunctionKind::Crossroad => {
            let north_south = matches!(approach, Direction::N | Direction::S);
            let left = turn == Turn::Left;
            match phase {
                0 => north_south && !left,
                1 => north_south && left,
                2 => !north_south && !left,
                3 => !north_south && left,
                _ => false,
            }
        }
        JunctionKind::TJunction => {
            let mut present: Vec<Direction> = approaches.to_vec();
            present.sort();
            present.get(phase) == Some(&approach)
        }
    }
}

const TAG_ARRIVAL: u64 = 0xA5A5_0001;
const TAG_TURN: u64 = 0xA5A5_0002;

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in [0, 1) keyed by `(seed, tag, a, b)`.
fn keyed_uniform(seed: u64, tag: u64, a: u64, b: u64) -> f64 {
    let h = mix64(mix64(mix64(seed ^ mix64(tag)) ^ a) ^ b);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy)]
enum Target {
    /// Arrives on `approach` of junction `junction`.
    Junction { junction: usize, approach: Direction },
    Exit,
}

#[derive(Debug, Clone, Copy)]
struct Link {
    travel: u32,
    target: Target,
}

#[derive(Debug, Clone)]
struct CompiledJunction {
    kind: JunctionKind,
    /// Cumulative turning fractions per approach, left/through/right; `None` if absent.
    turns: [Vec<(Turn, f64)>; 4],
    out_links: [Option<usize>; 4],
    /// Green movement indices (approach * 3 + turn) per phase.
    green: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy)]
struct Vehicle {
    key: u64,
    waited: u64,
    joined: u64,
}

/// A scenario compiled for repeated simulation.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    layout: PlanLayout,
    links: Vec<Link>,
    junctions: Vec<CompiledJunction>,
    entrance_links: Vec<usize>,
    arrival_prob: Vec<f64>,
}

impl Simulator {
    pub fn new(scenario: &TrafficScenario, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let layout = build_layout(scenario);
        let mut links = Vec::with_capacity(scenario.links.len());
        let mut out_links = vec![[None; 4]; scenario.junctions.len()];
        let mut entrance_links = vec![usize::MAX; scenario.entrances.len()];
        for (k, l) in scenario.links.iter().enumerate() {
            let target = match scenario.junction_index(&l.to) {
                Some(junction) => Target::Junction {
                    junction,
                    approach: l.approach_dir,
                },
                None => Target::Exit,
            };
            links.push(Link {
                travel: scenario.link_travel_time(l),
                target,
            });
            if let Some(j) = scenario.junction_index(&l.from) {
                out_links[j][l.approach_dir.opposite().index()] = Some(k);
            } else if let Some(e) = scenario.entrance_index(&l.from) {
                entrance_links[e] = k;
            }
        }
        let junctions = scenario
            .junctions
            .iter()
            .zip(out_links)
            .map(|(j, out_links)| {
                let mut turns: [Vec<(Turn, f64)>; 4] = Default::default();
                for (&approach, rates) in &j.turn_rates {
                    turns[approach.index()] = rates.available().collect();
                }
                let green = (0..j.kind.phase_count())
                    .map(|p| {
                        let mut g = Vec::new();
                        for &a in &j.approaches {
                            for t in Turn::ALL {
                                if movement_green(j.kind, &j.approaches, p, a, t) {
                                    g.push(a.index() * 3 + t.index());
                                }
                            }
                        }
                        g
                    })
                    .collect();
                CompiledJunction {
                    kind: j.kind,
                    turns,
                    out_links,
                    green,
                }
            })
            .collect();
        let arrival_prob = scenario
            .entrances
            .iter()
            .map(|e| (e.demand_vph / 3600.0).min(1.0))
            .collect();
        Ok(Simulator {
            config,
            layout,
            links,
            junctions,
            entrance_links,
            arrival_prob,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn layout(&self) -> &PlanLayout {
        &self.layout
    }

    /// Simulates `plan` with seeded Bernoulli arrivals at every entrance.
    pub fn run(&self, plan: &SignalPlan) -> Result<SimResult, SimError> {
        self.run_inner(plan, None)
    }

    /// Simulates `plan` with an explicit list of `(entrance index, second)` arrivals
    /// in place of the seeded arrival process.
    pub fn run_scripted(&self, plan: &SignalPlan, arrivals: &[(usize, u32)]) -> Result<SimResult, SimError> {
        if let Some(&(e, _)) = arrivals.iter().find(|(e, _)| *e >= self.entrance_links.len()) {
            return Err(SimError::UnknownEntrance(e));
        }
        self.run_inner(plan, Some(arrivals))
    }

    fn run_inner(&self, plan: &SignalPlan, scripted: Option<&[(usize, u32)]>) -> Result<SimResult, SimError> {
        let started = Instant::now();
        plan.validate(&self.layout, self.config.bounds)?;
        let horizon = self.config.horizon as u64;
        let seed = self.config.seed;
        let headway = self.config.saturation_headway;

        let cycles: Vec<(Vec<u32>, u64)> = (0..self.junctions.len())
            .map(|j| {
                let d = plan.durations()[self.layout.junction_range(j)].to_vec();
                let c = d.iter().map(|&x| x as u64).sum();
                (d, c)
            })
            .collect();

        let mut scripted_at: Vec<Vec<usize>> = Vec::new();
        if let Some(list) = scripted {
            scripted_at = vec![Vec::new(); horizon as usize];
            for &(e, t) in list {
                if (t as u64) < horizon {
                    scripted_at[t as usize].push(e);
                }
            }
        }

        let max_travel = self.links.iter().map(|l| l.travel).max().unwrap_or(1) as usize;
        let mut calendar: Vec<Vec<(Vehicle, usize)>> = vec![Vec::new(); horizon as usize + max_travel + 1];
        let mut queues: Vec<[VecDeque<Vehicle>; 12]> = vec![Default::default(); self.junctions.len()];
        let mut next_free: Vec<[f64; 12]> = vec![[0.0; 12]; self.junctions.len()];

        let mut entered = 0u64;
        let mut exited = 0u64;
        let mut total_delay = 0u64;

        for t in 0..horizon {
            // arrivals at entrances
            let mut spawn = |e: usize, calendar: &mut Vec<Vec<(Vehicle, usize)>>| {
                let link = self.entrance_links[e];
                let v = Vehicle {
                    key: ((e as u64) << 32) | t,
                    waited: 0,
                    joined: t,
                };
                calendar[(t + self.links[link].travel as u64) as usize].push((v, link));
                entered += 1;
            };
            if scripted.is_some() {
                for &e in &scripted_at[t as usize] {
                    spawn(e, &mut calendar);
                }
            } else {
                for (e, &p) in self.arrival_prob.iter().enumerate() {
                    if p > 0.0 && keyed_uniform(seed, TAG_ARRIVAL, e as u64, t) < p {
                        spawn(e, &mut calendar);
                    }
                }
            }

            // vehicles reaching the end of a link
            for (mut v, link) in std::mem::take(&mut calendar[t as usize]) {
                match self.links[link].target {
                    Target::Exit => {
                        exited += 1;
                        total_delay += v.waited;
                    }
                    Target::Junction { junction, approach } => {
                        let turn = self.choose_turn(seed, &v, junction, approach);
                        v.joined = t;
                        queues[junction][approach.index() * 3 + turn.index()].push_back(v);
                    }
                }
            }

            // discharge green movements
            for (j, junction) in self.junctions.iter().enumerate() {
                let (durations, cycle) = &cycles[j];
                let phase = phase_at_cycle(durations, *cycle, t);
                for &mv in &junction.green[phase] {
                    if queues[j][mv].is_empty() || (t as f64) < next_free[j][mv] {
                        continue;
                    }
                    let mut v = queues[j][mv].pop_front().expect("non-empty");
                    v.waited += t - v.joined;
                    next_free[j][mv] = t as f64 + headway;
                    let exit = Direction::from_index(mv / 3).exit_side(Turn::ALL[mv % 3]);
                    let link = junction.out_links[exit.index()]
                        .expect("validated scenario has an outgoing link for every available turn");
                    calendar[(t + self.links[link].travel as u64) as usize].push((v, link));
                }
            }
        }

        let mut in_network = 0u64;
        for slot in &calendar[horizon as usize..] {
            for (v, _) in slot {
                in_network += 1;
                total_delay += v.waited;
            }
        }
        for qs in &queues {
            for q in qs {
                for v in q {
                    in_network += 1;
                    total_delay += v.waited + (horizon - v.joined);
                }
            }
        }
        debug_assert_eq!(entered, exited + in_network);

        let total_delay = total_delay as f64;
        Ok(SimResult {
            avg_delay: total_delay / entered.max(1) as f64,
            total_delay,
            vehicles_entered: entered,
            vehicles_exited: exited,
            vehicles_in_network: in_network,
            wall_time: started.elapsed().as_secs_f64(),
        })
    }

    fn choose_turn(&self, seed: u64, v: &Vehicle, junction: usize, approach: Direction) -> Turn {
        let options = &self.junctions[junction].turns[approach.index()];
        let u = keyed_uniform(seed, TAG_TURN, v.key, junction as u64);
        let mut acc = 0.0;
        for &(turn, rate) in options {
            acc += rate;
            if u < acc {
                return turn;
            }
        }
        options
            .iter()
            .rev()
            .find(|(_, r)| *r > 0.0)
            .or(options.last())
            .map(|(t, _)| *t)
            .expect("every present approach has a movement")
    }

    /// Junction kind by index, for reporting.
    pub fn junction_kind(&self, j: usize) -> JunctionKind {
        self.junctions[j].kind
    }
}

fn phase_at_cycle(durations: &[u32], cycle: u64, t: u64) -> usize {
    let mut r = t % cycle;
    for (k, &d) in durations.iter().enumerate() {
        if r < d as u64 {
            return k;
        }
        r -= d as u64;
    }
    durations.len() - 1
}

pub fn simulate(scenario: &TrafficScenario, plan: &SignalPlan, config: SimConfig) -> Result<SimResult, SimError> {
    Simulator::new(scenario, config)?.run(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_lookup() {
        let d = [40, 33, 42, 26];
        assert_eq!(phase_at(&d, 0), 0);
        assert_eq!(phase_at(&d, 39), 0);
        assert_eq!(phase_at(&d, 40), 1);
        assert_eq!(phase_at(&d, 140), 3);
        assert_eq!(phase_at(&d, 141), 0);
    }

    #[test]
    fn crossroad_phase_table() {
        let all = Direction::ALL;
        let k = JunctionKind::Crossroad;
        assert!(movement_green(k, &all, 0, Direction::N, Turn::Through));
        assert!(!movement_green(k, &all, 0, Direction::E, Turn::Through));
        assert!(movement_green(k, &all, 3, Direction::W, Turn::Left));
    }

    #[test]
    fn every_movement_green_in_exactly_one_phase() {
        let crossroad = Direction::ALL.to_vec();
        let t_junctions = [
            vec![Direction::E, Direction::S, Direction::W],
            vec![Direction::N, Direction::S, Direction::W],
            vec![Direction::N, Direction::E, Direction::W],
            vec![Direction::N, Direction::E, Direction::S],
        ];
        let mut cases = vec![(JunctionKind::Crossroad, crossroad)];
        cases.extend(t_junctions.into_iter().map(|a| (JunctionKind::TJunction, a)));
        for (kind, approaches) in cases {
            for &a in &approaches {
                for t in Turn::ALL {
                    let n = (0..kind.phase_count())
                        .filter(|&p| movement_green(kind, &approaches, p, a, t))
                        .count();
                    assert_eq!(n, 1, "{kind:?} {a} {t:?}");
                }
            }
        }
    }

    #[test]
    fn t_junction_phase_per_present_approach() {
        let aps = [Direction::E, Direction::S, Direction::W];
        for (k, &a) in aps.iter().enumerate() {
            for t in Turn::ALL {
                assert!(movement_green(JunctionKind::TJunction, &aps, k, a, t));
            }
        }
    }

    #[test]
    fn keyed_uniform_is_stable_and_in_range() {
        let a = keyed_uniform(7, TAG_ARRIVAL, 3, 100);
        assert_eq!(a, keyed_uniform(7, TAG_ARRIVAL, 3, 100));
        assert_ne!(a, keyed_uniform(8, TAG_ARRIVAL, 3, 100));
        for i in 0..1000 {
            let u = keyed_uniform(1, TAG_TURN, i, i * 7);
            assert!((0.0..1.0).contains(&u));
        }
    }
}
