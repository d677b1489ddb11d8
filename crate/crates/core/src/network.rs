//! Scenario model: junctions, approaches, turning rates, links and entrance demand.
//!
//! Scenarios are read from a JSON document (see `scenarios/` at the repository
//! root). After loading, junctions are stored sorted by id so that junction
//! index `j` is also the junction's position in a [`PlanLayout`](crate::plan::PlanLayout).

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Turn rates within this distance of 1.0 are accepted.
pub const TURN_RATE_TOLERANCE: f64 = 1e-9;

/// Shortest accepted link, in meters.
pub const MIN_LINK_LENGTH: f64 = 10.0;

/// Default free-flow speed, 50 km/h in m/s.
pub const DEFAULT_FREE_SPEED: f64 = 13.89;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

/// Compass side of a junction. An approach named `N` carries traffic arriving
/// from the north, i.e. southbound vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    pub fn index(self) -> usize {
        match self {
            Direction::N => 0,
            Direction::E => 1,
            Direction::S => 2,
            Direction::W => 3,
        }
    }

    pub fn from_index(i: usize) -> Direction {
        Direction::ALL[i % 4]
    }

    pub fn opposite(self) -> Direction {
        Direction::from_index(self.index() + 2)
    }

    /// Heading of vehicles that arrive on this approach.
    pub fn heading(self) -> &'static str {
        match self {
            Direction::N => "southbound",
            Direction::E => "westbound",
            Direction::S => "northbound",
            Direction::W => "eastbound",
        }
    }

    /// Side through which a vehicle arriving on this approach leaves after `turn`
    /// (right-hand traffic).
    pub fn exit_side(self, turn: Turn) -> Direction {
        match turn {
            Turn::Left => Direction::from_index(self.index() + 1),
            Turn::Through => self.opposite(),
            Turn::Right => Direction::from_index(self.index() + 3),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Direction::N => "N",
            Direction::E => "E",
            Direction::S => "S",
            Direction::W => "W",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Turn {
    Left,
    Through,
    Right,
}

impl Turn {
    pub const ALL: [Turn; 3] = [Turn::Left, Turn::Through, Turn::Right];

    pub fn index(self) -> usize {
        match self {
            Turn::Left => 0,
            Turn::Through => 1,
            Turn::Right => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JunctionKind {
    Crossroad,
    TJunction,
}

impl JunctionKind {
    pub fn phase_count(self) -> usize {
        match self {
            JunctionKind::Crossroad => 4,
            JunctionKind::TJunction => 3,
        }
    }

    fn approach_count(self) -> usize {
        match self {
            JunctionKind::Crossroad => 4,
            JunctionKind::TJunction => 3,
        }
    }
}

/// Turning fractions for one approach; `None` marks a movement that does not exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnRates {
    pub left: Option<f64>,
    pub through: Option<f64>,
    pub right: Option<f64>,
}

impl TurnRates {
    pub fn get(&self, turn: Turn) -> Option<f64> {
        match turn {
            Turn::Left => self.left,
            Turn::Through => self.through,
            Turn::Right => self.right,
        }
    }

    /// Available movements with their fractions, in left/through/right order.
    pub fn available(&self) -> impl Iterator<Item = (Turn, f64)> + '_ {
        Turn::ALL
            .into_iter()
            .filter_map(move |t| self.get(t).map(|r| (t, r)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub id: String,
    pub kind: JunctionKind,
    pub approaches: Vec<Direction>,
    pub turn_rates: BTreeMap<Direction, TurnRates>,
}

impl Junction {
    pub fn has_side(&self, d: Direction) -> bool {
        self.approaches.contains(&d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadLink {
    pub from: String,
    pub to: String,
    pub length_m: f64,
    /// Approach of `to` on which the link arrives. The link leaves `from`
    /// through the opposite side.
    pub approach_dir: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entrance {
    pub id: String,
    pub demand_vph: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficScenario {
    pub name: String,
    #[serde(default = "default_free_speed")]
    pub free_speed_mps: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub topology_approximate: bool,
    pub junctions: Vec<Junction>,
    pub links: Vec<RoadLink>,
    pub entrances: Vec<Entrance>,
}

fn default_free_speed() -> f64 {
    DEFAULT_FREE_SPEED
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<TrafficScenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<TrafficScenario, ScenarioError> {
    let scenario: TrafficScenario = serde_json::from_str(text)?;
    TrafficScenario::new(scenario)
}

pub fn write_scenario(scenario: &TrafficScenario) -> String {
    serde_json::to_string_pretty(scenario).expect("scenario serializes")
}

impl TrafficScenario {
    /// Normalizes ordering (junctions by id, approaches N/E/S/W) and validates.
    pub fn new(mut scenario: TrafficScenario) -> Result<TrafficScenario, ScenarioError> {
        scenario.junctions.sort_by(|a, b| a.id.cmp(&b.id));
        for j in &mut scenario.junctions {
            j.approaches.sort();
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn junction_index(&self, id: &str) -> Option<usize> {
        self.junctions
            .binary_search_by(|j| j.id.as_str().cmp(id))
            .ok()
    }

    pub fn entrance_index(&self, id: &str) -> Option<usize> {
        self.entrances.iter().position(|e| e.id == id)
    }

    /// Travel time over a link at free speed, whole seconds (at least 1).
    pub fn link_travel_time(&self, link: &RoadLink) -> u32 {
        ((link.length_m / self.free_speed_mps).ceil() as u32).max(1)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.free_speed_mps.is_finite() && self.free_speed_mps > 0.0) {
            return Err(invalid(format!(
                "free_speed_mps must be positive, got {}",
                self.free_speed_mps
            )));
        }
        if self.junctions.is_empty() {
            return Err(invalid("scenario has no junctions"));
        }

        let mut seen = BTreeSet::new();
        for j in &self.junctions {
            if !seen.insert(j.id.as_str()) {
                return Err(invalid(format!("duplicate junction id {}", j.id)));
            }
            validate_junction(j)?;
        }
        for e in &self.entrances {
            if !seen.insert(e.id.as_str()) {
                return Err(invalid(format!("duplicate node id {}", e.id)));
            }
            if !(e.demand_vph.is_finite() && e.demand_vph >= 0.0) {
                return Err(invalid(format!(
                    "entrance {}: demand must be non-negative, got {}",
                    e.id, e.demand_vph
                )));
            }
        }

        let n = self.junctions.len();
        let mut outgoing: Vec<[bool; 4]> = vec![[false; 4]; n];
        let mut incoming: Vec<[bool; 4]> = vec![[false; 4]; n];
        let mut incident = vec![0usize; n];
        let mut entrance_out: HashMap<&str, usize> = HashMap::new();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];

        for link in &self.links {
            let from_j = self.junction_index(&link.from);
            let to_j = self.junction_index(&link.to);
            let from_e = self.entrance_index(&link.from).is_some();
            let to_e = self.entrance_index(&link.to).is_some();
            let name = format!("link {} -> {}", link.from, link.to);
            if from_j.is_none() && !from_e {
                return Err(invalid(format!("{name}: unknown endpoint {}", link.from)));
            }
            if to_j.is_none() && !to_e {
                return Err(invalid(format!("{name}: unknown endpoint {}", link.to)));
            }
            if from_e && to_e {
                return Err(invalid(format!("{name}: joins two entrances")));
            }
            if link.from == link.to {
                return Err(invalid(format!("{name}: self-loop")));
            }
            if !(link.length_m.is_finite() && link.length_m >= MIN_LINK_LENGTH) {
                return Err(invalid(format!(
                    "{name}: length {} m is below {MIN_LINK_LENGTH} m",
                    link.length_m
                )));
            }
            if let Some(t) = to_j {
                let side = link.approach_dir;
                if !self.junctions[t].has_side(side) {
                    return Err(invalid(format!(
                        "{name}: junction {} has no {side} approach",
                        link.to
                    )));
                }
                if std::mem::replace(&mut incoming[t][side.index()], true) {
                    return Err(invalid(format!(
                        "{name}: junction {} already has a link arriving on {side}",
                        link.to
                    )));
                }
                incident[t] += 1;
            }
            if let Some(f) = from_j {
                let side = link.approach_dir.opposite();
                if !self.junctions[f].has_side(side) {
                    return Err(invalid(format!(
                        "{name}: junction {} has no {side} side to leave through",
                        link.from
                    )));
                }
                if std::mem::replace(&mut outgoing[f][side.index()], true) {
                    return Err(invalid(format!(
                        "{name}: junction {} already has a link leaving through {side}",
                        link.from
                    )));
                }
                incident[f] += 1;
            }
            if from_e {
                *entrance_out.entry(link.from.as_str()).or_default() += 1;
            }
            if let (Some(f), Some(t)) = (from_j, to_j) {
                adjacency[f].push(t);
                adjacency[t].push(f);
            }
        }

        for e in &self.entrances {
            let count = entrance_out.get(e.id.as_str()).copied().unwrap_or(0);
            if count != 1 {
                return Err(invalid(format!(
                    "entrance {} has {count} outbound links, expected exactly 1",
                    e.id
                )));
            }
        }

        for (idx, j) in self.junctions.iter().enumerate() {
            for (&approach, rates) in &j.turn_rates {
                for (turn, _) in rates.available() {
                    let exit = approach.exit_side(turn);
                    if !outgoing[idx][exit.index()] {
                        return Err(invalid(format!(
                            "junction {}, approach {approach} ({}): {:?} turn leads to side {exit} with no outgoing link",
                            j.id,
                            approach.heading(),
                            turn
                        )));
                    }
                }
            }
            if n > 1 && incident[idx] < 2 {
                return Err(invalid(format!(
                    "junction {} has {} incident links, expected at least 2",
                    j.id, incident[idx]
                )));
            }
        }

        let mut reached = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        reached[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if !reached[v] {
                    reached[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(k) = reached.iter().position(|r| !r) {
            return Err(invalid(format!(
                "junction graph is disconnected: {} is unreachable from {}",
                self.junctions[k].id, self.junctions[0].id
            )));
        }
        Ok(())
    }
}

fn validate_junction(j: &Junction) -> Result<(), ScenarioError> {
    let expected = j.kind.approach_count();
    let distinct: BTreeSet<_> = j.approaches.iter().collect();
    if distinct.len() != j.approaches.len() {
        return Err(invalid(format!("junction {}: repeated approach", j.id)));
    }
    if j.approaches.len() != expected {
        return Err(invalid(format!(
            "junction {}: {:?} needs {expected} approaches, got {}",
            j.id,
            j.kind,
            j.approaches.len()
        )));
    }
    for d in &j.approaches {
        if !j.turn_rates.contains_key(d) {
            return Err(invalid(format!(
                "junction {}, approach {d} ({}): missing turn rates",
                j.id,
                d.heading()
            )));
        }
    }
    for (&approach, rates) in &j.turn_rates {
        let where_ = format!("junction {}, approach {approach} ({})", j.id, approach.heading());
        if !j.has_side(approach) {
            return Err(invalid(format!("{where_}: turn rates given for an absent approach")));
        }
        let mut sum = 0.0;
        let mut any = false;
        for (turn, rate) in rates.available() {
            if !(rate.is_finite() && (0.0..=1.0).contains(&rate)) {
                return Err(invalid(format!("{where_}: {turn:?} rate {rate} outside [0, 1]")));
            }
            let exit = approach.exit_side(turn);
            if !j.has_side(exit) {
                return Err(invalid(format!(
                    "{where_}: {turn:?} turn leads to absent side {exit}"
                )));
            }
            sum += rate;
            any = true;
        }
        if !any {
            return Err(invalid(format!("{where_}: no available movements")));
        }
        if (sum - 1.0).abs() > TURN_RATE_TOLERANCE {
            return Err(invalid(format!("{where_}: turn rates sum to {sum}, expected 1")));
        }
    }
    Ok(())
}
