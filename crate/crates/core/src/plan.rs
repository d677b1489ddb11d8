//! Signal plans: the integer phase-duration vector, its layout over junctions,
//! and slicing against a partition.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::Partition;
use crate::network::TrafficScenario;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("invalid bounds [{lower}, {upper}]")]
    InvalidBounds { lower: u32, upper: u32 },
    #[error("sub-network index {index} out of range for {count} sub-networks")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("phase {index} duration {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        index: usize,
        value: u32,
        lower: u32,
        upper: u32,
    },
}

/// Inclusive range of allowed phase durations, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanBounds {
    pub lower: u32,
    pub upper: u32,
}

impl Default for PlanBounds {
    fn default() -> Self {
        PlanBounds {
            lower: 20,
            upper: 50,
        }
    }
}

impl PlanBounds {
    pub fn new(lower: u32, upper: u32) -> Result<Self, PlanError> {
        if lower == 0 || lower > upper {
            return Err(PlanError::InvalidBounds { lower, upper });
        }
        Ok(PlanBounds { lower, upper })
    }

    pub fn contains(&self, v: u32) -> bool {
        (self.lower..=self.upper).contains(&v)
    }
}

/// Phase durations for every junction, ordered by junction id then phase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignalPlan(pub Vec<u32>);

impl SignalPlan {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn durations(&self) -> &[u32] {
        &self.0
    }

    pub fn validate(&self, layout: &PlanLayout, bounds: PlanBounds) -> Result<(), PlanError> {
        if self.len() != layout.dim() {
            return Err(PlanError::DimensionMismatch {
                expected: layout.dim(),
                actual: self.len(),
            });
        }
        if let Some((index, &value)) = self.0.iter().enumerate().find(|(_, v)| !bounds.contains(**v)) {
            return Err(PlanError::OutOfBounds {
                index,
                value,
                lower: bounds.lower,
                upper: bounds.upper,
            });
        }
        Ok(())
    }
}

/// Where each junction's phases live in the plan vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanLayout {
    slots: Vec<(usize, usize)>,
    dim: usize,
}

impl PlanLayout {
    pub fn from_phase_counts(counts: &[usize]) -> Self {
        let mut slots = Vec::with_capacity(counts.len());
        let mut offset = 0;
        for &c in counts {
            slots.push((offset, c));
            offset += c;
        }
        PlanLayout { slots, dim: offset }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn junction_count(&self) -> usize {
        self.slots.len()
    }

    /// `(offset, phase_count)` of junction `j`.
    pub fn slot(&self, j: usize) -> (usize, usize) {
        self.slots[j]
    }

    pub fn junction_range(&self, j: usize) -> std::ops::Range<usize> {
        let (o, c) = self.slots[j];
        o..o + c
    }

    /// Plan positions of every junction in sub-network `i`, in layout order.
    pub fn subnetwork_indices(
        &self,
        partition: &Partition,
        i: usize,
    ) -> Result<Vec<usize>, PlanError> {
        if i >= partition.group_count() {
            return Err(PlanError::IndexOutOfRange {
                index: i,
                count: partition.group_count(),
            });
        }
        Ok(partition
            .members(i)
            .into_iter()
            .flat_map(|j| self.junction_range(j))
            .collect())
    }
}

pub fn build_layout(scenario: &TrafficScenario) -> PlanLayout {
    let counts: Vec<usize> = scenario
        .junctions
        .iter()
        .map(|j| j.kind.phase_count())
        .collect();
    PlanLayout::from_phase_counts(&counts)
}

/// Round half away from zero, then clamp into `bounds`.
pub fn round_plan(x: &[f64], bounds: PlanBounds) -> Vec<u32> {
    x.iter()
        .map(|&v| {
            let r = v.round();
            if r.is_nan() || r <= bounds.lower as f64 {
                bounds.lower
            } else if r >= bounds.upper as f64 {
                bounds.upper
            } else {
                r as u32
            }
        })
        .collect()
}

pub fn midpoint_plan(layout: &PlanLayout, bounds: PlanBounds) -> SignalPlan {
    let mid = 0.5 * (bounds.lower as f64 + bounds.upper as f64);
    SignalPlan(round_plan(&vec![mid; layout.dim()], bounds))
}

pub fn extract_subplan(
    plan: &SignalPlan,
    layout: &PlanLayout,
    partition: &Partition,
    i: usize,
) -> Result<Vec<u32>, PlanError> {
    if plan.len() != layout.dim() {
        return Err(PlanError::DimensionMismatch {
            expected: layout.dim(),
            actual: plan.len(),
        });
    }
    let idx = layout.subnetwork_indices(partition, i)?;
    Ok(idx.into_iter().map(|k| plan.0[k]).collect())
}

/// Returns a copy of `context` with sub-network `i`'s positions replaced by `sub`.
pub fn insert_subplan(
    context: &SignalPlan,
    sub: &[u32],
    layout: &PlanLayout,
    partition: &Partition,
    i: usize,
) -> Result<SignalPlan, PlanError> {
    let idx = layout.subnetwork_indices(partition, i)?;
    if sub.len() != idx.len() {
        return Err(PlanError::DimensionMismatch {
            expected: idx.len(),
            actual: sub.len(),
        });
    }
    if context.len() != layout.dim() {
        return Err(PlanError::DimensionMismatch {
            expected: layout.dim(),
            actual: context.len(),
        });
    }
    let mut out = context.clone();
    for (k, &v) in idx.into_iter().zip(sub) {
        out.0[k] = v;
    }
    Ok(out)
}
