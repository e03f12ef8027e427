//! The serving queue: a linear score over priority criteria with seeded
//! random tie-breaking, or an explicit operator-supplied order.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentId, Instance, PriorityCriteria};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorityError {
    #[error("invalid priority weights: {0}")]
    InvalidWeights(String),
    #[error("invalid priority order: {0}")]
    InvalidOrder(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorityWeights {
    pub family: f64,
    pub health: f64,
    pub wait: f64,
}

impl Default for PriorityWeights {
    fn default() -> Self {
        PriorityWeights {
            family: 1.0,
            health: 1.0,
            wait: 1.0,
        }
    }
}

impl PriorityWeights {
    pub fn new(family: f64, health: f64, wait: f64) -> Self {
        PriorityWeights {
            family,
            health,
            wait,
        }
    }

    pub fn validate(&self) -> Result<(), PriorityError> {
        let all = [self.family, self.health, self.wait];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(PriorityError::InvalidWeights(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(PriorityError::InvalidWeights(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn score(&self, c: &PriorityCriteria) -> f64 {
        self.family * f64::from(c.family_size)
            + self.health * c.health_risk
            + self.wait * f64::from(c.wait_time_days)
    }
}

/// Agents in descending priority; `order[0]` is served first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorityRanking {
    pub order: Vec<AgentId>,
    pub scores: BTreeMap<AgentId, f64>,
}

impl PriorityRanking {
    pub fn position(&self, agent: &AgentId) -> Option<usize> {
        self.order.iter().position(|a| a == agent)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Whether `order` lists every agent of `inst` exactly once.
    pub fn covers(&self, inst: &Instance) -> bool {
        is_permutation(inst, &self.order).is_ok()
    }

    /// Same scores convention as [`explicit_priority`], for an arbitrary order.
    pub(crate) fn from_order(order: Vec<AgentId>) -> Self {
        let n = order.len();
        let scores = order
            .iter()
            .enumerate()
            .map(|(pos, id)| (id.clone(), (n - pos) as f64))
            .collect();
        PriorityRanking { order, scores }
    }
}

fn is_permutation(inst: &Instance, order: &[AgentId]) -> Result<(), String> {
    let known: HashSet<&AgentId> = inst.agent_ids().collect();
    let mut seen = HashSet::new();
    for id in order {
        if !known.contains(id) {
            return Err(format!("unknown agent `{id}`"));
        }
        if !seen.insert(id) {
            return Err(format!("agent `{id}` appears more than once"));
        }
    }
    if seen.len() != known.len() {
        let missing: Vec<String> = inst
            .agent_ids()
            .filter(|a| !seen.contains(a))
            .map(|a| a.to_string())
            .collect();
        return Err(format!("missing agents: {}", missing.join(", ")));
    }
    Ok(())
}

/// Scores each agent with `weights` and orders by descending score. Agents
/// with equal scores are ordered by a shuffle seeded with `seed`, so the same
/// inputs always produce the same queue.
pub fn compute_priority(
    inst: &Instance,
    weights: &PriorityWeights,
    seed: u64,
) -> Result<PriorityRanking, PriorityError> {
    weights.validate()?;

    let mut scored: Vec<(AgentId, f64)> = inst
        .agents
        .iter()
        .map(|a| (a.id.clone(), weights.score(&a.criteria)))
        .collect();
    // Shuffle from a canonical order so the roster's row order is irrelevant.
    scored.sort_by(|a, b| a.0.cmp(&b.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scored.shuffle(&mut rng);
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));

    Ok(PriorityRanking {
        order: scored.iter().map(|(id, _)| id.clone()).collect(),
        scores: scored.into_iter().collect(),
    })
}

/// A queue in exactly the given order, scored `n, n-1, ..., 1`.
pub fn explicit_priority(
    inst: &Instance,
    order: &[AgentId],
) -> Result<PriorityRanking, PriorityError> {
    is_permutation(inst, order).map_err(PriorityError::InvalidOrder)?;
    Ok(PriorityRanking::from_order(order.to_vec()))
}
