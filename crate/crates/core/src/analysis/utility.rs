use std::collections::{BTreeMap, BTreeSet, HashMap};

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::mechanism::{allocate_with_pools, serial_dictatorship, Pool, RoutingPolicy};
use crate::model::{AgentId, Instance, Matching, Placement, ProviderId, Rank};
use crate::priority::PriorityRanking;

/// Exhaustive enumeration visits n! queues; 8! = 40320.
pub const MAX_EXHAUSTIVE_AGENTS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityOverride {
    pub agent: AgentId,
    pub option: Placement,
    pub value: f64,
}

/// Cardinal utilities. Unless overridden, an option at list position `r`
/// is worth `m - r`, and outside or unlisted options are worth 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UtilityModel {
    pub overrides: Vec<UtilityOverride>,
}

impl UtilityModel {
    pub fn with(mut self, agent: &str, option: Placement, value: f64) -> Self {
        self.overrides.push(UtilityOverride {
            agent: AgentId::new(agent),
            option,
            value,
        });
        self
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        match self
            .overrides
            .iter()
            .find(|o| !o.value.is_finite() || o.value < 0.0)
        {
            Some(bad) => Err(AnalysisError::InvalidUtility(format!(
                "u({}, {}) = {} is not finite and nonnegative",
                bad.agent, bad.option, bad.value
            ))),
            None => Ok(()),
        }
    }

    pub fn utility(&self, inst: &Instance, agent: &AgentId, placement: &Placement) -> f64 {
        if let Some(o) = self
            .overrides
            .iter()
            .rev()
            .find(|o| &o.agent == agent && &o.option == placement)
        {
            return o.value;
        }
        let rank = inst
            .agent(agent)
            .map_or(Rank::Unranked, |a| a.rank_of(placement));
        match rank {
            Rank::Ranked(r) => inst.m().saturating_sub(r) as f64,
            Rank::Unranked => 0.0,
        }
    }
}

/// Source of randomness over the serving queue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    /// Every permutation of the agents, equally likely.
    ExhaustivePriorityOrders,
    /// `samples` uniformly random queues drawn from a seeded generator.
    MonteCarloSeeded { samples: usize, seed: u64 },
}

/// Probability of each placement for `agent` when the queue is uniformly
/// random and `run` allocates for a given queue.
pub fn distribution_with<F>(
    inst: &Instance,
    agent: &AgentId,
    sampler: Sampler,
    mut run: F,
) -> Result<BTreeMap<Placement, f64>, AnalysisError>
where
    F: FnMut(&PriorityRanking) -> Result<Matching, AnalysisError>,
{
    if inst.agent(agent).is_none() {
        return Err(AnalysisError::UnknownAgent(agent.clone()));
    }
    let ids: Vec<AgentId> = inst.agent_ids().cloned().collect();
    let mut counts: HashMap<Placement, u64> = HashMap::new();
    let mut total = 0u64;
    let mut tally = |order: Vec<AgentId>| -> Result<(), AnalysisError> {
        let matching = run(&PriorityRanking::from_order(order))?;
        *counts.entry(matching.placement(agent)).or_default() += 1;
        total += 1;
        Ok(())
    };

    match sampler {
        Sampler::ExhaustivePriorityOrders => {
            if ids.len() > MAX_EXHAUSTIVE_AGENTS {
                return Err(AnalysisError::TooManyAgents {
                    n: ids.len(),
                    max: MAX_EXHAUSTIVE_AGENTS,
                });
            }
            for order in ids.iter().cloned().permutations(ids.len()) {
                tally(order)?;
            }
        }
        Sampler::MonteCarloSeeded { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..samples {
                let mut order = ids.clone();
                order.shuffle(&mut rng);
                tally(order)?;
            }
        }
    }

    let total = total.max(1) as f64;
    Ok(counts
        .into_iter()
        .map(|(p, c)| (p, c as f64 / total))
        .collect())
}

/// Outcome distribution of `agent` under serial dictatorship with a random queue.
pub fn outcome_distribution(
    inst: &Instance,
    agent: &AgentId,
    sampler: Sampler,
) -> Result<BTreeMap<Placement, f64>, AnalysisError> {
    distribution_with(
        inst,
        agent,
        sampler,
        |r| Ok(serial_dictatorship(inst, r)?.0),
    )
}

fn utility_of(
    inst: &Instance,
    agent: &AgentId,
    model: &UtilityModel,
    dist: &BTreeMap<Placement, f64>,
) -> f64 {
    dist.iter()
        .map(|(p, prob)| model.utility(inst, agent, p) * prob)
        .sum()
}

/// Sum over placements of utility times probability, for serial dictatorship
/// under a random queue. The outside placement contributes `u(outside)`.
pub fn expected_utility(
    inst: &Instance,
    agent: &AgentId,
    model: &UtilityModel,
    sampler: Sampler,
) -> Result<f64, AnalysisError> {
    model.validate()?;
    let dist = outcome_distribution(inst, agent, sampler)?;
    Ok(utility_of(inst, agent, model, &dist))
}

/// A partition of the providers into pooled groups.
pub type Grouping = Vec<Vec<ProviderId>>;

fn normalize(grouping: &Grouping) -> BTreeSet<BTreeSet<ProviderId>> {
    grouping
        .iter()
        .map(|g| g.iter().cloned().collect())
        .collect()
}

/// Each grouping must partition the instance's providers, and each must be
/// obtained from the previous one by merging groups.
pub fn validate_chain(inst: &Instance, chain: &[Grouping]) -> Result<(), AnalysisError> {
    if chain.is_empty() {
        return Err(AnalysisError::InvalidChain("chain is empty".into()));
    }
    let all: BTreeSet<&ProviderId> = inst.providers.iter().map(|p| &p.id).collect();
    for (step, grouping) in chain.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for group in grouping {
            if group.is_empty() {
                return Err(AnalysisError::InvalidChain(format!(
                    "grouping {step} has an empty group"
                )));
            }
            for p in group {
                if !all.contains(p) {
                    return Err(AnalysisError::InvalidChain(format!(
                        "unknown provider `{p}`"
                    )));
                }
                if !seen.insert(p) {
                    return Err(AnalysisError::InvalidChain(format!(
                        "provider `{p}` appears twice in grouping {step}"
                    )));
                }
            }
        }
        if seen.len() != all.len() {
            return Err(AnalysisError::InvalidChain(format!(
                "grouping {step} does not cover every provider"
            )));
        }
    }
    for (step, pair) in chain.windows(2).enumerate() {
        let coarse = normalize(&pair[1]);
        for fine_group in normalize(&pair[0]) {
            if !coarse.iter().any(|c| fine_group.is_subset(c)) {
                return Err(AnalysisError::InvalidChain(format!(
                    "grouping {} splits a group of grouping {step}",
                    step + 1
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionStep {
    pub grouping: Grouping,
    pub utility: f64,
}

/// Locality-restricted allocation where each agent's pool is the whole group
/// of providers containing the provider they are routed to.
pub fn allocate_grouped(
    inst: &Instance,
    ranking: &PriorityRanking,
    grouping: &Grouping,
) -> Result<(Matching, crate::mechanism::RoundTrace), AnalysisError> {
    let policy = RoutingPolicy::default();
    Ok(allocate_with_pools(inst, ranking, |agent| {
        let routed = policy.route(inst, &agent.id, &agent.locality);
        let group = routed
            .and_then(|p| grouping.iter().find(|g| g.contains(&p)))
            .map(|g| g.iter().cloned().collect())
            .unwrap_or_default();
        Pool::Providers(group)
    })?)
}

/// Expected utility of `agent` for each grouping in a coarsening chain. If
/// the chain stops short of a single pooled group, the fully merged grouping
/// is appended so the report always ends at the centralized market.
pub fn locality_expansion_report(
    inst: &Instance,
    agent: &AgentId,
    chain: &[Grouping],
    model: &UtilityModel,
    sampler: Sampler,
) -> Result<Vec<ExpansionStep>, AnalysisError> {
    validate_chain(inst, chain)?;
    model.validate()?;
    if inst.agent(agent).is_none() {
        return Err(AnalysisError::UnknownAgent(agent.clone()));
    }

    let mut chain = chain.to_vec();
    if chain.last().is_some_and(|g| g.len() > 1) {
        chain.push(vec![inst.providers.iter().map(|p| p.id.clone()).collect()]);
    }

    chain
        .into_iter()
        .map(|grouping| {
            let dist = distribution_with(inst, agent, sampler, |r| {
                Ok(allocate_grouped(inst, r, &grouping)?.0)
            })?;
            Ok(ExpansionStep {
                utility: utility_of(inst, agent, model, &dist),
                grouping,
            })
        })
        .collect()
}
