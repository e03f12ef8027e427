use std::collections::BTreeSet;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::mechanism::{run_mechanism, Mechanism, RoutingPolicy};
use crate::model::{AgentId, Instance, OptionId, Placement, Preference};
use crate::priority::PriorityRanking;

/// Preference lists up to this length are permuted exhaustively (6! = 720).
pub const EXHAUSTIVE_PERMUTATION_LIMIT: usize = 6;

/// A unilateral misreport. `None` fields are reported truthfully.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deviation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preferences: Option<Vec<OptionId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locality: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManipulationReport {
    pub deviator: AgentId,
    pub deviation: Deviation,
    pub truthful_outcome: Placement,
    pub deviant_outcome: Placement,
    /// Strict improvement judged by the deviator's true preferences.
    pub profitable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Number of sampled permutations when the list is too long to enumerate.
    pub budget: usize,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            budget: 1000,
            seed: 0,
        }
    }
}

fn outcome_for(
    mech: Mechanism,
    inst: &Instance,
    ranking: &PriorityRanking,
    policy: &RoutingPolicy,
    deviator: &AgentId,
    deviation: &Deviation,
) -> Result<Placement, AnalysisError> {
    let mut reported = inst.clone();
    let mut localities = inst.truthful_localities();
    if let Some(prefs) = &deviation.preferences {
        reported
            .agent_mut(deviator)
            .ok_or_else(|| AnalysisError::UnknownAgent(deviator.clone()))?
            .preferences = prefs.clone();
    }
    if let Some(loc) = &deviation.locality {
        localities.insert(deviator.clone(), loc.clone());
    }
    let (matching, _) = run_mechanism(mech, &reported, ranking, policy, &localities)?;
    Ok(matching.placement(deviator))
}

/// Runs `mech` once truthfully and once with `deviation`, and judges the
/// deviant outcome by the deviator's true preferences.
pub fn evaluate_deviation(
    mech: Mechanism,
    inst: &Instance,
    ranking: &PriorityRanking,
    policy: &RoutingPolicy,
    deviator: &AgentId,
    deviation: &Deviation,
) -> Result<ManipulationReport, AnalysisError> {
    let agent = inst
        .agent(deviator)
        .ok_or_else(|| AnalysisError::UnknownAgent(deviator.clone()))?;
    let truthful = outcome_for(mech, inst, ranking, policy, deviator, &Deviation::default())?;
    let deviant = outcome_for(mech, inst, ranking, policy, deviator, deviation)?;
    Ok(ManipulationReport {
        deviator: deviator.clone(),
        deviation: deviation.clone(),
        profitable: agent.prefers(&deviant, &truthful) == Preference::StrictlyBetter,
        truthful_outcome: truthful,
        deviant_outcome: deviant,
    })
}

/// Sweeps unilateral misreports by `deviator` and returns the profitable ones.
///
/// Every reordering of the deviator's list is tried when it has at most
/// [`EXHAUSTIVE_PERMUTATION_LIMIT`] entries; otherwise `opts.budget` seeded
/// random reorderings. Under the locality-restricted mechanism each
/// reordering is combined with every provider locality. An empty result
/// means no manipulation was found.
pub fn check_strategy_proofness(
    mech: Mechanism,
    inst: &Instance,
    ranking: &PriorityRanking,
    policy: &RoutingPolicy,
    deviator: &AgentId,
    opts: SweepOptions,
) -> Result<Vec<ManipulationReport>, AnalysisError> {
    let agent = inst
        .agent(deviator)
        .ok_or_else(|| AnalysisError::UnknownAgent(deviator.clone()))?;
    let truthful = outcome_for(mech, inst, ranking, policy, deviator, &Deviation::default())?;

    let truth = &agent.preferences;
    let orderings: Vec<Vec<OptionId>> = if truth.len() <= EXHAUSTIVE_PERMUTATION_LIMIT {
        truth.iter().cloned().permutations(truth.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut seen = BTreeSet::new();
        (0..opts.budget)
            .filter_map(|_| {
                let mut p = truth.clone();
                p.shuffle(&mut rng);
                seen.insert(p.clone()).then_some(p)
            })
            .collect()
    };

    let mut localities: Vec<Option<String>> = vec![None];
    if mech == Mechanism::LocalityRestricted {
        localities.extend(
            inst.localities()
                .into_iter()
                .filter(|l| *l != agent.locality)
                .map(|l| Some(l.to_owned())),
        );
    }

    let mut found = Vec::new();
    for prefs in &orderings {
        for loc in &localities {
            let deviation = Deviation {
                preferences: (prefs != truth).then(|| prefs.clone()),
                locality: loc.clone(),
            };
            if deviation == Deviation::default() {
                continue;
            }
            let deviant = outcome_for(mech, inst, ranking, policy, deviator, &deviation)?;
            if agent.prefers(&deviant, &truthful) == Preference::StrictlyBetter {
                found.push(ManipulationReport {
                    deviator: deviator.clone(),
                    deviation,
                    truthful_outcome: truthful.clone(),
                    deviant_outcome: deviant,
                    profitable: true,
                });
            }
        }
    }
    Ok(found)
}
