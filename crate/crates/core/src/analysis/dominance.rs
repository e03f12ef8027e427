use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::mechanism::{locality_restricted, serial_dictatorship, RoundTrace, RoutingPolicy};
use crate::model::{validate_matching, AgentId, Instance, Matching, Preference};
use crate::priority::PriorityRanking;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceOutcome {
    Dominates,
    DominatedBy,
    Incomparable,
    Equal,
}

/// Comparison of a candidate matching against a reference, agent by agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominanceVerdict {
    pub outcome: DominanceOutcome,
    /// Agents strictly better off in the candidate.
    pub improving: Vec<AgentId>,
    /// Agents strictly worse off in the candidate.
    pub worsening: Vec<AgentId>,
}

/// Does `candidate` Pareto-dominate `reference`?
///
/// `Equal` requires identical placements for every agent. Two matchings that
/// differ only in ways no agent cares about (e.g. outside versus an unlisted
/// option) are reported as `Incomparable` with empty witness sets.
pub fn dominates(
    candidate: &Matching,
    reference: &Matching,
    inst: &Instance,
) -> Result<DominanceVerdict, AnalysisError> {
    for m in [candidate, reference] {
        if let Some(v) = validate_matching(inst, m).first() {
            return Err(AnalysisError::InstanceMismatch(v.to_string()));
        }
    }

    let mut improving = Vec::new();
    let mut worsening = Vec::new();
    let mut identical = true;
    for agent in &inst.agents {
        let new = candidate.placement(&agent.id);
        let old = reference.placement(&agent.id);
        identical &= new == old;
        match agent.prefers(&new, &old) {
            Preference::StrictlyBetter => improving.push(agent.id.clone()),
            Preference::StrictlyWorse => worsening.push(agent.id.clone()),
            Preference::Equal => {}
        }
    }

    let outcome = match (improving.is_empty(), worsening.is_empty()) {
        _ if identical => DominanceOutcome::Equal,
        (false, true) => DominanceOutcome::Dominates,
        (true, false) => DominanceOutcome::DominatedBy,
        _ => DominanceOutcome::Incomparable,
    };
    Ok(DominanceVerdict {
        outcome,
        improving,
        worsening,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub matching: Matching,
    pub trace: RoundTrace,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MechanismComparison {
    /// Serial dictatorship's matching measured against the locality-restricted one.
    pub verdict: DominanceVerdict,
    pub serial: RoundOutcome,
    pub restricted: RoundOutcome,
}

/// Runs both mechanisms on truthful reports and compares them.
pub fn compare_mechanisms(
    inst: &Instance,
    ranking: &PriorityRanking,
    policy: &RoutingPolicy,
) -> Result<MechanismComparison, AnalysisError> {
    let (sd_m, sd_t) = serial_dictatorship(inst, ranking)?;
    let (lr_m, lr_t) = locality_restricted(inst, ranking, policy, &inst.truthful_localities())?;
    let verdict = dominates(&sd_m, &lr_m, inst)?;
    Ok(MechanismComparison {
        verdict,
        serial: RoundOutcome {
            matching: sd_m,
            trace: sd_t,
        },
        restricted: RoundOutcome {
            matching: lr_m,
            trace: lr_t,
        },
    })
}
