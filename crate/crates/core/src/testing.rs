//! Proptest strategies shared by unit tests.

use std::ops::RangeInclusive;

use proptest::prelude::*;

use crate::model::{Agent, AgentId, HousingOption, Instance, OptionId, PriorityCriteria, Provider};
use crate::priority::PriorityRanking;

/// Random valid instance. Agents report a locality that some provider serves;
/// preference lists are random (possibly truncated) orderings of the options.
pub fn arb_instance(
    agents: RangeInclusive<usize>,
    options: RangeInclusive<usize>,
    providers: RangeInclusive<usize>,
) -> impl Strategy<Value = Instance> {
    (agents, options, providers).prop_flat_map(|(n, m, p)| {
        let option_providers = prop::collection::vec(0..p, m);
        let agent_parts = prop::collection::vec(
            (
                0..p,
                Just((0..m).collect::<Vec<_>>()).prop_shuffle(),
                0..=m,
                (0u32..5, 0u32..5, 0u32..30),
            ),
            n,
        );
        (Just(p), option_providers, agent_parts).prop_map(|(p, opt_prov, parts)| {
            let providers = (0..p)
                .map(|k| Provider::new(&format!("p{k}"), &format!("loc{k}")))
                .collect();
            let options = opt_prov
                .iter()
                .enumerate()
                .map(|(idx, prov)| HousingOption::new(&format!("o{idx}"), &format!("p{prov}")))
                .collect();
            let agents = parts
                .into_iter()
                .enumerate()
                .map(|(idx, (loc, perm, len, (f, h, w)))| Agent {
                    id: AgentId::new(format!("g{idx}")),
                    locality: format!("loc{loc}"),
                    current_option: Default::default(),
                    criteria: PriorityCriteria {
                        family_size: f,
                        health_risk: f64::from(h) / 2.0,
                        wait_time_days: w,
                    },
                    preferences: perm[..len]
                        .iter()
                        .map(|o| OptionId::new(format!("o{o}")))
                        .collect(),
                })
                .collect();
            Instance {
                agents,
                options,
                providers,
            }
        })
    })
}

pub fn arb_ranking_for(inst: &Instance) -> impl Strategy<Value = PriorityRanking> {
    let ids: Vec<AgentId> = inst.agent_ids().cloned().collect();
    Just(ids)
        .prop_shuffle()
        .prop_map(PriorityRanking::from_order)
}
