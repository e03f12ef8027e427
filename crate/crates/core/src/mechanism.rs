//! The two allocation procedures.
//!
//! [`serial_dictatorship`] serves agents in queue order and gives each their
//! most preferred option still unassigned across the whole inventory.
//! [`locality_restricted`] serves agents in the same global order, but each
//! agent is first routed to one provider and may only choose from that
//! provider's remaining inventory.
//!
//! Agents whose list is exhausted (including every agent past the point where
//! supply runs out) keep their current housing and are recorded as
//! [`Placement::Outside`]. Options nobody chooses stay unassigned.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Agent, AgentId, Instance, Matching, OptionId, Placement, ProviderId};
use crate::priority::PriorityRanking;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("ranking does not match instance: {0}")]
    InvalidRanking(String),
    #[error("routing override names unknown {0}")]
    InvalidRouting(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mechanism {
    /// Centralized serial dictatorship over the pooled inventory.
    #[serde(rename = "sd")]
    SerialDictatorship,
    /// Per-provider assignment after routing each agent by locality.
    #[serde(rename = "locality")]
    LocalityRestricted,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Mechanism::SerialDictatorship => "sd",
            Mechanism::LocalityRestricted => "locality",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sd" => Ok(Mechanism::SerialDictatorship),
            "locality" => Ok(Mechanism::LocalityRestricted),
            other => Err(format!(
                "unknown mechanism `{other}` (expected sd or locality)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    #[default]
    ByReportedLocality,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingPolicy {
    #[serde(default)]
    pub mode: RoutingMode,
    /// Agents sent to a fixed provider regardless of reported locality.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub locality_overrides: BTreeMap<AgentId, ProviderId>,
}

impl RoutingPolicy {
    pub fn with_override(mut self, agent: &str, provider: &str) -> Self {
        self.locality_overrides
            .insert(AgentId::new(agent), ProviderId::new(provider));
        self
    }

    pub fn validate(&self, inst: &Instance) -> Result<(), MechanismError> {
        for (agent, provider) in &self.locality_overrides {
            if inst.provider(provider).is_none() {
                return Err(MechanismError::InvalidRouting(format!(
                    "provider `{provider}`"
                )));
            }
            if inst.agent(agent).is_none() {
                return Err(MechanismError::InvalidRouting(format!("agent `{agent}`")));
            }
        }
        Ok(())
    }

    /// Provider an agent is sent to: the override if any, else the
    /// lexicographically smallest provider whose locality equals `locality`.
    pub fn route(&self, inst: &Instance, agent: &AgentId, locality: &str) -> Option<ProviderId> {
        if let Some(p) = self.locality_overrides.get(agent) {
            return Some(p.clone());
        }
        match self.mode {
            RoutingMode::ByReportedLocality => inst
                .providers
                .iter()
                .filter(|p| p.locality == locality)
                .map(|p| &p.id)
                .min()
                .cloned(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub agent: AgentId,
    /// Options the agent could choose from at their turn, in inventory order.
    pub available: Vec<OptionId>,
    pub chosen: Placement,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoundTrace {
    pub steps: Vec<TraceStep>,
}

impl RoundTrace {
    pub fn step(&self, agent: &AgentId) -> Option<&TraceStep> {
        self.steps.iter().find(|s| &s.agent == agent)
    }
}

/// Which part of the inventory an agent may draw from at their turn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pool {
    Everything,
    Providers(BTreeSet<ProviderId>),
}

impl Pool {
    fn admits(&self, provider: &ProviderId) -> bool {
        match self {
            Pool::Everything => true,
            Pool::Providers(ps) => ps.contains(provider),
        }
    }
}

fn check_ranking(inst: &Instance, ranking: &PriorityRanking) -> Result<(), MechanismError> {
    if ranking.covers(inst) {
        Ok(())
    } else {
        Err(MechanismError::InvalidRanking(format!(
            "queue of {} agents is not a permutation of the {} instance agents",
            ranking.len(),
            inst.n()
        )))
    }
}

/// Serves agents in queue order; each takes their best remaining option within
/// the pool chosen for them. Shared by both mechanisms and by what-if merges.
pub fn allocate_with_pools<F>(
    inst: &Instance,
    ranking: &PriorityRanking,
    mut pool_for: F,
) -> Result<(Matching, RoundTrace), MechanismError>
where
    F: FnMut(&Agent) -> Pool,
{
    check_ranking(inst, ranking)?;
    let agents: HashMap<&AgentId, &Agent> = inst.agents.iter().map(|a| (&a.id, a)).collect();
    let provider_of: HashMap<&OptionId, &ProviderId> =
        inst.options.iter().map(|o| (&o.id, &o.provider)).collect();
    let mut taken: HashSet<&OptionId> = HashSet::with_capacity(inst.m());
    let mut matching = Matching::new();
    let mut trace = RoundTrace::default();

    for id in &ranking.order {
        let agent = agents[id];
        let pool = pool_for(agent);
        let available: Vec<OptionId> = inst
            .options
            .iter()
            .filter(|o| !taken.contains(&o.id) && pool.admits(&o.provider))
            .map(|o| o.id.clone())
            .collect();
        let choice = agent.preferences.iter().find(|p| {
            !taken.contains(p) && provider_of.get(p).is_some_and(|prov| pool.admits(prov))
        });
        let chosen = match choice {
            Some(opt) => {
                taken.insert(opt);
                Placement::Housed(opt.clone())
            }
            None => Placement::Outside,
        };
        matching.assign(id.clone(), chosen.clone());
        trace.steps.push(TraceStep {
            agent: id.clone(),
            available,
            chosen,
        });
    }
    Ok((matching, trace))
}

/// Centralized serial dictatorship over the pooled inventory.
pub fn serial_dictatorship(
    inst: &Instance,
    ranking: &PriorityRanking,
) -> Result<(Matching, RoundTrace), MechanismError> {
    allocate_with_pools(inst, ranking, |_| Pool::Everything)
}

/// Routes every agent to one provider by the locality they reported (agents
/// missing from `reported_localities` use their roster locality), then lets
/// them pick only from that provider's remaining inventory. Agents matching
/// no provider are left outside.
pub fn locality_restricted(
    inst: &Instance,
    ranking: &PriorityRanking,
    policy: &RoutingPolicy,
    reported_localities: &BTreeMap<AgentId, String>,
) -> Result<(Matching, RoundTrace), MechanismError> {
    policy.validate(inst)?;
    allocate_with_pools(inst, ranking, |agent| {
        let locality = reported_localities
            .get(&agent.id)
            .map_or(agent.locality.as_str(), String::as_str);
        Pool::Providers(
            policy
                .route(inst, &agent.id, locality)
                .into_iter()
                .collect(),
        )
    })
}

/// Dispatches on `mech`; the routing inputs are ignored for serial dictatorship.
pub fn run_mechanism(
    mech: Mechanism,
    inst: &Instance,
    ranking: &PriorityRanking,
    policy: &RoutingPolicy,
    reported_localities: &BTreeMap<AgentId, String>,
) -> Result<(Matching, RoundTrace), MechanismError> {
    match mech {
        Mechanism::SerialDictatorship => serial_dictatorship(inst, ranking),
        Mechanism::LocalityRestricted => {
            locality_restricted(inst, ranking, policy, reported_localities)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, queue};
    use crate::model::{validate_matching, HousingOption, Provider};

    fn expect(pairs: &[(&str, Option<&str>)]) -> Matching {
        pairs
            .iter()
            .map(|(a, o)| (*a, o.map_or(Placement::Outside, Placement::housed)))
            .collect()
    }

    #[test]
    fn sd_distinct_favourites() {
        let inst = fixtures::sd_first_profile();
        let (m, _) = serial_dictatorship(&inst, &queue(&inst, &["i", "j", "k"])).unwrap();
        assert_eq!(
            m,
            expect(&[("i", Some("a")), ("j", Some("b")), ("k", Some("c"))])
        );
    }

    #[test]
    fn sd_contested_favourite() {
        let inst = fixtures::sd_second_profile();
        let (m, _) = serial_dictatorship(&inst, &queue(&inst, &["i", "j", "k"])).unwrap();
        assert_eq!(
            m,
            expect(&[("i", Some("a")), ("j", Some("c")), ("k", Some("b"))])
        );
    }

    #[test]
    fn sd_excess_demand_leaves_last_agent_outside() {
        let inst = fixtures::excess_demand();
        let (m, trace) = serial_dictatorship(&inst, &queue(&inst, &["i", "j", "k", "l"])).unwrap();
        assert_eq!(
            m,
            expect(&[
                ("i", Some("a")),
                ("j", Some("b")),
                ("k", Some("c")),
                ("l", None)
            ])
        );
        assert!(trace.steps[3].available.is_empty());
    }

    #[test]
    fn sd_excess_supply_leaves_options_unassigned() {
        let inst = Instance {
            agents: vec![Agent::new("solo", "metro", ["a", "b"])],
            options: vec![HousingOption::new("a", "H"), HousingOption::new("b", "H")],
            providers: vec![Provider::new("H", "metro")],
        };
        let (m, _) = serial_dictatorship(&inst, &queue(&inst, &["solo"])).unwrap();
        assert_eq!(m, expect(&[("solo", Some("a"))]));
        assert!(m
            .iter()
            .all(|(_, p)| p.option().map(|o| o.as_str()) != Some("b")));
    }

    #[test]
    fn sd_never_assigns_unlisted_options() {
        let mut inst = fixtures::sd_first_profile();
        inst.agents[2].preferences = vec![OptionId::new("a")];
        let (m, _) = serial_dictatorship(&inst, &queue(&inst, &["i", "j", "k"])).unwrap();
        assert_eq!(m.placement(&"k".into()), Placement::Outside);
    }

    #[test]
    fn sd_rejects_mismatched_ranking() {
        let inst = fixtures::sd_first_profile();
        let other = fixtures::excess_demand();
        let r = queue(&other, &["i", "j", "k", "l"]);
        assert!(matches!(
            serial_dictatorship(&inst, &r),
            Err(MechanismError::InvalidRanking(_))
        ));
    }

    #[test]
    fn locality_routes_by_provider() {
        let inst = fixtures::two_providers_one_agent();
        let r = queue(&inst, &["i"]);
        let truthful = inst.truthful_localities();
        let (m, trace) =
            locality_restricted(&inst, &r, &RoutingPolicy::default(), &truthful).unwrap();
        assert_eq!(m, expect(&[("i", Some("b"))]));
        let avail: Vec<&str> = trace.steps[0]
            .available
            .iter()
            .map(|o| o.as_str())
            .collect();
        assert_eq!(avail, ["a", "b", "c"]);

        let to_q = RoutingPolicy::default().with_override("i", "Q");
        let (m, _) = locality_restricted(&inst, &r, &to_q, &truthful).unwrap();
        assert_eq!(m, expect(&[("i", Some("z"))]));
    }

    #[test]
    fn locality_two_agents_each_served_locally() {
        let inst = fixtures::two_providers_two_agents();
        let (m, _) = locality_restricted(
            &inst,
            &queue(&inst, &["i", "j"]),
            &RoutingPolicy::default(),
            &inst.truthful_localities(),
        )
        .unwrap();
        assert_eq!(m, expect(&[("i", Some("b")), ("j", Some("z"))]));
    }

    #[test]
    fn locality_truthful_misreport_instance() {
        let inst = fixtures::locality_misreport();
        let (m, _) = locality_restricted(
            &inst,
            &queue(&inst, &["i", "j"]),
            &RoutingPolicy::default(),
            &inst.truthful_localities(),
        )
        .unwrap();
        assert_eq!(m, expect(&[("i", Some("a")), ("j", Some("x"))]));
    }

    #[test]
    fn unroutable_agent_stays_outside() {
        let inst = fixtures::two_providers_one_agent();
        let mut reported = inst.truthful_localities();
        reported.insert("i".into(), "nowhere".into());
        let (m, trace) = locality_restricted(
            &inst,
            &queue(&inst, &["i"]),
            &RoutingPolicy::default(),
            &reported,
        )
        .unwrap();
        assert_eq!(m, expect(&[("i", None)]));
        assert!(trace.steps[0].available.is_empty());
    }

    #[test]
    fn shared_locality_routes_to_smallest_provider() {
        let mut inst = fixtures::two_providers_one_agent();
        inst.providers[1].locality = fixtures::WEST.into();
        let policy = RoutingPolicy::default();
        assert_eq!(
            policy.route(&inst, &"i".into(), fixtures::WEST),
            Some(ProviderId::new("P"))
        );
    }

    #[test]
    fn bad_override_rejected() {
        let inst = fixtures::two_providers_one_agent();
        let policy = RoutingPolicy::default().with_override("i", "nope");
        assert!(matches!(
            locality_restricted(&inst, &queue(&inst, &["i"]), &policy, &BTreeMap::new()),
            Err(MechanismError::InvalidRouting(_))
        ));
    }

    #[test]
    fn mechanism_names_round_trip() {
        for m in [Mechanism::SerialDictatorship, Mechanism::LocalityRestricted] {
            assert_eq!(m.name().parse::<Mechanism>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("rsd".parse::<Mechanism>().is_err());
    }

    mod props {
        use super::*;
        use crate::testing::{arb_instance, arb_ranking_for};
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sd_output_is_valid_and_traced_greedily(
                (inst, ranking) in arb_instance(1..=6, 0..=6, 1..=3).prop_flat_map(|i| {
                    let r = arb_ranking_for(&i);
                    (Just(i), r)
                })
            ) {
                let (m, trace) = serial_dictatorship(&inst, &ranking).unwrap();
                prop_assert!(validate_matching(&inst, &m).is_empty());
                prop_assert_eq!(
                    trace.steps.iter().map(|s| s.agent.clone()).collect::<Vec<_>>(),
                    ranking.order.clone()
                );
                for step in &trace.steps {
                    let agent = inst.agent(&step.agent).unwrap();
                    let best = agent
                        .preferences
                        .iter()
                        .find(|p| step.available.contains(p))
                        .cloned()
                        .map_or(Placement::Outside, Placement::Housed);
                    prop_assert_eq!(&step.chosen, &best);
                    if let Placement::Housed(o) = &step.chosen {
                        prop_assert!(step.available.contains(o));
                    }
                }
            }

            #[test]
            fn single_provider_locality_equals_sd(
                (inst, ranking) in arb_instance(1..=6, 0..=6, 1..=1).prop_flat_map(|i| {
                    let r = arb_ranking_for(&i);
                    (Just(i), r)
                })
            ) {
                let sd = serial_dictatorship(&inst, &ranking).unwrap();
                let loc = locality_restricted(
                    &inst,
                    &ranking,
                    &RoutingPolicy::default(),
                    &inst.truthful_localities(),
                )
                .unwrap();
                prop_assert_eq!(sd, loc);
            }

            #[test]
            fn locality_choices_stay_within_routed_provider(
                (inst, ranking) in arb_instance(1..=6, 0..=6, 1..=3).prop_flat_map(|i| {
                    let r = arb_ranking_for(&i);
                    (Just(i), r)
                })
            ) {
                let policy = RoutingPolicy::default();
                let (m, _) =
                    locality_restricted(&inst, &ranking, &policy, &inst.truthful_localities())
                        .unwrap();
                prop_assert!(validate_matching(&inst, &m).is_empty());
                for agent in &inst.agents {
                    if let Placement::Housed(o) = m.placement(&agent.id) {
                        let routed = policy.route(&inst, &agent.id, &agent.locality);
                        prop_assert_eq!(Some(inst.option(&o).unwrap().provider.clone()), routed);
                    }
                }
            }
        }
    }
}
