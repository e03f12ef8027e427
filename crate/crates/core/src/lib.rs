//! Housing allocation for a central clearinghouse.
//!
//! Agents are served from a priority queue and each takes their most
//! preferred option still available ([`serial_dictatorship`]). The
//! locality-restricted baseline ([`locality_restricted`]) routes each agent to
//! a single provider first. The [`analysis`] module checks the resulting
//! matchings for Pareto optimality, searches for profitable misreports, and
//! computes expected utilities under randomized queues; [`store`] handles
//! instance files and the append-only round log.

pub mod analysis;
pub mod fixtures;
pub mod mechanism;
pub mod model;
pub mod priority;
pub mod store;

#[cfg(test)]
mod testing;

pub use analysis::{
    check_strategy_proofness, compare_mechanisms, dominates, expected_utility, is_pareto_optimal,
    locality_expansion_report, AnalysisError, DominanceOutcome, DominanceVerdict,
    ManipulationReport, Sampler, UtilityModel,
};
pub use mechanism::{
    locality_restricted, serial_dictatorship, Mechanism, MechanismError, RoundTrace, RoutingPolicy,
    TraceStep,
};
pub use model::{
    prefers, rank_of, validate_instance, validate_matching, Agent, AgentId, HousingOption,
    Instance, Matching, OptionId, Placement, Preference, PriorityCriteria, Provider, ProviderId,
    Rank, Violation,
};
pub use priority::{
    compute_priority, explicit_priority, PriorityError, PriorityRanking, PriorityWeights,
};
pub use store::{InstanceDocument, PrioritySpec, RoundRecord, StoreError};
