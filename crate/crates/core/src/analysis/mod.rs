//! Executable checks of the mechanisms' properties: Pareto dominance and
//! optimality, unilateral manipulation sweeps, head-to-head comparison, and
//! expected utility under randomized queues.

mod dominance;
mod manipulation;
mod pareto;
mod utility;

use thiserror::Error;

use crate::mechanism::MechanismError;
use crate::model::AgentId;

pub use dominance::{
    compare_mechanisms, dominates, DominanceOutcome, DominanceVerdict, MechanismComparison,
    RoundOutcome,
};
pub use manipulation::{
    check_strategy_proofness, evaluate_deviation, Deviation, ManipulationReport, SweepOptions,
    EXHAUSTIVE_PERMUTATION_LIMIT,
};
pub use pareto::{
    count_feasible_matchings, for_each_feasible_matching, is_pareto_optimal,
    is_pareto_optimal_within, ParetoVerdict, DEFAULT_ORACLE_BUDGET,
};
pub use utility::{
    expected_utility, locality_expansion_report, outcome_distribution, validate_chain,
    ExpansionStep, Grouping, Sampler, UtilityModel, UtilityOverride, MAX_EXHAUSTIVE_AGENTS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error("matching does not belong to this instance: {0}")]
    InstanceMismatch(String),
    #[error("more than {budget} candidate matchings; refusing exhaustive search")]
    BudgetExceeded { budget: u64 },
    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),
    #[error("exhaustive enumeration of priority orders supports at most {max} agents, got {n}")]
    TooManyAgents { n: usize, max: usize },
    #[error("invalid grouping chain: {0}")]
    InvalidChain(String),
    #[error("invalid utility model: {0}")]
    InvalidUtility(String),
}
