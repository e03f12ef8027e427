use std::collections::HashSet;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::dominance::{dominates, DominanceOutcome};
use super::AnalysisError;
use crate::model::{validate_matching, Instance, Matching, OptionId, Placement};

/// Largest candidate space the exhaustive oracle will search.
pub const DEFAULT_ORACLE_BUDGET: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParetoVerdict {
    pub optimal: bool,
    /// A feasible matching that dominates the audited one, when not optimal.
    pub witness: Option<Matching>,
    /// Size of the feasible space that was searched.
    pub candidates: u64,
}

/// Visits every feasible matching: each agent, in roster order, either takes
/// an unused option from their own list or stays outside. Placements are
/// passed aligned with `inst.agents`.
pub fn for_each_feasible_matching<F>(inst: &Instance, mut visit: F) -> ControlFlow<()>
where
    F: FnMut(&[Placement]) -> ControlFlow<()>,
{
    fn go<'a, F>(
        inst: &'a Instance,
        idx: usize,
        used: &mut HashSet<&'a OptionId>,
        current: &mut Vec<Placement>,
        visit: &mut F,
    ) -> ControlFlow<()>
    where
        F: FnMut(&[Placement]) -> ControlFlow<()>,
    {
        let Some(agent) = inst.agents.get(idx) else {
            return visit(current);
        };
        for opt in &agent.preferences {
            if used.insert(opt) {
                current.push(Placement::Housed(opt.clone()));
                let flow = go(inst, idx + 1, used, current, visit);
                current.pop();
                used.remove(opt);
                flow?;
            }
        }
        current.push(Placement::Outside);
        let flow = go(inst, idx + 1, used, current, visit);
        current.pop();
        flow
    }

    let mut used = HashSet::new();
    let mut current = Vec::with_capacity(inst.n());
    go(inst, 0, &mut used, &mut current, &mut visit)
}

/// Number of feasible matchings, or `None` once the count passes `cap`.
pub fn count_feasible_matchings(inst: &Instance, cap: u64) -> Option<u64> {
    let mut count = 0u64;
    let flow = for_each_feasible_matching(inst, |_| {
        count += 1;
        if count > cap {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    flow.is_continue().then_some(count)
}

/// Exhaustive Pareto check with the default budget.
pub fn is_pareto_optimal(x: &Matching, inst: &Instance) -> Result<ParetoVerdict, AnalysisError> {
    is_pareto_optimal_within(x, inst, DEFAULT_ORACLE_BUDGET)
}

/// Searches every feasible matching for one that dominates `x`. Refuses with
/// [`AnalysisError::BudgetExceeded`] rather than sampling when the feasible
/// space is larger than `budget`.
pub fn is_pareto_optimal_within(
    x: &Matching,
    inst: &Instance,
    budget: u64,
) -> Result<ParetoVerdict, AnalysisError> {
    if let Some(v) = validate_matching(inst, x).first() {
        return Err(AnalysisError::InstanceMismatch(v.to_string()));
    }
    let candidates =
        count_feasible_matchings(inst, budget).ok_or(AnalysisError::BudgetExceeded { budget })?;

    let mut witness = None;
    let mut error = None;
    let _ = for_each_feasible_matching(inst, |placements| {
        let candidate: Matching = inst
            .agents
            .iter()
            .map(|a| a.id.clone())
            .zip(placements.iter().cloned())
            .collect();
        match dominates(&candidate, x, inst) {
            Ok(v) if v.outcome == DominanceOutcome::Dominates => {
                witness = Some(candidate);
                ControlFlow::Break(())
            }
            Ok(_) => ControlFlow::Continue(()),
            Err(e) => {
                error = Some(e);
                ControlFlow::Break(())
            }
        }
    });
    if let Some(e) = error {
        return Err(e);
    }
    Ok(ParetoVerdict {
        optimal: witness.is_none(),
        witness,
        candidates,
    })
}
