//! Small reference instances with hand-checkable outcomes.
//!
//! Single-pool instances use one provider `H` in locality `metro`. Two-pool
//! instances use provider `P` (locality `west`, options a, b, c) and provider
//! `Q` (locality `east`, options x, z).

use crate::model::{Agent, HousingOption, Instance, Provider};
use crate::priority::{explicit_priority, PriorityRanking};

pub const WEST: &str = "west";
pub const EAST: &str = "east";

fn single_pool(agents: Vec<Agent>) -> Instance {
    Instance {
        agents,
        options: ["a", "b", "c"]
            .into_iter()
            .map(|o| HousingOption::new(o, "H"))
            .collect(),
        providers: vec![Provider::new("H", "metro")],
    }
}

fn two_pools(agents: Vec<Agent>) -> Instance {
    Instance {
        agents,
        options: vec![
            HousingOption::new("a", "P"),
            HousingOption::new("b", "P"),
            HousingOption::new("c", "P"),
            HousingOption::new("x", "Q"),
            HousingOption::new("z", "Q"),
        ],
        providers: vec![Provider::new("P", WEST), Provider::new("Q", EAST)],
    }
}

/// Three agents, three options, everyone's favourite distinct.
pub fn sd_first_profile() -> Instance {
    single_pool(vec![
        Agent::new("i", "metro", ["a", "b", "c"]),
        Agent::new("j", "metro", ["b", "c", "a"]),
        Agent::new("k", "metro", ["c", "a", "b"]),
    ])
}

/// Three agents, three options, i and j both want `a` first.
pub fn sd_second_profile() -> Instance {
    single_pool(vec![
        Agent::new("i", "metro", ["a", "b", "c"]),
        Agent::new("j", "metro", ["a", "c", "b"]),
        Agent::new("k", "metro", ["c", "a", "b"]),
    ])
}

/// Four agents competing for three options.
pub fn excess_demand() -> Instance {
    single_pool(vec![
        Agent::new("i", "metro", ["a", "b", "c"]),
        Agent::new("j", "metro", ["b", "c", "a"]),
        Agent::new("k", "metro", ["c", "a", "b"]),
        Agent::new("l", "metro", ["a", "c", "b"]),
    ])
}

/// Truthful profile used to probe preference misreports under a fixed queue.
pub fn misreport_profile() -> Instance {
    single_pool(vec![
        Agent::new("i", "metro", ["c", "a", "b"]),
        Agent::new("j", "metro", ["c", "b", "a"]),
        Agent::new("k", "metro", ["b", "a", "c"]),
    ])
}

/// One agent from the west locality; the best option sits with the east provider.
pub fn two_providers_one_agent() -> Instance {
    two_pools(vec![Agent::new("i", WEST, ["z", "b", "c", "x"])])
}

/// Two agents in different localities who both rank `z` first.
pub fn two_providers_two_agents() -> Instance {
    two_pools(vec![
        Agent::new("i", WEST, ["z", "b", "c", "x"]),
        Agent::new("j", EAST, ["z", "a", "c", "b"]),
    ])
}

/// Two agents who both rank `a` first; `j` lives east, where `a` is not offered.
pub fn locality_misreport() -> Instance {
    two_pools(vec![
        Agent::new("i", WEST, ["a", "z", "c", "x"]),
        Agent::new("j", EAST, ["a", "x", "c", "b"]),
    ])
}

/// Explicit queue over `inst`. Panics if `order` is not a permutation of the agents.
pub fn queue(inst: &Instance, order: &[&str]) -> PriorityRanking {
    let ids: Vec<_> = order.iter().map(|s| (*s).into()).collect();
    explicit_priority(inst, &ids).expect("fixture queue must be a permutation of the agents")
}
