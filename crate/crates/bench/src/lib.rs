//! Seeded synthetic markets for the benchmarks.

use havenmatch_core::{
    explicit_priority, Agent, AgentId, HousingOption, Instance, PriorityRanking, Provider,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `agents` agents with full strict lists over `options` options spread
/// across `providers` providers (one locality each), plus a random queue.
pub fn market(
    seed: u64,
    agents: usize,
    options: usize,
    providers: usize,
) -> (Instance, PriorityRanking) {
    assert!(providers > 0, "at least one provider");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let providers: Vec<Provider> = (0..providers)
        .map(|k| Provider::new(&format!("p{k}"), &format!("loc{k}")))
        .collect();
    let option_ids: Vec<String> = (0..options).map(|k| format!("o{k}")).collect();
    let options = option_ids
        .iter()
        .map(|o| {
            HousingOption::new(
                o,
                providers[rng.random_range(0..providers.len())].id.as_str(),
            )
        })
        .collect();
    let agents = (0..agents)
        .map(|k| {
            let mut prefs = option_ids.clone();
            prefs.shuffle(&mut rng);
            let home = &providers[rng.random_range(0..providers.len())];
            Agent::new(
                &format!("a{k}"),
                &home.locality,
                prefs.iter().map(String::as_str),
            )
        })
        .collect();
    let inst = Instance {
        agents,
        options,
        providers,
    };
    let mut order: Vec<AgentId> = inst.agent_ids().cloned().collect();
    order.shuffle(&mut rng);
    let ranking = explicit_priority(&inst, &order).expect("order covers every agent");
    (inst, ranking)
}
