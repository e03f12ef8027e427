#![allow(dead_code)]

use havenmatch_core::explicit_priority;
use havenmatch_core::{Agent, AgentId, HousingOption, Instance, PriorityRanking, Provider};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All orderings of `items`, generated with Heap's algorithm.
pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    fn heap<T: Clone>(k: usize, a: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        heap(k - 1, a, out);
        for i in 0..k - 1 {
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
            heap(k - 1, a, out);
        }
    }
    let mut a = items.to_vec();
    let mut out = Vec::new();
    heap(a.len(), &mut a, &mut out);
    out
}

pub fn single_pool(prefs: &[Vec<&str>], options: &[&str]) -> Instance {
    Instance {
        agents: prefs
            .iter()
            .enumerate()
            .map(|(k, p)| Agent::new(&format!("g{k}"), "metro", p.iter().copied()))
            .collect(),
        options: options.iter().map(|o| HousingOption::new(o, "H")).collect(),
        providers: vec![Provider::new("H", "metro")],
    }
}

/// Every strict full preference profile of three agents over {a, b, c}.
pub fn all_three_by_three() -> Vec<Instance> {
    let lists = permutations(&["a", "b", "c"]);
    let mut out = Vec::with_capacity(216);
    for p0 in &lists {
        for p1 in &lists {
            for p2 in &lists {
                out.push(single_pool(
                    &[p0.clone(), p1.clone(), p2.clone()],
                    &["a", "b", "c"],
                ));
            }
        }
    }
    out
}

pub fn all_orders(inst: &Instance) -> Vec<PriorityRanking> {
    let ids: Vec<AgentId> = inst.agent_ids().cloned().collect();
    permutations(&ids)
        .into_iter()
        .map(|order| explicit_priority(inst, &order).unwrap())
        .collect()
}

/// Two providers (P west, Q east), `n` agents with random localities and
/// full strict lists over `m` options scattered between the providers, plus
/// a random queue.
pub fn random_two_provider(seed: u64, n: usize, m: usize) -> (Instance, PriorityRanking) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let option_ids: Vec<String> = (0..m).map(|k| format!("o{k}")).collect();
    let options = option_ids
        .iter()
        .map(|o| HousingOption::new(o, if rng.random_bool(0.5) { "P" } else { "Q" }))
        .collect();
    let agents = (0..n)
        .map(|k| {
            let mut prefs = option_ids.clone();
            prefs.shuffle(&mut rng);
            let loc = if rng.random_bool(0.5) { "west" } else { "east" };
            Agent::new(&format!("g{k}"), loc, prefs)
        })
        .collect();
    let inst = Instance {
        agents,
        options,
        providers: vec![Provider::new("P", "west"), Provider::new("Q", "east")],
    };
    let mut order: Vec<AgentId> = inst.agent_ids().cloned().collect();
    order.shuffle(&mut rng);
    let ranking = explicit_priority(&inst, &order).unwrap();
    (inst, ranking)
}

/// Single-pool instance with `n` agents and `m` options; lists are random
/// and may be truncated.
pub fn random_single_pool(seed: u64, n: usize, m: usize, truncate: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let option_ids: Vec<String> = (0..m).map(|k| format!("o{k}")).collect();
    let agents = (0..n)
        .map(|k| {
            let mut prefs = option_ids.clone();
            prefs.shuffle(&mut rng);
            if truncate {
                let keep = rng.random_range(0..=m);
                prefs.truncate(keep);
            }
            Agent::new(&format!("g{k}"), "metro", prefs)
        })
        .collect();
    Instance {
        agents,
        options: option_ids
            .iter()
            .map(|o| HousingOption::new(o, "H"))
            .collect(),
        providers: vec![Provider::new("H", "metro")],
    }
}
