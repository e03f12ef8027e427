//! Domain types for a housing allocation round and the validation rules
//! every instance must satisfy before a mechanism may run on it.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Opaque identifier of an applicant.
    AgentId
);
string_id!(
    /// Opaque identifier of a unit-capacity housing option.
    OptionId
);
string_id!(
    /// Opaque identifier of a service provider.
    ProviderId
);

/// Where an agent ends up: a housing option, or their current housing state.
///
/// Serialized as the option id string, or `null` for [`Placement::Outside`].
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "Option<OptionId>", into = "Option<OptionId>")]
pub enum Placement {
    Housed(OptionId),
    #[default]
    Outside,
}

impl Placement {
    pub fn housed(id: impl Into<String>) -> Self {
        Placement::Housed(OptionId::new(id))
    }

    pub fn option(&self) -> Option<&OptionId> {
        match self {
            Placement::Housed(id) => Some(id),
            Placement::Outside => None,
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, Placement::Outside)
    }
}

impl From<Option<OptionId>> for Placement {
    fn from(value: Option<OptionId>) -> Self {
        value.map_or(Placement::Outside, Placement::Housed)
    }
}

impl From<Placement> for Option<OptionId> {
    fn from(value: Placement) -> Self {
        match value {
            Placement::Housed(id) => Some(id),
            Placement::Outside => None,
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placement::Housed(id) => write!(f, "{id}"),
            Placement::Outside => f.write_str("outside"),
        }
    }
}

/// Inputs to the priority score. All components are nonnegative.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorityCriteria {
    pub family_size: u32,
    pub health_risk: f64,
    pub wait_time_days: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub locality: String,
    #[serde(default)]
    pub current_option: Placement,
    #[serde(default)]
    pub criteria: PriorityCriteria,
    /// Most preferred first. Options not listed are unacceptable.
    pub preferences: Vec<OptionId>,
}

impl Agent {
    /// An agent with default criteria and no current housing.
    pub fn new<I, S>(id: &str, locality: &str, preferences: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Agent {
            id: AgentId::new(id),
            locality: locality.to_owned(),
            current_option: Placement::Outside,
            criteria: PriorityCriteria::default(),
            preferences: preferences
                .into_iter()
                .map(|s| OptionId(s.into()))
                .collect(),
        }
    }

    pub fn rank_of(&self, placement: &Placement) -> Rank {
        rank_of(self, placement)
    }

    pub fn prefers(&self, x: &Placement, y: &Placement) -> Preference {
        prefers(self, x, y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HousingOption {
    pub id: OptionId,
    pub provider: ProviderId,
    /// Informational only; never used to derive preferences.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl HousingOption {
    pub fn new(id: &str, provider: &str) -> Self {
        HousingOption {
            id: OptionId::new(id),
            provider: ProviderId::new(provider),
            attributes: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provider {
    pub id: ProviderId,
    pub locality: String,
}

impl Provider {
    pub fn new(id: &str, locality: &str) -> Self {
        Provider {
            id: ProviderId::new(id),
            locality: locality.to_owned(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub agents: Vec<Agent>,
    pub options: Vec<HousingOption>,
    pub providers: Vec<Provider>,
}

impl Instance {
    /// Number of agents (`n`).
    pub fn n(&self) -> usize {
        self.agents.len()
    }

    /// Number of housing options (`m`).
    pub fn m(&self) -> usize {
        self.options.len()
    }

    pub fn agent(&self, id: &AgentId) -> Option<&Agent> {
        self.agents.iter().find(|a| &a.id == id)
    }

    pub fn agent_mut(&mut self, id: &AgentId) -> Option<&mut Agent> {
        self.agents.iter_mut().find(|a| &a.id == id)
    }

    pub fn option(&self, id: &OptionId) -> Option<&HousingOption> {
        self.options.iter().find(|o| &o.id == id)
    }

    pub fn provider(&self, id: &ProviderId) -> Option<&Provider> {
        self.providers.iter().find(|p| &p.id == id)
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = &AgentId> {
        self.agents.iter().map(|a| &a.id)
    }

    /// Distinct provider localities, sorted.
    pub fn localities(&self) -> BTreeSet<&str> {
        self.providers.iter().map(|p| p.locality.as_str()).collect()
    }

    /// Every agent's own locality, as reported in the roster.
    pub fn truthful_localities(&self) -> BTreeMap<AgentId, String> {
        self.agents
            .iter()
            .map(|a| (a.id.clone(), a.locality.clone()))
            .collect()
    }
}

/// Position of an option in an agent's preference list. `Ranked(0)` is the
/// most preferred; [`Rank::Unranked`] orders after every ranked position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rank {
    Ranked(usize),
    Unranked,
}

impl Rank {
    pub fn position(self) -> Option<usize> {
        match self {
            Rank::Ranked(r) => Some(r),
            Rank::Unranked => None,
        }
    }
}

/// Outcome of comparing two placements from one agent's point of view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    StrictlyBetter,
    Equal,
    StrictlyWorse,
}

pub fn rank_of(agent: &Agent, placement: &Placement) -> Rank {
    match placement {
        Placement::Outside => Rank::Unranked,
        Placement::Housed(id) => agent
            .preferences
            .iter()
            .position(|p| p == id)
            .map_or(Rank::Unranked, Rank::Ranked),
    }
}

/// How `agent` regards `x` relative to `y`.
pub fn prefers(agent: &Agent, x: &Placement, y: &Placement) -> Preference {
    match rank_of(agent, x).cmp(&rank_of(agent, y)) {
        Ordering::Less => Preference::StrictlyBetter,
        Ordering::Equal => Preference::Equal,
        Ordering::Greater => Preference::StrictlyWorse,
    }
}

/// Total assignment of agents to placements.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matching {
    pub assignment: BTreeMap<AgentId, Placement>,
}

impl Matching {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, agent: &AgentId) -> Option<&Placement> {
        self.assignment.get(agent)
    }

    /// Placement of `agent`, treating a missing entry as outside.
    pub fn placement(&self, agent: &AgentId) -> Placement {
        self.assignment
            .get(agent)
            .cloned()
            .unwrap_or(Placement::Outside)
    }

    pub fn assign(&mut self, agent: AgentId, placement: Placement) {
        self.assignment.insert(agent, placement);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AgentId, &Placement)> {
        self.assignment.iter()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

impl<A: Into<AgentId>> FromIterator<(A, Placement)> for Matching {
    fn from_iter<T: IntoIterator<Item = (A, Placement)>>(iter: T) -> Self {
        Matching {
            assignment: iter.into_iter().map(|(a, p)| (a.into(), p)).collect(),
        }
    }
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .assignment
            .iter()
            .map(|(a, p)| format!("{a}:{p}"))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    EmptyId,
    DuplicateId,
    UnknownOption,
    UnknownProvider,
    UnknownAgent,
    DuplicatePreference,
    InvalidCriteria,
    EmptyLocality,
    NoAgents,
    ReservedCharacter,
    MissingAgent,
    OptionReused,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::EmptyId => "empty-id",
            Rule::DuplicateId => "duplicate-id",
            Rule::UnknownOption => "unknown-option",
            Rule::UnknownProvider => "unknown-provider",
            Rule::UnknownAgent => "unknown-agent",
            Rule::DuplicatePreference => "duplicate-preference",
            Rule::InvalidCriteria => "invalid-criteria",
            Rule::EmptyLocality => "empty-locality",
            Rule::NoAgents => "no-agents",
            Rule::ReservedCharacter => "reserved-character",
            Rule::MissingAgent => "missing-agent",
            Rule::OptionReused => "option-reused",
        };
        f.write_str(s)
    }
}

/// A broken invariant, naming the entity, the field, and the rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// e.g. `agent:j`, `option:a`, `instance`
    pub entity: String,
    pub field: String,
    pub rule: Rule,
    pub detail: String,
}

impl Violation {
    fn new(entity: String, field: &str, rule: Rule, detail: impl Into<String>) -> Self {
        Violation {
            entity,
            field: field.to_owned(),
            rule,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} field `{}`: {} ({})",
            self.entity, self.field, self.rule, self.detail
        )
    }
}

/// Reserved in option ids because it separates preferences in CSV rosters.
pub const PREFERENCE_SEPARATOR: char = '|';

fn check_ids<'a>(
    kind: &str,
    ids: impl Iterator<Item = &'a str>,
    out: &mut Vec<Violation>,
) -> HashSet<&'a str> {
    let mut seen = HashSet::new();
    for id in ids {
        let entity = format!("{kind}:{id}");
        if id.trim().is_empty() {
            out.push(Violation::new(
                entity,
                "id",
                Rule::EmptyId,
                "identifier is empty",
            ));
            continue;
        }
        if !seen.insert(id) {
            out.push(Violation::new(
                entity,
                "id",
                Rule::DuplicateId,
                format!("{kind} id `{id}` appears more than once"),
            ));
        }
    }
    seen
}

/// Checks every instance invariant. An empty result means the instance is
/// valid; violations are data, never errors.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();

    if inst.agents.is_empty() {
        out.push(Violation::new(
            "instance".into(),
            "agents",
            Rule::NoAgents,
            "an instance needs at least one agent",
        ));
    }

    let provider_ids = check_ids(
        "provider",
        inst.providers.iter().map(|p| p.id.as_str()),
        &mut out,
    );
    let option_ids = check_ids(
        "option",
        inst.options.iter().map(|o| o.id.as_str()),
        &mut out,
    );
    check_ids("agent", inst.agents.iter().map(|a| a.id.as_str()), &mut out);

    for p in &inst.providers {
        if p.locality.trim().is_empty() {
            out.push(Violation::new(
                format!("provider:{}", p.id),
                "locality",
                Rule::EmptyLocality,
                "provider locality is empty",
            ));
        }
    }

    for o in &inst.options {
        if o.id.as_str().contains(PREFERENCE_SEPARATOR) {
            out.push(Violation::new(
                format!("option:{}", o.id),
                "id",
                Rule::ReservedCharacter,
                format!("option ids may not contain `{PREFERENCE_SEPARATOR}`"),
            ));
        }
        if !provider_ids.contains(o.provider.as_str()) {
            out.push(Violation::new(
                format!("option:{}", o.id),
                "provider",
                Rule::UnknownProvider,
                format!("provider `{}` does not exist", o.provider),
            ));
        }
    }

    for a in &inst.agents {
        let entity = || format!("agent:{}", a.id);
        let c = &a.criteria;
        if !c.health_risk.is_finite() || c.health_risk < 0.0 {
            out.push(Violation::new(
                entity(),
                "criteria.health_risk",
                Rule::InvalidCriteria,
                format!(
                    "health risk must be finite and nonnegative, got {}",
                    c.health_risk
                ),
            ));
        }
        if let Placement::Housed(cur) = &a.current_option {
            if !option_ids.contains(cur.as_str()) {
                out.push(Violation::new(
                    entity(),
                    "current_option",
                    Rule::UnknownOption,
                    format!("option `{cur}` does not exist"),
                ));
            }
        }
        let mut listed = HashSet::new();
        for p in &a.preferences {
            if !option_ids.contains(p.as_str()) {
                out.push(Violation::new(
                    entity(),
                    "preferences",
                    Rule::UnknownOption,
                    format!("option `{p}` does not exist"),
                ));
            }
            if !listed.insert(p) {
                out.push(Violation::new(
                    entity(),
                    "preferences",
                    Rule::DuplicatePreference,
                    format!("option `{p}` listed twice"),
                ));
            }
        }
    }

    out
}

/// Checks that `matching` is a total, injective assignment over `inst`.
pub fn validate_matching(inst: &Instance, matching: &Matching) -> Vec<Violation> {
    let mut out = Vec::new();
    for a in &inst.agents {
        if matching.get(&a.id).is_none() {
            out.push(Violation::new(
                format!("agent:{}", a.id),
                "assignment",
                Rule::MissingAgent,
                "agent has no entry in the matching",
            ));
        }
    }
    let mut used = HashSet::new();
    for (agent, placement) in matching.iter() {
        if inst.agent(agent).is_none() {
            out.push(Violation::new(
                format!("agent:{agent}"),
                "assignment",
                Rule::UnknownAgent,
                "matching names an agent outside the instance",
            ));
        }
        if let Placement::Housed(opt) = placement {
            if inst.option(opt).is_none() {
                out.push(Violation::new(
                    format!("agent:{agent}"),
                    "assignment",
                    Rule::UnknownOption,
                    format!("option `{opt}` does not exist"),
                ));
            }
            if !used.insert(opt) {
                out.push(Violation::new(
                    format!("option:{opt}"),
                    "assignment",
                    Rule::OptionReused,
                    "option assigned to more than one agent",
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn agent_i() -> Agent {
        Agent::new("i", "west", ["z", "b", "c", "x"])
    }

    #[test]
    fn rank_of_follows_list_position() {
        let i = agent_i();
        assert_eq!(i.rank_of(&Placement::housed("z")), Rank::Ranked(0));
        assert_eq!(i.rank_of(&Placement::housed("c")), Rank::Ranked(2));
        assert_eq!(i.rank_of(&Placement::Outside), Rank::Unranked);
        assert_eq!(i.rank_of(&Placement::housed("a")), Rank::Unranked);
    }

    #[test]
    fn prefers_examples() {
        let i = agent_i();
        let z = Placement::housed("z");
        let b = Placement::housed("b");
        assert_eq!(i.prefers(&z, &b), Preference::StrictlyBetter);
        assert_eq!(i.prefers(&b, &b), Preference::Equal);
        assert_eq!(
            i.prefers(&Placement::Outside, &Placement::housed("x")),
            Preference::StrictlyWorse
        );
        assert_eq!(
            i.prefers(&Placement::Outside, &Placement::housed("a")),
            Preference::Equal
        );
    }

    #[test]
    fn outside_loses_to_every_ranked_option() {
        let i = agent_i();
        for opt in &i.preferences {
            assert_eq!(
                i.prefers(&Placement::Outside, &Placement::Housed(opt.clone())),
                Preference::StrictlyWorse
            );
        }
    }

    #[test]
    fn worked_example_instance_is_valid() {
        assert!(validate_instance(&fixtures::sd_first_profile()).is_empty());
    }

    #[test]
    fn unknown_preference_is_reported() {
        let mut inst = fixtures::sd_first_profile();
        inst.agents[1].preferences.push(OptionId::new("q"));
        let v = validate_instance(&inst);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::UnknownOption);
        assert_eq!(v[0].entity, "agent:j");
    }

    #[test]
    fn duplicate_option_id_is_reported() {
        let mut inst = fixtures::sd_first_profile();
        inst.options.push(HousingOption::new("a", "H"));
        let v = validate_instance(&inst);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::DuplicateId);
        assert_eq!(v[0].entity, "option:a");
    }

    #[test]
    fn other_rules() {
        let mut inst = fixtures::sd_first_profile();
        inst.agents[0].preferences.push(OptionId::new("a"));
        inst.agents[1].criteria.health_risk = f64::NAN;
        inst.agents[2].current_option = Placement::housed("nope");
        inst.options.push(HousingOption::new("d|e", "H"));
        inst.options.push(HousingOption::new("f", "ghost"));
        inst.providers.push(Provider::new("E", " "));
        let rules: Vec<Rule> = validate_instance(&inst).iter().map(|v| v.rule).collect();
        for r in [
            Rule::DuplicatePreference,
            Rule::InvalidCriteria,
            Rule::UnknownOption,
            Rule::ReservedCharacter,
            Rule::UnknownProvider,
            Rule::EmptyLocality,
        ] {
            assert!(rules.contains(&r), "missing {r}: {rules:?}");
        }

        let empty = Instance::default();
        assert_eq!(validate_instance(&empty)[0].rule, Rule::NoAgents);
    }

    #[test]
    fn matching_validation() {
        let inst = fixtures::sd_first_profile();
        let good: Matching = [
            ("i", Placement::housed("a")),
            ("j", Placement::housed("b")),
            ("k", Placement::Outside),
        ]
        .into_iter()
        .collect();
        assert!(validate_matching(&inst, &good).is_empty());

        let bad: Matching = [
            ("i", Placement::housed("a")),
            ("j", Placement::housed("a")),
            ("q", Placement::housed("zz")),
        ]
        .into_iter()
        .collect();
        let rules: Vec<Rule> = validate_matching(&inst, &bad)
            .iter()
            .map(|v| v.rule)
            .collect();
        assert!(rules.contains(&Rule::MissingAgent));
        assert!(rules.contains(&Rule::OptionReused));
        assert!(rules.contains(&Rule::UnknownAgent));
        assert!(rules.contains(&Rule::UnknownOption));
    }

    #[test]
    fn placement_serializes_as_nullable_id() {
        assert_eq!(
            serde_json::to_string(&Placement::housed("a")).unwrap(),
            "\"a\""
        );
        assert_eq!(serde_json::to_string(&Placement::Outside).unwrap(), "null");
        let p: Placement = serde_json::from_str("null").unwrap();
        assert_eq!(p, Placement::Outside);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pref_list() -> impl Strategy<Value = Vec<usize>> {
            (0usize..=6).prop_flat_map(|len| Just((0..len).collect::<Vec<_>>()).prop_shuffle())
        }

        proptest! {
            #[test]
            fn prefers_is_a_total_preorder(list in pref_list()) {
                let agent = Agent::new("t", "x", list.iter().map(|i| format!("o{i}")));
                let mut universe: Vec<Placement> =
                    (0..8).map(|i| Placement::housed(format!("o{i}"))).collect();
                universe.push(Placement::Outside);
                for x in &universe {
                    for y in &universe {
                        let xy = agent.prefers(x, y);
                        let yx = agent.prefers(y, x);
                        let flipped = match xy {
                            Preference::StrictlyBetter => Preference::StrictlyWorse,
                            Preference::StrictlyWorse => Preference::StrictlyBetter,
                            Preference::Equal => Preference::Equal,
                        };
                        prop_assert_eq!(yx, flipped);
                        for z in &universe {
                            let weak = |p| p != Preference::StrictlyWorse;
                            if weak(xy) && weak(agent.prefers(y, z)) {
                                prop_assert!(weak(agent.prefers(x, z)));
                            }
                        }
                    }
                }
            }
        }
    }
}
