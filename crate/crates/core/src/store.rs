//! Instance documents (JSON and CSV), content digests, and the append-only
//! round log.
//!
//! The log is line-delimited JSON: one [`RoundRecord`] per line, each
//! written with a single `write` call on a file opened in append mode.
//! Each record embeds the instance and queue it was computed from, so any
//! round can be re-run and checked against the logged matching.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mechanism::{run_mechanism, Mechanism, MechanismError, RoundTrace, RoutingPolicy};
use crate::model::{
    validate_instance, Agent, AgentId, HousingOption, Instance, Matching, OptionId, Placement,
    PriorityCriteria, Provider, ProviderId, Violation, PREFERENCE_SEPARATOR,
};
use crate::priority::{
    compute_priority, explicit_priority, PriorityError, PriorityRanking, PriorityWeights,
};

pub const SCHEMA_VERSION: u32 = 1;

pub const AGENTS_HEADER: [&str; 7] = [
    "id",
    "locality",
    "current_option",
    "family_size",
    "health_risk",
    "wait_time_days",
    "preferences",
];
pub const OPTIONS_HEADER: [&str; 2] = ["id", "provider"];
pub const PROVIDERS_HEADER: [&str; 2] = ["id", "locality"];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed document: {0}")]
    Parse(String),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedSchema(u32),
    #[error("instance failed validation: {}", join_violations(.0))]
    Validation(Vec<Violation>),
    #[error("{file} CSV header mismatch: expected `{expected}`, found `{found}`")]
    HeaderMismatch {
        file: &'static str,
        expected: String,
        found: String,
    },
    #[error("{file} CSV line {line}: {message}")]
    Row {
        file: &'static str,
        line: u64,
        message: String,
    },
    #[error("digest mismatch: record says {recorded}, instance hashes to {actual}")]
    DigestMismatch { recorded: String, actual: String },
    #[error("round id {got} does not follow last logged round {last}")]
    RoundOrder { last: u64, got: u64 },
    #[error(transparent)]
    Priority(#[from] PriorityError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

fn join_violations(vs: &[Violation]) -> String {
    vs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl StoreError {
    fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

/// How the serving queue for a round is produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrioritySpec {
    Order { order: Vec<AgentId> },
    Weights { weights: PriorityWeights, seed: u64 },
}

impl Default for PrioritySpec {
    fn default() -> Self {
        PrioritySpec::Weights {
            weights: PriorityWeights::default(),
            seed: 0,
        }
    }
}

impl PrioritySpec {
    pub fn resolve(&self, inst: &Instance) -> Result<PriorityRanking, PriorityError> {
        match self {
            PrioritySpec::Order { order } => explicit_priority(inst, order),
            PrioritySpec::Weights { weights, seed } => compute_priority(inst, weights, *seed),
        }
    }
}

/// On-disk form of an instance, schema version 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub schema_version: u32,
    pub agents: Vec<Agent>,
    #[serde(default)]
    pub options: Vec<HousingOption>,
    #[serde(default)]
    pub providers: Vec<Provider>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<PrioritySpec>,
}

impl InstanceDocument {
    pub fn from_instance(inst: Instance) -> Self {
        InstanceDocument {
            schema_version: SCHEMA_VERSION,
            agents: inst.agents,
            options: inst.options,
            providers: inst.providers,
            priority: None,
        }
    }

    pub fn instance(&self) -> Instance {
        Instance {
            agents: self.agents.clone(),
            options: self.options.clone(),
            providers: self.providers.clone(),
        }
    }

    /// Schema and instance checks; returns the validated instance.
    pub fn validate(&self) -> Result<Instance, StoreError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(StoreError::UnsupportedSchema(self.schema_version));
        }
        let inst = self.instance();
        let violations = validate_instance(&inst);
        if violations.is_empty() {
            Ok(inst)
        } else {
            Err(StoreError::Validation(violations))
        }
    }
}

pub fn parse_document(text: &str) -> Result<InstanceDocument, StoreError> {
    serde_json::from_str(text).map_err(|e| StoreError::Parse(e.to_string()))
}

/// Reads and validates an instance document.
pub fn load_document(path: impl AsRef<Path>) -> Result<InstanceDocument, StoreError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    let doc = parse_document(&text)?;
    doc.validate()?;
    Ok(doc)
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance, StoreError> {
    load_document(path)?.validate()
}

pub fn save_document(path: impl AsRef<Path>, doc: &InstanceDocument) -> Result<(), StoreError> {
    let path = path.as_ref();
    let mut text =
        serde_json::to_string_pretty(doc).map_err(|e| StoreError::Parse(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| StoreError::io(path, e))
}

pub fn save_instance(path: impl AsRef<Path>, inst: &Instance) -> Result<(), StoreError> {
    save_document(path, &InstanceDocument::from_instance(inst.clone()))
}

/// Compact JSON with object keys sorted bytewise at every level.
pub fn canonical_json(value: &Value) -> String {
    fn write(value: &Value, out: &mut String) {
        match value {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (idx, k) in keys.into_iter().enumerate() {
                    if idx > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&map[k], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (idx, v) in items.iter().enumerate() {
                    if idx > 0 {
                        out.push(',');
                    }
                    write(v, out);
                }
                out.push(']');
            }
            scalar => out.push_str(&scalar.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

/// `sha256:` followed by the hex SHA-256 of the instance's canonical JSON.
pub fn instance_digest(inst: &Instance) -> String {
    let value = serde_json::to_value(inst).expect("instances always serialize");
    let hash = Sha256::digest(canonical_json(&value).as_bytes());
    format!("sha256:{}", hex::encode(hash))
}

fn check_header(
    file: &'static str,
    expected: &[&str],
    found: &csv::StringRecord,
) -> Result<(), StoreError> {
    if found.iter().eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(StoreError::HeaderMismatch {
            file,
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        })
    }
}

fn csv_rows<R: Read>(
    file: &'static str,
    expected: &[&str],
    input: R,
) -> Result<Vec<(u64, csv::StringRecord)>, StoreError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| StoreError::Parse(format!("{file} CSV: {e}")))?
        .clone();
    check_header(file, expected, &header)?;
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| StoreError::Row {
                file,
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            Ok((line, rec))
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(
    file: &'static str,
    line: u64,
    name: &str,
    raw: &str,
) -> Result<T, StoreError>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse().map_err(|e| StoreError::Row {
        file,
        line,
        message: format!("field `{name}`: cannot parse `{raw}`: {e}"),
    })
}

/// Builds an instance document from three CSV tables with exactly the
/// headers in [`AGENTS_HEADER`], [`OPTIONS_HEADER`] and [`PROVIDERS_HEADER`].
/// Preferences are `|`-separated option ids, most preferred first; an empty
/// `current_option` means the agent has no current housing.
pub fn import_csv<A: Read, O: Read, P: Read>(
    agents_csv: A,
    options_csv: O,
    providers_csv: P,
) -> Result<InstanceDocument, StoreError> {
    let providers = csv_rows("providers", &PROVIDERS_HEADER, providers_csv)?
        .into_iter()
        .map(|(_, r)| Provider {
            id: ProviderId::new(&r[0]),
            locality: r[1].to_owned(),
        })
        .collect();

    let options = csv_rows("options", &OPTIONS_HEADER, options_csv)?
        .into_iter()
        .map(|(_, r)| HousingOption {
            id: OptionId::new(&r[0]),
            provider: ProviderId::new(&r[1]),
            attributes: BTreeMap::new(),
        })
        .collect();

    let agents = csv_rows("agents", &AGENTS_HEADER, agents_csv)?
        .into_iter()
        .map(|(line, r)| {
            let current = match &r[2] {
                "" => Placement::Outside,
                id => Placement::housed(id),
            };
            let preferences = match &r[6] {
                "" => Vec::new(),
                cell => cell
                    .split(PREFERENCE_SEPARATOR)
                    .map(OptionId::new)
                    .collect(),
            };
            Ok(Agent {
                id: AgentId::new(&r[0]),
                locality: r[1].to_owned(),
                current_option: current,
                criteria: PriorityCriteria {
                    family_size: parse_field("agents", line, "family_size", &r[3])?,
                    health_risk: parse_field("agents", line, "health_risk", &r[4])?,
                    wait_time_days: parse_field("agents", line, "wait_time_days", &r[5])?,
                },
                preferences,
            })
        })
        .collect::<Result<_, StoreError>>()?;

    Ok(InstanceDocument {
        schema_version: SCHEMA_VERSION,
        agents,
        options,
        providers,
        priority: None,
    })
}

pub fn import_csv_files(
    agents: impl AsRef<Path>,
    options: impl AsRef<Path>,
    providers: impl AsRef<Path>,
) -> Result<InstanceDocument, StoreError> {
    let open = |p: &Path| fs::File::open(p).map_err(|e| StoreError::io(p, e));
    import_csv(
        open(agents.as_ref())?,
        open(options.as_ref())?,
        open(providers.as_ref())?,
    )
}

/// One executed round, with everything needed to re-run it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_id: u64,
    /// UTC, seconds precision, RFC 3339 (`2026-01-31T12:00:00Z`).
    pub timestamp: String,
    pub mechanism: Mechanism,
    pub instance_digest: String,
    pub instance: Instance,
    pub ranking: PriorityRanking,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<RoutingPolicy>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reported_localities: BTreeMap<AgentId, String>,
    pub matching: Matching,
    pub trace: RoundTrace,
}

pub fn utc_timestamp() -> String {
    chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

impl RoundRecord {
    /// Runs `mechanism` and packages the result as round `round_id`.
    /// Locality rounds use the agents' own localities.
    pub fn execute(
        round_id: u64,
        mechanism: Mechanism,
        instance: Instance,
        ranking: PriorityRanking,
        routing: Option<RoutingPolicy>,
    ) -> Result<Self, StoreError> {
        let reported_localities = match mechanism {
            Mechanism::LocalityRestricted => instance.truthful_localities(),
            Mechanism::SerialDictatorship => BTreeMap::new(),
        };
        let policy = routing.clone().unwrap_or_default();
        let (matching, trace) = run_mechanism(
            mechanism,
            &instance,
            &ranking,
            &policy,
            &reported_localities,
        )?;
        Ok(RoundRecord {
            round_id,
            timestamp: utc_timestamp(),
            mechanism,
            instance_digest: instance_digest(&instance),
            instance,
            ranking,
            routing,
            reported_localities,
            matching,
            trace,
        })
    }

    /// Re-runs the logged mechanism on the logged inputs.
    pub fn replay(&self) -> Result<(Matching, RoundTrace), StoreError> {
        let policy = self.routing.clone().unwrap_or_default();
        Ok(run_mechanism(
            self.mechanism,
            &self.instance,
            &self.ranking,
            &policy,
            &self.reported_localities,
        )?)
    }

    /// Digest and replay both agree with what was logged.
    pub fn verify(&self) -> Result<bool, StoreError> {
        if instance_digest(&self.instance) != self.instance_digest {
            return Ok(false);
        }
        let (matching, trace) = self.replay()?;
        Ok(matching == self.matching && trace == self.trace)
    }
}

/// All records in a round log, oldest first. A missing file is an empty log.
pub fn read_rounds(log_path: impl AsRef<Path>) -> Result<Vec<RoundRecord>, StoreError> {
    let path = log_path.as_ref();
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(StoreError::io(path, e)),
    };
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| StoreError::Parse(format!("{} line {}: {e}", path.display(), idx + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// The id the next appended round should carry (1 for an empty log).
pub fn next_round_id(log_path: impl AsRef<Path>) -> Result<u64, StoreError> {
    Ok(read_rounds(log_path)?.last().map_or(1, |r| r.round_id + 1))
}

/// Appends `record` as one JSON line. The record's digest must match its
/// instance and its id must exceed every id already in the log.
pub fn append_round(log_path: impl AsRef<Path>, record: &RoundRecord) -> Result<(), StoreError> {
    let path = log_path.as_ref();
    let actual = instance_digest(&record.instance);
    if actual != record.instance_digest {
        return Err(StoreError::DigestMismatch {
            recorded: record.instance_digest.clone(),
            actual,
        });
    }
    if let Some(last) = read_rounds(path)?.last() {
        if record.round_id <= last.round_id {
            return Err(StoreError::RoundOrder {
                last: last.round_id,
                got: record.round_id,
            });
        }
    }
    let mut line = serde_json::to_string(record).map_err(|e| StoreError::Parse(e.to_string()))?;
    line.push('\n');
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| StoreError::io(path, e))?;
    file.write_all(line.as_bytes())
        .and_then(|()| file.flush())
        .map_err(|e| StoreError::io(path, e))
}
