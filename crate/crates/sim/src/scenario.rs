//! Scenario documents.
//!
//! A scenario is a JSON object (schema version 1):
//!
//! ```json
//! {
//!   "version": 1,
//!   "name": "fig1",
//!   "kind": "plain",
//!   "seed": 7,
//!   "replicas": 2,
//!   "script": [
//!     { "tick": 0, "replica": 0, "label": "x1", "action": { "event": "x1" } }
//!   ],
//!   "partitions": [{ "from": 0, "until": 3, "blocked": [[1, 0]] }]
//! }
//! ```
//!
//! `kind` is `plain` (opaque payloads), `map` (key-value puts) or
//! `access` (signed events with membership and levels). Replicas are numbered
//! `0..replicas`; those listed under `byzantine` run attacker scripts
//! instead of the library.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use edp::acedpm::{LevelPriority, Membership};
use edp::op::DEFAULT_PENDING_CAPACITY;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    #[default]
    Plain,
    Map,
    Access,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Same mlb with different payloads, and same payload over different
    /// mlbs, each half sent to a different half of the peers.
    Equivocate,
    /// Operations over fabricated ancestor hashes.
    ForgeAncestry,
    /// Empty or non-antichain mlbs, out-of-universe payloads, garbage bytes.
    InvalidExtension,
    /// Many valid extensions per tick.
    Spam,
    /// Valid extensions sent to one peer only; fetches from others ignored.
    SelectiveSend,
    /// Access events with a corrupted signature.
    BadSignature,
    /// Correctly signed access events the signer is not allowed to issue.
    UnauthorizedEvent,
}

impl Behavior {
    pub const ALL: [Behavior; 7] = [
        Behavior::Equivocate,
        Behavior::ForgeAncestry,
        Behavior::InvalidExtension,
        Behavior::Spam,
        Behavior::SelectiveSend,
        Behavior::BadSignature,
        Behavior::UnauthorizedEvent,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineNode {
    pub node: usize,
    pub behaviors: Vec<Behavior>,
    /// Attacks stop after this tick; defaults to the last script tick.
    #[serde(default)]
    pub until: Option<u64>,
    /// Messages per tick for rate-based behaviors.
    #[serde(default = "default_rate")]
    pub rate: usize,
}

fn default_rate() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    /// Opaque event payload (plain and map kinds).
    Event(String),
    /// Key-value put (map kind).
    Put { key: String, value: String },
    /// Chat message (access kind).
    Chat(String),
    /// Sets the membership of another replica's subject (access kind).
    Membership { subject: usize, value: Membership },
    /// Sets a subject's level (access kind).
    Level { subject: usize, level: i64 },
    /// Sets an action's level (access kind).
    ActionLevel { action: String, level: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub tick: u64,
    pub replica: usize,
    #[serde(default)]
    pub label: Option<String>,
    pub action: Action,
}

/// Links cut from `from` (inclusive) to `until` (exclusive, `None` for
/// never healing). `groups` cuts every link between different groups;
/// replicas not listed form one extra group. `blocked` cuts directed links.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub from: u64,
    #[serde(default)]
    pub until: Option<u64>,
    #[serde(default)]
    pub groups: Vec<Vec<usize>>,
    #[serde(default)]
    pub blocked: Vec<(usize, usize)>,
}

impl Partition {
    pub fn active(&self, tick: u64) -> bool {
        tick >= self.from && self.until.is_none_or(|u| tick < u)
    }

    pub fn cuts(&self, from: usize, to: usize) -> bool {
        if self.blocked.contains(&(from, to)) {
            return true;
        }
        if self.groups.is_empty() {
            return false;
        }
        let group_of = |n: usize| self.groups.iter().position(|g| g.contains(&n));
        group_of(from) != group_of(to)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDelay {
    pub from: usize,
    pub to: usize,
    pub ticks: u64,
}

/// Every correct replica in `replicas` (all if empty) emits one event every
/// `every` ticks from `from` until `until` (exclusive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    #[serde(default)]
    pub from: u64,
    pub until: u64,
    #[serde(default = "one")]
    pub every: u64,
    #[serde(default)]
    pub replicas: Vec<usize>,
}

fn one() -> u64 {
    1
}

/// Rules of an access-controlled object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessRules {
    #[serde(default)]
    pub creator: usize,
    #[serde(default = "default_creator_level")]
    pub creator_level: i64,
    #[serde(default)]
    pub action_levels: Option<BTreeMap<String, i64>>,
    #[serde(default)]
    pub level_priority: LevelPriority,
}

fn default_creator_level() -> i64 {
    edp::acedpm::DEFAULT_CREATOR_LEVEL
}

impl Default for AccessRules {
    fn default() -> Self {
        Self {
            creator: 0,
            creator_level: default_creator_level(),
            action_levels: None,
            level_priority: LevelPriority::default(),
        }
    }
}

/// Scenario-specific claims checked after the run, by script label.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    /// Exact element count at every correct replica.
    #[serde(default)]
    pub elements: Option<usize>,
    /// Exact maximal elements, by label.
    #[serde(default)]
    pub max: Option<Vec<String>>,
    /// Downward closure sizes, by label.
    #[serde(default)]
    pub closure_sizes: BTreeMap<String, usize>,
    /// Labels applied by the access-controlled fold.
    #[serde(default)]
    pub applied: Vec<String>,
    /// Labels present in the poset but skipped by the fold.
    #[serde(default)]
    pub skipped: Vec<String>,
    /// Exactly one of these labels is applied by the fold.
    #[serde(default)]
    pub one_of: Vec<String>,
    /// Bound on frontier sizes during the quiescent window.
    #[serde(default)]
    pub max_quiescent_frontier: Option<usize>,
    /// Final map entries (map kind), key to value.
    #[serde(default)]
    pub map: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub kind: Kind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub replicas: usize,
    #[serde(default = "default_genesis")]
    pub genesis: String,
    #[serde(default)]
    pub access: AccessRules,
    #[serde(default)]
    pub byzantine: Vec<ByzantineNode>,
    #[serde(default)]
    pub script: Vec<Step>,
    #[serde(default)]
    pub workload: Option<Workload>,
    #[serde(default)]
    pub partitions: Vec<Partition>,
    #[serde(default = "one")]
    pub delay: u64,
    #[serde(default)]
    pub delays: Vec<LinkDelay>,
    #[serde(default = "default_capacity")]
    pub pending_capacity: usize,
    #[serde(default)]
    pub expect: Expect,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_genesis() -> String {
    "genesis".to_owned()
}

fn default_capacity() -> usize {
    DEFAULT_PENDING_CAPACITY
}

impl Scenario {
    /// Minimal scenario: `replicas` correct plain replicas, nothing scripted.
    pub fn new(name: impl Into<String>, replicas: usize) -> Self {
        Self {
            version: SCHEMA_VERSION,
            name: name.into(),
            kind: Kind::Plain,
            seed: DEFAULT_SEED,
            replicas,
            genesis: default_genesis(),
            access: AccessRules::default(),
            byzantine: Vec::new(),
            script: Vec::new(),
            workload: None,
            partitions: Vec::new(),
            delay: 1,
            delays: Vec::new(),
            pending_capacity: DEFAULT_PENDING_CAPACITY,
            expect: Expect::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn byzantine_ids(&self) -> BTreeSet<usize> {
        self.byzantine.iter().map(|b| b.node).collect()
    }

    pub fn correct_ids(&self) -> Vec<usize> {
        let byz = self.byzantine_ids();
        (0..self.replicas).filter(|i| !byz.contains(i)).collect()
    }

    pub fn delay_of(&self, from: usize, to: usize) -> u64 {
        self.delays
            .iter()
            .find(|d| d.from == from && d.to == to)
            .map_or(self.delay, |d| d.ticks)
    }

    pub fn max_delay(&self) -> u64 {
        self.delays.iter().map(|d| d.ticks).fold(self.delay, u64::max)
    }

    pub fn link_open(&self, from: usize, to: usize, tick: u64) -> bool {
        !self
            .partitions
            .iter()
            .any(|p| p.active(tick) && p.cuts(from, to))
    }

    /// Last tick with scripted or adversarial activity, or a partition change.
    pub fn settle_tick(&self) -> u64 {
        let script = self.script.iter().map(|s| s.tick).max().unwrap_or(0);
        let workload = self.workload.as_ref().map_or(0, |w| w.until);
        let partitions = self
            .partitions
            .iter()
            .map(|p| p.until.unwrap_or(p.from))
            .max()
            .unwrap_or(0);
        let byz = self
            .byzantine
            .iter()
            .map(|b| b.until.unwrap_or(script.max(workload)))
            .max()
            .unwrap_or(0);
        script.max(workload).max(partitions).max(byz)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if self.version != SCHEMA_VERSION {
            return invalid(format!("unsupported schema version {}", self.version));
        }
        if self.replicas == 0 {
            return invalid("no replicas".into());
        }
        if self.delay == 0 || self.delays.iter().any(|d| d.ticks == 0) {
            return invalid("link delays must be at least one tick".into());
        }
        let byz = self.byzantine_ids();
        if byz.len() != self.byzantine.len() {
            return invalid("a node is listed as byzantine twice".into());
        }
        if let Some(n) = byz.iter().find(|n| **n >= self.replicas) {
            return invalid(format!("byzantine node {n} out of range"));
        }
        let correct = self.correct_ids();
        if correct.is_empty() {
            return invalid("no correct replicas".into());
        }
        for step in &self.script {
            if !correct.contains(&step.replica) {
                return invalid(format!(
                    "step at tick {} targets {} which is not a correct replica",
                    step.tick, step.replica
                ));
            }
            let fits = match (&step.action, self.kind) {
                (Action::Event(_), Kind::Plain | Kind::Map) => true,
                (Action::Put { .. }, Kind::Map) => true,
                (Action::Chat(_), Kind::Access) => true,
                (Action::Membership { subject, .. }, Kind::Access)
                | (Action::Level { subject, .. }, Kind::Access) => *subject < self.replicas,
                (Action::ActionLevel { .. }, Kind::Access) => true,
                _ => false,
            };
            if !fits {
                return invalid(format!("step at tick {} does not fit kind {:?}", step.tick, self.kind));
            }
        }
        let mut labels = BTreeSet::new();
        for l in self.script.iter().filter_map(|s| s.label.as_ref()) {
            if !labels.insert(l) {
                return invalid(format!("duplicate label {l}"));
            }
        }
        if self.kind == Kind::Access && byz.contains(&self.access.creator) {
            return invalid("the creator must be a correct replica".into());
        }
        if self.access.creator >= self.replicas {
            return invalid("creator out of range".into());
        }
        if !self.eventually_connected() {
            return invalid("correct replicas are never connected after the last partition".into());
        }
        Ok(())
    }

    /// Whether the correct replicas form one strongly connected component
    /// once every healing partition has ended.
    pub fn eventually_connected(&self) -> bool {
        let correct = self.correct_ids();
        let reach = |start: usize, forward: bool| {
            let mut seen = BTreeSet::from([start]);
            let mut stack = vec![start];
            while let Some(a) = stack.pop() {
                for b in &correct {
                    let (f, t) = if forward { (a, *b) } else { (*b, a) };
                    let permanently_cut = self
                        .partitions
                        .iter()
                        .any(|p| p.until.is_none() && p.cuts(f, t));
                    if !permanently_cut && seen.insert(*b) {
                        stack.push(*b);
                    }
                }
            }
            seen.len() == correct.len()
        };
        reach(correct[0], true) && reach(correct[0], false)
    }
}
