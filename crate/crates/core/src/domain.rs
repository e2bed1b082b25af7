//! Shared value types and the session state that every squad reads and writes.
//!
//! The session is one serializable value. Squads mutate it through small,
//! auditable transitions; everything an agent said or decided ends up either
//! in the message pool or in the transcript event log, never in hidden state.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::points::ExplorationPoints;
use crate::runtime::payload::StructuredPayload;
use crate::verification::VerificationReport;

pub type VersionId = u32;

/// The three problem inputs a session starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignInputs {
    pub spec_text: String,
    pub testbench_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_code: Option<String>,
}

impl DesignInputs {
    pub fn validate(&self) -> Result<()> {
        if self.spec_text.trim().is_empty() {
            return Err(Error::InvalidInput("spec_text is empty".into()));
        }
        if self.testbench_text.trim().is_empty() {
            return Err(Error::InvalidInput("testbench_text is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verified {
    Unchecked,
    Passed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProducedBy {
    Initial,
    Implementation,
}

/// Power / performance / area figures for one synthesized version.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpaMetrics {
    /// Dynamic power in microwatts.
    pub power_uw: f64,
    /// Critical path length in nanoseconds.
    pub critical_path_ns: f64,
    /// Timing slack in nanoseconds (may be negative).
    pub slack_ns: f64,
    /// Total cell area in square micrometers.
    pub area_um2: f64,
}

impl PpaMetrics {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.power_uw,
            self.critical_path_ns,
            self.slack_ns,
            self.area_um2,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite metric".into()));
        }
        if self.power_uw < 0.0 || self.critical_path_ns < 0.0 || self.area_um2 < 0.0 {
            return Err(Error::InvalidInput("negative metric".into()));
        }
        Ok(())
    }
}

/// One generation of RTL source with lineage, verification status and metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtlVersion {
    pub version_id: VersionId,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<VersionId>,
    pub verified: Verified,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PpaMetrics>,
    pub produced_by: ProducedBy,
}

impl RtlVersion {
    /// Metrics may only be attached to a version that passed verification.
    pub fn set_verified(&mut self, verified: Verified, metrics: Option<PpaMetrics>) {
        self.verified = verified;
        self.metrics = if verified == Verified::Passed {
            metrics
        } else {
            None
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Expl,
    Opt,
}

impl ActionKind {
    /// Radical changes cost 2 points, incremental ones cost 1.
    pub fn cost(self) -> u32 {
        match self {
            ActionKind::Expl => 2,
            ActionKind::Opt => 1,
        }
    }
}

/// A single design-change decision in the exploration plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplAction {
    pub action_id: String,
    pub kind: ActionKind,
    pub description: String,
}

impl ExplAction {
    pub fn cost(&self) -> u32 {
        self.kind.cost()
    }

    pub fn validate(&self) -> Result<()> {
        if self.action_id.trim().is_empty() {
            return Err(Error::InvalidInput("action_id is empty".into()));
        }
        if self.description.trim().is_empty() {
            return Err(Error::InvalidInput("action description is empty".into()));
        }
        Ok(())
    }
}

/// The budgeted set of design-change decisions under debate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplorationPlan {
    pub actions: Vec<ExplAction>,
    pub revision: u32,
}

impl ExplorationPlan {
    pub fn total_cost(&self) -> u32 {
        self.actions.iter().map(|a| a.cost()).sum()
    }

    pub fn find(&self, action_id: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.action_id == action_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    Add {
        action: ExplAction,
    },
    Modify {
        action_id: String,
        action: ExplAction,
    },
    Delete {
        action_id: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteDecision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitOutcome {
    Pending,
    Applied,
    Rejected,
}

/// A proposed plan mutation, subject to majority vote among the experts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commit {
    pub commit_id: String,
    pub mutation: Mutation,
    pub rationale: String,
    pub proposer: RoleId,
    pub votes: BTreeMap<RoleId, VoteDecision>,
    pub outcome: CommitOutcome,
}

impl Commit {
    /// Builds a pending commit; the proposer always backs its own proposal.
    pub fn new(mutation: Mutation, rationale: String, proposer: RoleId, revision: u32) -> Self {
        let commit_id = commit_id_for(&mutation, proposer, revision);
        let mut votes = BTreeMap::new();
        votes.insert(proposer, VoteDecision::Accept);
        Commit {
            commit_id,
            mutation,
            rationale,
            proposer,
            votes,
            outcome: CommitOutcome::Pending,
        }
    }

    pub fn accept_count(&self) -> u32 {
        self.votes
            .values()
            .filter(|v| **v == VoteDecision::Accept)
            .count() as u32
    }

    pub fn reject_count(&self) -> u32 {
        self.votes
            .values()
            .filter(|v| **v == VoteDecision::Reject)
            .count() as u32
    }
}

/// First four hex digits of a stable content hash of (mutation, proposer, revision).
pub fn commit_id_for(mutation: &Mutation, proposer: RoleId, revision: u32) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(mutation).expect("mutation serializes"));
    hasher.update(proposer.as_str().as_bytes());
    hasher.update(revision.to_le_bytes());
    let digest = hasher.finalize();
    format!("{:02x}{:02x}", digest[0], digest[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChecklistOrigin {
    FromPlan { action_id: String },
    FromFix { defect: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChecklistStatus {
    Pending,
    Done,
}

/// One task the implementation squad has to complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecklistItem {
    pub item_id: u32,
    pub task: String,
    pub origin: ChecklistOrigin,
    pub status: ChecklistStatus,
}

/// The analyst's verdict on one verified version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub version_id: VersionId,
    /// Plan revision the rated version implemented.
    pub plan_revision: u32,
    pub rating: u8,
    pub narrative: String,
    pub metrics_snapshot: PpaMetrics,
    pub requested_data: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleId {
    Programmer,
    Reviewer,
    Observer,
    Analyst,
    PowerExpert,
    PerfExpert,
    AreaExpert,
}

impl RoleId {
    pub fn as_str(self) -> &'static str {
        match self {
            RoleId::Programmer => "programmer",
            RoleId::Reviewer => "reviewer",
            RoleId::Observer => "observer",
            RoleId::Analyst => "analyst",
            RoleId::PowerExpert => "power_expert",
            RoleId::PerfExpert => "perf_expert",
            RoleId::AreaExpert => "area_expert",
        }
    }

    pub fn all() -> [RoleId; 7] {
        [
            RoleId::Programmer,
            RoleId::Reviewer,
            RoleId::Observer,
            RoleId::Analyst,
            RoleId::PowerExpert,
            RoleId::PerfExpert,
            RoleId::AreaExpert,
        ]
    }

    /// The stage whose squad this role belongs to. Every role belongs to
    /// exactly one squad.
    pub fn stage(self) -> Stage {
        match self {
            RoleId::Programmer | RoleId::Reviewer => Stage::Implementation,
            RoleId::Observer | RoleId::Analyst => Stage::Verification,
            RoleId::PowerExpert | RoleId::PerfExpert | RoleId::AreaExpert => Stage::Exploration,
        }
    }
}

impl std::fmt::Display for RoleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Exploration,
    Implementation,
    Verification,
}

impl Stage {
    pub fn squad(self) -> &'static [RoleId] {
        match self {
            Stage::Exploration => &[RoleId::PowerExpert, RoleId::PerfExpert, RoleId::AreaExpert],
            Stage::Implementation => &[RoleId::Programmer, RoleId::Reviewer],
            Stage::Verification => &[RoleId::Observer, RoleId::Analyst],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Stage::Exploration => "Exploration",
            Stage::Implementation => "Implementation",
            Stage::Verification => "Verification",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Communicate,
    Commit,
    Review,
    Generate,
    Feedback,
    Observe,
    Analyze,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Author {
    System,
    Role(RoleId),
}

impl Author {
    pub fn as_str(self) -> &'static str {
        match self {
            Author::System => "system",
            Author::Role(r) => r.as_str(),
        }
    }
}

impl From<Author> for String {
    fn from(a: Author) -> String {
        a.as_str().to_string()
    }
}

impl TryFrom<String> for Author {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Author, String> {
        if s == "system" {
            return Ok(Author::System);
        }
        RoleId::all()
            .into_iter()
            .find(|r| r.as_str() == s)
            .map(Author::Role)
            .ok_or_else(|| format!("unknown author `{s}`"))
    }
}

/// One entry of the shared message pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub stage: Stage,
    pub round: u32,
    pub author: Author,
    pub phase: Phase,
    pub body: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub machine_blocks: Vec<StructuredPayload>,
}

/// Injected timestamp source. The fixed variant makes golden-file tests
/// byte-stable; the tick counter travels with the session so a resumed run
/// keeps stamping monotonically.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Clock {
    #[default]
    System,
    Fixed {
        epoch_ms: u64,
        step_ms: u64,
        #[serde(default)]
        ticks: u64,
    },
}

impl Clock {
    pub fn fixed(epoch_ms: u64, step_ms: u64) -> Self {
        Clock::Fixed {
            epoch_ms,
            step_ms,
            ticks: 0,
        }
    }

    pub fn now_ms(&mut self) -> u64 {
        match self {
            Clock::System => std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            Clock::Fixed {
                epoch_ms,
                step_ms,
                ticks,
            } => {
                let now = *epoch_ms + *step_ms * *ticks;
                *ticks += 1;
                now
            }
        }
    }
}

/// Counter-keyed deterministic RNG. Draw `n` always produces the same values
/// for a given seed, which makes randomized decisions both reproducible and
/// resume-safe: the counter is serialized with the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRng {
    seed: u64,
    #[serde(default)]
    draws: u64,
}

impl SessionRng {
    pub fn new(seed: u64) -> Self {
        SessionRng { seed, draws: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn next_stream(&mut self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.draws);
        self.draws += 1;
        rng
    }

    /// Uniform random permutation of `items`; consumes one draw.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let mut rng = self.next_stream();
        items.shuffle(&mut rng);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoopCounters {
    /// Completed-or-started outer exploration cycles.
    pub outer: u32,
    /// Cumulative verification-fix iterations.
    pub inner: u32,
}

/// Where the orchestrator picks up work; persisted so a resumed session
/// restarts exactly at a stage boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Cursor {
    Verify,
    Analyze,
    Explore,
    Implement,
    Fix,
    Done { best: VersionId, exhausted: bool },
}

/// The whole session as one serializable value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub inputs: DesignInputs,
    pub versions: Vec<RtlVersion>,
    pub plan: ExplorationPlan,
    pub checklist: Vec<ChecklistItem>,
    pub points: ExplorationPoints,
    pub analyses: Vec<AnalysisRecord>,
    pub pool: Vec<Message>,
    pub loop_counters: LoopCounters,
    pub rng: SessionRng,
    pub clock: Clock,
    pub cursor: Cursor,
    /// Verification outcome of the most recent verify step; feeds fix checklists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_report: Option<VerificationReport>,
    /// Fix iterations since the last passing verification.
    #[serde(default)]
    pub inner_episode: u32,
    /// Stall detection only considers analyses at or after this index; bumped
    /// when the user chooses to keep optimizing.
    #[serde(default)]
    pub stall_ignore_before: usize,
}

impl SessionState {
    /// Version ids are dense: id == index.
    pub fn version(&self, id: VersionId) -> Option<&RtlVersion> {
        self.versions.get(id as usize)
    }

    pub fn version_mut(&mut self, id: VersionId) -> Option<&mut RtlVersion> {
        self.versions.get_mut(id as usize)
    }

    pub fn latest_version(&self) -> Option<&RtlVersion> {
        self.versions.last()
    }

    pub fn unchecked_version(&self) -> Option<&RtlVersion> {
        self.versions
            .iter()
            .find(|v| v.verified == Verified::Unchecked)
    }

    pub fn next_seq(&self) -> u64 {
        self.pool.last().map(|m| m.seq + 1).unwrap_or(1)
    }

    /// Appends a new unchecked version holding the complete module source.
    ///
    /// A still-unchecked predecessor is a candidate the reviewer sent back for
    /// another round; it is marked failed so at most one version ever awaits
    /// verification.
    pub fn record_version(&mut self, code: String, parent: Option<VersionId>) -> Result<VersionId> {
        if code.trim().is_empty() {
            return Err(Error::InvalidInput("version code is empty".into()));
        }
        if let Some(p) = parent {
            if self.version(p).is_none() {
                return Err(Error::InvalidInput(format!("parent version {p} not found")));
            }
        }
        for v in &mut self.versions {
            if v.verified == Verified::Unchecked {
                v.set_verified(Verified::Failed, None);
            }
        }
        let version_id = self.versions.len() as VersionId;
        self.versions.push(RtlVersion {
            version_id,
            code,
            parent_id: parent,
            verified: Verified::Unchecked,
            metrics: None,
            produced_by: ProducedBy::Implementation,
        });
        Ok(version_id)
    }
}

/// Builds the initial session state. Version 0 is created from the initial
/// code when present; the pool opens with one system message recording the
/// effective configuration.
pub fn new_session(
    inputs: DesignInputs,
    seed: u64,
    config: &crate::orchestrator::OrchestratorConfig,
) -> Result<SessionState> {
    inputs.validate()?;
    config.validate()?;

    let mut versions = Vec::new();
    let has_initial = inputs.initial_code.is_some();
    if let Some(code) = &inputs.initial_code {
        if code.trim().is_empty() {
            return Err(Error::InvalidInput("initial_code is empty".into()));
        }
        versions.push(RtlVersion {
            version_id: 0,
            code: code.clone(),
            parent_id: None,
            verified: Verified::Unchecked,
            metrics: None,
            produced_by: ProducedBy::Initial,
        });
    }

    let config_json = serde_json::to_string(config)?;
    let init_message = Message {
        seq: 1,
        stage: if has_initial {
            Stage::Verification
        } else {
            Stage::Exploration
        },
        round: 0,
        author: Author::System,
        phase: Phase::System,
        body: config_json,
        machine_blocks: Vec::new(),
    };

    Ok(SessionState {
        inputs,
        versions,
        plan: ExplorationPlan::default(),
        checklist: Vec::new(),
        points: ExplorationPoints::new(config.points.p0),
        analyses: Vec::new(),
        pool: vec![init_message],
        loop_counters: LoopCounters::default(),
        rng: SessionRng::new(seed),
        clock: config.clock.clone(),
        cursor: if has_initial {
            Cursor::Verify
        } else {
            Cursor::Explore
        },
        last_report: None,
        inner_episode: 0,
        stall_ignore_before: 0,
    })
}
