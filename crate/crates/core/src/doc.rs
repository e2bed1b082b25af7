//! The decision path: an append-only JSONL transcript of every message and
//! protocol event, and a markdown rendering of it for human review.
//!
//! The JSONL file is authoritative. It opens with the schema header line
//! `{"schema":1}`; each following line is one event. The markdown document is
//! a pure function of the event list, so re-rendering is always byte-stable.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{
    ActionKind, Author, Commit, CommitOutcome, Cursor, Message, Mutation, Phase, RoleId,
    SessionState, Stage,
};
use crate::error::{Error, Result};
use crate::runtime::payload::{StageChoice, StructuredPayload};

pub const TRANSCRIPT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TranscriptEvent {
    Message {
        ts_ms: u64,
        message: Message,
    },
    CommitProposed {
        ts_ms: u64,
        commit: Commit,
    },
    VoteTally {
        ts_ms: u64,
        commit_id: String,
        accepts: u32,
        rejects: u32,
        outcome: CommitOutcome,
    },
    CommitApplied {
        ts_ms: u64,
        commit_id: String,
        revision: u32,
        plan_cost: u32,
    },
    PointsUpdated {
        ts_ms: u64,
        k: u32,
        rating: u8,
        p: f64,
        p_hat: f64,
        p_next: f64,
    },
    LoopTransition {
        ts_ms: u64,
        from: Cursor,
        to: Cursor,
        outer: u32,
        inner: u32,
    },
    Termination {
        ts_ms: u64,
        best_version: u32,
        exhausted: bool,
    },
}

pub trait EventSink {
    fn append(&mut self, event: &TranscriptEvent) -> Result<()>;
}

/// Crash-safe transcript writer: every event is flushed as one line.
pub struct JsonlSink {
    writer: BufWriter<File>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::Doc(e.to_string()))?;
        let mut writer = BufWriter::new(file);
        writeln!(writer, "{{\"schema\":{TRANSCRIPT_SCHEMA}}}")
            .map_err(|e| Error::Doc(e.to_string()))?;
        writer.flush().map_err(|e| Error::Doc(e.to_string()))?;
        Ok(JsonlSink { writer })
    }

    /// Reopens an existing transcript for appending (resume path).
    pub fn open_append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::Doc(e.to_string()))?;
        Ok(JsonlSink {
            writer: BufWriter::new(file),
        })
    }
}

impl EventSink for JsonlSink {
    fn append(&mut self, event: &TranscriptEvent) -> Result<()> {
        let line = serde_json::to_string(event).map_err(|e| Error::Doc(e.to_string()))?;
        writeln!(self.writer, "{line}").map_err(|e| Error::Doc(e.to_string()))?;
        self.writer.flush().map_err(|e| Error::Doc(e.to_string()))
    }
}

/// In-memory sink for tests.
#[derive(Default)]
pub struct MemorySink {
    pub events: Vec<TranscriptEvent>,
}

impl EventSink for MemorySink {
    fn append(&mut self, event: &TranscriptEvent) -> Result<()> {
        self.events.push(event.clone());
        Ok(())
    }
}

/// Parses a transcript from raw text: header line then one event per line.
pub fn parse_transcript(text: &str) -> Result<Vec<TranscriptEvent>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Resume("transcript is empty".into()))?;
    let header_value: serde_json::Value = serde_json::from_str(header)
        .map_err(|e| Error::Resume(format!("bad transcript header: {e}")))?;
    match header_value.get("schema").and_then(|v| v.as_u64()) {
        Some(s) if s == TRANSCRIPT_SCHEMA as u64 => {}
        Some(other) => {
            return Err(Error::Resume(format!(
                "transcript schema {other} is not supported (expected {TRANSCRIPT_SCHEMA})"
            )))
        }
        None => return Err(Error::Resume("transcript header lacks a schema".into())),
    }
    let mut events = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let event: TranscriptEvent = serde_json::from_str(line)
            .map_err(|e| Error::Resume(format!("bad event at line {}: {e}", idx + 2)))?;
        events.push(event);
    }
    Ok(events)
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEvent>> {
    let file = File::open(path).map_err(|e| Error::Resume(format!("{}: {e}", path.display())))?;
    let mut text = String::new();
    let mut reader = std::io::BufReader::new(file);
    use std::io::Read;
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::Resume(e.to_string()))?;
    parse_transcript(&text)
}

/// Reads the transcript line by line without materializing the whole file.
pub fn read_transcript_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::Resume(format!("{}: {e}", path.display())))?;
    let reader = std::io::BufReader::new(file);
    let mut lines = Vec::new();
    for line in reader.lines() {
        lines.push(line.map_err(|e| Error::Resume(e.to_string()))?);
    }
    Ok(lines)
}

/// Appends a pool message and mirrors it into the transcript.
#[allow(clippy::too_many_arguments)]
pub fn post_message(
    state: &mut SessionState,
    sink: &mut dyn EventSink,
    stage: Stage,
    round: u32,
    author: Author,
    phase: Phase,
    body: String,
    machine_blocks: Vec<StructuredPayload>,
) -> Result<u64> {
    let seq = state.next_seq();
    let message = Message {
        seq,
        stage,
        round,
        author,
        phase,
        body,
        machine_blocks,
    };
    let ts_ms = state.clock.now_ms();
    sink.append(&TranscriptEvent::Message {
        ts_ms,
        message: message.clone(),
    })?;
    state.pool.push(message);
    Ok(seq)
}

// --- markdown rendering ---------------------------------------------------

struct PendingCommit {
    number: u32,
    summary: String,
}

struct Renderer {
    out: String,
    current_stage: Option<Stage>,
    current_round: Option<u32>,
    outer: u32,
    fixing: bool,
    commit_counter: u32,
    pending: BTreeMap<String, PendingCommit>,
    pending_order: Vec<String>,
    box_dirty: bool,
    last_data_request: Option<String>,
}

/// Renders the stage-sectioned decision document from the transcript.
pub fn render_markdown(events: &[TranscriptEvent]) -> String {
    let mut r = Renderer {
        out: String::from("# Decision Path\n"),
        current_stage: None,
        current_round: None,
        outer: 0,
        fixing: false,
        commit_counter: 0,
        pending: BTreeMap::new(),
        pending_order: Vec::new(),
        box_dirty: false,
        last_data_request: None,
    };
    for event in events {
        r.event(event);
    }
    r.flush_commit_box();
    r.out
}

impl Renderer {
    fn event(&mut self, event: &TranscriptEvent) {
        match event {
            TranscriptEvent::Message { message, .. } => self.message(message),
            TranscriptEvent::CommitProposed { commit, .. } => {
                self.commit_counter += 1;
                let summary = commit_summary(commit);
                self.pending.insert(
                    commit.commit_id.clone(),
                    PendingCommit {
                        number: self.commit_counter,
                        summary,
                    },
                );
                self.pending_order.push(commit.commit_id.clone());
                self.box_dirty = true;
            }
            TranscriptEvent::VoteTally {
                commit_id,
                accepts,
                rejects,
                outcome,
                ..
            } => {
                self.flush_commit_box();
                self.pending.remove(commit_id);
                self.pending_order.retain(|id| id != commit_id);
                match outcome {
                    CommitOutcome::Applied => {
                        self.out.push_str(&format!(
                            "> [x] Commit {commit_id} Accepted, add a new action into Exploration plan.\n\n"
                        ));
                    }
                    _ => {
                        self.out.push_str(&format!(
                            "> [ ] Commit {commit_id} Rejected ({accepts} accept / {rejects} reject).\n\n"
                        ));
                    }
                }
            }
            TranscriptEvent::CommitApplied {
                commit_id,
                revision,
                plan_cost,
                ..
            } => {
                self.flush_commit_box();
                self.out.push_str(&format!(
                    "> Plan revision {revision} now costs {plan_cost} point(s) after commit {commit_id}.\n\n"
                ));
            }
            TranscriptEvent::PointsUpdated {
                k,
                rating,
                p,
                p_hat,
                p_next,
                ..
            } => {
                self.flush_commit_box();
                self.out.push_str(&format!(
                    "> Points update (iteration {k}): rating {rating}/5, p {p} -> {p_next} (raw {p_hat}).\n\n"
                ));
            }
            TranscriptEvent::LoopTransition { to, outer, .. } => {
                self.flush_commit_box();
                self.outer = *outer;
                self.fixing = matches!(to, Cursor::Fix);
            }
            TranscriptEvent::Termination {
                best_version,
                exhausted,
                ..
            } => {
                self.flush_commit_box();
                self.out.push_str("\n## Result\n\n");
                if *exhausted {
                    self.out.push_str(&format!(
                        "Iteration budget exhausted; best version so far is v{best_version}.\n"
                    ));
                } else {
                    self.out
                        .push_str(&format!("Best version: v{best_version}.\n"));
                }
            }
        }
    }

    fn message(&mut self, message: &Message) {
        self.flush_commit_box();

        // the opening system message records the configuration
        if message.seq == 1 && message.author == Author::System {
            self.out.push_str("\n## Configuration\n\n```json\n");
            self.out.push_str(&message.body);
            self.out.push_str("\n```\n");
            self.current_stage = None;
            return;
        }

        if self.current_stage != Some(message.stage) {
            self.current_stage = Some(message.stage);
            self.current_round = None;
            let label = match message.stage {
                Stage::Exploration => format!("Exploration — cycle {}", self.outer),
                Stage::Implementation => {
                    if self.fixing {
                        format!("Implementation (fix) — cycle {}", self.outer)
                    } else {
                        format!("Implementation — cycle {}", self.outer)
                    }
                }
                Stage::Verification => format!("Verification — cycle {}", self.outer),
            };
            self.out.push_str(&format!("\n## {label}\n"));
        }
        if message.stage == Stage::Exploration
            && message.round > 0
            && self.current_round != Some(message.round)
        {
            self.current_round = Some(message.round);
            self.out
                .push_str(&format!("\n### Round {}\n", message.round));
        }

        // boxed tool-read note when the observer answers a data request
        if message.author == Author::Role(RoleId::Observer) {
            if let Some(section) = self.last_data_request.take() {
                self.out
                    .push_str(&format!("\n> Reading the {section} report section.\n"));
            }
        }

        let phase = match message.phase {
            Phase::Communicate => "communicate",
            Phase::Commit => "commit",
            Phase::Review => "review",
            Phase::Generate => "generate",
            Phase::Feedback => "feedback",
            Phase::Observe => "observe",
            Phase::Analyze => "analyze",
            Phase::System => "system",
        };
        self.out
            .push_str(&format!("\n**{}** ({phase}):\n\n", message.author.as_str()));
        if !message.body.is_empty() {
            self.out.push_str(&message.body);
            self.out.push('\n');
        }

        for payload in &message.machine_blocks {
            match payload {
                StructuredPayload::CodeBlock { code } => {
                    self.out.push_str(&format!("\n```verilog\n{code}\n```\n"));
                }
                StructuredPayload::Vote {
                    commit_id,
                    decision,
                    reason,
                } => {
                    let verdict = match decision {
                        crate::domain::VoteDecision::Accept => "accept",
                        crate::domain::VoteDecision::Reject => "reject",
                    };
                    self.out
                        .push_str(&format!("\n> Vote on {commit_id}: {verdict}"));
                    if !reason.is_empty() {
                        self.out.push_str(&format!(" — {reason}"));
                    }
                    self.out.push('\n');
                }
                StructuredPayload::Rating {
                    value,
                    justification,
                } => {
                    self.out
                        .push_str(&format!("\n> Rating: rating of {value}/5"));
                    if !justification.is_empty() {
                        self.out.push_str(&format!(" — {justification}"));
                    }
                    self.out.push('\n');
                }
                StructuredPayload::ChecklistUpdate {
                    completed,
                    feedback,
                    new_tasks,
                } => {
                    if completed.is_empty() {
                        self.out.push_str("\n> Completed items: (none)\n");
                    } else {
                        let ids: Vec<String> = completed.iter().map(|id| id.to_string()).collect();
                        self.out
                            .push_str(&format!("\n> Completed items: {}\n", ids.join(", ")));
                    }
                    if !feedback.is_empty() {
                        self.out.push_str(&format!("> Feedback: {feedback}\n"));
                    }
                    for task in new_tasks {
                        self.out.push_str(&format!("> New task: {task}\n"));
                    }
                }
                StructuredPayload::DataRequest { section } => {
                    self.last_data_request = Some(section.clone());
                    self.out.push_str(&format!("\n> Data request: {section}\n"));
                }
                StructuredPayload::StageDecision {
                    decision,
                    best_version,
                    justification,
                } => {
                    let text = match decision {
                        StageChoice::ContinueExploration => "continue exploration".to_string(),
                        StageChoice::Terminate => match best_version {
                            Some(id) => format!("terminate (best version v{id})"),
                            None => "terminate".to_string(),
                        },
                    };
                    self.out.push_str(&format!("\n> Stage decision: {text}"));
                    if !justification.is_empty() {
                        self.out.push_str(&format!(" — {justification}"));
                    }
                    self.out.push('\n');
                }
                StructuredPayload::PlanPoll { acceptable, reason } => {
                    let text = if *acceptable {
                        "plan acceptable"
                    } else {
                        "plan not acceptable"
                    };
                    self.out.push_str(&format!("\n> Poll: {text}"));
                    if !reason.is_empty() {
                        self.out.push_str(&format!(" — {reason}"));
                    }
                    self.out.push('\n');
                }
                StructuredPayload::CommitProposal { .. } => {
                    // listed in the Current Commits box instead
                }
            }
        }
    }

    fn flush_commit_box(&mut self) {
        if !self.box_dirty || self.pending.is_empty() {
            self.box_dirty = false;
            return;
        }
        self.out.push_str("\n> **Current Commits**\n>\n");
        for id in &self.pending_order {
            if let Some(commit) = self.pending.get(id) {
                self.out.push_str(&format!(
                    "> Commit {} ({id}): {}\n",
                    commit.number, commit.summary
                ));
            }
        }
        self.out.push('\n');
        self.box_dirty = false;
    }
}

fn commit_summary(commit: &Commit) -> String {
    match &commit.mutation {
        Mutation::Add { action } => {
            let kind = match action.kind {
                ActionKind::Expl => "Exploration Action",
                ActionKind::Opt => "Optimization Action",
            };
            format!("{kind}: {}", action.description)
        }
        Mutation::Modify { action_id, action } => {
            format!("Modify {action_id}: {}", action.description)
        }
        Mutation::Delete { action_id } => format!("Delete action {action_id}"),
    }
}

/// Plain-text table of all versions with their metrics and normalized score;
/// the selected best row is starred.
pub fn render_version_table(versions: &[crate::domain::RtlVersion]) -> String {
    use crate::verification::{min_normalizers, scalarize, select_best};

    let best = select_best(versions).ok();
    let passed: Vec<&crate::domain::RtlVersion> = versions
        .iter()
        .filter(|v| v.verified == crate::domain::Verified::Passed)
        .collect();
    let normalizers = min_normalizers(&passed);

    let mut out = String::from("  id  verified   power_uw  critical_path_ns  area_um2     score\n");
    for v in versions {
        let marker = if best == Some(v.version_id) { "*" } else { " " };
        let verified = match v.verified {
            crate::domain::Verified::Unchecked => "unchecked",
            crate::domain::Verified::Passed => "passed",
            crate::domain::Verified::Failed => "failed",
        };
        match (&v.metrics, &normalizers) {
            (Some(m), Some(n)) => {
                let score = scalarize(m, n)
                    .map(|s| format!("{s:.4}"))
                    .unwrap_or_else(|_| "-".into());
                out.push_str(&format!(
                    "{marker} v{:<3} {verified:<9} {:>9.3} {:>17.3} {:>9.2} {:>9}\n",
                    v.version_id, m.power_uw, m.critical_path_ns, m.area_um2, score
                ));
            }
            _ => {
                out.push_str(&format!(
                    "{marker} v{:<3} {verified:<9} {:>9} {:>17} {:>9} {:>9}\n",
                    v.version_id, "-", "-", "-", "-"
                ));
            }
        }
    }
    out
}
