//! Top-level state machine: wires the squads, the EDA backend, the points
//! controller and the decision document into the inner (verification-fix)
//! and outer (exploration-implementation-verification) loops, with
//! persistence at every stage boundary and resume support.

use std::collections::{BTreeMap, VecDeque};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::doc::{
    post_message, read_transcript, render_markdown, EventSink, JsonlSink, TranscriptEvent,
};
use crate::domain::{
    new_session, Author, Clock, Cursor, DesignInputs, Phase, RtlVersion, SessionState, Stage,
    VersionId,
};
use crate::eda::{build_backend, EdaBackend, EdaConfig};
use crate::error::{Error, Result};
use crate::exploration::run_exploration;
use crate::implementation::{run_implementation, ChecklistSource};
use crate::points::PointsConfig;
use crate::protocol::StageCtx;
use crate::runtime::http::HttpProvider;
use crate::runtime::prompts::load_templates;
use crate::runtime::script::ScriptedProvider;
use crate::runtime::{build_roles, AgentRuntime, Provider};
use crate::verification::{
    analyst_step, observer_step, select_best, summarize_report, trend_is_stalled, verify_version,
    VerificationReport,
};

pub const SESSION_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Remote,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model: String,
    pub script_path: Option<PathBuf>,
    pub temperature: f64,
    pub max_reply_tokens: u32,
    /// Per-role temperature overrides, keyed by role id string.
    pub role_temperature: BTreeMap<String, f64>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Remote,
            endpoint: "https://api.deepseek.com".into(),
            model: "deepseek-chat".into(),
            script_path: None,
            temperature: 0.8,
            max_reply_tokens: 4096,
            role_temperature: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrchestratorConfig {
    pub max_outer_iters: u32,
    pub min_outer_iters: u32,
    pub max_inner_iters: u32,
    pub max_debate_rounds: u32,
    pub max_impl_rounds: u32,
    pub max_data_requests: u32,
    pub stall_window: usize,
    pub stall_eps_rel: f64,
    pub force_min_action: bool,
    pub auto_accept: bool,
    pub seed: u64,
    pub points: PointsConfig,
    pub eda: EdaConfig,
    pub provider: ProviderConfig,
    pub clock: Clock,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            max_outer_iters: 5,
            min_outer_iters: 2,
            max_inner_iters: 4,
            max_debate_rounds: 4,
            max_impl_rounds: 6,
            max_data_requests: 3,
            stall_window: 3,
            stall_eps_rel: 0.01,
            force_min_action: true,
            auto_accept: false,
            seed: 0,
            points: PointsConfig::default(),
            eda: EdaConfig::default(),
            provider: ProviderConfig::default(),
            clock: Clock::System,
        }
    }
}

impl OrchestratorConfig {
    pub fn validate(&self) -> Result<()> {
        let caps = [
            self.max_outer_iters,
            self.min_outer_iters,
            self.max_inner_iters,
            self.max_debate_rounds,
            self.max_impl_rounds,
            self.max_data_requests,
        ];
        if caps.contains(&0) {
            return Err(Error::InvalidInput(
                "all iteration caps must be >= 1".into(),
            ));
        }
        if self.min_outer_iters > self.max_outer_iters {
            return Err(Error::InvalidInput(
                "min_outer_iters must not exceed max_outer_iters".into(),
            ));
        }
        if self.stall_window < 2 {
            return Err(Error::InvalidInput("stall_window must be >= 2".into()));
        }
        if self.provider.kind == ProviderKind::Scripted && self.provider.script_path.is_none() {
            return Err(Error::InvalidInput(
                "scripted provider requires script_path".into(),
            ));
        }
        self.points.validate()?;
        self.eda.validate()?;
        Ok(())
    }
}

/// Hard ceiling on logical provider calls per run, derived from the caps.
/// Every logical ask costs at most two calls (one corrective retry).
pub fn provider_call_bound(cfg: &OrchestratorConfig) -> u64 {
    let per_ask = 2u64;
    // per debate round: 3 turns plus up to 3 poll asks; plus one forced ask
    let expl_asks = cfg.max_debate_rounds as u64 * 6 + 1;
    let impl_asks = cfg.max_impl_rounds as u64 * 2;
    let verif_asks = 2 * (1 + cfg.max_data_requests as u64);
    let per_cycle = expl_asks + impl_asks + verif_asks + cfg.max_inner_iters as u64 * impl_asks;
    (cfg.max_outer_iters as u64 + 1) * per_cycle * per_ask
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    UnfixableDesign,
    Exploration(String),
    Implementation(String),
    Verification(String),
    Tool(String),
    Doc(String),
    Internal(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted(VersionId),
    Exhausted(VersionId),
    Failed(FailureReason),
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Accepted(_) | Outcome::Exhausted(_) => 0,
            Outcome::Failed(_) => 2,
        }
    }
}

fn failure_reason(e: Error) -> FailureReason {
    match e {
        Error::ExplorationFailed(d) => FailureReason::Exploration(d),
        Error::ImplementationFailed(d) => FailureReason::Implementation(d),
        Error::VerificationStageFailed(d) => FailureReason::Verification(d),
        Error::Tool(d) => FailureReason::Tool(d),
        Error::IndeterminateResult(d) => FailureReason::Tool(d),
        Error::ParseError { line, detail } => {
            FailureReason::Tool(format!("report parse error at line {line}: {detail}"))
        }
        Error::Doc(d) => FailureReason::Doc(d),
        other => FailureReason::Internal(other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcceptDecision {
    Accept,
    ContinueOptimizing,
}

/// How the accept/continue question is answered.
pub enum Prompter {
    Auto,
    Interactive,
    Scripted(VecDeque<AcceptDecision>),
}

impl Prompter {
    fn decide(&mut self, best: &RtlVersion) -> (AcceptDecision, Option<String>) {
        match self {
            Prompter::Auto => (AcceptDecision::Accept, None),
            Prompter::Scripted(queue) => {
                (queue.pop_front().unwrap_or(AcceptDecision::Accept), None)
            }
            Prompter::Interactive => {
                use std::io::IsTerminal;
                if !std::io::stdin().is_terminal() {
                    return (
                        AcceptDecision::Accept,
                        Some(
                            "non-interactive terminal without auto_accept; accepting the best version"
                                .into(),
                        ),
                    );
                }
                eprint!(
                    "best version is v{}; [a]ccept or [c]ontinue optimizing? ",
                    best.version_id
                );
                let stdin = std::io::stdin();
                let mut lock = stdin.lock();
                parse_accept_input(&mut lock)
            }
        }
    }
}

/// Parses one line of user input; EOF or anything not starting with `c`
/// accepts.
pub fn parse_accept_input(reader: &mut dyn BufRead) -> (AcceptDecision, Option<String>) {
    let mut line = String::new();
    match reader.read_line(&mut line) {
        Ok(0) => (
            AcceptDecision::Accept,
            Some("end of input; accepting the best version".into()),
        ),
        Ok(_) => {
            if line.trim().to_lowercase().starts_with('c') {
                (AcceptDecision::ContinueOptimizing, None)
            } else {
                (AcceptDecision::Accept, None)
            }
        }
        Err(_) => (
            AcceptDecision::Accept,
            Some("could not read input; accepting the best version".into()),
        ),
    }
}

// --- session directory ------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SessionEnvelope {
    schema: u32,
    config: OrchestratorConfig,
    state: SessionState,
}

/// On-disk layout of one session: session.json, transcript.jsonl,
/// decision_path.md, versions/, reports/, and optional prompts/ overrides.
pub struct SessionDir {
    root: PathBuf,
}

impl SessionDir {
    pub fn init(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        std::fs::create_dir_all(root.join("versions"))?;
        std::fs::create_dir_all(root.join("reports"))?;
        Ok(SessionDir {
            root: root.to_path_buf(),
        })
    }

    pub fn open(root: &Path) -> Result<Self> {
        if !root.join("session.json").exists() {
            return Err(Error::Resume(format!(
                "{} does not contain session.json",
                root.display()
            )));
        }
        if !root.join("transcript.jsonl").exists() {
            return Err(Error::Resume(format!(
                "{} does not contain transcript.jsonl",
                root.display()
            )));
        }
        Ok(SessionDir {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_json(&self) -> PathBuf {
        self.root.join("session.json")
    }

    pub fn transcript(&self) -> PathBuf {
        self.root.join("transcript.jsonl")
    }

    pub fn decision_path(&self) -> PathBuf {
        self.root.join("decision_path.md")
    }

    pub fn prompts_dir(&self) -> Option<PathBuf> {
        let dir = self.root.join("prompts");
        dir.is_dir().then_some(dir)
    }

    pub fn save(&self, config: &OrchestratorConfig, state: &SessionState) -> Result<()> {
        let envelope = SessionEnvelope {
            schema: SESSION_SCHEMA,
            config: config.clone(),
            state: state.clone(),
        };
        let json = serde_json::to_string_pretty(&envelope)?;
        let tmp = self.root.join("session.json.tmp");
        std::fs::write(&tmp, json)?;
        std::fs::rename(&tmp, self.session_json())?;
        Ok(())
    }

    pub fn load(&self) -> Result<(OrchestratorConfig, SessionState)> {
        let text = std::fs::read_to_string(self.session_json())
            .map_err(|e| Error::Resume(format!("cannot read session.json: {e}")))?;
        let envelope: SessionEnvelope = serde_json::from_str(&text)
            .map_err(|e| Error::Resume(format!("cannot parse session.json: {e}")))?;
        if envelope.schema != SESSION_SCHEMA {
            return Err(Error::Resume(format!(
                "session schema {} is not supported (expected {SESSION_SCHEMA})",
                envelope.schema
            )));
        }
        Ok((envelope.config, envelope.state))
    }

    pub fn write_version_files(&self, state: &SessionState) -> Result<()> {
        for version in &state.versions {
            let path = self
                .root
                .join("versions")
                .join(format!("v{}.v", version.version_id));
            std::fs::write(path, &version.code)?;
        }
        Ok(())
    }

    pub fn write_report(&self, version_id: VersionId, report: &VerificationReport) -> Result<()> {
        let dir = self.root.join("reports").join(format!("v{version_id}"));
        let raw = dir.join("raw");
        std::fs::create_dir_all(&raw)?;
        std::fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(report)?,
        )?;
        if !report.sim_log_excerpt.is_empty() {
            std::fs::write(raw.join("sim.log"), &report.sim_log_excerpt)?;
        }
        if let Some(synth) = &report.synth {
            for (section, text) in &synth.raw_sections {
                std::fs::write(raw.join(format!("{section}.txt")), text)?;
            }
        }
        Ok(())
    }
}

// --- the orchestrator --------------------------------------------------------

pub struct Orchestrator {
    cfg: OrchestratorConfig,
    dir: SessionDir,
    runtime: AgentRuntime,
    eda: Box<dyn EdaBackend>,
    sink: JsonlSink,
    prompter: Prompter,
}

fn build_runtime(
    cfg: &OrchestratorConfig,
    prompts_dir: Option<&Path>,
    provider: Box<dyn Provider>,
) -> AgentRuntime {
    let templates = load_templates(prompts_dir);
    let roles = build_roles(
        &templates,
        cfg.provider.temperature,
        cfg.provider.max_reply_tokens,
        &cfg.provider.role_temperature,
    );
    AgentRuntime::new(provider, roles)
}

fn provider_from_config(
    cfg: &OrchestratorConfig,
    seed_pool: Option<&[crate::domain::Message]>,
) -> Result<Box<dyn Provider>> {
    match cfg.provider.kind {
        ProviderKind::Scripted => {
            let path = cfg.provider.script_path.as_ref().ok_or_else(|| {
                Error::InvalidInput("scripted provider requires script_path".into())
            })?;
            let mut provider = ScriptedProvider::from_path(path)?;
            if let Some(pool) = seed_pool {
                provider.seed_counts_from_pool(pool);
            }
            Ok(Box::new(provider))
        }
        ProviderKind::Remote => Ok(Box::new(HttpProvider::new(
            &cfg.provider.endpoint,
            &cfg.provider.model,
        ))),
    }
}

/// Creates the session directory, the initial state and a ready orchestrator.
pub fn start_session(
    cfg: OrchestratorConfig,
    inputs: DesignInputs,
    root: &Path,
) -> Result<(Orchestrator, SessionState)> {
    cfg.validate()?;
    let dir = SessionDir::init(root)?;
    let mut state = new_session(inputs, cfg.seed, &cfg)?;
    let provider = provider_from_config(&cfg, None)?;
    let mut orch = Orchestrator::with_provider(cfg, dir, provider)?;
    orch.bootstrap(&mut state)?;
    Ok((orch, state))
}

/// Reconstructs a session from disk. Refuses to resume unless the transcript
/// ends exactly at a stage boundary that matches the saved state.
pub fn resume_session(root: &Path) -> Result<(Orchestrator, SessionState)> {
    let dir = SessionDir::open(root)?;
    let (cfg, state) = dir.load()?;
    cfg.validate()
        .map_err(|e| Error::Resume(format!("saved config invalid: {e}")))?;

    let events = read_transcript(&dir.transcript())?;
    let last = events
        .last()
        .ok_or_else(|| Error::Resume("transcript has no events".into()))?;
    match last {
        TranscriptEvent::LoopTransition {
            to, outer, inner, ..
        } => {
            if *to != state.cursor {
                return Err(Error::Resume(
                    "transcript boundary and saved cursor disagree".into(),
                ));
            }
            if *outer != state.loop_counters.outer || *inner != state.loop_counters.inner {
                return Err(Error::Resume(
                    "transcript boundary counters and saved state disagree".into(),
                ));
            }
        }
        TranscriptEvent::Termination { .. } => {
            if !matches!(state.cursor, Cursor::Done { .. }) {
                return Err(Error::Resume(
                    "transcript is terminated but the saved cursor is not".into(),
                ));
            }
        }
        _ => {
            return Err(Error::Resume(
                "transcript does not end at a stage boundary; the session stopped mid-stage".into(),
            ));
        }
    }

    let provider = provider_from_config(&cfg, Some(&state.pool))?;
    let prompts_dir = dir.prompts_dir();
    let eda = build_backend(&cfg.eda)?;
    let sink = JsonlSink::open_append(&dir.transcript())?;
    let prompter = if cfg.auto_accept {
        Prompter::Auto
    } else {
        Prompter::Interactive
    };
    let runtime = build_runtime(&cfg, prompts_dir.as_deref(), provider);
    Ok((
        Orchestrator {
            cfg,
            dir,
            runtime,
            eda,
            sink,
            prompter,
        },
        state,
    ))
}

impl Orchestrator {
    /// Builds an orchestrator over a fresh session directory with an
    /// explicit provider (tests inject scripted providers directly).
    pub fn with_provider(
        cfg: OrchestratorConfig,
        dir: SessionDir,
        provider: Box<dyn Provider>,
    ) -> Result<Self> {
        cfg.validate()?;
        let eda = build_backend(&cfg.eda)?;
        let sink = JsonlSink::create(&dir.transcript())?;
        let prompter = if cfg.auto_accept {
            Prompter::Auto
        } else {
            Prompter::Interactive
        };
        let prompts_dir = dir.prompts_dir();
        let runtime = build_runtime(&cfg, prompts_dir.as_deref(), provider);
        Ok(Orchestrator {
            cfg,
            dir,
            runtime,
            eda,
            sink,
            prompter,
        })
    }

    pub fn with_prompter(mut self, prompter: Prompter) -> Self {
        self.prompter = prompter;
        self
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.cfg
    }

    pub fn dir(&self) -> &SessionDir {
        &self.dir
    }

    pub fn calls_made(&self) -> u64 {
        self.runtime.calls_made()
    }

    /// Writes the opening events for a freshly created state: the config
    /// system message and the first stage boundary.
    pub fn bootstrap(&mut self, state: &mut SessionState) -> Result<()> {
        let init = state.pool[0].clone();
        let ts_ms = state.clock.now_ms();
        self.sink.append(&TranscriptEvent::Message {
            ts_ms,
            message: init,
        })?;
        self.transition(state, state.cursor)?;
        Ok(())
    }

    /// Drives the session to an outcome. Stage failures become
    /// `Outcome::Failed` with the documents rendered as far as they go.
    pub fn run(&mut self, state: &mut SessionState) -> Outcome {
        let outcome = match self.drive(state) {
            Ok(outcome) => outcome,
            Err(e) => Outcome::Failed(failure_reason(e)),
        };
        match self.finalize(state) {
            Ok(()) => outcome,
            Err(e) => {
                if matches!(outcome, Outcome::Failed(_)) {
                    outcome
                } else {
                    Outcome::Failed(FailureReason::Doc(e.to_string()))
                }
            }
        }
    }

    fn drive(&mut self, state: &mut SessionState) -> Result<Outcome> {
        loop {
            let bound = provider_call_bound(&self.cfg);
            if self.runtime.calls_made() > bound {
                return Err(Error::InvalidInput(format!(
                    "provider call budget exceeded: {} > {bound}",
                    self.runtime.calls_made()
                )));
            }
            let step = match state.cursor {
                Cursor::Done { best, exhausted } => {
                    return Ok(if exhausted {
                        Outcome::Exhausted(best)
                    } else {
                        Outcome::Accepted(best)
                    });
                }
                Cursor::Verify => self.step_verify(state)?,
                Cursor::Analyze => self.step_analyze(state)?,
                Cursor::Explore => self.step_explore(state)?,
                Cursor::Implement => self.step_implement(state, false)?,
                Cursor::Fix => self.step_implement(state, true)?,
            };
            if let Some(outcome) = step {
                return Ok(outcome);
            }
        }
    }

    fn step_verify(&mut self, state: &mut SessionState) -> Result<Option<Outcome>> {
        let version_id = state
            .unchecked_version()
            .map(|v| v.version_id)
            .ok_or_else(|| {
                Error::InvalidInput("verify step without an unchecked version".into())
            })?;
        let report = verify_version(state, self.eda.as_ref(), version_id)?;
        self.dir.write_report(version_id, &report)?;
        post_message(
            state,
            &mut self.sink,
            Stage::Verification,
            1,
            Author::System,
            Phase::System,
            format!(
                "verification of v{version_id}:\n{}",
                summarize_report(&report)
            ),
            vec![],
        )?;

        if report.passed() {
            state.inner_episode = 0;
            self.transition(state, Cursor::Analyze)?;
        } else {
            if state.inner_episode >= self.cfg.max_inner_iters {
                post_message(
                    state,
                    &mut self.sink,
                    Stage::Verification,
                    1,
                    Author::System,
                    Phase::System,
                    format!(
                        "inner loop cap ({}) reached without a passing version",
                        self.cfg.max_inner_iters
                    ),
                    vec![],
                )?;
                self.dir.save(&self.cfg, state)?;
                return Ok(Some(Outcome::Failed(FailureReason::UnfixableDesign)));
            }
            state.inner_episode += 1;
            state.loop_counters.inner += 1;
            self.transition(state, Cursor::Fix)?;
        }
        Ok(None)
    }

    fn step_analyze(&mut self, state: &mut SessionState) -> Result<Option<Outcome>> {
        let report = state
            .last_report
            .clone()
            .ok_or_else(|| Error::InvalidInput("analyze step without a report".into()))?;
        let outcome = {
            let mut ctx = StageCtx {
                state,
                runtime: &mut self.runtime,
                sink: &mut self.sink,
                cfg: &self.cfg,
            };
            let findings = observer_step(&mut ctx, &report, None)?;
            analyst_step(&mut ctx, &report, &findings)?
        };

        let rating = outcome.record.rating;
        state.analyses.push(outcome.record);
        let k = state.loop_counters.outer;
        let update = state.points.apply_rating(k, rating, &self.cfg.points)?;
        let ts_ms = state.clock.now_ms();
        self.sink.append(&TranscriptEvent::PointsUpdated {
            ts_ms,
            k,
            rating,
            p: update.p,
            p_hat: update.p_hat,
            p_next: update.p_next,
        })?;

        let watched = &state.analyses[state.stall_ignore_before.min(state.analyses.len())..];
        let stalled = trend_is_stalled(watched, self.cfg.stall_window, self.cfg.stall_eps_rel);
        let outer = state.loop_counters.outer;
        let stall_terminate = stalled && outer >= self.cfg.min_outer_iters;
        let cap_terminate = outer >= self.cfg.max_outer_iters;

        if !(outcome.terminate || stall_terminate || cap_terminate) {
            self.transition(state, Cursor::Explore)?;
            return Ok(None);
        }

        let best = select_best(&state.versions)?;
        if !outcome.terminate && !stall_terminate {
            // only the hard cap fired
            post_message(
                state,
                &mut self.sink,
                Stage::Verification,
                1,
                Author::System,
                Phase::System,
                format!(
                    "outer iteration cap ({}) reached; selecting the best version",
                    self.cfg.max_outer_iters
                ),
                vec![],
            )?;
            self.terminate(state, best, true)?;
            return Ok(Some(Outcome::Exhausted(best)));
        }

        if stalled && !outcome.terminate {
            post_message(
                state,
                &mut self.sink,
                Stage::Verification,
                1,
                Author::System,
                Phase::System,
                "metric trend stalled; overriding the analyst and terminating".into(),
                vec![],
            )?;
        }

        let best_version = state
            .version(best)
            .cloned()
            .ok_or_else(|| Error::InvalidInput("selected version missing".into()))?;
        let (decision, warning) = self.prompter.decide(&best_version);
        if let Some(warning) = warning {
            post_message(
                state,
                &mut self.sink,
                Stage::Verification,
                1,
                Author::System,
                Phase::System,
                warning,
                vec![],
            )?;
        }
        match decision {
            AcceptDecision::Accept => {
                self.terminate(state, best, false)?;
                Ok(Some(Outcome::Accepted(best)))
            }
            AcceptDecision::ContinueOptimizing => {
                state.stall_ignore_before = state.analyses.len();
                post_message(
                    state,
                    &mut self.sink,
                    Stage::Verification,
                    1,
                    Author::System,
                    Phase::System,
                    "user chose to continue optimizing; stall window reset".into(),
                    vec![],
                )?;
                self.transition(state, Cursor::Explore)?;
                Ok(None)
            }
        }
    }

    fn step_explore(&mut self, state: &mut SessionState) -> Result<Option<Outcome>> {
        {
            let mut ctx = StageCtx {
                state,
                runtime: &mut self.runtime,
                sink: &mut self.sink,
                cfg: &self.cfg,
            };
            run_exploration(&mut ctx)?;
        }
        self.transition(state, Cursor::Implement)?;
        Ok(None)
    }

    fn step_implement(&mut self, state: &mut SessionState, fix: bool) -> Result<Option<Outcome>> {
        let plan_snapshot = state.plan.clone();
        let report_snapshot = state.last_report.clone();
        {
            let mut ctx = StageCtx {
                state,
                runtime: &mut self.runtime,
                sink: &mut self.sink,
                cfg: &self.cfg,
            };
            let source = if fix {
                let report = report_snapshot
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("fix step without a report".into()))?;
                ChecklistSource::FixReport(report)
            } else {
                ChecklistSource::Plan(&plan_snapshot)
            };
            run_implementation(&mut ctx, source)?;
        }
        self.transition(state, Cursor::Verify)?;
        Ok(None)
    }

    fn transition(&mut self, state: &mut SessionState, to: Cursor) -> Result<()> {
        let from = state.cursor;
        state.cursor = to;
        // entering exploration opens a new outer cycle
        if to == Cursor::Explore {
            state.loop_counters.outer += 1;
        }
        let ts_ms = state.clock.now_ms();
        self.sink.append(&TranscriptEvent::LoopTransition {
            ts_ms,
            from,
            to,
            outer: state.loop_counters.outer,
            inner: state.loop_counters.inner,
        })?;
        self.dir.write_version_files(state)?;
        self.dir.save(&self.cfg, state)?;
        Ok(())
    }

    fn terminate(
        &mut self,
        state: &mut SessionState,
        best: VersionId,
        exhausted: bool,
    ) -> Result<()> {
        state.cursor = Cursor::Done { best, exhausted };
        let ts_ms = state.clock.now_ms();
        self.sink.append(&TranscriptEvent::Termination {
            ts_ms,
            best_version: best,
            exhausted,
        })?;
        self.dir.write_version_files(state)?;
        self.dir.save(&self.cfg, state)?;
        Ok(())
    }

    /// Renders decision_path.md from the transcript on disk.
    pub fn finalize(&mut self, state: &SessionState) -> Result<()> {
        let events =
            read_transcript(&self.dir.transcript()).map_err(|e| Error::Doc(e.to_string()))?;
        let markdown = render_markdown(&events);
        std::fs::write(self.dir.decision_path(), markdown)
            .map_err(|e| Error::Doc(e.to_string()))?;
        self.dir.write_version_files(state)?;
        self.dir.save(&self.cfg, state)?;
        Ok(())
    }
}
