//! Shared squad machinery: running one agent exchange end to end (prompt,
//! completion, repair, pool bookkeeping) and rendering session context into
//! prompt text.

use crate::doc::{post_message, EventSink};
use crate::domain::{Author, Phase, RoleId, SessionState, Stage};
use crate::error::{Error, Result};
use crate::orchestrator::OrchestratorConfig;
use crate::runtime::payload::StructuredPayload;
use crate::runtime::prompts::render_template;
use crate::runtime::{AgentRuntime, AskOutcome, CallKey, ChatTurn, PayloadRequirements, Speaker};

/// Everything a squad stage needs to operate.
pub struct StageCtx<'a> {
    pub state: &'a mut SessionState,
    pub runtime: &'a mut AgentRuntime,
    pub sink: &'a mut dyn EventSink,
    pub cfg: &'a OrchestratorConfig,
}

/// Runs one logical exchange with an agent: renders the system prompt,
/// issues the completion (with one corrective retry), and posts every reply
/// the agent produced to the pool — invalid attempts included, with a system
/// note in between, so the transcript shows the full conversation.
///
/// Returns the prose and payloads of the accepted reply, or a protocol
/// breakdown if the agent failed twice.
pub fn converse(
    ctx: &mut StageCtx<'_>,
    role: RoleId,
    stage: Stage,
    round: u32,
    user_turn: String,
    requirements: &PayloadRequirements<'_>,
    phase_of: &dyn Fn(&[StructuredPayload]) -> Phase,
) -> Result<(String, Vec<StructuredPayload>)> {
    converse_with_vars(
        ctx,
        role,
        stage,
        round,
        user_turn,
        requirements,
        phase_of,
        &[],
    )
}

/// Like [`converse`], with extra placeholder values for the role template
/// (the observer's `{report_excerpt}`, for instance).
#[allow(clippy::too_many_arguments)]
pub fn converse_with_vars(
    ctx: &mut StageCtx<'_>,
    role: RoleId,
    stage: Stage,
    round: u32,
    user_turn: String,
    requirements: &PayloadRequirements<'_>,
    phase_of: &dyn Fn(&[StructuredPayload]) -> Phase,
    extra_vars: &[(&str, &str)],
) -> Result<(String, Vec<StructuredPayload>)> {
    let key = CallKey { role, stage, round };
    let system_prompt = render_system_prompt_with(ctx, role, extra_vars);
    let transcript = vec![
        ChatTurn {
            speaker: Speaker::System,
            content: system_prompt,
        },
        ChatTurn {
            speaker: Speaker::User,
            content: user_turn,
        },
    ];

    let outcome = ctx
        .runtime
        .ask_with_repair(&key, &transcript, requirements)?;
    let (records, ok) = match outcome {
        AskOutcome::Ok(records) => (records, true),
        AskOutcome::Breakdown(records) => (records, false),
    };

    let total = records.len();
    let mut accepted: Option<(String, Vec<StructuredPayload>)> = None;
    for (idx, record) in records.into_iter().enumerate() {
        let phase = phase_of(&record.payloads);
        post_message(
            ctx.state,
            ctx.sink,
            stage,
            round,
            Author::Role(role),
            phase,
            record.prose.clone(),
            record.payloads.clone(),
        )?;
        if let Some(problem) = &record.problem {
            let note = if idx + 1 < total {
                format!("reply from {role} could not be processed ({problem}); requesting a corrected reply")
            } else {
                format!("reply from {role} could not be processed ({problem}); giving up")
            };
            post_message(
                ctx.state,
                ctx.sink,
                stage,
                round,
                Author::System,
                Phase::System,
                note,
                vec![],
            )?;
        } else {
            accepted = Some((record.prose, record.payloads));
        }
    }

    if ok {
        Ok(accepted.expect("ok outcome carries a valid reply"))
    } else {
        Err(Error::ProtocolBreakdown {
            role: role.as_str().into(),
            detail: "no valid reply after one corrective retry".into(),
        })
    }
}

/// Renders a role's system prompt template with the live session context.
pub fn render_system_prompt(ctx: &StageCtx<'_>, role: RoleId) -> String {
    render_system_prompt_with(ctx, role, &[])
}

pub fn render_system_prompt_with(
    ctx: &StageCtx<'_>,
    role: RoleId,
    extra_vars: &[(&str, &str)],
) -> String {
    let template = ctx.runtime.role(role).system_prompt.clone();
    let plan = render_plan(ctx.state);
    let checklist = render_checklist(ctx.state);
    let memories = render_memories(ctx.state);
    let mut vars: Vec<(&str, &str)> = vec![
        ("spec", ctx.state.inputs.spec_text.as_str()),
        ("plan", plan.as_str()),
        ("checklist", checklist.as_str()),
        ("memories", memories.as_str()),
    ];
    vars.extend_from_slice(extra_vars);
    render_template(&template, &vars)
}

pub fn render_plan(state: &SessionState) -> String {
    if state.plan.actions.is_empty() {
        return "(empty)".into();
    }
    let mut out = String::new();
    for action in &state.plan.actions {
        let kind = match action.kind {
            crate::domain::ActionKind::Expl => "expl",
            crate::domain::ActionKind::Opt => "opt",
        };
        out.push_str(&format!(
            "- [{kind}] {} ({} pts): {}\n",
            action.action_id,
            action.cost(),
            action.description
        ));
    }
    out
}

pub fn render_checklist(state: &SessionState) -> String {
    if state.checklist.is_empty() {
        return "(empty)".into();
    }
    let mut out = String::new();
    for item in &state.checklist {
        let status = match item.status {
            crate::domain::ChecklistStatus::Pending => " ",
            crate::domain::ChecklistStatus::Done => "x",
        };
        out.push_str(&format!("- [{status}] {}: {}\n", item.item_id, item.task));
    }
    out
}

/// Analysis memories injected into analyst and exploration prompts: every
/// prior record, most recent last.
pub fn render_memories(state: &SessionState) -> String {
    if state.analyses.is_empty() {
        return "(none)".into();
    }
    let mut out = String::new();
    for record in &state.analyses {
        out.push_str(&format!(
            "- v{} (plan rev {}): rating {}/5 — {}\n",
            record.version_id, record.plan_revision, record.rating, record.narrative
        ));
    }
    out
}

/// Bounded tail of this stage's dialogue for the user turn.
pub fn render_recent_messages(state: &SessionState, stage: Stage, limit: usize) -> String {
    let recent: Vec<&crate::domain::Message> = state
        .pool
        .iter()
        .filter(|m| m.stage == stage && m.seq > 1)
        .collect();
    let start = recent.len().saturating_sub(limit);
    if recent[start..].is_empty() {
        return "(none)".into();
    }
    let mut out = String::new();
    for message in &recent[start..] {
        let body = if message.body.is_empty() {
            "(structured reply)"
        } else {
            message.body.as_str()
        };
        out.push_str(&format!("{}: {}\n", message.author.as_str(), body));
    }
    out
}
