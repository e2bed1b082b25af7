//! Implementation stage: the programmer/reviewer loop that turns an
//! exploration plan or a defect report into a new code version, iterating on
//! review feedback until every checklist task is done.

use crate::domain::{
    Author, ChecklistItem, ChecklistOrigin, ChecklistStatus, ExplorationPlan, Phase, RoleId,
    SessionState, Stage, VersionId,
};
use crate::error::{Error, Result};
use crate::protocol::{converse, render_checklist, StageCtx};
use crate::runtime::payload::{PayloadKind, StructuredPayload};
use crate::runtime::PayloadRequirements;
use crate::verification::VerificationReport;

/// What the implementation squad is asked to do: realize the exploration plan
/// or fix the defects of a failed verification.
#[derive(Debug, Clone, Copy)]
pub enum ChecklistSource<'a> {
    Plan(&'a ExplorationPlan),
    FixReport(&'a VerificationReport),
}

/// Reviewer verdict after one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewVerdict {
    pub completed_items: Vec<u32>,
    pub feedback: String,
    pub all_done: bool,
}

/// One pending item per plan action or per distinct defect.
pub fn build_checklist(source: ChecklistSource<'_>) -> Result<Vec<ChecklistItem>> {
    let items: Vec<ChecklistItem> = match source {
        ChecklistSource::Plan(plan) => plan
            .actions
            .iter()
            .enumerate()
            .map(|(i, action)| ChecklistItem {
                item_id: i as u32 + 1,
                task: action.description.clone(),
                origin: ChecklistOrigin::FromPlan {
                    action_id: action.action_id.clone(),
                },
                status: ChecklistStatus::Pending,
            })
            .collect(),
        ChecklistSource::FixReport(report) => report
            .defects
            .iter()
            .enumerate()
            .map(|(i, defect)| ChecklistItem {
                item_id: i as u32 + 1,
                task: format!("fix: {defect}"),
                origin: ChecklistOrigin::FromFix {
                    defect: defect.clone(),
                },
                status: ChecklistStatus::Pending,
            })
            .collect(),
    };
    if items.is_empty() {
        return Err(Error::NothingToDo);
    }
    Ok(items)
}

/// Programmer turn: summarize pending work, then emit the complete module
/// source. Returns the recorded version and the narrative prose.
pub fn programmer_step(ctx: &mut StageCtx<'_>, round: u32) -> Result<(VersionId, String)> {
    let pending: Vec<&ChecklistItem> = ctx
        .state
        .checklist
        .iter()
        .filter(|i| i.status == ChecklistStatus::Pending)
        .collect();
    assert!(!pending.is_empty(), "programmer_step needs pending work");

    let latest_code = ctx
        .state
        .latest_version()
        .map(|v| v.code.clone())
        .unwrap_or_default();
    let feedback = last_reviewer_feedback(ctx.state);
    let mut user_turn = format!(
        "Checklist:\n{}\nImplement every pending task and reply with the complete module source in one `verilog` block.",
        render_checklist(ctx.state)
    );
    if !latest_code.is_empty() {
        user_turn.push_str(&format!("\n\nCurrent code:\n```\n{latest_code}\n```"));
    }
    if let Some(feedback) = feedback {
        user_turn.push_str(&format!("\n\nReviewer feedback to address:\n{feedback}"));
    }

    let (prose, payloads) = converse(
        ctx,
        RoleId::Programmer,
        Stage::Implementation,
        round,
        user_turn,
        &PayloadRequirements::kinds(&[PayloadKind::CodeBlock]),
        &|_| Phase::Generate,
    )
    .map_err(stage_error)?;

    let code = payloads
        .iter()
        .find_map(|p| match p {
            StructuredPayload::CodeBlock { code } => Some(code.clone()),
            _ => None,
        })
        .expect("required code block present");
    let parent = ctx.state.latest_version().map(|v| v.version_id);
    let version_id = ctx.state.record_version(code, parent)?;
    Ok((version_id, prose))
}

/// Reviewer turn: mark completed items, optionally add new fix tasks, and
/// report whether everything is done.
pub fn reviewer_step(ctx: &mut StageCtx<'_>, round: u32, code: &str) -> Result<ReviewVerdict> {
    let known_ids: Vec<u32> = ctx.state.checklist.iter().map(|i| i.item_id).collect();
    let ids_for_check = known_ids.clone();
    let validator = move |payloads: &[StructuredPayload]| -> std::result::Result<(), String> {
        for p in payloads {
            if let StructuredPayload::ChecklistUpdate { completed, .. } = p {
                for id in completed {
                    if !ids_for_check.contains(id) {
                        return Err(format!("unknown checklist item id {id}"));
                    }
                }
            }
        }
        Ok(())
    };
    let requirements = PayloadRequirements {
        required_kinds: &[PayloadKind::ChecklistUpdate],
        validator: Some(&validator),
    };

    let user_turn = format!(
        "Checklist:\n{}\nCandidate code:\n```\n{code}\n```\nReview the code and report completed items and feedback.",
        render_checklist(ctx.state)
    );
    let (_, payloads) = converse(
        ctx,
        RoleId::Reviewer,
        Stage::Implementation,
        round,
        user_turn,
        &requirements,
        &|_| Phase::Feedback,
    )
    .map_err(stage_error)?;

    let (completed, feedback, new_tasks) = payloads
        .iter()
        .find_map(|p| match p {
            StructuredPayload::ChecklistUpdate {
                completed,
                feedback,
                new_tasks,
            } => Some((completed.clone(), feedback.clone(), new_tasks.clone())),
            _ => None,
        })
        .expect("required checklist update present");

    for id in &completed {
        if let Some(item) = ctx.state.checklist.iter_mut().find(|i| i.item_id == *id) {
            item.status = ChecklistStatus::Done;
        }
    }
    let base_id = ctx
        .state
        .checklist
        .iter()
        .map(|i| i.item_id)
        .max()
        .unwrap_or(0);
    for (offset, task) in new_tasks.into_iter().enumerate() {
        ctx.state.checklist.push(ChecklistItem {
            item_id: base_id + 1 + offset as u32,
            task: task.clone(),
            origin: ChecklistOrigin::FromFix { defect: task },
            status: ChecklistStatus::Pending,
        });
    }

    let all_done = ctx
        .state
        .checklist
        .iter()
        .all(|i| i.status == ChecklistStatus::Done);
    Ok(ReviewVerdict {
        completed_items: completed,
        feedback,
        all_done,
    })
}

/// Alternates programmer and reviewer turns until the reviewer marks all
/// tasks complete or the round cap is hit; returns the latest version.
pub fn run_implementation(
    ctx: &mut StageCtx<'_>,
    source: ChecklistSource<'_>,
) -> Result<VersionId> {
    ctx.state.checklist = build_checklist(source)?;
    let mut latest: Option<VersionId> = None;

    for round in 1..=ctx.cfg.max_impl_rounds {
        let (version_id, _narrative) = programmer_step(ctx, round)?;
        latest = Some(version_id);
        let code = ctx
            .state
            .version(version_id)
            .expect("just recorded")
            .code
            .clone();
        let verdict = reviewer_step(ctx, round, &code)?;
        if verdict.all_done {
            return Ok(version_id);
        }
    }

    let version_id = latest.expect("at least one round ran");
    crate::doc::post_message(
        ctx.state,
        ctx.sink,
        Stage::Implementation,
        ctx.cfg.max_impl_rounds,
        Author::System,
        Phase::System,
        format!(
            "implementation round cap ({}) reached with pending checklist items; proceeding with v{version_id}",
            ctx.cfg.max_impl_rounds
        ),
        vec![],
    )?;
    Ok(version_id)
}

fn last_reviewer_feedback(state: &SessionState) -> Option<String> {
    state
        .pool
        .iter()
        .rev()
        .find(|m| m.author == Author::Role(RoleId::Reviewer))
        .and_then(|m| {
            m.machine_blocks.iter().find_map(|p| match p {
                StructuredPayload::ChecklistUpdate { feedback, .. } if !feedback.is_empty() => {
                    Some(feedback.clone())
                }
                _ => None,
            })
        })
}

fn stage_error(e: Error) -> Error {
    match e {
        Error::ProtocolBreakdown { role, detail } => {
            Error::ImplementationFailed(format!("{role}: {detail}"))
        }
        other => other,
    }
}
