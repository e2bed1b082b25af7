//! Exploration stage: the three-expert debate over a shared message pool.
//!
//! Each round the experts speak once, in an order drawn fresh from the
//! session RNG. A turn may discuss, vote on every pending commit proposed
//! before it, and propose new commits. A commit's ballot settles once all
//! three experts have voted (the proposer backs its own proposal); majority
//! applies it to the plan, budget permitting. The stage ends after a round
//! with no new commits in which every expert also polls the plan acceptable,
//! or at the round cap.

use std::collections::BTreeMap;

use crate::doc::{post_message, TranscriptEvent};
use crate::domain::{
    Author, Commit, CommitOutcome, ExplorationPlan, Mutation, Phase, RoleId, Stage, Verified,
    VoteDecision,
};
use crate::error::{Error, Result};
use crate::points;
use crate::protocol::{converse, render_plan, render_recent_messages, StageCtx};
use crate::runtime::payload::{PayloadKind, StructuredPayload};
use crate::runtime::PayloadRequirements;

/// One debate round's bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct DebateRound {
    pub round_no: u32,
    pub speaking_order: Vec<RoleId>,
    /// Commits proposed during this round.
    pub commits: Vec<Commit>,
    pub new_commit_count: u32,
}

/// Per-expert answers to the plan acceptability poll.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcceptancePoll {
    pub responses: BTreeMap<RoleId, bool>,
}

impl AcceptancePoll {
    pub fn all_acceptable(&self) -> bool {
        self.responses.len() == Stage::Exploration.squad().len()
            && self.responses.values().all(|ok| *ok)
    }
}

/// Majority rule over a complete ballot: applied with at least two accepts.
pub fn tally_votes(commit: &Commit) -> Result<CommitOutcome> {
    for role in Stage::Exploration.squad() {
        if !commit.votes.contains_key(role) {
            return Err(Error::IncompleteBallot {
                commit_id: commit.commit_id.clone(),
            });
        }
    }
    Ok(if commit.accept_count() >= 2 {
        CommitOutcome::Applied
    } else {
        CommitOutcome::Rejected
    })
}

/// Applies an accepted commit to the plan and bumps the revision.
pub fn apply_commit(plan: &mut ExplorationPlan, commit: &Commit, budget: u32) -> Result<()> {
    assert_eq!(
        commit.outcome,
        CommitOutcome::Applied,
        "only applied commits reach the plan"
    );
    match &commit.mutation {
        Mutation::Add { action } => {
            if plan.find(&action.action_id).is_some() {
                return Err(Error::InvalidInput(format!(
                    "action id {} already in the plan",
                    action.action_id
                )));
            }
            let cost = plan.total_cost() + action.cost();
            if cost > budget {
                return Err(Error::OverBudget { cost, budget });
            }
            plan.actions.push(action.clone());
        }
        Mutation::Modify { action_id, action } => {
            let idx = plan.find(action_id).ok_or_else(|| Error::UnknownAction {
                action_id: action_id.clone(),
            })?;
            let cost = plan.total_cost() - plan.actions[idx].cost() + action.cost();
            if cost > budget {
                return Err(Error::OverBudget { cost, budget });
            }
            plan.actions[idx] = action.clone();
        }
        Mutation::Delete { action_id } => {
            let idx = plan.find(action_id).ok_or_else(|| Error::UnknownAction {
                action_id: action_id.clone(),
            })?;
            plan.actions.remove(idx);
        }
    }
    plan.revision += 1;
    Ok(())
}

/// Runs the debate until the plan settles; the resulting plan lives in
/// `state.plan`.
pub fn run_exploration(ctx: &mut StageCtx<'_>) -> Result<()> {
    if let Some(latest) = ctx.state.latest_version() {
        if latest.verified != Verified::Passed {
            return Err(Error::InvalidInput(
                "exploration requires the latest version to have passed verification".into(),
            ));
        }
    }
    // implemented actions belong to shipped versions; each cycle debates a
    // fresh plan (the revision counter keeps growing for commit identity)
    ctx.state.plan.actions.clear();

    let raw_budget = points::budget(ctx.state.points.current);
    let force = ctx.cfg.force_min_action && raw_budget == 0;
    let budget = if force { raw_budget.max(1) } else { raw_budget };

    if force {
        post_message(
            ctx.state,
            ctx.sink,
            Stage::Exploration,
            1,
            Author::System,
            Phase::System,
            "exploration budget is zero; asking the first speaker for a single optimization action"
                .into(),
            vec![],
        )?;
        forced_min_action(ctx, 1, budget)?;
        return Ok(());
    }

    let mut pending: Vec<Commit> = Vec::new();
    for round_no in 1..=ctx.cfg.max_debate_rounds {
        let round = debate_round(ctx, round_no, budget, &mut pending)?;
        if round.new_commit_count == 0 {
            let poll = poll_experts(ctx, round_no, &round.speaking_order)?;
            if poll.all_acceptable() {
                ensure_nonempty_plan(ctx, round_no, budget)?;
                return Ok(());
            }
        }
    }

    post_message(
        ctx.state,
        ctx.sink,
        Stage::Exploration,
        ctx.cfg.max_debate_rounds,
        Author::System,
        Phase::System,
        format!(
            "debate round cap ({}) reached; proceeding with the current plan",
            ctx.cfg.max_debate_rounds
        ),
        vec![],
    )?;
    ensure_nonempty_plan(ctx, ctx.cfg.max_debate_rounds, budget)?;
    Ok(())
}

fn debate_round(
    ctx: &mut StageCtx<'_>,
    round_no: u32,
    budget: u32,
    pending: &mut Vec<Commit>,
) -> Result<DebateRound> {
    let mut speaking_order: Vec<RoleId> = Stage::Exploration.squad().to_vec();
    ctx.state.rng.shuffle(&mut speaking_order);
    let mut new_commit_count = 0u32;
    let mut proposed_this_round: Vec<Commit> = Vec::new();

    for expert in speaking_order.clone() {
        let due: Vec<String> = pending
            .iter()
            .filter(|c| c.outcome == CommitOutcome::Pending && !c.votes.contains_key(&expert))
            .map(|c| c.commit_id.clone())
            .collect();
        let payloads = expert_turn(ctx, expert, round_no, budget, pending, &due)?;

        for payload in payloads {
            match payload {
                StructuredPayload::Vote {
                    commit_id,
                    decision,
                    ..
                } => {
                    let target = pending
                        .iter_mut()
                        .find(|c| c.commit_id == commit_id && c.outcome == CommitOutcome::Pending);
                    match target {
                        Some(commit) if !commit.votes.contains_key(&expert) => {
                            commit.votes.insert(expert, decision);
                        }
                        _ => {
                            post_message(
                                ctx.state,
                                ctx.sink,
                                Stage::Exploration,
                                round_no,
                                Author::System,
                                Phase::System,
                                format!(
                                    "vote by {expert} on commit {commit_id} ignored (unknown, settled, or already voted)"
                                ),
                                vec![],
                            )?;
                        }
                    }
                }
                StructuredPayload::CommitProposal {
                    mutation,
                    rationale,
                } => {
                    let commit = Commit::new(mutation, rationale, expert, ctx.state.plan.revision);
                    if pending.iter().any(|c| c.commit_id == commit.commit_id) {
                        post_message(
                            ctx.state,
                            ctx.sink,
                            Stage::Exploration,
                            round_no,
                            Author::System,
                            Phase::System,
                            format!(
                                "proposal by {expert} collides with pending commit {}; ignored",
                                commit.commit_id
                            ),
                            vec![],
                        )?;
                        continue;
                    }
                    let ts_ms = ctx.state.clock.now_ms();
                    ctx.sink.append(&TranscriptEvent::CommitProposed {
                        ts_ms,
                        commit: commit.clone(),
                    })?;
                    proposed_this_round.push(commit.clone());
                    pending.push(commit);
                    new_commit_count += 1;
                }
                _ => {}
            }
        }

        settle_ballots(ctx, round_no, budget, pending)?;
    }

    Ok(DebateRound {
        round_no,
        speaking_order,
        commits: proposed_this_round,
        new_commit_count,
    })
}

fn expert_turn(
    ctx: &mut StageCtx<'_>,
    expert: RoleId,
    round_no: u32,
    budget: u32,
    pending: &[Commit],
    due: &[String],
) -> Result<Vec<StructuredPayload>> {
    let plan_text = render_plan(ctx.state);
    let pending_text = render_pending(pending);
    let recent = render_recent_messages(ctx.state, Stage::Exploration, 12);
    let mut user_turn = format!(
        "Debate round {round_no}. Budget this round: {budget} point(s); current plan cost: {}.\n\nCurrent plan:\n{plan_text}\nPending commits:\n{pending_text}\nRecent debate:\n{recent}\n",
        ctx.state.plan.total_cost()
    );
    if due.is_empty() {
        user_turn.push_str(
            "No votes are due from you. Discuss the plan and propose commits if you see room for improvement.",
        );
    } else {
        user_turn.push_str(&format!(
            "Votes due from you (one `vote` block each): {}.",
            due.join(", ")
        ));
    }

    let due_for_check = due.to_vec();
    let validator = move |payloads: &[StructuredPayload]| -> std::result::Result<(), String> {
        for id in &due_for_check {
            let voted = payloads
                .iter()
                .any(|p| matches!(p, StructuredPayload::Vote { commit_id, .. } if commit_id == id));
            if !voted {
                return Err(format!("missing vote on pending commit {id}"));
            }
        }
        Ok(())
    };
    let requirements = PayloadRequirements {
        required_kinds: &[],
        validator: Some(&validator),
    };

    let (_, payloads) = converse(
        ctx,
        expert,
        Stage::Exploration,
        round_no,
        user_turn,
        &requirements,
        &phase_of_debate_turn,
    )
    .map_err(stage_error)?;
    Ok(payloads)
}

fn phase_of_debate_turn(payloads: &[StructuredPayload]) -> Phase {
    if payloads
        .iter()
        .any(|p| p.kind() == PayloadKind::CommitProposal)
    {
        Phase::Commit
    } else if payloads
        .iter()
        .any(|p| matches!(p.kind(), PayloadKind::Vote | PayloadKind::PlanPoll))
    {
        Phase::Review
    } else {
        Phase::Communicate
    }
}

/// Settles every ballot that has all three votes.
fn settle_ballots(
    ctx: &mut StageCtx<'_>,
    round_no: u32,
    budget: u32,
    pending: &mut [Commit],
) -> Result<()> {
    for commit in pending.iter_mut() {
        if commit.outcome != CommitOutcome::Pending || commit.votes.len() < 3 {
            continue;
        }
        let verdict = tally_votes(commit)?;
        if verdict == CommitOutcome::Applied {
            commit.outcome = CommitOutcome::Applied;
            match apply_commit(&mut ctx.state.plan, commit, budget) {
                Ok(()) => {
                    let ts_ms = ctx.state.clock.now_ms();
                    ctx.sink.append(&TranscriptEvent::VoteTally {
                        ts_ms,
                        commit_id: commit.commit_id.clone(),
                        accepts: commit.accept_count(),
                        rejects: commit.reject_count(),
                        outcome: CommitOutcome::Applied,
                    })?;
                    let ts_ms = ctx.state.clock.now_ms();
                    ctx.sink.append(&TranscriptEvent::CommitApplied {
                        ts_ms,
                        commit_id: commit.commit_id.clone(),
                        revision: ctx.state.plan.revision,
                        plan_cost: ctx.state.plan.total_cost(),
                    })?;
                }
                Err(e) => {
                    commit.outcome = CommitOutcome::Rejected;
                    let ts_ms = ctx.state.clock.now_ms();
                    ctx.sink.append(&TranscriptEvent::VoteTally {
                        ts_ms,
                        commit_id: commit.commit_id.clone(),
                        accepts: commit.accept_count(),
                        rejects: commit.reject_count(),
                        outcome: CommitOutcome::Rejected,
                    })?;
                    post_message(
                        ctx.state,
                        ctx.sink,
                        Stage::Exploration,
                        round_no,
                        Author::System,
                        Phase::System,
                        format!(
                            "commit {} was accepted by vote but could not be applied: {e}",
                            commit.commit_id
                        ),
                        vec![],
                    )?;
                }
            }
        } else {
            commit.outcome = CommitOutcome::Rejected;
            let ts_ms = ctx.state.clock.now_ms();
            ctx.sink.append(&TranscriptEvent::VoteTally {
                ts_ms,
                commit_id: commit.commit_id.clone(),
                accepts: commit.accept_count(),
                rejects: commit.reject_count(),
                outcome: CommitOutcome::Rejected,
            })?;
        }
    }
    Ok(())
}

fn poll_experts(ctx: &mut StageCtx<'_>, round_no: u32, order: &[RoleId]) -> Result<AcceptancePoll> {
    let mut poll = AcceptancePoll::default();
    for expert in order {
        let user_turn = format!(
            "No new commits were proposed this round. Is the exploration plan acceptable as it stands?\n\nCurrent plan:\n{}\nAnswer with one `rtlsquad` block: {{\"kind\":\"plan_poll\",\"acceptable\":true|false,\"reason\":\"<text>\"}}",
            render_plan(ctx.state)
        );
        let (_, payloads) = converse(
            ctx,
            *expert,
            Stage::Exploration,
            round_no,
            user_turn,
            &PayloadRequirements::kinds(&[PayloadKind::PlanPoll]),
            &phase_of_debate_turn,
        )
        .map_err(stage_error)?;
        let acceptable = payloads
            .iter()
            .find_map(|p| match p {
                StructuredPayload::PlanPoll { acceptable, .. } => Some(*acceptable),
                _ => None,
            })
            .expect("required plan poll present");
        poll.responses.insert(*expert, acceptable);
    }
    Ok(poll)
}

/// A settled-but-empty plan would stall the outer loop; fall back to the
/// forced single action when allowed.
fn ensure_nonempty_plan(ctx: &mut StageCtx<'_>, round_no: u32, budget: u32) -> Result<()> {
    if !ctx.state.plan.actions.is_empty() {
        return Ok(());
    }
    if !ctx.cfg.force_min_action {
        return Err(Error::ExplorationFailed(
            "debate settled on an empty plan".into(),
        ));
    }
    post_message(
        ctx.state,
        ctx.sink,
        Stage::Exploration,
        round_no,
        Author::System,
        Phase::System,
        "debate settled on an empty plan; asking the first speaker for a single optimization action".into(),
        vec![],
    )?;
    forced_min_action(ctx, round_no, budget.max(1))
}

/// Asks the first speaker of a fresh order for exactly one optimization
/// action and applies it without a ballot.
fn forced_min_action(ctx: &mut StageCtx<'_>, round_no: u32, budget: u32) -> Result<()> {
    let mut order: Vec<RoleId> = Stage::Exploration.squad().to_vec();
    ctx.state.rng.shuffle(&mut order);
    let speaker = order[0];

    let validator = |payloads: &[StructuredPayload]| -> std::result::Result<(), String> {
        let proposals: Vec<&StructuredPayload> = payloads
            .iter()
            .filter(|p| p.kind() == PayloadKind::CommitProposal)
            .collect();
        if proposals.len() != 1 {
            return Err("reply must contain exactly one commit_proposal".into());
        }
        match proposals[0] {
            StructuredPayload::CommitProposal {
                mutation: Mutation::Add { action },
                ..
            } if action.kind == crate::domain::ActionKind::Opt => Ok(()),
            _ => Err("the proposal must add a single opt action".into()),
        }
    };
    let requirements = PayloadRequirements {
        required_kinds: &[PayloadKind::CommitProposal],
        validator: Some(&validator),
    };
    let user_turn = format!(
        "The exploration budget admits exactly one optimization action this round. Propose the single most valuable `opt` action as one commit_proposal.\n\nCurrent plan:\n{}",
        render_plan(ctx.state)
    );
    let (_, payloads) = converse(
        ctx,
        speaker,
        Stage::Exploration,
        round_no,
        user_turn,
        &requirements,
        &phase_of_debate_turn,
    )
    .map_err(stage_error)?;

    let (mutation, rationale) = payloads
        .into_iter()
        .find_map(|p| match p {
            StructuredPayload::CommitProposal {
                mutation,
                rationale,
            } => Some((mutation, rationale)),
            _ => None,
        })
        .expect("required proposal present");
    let mut commit = Commit::new(mutation, rationale, speaker, ctx.state.plan.revision);
    let ts_ms = ctx.state.clock.now_ms();
    ctx.sink.append(&TranscriptEvent::CommitProposed {
        ts_ms,
        commit: commit.clone(),
    })?;
    commit.outcome = CommitOutcome::Applied;
    apply_commit(&mut ctx.state.plan, &commit, budget)?;
    let ts_ms = ctx.state.clock.now_ms();
    ctx.sink.append(&TranscriptEvent::CommitApplied {
        ts_ms,
        commit_id: commit.commit_id.clone(),
        revision: ctx.state.plan.revision,
        plan_cost: ctx.state.plan.total_cost(),
    })?;
    post_message(
        ctx.state,
        ctx.sink,
        Stage::Exploration,
        round_no,
        Author::System,
        Phase::System,
        format!(
            "forced action: commit {} applied without a ballot",
            commit.commit_id
        ),
        vec![],
    )?;
    Ok(())
}

fn render_pending(pending: &[Commit]) -> String {
    let open: Vec<&Commit> = pending
        .iter()
        .filter(|c| c.outcome == CommitOutcome::Pending)
        .collect();
    if open.is_empty() {
        return "(none)\n".into();
    }
    let mut out = String::new();
    for commit in open {
        let what = match &commit.mutation {
            Mutation::Add { action } => format!(
                "add [{}] {} ({} pts): {}",
                match action.kind {
                    crate::domain::ActionKind::Expl => "expl",
                    crate::domain::ActionKind::Opt => "opt",
                },
                action.action_id,
                action.cost(),
                action.description
            ),
            Mutation::Modify { action_id, action } => {
                format!("modify {action_id} -> {}", action.description)
            }
            Mutation::Delete { action_id } => format!("delete {action_id}"),
        };
        let voters: Vec<String> = commit
            .votes
            .iter()
            .map(|(role, v)| {
                format!(
                    "{role}:{}",
                    match v {
                        VoteDecision::Accept => "accept",
                        VoteDecision::Reject => "reject",
                    }
                )
            })
            .collect();
        out.push_str(&format!(
            "- {} (by {}): {what} — {} [votes: {}]\n",
            commit.commit_id,
            commit.proposer,
            commit.rationale,
            voters.join(", ")
        ));
    }
    out
}

fn stage_error(e: Error) -> Error {
    match e {
        Error::ProtocolBreakdown { role, detail } => {
            Error::ExplorationFailed(format!("{role}: {detail}"))
        }
        other => other,
    }
}
