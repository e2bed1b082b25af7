//! Script fixtures for CLI tests: a single-cycle scripted session.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;

use rtlsquad_core::domain::{
    commit_id_for, ActionKind, ExplAction, Mutation, RoleId, SessionRng, Stage, VoteDecision,
};
use rtlsquad_core::runtime::payload::{render_payload, StageChoice, StructuredPayload};
use rtlsquad_core::runtime::script::{ScriptKey, ScriptRecord};

pub struct ScriptBuilder {
    records: Vec<ScriptRecord>,
    counts: HashMap<(RoleId, Stage, u32), u32>,
}

impl ScriptBuilder {
    pub fn new() -> Self {
        ScriptBuilder {
            records: Vec::new(),
            counts: HashMap::new(),
        }
    }

    pub fn add(&mut self, role: RoleId, stage: Stage, round: u32, reply: impl Into<String>) {
        let counter = self.counts.entry((role, stage, round)).or_insert(0);
        let index = *counter;
        *counter += 1;
        self.records.push(ScriptRecord {
            key: ScriptKey {
                role,
                stage,
                round,
                index,
            },
            reply: reply.into(),
        });
    }

    pub fn to_jsonl(&self) -> String {
        let mut text = String::new();
        for record in &self.records {
            text.push_str(&serde_json::to_string(record).unwrap());
            text.push('\n');
        }
        text
    }

    pub fn write_jsonl(&self, path: &Path) {
        std::fs::write(path, self.to_jsonl()).unwrap();
    }
}

fn order(seed: u64, draw: usize) -> Vec<RoleId> {
    let mut rng = SessionRng::new(seed);
    let mut order = Vec::new();
    for _ in 0..=draw {
        order = Stage::Exploration.squad().to_vec();
        rng.shuffle(&mut order);
    }
    order
}

/// One exploration cycle (proposal accepted unanimously, quiet second round,
/// poll), one implementation round, one analysis that terminates. The mock
/// directive line controls the verification outcome.
pub fn single_cycle_script(seed: u64, mock_line: &str, terminate: bool) -> ScriptBuilder {
    let mut builder = ScriptBuilder::new();
    let order1 = order(seed, 0);
    let order2 = order(seed, 1);
    let description = "balance the adder tree depth";
    let action = ExplAction {
        action_id: "a1".into(),
        kind: ActionKind::Opt,
        description: description.into(),
    };
    let commit_id = commit_id_for(
        &Mutation::Add {
            action: action.clone(),
        },
        order1[0],
        0,
    );

    builder.add(
        order1[0],
        Stage::Exploration,
        1,
        format!(
            "A balanced tree shortens the worst path at no area cost.\n{}",
            render_payload(&StructuredPayload::CommitProposal {
                mutation: Mutation::Add { action },
                rationale: "shortens the critical path".into(),
            })
        ),
    );
    for expert in &order1[1..] {
        builder.add(
            *expert,
            Stage::Exploration,
            1,
            format!(
                "Support.\n{}",
                render_payload(&StructuredPayload::Vote {
                    commit_id: commit_id.clone(),
                    decision: VoteDecision::Accept,
                    reason: "clear win".into(),
                })
            ),
        );
    }
    for expert in &order2 {
        builder.add(*expert, Stage::Exploration, 2, "Nothing to add this round.");
    }
    for expert in &order2 {
        builder.add(
            *expert,
            Stage::Exploration,
            2,
            format!(
                "Plan is fine.\n{}",
                render_payload(&StructuredPayload::PlanPoll {
                    acceptable: true,
                    reason: "scope matches the budget".into(),
                })
            ),
        );
    }

    builder.add(
        RoleId::Programmer,
        Stage::Implementation,
        1,
        format!(
            "Implementing the balanced tree.\n```verilog\n{mock_line}\nmodule design(input clk);\nendmodule\n```"
        ),
    );
    builder.add(
        RoleId::Reviewer,
        Stage::Implementation,
        1,
        format!(
            "Done as planned.\n{}",
            render_payload(&StructuredPayload::ChecklistUpdate {
                completed: vec![1],
                feedback: String::new(),
                new_tasks: vec![],
            })
        ),
    );

    builder.add(
        RoleId::Observer,
        Stage::Verification,
        1,
        "The run passed with balanced figures.",
    );
    builder.add(
        RoleId::Analyst,
        Stage::Verification,
        1,
        format!(
            "Solid result.\n{}\n{}",
            render_payload(&StructuredPayload::Rating {
                value: 4,
                justification: "the tree change paid off".into(),
            }),
            render_payload(&StructuredPayload::StageDecision {
                decision: if terminate {
                    StageChoice::Terminate
                } else {
                    StageChoice::ContinueExploration
                },
                best_version: None,
                justification: "good stopping point".into(),
            })
        ),
    );
    builder
}

/// Script where every generated version fails simulation: with a small inner
/// cap the session ends in an unfixable-design failure.
pub fn failing_script(seed: u64, fix_rounds: u32) -> ScriptBuilder {
    let mut builder = single_cycle_script(seed, "// MOCK: pass=false", true);
    for attempt in 0..fix_rounds {
        builder.add(
            RoleId::Programmer,
            Stage::Implementation,
            1,
            format!(
                "Fix attempt {attempt}.\n```verilog\n// MOCK: pass=false\nmodule design_{attempt}(input clk);\nendmodule\n```"
            ),
        );
        builder.add(
            RoleId::Reviewer,
            Stage::Implementation,
            1,
            format!(
                "Plausible fix.\n{}",
                render_payload(&StructuredPayload::ChecklistUpdate {
                    completed: vec![1],
                    feedback: String::new(),
                    new_tasks: vec![],
                })
            ),
        );
    }
    builder
}
