//! Machine-readable payloads embedded in agent replies.
//!
//! Agents speak prose, but every protocol act (a vote, a rating, a commit
//! proposal, ...) must also appear as a fenced block so the orchestrator never
//! has to guess. Two fence tags are recognized:
//!
//! - ```` ```rtlsquad ```` — exactly one JSON object with a `kind` field
//! - ```` ```verilog ```` — a complete module source, mapped to a code block
//!
//! Prose outside fences is kept verbatim as the message body.

use serde::{Deserialize, Serialize};

use crate::domain::Mutation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructuredPayload {
    CommitProposal {
        mutation: Mutation,
        #[serde(default)]
        rationale: String,
    },
    Vote {
        commit_id: String,
        decision: crate::domain::VoteDecision,
        #[serde(default)]
        reason: String,
    },
    Rating {
        value: u8,
        #[serde(default)]
        justification: String,
    },
    CodeBlock {
        code: String,
    },
    ChecklistUpdate {
        #[serde(default)]
        completed: Vec<u32>,
        #[serde(default)]
        feedback: String,
        #[serde(default)]
        new_tasks: Vec<String>,
    },
    DataRequest {
        section: String,
    },
    StageDecision {
        decision: StageChoice,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        best_version: Option<u32>,
        #[serde(default)]
        justification: String,
    },
    PlanPoll {
        acceptable: bool,
        #[serde(default)]
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageChoice {
    ContinueExploration,
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    CommitProposal,
    Vote,
    Rating,
    CodeBlock,
    ChecklistUpdate,
    DataRequest,
    StageDecision,
    PlanPoll,
}

impl PayloadKind {
    pub fn name(self) -> &'static str {
        match self {
            PayloadKind::CommitProposal => "commit_proposal",
            PayloadKind::Vote => "vote",
            PayloadKind::Rating => "rating",
            PayloadKind::CodeBlock => "code_block",
            PayloadKind::ChecklistUpdate => "checklist_update",
            PayloadKind::DataRequest => "data_request",
            PayloadKind::StageDecision => "stage_decision",
            PayloadKind::PlanPoll => "plan_poll",
        }
    }
}

impl StructuredPayload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            StructuredPayload::CommitProposal { .. } => PayloadKind::CommitProposal,
            StructuredPayload::Vote { .. } => PayloadKind::Vote,
            StructuredPayload::Rating { .. } => PayloadKind::Rating,
            StructuredPayload::CodeBlock { .. } => PayloadKind::CodeBlock,
            StructuredPayload::ChecklistUpdate { .. } => PayloadKind::ChecklistUpdate,
            StructuredPayload::DataRequest { .. } => PayloadKind::DataRequest,
            StructuredPayload::StageDecision { .. } => PayloadKind::StageDecision,
            StructuredPayload::PlanPoll { .. } => PayloadKind::PlanPoll,
        }
    }

    fn validate(&self, position: usize) -> Result<()> {
        let fail = |detail: &str| -> Result<()> {
            Err(Error::MalformedPayload {
                kind: self.kind().name().into(),
                position,
                detail: detail.into(),
            })
        };
        match self {
            StructuredPayload::CommitProposal { mutation, .. } => match mutation {
                Mutation::Add { action } | Mutation::Modify { action, .. } => {
                    if action.validate().is_err() {
                        return fail("action needs a non-empty id and description");
                    }
                    if let Mutation::Modify { action_id, .. } = mutation {
                        if action_id.trim().is_empty() {
                            return fail("modify target action_id is empty");
                        }
                    }
                    Ok(())
                }
                Mutation::Delete { action_id } => {
                    if action_id.trim().is_empty() {
                        return fail("delete target action_id is empty");
                    }
                    Ok(())
                }
            },
            StructuredPayload::Vote { commit_id, .. } => {
                if commit_id.trim().is_empty() {
                    return fail("vote needs a commit_id");
                }
                Ok(())
            }
            StructuredPayload::Rating { value, .. } => {
                if !(1..=5).contains(value) {
                    return fail("rating value out of 1..5");
                }
                Ok(())
            }
            StructuredPayload::CodeBlock { code } => {
                if code.trim().is_empty() {
                    return fail("code block is empty");
                }
                Ok(())
            }
            StructuredPayload::ChecklistUpdate { completed, .. } => {
                let mut seen = std::collections::BTreeSet::new();
                for id in completed {
                    if !seen.insert(id) {
                        return fail("duplicate item id in completed list");
                    }
                }
                Ok(())
            }
            StructuredPayload::DataRequest { section } => {
                if section.trim().is_empty() {
                    return fail("data request needs a section name");
                }
                Ok(())
            }
            StructuredPayload::StageDecision { .. } => Ok(()),
            StructuredPayload::PlanPoll { .. } => Ok(()),
        }
    }
}

/// An agent reply split into prose and validated payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedReply {
    pub prose: String,
    pub payloads: Vec<StructuredPayload>,
}

/// Splits a reply into prose and payload blocks, validating every block.
///
/// Unknown fence tags stay part of the prose, including their contents. An
/// unterminated recognized fence, invalid JSON, an unknown `kind`, or a
/// bounds violation all surface as `MalformedPayload` with the 1-based line
/// of the opening fence.
pub fn extract_reply(reply: &str) -> Result<ExtractedReply> {
    #[derive(PartialEq)]
    enum Mode {
        Prose,
        Rtlsquad { open_line: usize },
        Verilog { open_line: usize },
        Foreign,
    }

    let mut mode = Mode::Prose;
    let mut prose: Vec<&str> = Vec::new();
    let mut block: Vec<&str> = Vec::new();
    let mut payloads = Vec::new();

    for (idx, line) in reply.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim_end();
        match mode {
            Mode::Prose => {
                let tag = trimmed.strip_prefix("```").map(str::trim);
                match tag {
                    Some("rtlsquad") => {
                        mode = Mode::Rtlsquad { open_line: line_no };
                        block.clear();
                    }
                    Some("verilog") => {
                        mode = Mode::Verilog { open_line: line_no };
                        block.clear();
                    }
                    Some(_) => {
                        // fence we do not interpret; keep it in the prose and
                        // skip over its interior
                        mode = Mode::Foreign;
                        prose.push(line);
                    }
                    None => prose.push(line),
                }
            }
            Mode::Foreign => {
                prose.push(line);
                if trimmed == "```" {
                    mode = Mode::Prose;
                }
            }
            Mode::Rtlsquad { open_line } => {
                if trimmed == "```" {
                    let body = block.join("\n");
                    let payload: StructuredPayload =
                        serde_json::from_str(&body).map_err(|e| Error::MalformedPayload {
                            kind: sniff_kind(&body),
                            position: open_line,
                            detail: e.to_string(),
                        })?;
                    payload.validate(open_line)?;
                    payloads.push(payload);
                    mode = Mode::Prose;
                } else {
                    block.push(line);
                }
            }
            Mode::Verilog { open_line } => {
                if trimmed == "```" {
                    let code = block.join("\n");
                    let payload = StructuredPayload::CodeBlock { code };
                    payload.validate(open_line)?;
                    payloads.push(payload);
                    mode = Mode::Prose;
                } else {
                    block.push(line);
                }
            }
        }
    }

    match mode {
        Mode::Prose | Mode::Foreign => {}
        Mode::Rtlsquad { open_line } | Mode::Verilog { open_line } => {
            return Err(Error::MalformedPayload {
                kind: "unknown".into(),
                position: open_line,
                detail: "unterminated fenced block".into(),
            });
        }
    }

    Ok(ExtractedReply {
        prose: prose.join("\n").trim().to_string(),
        payloads,
    })
}

/// Payload list only; see [`extract_reply`] for the full split.
pub fn extract_payloads(reply: &str) -> Result<Vec<StructuredPayload>> {
    extract_reply(reply).map(|r| r.payloads)
}

/// Renders a payload back into its fenced wire form.
pub fn render_payload(payload: &StructuredPayload) -> String {
    match payload {
        StructuredPayload::CodeBlock { code } => format!("```verilog\n{code}\n```"),
        other => format!(
            "```rtlsquad\n{}\n```",
            serde_json::to_string(other).expect("payload serializes")
        ),
    }
}

fn sniff_kind(body: &str) -> String {
    serde_json::from_str::<serde_json::Value>(body)
        .ok()
        .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(String::from))
        .unwrap_or_else(|| "unknown".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ActionKind, ExplAction, VoteDecision};
    use proptest::prelude::*;

    #[test]
    fn vote_block_round_trips() {
        let reply = "I agree with the proposal.\n```rtlsquad\n{\"kind\":\"vote\",\"commit_id\":\"79b4\",\"decision\":\"accept\",\"reason\":\"sound tradeoff\"}\n```\nLooking forward to the next round.";
        let extracted = extract_reply(reply).unwrap();
        assert_eq!(extracted.payloads.len(), 1);
        assert_eq!(
            extracted.payloads[0],
            StructuredPayload::Vote {
                commit_id: "79b4".into(),
                decision: VoteDecision::Accept,
                reason: "sound tradeoff".into(),
            }
        );
        assert!(extracted.prose.contains("I agree"));
        assert!(extracted.prose.contains("next round"));
        assert!(!extracted.prose.contains("rtlsquad"));
    }

    #[test]
    fn verilog_block_becomes_code_payload() {
        let reply = "```verilog\nmodule accu;\nendmodule\n```";
        let payloads = extract_payloads(reply).unwrap();
        assert_eq!(
            payloads,
            vec![StructuredPayload::CodeBlock {
                code: "module accu;\nendmodule".into()
            }]
        );
    }

    #[test]
    fn rating_out_of_bounds_is_malformed() {
        let reply = "```rtlsquad\n{\"kind\":\"rating\",\"value\":6}\n```";
        match extract_payloads(reply) {
            Err(Error::MalformedPayload { kind, position, .. }) => {
                assert_eq!(kind, "rating");
                assert_eq!(position, 1);
            }
            other => panic!("expected MalformedPayload, got {other:?}"),
        }
    }

    #[test]
    fn invalid_json_reports_the_opening_line() {
        let reply = "prose\n```rtlsquad\n{not json\n```";
        match extract_payloads(reply) {
            Err(Error::MalformedPayload { position, .. }) => assert_eq!(position, 2),
            other => panic!("expected MalformedPayload, got {other:?}"),
        }
    }

    #[test]
    fn unterminated_fence_is_malformed() {
        let reply = "```verilog\nmodule a;";
        assert!(matches!(
            extract_payloads(reply),
            Err(Error::MalformedPayload { .. })
        ));
    }

    #[test]
    fn foreign_fences_stay_in_prose() {
        let reply = "look at this\n```python\nprint('hi')\n```\ndone";
        let extracted = extract_reply(reply).unwrap();
        assert!(extracted.payloads.is_empty());
        assert!(extracted.prose.contains("print('hi')"));
    }

    #[test]
    fn commit_proposal_parses_mutations() {
        let reply = r#"```rtlsquad
{"kind":"commit_proposal","mutation":{"op":"add","action":{"action_id":"cg1","kind":"opt","description":"gate idle stage clocks"}},"rationale":"cuts dynamic power"}
```"#;
        let payloads = extract_payloads(reply).unwrap();
        assert_eq!(
            payloads[0],
            StructuredPayload::CommitProposal {
                mutation: Mutation::Add {
                    action: ExplAction {
                        action_id: "cg1".into(),
                        kind: ActionKind::Opt,
                        description: "gate idle stage clocks".into(),
                    }
                },
                rationale: "cuts dynamic power".into(),
            }
        );
    }

    fn arb_action() -> impl Strategy<Value = ExplAction> {
        (
            "[a-z][a-z0-9]{0,6}",
            prop_oneof![Just(ActionKind::Expl), Just(ActionKind::Opt)],
            "[ -~&&[^`]]{1,40}",
        )
            .prop_map(|(id, kind, desc)| ExplAction {
                action_id: id,
                kind,
                description: format!("d{desc}"),
            })
    }

    fn arb_payload() -> impl Strategy<Value = StructuredPayload> {
        prop_oneof![
            arb_action().prop_map(|action| StructuredPayload::CommitProposal {
                mutation: Mutation::Add { action },
                rationale: "because".into(),
            }),
            ("[0-9a-f]{4}", prop::bool::ANY).prop_map(|(id, acc)| StructuredPayload::Vote {
                commit_id: id,
                decision: if acc {
                    VoteDecision::Accept
                } else {
                    VoteDecision::Reject
                },
                reason: "r".into(),
            }),
            (1u8..=5).prop_map(|value| StructuredPayload::Rating {
                value,
                justification: "j".into(),
            }),
            "[ -~&&[^`]]{1,60}".prop_map(|code| StructuredPayload::CodeBlock {
                code: format!("module m; // {code}\nendmodule"),
            }),
            prop::collection::btree_set(1u32..40, 0..5).prop_map(|ids| {
                StructuredPayload::ChecklistUpdate {
                    completed: ids.into_iter().collect(),
                    feedback: "f".into(),
                    new_tasks: vec![],
                }
            }),
            "[a-z]{1,10}".prop_map(|section| StructuredPayload::DataRequest { section }),
            prop::bool::ANY.prop_map(|acceptable| StructuredPayload::PlanPoll {
                acceptable,
                reason: "r".into(),
            }),
            (prop::bool::ANY, prop::option::of(0u32..9)).prop_map(|(term, best)| {
                StructuredPayload::StageDecision {
                    decision: if term {
                        StageChoice::Terminate
                    } else {
                        StageChoice::ContinueExploration
                    },
                    best_version: if term { best } else { None },
                    justification: "j".into(),
                }
            }),
        ]
    }

    proptest! {
        // extract is a left inverse of render for any well-formed payload
        #[test]
        fn extract_after_render_is_identity(payload in arb_payload()) {
            let rendered = render_payload(&payload);
            let extracted = extract_payloads(&rendered).unwrap();
            prop_assert_eq!(extracted, vec![payload]);
        }

        #[test]
        fn extract_never_panics(reply in "\\PC{0,400}") {
            let _ = extract_reply(&reply);
        }
    }
}
