//! Agent abstraction: role-configured chat agents behind a provider wire
//! protocol, plus the structured-output contract that turns prose replies
//! into protocol events.

pub mod http;
pub mod payload;
pub mod prompts;
pub mod script;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{RoleId, Stage};
use crate::error::{Error, Result};
use payload::{extract_reply, ExtractedReply, PayloadKind, StructuredPayload};

/// Per-role chat configuration. The system prompt is stored as a template;
/// the squads render it with live session context before each call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleConfig {
    pub role: RoleId,
    pub system_prompt: String,
    pub temperature: f64,
    pub max_reply_tokens: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub speaker: Speaker,
    pub content: String,
}

/// Lookup context a provider call runs under; the scripted backend keys
/// replies off it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallKey {
    pub role: RoleId,
    pub stage: Stage,
    pub round: u32,
}

#[derive(Debug, Clone)]
pub struct ProviderReply {
    pub text: String,
    pub retries: u32,
}

pub trait Provider: Send {
    fn complete(
        &mut self,
        key: &CallKey,
        role: &RoleConfig,
        transcript: &[ChatTurn],
    ) -> Result<ProviderReply>;
}

/// One provider exchange: the raw reply plus its extraction outcome.
#[derive(Debug, Clone)]
pub struct ReplyRecord {
    pub raw: String,
    pub prose: String,
    pub payloads: Vec<StructuredPayload>,
    /// `None` when the reply satisfied the requirements, otherwise the
    /// problem fed back in the corrective turn.
    pub problem: Option<String>,
}

/// What a reply must contain to be accepted.
pub struct PayloadRequirements<'a> {
    /// Kinds that must each appear at least once. May be empty for
    /// free-form turns.
    pub required_kinds: &'a [PayloadKind],
    /// Context-aware check run after extraction succeeds.
    #[allow(clippy::type_complexity)]
    pub validator: Option<&'a dyn Fn(&[StructuredPayload]) -> std::result::Result<(), String>>,
}

impl<'a> PayloadRequirements<'a> {
    pub fn none() -> Self {
        PayloadRequirements {
            required_kinds: &[],
            validator: None,
        }
    }

    pub fn kinds(required: &'a [PayloadKind]) -> Self {
        PayloadRequirements {
            required_kinds: required,
            validator: None,
        }
    }
}

/// Outcome of an ask: either the last reply satisfied the requirements, or
/// the agent failed twice and the protocol broke down. Every attempted reply
/// is reported either way so the caller can log it to the pool.
#[derive(Debug)]
pub enum AskOutcome {
    Ok(Vec<ReplyRecord>),
    Breakdown(Vec<ReplyRecord>),
}

pub struct AgentRuntime {
    provider: Box<dyn Provider>,
    roles: BTreeMap<RoleId, RoleConfig>,
    calls_made: u64,
    last_retries: u32,
}

impl AgentRuntime {
    pub fn new(provider: Box<dyn Provider>, roles: BTreeMap<RoleId, RoleConfig>) -> Self {
        AgentRuntime {
            provider,
            roles,
            calls_made: 0,
            last_retries: 0,
        }
    }

    pub fn role(&self, role: RoleId) -> &RoleConfig {
        self.roles.get(&role).expect("all roles configured")
    }

    /// Logical provider calls issued so far (corrective retries included,
    /// transport retries not).
    pub fn calls_made(&self) -> u64 {
        self.calls_made
    }

    pub fn last_retries(&self) -> u32 {
        self.last_retries
    }

    /// One raw completion. The transcript must open with the role's system
    /// prompt turn.
    pub fn complete(&mut self, key: &CallKey, transcript: &[ChatTurn]) -> Result<String> {
        debug_assert!(
            matches!(transcript.first(), Some(t) if t.speaker == Speaker::System),
            "transcript must start with the system prompt"
        );
        let role = self
            .roles
            .get(&key.role)
            .ok_or_else(|| Error::InvalidInput(format!("role {} not configured", key.role)))?;
        self.calls_made += 1;
        let reply = self.provider.complete(key, role, transcript)?;
        if reply.text.trim().is_empty() {
            return Err(Error::EmptyReply);
        }
        self.last_retries = reply.retries;
        Ok(reply.text)
    }

    /// Completion with one corrective retry: when extraction fails, a
    /// required payload kind is missing, or the context validator rejects the
    /// payloads, the schema problem is appended as a user turn and the call
    /// is retried once. A second failure is a protocol breakdown.
    pub fn ask_with_repair(
        &mut self,
        key: &CallKey,
        base_transcript: &[ChatTurn],
        requirements: &PayloadRequirements<'_>,
    ) -> Result<AskOutcome> {
        let mut transcript = base_transcript.to_vec();
        let mut records = Vec::new();

        for attempt in 0..2 {
            let raw = self.complete(key, &transcript)?;
            let checked = check_reply(&raw, requirements);
            match checked {
                Ok(extracted) => {
                    records.push(ReplyRecord {
                        raw,
                        prose: extracted.prose,
                        payloads: extracted.payloads,
                        problem: None,
                    });
                    return Ok(AskOutcome::Ok(records));
                }
                Err((partial, problem)) => {
                    records.push(ReplyRecord {
                        raw: raw.clone(),
                        prose: partial
                            .as_ref()
                            .map(|p| p.prose.clone())
                            .unwrap_or_default(),
                        payloads: partial.map(|p| p.payloads).unwrap_or_default(),
                        problem: Some(problem.clone()),
                    });
                    if attempt == 0 {
                        transcript.push(ChatTurn {
                            speaker: Speaker::Assistant,
                            content: raw,
                        });
                        transcript.push(ChatTurn {
                            speaker: Speaker::User,
                            content: corrective_turn(&problem, requirements),
                        });
                    }
                }
            }
        }
        Ok(AskOutcome::Breakdown(records))
    }
}

/// Extraction plus requirement checks. On failure returns whatever partial
/// extraction succeeded and a description of the problem.
#[allow(clippy::type_complexity)]
fn check_reply(
    raw: &str,
    requirements: &PayloadRequirements<'_>,
) -> std::result::Result<ExtractedReply, (Option<ExtractedReply>, String)> {
    let extracted = match extract_reply(raw) {
        Ok(e) => e,
        Err(e) => return Err((None, e.to_string())),
    };
    for kind in requirements.required_kinds {
        if !extracted.payloads.iter().any(|p| p.kind() == *kind) {
            let problem = format!("missing required `{}` payload", kind.name());
            return Err((Some(extracted), problem));
        }
    }
    if let Some(validator) = requirements.validator {
        if let Err(problem) = validator(&extracted.payloads) {
            return Err((Some(extracted), problem));
        }
    }
    Ok(extracted)
}

fn corrective_turn(problem: &str, requirements: &PayloadRequirements<'_>) -> String {
    let mut text = format!(
        "Your previous reply could not be processed: {problem}.\n\
         Reply again. Machine-readable acts go in fenced blocks tagged `rtlsquad`, \
         one JSON object per block with a `kind` field; complete Verilog modules go \
         in fenced blocks tagged `verilog`."
    );
    if !requirements.required_kinds.is_empty() {
        let kinds: Vec<&str> = requirements
            .required_kinds
            .iter()
            .map(|k| k.name())
            .collect();
        text.push_str(&format!(
            "\nThis reply must include at least: {}.",
            kinds.join(", ")
        ));
    }
    text
}

/// Builds the role table from a shared temperature/token budget with optional
/// per-role temperature overrides.
pub fn build_roles(
    templates: &BTreeMap<RoleId, String>,
    temperature: f64,
    max_reply_tokens: u32,
    role_temperature: &BTreeMap<String, f64>,
) -> BTreeMap<RoleId, RoleConfig> {
    RoleId::all()
        .into_iter()
        .map(|role| {
            let temp = role_temperature
                .get(role.as_str())
                .copied()
                .unwrap_or(temperature);
            (
                role,
                RoleConfig {
                    role,
                    system_prompt: templates.get(&role).cloned().unwrap_or_default(),
                    temperature: temp,
                    max_reply_tokens,
                },
            )
        })
        .collect()
}
