//! Deterministic scripted provider for tests and offline replay.
//!
//! The script is a JSONL file; each record binds a reply to the lookup key
//! `(role, stage, round, index)`, where `index` counts repeated calls with
//! the same `(role, stage, round)` over the whole session.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{RoleId, Stage};
use crate::error::{Error, Result};
use crate::runtime::{CallKey, ChatTurn, Provider, ProviderReply, RoleConfig};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScriptKey {
    pub role: RoleId,
    pub stage: Stage,
    pub round: u32,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub key: ScriptKey,
    pub reply: String,
}

pub struct ScriptedProvider {
    replies: HashMap<ScriptKey, String>,
    counts: HashMap<(RoleId, Stage, u32), u32>,
}

impl ScriptedProvider {
    pub fn from_records(records: Vec<ScriptRecord>) -> Self {
        let replies = records.into_iter().map(|r| (r.key, r.reply)).collect();
        ScriptedProvider {
            replies,
            counts: HashMap::new(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut records = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ScriptRecord =
                serde_json::from_str(&line).map_err(|e| Error::ParseError {
                    line: idx + 1,
                    detail: format!("bad script record: {e}"),
                })?;
            records.push(record);
        }
        Ok(Self::from_records(records))
    }

    /// Rebuilds the per-key call counters from a message pool, so a resumed
    /// session keeps reading the script where it left off. Every role-authored
    /// pool message corresponds to exactly one provider call.
    pub fn seed_counts_from_pool(&mut self, pool: &[crate::domain::Message]) {
        for message in pool {
            if let crate::domain::Author::Role(role) = message.author {
                *self
                    .counts
                    .entry((role, message.stage, message.round))
                    .or_insert(0) += 1;
            }
        }
    }

    /// Parses script records from raw JSONL text.
    pub fn parse_records(text: &str) -> Result<Vec<ScriptRecord>> {
        let mut records = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ScriptRecord =
                serde_json::from_str(line).map_err(|e| Error::ParseError {
                    line: idx + 1,
                    detail: format!("bad script record: {e}"),
                })?;
            records.push(record);
        }
        Ok(records)
    }
}

impl Provider for ScriptedProvider {
    fn complete(
        &mut self,
        key: &CallKey,
        _role: &RoleConfig,
        _transcript: &[ChatTurn],
    ) -> Result<ProviderReply> {
        let count_key = (key.role, key.stage, key.round);
        let index = *self.counts.get(&count_key).unwrap_or(&0);
        let script_key = ScriptKey {
            role: key.role,
            stage: key.stage,
            round: key.round,
            index,
        };
        let reply = self
            .replies
            .get(&script_key)
            .ok_or_else(|| Error::ScriptExhausted {
                key: format!(
                    "{}/{:?}/round {}/index {}",
                    key.role, key.stage, key.round, index
                ),
            })?
            .clone();
        self.counts.insert(count_key, index + 1);
        Ok(ProviderReply {
            text: reply,
            retries: 0,
        })
    }
}
