use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, ChatBackend, ChatReply, ModelRole};
use crate::artifact::{self, ArtifactError};

pub const MOCK_FIXTURE_KIND: &str = "mock-fixture";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureMode {
    /// `key` is the hex sha256 of `system + "\n\n" + user`.
    Hash,
    /// `key` is a substring of the user text.
    Contains,
    /// `key` is a regular expression over the user text.
    Regex,
    /// Matches everything; `key` is ignored.
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRule {
    pub mode: FixtureMode,
    #[serde(default)]
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<ModelRole>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_tokens: Option<u64>,
}

/// Whitespace-token count divided by 0.75, rounded.
pub fn approx_tokens(text: &str) -> u64 {
    (text.split_whitespace().count() as f64 / 0.75).round() as u64
}

pub fn prompt_hash(system: &str, user: &str) -> String {
    let mut h = Sha256::new();
    h.update(system.as_bytes());
    h.update(b"\n\n");
    h.update(user.as_bytes());
    hex::encode(h.finalize())
}

/// Deterministic canned-answer backend. Hash rules are consulted first; the
/// remaining rules apply in file order.
#[derive(Debug, Clone)]
pub struct MockBackend {
    rules: Vec<(FixtureRule, Option<Regex>)>,
}

impl MockBackend {
    pub fn new(rules: Vec<FixtureRule>) -> Result<Self, regex::Error> {
        let rules = rules
            .into_iter()
            .map(|r| {
                let re = match r.mode {
                    FixtureMode::Regex => Some(Regex::new(&r.key)?),
                    _ => None,
                };
                Ok((r, re))
            })
            .collect::<Result<_, regex::Error>>()?;
        Ok(MockBackend { rules })
    }

    pub fn from_file(path: &Path) -> Result<Self, MockLoadError> {
        let rules: Vec<FixtureRule> = artifact::read_records(path, MOCK_FIXTURE_KIND)?;
        Ok(MockBackend::new(rules)?)
    }

    fn find(&self, role: ModelRole, system: &str, user: &str) -> Option<&FixtureRule> {
        let role_ok = |r: &FixtureRule| r.role.is_none_or(|x| x == role);
        let hash = prompt_hash(system, user);
        self.rules
            .iter()
            .find(|(r, _)| r.mode == FixtureMode::Hash && role_ok(r) && r.key == hash)
            .or_else(|| {
                self.rules.iter().find(|(r, re)| {
                    role_ok(r)
                        && match r.mode {
                            FixtureMode::Hash => false,
                            FixtureMode::Contains => user.contains(&r.key),
                            FixtureMode::Regex => re.as_ref().is_some_and(|re| re.is_match(user)),
                            FixtureMode::Any => true,
                        }
                })
            })
            .map(|(r, _)| r)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MockLoadError {
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("bad regex in fixture: {0}")]
    Regex(#[from] regex::Error),
}

impl ChatBackend for MockBackend {
    fn complete(
        &self,
        role: ModelRole,
        system: &str,
        user: &str,
        _temperature: f64,
    ) -> Result<ChatReply, BackendError> {
        let rule = self
            .find(role, system, user)
            .ok_or_else(|| BackendError(format!("no fixture rule matches this {role} prompt")))?;
        Ok(ChatReply {
            text: rule.answer.clone(),
            input_tokens: rule
                .in_tokens
                .unwrap_or_else(|| approx_tokens(system) + approx_tokens(user)),
            output_tokens: rule.out_tokens.unwrap_or_else(|| approx_tokens(&rule.answer)),
        })
    }

    fn max_in_flight(&self) -> usize {
        usize::MAX
    }
}
