//! Chat-model access: per-role backend bindings, retries, token ledger,
//! prompt rendering and answer parsing.

mod http;
mod mock;
mod parse;
mod prompt;

pub use http::HttpChatBackend;
pub use mock::{approx_tokens, prompt_hash, FixtureMode, FixtureRule, MockBackend, MockLoadError, MOCK_FIXTURE_KIND};
pub use parse::{parse_table_answer, parse_type_answer, parse_verdicts, render_type_answer, Verdict};
pub use prompt::{
    build_annotation_prompt, build_baseline_prompt, build_discovery_prompt, build_judge_prompt,
    AnnotationPromptInput, BaselineStyle, CooccurrenceEntry, DiscoveryPromptInput, JudgePromptInput, Prompt,
    ANSWER_REMINDER,
};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::{BackendConfig, RunConfig};
use crate::stage::StageId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Discovery,
    Annotation,
    Judge,
}

impl ModelRole {
    pub const ALL: [ModelRole; 3] = [ModelRole::Discovery, ModelRole::Annotation, ModelRole::Judge];
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelRole::Discovery => "discovery",
            ModelRole::Annotation => "annotation",
            ModelRole::Judge => "judge",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub role: ModelRole,
    pub stage: StageId,
}

/// Raw backend reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct BackendError(pub String);

/// A chat completion service.
pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        role: ModelRole,
        system: &str,
        user: &str,
        temperature: f64,
    ) -> Result<ChatReply, BackendError>;

    /// How many calls the backend accepts at once.
    fn max_in_flight(&self) -> usize {
        1
    }
}

/// Backend driven by a closure; handy for scripted tests.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(ModelRole, &str, &str) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(
        &self,
        role: ModelRole,
        system: &str,
        user: &str,
        _temperature: f64,
    ) -> Result<ChatReply, BackendError> {
        let text = (self.0)(role, system, user)?;
        Ok(ChatReply {
            input_tokens: approx_tokens(system) + approx_tokens(user),
            output_tokens: approx_tokens(&text),
            text,
        })
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("no backend bound to role {0}")]
    UnboundRole(ModelRole),
    #[error("{role} backend failed after {attempts} attempt(s): {reason}")]
    BackendFailure {
        role: ModelRole,
        attempts: u32,
        reason: String,
    },
    #[error("malformed answer: {0}")]
    MalformedAnswer(String),
    #[error("annotation prompt needs at least one candidate")]
    EmptyCandidates,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendSetupError {
    #[error("cannot read mock fixture {path}: {reason}")]
    Fixture { path: String, reason: String },
    #[error("environment variable `{0}` is not set")]
    MissingEnv(String),
}

/// Builds the backend described by a role's config.
pub fn backend_from_config(cfg: &BackendConfig) -> Result<Arc<dyn ChatBackend>, BackendSetupError> {
    match cfg {
        BackendConfig::Mock { fixture } => Ok(Arc::new(MockBackend::from_file(fixture).map_err(
            |e| BackendSetupError::Fixture {
                path: fixture.display().to_string(),
                reason: e.to_string(),
            },
        )?)),
        BackendConfig::Http {
            endpoint,
            model,
            api_key_env,
            max_in_flight,
        } => {
            let key = std::env::var(api_key_env)
                .map_err(|_| BackendSetupError::MissingEnv(api_key_env.clone()))?;
            Ok(Arc::new(HttpChatBackend::new(
                endpoint.clone(),
                model.clone(),
                key,
                *max_in_flight,
            )))
        }
    }
}

struct Binding {
    backend: Arc<dyn ChatBackend>,
    temperature: f64,
}

/// Role-bound access to chat backends. Every successful call is recorded in
/// the ledger with its role and stage.
pub struct LlmGate {
    bindings: BTreeMap<ModelRole, Binding>,
    ledger: Mutex<Vec<TokenUsage>>,
    max_attempts: u32,
    backoff: Duration,
}

impl LlmGate {
    pub fn new(max_attempts: u32, backoff: Duration) -> Self {
        LlmGate {
            bindings: BTreeMap::new(),
            ledger: Mutex::new(Vec::new()),
            max_attempts: max_attempts.max(1),
            backoff,
        }
    }

    /// Gate with every configured role bound.
    pub fn from_config(cfg: &RunConfig) -> Result<Self, BackendSetupError> {
        let mut gate = LlmGate::new(cfg.max_attempts, Duration::from_millis(cfg.backoff_ms));
        for role in ModelRole::ALL {
            let rc = cfg.role(role);
            if let Some(b) = &rc.backend {
                gate.bind(role, backend_from_config(b)?, rc.temperature);
            }
        }
        Ok(gate)
    }

    pub fn bind(&mut self, role: ModelRole, backend: Arc<dyn ChatBackend>, temperature: f64) {
        self.bindings.insert(
            role,
            Binding {
                backend,
                temperature,
            },
        );
    }

    pub fn is_bound(&self, role: ModelRole) -> bool {
        self.bindings.contains_key(&role)
    }

    /// One completion with bounded exponential-backoff retries.
    pub fn complete(
        &self,
        role: ModelRole,
        stage: &StageId,
        prompt: &Prompt,
    ) -> Result<(String, TokenUsage), LlmError> {
        let b = self.bindings.get(&role).ok_or(LlmError::UnboundRole(role))?;
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            match b
                .backend
                .complete(role, &prompt.system, &prompt.user, b.temperature)
            {
                Ok(reply) => {
                    let usage = TokenUsage {
                        input_tokens: reply.input_tokens,
                        output_tokens: reply.output_tokens,
                        role,
                        stage: stage.clone(),
                    };
                    self.ledger.lock().unwrap().push(usage.clone());
                    return Ok((reply.text, usage));
                }
                Err(e) => {
                    last = e.0;
                    if attempt < self.max_attempts && !delay.is_zero() {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(LlmError::BackendFailure {
            role,
            attempts: self.max_attempts,
            reason: last,
        })
    }

    /// Completes and parses; a malformed answer is retried once with a
    /// reminder line appended. Returns the usages of all calls made.
    pub fn complete_parsed<T>(
        &self,
        role: ModelRole,
        stage: &StageId,
        prompt: &Prompt,
        parse: impl Fn(&str) -> Result<T, LlmError>,
    ) -> (Result<T, LlmError>, Vec<TokenUsage>) {
        let mut usages = Vec::new();
        let (text, u) = match self.complete(role, stage, prompt) {
            Ok(x) => x,
            Err(e) => return (Err(e), usages),
        };
        usages.push(u);
        match parse(&text) {
            Err(LlmError::MalformedAnswer(_)) => {}
            other => return (other, usages),
        }
        let retry = prompt.with_reminder();
        match self.complete(role, stage, &retry) {
            Ok((text, u)) => {
                usages.push(u);
                (parse(&text), usages)
            }
            Err(e) => (Err(e), usages),
        }
    }

    pub fn ledger(&self) -> Vec<TokenUsage> {
        self.ledger.lock().unwrap().clone()
    }

    pub fn call_count(&self, role: ModelRole) -> usize {
        self.ledger
            .lock()
            .unwrap()
            .iter()
            .filter(|u| u.role == role)
            .count()
    }
}

/// Input/output totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl UsageTotals {
    pub fn add(&mut self, u: &TokenUsage) {
        self.calls += 1;
        self.input_tokens += u.input_tokens;
        self.output_tokens += u.output_tokens;
    }
}

pub fn totals<'a>(usages: impl IntoIterator<Item = &'a TokenUsage>) -> UsageTotals {
    let mut t = UsageTotals::default();
    for u in usages {
        t.add(u);
    }
    t
}

pub fn totals_by_role<'a>(
    usages: impl IntoIterator<Item = &'a TokenUsage>,
) -> BTreeMap<ModelRole, UsageTotals> {
    let mut m: BTreeMap<ModelRole, UsageTotals> = BTreeMap::new();
    for u in usages {
        m.entry(u.role).or_default().add(u);
    }
    m
}

pub fn totals_by_stage<'a>(
    usages: impl IntoIterator<Item = &'a TokenUsage>,
) -> BTreeMap<StageId, UsageTotals> {
    let mut m: BTreeMap<StageId, UsageTotals> = BTreeMap::new();
    for u in usages {
        m.entry(u.stage.clone()).or_default().add(u);
    }
    m
}

pub const LEDGER_KIND: &str = "ledger";
