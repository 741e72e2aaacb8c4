//! Composition of the agent's context from the task prompt, the interaction
//! history and the active oracle interventions.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::render::{render_plan_hint, render_state_summary, render_task};
use super::OracleOptions;
use crate::agent::PromptBundle;
use crate::config::OracleConfig;
use crate::envs::EnvState;
use crate::template::TemplateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Hex SHA-256 over the JSON encoding of the messages.
pub fn context_fingerprint(messages: &[Message]) -> String {
    let json = serde_json::to_vec(messages).expect("messages serialize");
    hex::encode(Sha256::digest(json))
}

/// Plain-text transcript of a context, used for golden files and debugging.
pub fn render_transcript(messages: &[Message]) -> String {
    let mut out = String::new();
    for m in messages {
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        out.push_str(&format!("<<<{role}>>>\n{}\n", m.content));
    }
    out
}

/// One past turn as the agent saw it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEntry {
    pub raw_output: String,
    pub observation: String,
}

/// Texts produced by the active oracles for one turn.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InterventionText {
    pub plan_hint: Option<String>,
    pub state_summary: Option<String>,
    pub rewritten_task: Option<String>,
}

impl InterventionText {
    /// The environment message appended after the latest observation, if any.
    pub fn message(&self) -> Option<String> {
        let parts: Vec<&str> = [&self.plan_hint, &self.state_summary]
            .into_iter()
            .flatten()
            .map(String::as_str)
            .collect();
        (!parts.is_empty()).then(|| parts.join("\n"))
    }
}

pub fn intervention_text(
    state: &EnvState,
    config: OracleConfig,
    options: &OracleOptions,
) -> Result<InterventionText, TemplateError> {
    Ok(InterventionText {
        plan_hint: config
            .plan()
            .then(|| render_plan_hint(state, options))
            .transpose()?,
        state_summary: config
            .state()
            .then(|| render_state_summary(state, options))
            .transpose()?,
        rewritten_task: config.history().then(|| render_task(state)).transpose()?,
    })
}

/// Context without any intervention: system prompt, task, then alternating
/// agent outputs and observations.
pub fn baseline_context(bundle: &PromptBundle, history: &[HistoryEntry]) -> Vec<Message> {
    let mut messages = Vec::with_capacity(2 + 2 * history.len());
    messages.push(Message::system(bundle.system_message()));
    messages.push(Message::user(bundle.task.clone()));
    for turn in history {
        messages.push(Message::assistant(turn.raw_output.clone()));
        messages.push(Message::user(turn.observation.clone()));
    }
    messages
}

/// Oracle-augmented context: history, then plan hint and state summary as a
/// fresh environment message. With history pruning the past turns are
/// dropped and the task is restated from the current state.
pub fn build_context(
    bundle: &PromptBundle,
    history: &[HistoryEntry],
    state: &EnvState,
    config: OracleConfig,
    options: &OracleOptions,
) -> Result<Vec<Message>, TemplateError> {
    let text = intervention_text(state, config, options)?;
    let mut messages = match &text.rewritten_task {
        Some(task) => vec![
            Message::system(bundle.system_message()),
            Message::user(task.clone()),
        ],
        None => baseline_context(bundle, history),
    };
    if let Some(extra) = text.message() {
        messages.push(Message::user(extra));
    }
    Ok(messages)
}
