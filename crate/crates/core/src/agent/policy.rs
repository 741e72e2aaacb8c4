use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::ActionCall;
use crate::config::OracleConfig;
use crate::envs::EnvState;
use crate::llm::{ChatRequest, LlmClient, LlmError};
use crate::oracle::{Message, OptimalActionSet};
use crate::seed::{seeded_rng, Rng as StreamRng};
use crate::task::TaskInstance;

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

/// Line emitted by scripted policies before their action block.
pub const SCRIPTED_RATIONALE: &str = "I will take the next action.";

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("llm policy has no client attached")]
    NoClient,
    #[error("invalid policy: {0}")]
    Invalid(String),
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

/// Which policy drives an episode, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyHandle {
    Llm {
        endpoint: String,
        model: String,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default = "default_max_tokens")]
        max_tokens: u32,
    },
    OracleFollower,
    EpsilonNoisy {
        epsilon: f64,
        #[serde(default)]
        seed: u64,
    },
    UniformRandom {
        #[serde(default)]
        seed: u64,
    },
}

impl PolicyHandle {
    pub fn validate(&self) -> Result<(), PolicyError> {
        match self {
            PolicyHandle::EpsilonNoisy { epsilon, .. } if !(0.0..=1.0).contains(epsilon) => Err(
                PolicyError::Invalid(format!("epsilon {epsilon} is outside [0, 1]")),
            ),
            PolicyHandle::Llm { model, .. } if model.is_empty() => {
                Err(PolicyError::Invalid("llm policy needs a model".into()))
            }
            PolicyHandle::Llm { temperature, .. } if *temperature < 0.0 => Err(
                PolicyError::Invalid("temperature must be non-negative".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_scripted(&self) -> bool {
        !matches!(self, PolicyHandle::Llm { .. })
    }

    /// Short label for reports.
    pub fn label(&self) -> String {
        match self {
            PolicyHandle::Llm { model, .. } => format!("llm:{model}"),
            PolicyHandle::OracleFollower => "oracle_follower".into(),
            PolicyHandle::EpsilonNoisy { epsilon, .. } => format!("epsilon_noisy:{epsilon}"),
            PolicyHandle::UniformRandom { .. } => "uniform_random".into(),
        }
    }

    /// First 16 hex digits of the SHA-256 of the serialized handle.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("policy serializes");
        hex::encode(&Sha256::digest(json)[..8])
    }
}

/// What a policy sees on each turn. Scripted policies read the oracle's
/// optimal set; model policies only read the context.
pub struct TurnView<'a> {
    pub instance: &'a TaskInstance,
    pub state: &'a EnvState,
    pub context: &'a [Message],
    pub optimal: &'a OptimalActionSet,
    pub turn: u32,
}

pub trait Policy {
    /// Raw model-style text for the next turn.
    fn next_action(&mut self, view: &TurnView<'_>) -> Result<String, PolicyError>;
}

/// With probability `1 - epsilon` the canonical optimal action; otherwise a
/// uniform pick from the legal non-optimal actions, falling back to the
/// optimal action when there are none.
pub fn scripted_noise_choice(
    optimal: &OptimalActionSet,
    legal: &[ActionCall],
    epsilon: f64,
    rng: &mut impl Rng,
) -> Option<ActionCall> {
    let explore = rng.gen_bool(epsilon.clamp(0.0, 1.0));
    let Some(best) = optimal.canonical() else {
        return legal.choose(rng).cloned();
    };
    if explore {
        let others: Vec<&ActionCall> = legal.iter().filter(|a| !optimal.contains(a)).collect();
        if let Some(pick) = others.choose(rng) {
            return Some((*pick).clone());
        }
    }
    Some(best.clone())
}

fn scripted_text(action: &ActionCall) -> String {
    format!("{SCRIPTED_RATIONALE}\n{}", action.render_block())
}

/// Oracle follower, epsilon-noisy and uniform-random policies.
pub struct ScriptedPolicy {
    epsilon: Option<f64>,
    rng: StreamRng,
}

impl ScriptedPolicy {
    pub fn oracle_follower() -> Self {
        Self {
            epsilon: Some(0.0),
            rng: seeded_rng(0, "oracle"),
        }
    }

    pub fn epsilon_noisy(epsilon: f64, rng: StreamRng) -> Self {
        Self {
            epsilon: Some(epsilon),
            rng,
        }
    }

    pub fn uniform_random(rng: StreamRng) -> Self {
        Self { epsilon: None, rng }
    }
}

impl Policy for ScriptedPolicy {
    fn next_action(&mut self, view: &TurnView<'_>) -> Result<String, PolicyError> {
        let legal = view.state.legal_actions();
        let action = match self.epsilon {
            Some(eps) => scripted_noise_choice(view.optimal, &legal, eps, &mut self.rng),
            None => legal.choose(&mut self.rng).cloned(),
        };
        // A terminal state has no legal actions; the runner never asks then.
        let action = action.unwrap_or_else(|| ActionCall::new("done"));
        Ok(scripted_text(&action))
    }
}

/// Delegates each turn to a chat-completion endpoint.
pub struct LlmPolicy {
    client: Arc<LlmClient>,
    model: String,
    temperature: f64,
    max_tokens: u32,
}

impl Policy for LlmPolicy {
    fn next_action(&mut self, view: &TurnView<'_>) -> Result<String, PolicyError> {
        let request = ChatRequest {
            model: self.model.clone(),
            messages: view.context.to_vec(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        Ok(self.client.chat_complete(&request)?)
    }
}

/// Instantiates the policy for one episode. Noise streams are keyed by the
/// instance and configuration so results do not depend on scheduling.
pub fn policy_for_episode(
    handle: &PolicyHandle,
    instance: &TaskInstance,
    config: OracleConfig,
    client: Option<Arc<LlmClient>>,
) -> Result<Box<dyn Policy + Send>, PolicyError> {
    handle.validate()?;
    let stream = |seed: u64| {
        seeded_rng(
            seed ^ instance.seed,
            &format!("noise:{}:{}", instance.id, config),
        )
    };
    Ok(match handle {
        PolicyHandle::OracleFollower => Box::new(ScriptedPolicy::oracle_follower()),
        PolicyHandle::EpsilonNoisy { epsilon, seed } => {
            Box::new(ScriptedPolicy::epsilon_noisy(*epsilon, stream(*seed)))
        }
        PolicyHandle::UniformRandom { seed } => {
            Box::new(ScriptedPolicy::uniform_random(stream(*seed)))
        }
        PolicyHandle::Llm {
            model,
            temperature,
            max_tokens,
            ..
        } => Box::new(LlmPolicy {
            client: client.ok_or(PolicyError::NoClient)?,
            model: model.clone(),
            temperature: *temperature,
            max_tokens: *max_tokens,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{parse_action, Scalar};

    fn pop(i: i64) -> ActionCall {
        ActionCall::new("pop").with_arg("id", Scalar::Int(i))
    }

    #[test]
    fn epsilon_extremes() {
        let optimal = OptimalActionSet::new(vec![pop(0)]);
        let legal = vec![pop(0), pop(1), ActionCall::new("done")];
        let mut rng = seeded_rng(1, "t");
        for _ in 0..200 {
            assert_eq!(
                scripted_noise_choice(&optimal, &legal, 0.0, &mut rng),
                Some(pop(0))
            );
            let noisy = scripted_noise_choice(&optimal, &legal, 1.0, &mut rng).unwrap();
            assert!(!optimal.contains(&noisy));
        }
    }

    #[test]
    fn no_alternatives_means_optimal() {
        let optimal = OptimalActionSet::new(vec![ActionCall::new("done")]);
        let legal = vec![ActionCall::new("done")];
        let mut rng = seeded_rng(2, "t");
        for _ in 0..100 {
            assert_eq!(
                scripted_noise_choice(&optimal, &legal, 0.7, &mut rng),
                Some(ActionCall::new("done"))
            );
        }
    }

    #[test]
    fn noise_rate_matches_epsilon() {
        // Monte Carlo against the analytic rate: 1e5 draws, sd ~ 0.00095.
        let optimal = OptimalActionSet::new(vec![pop(0)]);
        let legal = vec![pop(0), pop(1), pop(2)];
        let mut rng = seeded_rng(3, "t");
        let n = 100_000;
        let bad = (0..n)
            .filter(|_| scripted_noise_choice(&optimal, &legal, 0.1, &mut rng) != Some(pop(0)))
            .count();
        let rate = bad as f64 / n as f64;
        assert!((rate - 0.1).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn draws_are_reproducible() {
        let optimal = OptimalActionSet::new(vec![pop(0)]);
        let legal = vec![pop(0), pop(1), pop(2), pop(3)];
        let run = || {
            let mut rng = seeded_rng(9, "t");
            (0..50)
                .map(|_| scripted_noise_choice(&optimal, &legal, 0.5, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn scripted_text_parses_back() {
        let text = scripted_text(&pop(4));
        assert!(text.starts_with(SCRIPTED_RATIONALE));
        assert_eq!(parse_action(&text).unwrap(), pop(4));
    }

    #[test]
    fn handle_validation_and_fingerprint() {
        assert!(PolicyHandle::EpsilonNoisy {
            epsilon: 1.5,
            seed: 0
        }
        .validate()
        .is_err());
        let a = PolicyHandle::EpsilonNoisy {
            epsilon: 0.1,
            seed: 0,
        };
        let b = PolicyHandle::EpsilonNoisy {
            epsilon: 0.2,
            seed: 0,
        };
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        let json = serde_json::to_string(&PolicyHandle::OracleFollower).unwrap();
        assert_eq!(json, r#"{"kind":"oracle_follower"}"#);
    }
}
