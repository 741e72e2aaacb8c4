use thiserror::Error;

use super::policy::{Policy, PolicyHandle, TurnView};
use super::prompt::{build_prompt, PromptBundle};
use crate::action::parse_action;
use crate::config::{ConfigError, OracleConfig};
use crate::envs::EnvState;
use crate::oracle::context::{context_fingerprint, HistoryEntry};
use crate::oracle::{build_context, optimal_actions, Message, OptimalActionSet, OracleOptions};
use crate::task::{ParsedAction, TaskInstance, Termination, Trajectory, Turn};
use crate::template::TemplateError;

/// Consecutive unparseable responses that end an episode.
pub const MAX_CONSECUTIVE_PARSE_FAILURES: u32 = 3;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error("invalid oracle config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("session is closed")]
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub observation: String,
    pub optimal: bool,
    pub terminal: bool,
    pub success: bool,
    /// Context for the next turn; empty once the episode is over.
    pub next_context: Vec<Message>,
}

/// One live episode: owns the environment state and history, scores every
/// response against the oracle before applying it.
///
/// The built-in runner and external drivers both go through this type, so
/// they produce identical trajectories for identical responses.
pub struct Session {
    instance: TaskInstance,
    bundle: PromptBundle,
    config: OracleConfig,
    options: OracleOptions,
    state: EnvState,
    history: Vec<HistoryEntry>,
    turns: Vec<Turn>,
    context: Vec<Message>,
    parse_failures: u32,
    ended: Option<Termination>,
    error: Option<String>,
}

impl Session {
    pub fn open(
        instance: TaskInstance,
        config: OracleConfig,
        options: OracleOptions,
    ) -> Result<Self, SessionError> {
        let bundle = build_prompt(&instance, config, &options)?;
        let state = EnvState::reset(&instance);
        let context = build_context(&bundle, &[], &state, config, &options)?;
        Ok(Self {
            instance,
            bundle,
            config,
            options,
            state,
            history: Vec::new(),
            turns: Vec::new(),
            context,
            parse_failures: 0,
            ended: None,
            error: None,
        })
    }

    /// Opens a session from a serialized instance and a config label or JSON string.
    pub fn open_json(instance_json: &str, config: &str) -> Result<Self, SessionError> {
        let instance = TaskInstance::from_json(instance_json).map_err(SessionError::Instance)?;
        let label = serde_json::from_str::<String>(config).unwrap_or_else(|_| config.to_string());
        let config: OracleConfig = label.parse()?;
        Self::open(instance, config, OracleOptions::default())
    }

    pub fn instance(&self) -> &TaskInstance {
        &self.instance
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn bundle(&self) -> &PromptBundle {
        &self.bundle
    }

    /// Full context for the upcoming turn.
    pub fn context(&self) -> &[Message] {
        &self.context
    }

    /// Task prompt text as first shown to the agent.
    pub fn prompt_text(&self) -> &str {
        &self.bundle.task
    }

    pub fn is_closed(&self) -> bool {
        self.ended.is_some()
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    /// Optimal set of the current state; empty when none exists.
    pub fn optimal_actions(&self) -> OptimalActionSet {
        optimal_actions(&self.state, &self.options).unwrap_or_default()
    }

    /// Parses, scores and applies one raw model response.
    pub fn step(&mut self, raw_output: &str) -> Result<StepOutcome, SessionError> {
        if self.ended.is_some() {
            return Err(SessionError::Closed);
        }
        let optimal_set = self.optimal_actions();
        let fingerprint = context_fingerprint(&self.context);
        let parsed: ParsedAction = parse_action(raw_output).into();

        let (optimal, observation, result) = match &parsed {
            ParsedAction::Action(action) => {
                self.parse_failures = 0;
                let optimal = optimal_set.contains(action);
                let (next, result) = self.state.step(action);
                self.state = next;
                (optimal, result.observation.clone(), Some(result))
            }
            ParsedAction::Error { kind, detail, .. } => {
                self.parse_failures += 1;
                let obs = format!(
                    "Error: could not parse an action ({kind}: {detail}). Provide your response as a single python function call enclosed in a code block."
                );
                (false, obs, None)
            }
        };

        self.turns.push(Turn {
            index: self.turns.len() as u32,
            context_fingerprint: fingerprint,
            raw_output: raw_output.to_string(),
            parsed,
            optimal,
            observation: observation.clone(),
        });
        self.history.push(HistoryEntry {
            raw_output: raw_output.to_string(),
            observation: observation.clone(),
        });

        if let Some(r) = &result {
            if r.terminal {
                let cause = if r.error == Some(crate::envs::StepError::BudgetExceeded) {
                    Termination::EnvBudget
                } else {
                    Termination::AgentDone
                };
                self.ended = Some(cause);
            }
        }
        if self.ended.is_none() && self.parse_failures >= MAX_CONSECUTIVE_PARSE_FAILURES {
            self.ended = Some(Termination::ParseFailureLimit);
        }
        if self.ended.is_none() && self.turns.len() as u32 >= self.instance.turn_budget {
            self.ended = Some(Termination::EnvBudget);
        }

        self.context = if self.ended.is_some() {
            Vec::new()
        } else {
            build_context(
                &self.bundle,
                &self.history,
                &self.state,
                self.config,
                &self.options,
            )?
        };

        Ok(StepOutcome {
            observation,
            optimal,
            terminal: self.ended.is_some(),
            success: self.state.success,
            next_context: self.context.clone(),
        })
    }

    /// Ends the episode because the policy could not produce a response.
    pub fn abort(&mut self, error: impl Into<String>) {
        if self.ended.is_none() {
            self.ended = Some(Termination::PolicyFailure);
            self.error = Some(error.into());
        }
    }

    pub fn into_trajectory(self, handle: &PolicyHandle) -> Trajectory {
        Trajectory {
            instance_id: self.instance.id.clone(),
            env: self.instance.env,
            optimal_steps: self.instance.optimal_steps,
            config: self.config,
            policy: handle.label(),
            policy_fingerprint: handle.fingerprint(),
            turns: self.turns,
            success: self.state.success && self.ended == Some(Termination::AgentDone),
            terminated_by: self.ended.unwrap_or(Termination::EnvBudget),
            error: self.error,
        }
    }
}

/// Runs one episode to termination or the turn budget.
pub fn run_episode(
    instance: &TaskInstance,
    policy: &mut dyn Policy,
    handle: &PolicyHandle,
    config: OracleConfig,
    options: &OracleOptions,
) -> Result<Trajectory, SessionError> {
    let mut session = Session::open(instance.clone(), config, *options)?;
    while !session.is_closed() {
        let optimal = session.optimal_actions();
        let view = TurnView {
            instance,
            state: &session.state,
            context: &session.context,
            optimal: &optimal,
            turn: session.turns.len() as u32,
        };
        match policy.next_action(&view) {
            Ok(text) => {
                session.step(&text)?;
            }
            Err(e) => session.abort(e.to_string()),
        }
    }
    Ok(session.into_trajectory(handle))
}

/// Replays a stored trajectory's actions and recomputes the per-turn
/// optimality flags.
pub fn rescore(
    instance: &TaskInstance,
    trajectory: &Trajectory,
    options: &OracleOptions,
) -> Vec<bool> {
    let mut state = EnvState::reset(instance);
    trajectory
        .turns
        .iter()
        .map(|turn| match turn.parsed.action() {
            Some(action) => {
                let optimal =
                    optimal_actions(&state, options).is_ok_and(|set| set.contains(action));
                state = state.step(action).0;
                optimal
            }
            None => false,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::policy::ScriptedPolicy;
    use crate::envs::{generate_indexed, BudgetParams, GenParams};

    fn list_instance() -> TaskInstance {
        generate_indexed(
            &GenParams::List {
                target_len: 3,
                num_pops: 3,
            },
            BudgetParams::default(),
            4,
            0,
        )
    }

    #[test]
    fn follower_succeeds_in_optimal_steps() {
        let inst = list_instance();
        let mut policy = ScriptedPolicy::oracle_follower();
        for config in OracleConfig::all() {
            let t = run_episode(
                &inst,
                &mut policy,
                &PolicyHandle::OracleFollower,
                config,
                &OracleOptions::default(),
            )
            .unwrap();
            assert!(t.success);
            assert_eq!(t.terminated_by, Termination::AgentDone);
            assert_eq!(t.turns.len() as u32, inst.optimal_steps);
            assert!(t.turns.iter().all(|turn| turn.optimal));
        }
    }

    #[test]
    fn parse_failure_consumes_turn_without_mutation() {
        let inst = list_instance();
        let mut s =
            Session::open(inst.clone(), OracleConfig::NONE, OracleOptions::default()).unwrap();
        let before = s.state().clone();
        let out = s.step("no idea").unwrap();
        assert!(!out.optimal && !out.terminal);
        assert_eq!(s.state(), &before);
        assert!(out
            .observation
            .starts_with("Error: could not parse an action (no code block"));
        s.step("still nothing").unwrap();
        let out = s.step("```python\n```").unwrap();
        assert!(out.terminal && !out.success);
        assert!(matches!(
            s.step("```python\ndone()\n```"),
            Err(SessionError::Closed)
        ));
        let t = s.into_trajectory(&PolicyHandle::OracleFollower);
        assert_eq!(t.terminated_by, Termination::ParseFailureLimit);
        assert_eq!(t.turns.len(), 3);
    }

    #[test]
    fn budget_exhaustion_ends_episode() {
        let inst = list_instance();
        let mut s =
            Session::open(inst.clone(), OracleConfig::NONE, OracleOptions::default()).unwrap();
        // Out-of-range pops never terminate and never parse-fail.
        for _ in 0..inst.turn_budget {
            s.step("```python\npop(id=99)\n```").unwrap();
        }
        assert!(s.is_closed());
        let t = s.into_trajectory(&PolicyHandle::OracleFollower);
        assert!(!t.success);
        assert_eq!(t.terminated_by, Termination::EnvBudget);
        assert_eq!(t.turns.len() as u32, inst.turn_budget);
    }

    #[test]
    fn rescoring_reproduces_flags() {
        let inst = list_instance();
        let handle = PolicyHandle::UniformRandom { seed: 3 };
        for config in OracleConfig::all() {
            let mut policy =
                super::super::policy::policy_for_episode(&handle, &inst, config, None).unwrap();
            let t = run_episode(
                &inst,
                policy.as_mut(),
                &handle,
                config,
                &OracleOptions::default(),
            )
            .unwrap();
            let flags: Vec<bool> = t.turns.iter().map(|x| x.optimal).collect();
            assert_eq!(rescore(&inst, &t, &OracleOptions::default()), flags);
        }
    }

    #[test]
    fn open_json_rejects_bad_inputs() {
        let line = list_instance().to_json_line();
        let s = Session::open_json(&line, "none").unwrap();
        assert!(s.prompt_text().contains("Initial list:"));
        assert!(matches!(
            Session::open_json("{", "none"),
            Err(SessionError::Instance(_))
        ));
        assert!(matches!(
            Session::open_json(&line, "\"H\""),
            Err(SessionError::Config(ConfigError::HistoryRequiresState))
        ));
    }
}
