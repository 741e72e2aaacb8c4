//! ReAct-style episode driver: prompt construction, policies and the turn loop.

pub mod policy;
pub mod prompt;
pub mod runner;

pub use policy::{
    policy_for_episode, scripted_noise_choice, LlmPolicy, Policy, PolicyError, PolicyHandle,
    ScriptedPolicy, TurnView,
};
pub use prompt::{build_prompt, render_examples, PromptBundle};
pub use runner::{
    rescore, run_episode, Session, SessionError, StepOutcome, MAX_CONSECUTIVE_PARSE_FAILURES,
};
