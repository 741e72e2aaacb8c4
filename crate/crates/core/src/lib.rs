//! Multi-turn benchmark environments with oracle interventions.

pub mod action;
pub mod agent;
pub mod cli;
pub mod config;
pub mod envs;
pub mod eval;
pub mod llm;
pub mod oracle;
pub mod seed;
pub mod task;
pub mod template;
