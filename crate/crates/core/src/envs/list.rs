use rand::seq::index::sample;
use rand::Rng;

use super::{StepError, StepResult};
use crate::action::{ActionCall, Scalar};
use crate::task::ListWorld;

/// Short lowercase tokens. The vocabulary is small on purpose so duplicates
/// appear and several pops can be optimal at once.
pub const VOCABULARY: &[&str] = &[
    "apple", "bird", "cat", "dog", "egg", "fish", "goat", "hat", "ink", "jam", "kite", "lamp",
    "moon", "nut", "owl", "pen", "rose", "sun",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListState {
    pub initial: Vec<String>,
    pub current: Vec<String>,
    pub target: Vec<String>,
    /// Lock index: positions below it can no longer be popped.
    pub lock: usize,
    /// Index into `initial` of every element still in `current`.
    pub origin: Vec<usize>,
}

impl ListState {
    pub fn new(world: &ListWorld) -> Self {
        Self {
            initial: world.initial.clone(),
            current: world.initial.clone(),
            target: world.target.clone(),
            lock: 0,
            origin: (0..world.initial.len()).collect(),
        }
    }

    pub fn at_target(&self) -> bool {
        self.current == self.target
    }
}

/// Generates a list task with `num_pops` extra elements interleaved at random
/// positions into a random target list.
pub fn generate(target_len: usize, num_pops: usize, rng: &mut impl Rng) -> ListWorld {
    let word =
        |rng: &mut dyn rand::RngCore| VOCABULARY[rng.gen_range(0..VOCABULARY.len())].to_string();
    let total = target_len + num_pops;
    let mut is_extra = vec![false; total];
    for i in sample(rng, total, num_pops).into_iter() {
        is_extra[i] = true;
    }
    let mut initial = Vec::with_capacity(total);
    let mut target = Vec::with_capacity(target_len);
    for extra in is_extra {
        let w = word(rng);
        if !extra {
            target.push(w.clone());
        }
        initial.push(w);
    }
    ListWorld { initial, target }
}

pub fn step(state: &ListState, action: &ActionCall) -> (ListState, StepResult) {
    match action.name.as_str() {
        "pop" => {
            let index = match (action.args.len(), action.arg("id")) {
                (1, Some(Scalar::Int(i))) => *i,
                _ => {
                    return invalid(
                        state,
                        "pop expects a single integer argument 'id', e.g. pop(id=0).",
                    );
                }
            };
            let len = state.current.len();
            if index < 0 || index as usize >= len {
                return (
                    state.clone(),
                    StepResult::error(
                        StepError::IllegalIndex,
                        format!("Error: index {index} is out of range for a list of length {len}."),
                    ),
                );
            }
            let index = index as usize;
            if index < state.lock {
                return (
                    state.clone(),
                    StepResult::error(
                        StepError::LockedIndex,
                        format!(
                            "Error: cannot pop index {index}. Elements before index {} can no longer be removed.",
                            state.lock
                        ),
                    ),
                );
            }
            let mut next = state.clone();
            next.current.remove(index);
            next.origin.remove(index);
            next.lock = index;
            (next, StepResult::ongoing("Element removed."))
        }
        "done" => {
            if !action.args.is_empty() {
                return invalid(state, "done takes no arguments.");
            }
            let result = if state.at_target() {
                StepResult::finished(true, "Task completed. The list matches the target.")
            } else {
                StepResult::finished(false, "Task ended. The list does not match the target.")
            };
            (state.clone(), result)
        }
        other => (
            state.clone(),
            StepResult::unknown_action(other, &["pop", "done"]),
        ),
    }
}

fn invalid(state: &ListState, msg: &str) -> (ListState, StepResult) {
    (
        state.clone(),
        StepResult::error(StepError::InvalidArguments, format!("Error: {msg}")),
    )
}

/// Actions the environment accepts without an error observation.
pub fn legal_actions(state: &ListState) -> Vec<ActionCall> {
    let mut out: Vec<ActionCall> = (state.lock..state.current.len())
        .map(|i| ActionCall::new("pop").with_arg("id", Scalar::Int(i as i64)))
        .collect();
    out.push(ActionCall::new("done"));
    out
}
