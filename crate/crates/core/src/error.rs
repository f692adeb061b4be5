use thiserror::Error;

use crate::reclaim::{CountKind, LifeState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReclaimError {
    #[error("{kind:?} count released below zero (object state {state:?})")]
    Underflow { kind: CountKind, state: LifeState },
    #[error("{kind:?} count retained after its stage closed (object state {state:?})")]
    Resurrection { kind: CountKind, state: LifeState },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("handle {0} is not live")]
    UnknownHandle(u32),
    #[error("slot {slot} out of range for object with {len} slots")]
    SlotOutOfRange { slot: usize, len: usize },
    #[error("slot {slot} holds a {found}, expected a {expected}")]
    SlotKind { slot: usize, expected: &'static str, found: &'static str },
    #[error("null reference dereferenced at slot {0}")]
    NullReference(usize),
    #[error("the root context cannot be popped")]
    RootContextPop,
    #[error("finish exceeded its budget of {0} nodes")]
    FinishBudget(usize),
    #[error("access to freed object {0}")]
    Canary(u32),
    #[error(transparent)]
    Reclaim(#[from] ReclaimError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("lookup failed: {0}")]
    Lookup(String),
    #[error("vertex budget of {0} exceeded")]
    Budget(usize),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("invalid configuration: {0}")]
    Usage(String),
    #[error("all resampling weights are zero")]
    DegenerateWeights,
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}
