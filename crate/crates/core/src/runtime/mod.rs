//! Lazy deep copy runtime.
//!
//! Objects live in an arena and are reached through *lazy references*: an
//! object id paired with a label. A label stands for one deep copy and owns
//! a memo mapping original objects to their copies under that label and all
//! of its ancestors (the memo is flattened at creation, so no parent links
//! are kept). A deep copy freezes the reachable subgraph and mints a new
//! label; objects are duplicated only when written through a reference
//! whose label differs from their creation label.
//!
//! References stored in an object whose label differs from the object's own
//! label are cross references. When a frozen object is copied into another
//! label's world, its cross references are redirected to per-deep-copy
//! snapshot labels recorded in the label's cross map, so the copy observes
//! the referenced world as it was when the deep copy happened.

mod heap;
mod ops;

pub use heap::{Heap, ObjectInfo, SlotInfo};

use crate::ids::{LabelKey, ObjId};

/// Which copy strategy the heap uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Deep copies duplicate the whole reachable subgraph immediately.
    Eager,
    /// Deep copies are deferred until first write.
    Lazy,
    /// Lazy, and objects that had a single reference when frozen are copied
    /// without a memo entry.
    LazySro,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Eager, Mode::Lazy, Mode::LazySro];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Eager => "eager",
            Mode::Lazy => "lazy",
            Mode::LazySro => "lazy-sro",
        }
    }

    pub fn is_lazy(self) -> bool {
        self != Mode::Eager
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eager" => Ok(Mode::Eager),
            "lazy" => Ok(Mode::Lazy),
            "lazy-sro" | "lazy+sro" => Ok(Mode::LazySro),
            other => Err(format!("unknown configuration `{other}`")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct Config {
    pub mode: Mode,
    /// Maximum number of edges a single `finish` may visit.
    pub finish_budget: usize,
    /// Redirect cross references through snapshot labels when copying.
    /// Disabling this reproduces the misdirected read of an unguarded
    /// single-label scheme; it exists for demonstration only.
    pub cross_ref_guard: bool,
    /// Reuse a frozen object in place when the writing reference is its only
    /// reference.
    pub thaw: bool,
}

impl Config {
    pub fn new(mode: Mode) -> Self {
        Config { mode, finish_budget: 1 << 20, cross_ref_guard: true, thaw: true }
    }
}

impl Default for Config {
    fn default() -> Self {
        Config::new(Mode::Lazy)
    }
}

/// A lazy reference as stored in an object slot or held by the program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub(crate) target: ObjId,
    pub(crate) label: LabelKey,
}

/// A program-held lazy reference. Handles are explicit: every handle obtained
/// from the heap must eventually be given back with [`Heap::drop_handle`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Handle(pub(crate) u32);

impl Handle {
    pub fn raw(self) -> u32 {
        self.0
    }
}

/// Opaque label identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Label(pub(crate) LabelKey);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Int(i64),
    Ref(Option<Edge>),
}

impl Slot {
    fn kind(&self) -> &'static str {
        match self {
            Slot::Int(_) => "scalar",
            Slot::Ref(_) => "reference",
        }
    }
}

/// Initial value of a slot for [`Heap::new_object`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Int(i64),
    Null,
    Ref(Handle),
}

/// Instrumentation counters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    /// Payload duplications, eager or lazy.
    pub copies: u64,
    pub deep_copies: u64,
    pub memo_inserts: u64,
    /// Copies whose memo update was skipped by the single-reference rule.
    pub memo_skips: u64,
    pub thaws: u64,
    /// Objects newly marked frozen.
    pub freezes: u64,
    pub finishes: u64,
    pub snapshot_labels: u64,
    pub retargets: u64,
}
