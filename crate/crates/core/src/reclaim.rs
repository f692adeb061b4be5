//! Three-stage reference counting: shared, weak and memo counts.
//!
//! An object starts with all three counts at one. Dropping the last shared
//! reference destroys the payload and releases the object's own weak count;
//! dropping the last weak reference releases the object's own memo count;
//! dropping the last memo count frees the storage. Memo tables hold memo
//! counts on their keys so that a key's identity cannot be reused while an
//! entry for it exists.

use std::fmt;

use crate::error::ReclaimError;

/// Which of the three counts an operation acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CountKind {
    Shared,
    Weak,
    Memo,
}

/// Lifecycle of a counted object. Transitions only move forward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LifeState {
    Live,
    Destroyed,
    WeakDead,
    Freed,
}

/// What a release did, so the owner can run the matching cascade step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transition {
    None,
    /// Shared count reached zero: the payload must be destroyed.
    Destroy,
    /// Weak count reached zero.
    WeakDead,
    /// Memo count reached zero: storage may be freed.
    Free,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterBlock {
    shared: u32,
    weak: u32,
    memo: u32,
    state: LifeState,
}

impl Default for CounterBlock {
    fn default() -> Self {
        Self::new()
    }
}

impl CounterBlock {
    pub fn new() -> Self {
        CounterBlock { shared: 1, weak: 1, memo: 1, state: LifeState::Live }
    }

    pub fn shared(&self) -> u32 {
        self.shared
    }

    pub fn weak(&self) -> u32 {
        self.weak
    }

    pub fn memo(&self) -> u32 {
        self.memo
    }

    pub fn state(&self) -> LifeState {
        self.state
    }

    /// Zero shared and weak counts with a memo count still held: only memo
    /// keys keep this object's identity alive.
    pub fn is_weak_dead(&self) -> bool {
        self.state >= LifeState::WeakDead
    }

    pub fn retain(&mut self, kind: CountKind) -> Result<(), ReclaimError> {
        // No resurrection: a count may only grow while its stage is still open.
        let open = match kind {
            CountKind::Shared => self.state == LifeState::Live,
            CountKind::Weak => self.state <= LifeState::Destroyed,
            CountKind::Memo => self.state <= LifeState::WeakDead,
        };
        if !open {
            return Err(ReclaimError::Resurrection { kind, state: self.state });
        }
        match kind {
            CountKind::Shared => self.shared += 1,
            CountKind::Weak => self.weak += 1,
            CountKind::Memo => self.memo += 1,
        }
        Ok(())
    }

    /// Decrements one count. A `Destroy` or `WeakDead` result obliges the
    /// caller to continue the cascade with [`CounterBlock::after_destroy`] or
    /// [`CounterBlock::after_weak_dead`].
    pub fn release(&mut self, kind: CountKind) -> Result<Transition, ReclaimError> {
        let counter = match kind {
            CountKind::Shared => &mut self.shared,
            CountKind::Weak => &mut self.weak,
            CountKind::Memo => &mut self.memo,
        };
        if *counter == 0 {
            return Err(ReclaimError::Underflow { kind, state: self.state });
        }
        *counter -= 1;
        if *counter > 0 {
            return Ok(Transition::None);
        }
        Ok(match kind {
            CountKind::Shared => {
                self.state = LifeState::Destroyed;
                Transition::Destroy
            }
            CountKind::Weak => {
                self.state = LifeState::WeakDead;
                Transition::WeakDead
            }
            CountKind::Memo => {
                self.state = LifeState::Freed;
                Transition::Free
            }
        })
    }

    /// Payload destroyed: give up the object's own weak count.
    pub fn after_destroy(&mut self) -> Result<Transition, ReclaimError> {
        self.release(CountKind::Weak)
    }

    /// Weak count gone: give up the object's own memo count.
    pub fn after_weak_dead(&mut self) -> Result<Transition, ReclaimError> {
        self.release(CountKind::Memo)
    }
}

/// Allocation ledger shared by the runtime and the benchmark harness.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ledger {
    pub allocations: u64,
    pub frees: u64,
    pub live_objects: u64,
    pub peak_live_objects: u64,
    pub memo_entries: u64,
    pub peak_memo_entries: u64,
    pub labels_created: u64,
    pub labels_freed: u64,
    pub canary_violations: u64,
}

impl Ledger {
    pub fn on_alloc(&mut self) {
        self.allocations += 1;
        self.live_objects += 1;
        self.peak_live_objects = self.peak_live_objects.max(self.live_objects);
    }

    pub fn on_free(&mut self) {
        self.frees += 1;
        self.live_objects -= 1;
    }

    pub fn on_memo_insert(&mut self) {
        self.memo_entries += 1;
        self.peak_memo_entries = self.peak_memo_entries.max(self.memo_entries);
    }

    pub fn on_memo_remove(&mut self, n: u64) {
        self.memo_entries -= n;
    }

    pub fn is_balanced(&self) -> bool {
        self.allocations == self.frees && self.memo_entries == 0 && self.canary_violations == 0
    }
}

impl fmt::Display for Ledger {
    /// `key=value` lines, one per field.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "allocations={}", self.allocations)?;
        writeln!(f, "frees={}", self.frees)?;
        writeln!(f, "live_objects={}", self.live_objects)?;
        writeln!(f, "peak_live_objects={}", self.peak_live_objects)?;
        writeln!(f, "memo_entries={}", self.memo_entries)?;
        writeln!(f, "peak_memo_entries={}", self.peak_memo_entries)?;
        writeln!(f, "labels_created={}", self.labels_created)?;
        writeln!(f, "labels_freed={}", self.labels_freed)?;
        write!(f, "canary_violations={}", self.canary_violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_cascade_from_fresh_object() {
        let mut c = CounterBlock::new();
        assert_eq!((c.shared(), c.weak(), c.memo()), (1, 1, 1));
        assert_eq!(c.release(CountKind::Shared).unwrap(), Transition::Destroy);
        assert_eq!(c.state(), LifeState::Destroyed);
        assert_eq!(c.after_destroy().unwrap(), Transition::WeakDead);
        assert!(c.is_weak_dead());
        assert_eq!(c.after_weak_dead().unwrap(), Transition::Free);
        assert_eq!(c.state(), LifeState::Freed);
    }

    #[test]
    fn retain_then_release_stays_live() {
        let mut c = CounterBlock::new();
        c.retain(CountKind::Shared).unwrap();
        assert_eq!(c.release(CountKind::Shared).unwrap(), Transition::None);
        assert_eq!(c, CounterBlock::new());
    }

    #[test]
    fn memo_count_delays_free() {
        let mut c = CounterBlock::new();
        c.retain(CountKind::Memo).unwrap();
        c.release(CountKind::Shared).unwrap();
        c.after_destroy().unwrap();
        assert_eq!(c.after_weak_dead().unwrap(), Transition::None);
        assert_eq!(c.state(), LifeState::WeakDead);
        assert_eq!(c.release(CountKind::Memo).unwrap(), Transition::Free);
    }

    #[test]
    fn underflow_is_reported() {
        let mut c = CounterBlock::new();
        c.release(CountKind::Shared).unwrap();
        assert!(matches!(
            c.release(CountKind::Shared),
            Err(ReclaimError::Underflow { kind: CountKind::Shared, .. })
        ));
    }

    #[test]
    fn no_resurrection() {
        let mut c = CounterBlock::new();
        c.release(CountKind::Shared).unwrap();
        assert!(c.retain(CountKind::Shared).is_err());
        c.retain(CountKind::Weak).unwrap();
    }

    #[test]
    fn ledger_lines() {
        let mut l = Ledger::default();
        l.on_alloc();
        l.on_alloc();
        l.on_free();
        let text = l.to_string();
        assert!(text.contains("allocations=2"));
        assert!(text.contains("peak_live_objects=2"));
        assert!(!l.is_balanced());
    }
}
