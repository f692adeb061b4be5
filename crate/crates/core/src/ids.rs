use std::fmt;

/// Identity of a managed object: arena index plus a generation that changes
/// every time the slot is reused, so stale ids never alias a new object.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjId {
    pub(crate) index: u32,
    pub(crate) generation: u32,
}

impl ObjId {
    pub(crate) fn new(index: u32, generation: u32) -> Self {
        ObjId { index, generation }
    }

    pub fn index(self) -> u32 {
        self.index
    }

    /// Fibonacci hashing of the packed identity.
    #[inline]
    pub(crate) fn hash64(self) -> u64 {
        let packed = ((self.generation as u64) << 32) | self.index as u64;
        packed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (packed >> 29)
    }
}

impl fmt::Debug for ObjId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}.{}", self.index, self.generation)
    }
}

/// Handle to a label in the runtime's label arena.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelKey {
    pub(crate) index: u32,
    pub(crate) generation: u32,
}

impl fmt::Debug for LabelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}.{}", self.index, self.generation)
    }
}
