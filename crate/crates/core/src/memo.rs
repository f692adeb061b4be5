//! Open-addressing hash map from object identity to object identity.
//!
//! Linear probing over a power-of-two table kept at most half full
//! (tombstones included). Every resize and every clone first sweeps out
//! entries whose key is reported dead by the caller; the swept pairs are
//! handed back so the caller can release the counts they held.

use crate::ids::ObjId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bucket {
    Empty,
    Tomb,
    Full(ObjId, ObjId),
}

#[derive(Clone, Debug)]
pub struct MemoTable {
    buckets: Vec<Bucket>,
    len: usize,
    tombs: usize,
}

const MIN_CAPACITY: usize = 8;

impl Default for MemoTable {
    fn default() -> Self {
        Self::new()
    }
}

impl MemoTable {
    pub fn new() -> Self {
        MemoTable { buckets: Vec::new(), len: 0, tombs: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.buckets.len()
    }

    #[inline]
    fn mask(&self) -> usize {
        self.buckets.len() - 1
    }

    pub fn get(&self, key: ObjId) -> Option<ObjId> {
        if self.buckets.is_empty() {
            return None;
        }
        let mask = self.mask();
        let mut i = key.hash64() as usize & mask;
        loop {
            match self.buckets[i] {
                Bucket::Empty => return None,
                Bucket::Full(k, v) if k == key => return Some(v),
                _ => i = (i + 1) & mask,
            }
        }
    }

    pub fn contains_key(&self, key: ObjId) -> bool {
        self.get(key).is_some()
    }

    /// Inserts `key -> value`, returning any previous value for `key` plus the
    /// entries swept if the insertion forced a resize.
    pub fn insert(
        &mut self,
        key: ObjId,
        value: ObjId,
        is_dead: impl Fn(ObjId) -> bool,
    ) -> (Option<ObjId>, Vec<(ObjId, ObjId)>) {
        let mut swept = Vec::new();
        if (self.len + self.tombs + 1) * 2 > self.buckets.len() {
            swept = self.sweep(&is_dead);
            self.rehash();
        }
        let mask = self.mask();
        let mut i = key.hash64() as usize & mask;
        let mut first_tomb = None;
        loop {
            match self.buckets[i] {
                Bucket::Empty => break,
                Bucket::Tomb => {
                    first_tomb.get_or_insert(i);
                }
                Bucket::Full(k, old) if k == key => {
                    self.buckets[i] = Bucket::Full(key, value);
                    return (Some(old), swept);
                }
                Bucket::Full(..) => {}
            }
            i = (i + 1) & mask;
        }
        let slot = match first_tomb {
            Some(t) => {
                self.tombs -= 1;
                t
            }
            None => i,
        };
        self.buckets[slot] = Bucket::Full(key, value);
        self.len += 1;
        (None, swept)
    }

    pub fn remove(&mut self, key: ObjId) -> Option<ObjId> {
        if self.buckets.is_empty() {
            return None;
        }
        let mask = self.mask();
        let mut i = key.hash64() as usize & mask;
        loop {
            match self.buckets[i] {
                Bucket::Empty => return None,
                Bucket::Full(k, v) if k == key => {
                    self.buckets[i] = Bucket::Tomb;
                    self.len -= 1;
                    self.tombs += 1;
                    return Some(v);
                }
                _ => i = (i + 1) & mask,
            }
        }
    }

    /// Removes every entry whose key satisfies `is_dead` and returns them.
    pub fn sweep(&mut self, is_dead: impl Fn(ObjId) -> bool) -> Vec<(ObjId, ObjId)> {
        let mut removed = Vec::new();
        for b in self.buckets.iter_mut() {
            if let Bucket::Full(k, v) = *b {
                if is_dead(k) {
                    removed.push((k, v));
                    *b = Bucket::Tomb;
                }
            }
        }
        self.len -= removed.len();
        self.tombs += removed.len();
        removed
    }

    /// Sweeps, then returns a compact copy of the surviving entries.
    pub fn sweep_and_clone(
        &mut self,
        is_dead: impl Fn(ObjId) -> bool,
    ) -> (MemoTable, Vec<(ObjId, ObjId)>) {
        let swept = self.sweep(is_dead);
        if self.tombs > self.len {
            self.rehash();
        }
        (self.clone(), swept)
    }

    fn rehash(&mut self) {
        let mut cap = MIN_CAPACITY;
        while cap < (self.len + 1) * 2 {
            cap *= 2;
        }
        // Grow when the live entries alone would reach the load limit soon.
        if self.len * 4 >= cap {
            cap *= 2;
        }
        let old = std::mem::replace(&mut self.buckets, vec![Bucket::Empty; cap]);
        self.tombs = 0;
        let mask = cap - 1;
        for b in old {
            if let Bucket::Full(k, v) = b {
                let mut i = k.hash64() as usize & mask;
                while self.buckets[i] != Bucket::Empty {
                    i = (i + 1) & mask;
                }
                self.buckets[i] = Bucket::Full(k, v);
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ObjId, ObjId)> + '_ {
        self.buckets.iter().filter_map(|b| match *b {
            Bucket::Full(k, v) => Some((k, v)),
            _ => None,
        })
    }

    /// Points every value at the end of its chain (`a -> b -> c` becomes
    /// `a -> c`). Lookups that iterate to a miss see the same result, and
    /// intermediate objects are no longer held by this table's values.
    pub fn compress(&mut self) {
        for i in 0..self.buckets.len() {
            if let Bucket::Full(k, mut v) = self.buckets[i] {
                let start = v;
                while let Some(next) = self.get(v) {
                    v = next;
                }
                if v != start {
                    self.buckets[i] = Bucket::Full(k, v);
                }
            }
        }
    }

    /// Empties the table, returning all entries.
    pub fn drain(&mut self) -> Vec<(ObjId, ObjId)> {
        let out: Vec<_> = self.iter().collect();
        *self = MemoTable::new();
        out
    }
}
