//! Bootstrap particle filter over linked-list and binary-tree particle
//! states, the motivating workload for lazy deep copies.
//!
//! Every generation resamples ancestors, deep copies each chosen ancestor's
//! state and extends it by one node. Under eager copying the population
//! stores `N * t` nodes; under lazy copying only the nodes on surviving
//! lineages are kept.

use std::collections::BTreeSet;
use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;
use std::time::Instant;

use fnv::FnvHasher;
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{RuntimeError, WorkloadError};
use crate::reclaim::Ledger;
use crate::runtime::{Config, Handle, Heap, Init, Mode};

const VALUE: usize = 0;
const NEXT: usize = 1;
const LEFT: usize = 1;
const RIGHT: usize = 2;

/// Rough bytes per live object and per memo entry, for the memory column.
const OBJECT_BYTES: u64 = 96;
const MEMO_ENTRY_BYTES: u64 = 16;

/// `ChainMutate` rewrites one of this many most recent nodes.
pub const MUTATE_WINDOW: usize = 16;

/// Stream id reserved for resampling draws.
const RESAMPLE_STREAM: u64 = u32::MAX as u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Workload {
    /// Linked list growing by one node per generation.
    Chain,
    /// Binary tree growing by one leaf per generation, inserted at the end of
    /// a random descent; the root carries the state value.
    Tree,
    /// As `Chain`, and every generation also rewrites the value of a random
    /// node among the most recent [`MUTATE_WINDOW`], forcing copies along
    /// the prefix.
    ChainMutate,
}

impl Workload {
    pub const ALL: [Workload; 3] = [Workload::Chain, Workload::Tree, Workload::ChainMutate];
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Workload::Chain => "chain",
            Workload::Tree => "tree",
            Workload::ChainMutate => "chain-mutate",
        })
    }
}

impl FromStr for Workload {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chain" => Ok(Workload::Chain),
            "tree" => Ok(Workload::Tree),
            "chain-mutate" => Ok(Workload::ChainMutate),
            other => Err(WorkloadError::Usage(format!("unknown workload `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Resampling {
    Multinomial,
    Systematic,
}

#[derive(Clone, Debug)]
pub struct FilterConfig {
    pub particles: usize,
    pub generations: usize,
    pub workload: Workload,
    pub seed: u64,
    pub mode: Mode,
    pub resampling: Resampling,
    /// Count reachable objects after every generation (not timed).
    pub count_reachable: bool,
}

impl FilterConfig {
    pub fn new(workload: Workload, mode: Mode, particles: usize, generations: usize, seed: u64) -> Self {
        FilterConfig {
            particles,
            generations,
            workload,
            seed,
            mode,
            resampling: Resampling::Multinomial,
            count_reachable: true,
        }
    }

    fn validate(&self) -> Result<(), WorkloadError> {
        if self.particles == 0 || self.generations == 0 {
            return Err(WorkloadError::Usage("N and T must be positive".into()));
        }
        if self.particles as u64 >= RESAMPLE_STREAM {
            return Err(WorkloadError::Usage("too many particles".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationStats {
    pub t: usize,
    /// Time spent resampling, propagating and weighting this generation.
    pub elapsed_ns: u64,
    /// Shallow copies made during this generation.
    pub copies: u64,
    pub live_objects: u64,
    /// Objects reachable from particle states; 0 when not counted.
    pub unique_reachable: u64,
    pub memo_entries: u64,
    pub rss_estimate_bytes: u64,
}

pub const CSV_HEADER: &str =
    "t,config,workload,N,seed,elapsed_ns,copies,live_objects,unique_reachable,memo_entries,rss_estimate_bytes";

impl GenerationStats {
    pub fn csv_row(&self, cfg: &FilterConfig) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            cfg.mode,
            cfg.workload,
            cfg.particles,
            cfg.seed,
            self.elapsed_ns,
            self.copies,
            self.live_objects,
            self.unique_reachable,
            self.memo_entries,
            self.rss_estimate_bytes
        )
    }
}

#[derive(Clone, Debug)]
pub struct FilterRun {
    /// Hash of every value read from the population, in a fixed order.
    pub digest: u64,
    pub generations: Vec<GenerationStats>,
    /// `ancestry[i][n]`: parent index of particle `n` of generation `i + 2`.
    pub ancestry: Vec<Vec<usize>>,
    pub peak_live_objects: u64,
    pub total_copies: u64,
    /// Ledger after every particle was dropped.
    pub ledger: Ledger,
}

impl FilterRun {
    pub fn elapsed_ns(&self) -> u64 {
        self.generations.iter().map(|g| g.elapsed_ns).sum()
    }

    pub fn leak_free(&self) -> bool {
        self.ledger.is_balanced()
    }
}

/// Random stream for particle `n` (or resampling) at generation `t`.
pub fn stream(seed: u64, t: usize, n: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((t as u64) << 32) | n);
    rng
}

/// Multinomial resampling: `weights.len()` independent draws of an index
/// with probability proportional to its weight.
pub fn categorical_resample(weights: &[f64], rng: &mut impl Rng) -> Result<Vec<usize>, WorkloadError> {
    let dist = WeightedIndex::new(weights).map_err(|_| WorkloadError::DegenerateWeights)?;
    Ok((0..weights.len()).map(|_| dist.sample(rng)).collect())
}

/// Systematic resampling: one uniform offset, evenly spaced points.
pub fn systematic_resample(weights: &[f64], rng: &mut impl Rng) -> Result<Vec<usize>, WorkloadError> {
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 || weights.iter().any(|w| w.is_nan() || *w < 0.0 || !w.is_finite()) {
        return Err(WorkloadError::DegenerateWeights);
    }
    let n = weights.len();
    let u: f64 = rng.gen();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0] / total;
    let mut i = 0;
    for k in 0..n {
        let point = (k as f64 + u) / n as f64;
        while point > cum && i + 1 < n {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(i);
    }
    Ok(out)
}

/// Number of distinct generation-`s` states the final population descends
/// from, for `s = 1..=t` (index `s - 1`), by walking ancestor indices back.
pub fn unique_ancestors(ancestry: &[Vec<usize>], particles: usize) -> Vec<usize> {
    let mut counts = vec![0; ancestry.len() + 1];
    let mut current: BTreeSet<usize> = (0..particles).collect();
    counts[ancestry.len()] = current.len();
    for (i, parents) in ancestry.iter().enumerate().rev() {
        current = current.iter().map(|&n| parents[n]).collect();
        counts[i] = current.len();
    }
    counts
}

/// Log-likelihood of value `v` at generation `t`.
fn log_weight(v: i64, t: usize) -> f64 {
    let d = v as f64 - t as f64;
    -0.5 * d * d
}

/// Weights `exp(-(v - t)^2 / 2)`, scaled by a common factor so the largest
/// is 1 (resampling only depends on ratios).
fn weights(values: &[i64], t: usize) -> Vec<f64> {
    let logs: Vec<f64> = values.iter().map(|&v| log_weight(v, t)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|l| (l - max).exp()).collect()
}

struct Filter<'a> {
    cfg: &'a FilterConfig,
    heap: Heap,
    digest: FnvHasher,
}

impl Filter<'_> {
    fn mix(&mut self, v: i64) {
        self.digest.write(&v.to_le_bytes());
    }

    /// Allocates in the context of `owner`'s label so that the new node's
    /// references carry the label of the node holding them.
    fn new_in(&mut self, owner: Handle, init: &[Init]) -> Result<Handle, RuntimeError> {
        let label = self.heap.label_of(owner)?;
        self.heap.context_enter(label);
        let h = self.heap.new_object(init);
        self.heap.context_exit()?;
        h
    }

    fn initial(&mut self, n: usize) -> Result<(Handle, i64), RuntimeError> {
        let mut rng = stream(self.cfg.seed, 1, n as u64);
        let v = rng.gen_range(0..=2);
        let h = match self.cfg.workload {
            Workload::Chain | Workload::ChainMutate => self.heap.new_object(&[Init::Int(v), Init::Null])?,
            Workload::Tree => self.heap.new_object(&[Init::Int(v), Init::Null, Init::Null])?,
        };
        Ok((h, v))
    }

    /// Extends the copied state `s` for generation `t`; returns the new
    /// state and its value.
    fn propagate(&mut self, s: Handle, t: usize, n: usize) -> Result<(Handle, i64), RuntimeError> {
        let mut rng = stream(self.cfg.seed, t, n as u64);
        let v = self.heap.read_int(s, VALUE)? + rng.gen_range(0..=2);
        match self.cfg.workload {
            Workload::Chain => self.append(s, v),
            Workload::ChainMutate => {
                let (head, _) = self.append(s, v)?;
                let k = rng.gen_range(0..t.min(MUTATE_WINDOW));
                self.bump(head, k)?;
                let v = self.heap.read_int(head, VALUE)?;
                Ok((head, v))
            }
            Workload::Tree => {
                self.heap.write_int(s, VALUE, v)?;
                self.insert_leaf(s, v, &mut rng)?;
                Ok((s, v))
            }
        }
    }

    fn append(&mut self, s: Handle, v: i64) -> Result<(Handle, i64), RuntimeError> {
        let head = self.new_in(s, &[Init::Int(v), Init::Ref(s)])?;
        self.heap.drop_handle(s)?;
        Ok((head, v))
    }

    /// Adds one to the value of the node `k` steps down the list.
    fn bump(&mut self, head: Handle, k: usize) -> Result<(), RuntimeError> {
        let mut cur = self.heap.clone_handle(head)?;
        for _ in 0..k {
            let next = self.heap.read_ref(cur, NEXT)?;
            self.heap.drop_handle(cur)?;
            cur = next.ok_or(RuntimeError::NullReference(NEXT))?;
        }
        let v = self.heap.read_int(cur, VALUE)?;
        self.heap.write_int(cur, VALUE, v + 1)?;
        self.heap.drop_handle(cur)
    }

    fn insert_leaf(&mut self, root: Handle, v: i64, rng: &mut ChaCha8Rng) -> Result<(), RuntimeError> {
        let mut cur = self.heap.clone_handle(root)?;
        loop {
            let side = if rng.gen_bool(0.5) { LEFT } else { RIGHT };
            match self.heap.read_ref(cur, side)? {
                Some(child) => {
                    self.heap.drop_handle(cur)?;
                    cur = child;
                }
                None => {
                    let leaf = self.new_in(cur, &[Init::Int(v), Init::Null, Init::Null])?;
                    self.heap.assign(cur, side, Some(leaf))?;
                    self.heap.drop_handle(leaf)?;
                    return self.heap.drop_handle(cur);
                }
            }
        }
    }

    /// Mixes every value of a particle's state into the digest, in list
    /// order or tree preorder.
    fn digest_state(&mut self, s: Handle) -> Result<(), RuntimeError> {
        match self.cfg.workload {
            Workload::Chain | Workload::ChainMutate => {
                for v in self.heap.walk_ints(s, NEXT, VALUE)? {
                    self.mix(v);
                }
            }
            Workload::Tree => {
                for v in self.heap.preorder_ints(s, &[LEFT, RIGHT], VALUE)? {
                    self.mix(v);
                }
            }
        }
        Ok(())
    }

    fn stats(&self, t: usize, elapsed_ns: u64, copies: u64) -> GenerationStats {
        let ledger = self.heap.ledger();
        let memo = self.heap.total_memo_entries() as u64;
        GenerationStats {
            t,
            elapsed_ns,
            copies,
            live_objects: ledger.live_objects,
            unique_reachable: if self.cfg.count_reachable { self.heap.reachable_objects() as u64 } else { 0 },
            memo_entries: memo,
            rss_estimate_bytes: ledger.live_objects * OBJECT_BYTES + memo * MEMO_ENTRY_BYTES,
        }
    }
}

/// Runs the filter for `cfg.generations` generations of `cfg.particles`
/// particles.
pub fn run_filter(cfg: &FilterConfig) -> Result<FilterRun, WorkloadError> {
    cfg.validate()?;
    let n = cfg.particles;
    let mut f = Filter { cfg, heap: Heap::new(Config::new(cfg.mode)), digest: FnvHasher::default() };
    let mut gens = Vec::with_capacity(cfg.generations);
    let mut ancestry = Vec::with_capacity(cfg.generations.saturating_sub(1));

    let start = Instant::now();
    let mut states = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let (h, v) = f.initial(i)?;
        states.push(h);
        values.push(v);
    }
    let mut w = weights(&values, 1);
    let elapsed = start.elapsed().as_nanos() as u64;
    values.iter().for_each(|&v| f.mix(v));
    let mut copies_before = 0;
    gens.push(f.stats(1, elapsed, 0));

    for t in 2..=cfg.generations {
        let start = Instant::now();
        let mut rng = stream(cfg.seed, t, RESAMPLE_STREAM);
        let parents = match cfg.resampling {
            Resampling::Multinomial => categorical_resample(&w, &mut rng)?,
            Resampling::Systematic => systematic_resample(&w, &mut rng)?,
        };
        let mut next = Vec::with_capacity(n);
        values.clear();
        for (i, &a) in parents.iter().enumerate() {
            let copy = f.heap.deep_copy(states[a])?;
            let (h, v) = f.propagate(copy, t, i)?;
            next.push(h);
            values.push(v);
        }
        for h in std::mem::replace(&mut states, next) {
            f.heap.drop_handle(h)?;
        }
        w = weights(&values, t);
        let elapsed = start.elapsed().as_nanos() as u64;
        values.iter().for_each(|&v| f.mix(v));
        let copies = f.heap.stats().copies;
        gens.push(f.stats(t, elapsed, copies - copies_before));
        copies_before = copies;
        ancestry.push(parents);
    }

    for &h in &states {
        f.digest_state(h)?;
    }
    let peak_live_objects = f.heap.ledger().peak_live_objects;
    let total_copies = f.heap.stats().copies;
    for h in states {
        f.heap.drop_handle(h)?;
    }
    f.heap.release_all();
    Ok(FilterRun {
        digest: f.digest.finish(),
        generations: gens,
        ancestry,
        peak_live_objects,
        total_copies,
        ledger: f.heap.ledger().clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_picks_one_index() {
        let mut rng = stream(1, 1, 0);
        assert_eq!(categorical_resample(&[1.0, 0.0, 0.0, 0.0], &mut rng).unwrap(), vec![0; 4]);
        assert_eq!(systematic_resample(&[0.0, 0.0, 2.0], &mut rng).unwrap(), vec![2; 3]);
    }

    #[test]
    fn zero_weights_are_rejected() {
        let mut rng = stream(1, 1, 0);
        assert!(matches!(categorical_resample(&[0.0, 0.0], &mut rng), Err(WorkloadError::DegenerateWeights)));
        assert!(matches!(systematic_resample(&[0.0, 0.0], &mut rng), Err(WorkloadError::DegenerateWeights)));
    }

    #[test]
    fn systematic_counts_are_within_one_of_expectation() {
        let mut rng = stream(3, 1, 0);
        let w = [1.0, 3.0, 0.5, 0.5];
        let a = systematic_resample(&w, &mut rng).unwrap();
        let a8 = systematic_resample(&[1.0, 3.0, 0.5, 0.5, 1.0, 3.0, 0.5, 0.5], &mut rng).unwrap();
        assert_eq!(a.len(), 4);
        let ones = a8.iter().filter(|&&i| i == 1 || i == 5).count();
        assert!((3..=5).contains(&ones), "{a8:?}");
    }

    #[test]
    fn full_coalescence_counts_one() {
        let ancestry = vec![vec![0, 0, 0], vec![2, 2, 2]];
        assert_eq!(unique_ancestors(&ancestry, 3), vec![1, 1, 3]);
    }

    #[test]
    fn weights_are_scaled_to_max_one() {
        let w = weights(&[10, 500, 12], 11);
        assert_eq!(w.iter().cloned().fold(0.0, f64::max), 1.0);
        assert!(w[1] == 0.0 && w[0] == w[2]);
    }

    #[test]
    fn workload_names_round_trip() {
        for w in Workload::ALL {
            assert_eq!(w.to_string().parse::<Workload>().unwrap(), w);
        }
        assert!("ring".parse::<Workload>().is_err());
    }

    #[test]
    fn invalid_sizes_are_usage_errors() {
        let cfg = FilterConfig::new(Workload::Chain, Mode::Lazy, 0, 3, 1);
        assert!(matches!(run_filter(&cfg), Err(WorkloadError::Usage(_))));
    }
}
