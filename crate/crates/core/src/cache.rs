//! The bounded cache store of verified `(node-id, type-id)` facts.
//!
//! Two replacement policies are provided: fully associative LRU (hash map
//! over an intrusive doubly-linked recency list) and direct-mapped with
//! collision replacement (slot = node-id mod capacity; the type id is stored
//! and compared but does not select the slot). Insertion is gated by the
//! check depth: facts verified at depth >= the limit are recomputed rather
//! than cached. The cache may forget entries at any time — correctness never
//! depends on residency, only on never holding an unverified fact.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::regtype::StateId;
use crate::term::TermId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub node: TermId,
    pub type_id: StateId,
}

impl CacheKey {
    fn pack(&self) -> u64 {
        ((self.node.0 as u64) << 32) | self.type_id.0 as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Lru,
    DirectMapped,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvalidationMode {
    FlushAll,
    TrailSelective,
}

#[derive(Debug, Clone, Copy)]
pub struct ChaosConfig {
    pub seed: u64,
    /// Probability of a spontaneous flush per cache operation, in 1/1000.
    pub flush_per_mille: u32,
}

#[derive(Debug, Clone)]
pub struct CacheConfig {
    pub policy: Policy,
    pub capacity: usize,
    /// `None` means unlimited depth.
    pub depth_limit: Option<u32>,
    pub invalidation: InvalidationMode,
    /// On a hit, re-insert the hit entry's immediate argument facts (still
    /// within the depth window). Keeps the cached frontier moving for
    /// suffix-shaped workloads; sound because a cached fact entails the
    /// membership of its argument subterms.
    pub hit_propagation: bool,
    pub chaos: Option<ChaosConfig>,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            policy: Policy::Lru,
            capacity: 256,
            depth_limit: Some(2),
            invalidation: InvalidationMode::FlushAll,
            hit_propagation: true,
            chaos: None,
        }
    }
}

impl CacheConfig {
    pub fn none() -> Self {
        CacheConfig { policy: Policy::None, capacity: 0, ..Default::default() }
    }

    pub fn lru(capacity: usize, depth_limit: Option<u32>) -> Self {
        CacheConfig { policy: Policy::Lru, capacity, depth_limit, ..Default::default() }
    }

    pub fn dm(capacity: usize, depth_limit: Option<u32>) -> Self {
        CacheConfig { policy: Policy::DirectMapped, capacity, depth_limit, ..Default::default() }
    }

    pub fn describe(&self) -> String {
        let policy = match self.policy {
            Policy::Lru => "lru",
            Policy::DirectMapped => "dm",
            Policy::None => "none",
        };
        let depth = match self.depth_limit {
            Some(d) => d.to_string(),
            None => "inf".to_string(),
        };
        format!("{policy}-{}-d{}", self.capacity, depth)
    }
}

/// Counters for one engine run. `node_visits` counts every node visited by
/// the cached checkers (incremented by the engine); the depth histogram
/// records the maximum recursion depth of each top-level check.
#[derive(Debug, Clone, Default)]
pub struct CacheStats {
    pub lookups: u64,
    pub hits: u64,
    pub insertions: u64,
    pub evictions: u64,
    pub flushes: u64,
    /// Entries removed by trail-selective invalidation.
    pub invalidated: u64,
    pub node_visits: u64,
    pub max_check_depth: u32,
    pub depth_hist: Vec<u64>,
}

impl CacheStats {
    pub fn record_check_depth(&mut self, depth: u32) {
        self.max_check_depth = self.max_check_depth.max(depth);
        let bucket = depth.min(63) as usize;
        if self.depth_hist.len() <= bucket {
            self.depth_hist.resize(bucket + 1, 0);
        }
        self.depth_hist[bucket] += 1;
    }

    /// Flat key-value block, one counter per line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("lookups: {}\n", self.lookups));
        s.push_str(&format!("hits: {}\n", self.hits));
        s.push_str(&format!("insertions: {}\n", self.insertions));
        s.push_str(&format!("evictions: {}\n", self.evictions));
        s.push_str(&format!("flushes: {}\n", self.flushes));
        s.push_str(&format!("invalidated: {}\n", self.invalidated));
        s.push_str(&format!("node_visits: {}\n", self.node_visits));
        s.push_str(&format!("max_check_depth: {}\n", self.max_check_depth));
        s
    }
}

pub enum InvalidateEvent<'a> {
    /// Bindings were undone; carries the node ids of the unbound variables.
    Backtrack(&'a [TermId]),
    StoreReset,
}

const NIL: u32 = u32::MAX;

struct LruNode {
    key: u64,
    deps: Vec<TermId>,
    prev: u32,
    next: u32,
}

#[derive(Default)]
struct LruState {
    map: HashMap<u64, u32>,
    nodes: Vec<LruNode>,
    free: Vec<u32>,
    head: u32,
    tail: u32,
}

impl LruState {
    fn new() -> Self {
        LruState { map: HashMap::new(), nodes: Vec::new(), free: Vec::new(), head: NIL, tail: NIL }
    }

    fn unlink(&mut self, idx: u32) {
        let (prev, next) = {
            let n = &self.nodes[idx as usize];
            (n.prev, n.next)
        };
        if prev != NIL {
            self.nodes[prev as usize].next = next;
        } else {
            self.head = next;
        }
        if next != NIL {
            self.nodes[next as usize].prev = prev;
        } else {
            self.tail = prev;
        }
    }

    fn push_front(&mut self, idx: u32) {
        self.nodes[idx as usize].prev = NIL;
        self.nodes[idx as usize].next = self.head;
        if self.head != NIL {
            self.nodes[self.head as usize].prev = idx;
        }
        self.head = idx;
        if self.tail == NIL {
            self.tail = idx;
        }
    }

    fn touch(&mut self, idx: u32) {
        if self.head == idx {
            return;
        }
        self.unlink(idx);
        self.push_front(idx);
    }

    fn remove(&mut self, idx: u32) {
        self.unlink(idx);
        let key = self.nodes[idx as usize].key;
        self.map.remove(&key);
        self.nodes[idx as usize].deps.clear();
        self.free.push(idx);
    }

    fn clear(&mut self) {
        self.map.clear();
        self.nodes.clear();
        self.free.clear();
        self.head = NIL;
        self.tail = NIL;
    }
}

enum Storage {
    Lru(LruState),
    Dm(Vec<Option<(u64, Vec<TermId>)>>),
    None,
}

/// The memo store of verified facts.
pub struct CheckCache {
    pub config: CacheConfig,
    storage: Storage,
    pub stats: CacheStats,
    chaos_rng: Option<ChaCha8Rng>,
    collect_deps: bool,
}

impl CheckCache {
    pub fn new(config: CacheConfig) -> Self {
        let storage = match config.policy {
            _ if config.capacity == 0 => Storage::None,
            Policy::Lru => Storage::Lru(LruState::new()),
            Policy::DirectMapped => Storage::Dm((0..config.capacity).map(|_| None).collect()),
            Policy::None => Storage::None,
        };
        let chaos_rng = config.chaos.map(|c| ChaCha8Rng::seed_from_u64(c.seed));
        let collect_deps = config.invalidation == InvalidationMode::TrailSelective;
        CheckCache { config, storage, stats: CacheStats::default(), chaos_rng, collect_deps }
    }

    /// Whether the engine needs to record dereferenced-variable dependency
    /// sets at insertion time.
    pub fn wants_deps(&self) -> bool {
        self.collect_deps && !matches!(self.storage, Storage::None)
    }

    fn chaos_tick(&mut self) {
        let Some(rng) = self.chaos_rng.as_mut() else { return };
        let per_mille = self.config.chaos.unwrap().flush_per_mille;
        if rng.gen_range(0..1000) < per_mille {
            self.clear_all();
            self.stats.flushes += 1;
        }
    }

    fn clear_all(&mut self) {
        match &mut self.storage {
            Storage::Lru(l) => l.clear(),
            Storage::Dm(slots) => slots.iter_mut().for_each(|s| *s = None),
            Storage::None => {}
        }
    }

    pub fn len(&self) -> usize {
        match &self.storage {
            Storage::Lru(l) => l.map.len(),
            Storage::Dm(slots) => slots.iter().filter(|s| s.is_some()).count(),
            Storage::None => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Look a fact up. LRU promotes the entry to the recency head.
    pub fn lookup(&mut self, key: CacheKey) -> bool {
        self.chaos_tick();
        self.stats.lookups += 1;
        let packed = key.pack();
        let hit = match &mut self.storage {
            Storage::Lru(l) => match l.map.get(&packed).copied() {
                Some(idx) => {
                    l.touch(idx);
                    true
                }
                None => false,
            },
            Storage::Dm(slots) => {
                let slot = (key.node.0 as usize) % slots.len();
                matches!(&slots[slot], Some((k, _)) if *k == packed)
            }
            Storage::None => false,
        };
        if hit {
            self.stats.hits += 1;
        }
        hit
    }

    /// Membership without stats or promotion (audits and tests).
    pub fn contains(&self, key: CacheKey) -> bool {
        let packed = key.pack();
        match &self.storage {
            Storage::Lru(l) => l.map.contains_key(&packed),
            Storage::Dm(slots) => {
                let slot = (key.node.0 as usize) % slots.len();
                matches!(&slots[slot], Some((k, _)) if *k == packed)
            }
            Storage::None => false,
        }
    }

    /// Dependency set of a resident entry (trail-selective bookkeeping).
    pub fn deps_of(&self, key: CacheKey) -> Option<&[TermId]> {
        let packed = key.pack();
        match &self.storage {
            Storage::Lru(l) => {
                l.map.get(&packed).map(|&idx| l.nodes[idx as usize].deps.as_slice())
            }
            Storage::Dm(slots) => {
                let slot = (key.node.0 as usize) % slots.len();
                match &slots[slot] {
                    Some((k, deps)) if *k == packed => Some(deps.as_slice()),
                    _ => None,
                }
            }
            Storage::None => None,
        }
    }

    /// Insert a just-verified fact checked at recursion depth `depth`.
    /// A no-op beyond the depth limit; replacement policy applies when full.
    pub fn insert(&mut self, key: CacheKey, depth: u32, deps: &[TermId]) {
        if let Some(limit) = self.config.depth_limit {
            if depth >= limit {
                return;
            }
        }
        self.chaos_tick();
        let packed = key.pack();
        match &mut self.storage {
            Storage::Lru(l) => {
                if let Some(&idx) = l.map.get(&packed) {
                    // Refresh: promote and update deps.
                    if self.collect_deps {
                        l.nodes[idx as usize].deps = deps.to_vec();
                    }
                    l.touch(idx);
                    self.stats.insertions += 1;
                    return;
                }
                if l.map.len() >= self.config.capacity {
                    let victim = l.tail;
                    l.remove(victim);
                    self.stats.evictions += 1;
                }
                let deps = if self.collect_deps { deps.to_vec() } else { Vec::new() };
                let idx = match l.free.pop() {
                    Some(i) => {
                        l.nodes[i as usize] = LruNode { key: packed, deps, prev: NIL, next: NIL };
                        i
                    }
                    None => {
                        l.nodes.push(LruNode { key: packed, deps, prev: NIL, next: NIL });
                        (l.nodes.len() - 1) as u32
                    }
                };
                l.map.insert(packed, idx);
                l.push_front(idx);
                self.stats.insertions += 1;
            }
            Storage::Dm(slots) => {
                let slot = (key.node.0 as usize) % slots.len();
                let deps = if self.collect_deps { deps.to_vec() } else { Vec::new() };
                if let Some((old, _)) = &slots[slot] {
                    if *old != packed {
                        self.stats.evictions += 1;
                    }
                }
                slots[slot] = Some((packed, deps));
                self.stats.insertions += 1;
            }
            Storage::None => {}
        }
    }

    /// React to a store event. Flush-all clears everything on any backtrack
    /// that actually unbound variables; trail-selective removes exactly the
    /// entries whose dependency set intersects the unbound variables.
    pub fn invalidate(&mut self, event: InvalidateEvent<'_>) {
        match event {
            InvalidateEvent::StoreReset => {
                if !self.is_empty() {
                    self.clear_all();
                    self.stats.flushes += 1;
                }
            }
            InvalidateEvent::Backtrack(unbound) => {
                if unbound.is_empty() || matches!(self.storage, Storage::None) {
                    return;
                }
                match self.config.invalidation {
                    InvalidationMode::FlushAll => {
                        self.clear_all();
                        self.stats.flushes += 1;
                    }
                    InvalidationMode::TrailSelective => {
                        let dead: HashSet<TermId> = unbound.iter().copied().collect();
                        let removed = self.remove_if(|key, deps| {
                            dead.contains(&key.node) || deps.iter().any(|d| dead.contains(d))
                        });
                        self.stats.invalidated += removed as u64;
                    }
                }
            }
        }
    }

    fn remove_if(&mut self, pred: impl Fn(CacheKey, &[TermId]) -> bool) -> usize {
        let mut removed = 0;
        match &mut self.storage {
            Storage::Lru(l) => {
                let victims: Vec<u32> = l
                    .map
                    .values()
                    .copied()
                    .filter(|&idx| {
                        let n = &l.nodes[idx as usize];
                        pred(unpack(n.key), &n.deps)
                    })
                    .collect();
                removed = victims.len();
                for v in victims {
                    l.remove(v);
                }
            }
            Storage::Dm(slots) => {
                for s in slots.iter_mut() {
                    if let Some((k, deps)) = s {
                        if pred(unpack(*k), deps) {
                            *s = None;
                            removed += 1;
                        }
                    }
                }
            }
            Storage::None => {}
        }
        removed
    }

    /// Resident keys in unspecified order.
    pub fn resident_keys(&self) -> Vec<CacheKey> {
        match &self.storage {
            Storage::Lru(l) => l.map.keys().map(|&k| unpack(k)).collect(),
            Storage::Dm(slots) => {
                slots.iter().flatten().map(|(k, _)| unpack(*k)).collect()
            }
            Storage::None => Vec::new(),
        }
    }

    /// Resident keys in recency order, most recent first (LRU only).
    pub fn recency_order(&self) -> Option<Vec<CacheKey>> {
        match &self.storage {
            Storage::Lru(l) => {
                let mut out = Vec::with_capacity(l.map.len());
                let mut cur = l.head;
                while cur != NIL {
                    out.push(unpack(l.nodes[cur as usize].key));
                    cur = l.nodes[cur as usize].next;
                }
                Some(out)
            }
            _ => None,
        }
    }

    /// Slot occupancy (DM only): `(slot, key)` pairs.
    pub fn dm_slots(&self) -> Option<Vec<(usize, CacheKey)>> {
        match &self.storage {
            Storage::Dm(slots) => Some(
                slots
                    .iter()
                    .enumerate()
                    .filter_map(|(i, s)| s.as_ref().map(|(k, _)| (i, unpack(*k))))
                    .collect(),
            ),
            _ => None,
        }
    }
}

fn unpack(packed: u64) -> CacheKey {
    CacheKey { node: TermId((packed >> 32) as u32), type_id: StateId(packed as u32) }
}

/// Checks the cache-update discipline: every entry present after an update
/// but not before must be a verified fact; dropping entries is always
/// allowed. `verified` is the independent judge (oracle or evaluated-literal
/// set). Returns the first offending entry.
pub fn cache_update_check(
    before: &[CacheKey],
    after: &[CacheKey],
    verified: impl Fn(CacheKey) -> bool,
) -> std::result::Result<(), CacheKey> {
    let before: HashSet<CacheKey> = before.iter().copied().collect();
    for k in after {
        if !before.contains(k) && !verified(*k) {
            return Err(*k);
        }
    }
    Ok(())
}

/// Executable reference model of the LRU policy, for differential tests:
/// a plain vector ordered most-recent-first.
pub struct ReferenceLru {
    pub capacity: usize,
    pub entries: Vec<CacheKey>,
}

impl ReferenceLru {
    pub fn new(capacity: usize) -> Self {
        ReferenceLru { capacity, entries: Vec::new() }
    }

    pub fn lookup(&mut self, key: CacheKey) -> bool {
        if let Some(pos) = self.entries.iter().position(|&k| k == key) {
            let k = self.entries.remove(pos);
            self.entries.insert(0, k);
            true
        } else {
            false
        }
    }

    pub fn insert(&mut self, key: CacheKey) {
        if let Some(pos) = self.entries.iter().position(|&k| k == key) {
            self.entries.remove(pos);
        } else if self.entries.len() >= self.capacity {
            self.entries.pop();
        }
        self.entries.insert(0, key);
    }

    pub fn remove_if(&mut self, pred: impl Fn(CacheKey) -> bool) {
        self.entries.retain(|&k| !pred(k));
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(node: u32, ty: u32) -> CacheKey {
        CacheKey { node: TermId(node), type_id: StateId(ty) }
    }

    #[test]
    fn insert_lookup_roundtrip() {
        let mut c = CheckCache::new(CacheConfig::lru(4, Some(2)));
        c.insert(key(1, 7), 0, &[]);
        assert!(c.lookup(key(1, 7)));
        assert!(!c.lookup(key(1, 8)));
        assert_eq!(c.stats.lookups, 2);
        assert_eq!(c.stats.hits, 1);
    }

    #[test]
    fn policy_none_always_misses() {
        let mut c = CheckCache::new(CacheConfig::none());
        c.insert(key(1, 7), 0, &[]);
        assert!(!c.lookup(key(1, 7)));
        assert_eq!(c.len(), 0);
    }

    #[test]
    fn lru_eviction_order() {
        // capacity 2: insert a,b,c -> {b,c} with a evicted.
        let mut c = CheckCache::new(CacheConfig::lru(2, Some(2)));
        c.insert(key(1, 0), 0, &[]);
        c.insert(key(2, 0), 0, &[]);
        c.insert(key(3, 0), 0, &[]);
        assert!(!c.contains(key(1, 0)));
        assert!(c.contains(key(2, 0)));
        assert!(c.contains(key(3, 0)));
        assert_eq!(c.stats.evictions, 1);
    }

    #[test]
    fn lru_recency_promotion() {
        // insert a,b; lookup a; insert c -> {a,c}
        let mut c = CheckCache::new(CacheConfig::lru(2, Some(2)));
        c.insert(key(1, 0), 0, &[]);
        c.insert(key(2, 0), 0, &[]);
        assert!(c.lookup(key(1, 0)));
        c.insert(key(3, 0), 0, &[]);
        assert!(c.contains(key(1, 0)));
        assert!(!c.contains(key(2, 0)));
        assert!(c.contains(key(3, 0)));
    }

    #[test]
    fn dm_modular_slots_and_collision() {
        // size 4: node 5 and node 9 both map to slot 1; 9 overwrites 5, and a
        // lookup of 9 with 5 resident misses. Slot arithmetic: 5 mod 4 = 1 =
        // 9 mod 4.
        let mut c = CheckCache::new(CacheConfig::dm(4, Some(2)));
        c.insert(key(5, 3), 0, &[]);
        assert!(!c.lookup(key(9, 3)));
        c.insert(key(9, 3), 0, &[]);
        assert!(!c.contains(key(5, 3)));
        assert!(c.lookup(key(9, 3)));
        assert_eq!(c.stats.evictions, 1);
        let slots = c.dm_slots().unwrap();
        assert_eq!(slots, vec![(1, key(9, 3))]);
    }

    #[test]
    fn depth_limit_gates_insertion() {
        let mut c = CheckCache::new(CacheConfig::lru(8, Some(2)));
        c.insert(key(1, 0), 2, &[]);
        assert!(!c.contains(key(1, 0)));
        c.insert(key(1, 0), 1, &[]);
        assert!(c.contains(key(1, 0)));
        let mut unlimited = CheckCache::new(CacheConfig::lru(8, None));
        unlimited.insert(key(1, 0), 1000, &[]);
        assert!(unlimited.contains(key(1, 0)));
    }

    #[test]
    fn flush_all_on_backtrack() {
        let mut c = CheckCache::new(CacheConfig::lru(8, Some(2)));
        c.insert(key(1, 0), 0, &[]);
        c.insert(key(2, 0), 0, &[]);
        c.invalidate(InvalidateEvent::Backtrack(&[TermId(99)]));
        assert!(c.is_empty());
        assert_eq!(c.stats.flushes, 1);
        // Empty unbound set is not a backtrack event.
        c.insert(key(1, 0), 0, &[]);
        c.invalidate(InvalidateEvent::Backtrack(&[]));
        assert!(!c.is_empty());
        assert_eq!(c.stats.flushes, 1);
    }

    #[test]
    fn trail_selective_removes_dependents() {
        let mut cfg = CacheConfig::lru(8, Some(2));
        cfg.invalidation = InvalidationMode::TrailSelective;
        let mut c = CheckCache::new(cfg);
        // Entry for a list node whose tail variable is node 50.
        c.insert(key(10, 0), 0, &[TermId(50)]);
        // Unrelated entry.
        c.insert(key(11, 0), 0, &[TermId(60)]);
        c.invalidate(InvalidateEvent::Backtrack(&[TermId(50)]));
        assert!(!c.contains(key(10, 0)));
        assert!(c.contains(key(11, 0)));
        assert_eq!(c.stats.invalidated, 1);
        assert_eq!(c.stats.flushes, 0);
    }

    #[test]
    fn store_reset_empties() {
        let mut c = CheckCache::new(CacheConfig::dm(4, Some(2)));
        c.insert(key(1, 0), 0, &[]);
        c.invalidate(InvalidateEvent::StoreReset);
        assert!(c.is_empty());
    }

    #[test]
    fn capacity_invariant() {
        let mut c = CheckCache::new(CacheConfig::lru(3, Some(2)));
        for i in 0..100 {
            c.insert(key(i, 0), 0, &[]);
            assert!(c.len() <= 3);
        }
        let mut d = CheckCache::new(CacheConfig::dm(3, Some(2)));
        for i in 0..100 {
            d.insert(key(i, 0), 0, &[]);
            assert!(d.len() <= 3);
        }
    }

    #[test]
    fn update_check_flags_forged_entries() {
        let before = vec![key(1, 0)];
        let after = vec![key(1, 0), key(2, 0)];
        assert!(cache_update_check(&before, &after, |_| true).is_ok());
        assert_eq!(cache_update_check(&before, &after, |k| k != key(2, 0)), Err(key(2, 0)));
        // Dropping entries is always fine.
        assert!(cache_update_check(&after, &before, |_| false).is_ok());
    }

    #[test]
    fn chaos_flushes_eventually() {
        let mut cfg = CacheConfig::lru(64, Some(2));
        cfg.chaos = Some(ChaosConfig { seed: 7, flush_per_mille: 500 });
        let mut c = CheckCache::new(cfg);
        for i in 0..64 {
            c.insert(key(i, 0), 0, &[]);
        }
        assert!(c.stats.flushes > 0);
        assert!(c.len() < 64);
    }
}
