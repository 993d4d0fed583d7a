//! Prioritized memory reset store: a capacity-bounded max-priority queue over
//! visited states, deduplicated by skyline hash, with full priority
//! recomputation after each training phase.

use bridge_sim::{restore, DesignerAction, SceneState, SkylineKey};
use rand::Rng;
use std::collections::HashMap;

/// TD-error priority: |r + gamma * v_next * (1 - terminal) - v_s|.
pub fn compute_priority(r: f64, v_s: f64, v_next: f64, terminal: bool, gamma: f64) -> f64 {
    let bootstrap = if terminal { 0.0 } else { gamma * v_next };
    (r + bootstrap - v_s).abs()
}

/// One tracked reset state with everything needed to recompute its priority.
#[derive(Clone, Debug)]
pub struct PriorityEntry {
    pub key: SkylineKey,
    /// Snapshot of the state the episode can reset to.
    pub snapshot: Vec<u8>,
    /// Reward observed when stepping out of this state.
    pub reward: f64,
    /// Snapshot of the observed successor state.
    pub next_snapshot: Vec<u8>,
    pub terminal_next: bool,
    /// Action taken at this state; feeds the inverse-dynamics priority
    /// variant.
    pub action: DesignerAction,
    pub priority: f64,
    seq: u64,
}

struct Slot {
    entry: PriorityEntry,
    heap_pos: usize,
}

/// Max-heap keyed by (priority, insertion sequence) with one entry per
/// skyline key and least-priority eviction at capacity.
pub struct ResetStore {
    capacity: usize,
    slots: Vec<Option<Slot>>,
    free: Vec<usize>,
    heap: Vec<usize>,
    by_key: HashMap<SkylineKey, usize>,
    next_seq: u64,
}

impl ResetStore {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "store capacity must be positive");
        ResetStore {
            capacity,
            slots: Vec::new(),
            free: Vec::new(),
            heap: Vec::new(),
            by_key: HashMap::new(),
            next_seq: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn max_priority(&self) -> Option<f64> {
        self.heap.first().map(|i| self.entry_at(*i).priority)
    }

    fn entry_at(&self, slot: usize) -> &PriorityEntry {
        &self.slots[slot].as_ref().unwrap().entry
    }

    /// Heap ordering: higher priority first, newer entries break ties.
    fn ranks_above(&self, a: usize, b: usize) -> bool {
        let ea = self.entry_at(a);
        let eb = self.entry_at(b);
        (ea.priority, ea.seq) > (eb.priority, eb.seq)
    }

    fn set_heap(&mut self, pos: usize, slot: usize) {
        self.heap[pos] = slot;
        self.slots[slot].as_mut().unwrap().heap_pos = pos;
    }

    fn sift_up(&mut self, mut pos: usize) {
        while pos > 0 {
            let parent = (pos - 1) / 2;
            if self.ranks_above(self.heap[pos], self.heap[parent]) {
                let (a, b) = (self.heap[pos], self.heap[parent]);
                self.set_heap(pos, b);
                self.set_heap(parent, a);
                pos = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut pos: usize) {
        loop {
            let left = 2 * pos + 1;
            let right = 2 * pos + 2;
            let mut best = pos;
            if left < self.heap.len() && self.ranks_above(self.heap[left], self.heap[best]) {
                best = left;
            }
            if right < self.heap.len() && self.ranks_above(self.heap[right], self.heap[best]) {
                best = right;
            }
            if best == pos {
                return;
            }
            let (a, b) = (self.heap[pos], self.heap[best]);
            self.set_heap(pos, b);
            self.set_heap(best, a);
            pos = best;
        }
    }

    fn remove_at(&mut self, slot: usize) -> PriorityEntry {
        let pos = self.slots[slot].as_ref().unwrap().heap_pos;
        let last = self.heap.len() - 1;
        if pos != last {
            let moved = self.heap[last];
            self.set_heap(pos, moved);
        }
        self.heap.pop();
        if pos < self.heap.len() {
            self.sift_down(pos);
            self.sift_up(pos);
        }
        let removed = self.slots[slot].take().unwrap();
        self.free.push(slot);
        self.by_key.remove(&removed.entry.key);
        removed.entry
    }

    fn min_slot(&self) -> usize {
        // The minimum lives among the heap leaves; a linear scan is fine at
        // this capacity.
        let n = self.heap.len();
        let mut best = self.heap[n - 1];
        for &slot in &self.heap[n / 2..] {
            let e = self.entry_at(slot);
            let b = self.entry_at(best);
            if (e.priority, e.seq) < (b.priority, b.seq) {
                best = slot;
            }
        }
        best
    }

    /// Insert an already-scored entry. Duplicate keys keep whichever entry
    /// has the higher priority; at capacity the minimum-priority entry is
    /// evicted (which may be the incoming one).
    pub fn insert(&mut self, mut entry: PriorityEntry) {
        assert!(entry.priority.is_finite() && entry.priority >= 0.0, "bad priority");
        entry.seq = self.next_seq;
        self.next_seq += 1;
        if let Some(&slot) = self.by_key.get(&entry.key) {
            if entry.priority > self.entry_at(slot).priority {
                let pos = self.slots[slot].as_ref().unwrap().heap_pos;
                self.slots[slot].as_mut().unwrap().entry = entry;
                self.sift_up(pos);
                self.sift_down(pos);
            }
            return;
        }
        if self.heap.len() >= self.capacity {
            let min = self.min_slot();
            if self.entry_at(min).priority >= entry.priority {
                return;
            }
            self.remove_at(min);
        }
        let slot = match self.free.pop() {
            Some(s) => s,
            None => {
                self.slots.push(None);
                self.slots.len() - 1
            }
        };
        let key = entry.key.clone();
        self.slots[slot] = Some(Slot { entry, heap_pos: self.heap.len() });
        self.heap.push(slot);
        self.by_key.insert(key, slot);
        self.sift_up(self.heap.len() - 1);
    }

    /// Remove and return the highest-priority entry.
    pub fn pop_max(&mut self) -> Option<PriorityEntry> {
        let slot = *self.heap.first()?;
        Some(self.remove_at(slot))
    }

    /// Restore the popped state, fresh episode counter.
    pub fn pop_max_state(&mut self) -> Option<SceneState> {
        self.pop_max().map(|e| restore(&e.snapshot).expect("stored snapshot must decode"))
    }

    /// Recompute every entry's priority under the current scoring function
    /// and rebuild the heap.
    pub fn recompute_all(&mut self, mut score: impl FnMut(&PriorityEntry) -> f64) {
        for slot in self.heap.clone() {
            let e = &mut self.slots[slot].as_mut().unwrap().entry;
            let p = score(e);
            assert!(p.is_finite() && p >= 0.0, "bad recomputed priority");
            e.priority = p;
        }
        for pos in (0..self.heap.len()).rev() {
            self.sift_down(pos);
        }
    }

    /// Entries in descending priority order (for dumps and rendering).
    pub fn sorted_entries(&self) -> Vec<&PriorityEntry> {
        let mut all: Vec<&PriorityEntry> =
            self.heap.iter().map(|s| self.entry_at(*s)).collect();
        all.sort_by(|a, b| (b.priority, b.seq).partial_cmp(&(a.priority, a.seq)).unwrap());
        all
    }

    /// Internal consistency probe used by tests: the array satisfies the
    /// max-heap property and the key map matches.
    pub fn check_heap_property(&self) -> bool {
        for pos in 1..self.heap.len() {
            let parent = (pos - 1) / 2;
            if self.ranks_above(self.heap[pos], self.heap[parent]) {
                return false;
            }
        }
        self.by_key.len() == self.heap.len()
    }
}

/// Construct an entry from raw parts; the store assigns the sequence number.
#[allow(clippy::too_many_arguments)]
pub fn make_entry(
    key: SkylineKey,
    snapshot: Vec<u8>,
    reward: f64,
    next_snapshot: Vec<u8>,
    terminal_next: bool,
    action: DesignerAction,
    priority: f64,
) -> PriorityEntry {
    PriorityEntry { key, snapshot, reward, next_snapshot, terminal_next, action, priority, seq: 0 }
}

pub const STORE_DUMP_MAGIC: &[u8; 8] = b"PMRDUMP1";

/// Serialize the store, highest priority first. Snapshots keep the scene
/// snapshot binary format.
pub fn dump_store(store: &ResetStore) -> Vec<u8> {
    let entries = store.sorted_entries();
    let mut out = Vec::new();
    out.extend_from_slice(STORE_DUMP_MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        out.extend_from_slice(&e.priority.to_le_bytes());
        out.extend_from_slice(&e.reward.to_le_bytes());
        out.push(e.terminal_next as u8);
        out.extend_from_slice(&e.action.id.to_le_bytes());
        out.extend_from_slice(&[e.action.y_bin, e.action.z_bin, e.action.angle_bin]);
        out.extend_from_slice(&(e.key.0.len() as u32).to_le_bytes());
        for cell in &e.key.0 {
            out.extend_from_slice(&cell.to_le_bytes());
        }
        out.extend_from_slice(&(e.snapshot.len() as u32).to_le_bytes());
        out.extend_from_slice(&e.snapshot);
        out.extend_from_slice(&(e.next_snapshot.len() as u32).to_le_bytes());
        out.extend_from_slice(&e.next_snapshot);
    }
    out
}

/// Parse a store dump back into entries (highest priority first).
pub fn load_store_dump(bytes: &[u8]) -> Result<Vec<PriorityEntry>, String> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], String> {
        if *pos + n > bytes.len() {
            return Err("truncated store dump".into());
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 8)? != STORE_DUMP_MAGIC {
        return Err("bad store dump magic".into());
    }
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let priority = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let reward = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let terminal_next = take(&mut pos, 1)?[0] != 0;
        let id = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        let bins = take(&mut pos, 3)?.to_vec();
        let klen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut key = Vec::with_capacity(klen);
        for _ in 0..klen {
            key.push(i64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        }
        let slen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let snapshot = take(&mut pos, slen)?.to_vec();
        let nlen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let next_snapshot = take(&mut pos, nlen)?.to_vec();
        let action = if id == 0 {
            DesignerAction::no_op()
        } else {
            DesignerAction::place(id, bins[0], bins[1], bins[2])
        };
        out.push(make_entry(
            SkylineKey(key),
            snapshot,
            reward,
            next_snapshot,
            terminal_next,
            action,
            priority,
        ));
    }
    if pos != bytes.len() {
        return Err("trailing bytes in store dump".into());
    }
    Ok(out)
}

/// With probability `p_restart` restart from the highest-priority stored
/// state (falling back to a fresh draw when empty); otherwise sample the
/// initial distribution. Returns the state and whether it came from the store.
pub fn choose_reset<R: Rng>(
    store: &mut ResetStore,
    rng: &mut R,
    p_restart: f64,
    mut rho0: impl FnMut(&mut R) -> SceneState,
) -> (SceneState, bool) {
    if rng.gen::<f64>() < p_restart {
        if let Some(state) = store.pop_max_state() {
            return (state, true);
        }
    }
    (rho0(rng), false)
}
