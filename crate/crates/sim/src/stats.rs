use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Sdar,
    Dcf,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Sdar => "sdar",
            Engine::Dcf => "dcf",
        })
    }
}

/// Per-node counters. Everything except the `lifetime_*` fields and
/// `final_queue` covers the measurement window only.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NodeStats {
    pub attempts: u64,
    pub collisions: u64,
    pub successes: u64,
    pub accepted: u64,
    pub blocked: u64,
    /// Packets discarded after exhausting the retry limit (DCF only).
    pub dropped: u64,
    /// Arrival-to-departure time summed over departed packets (seconds).
    pub delay_sum: f64,
    /// Head-of-line-to-departure time summed over departed packets.
    pub service_sum: f64,
    pub lifetime_accepted: u64,
    pub lifetime_departed: u64,
    pub lifetime_dropped: u64,
    /// Packets still held at the end of the run, pending ones included.
    pub final_queue: u64,
}

/// Outcome counts of channel slots that started with `n` non-empty nodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SlotTally {
    pub idle: u64,
    pub success: u64,
    pub collision: u64,
}

impl SlotTally {
    pub fn total(&self) -> u64 {
        self.idle + self.success + self.collision
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub engine: Engine,
    pub m: usize,
    pub seed: u64,
    pub horizon_s: f64,
    pub warmup_s: f64,
    pub nodes: Vec<NodeStats>,
    /// Indexed by the number of non-empty nodes, `0..=M` (SDAR only).
    pub slot_tally: Vec<SlotTally>,
    /// `attempt_hist[n][a]`: slots with `n` non-empty nodes and `a`
    /// simultaneous attempts (SDAR only).
    pub attempt_hist: Vec<Vec<u64>>,
    /// Queue length left behind by each successful departure.
    pub left_behind: Vec<u64>,
    /// Time with no packet anywhere in the cell (seconds).
    pub empty_time: f64,
    /// `(time s, packets in the cell)` on a regular grid over the whole run.
    pub backlog: Vec<(f64, u64)>,
    /// Slot-boundary visit counts of the joint queue vector, node 0 as the
    /// least significant digit base `K+1`. Only kept for small finite cells.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_visits: Option<Vec<u64>>,
}

impl SimStats {
    pub fn measured_s(&self) -> f64 {
        self.horizon_s - self.warmup_s
    }

    pub fn total_attempts(&self) -> u64 {
        self.nodes.iter().map(|n| n.attempts).sum()
    }

    pub fn total_collisions(&self) -> u64 {
        self.nodes.iter().map(|n| n.collisions).sum()
    }

    pub fn total_successes(&self) -> u64 {
        self.nodes.iter().map(|n| n.successes).sum()
    }
}

pub(crate) const NS: f64 = 1e9;

/// Bookkeeping shared by both engines.
pub(crate) struct Recorder {
    pub stats: SimStats,
    warmup_ns: u64,
    horizon_ns: u64,
    in_system: u64,
    empty_since: Option<u64>,
    sample_every_ns: u64,
    next_sample_ns: u64,
}

impl Recorder {
    pub fn new(engine: Engine, m: usize, seed: u64, horizon_ns: u64, warmup_ns: u64, samples: usize) -> Self {
        let sample_every_ns = (horizon_ns / samples.max(1) as u64).max(1);
        Self {
            stats: SimStats {
                engine,
                m,
                seed,
                horizon_s: horizon_ns as f64 / NS,
                warmup_s: warmup_ns as f64 / NS,
                nodes: vec![NodeStats::default(); m],
                slot_tally: Vec::new(),
                attempt_hist: Vec::new(),
                left_behind: Vec::new(),
                empty_time: 0.0,
                backlog: Vec::new(),
                state_visits: None,
            },
            warmup_ns,
            horizon_ns,
            in_system: 0,
            empty_since: Some(0),
            sample_every_ns,
            next_sample_ns: 0,
        }
    }

    pub fn in_window(&self, t: u64) -> bool {
        t >= self.warmup_ns && t < self.horizon_ns
    }

    /// Must be called with nondecreasing `t` before any state change at `t`.
    pub fn advance(&mut self, t: u64) {
        let t = t.min(self.horizon_ns);
        while self.next_sample_ns <= t && self.next_sample_ns < self.horizon_ns {
            self.stats
                .backlog
                .push((self.next_sample_ns as f64 / NS, self.in_system));
            self.next_sample_ns += self.sample_every_ns;
        }
    }

    fn overlap(&self, from: u64, to: u64) -> f64 {
        let lo = from.max(self.warmup_ns);
        let hi = to.min(self.horizon_ns);
        hi.saturating_sub(lo) as f64 / NS
    }

    /// A packet has physically entered the cell (possibly still pending).
    pub fn enter(&mut self, t: u64) {
        if let Some(since) = self.empty_since.take() {
            self.stats.empty_time += self.overlap(since, t);
        }
        self.in_system += 1;
    }

    /// A packet has left the cell (departed, dropped or blocked).
    pub fn leave(&mut self, t: u64) {
        self.in_system -= 1;
        if self.in_system == 0 {
            self.empty_since = Some(t);
        }
    }

    pub fn accepted(&mut self, node: usize, arrival: u64) {
        self.stats.nodes[node].lifetime_accepted += 1;
        if self.in_window(arrival) {
            self.stats.nodes[node].accepted += 1;
        }
    }

    pub fn blocked(&mut self, node: usize, arrival: u64, now: u64) {
        if self.in_window(arrival) {
            self.stats.nodes[node].blocked += 1;
        }
        self.leave(now);
    }

    pub fn attempt(&mut self, node: usize, t: u64, collided: bool) {
        if self.in_window(t) {
            let s = &mut self.stats.nodes[node];
            s.attempts += 1;
            if collided {
                s.collisions += 1;
            }
        }
    }

    pub fn departed(&mut self, node: usize, t: u64, arrival: u64, hol: u64) {
        self.stats.nodes[node].lifetime_departed += 1;
        if self.in_window(t) {
            let s = &mut self.stats.nodes[node];
            s.successes += 1;
            s.delay_sum += (t - arrival) as f64 / NS;
            s.service_sum += (t - hol) as f64 / NS;
        }
        self.leave(t);
    }

    pub fn dropped(&mut self, node: usize, t: u64) {
        self.stats.nodes[node].lifetime_dropped += 1;
        if self.in_window(t) {
            self.stats.nodes[node].dropped += 1;
        }
        self.leave(t);
    }

    pub fn left_behind(&mut self, t: u64, level: usize) {
        if self.in_window(t) {
            let h = &mut self.stats.left_behind;
            if h.len() <= level {
                h.resize(level + 1, 0);
            }
            h[level] += 1;
        }
    }

    pub fn finish(mut self, end: u64, final_queues: impl Iterator<Item = u64>) -> SimStats {
        self.advance(self.horizon_ns);
        if let Some(since) = self.empty_since {
            self.stats.empty_time += self.overlap(since, end.max(self.horizon_ns));
        }
        for (node, q) in self.stats.nodes.iter_mut().zip(final_queues) {
            node.final_queue = q;
        }
        self.stats
    }
}
