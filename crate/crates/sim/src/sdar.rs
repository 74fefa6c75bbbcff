//! State-dependent attempt-rate contention.
//!
//! Time is cut into channel slots: idle (`σ`), success (`T_s + σ`) or
//! collision (`T_c + σ`). At a slot boundary with `n` non-empty nodes, each
//! of them draws a geometric backoff (support `1, 2, …`, success probability
//! `β_n`); the smallest draw transmits, equal smallest draws collide. The
//! slots before the transmission are idle, and by memorylessness this is the
//! same as every node attempting independently with probability `β_n` in
//! every slot.
//!
//! Arrivals that find their node non-empty during an idle stretch join the
//! queue at once. An arrival to an empty node changes `n`; it is held until
//! the end of the idle slot it landed in, where the pending transmission is
//! cancelled and fresh backoffs are drawn. Arrivals during an activity are
//! held until the activity (plus one `σ`) ends. Held arrivals are admitted
//! at the boundary after the slot's departure, so a queue moves to
//! `min(K, Q - D + A)`.
//!
//! Slots are half-open: an arrival exactly at a transmission epoch belongs
//! to the transmission slot and does not cancel it.

use std::io::Write;

use rand::distr::Distribution;
use rand_chacha::ChaCha8Rng;
use rand_distr::Geometric;
use sdar_core::params::{validate_scenario, Scenario};
use sdar_core::saturation::AttemptProfile;

use crate::common::{ArrivalSource, Station, Trace};
use crate::event::EventQueue;
use crate::rng::{substream, Purpose};
use crate::stats::{Engine, Recorder, SimStats, SlotTally};
use crate::{SimError, SimOptions, STATE_VISIT_LIMIT};

pub fn run_sdar(s: &Scenario, opts: &SimOptions) -> Result<SimStats, SimError> {
    run_sdar_traced(s, opts, None)
}

pub fn run_sdar_traced(s: &Scenario, opts: &SimOptions, trace: Option<&mut dyn Write>) -> Result<SimStats, SimError> {
    let s = validate_scenario(s.clone())?.scenario;
    let (horizon, warmup) = opts.validate()?;
    let profile = AttemptProfile::compute(s.m, &s.mac, opts.attempt_model)?;
    let mut engine = Sdar::new(&s, opts, &profile, horizon, warmup, Trace::new(trace));
    engine.run()?;
    Ok(engine.finish())
}

struct Sdar<'t> {
    m: usize,
    sigma: u64,
    t_s: u64,
    t_c: u64,
    horizon: u64,
    warmup: u64,
    capacity: Option<usize>,
    geometric: Vec<Geometric>,
    backoff_rng: Vec<ChaCha8Rng>,
    arrivals: ArrivalSource,
    next_arrival: EventQueue<usize>,
    stations: Vec<Station>,
    pending: Vec<Vec<u64>>,
    /// Nodes with something in `pending`.
    held: Vec<usize>,
    /// Non-empty nodes, unordered, with each node's position in the list.
    active: Vec<usize>,
    active_pos: Vec<usize>,
    rec: Recorder,
    trace: Trace<'t>,
    /// Start of the next slot not yet tallied; always on the slot grid.
    slot_cursor: u64,
    visit_radix: Option<usize>,
}

impl<'t> Sdar<'t> {
    fn new(
        s: &Scenario,
        opts: &SimOptions,
        profile: &AttemptProfile,
        horizon: u64,
        warmup: u64,
        trace: Trace<'t>,
    ) -> Self {
        let m = s.m;
        let slots = s.slot_durations();
        let mut arrivals = ArrivalSource::new(&s.lambdas, opts.seed);
        let mut next_arrival = EventQueue::new();
        for i in 0..m {
            if let Some(t) = arrivals.next_after(i, 0) {
                next_arrival.push(t, i);
            }
        }
        let mut rec = Recorder::new(Engine::Sdar, m, opts.seed, horizon, warmup, opts.backlog_samples);
        rec.stats.slot_tally = vec![SlotTally::default(); m + 1];
        rec.stats.attempt_hist = (0..=m).map(|n| vec![0; n + 1]).collect();
        let visit_radix = s.buffer.capacity().filter(|&k| {
            (k as u128 + 1)
                .checked_pow(m as u32)
                .is_some_and(|c| c <= STATE_VISIT_LIMIT as u128)
        });
        if let Some(k) = visit_radix {
            rec.stats.state_visits = Some(vec![0; (k + 1).pow(m as u32)]);
        }
        Self {
            m,
            sigma: slots.sigma_ns,
            t_s: slots.t_s_ns,
            t_c: slots.t_c_ns,
            horizon,
            warmup,
            capacity: s.buffer.capacity(),
            geometric: (1..=m)
                .map(|n| Geometric::new(profile.beta(n)).expect("attempt probability lies in (0, 1]"))
                .collect(),
            backoff_rng: (0..m).map(|i| substream(opts.seed, Purpose::Backoff, i)).collect(),
            arrivals,
            next_arrival,
            stations: vec![Station::default(); m],
            pending: vec![Vec::new(); m],
            held: Vec::with_capacity(m),
            active: Vec::with_capacity(m),
            active_pos: vec![usize::MAX; m],
            rec,
            trace,
            slot_cursor: 0,
            visit_radix,
        }
    }

    fn nonempty(&self) -> usize {
        self.active.len()
    }

    fn enqueue(&mut self, i: usize, arrival: u64) {
        if self.stations[i].is_empty() {
            self.active_pos[i] = self.active.len();
            self.active.push(i);
        }
        self.stations[i].queue.push_back(arrival);
    }

    fn dequeue(&mut self, i: usize) -> u64 {
        let a = self.stations[i]
            .queue
            .pop_front()
            .expect("dequeue from a non-empty node");
        if self.stations[i].is_empty() {
            let pos = self.active_pos[i];
            self.active.swap_remove(pos);
            if let Some(&moved) = self.active.get(pos) {
                self.active_pos[moved] = pos;
            }
            self.active_pos[i] = usize::MAX;
        }
        a
    }

    fn visit(&mut self, t: u64) {
        if let Some(k) = self.visit_radix {
            if self.rec.in_window(t) {
                let idx = self.stations.iter().rev().fold(0, |acc, s| acc * (k + 1) + s.len());
                if let Some(v) = self.rec.stats.state_visits.as_mut() {
                    v[idx] += 1;
                }
            }
        }
    }

    /// Tallies every idle slot starting in `[slot_cursor, until)`.
    fn idle_slots_until(&mut self, until: u64, n: usize) {
        let until = until.min(self.horizon);
        if self.slot_cursor >= until {
            return;
        }
        let count = (until - self.slot_cursor).div_ceil(self.sigma);
        if self.visit_radix.is_some() {
            for k in 0..count {
                let t = self.slot_cursor + k * self.sigma;
                if self.rec.in_window(t) {
                    self.rec.stats.slot_tally[n].idle += 1;
                    self.rec.stats.attempt_hist[n][0] += 1;
                    self.visit(t);
                }
            }
        } else {
            let counted = self.count_in_window(self.slot_cursor, count);
            self.rec.stats.slot_tally[n].idle += counted;
            self.rec.stats.attempt_hist[n][0] += counted;
        }
        self.slot_cursor += count * self.sigma;
    }

    /// How many of the `count` grid slots starting at `from` start inside
    /// the measurement window.
    fn count_in_window(&self, from: u64, count: u64) -> u64 {
        let lo = from.max(self.warmup);
        let hi = (from + count * self.sigma).min(self.horizon);
        if hi <= lo {
            return 0;
        }
        (hi - from).div_ceil(self.sigma) - (lo - from).div_ceil(self.sigma)
    }

    fn pop_arrival(&mut self) -> (u64, usize) {
        let ev = self.next_arrival.pop().expect("caller checked a pending arrival");
        if let Some(next) = self.arrivals.next_after(ev.kind, ev.time) {
            self.next_arrival.push(next, ev.kind);
        }
        self.rec.advance(ev.time);
        self.rec.enter(ev.time);
        (ev.time, ev.kind)
    }

    /// Moves every arrival before `until` into the pending lists.
    fn hold_arrivals_before(&mut self, until: u64, n: usize) -> Result<(), SimError> {
        while self.next_arrival.peek_time().is_some_and(|t| t < until) {
            let (t, i) = self.pop_arrival();
            if self.pending[i].is_empty() {
                self.held.push(i);
            }
            self.pending[i].push(t);
            self.trace.line(t, "arrival", Some(i), n)?;
        }
        Ok(())
    }

    fn admit_pending(&mut self, b: u64) {
        for h in 0..self.held.len() {
            let i = self.held[h];
            for k in 0..self.pending[i].len() {
                let a = self.pending[i][k];
                if self.stations[i].has_room(self.capacity) {
                    self.enqueue(i, a);
                    self.rec.accepted(i, a);
                } else {
                    self.rec.blocked(i, a, b);
                }
            }
            self.pending[i].clear();
        }
        self.held.clear();
    }

    fn run(&mut self) -> Result<(), SimError> {
        let sigma = self.sigma;
        let mut b = 0u64;
        let mut winners: Vec<usize> = Vec::with_capacity(self.m);
        let mut departed: Option<usize> = None;
        while b < self.horizon {
            self.rec.advance(b);
            self.admit_pending(b);
            if let Some(w) = departed.take() {
                let level = self.stations[w].len();
                self.rec.left_behind(b - sigma, level);
            }
            let n = self.nonempty();
            self.trace.line(b, "boundary", None, n)?;

            if n == 0 {
                match self.next_arrival.peek_time() {
                    Some(ta) if ta < self.horizon => {
                        let g = b + ((ta - b) / sigma + 1) * sigma;
                        self.idle_slots_until(g, 0);
                        self.hold_arrivals_before(g, 0)?;
                        b = g;
                    }
                    _ => {
                        self.idle_slots_until(self.horizon, 0);
                        b = self.horizon;
                    }
                }
                continue;
            }

            // Backoff draws for the non-empty nodes.
            winners.clear();
            let mut min = u64::MAX;
            for k in 0..self.active.len() {
                let i = self.active[k];
                let draw = self.geometric[n - 1].sample(&mut self.backoff_rng[i]).saturating_add(1);
                if draw < min {
                    min = draw;
                    winners.clear();
                    winners.push(i);
                } else if draw == min {
                    winners.push(i);
                }
            }
            let tx_start = b.saturating_add((min - 1).saturating_mul(sigma));

            // Idle stretch before the transmission.
            let mut cancel_at = None;
            while let Some(ta) = self.next_arrival.peek_time() {
                if ta >= tx_start || ta >= self.horizon {
                    break;
                }
                if self.stations[self.next_arrival.peek().unwrap().kind].is_empty() {
                    let g = b + ((ta - b) / sigma + 1) * sigma;
                    cancel_at = Some(g);
                    break;
                }
                let (t, i) = self.pop_arrival();
                // Slots starting at or before `t` saw the old queue vector.
                self.idle_slots_until(t + 1, n);
                if self.stations[i].has_room(self.capacity) {
                    self.enqueue(i, t);
                    self.rec.accepted(i, t);
                } else {
                    self.rec.blocked(i, t, t);
                }
                self.trace.line(t, "arrival", Some(i), n)?;
            }
            if let Some(g) = cancel_at {
                self.idle_slots_until(g, n);
                self.hold_arrivals_before(g, n)?;
                self.trace.line(g, "cancel", None, n)?;
                b = g;
                continue;
            }
            if tx_start >= self.horizon {
                self.idle_slots_until(self.horizon, n);
                b = self.horizon;
                continue;
            }

            // Transmission slot.
            self.idle_slots_until(tx_start, n);
            self.rec.advance(tx_start);
            let success = winners.len() == 1;
            if self.rec.in_window(tx_start) {
                let tally = &mut self.rec.stats.slot_tally[n];
                if success {
                    tally.success += 1;
                } else {
                    tally.collision += 1;
                }
                self.rec.stats.attempt_hist[n][winners.len()] += 1;
                self.visit(tx_start);
            }
            for &w in &winners {
                self.rec.attempt(w, tx_start, !success);
                self.trace.line(tx_start, "tx", Some(w), n)?;
            }
            let end = tx_start + if success { self.t_s } else { self.t_c };
            self.hold_arrivals_before(end, n)?;
            self.rec.advance(end);
            if success {
                let w = winners[0];
                let hol = self.stations[w].hol_since();
                let a = self.dequeue(w);
                self.stations[w].last_departure = end;
                self.rec.departed(w, end, a, hol);
                departed = Some(w);
                self.trace.line(end, "success", Some(w), n)?;
            } else {
                self.trace.line(end, "collision", None, n)?;
            }
            let next = end + sigma;
            self.hold_arrivals_before(next, n)?;
            b = next;
            self.slot_cursor = next;
        }
        Ok(())
    }

    fn finish(self) -> SimStats {
        let finals = self
            .stations
            .iter()
            .zip(&self.pending)
            .map(|(s, p)| (s.len() + p.len()) as u64)
            .collect::<Vec<_>>();
        self.rec.finish(self.horizon, finals.into_iter())
    }
}
