//! Reference CSMA/CA engine with binary exponential backoff.
//!
//! Every station runs its own MAC state machine on the shared medium:
//!
//! * a packet reaching the head of an idle station draws a backoff counter
//!   uniformly from `[0, CW_stage]`;
//! * counters run only while the medium is idle, one decrement per `σ` on
//!   the slot grid anchored where the idle period began, and the station
//!   transmits when its counter reaches zero (zero draws transmit at once);
//! * when any transmission starts, every other running counter freezes with
//!   its remaining whole slots;
//! * each station defers for its own DIFS after the medium clears, then its
//!   counter resumes.
//!
//! A successful exchange is the first frame, then SIFS and the ACK. A
//! collision is the first frame followed by an ACK-timeout wait. Phase
//! lengths come from the same channel-slot durations the analysis uses, so a
//! success occupies the medium for exactly `T_s` and a collision for `T_c`,
//! DIFS included. After a collision each participant moves up one stage;
//! once its retries exceed the limit it drops the packet and restarts at
//! stage 0. A packet that arrives to an empty station while the medium is
//! idle starts counting at the next slot boundary.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sdar_core::params::{validate_scenario, MacParams, Scenario};

use crate::common::{ArrivalSource, Station, Trace};
use crate::event::EventQueue;
use crate::rng::{substream, Purpose};
use crate::stats::{Engine, Recorder, SimStats};
use crate::{SimError, SimOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Arrival(usize),
    /// Backoff counter reached zero.
    Expire {
        node: usize,
        generation: u64,
    },
    /// First frame of the exchange is off the air.
    FrameEnd,
    /// ACK received; the exchange is complete.
    AckEnd,
    /// DIFS elapsed after the medium cleared.
    MediumIdle,
    /// A station's own DIFS deferral elapsed; its counter runs again.
    Resume {
        node: usize,
        generation: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Medium {
    Busy,
    Defer { until: u64 },
    Idle { since: u64 },
}

#[derive(Debug, Clone, Default)]
struct Mac {
    stage: u32,
    retries: u32,
    /// Remaining backoff slots while frozen.
    counter: Option<u64>,
    /// Expiry epoch while the counter runs.
    expires: Option<u64>,
    generation: u64,
}

struct Timing {
    sigma: u64,
    difs: u64,
    /// Start of transmission to end of the first frame.
    frame: u64,
    /// Start of transmission to the end of the ACK.
    exchange: u64,
}

pub fn run_dcf(s: &Scenario, opts: &SimOptions) -> Result<SimStats, SimError> {
    run_dcf_traced(s, opts, None)
}

pub fn run_dcf_traced(s: &Scenario, opts: &SimOptions, trace: Option<&mut dyn Write>) -> Result<SimStats, SimError> {
    let s = validate_scenario(s.clone())?.scenario;
    let (horizon, warmup) = opts.validate()?;
    let slots = s.slot_durations();
    let difs = ((s.phy.difs * 1e9).round() as u64).min(slots.t_c_ns);
    let timing = Timing {
        sigma: slots.sigma_ns,
        difs,
        frame: slots.t_c_ns - difs,
        exchange: slots.t_s_ns - difs,
    };
    let mut engine = Dcf {
        m: s.m,
        capacity: s.buffer.capacity(),
        mac_params: s.mac.clone(),
        max_stage: s.mac.doubling_stages(),
        timing,
        arrivals: ArrivalSource::new(&s.lambdas, opts.seed),
        backoff_rng: (0..s.m).map(|i| substream(opts.seed, Purpose::Backoff, i)).collect(),
        events: EventQueue::new(),
        stations: vec![Station::default(); s.m],
        macs: vec![Mac::default(); s.m],
        rec: Recorder::new(Engine::Dcf, s.m, opts.seed, horizon, warmup, opts.backlog_samples),
        trace: Trace::new(trace),
        medium: Medium::Idle { since: 0 },
        participants: Vec::with_capacity(s.m),
        backlogged: 0,
    };
    engine.run(horizon)?;
    let finals: Vec<u64> = engine.stations.iter().map(|s| s.len() as u64).collect();
    Ok(engine.rec.finish(horizon, finals.into_iter()))
}

struct Dcf<'t> {
    m: usize,
    capacity: Option<usize>,
    mac_params: MacParams,
    max_stage: u32,
    timing: Timing,
    arrivals: ArrivalSource,
    backoff_rng: Vec<ChaCha8Rng>,
    events: EventQueue<Kind>,
    stations: Vec<Station>,
    macs: Vec<Mac>,
    rec: Recorder,
    trace: Trace<'t>,
    medium: Medium,
    participants: Vec<usize>,
    backlogged: usize,
}

impl Dcf<'_> {
    fn draw(&mut self, node: usize, stage: u32) -> u64 {
        let cw = self.mac_params.window(stage);
        u64::from(self.backoff_rng[node].random_range(0..=cw))
    }

    fn start_timer(&mut self, node: usize, at: u64) {
        let mac = &mut self.macs[node];
        mac.generation += 1;
        mac.counter = None;
        mac.expires = Some(at);
        let generation = mac.generation;
        self.events.push(at, Kind::Expire { node, generation });
    }

    fn schedule_resume(&mut self, node: usize, at: u64) {
        let mac = &mut self.macs[node];
        mac.generation += 1;
        let generation = mac.generation;
        self.events.push(at, Kind::Resume { node, generation });
    }

    /// The medium has cleared: every station with a frozen counter defers
    /// for DIFS.
    fn medium_clears(&mut self, t: u64) {
        let until = t + self.timing.difs;
        self.medium = Medium::Defer { until };
        self.events.push(until, Kind::MediumIdle);
        for i in 0..self.m {
            if self.macs[i].counter.is_some() {
                self.schedule_resume(i, until);
            }
        }
    }

    fn run(&mut self, horizon: u64) -> Result<(), SimError> {
        for i in 0..self.m {
            if let Some(t) = self.arrivals.next_after(i, 0) {
                self.events.push(t, Kind::Arrival(i));
            }
        }
        while let Some(ev) = self.events.pop() {
            let t = ev.time;
            if t >= horizon {
                break;
            }
            self.rec.advance(t);
            match ev.kind {
                Kind::Arrival(i) => self.on_arrival(t, i)?,
                Kind::Expire { node, generation } => {
                    if self.macs[node].generation == generation && matches!(self.medium, Medium::Idle { .. }) {
                        self.on_transmit(t)?;
                    }
                }
                Kind::FrameEnd => self.on_frame_end(t)?,
                Kind::AckEnd => self.on_ack_end(t)?,
                Kind::MediumIdle => {
                    if self.medium == (Medium::Defer { until: t }) {
                        self.medium = Medium::Idle { since: t };
                    }
                }
                Kind::Resume { node, generation } => {
                    if self.macs[node].generation == generation {
                        let c = self.macs[node].counter.expect("resumed station has a frozen counter");
                        self.start_timer(node, t + c * self.timing.sigma);
                    }
                }
            }
        }
        Ok(())
    }

    fn on_arrival(&mut self, t: u64, i: usize) -> Result<(), SimError> {
        if let Some(next) = self.arrivals.next_after(i, t) {
            self.events.push(next, Kind::Arrival(i));
        }
        self.rec.enter(t);
        if !self.stations[i].has_room(self.capacity) {
            self.rec.blocked(i, t, t);
            return Ok(());
        }
        self.stations[i].queue.push_back(t);
        self.rec.accepted(i, t);
        if self.stations[i].len() == 1 {
            self.backlogged += 1;
            self.macs[i].stage = 0;
            self.macs[i].retries = 0;
            let c = self.draw(i, 0);
            self.macs[i].counter = Some(c);
            match self.medium {
                Medium::Busy => {}
                Medium::Defer { until } => self.schedule_resume(i, until),
                Medium::Idle { since } => {
                    let sigma = self.timing.sigma;
                    let join = since + ((t - since) / sigma + 1) * sigma;
                    self.start_timer(i, join + c * sigma);
                }
            }
        }
        self.trace.line(t, "arrival", Some(i), self.backlogged)?;
        Ok(())
    }

    fn on_transmit(&mut self, t: u64) -> Result<(), SimError> {
        self.participants.clear();
        let sigma = self.timing.sigma;
        for (i, mac) in self.macs.iter_mut().enumerate() {
            let Some(e) = mac.expires.take() else { continue };
            mac.generation += 1;
            if e == t {
                self.participants.push(i);
            } else {
                mac.counter = Some((e - t) / sigma);
            }
        }
        self.medium = Medium::Busy;
        let collided = self.participants.len() > 1;
        for k in 0..self.participants.len() {
            let i = self.participants[k];
            self.rec.attempt(i, t, collided);
            self.trace.line(t, "tx", Some(i), self.backlogged)?;
        }
        self.events.push(t + self.timing.frame, Kind::FrameEnd);
        Ok(())
    }

    fn on_frame_end(&mut self, t: u64) -> Result<(), SimError> {
        if self.participants.len() == 1 {
            let extra = self.timing.exchange - self.timing.frame;
            self.events.push(t + extra, Kind::AckEnd);
            return Ok(());
        }
        self.trace.line(t, "collision", None, self.backlogged)?;
        for k in 0..self.participants.len() {
            let i = self.participants[k];
            self.macs[i].retries += 1;
            if self.macs[i].retries > self.mac_params.retry_limit {
                self.stations[i].queue.pop_front();
                self.stations[i].last_departure = t;
                self.rec.dropped(i, t);
                self.trace.line(t, "drop", Some(i), self.backlogged)?;
                self.restart(i);
            } else {
                let stage = (self.macs[i].stage + 1).min(self.max_stage);
                self.macs[i].stage = stage;
                let c = self.draw(i, stage);
                self.macs[i].counter = Some(c);
            }
        }
        self.medium_clears(t);
        Ok(())
    }

    fn on_ack_end(&mut self, t: u64) -> Result<(), SimError> {
        let w = self.participants[0];
        let hol = self.stations[w].hol_since();
        let a = self.stations[w].queue.pop_front().expect("transmitter holds a packet");
        self.stations[w].last_departure = t;
        self.rec.departed(w, t, a, hol);
        self.rec.left_behind(t, self.stations[w].len());
        self.trace.line(t, "success", Some(w), self.backlogged)?;
        self.restart(w);
        self.medium_clears(t);
        Ok(())
    }

    /// Stage 0 again; a fresh counter if more packets wait.
    fn restart(&mut self, i: usize) {
        self.macs[i].stage = 0;
        self.macs[i].retries = 0;
        if self.stations[i].is_empty() {
            self.macs[i].counter = None;
            self.backlogged -= 1;
        } else {
            let c = self.draw(i, 0);
            self.macs[i].counter = Some(c);
        }
    }
}
