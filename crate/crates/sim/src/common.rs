use std::collections::VecDeque;
use std::io::Write;

use rand::distr::Distribution;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;

use crate::rng::{substream, Purpose};

/// Independent Poisson arrival streams, one per node.
pub(crate) struct ArrivalSource {
    rngs: Vec<ChaCha8Rng>,
    dists: Vec<Option<Exp<f64>>>,
}

impl ArrivalSource {
    pub fn new(lambdas: &[f64], seed: u64) -> Self {
        Self {
            rngs: (0..lambdas.len())
                .map(|i| substream(seed, Purpose::Arrivals, i))
                .collect(),
            dists: lambdas
                .iter()
                .map(|&l| if l > 0.0 { Exp::new(l).ok() } else { None })
                .collect(),
        }
    }

    /// Next arrival epoch of `node` after `t`, or `None` for a silent node.
    pub fn next_after(&mut self, node: usize, t: u64) -> Option<u64> {
        let d = self.dists[node].as_ref()?;
        let gap = d.sample(&mut self.rngs[node]);
        Some(t + (gap * 1e9).round() as u64)
    }
}

/// A node's FIFO of arrival stamps plus what is needed for service times.
#[derive(Debug, Clone, Default)]
pub(crate) struct Station {
    pub queue: VecDeque<u64>,
    pub last_departure: u64,
}

impl Station {
    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn has_room(&self, capacity: Option<usize>) -> bool {
        capacity.is_none_or(|k| self.queue.len() < k)
    }

    /// Time the head packet reached the head of the line.
    pub fn hol_since(&self) -> u64 {
        self.queue.front().map_or(0, |&a| a.max(self.last_departure))
    }
}

pub(crate) struct Trace<'a> {
    out: Option<&'a mut dyn Write>,
}

impl<'a> Trace<'a> {
    pub fn new(out: Option<&'a mut dyn Write>) -> Self {
        Self { out }
    }

    /// One line per event: `time_ns kind node n_nonempty`; `-` for no node.
    pub fn line(&mut self, t: u64, kind: &str, node: Option<usize>, n: usize) -> std::io::Result<()> {
        if let Some(w) = self.out.as_mut() {
            match node {
                Some(i) => writeln!(w, "{t} {kind} {i} {n}"),
                None => writeln!(w, "{t} {kind} - {n}"),
            }
        } else {
            Ok(())
        }
    }
}
