//! Minimal discrete-event queue: a binary heap keyed by `(time, seq)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<K> {
    pub time: u64,
    pub seq: u64,
    pub kind: K,
}

impl<K: Eq> Ord for Event<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

impl<K: Eq> PartialOrd for Event<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Events come out in nondecreasing time; equal times pop in insertion
/// order.
#[derive(Debug, Clone)]
pub struct EventQueue<K> {
    heap: BinaryHeap<Event<K>>,
    next_seq: u64,
}

impl<K: Eq> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: Eq> EventQueue<K> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
        }
    }

    pub fn push(&mut self, time: u64, kind: K) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
        seq
    }

    pub fn pop(&mut self) -> Option<Event<K>> {
        self.heap.pop()
    }

    pub fn peek(&self) -> Option<&Event<K>> {
        self.heap.peek()
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
