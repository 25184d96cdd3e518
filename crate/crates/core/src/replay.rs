//! Recency-weighted store of previously intercepted packets.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;

use crate::packet::{Channel, Layer, Packet};

pub const DEFAULT_CAPACITY: usize = 64;
/// Weight ratio between consecutive entries, newest first.
pub const RECENCY_RATIO: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: BTreeMap<(Channel, Layer), VecDeque<Packet>>,
}

impl Default for ReplayBuffer {
    fn default() -> Self {
        ReplayBuffer::new(DEFAULT_CAPACITY)
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        ReplayBuffer {
            capacity,
            entries: BTreeMap::new(),
        }
    }

    /// Stores a packet under its `(channel, layer)`, evicting the oldest
    /// entry when the bucket is full.
    pub fn insert(&mut self, packet: Packet) {
        let bucket = self
            .entries
            .entry((packet.channel, packet.layer))
            .or_default();
        if bucket.len() == self.capacity {
            bucket.pop_front();
        }
        bucket.push_back(packet);
    }

    pub fn len(&self, channel: Channel, layer: Layer) -> usize {
        self.entries.get(&(channel, layer)).map_or(0, VecDeque::len)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(VecDeque::is_empty)
    }

    pub fn entries(&self, channel: Channel, layer: Layer) -> impl Iterator<Item = &Packet> {
        self.entries.get(&(channel, layer)).into_iter().flatten()
    }

    /// Picks entry `j` of `n` (0 = oldest) with probability proportional to
    /// `0.5^(n-1-j)`. `None` when the bucket is empty.
    pub fn select<R: Rng + ?Sized>(
        &self,
        channel: Channel,
        layer: Layer,
        rng: &mut R,
    ) -> Option<&Packet> {
        let bucket = self.entries.get(&(channel, layer))?;
        let n = bucket.len();
        if n == 0 {
            return None;
        }
        let total = (1.0 - RECENCY_RATIO.powi(n as i32)) / (1.0 - RECENCY_RATIO);
        let mut draw = rng.random::<f64>() * total;
        let mut weight = 1.0;
        for packet in bucket.iter().rev() {
            if draw < weight {
                return Some(packet);
            }
            draw -= weight;
            weight *= RECENCY_RATIO;
        }
        bucket.front()
    }
}
