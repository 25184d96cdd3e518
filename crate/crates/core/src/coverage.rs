//! Edge hit counting, AFL-style bucketing and cumulative coverage maps.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::packet::Direction;
use crate::seed::Component;

/// Hit counts of one iteration, keyed by edge id.
pub type EdgeHits = BTreeMap<u64, u32>;

pub const BUCKETS: u8 = 8;

/// Maps a hit count to one of the 8 buckets
/// `1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+`.
pub fn bucketize(hits: u32) -> Result<u8> {
    Ok(match hits {
        0 => return Err(Error::Domain("an edge with zero hits has no bucket".into())),
        1 => 0,
        2 => 1,
        3 => 2,
        4..=7 => 3,
        8..=15 => 4,
        16..=31 => 5,
        32..=127 => 6,
        _ => 7,
    })
}

/// Set of buckets seen for one edge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BucketSet(u8);

impl BucketSet {
    /// Returns true when `bucket` was not yet present.
    pub fn insert(&mut self, bucket: u8) -> bool {
        assert!(bucket < BUCKETS, "bucket {bucket} out of range");
        let bit = 1u8 << bucket;
        let fresh = self.0 & bit == 0;
        self.0 |= bit;
        fresh
    }

    pub fn contains(&self, bucket: u8) -> bool {
        bucket < BUCKETS && self.0 & (1 << bucket) != 0
    }

    pub fn len(&self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }
}

/// Cumulative `(edge, bucket)` pairs seen across iterations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageMap {
    edges: BTreeMap<u64, BucketSet>,
    total: u64,
}

impl CoverageMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds one iteration in and returns the number of new pairs.
    pub fn merge(&mut self, hits: &EdgeHits) -> u64 {
        let mut new_units = 0;
        for (&edge, &count) in hits {
            let Ok(bucket) = bucketize(count) else {
                continue;
            };
            if self.edges.entry(edge).or_default().insert(bucket) {
                new_units += 1;
            }
        }
        self.total += new_units;
        new_units
    }

    pub fn total_units(&self) -> u64 {
        self.total
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn buckets(&self, edge: u64) -> Option<BucketSet> {
        self.edges.get(&edge).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feedback {
    Grey,
    Black,
}

impl fmt::Display for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Feedback::Grey => "grey",
            Feedback::Black => "black",
        })
    }
}

impl FromStr for Feedback {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grey" | "gray" => Ok(Feedback::Grey),
            "black" => Ok(Feedback::Black),
            _ => Err(Error::Config(format!("unknown feedback mode {s:?}"))),
        }
    }
}

/// Component under test when fuzzing `direction`: the receiver of the
/// fuzzed packets.
pub fn dut(direction: Direction) -> Component {
    match direction {
        Direction::Downlink => Component::Ue,
        Direction::Uplink => Component::Enb,
    }
}

/// Component generating the benign packets that get fuzzed.
pub fn peer(direction: Direction) -> Component {
    match dut(direction) {
        Component::Ue => Component::Enb,
        Component::Enb => Component::Ue,
    }
}

pub fn feedback_source(mode: Feedback, direction: Direction) -> Component {
    match mode {
        Feedback::Grey => dut(direction),
        Feedback::Black => peer(direction),
    }
}
