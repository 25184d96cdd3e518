//! Edge instrumentation for the simulated machines.
//!
//! Every instrumented point is a 64-bit site id; an edge is the pair
//! (previous site, current site) folded into one id. The helpers below
//! cover the recurring shapes of guarded code: boolean checks, range
//! splits, lookup tables, counted loops and flag walks.

use crate::coverage::EdgeHits;

/// FNV-1a over a site label, usable in constants.
pub const fn site_id(label: &str) -> u64 {
    let bytes = label.as_bytes();
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        hash ^= bytes[i] as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    hash
}

/// Compile-time site id for a label.
macro_rules! site {
    ($label:literal) => {{
        const ID: u64 = $crate::sim::trace::site_id($label);
        ID
    }};
}
pub(crate) use site;

const ENTRY: u64 = 0x5eed_0000_0000_0001;

/// Derives the id of the `arm`-th outgoing branch of `site`.
pub fn arm(site: u64, arm: u64) -> u64 {
    let mut x = site ^ arm.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Debug, Clone)]
pub struct Tracer {
    hits: EdgeHits,
    prev: u64,
}

impl Default for Tracer {
    fn default() -> Self {
        Tracer {
            hits: EdgeHits::new(),
            prev: ENTRY,
        }
    }
}

impl Tracer {
    pub fn hit(&mut self, site: u64) {
        let edge = self.prev.rotate_left(1) ^ site;
        let count = self.hits.entry(edge).or_insert(0);
        *count = count.saturating_add(1);
        self.prev = site;
    }

    /// Records which way a condition went and returns it.
    pub fn check(&mut self, site: u64, cond: bool) -> bool {
        self.hit(arm(site, cond as u64));
        cond
    }

    /// Records the region of `value` among ascending `bounds`: region `r`
    /// holds values with exactly `r` bounds at or below them.
    pub fn split(&mut self, site: u64, value: u64, bounds: &[u64]) -> usize {
        let region = bounds.partition_point(|&b| b <= value);
        self.hit(arm(site, region as u64 + 2));
        region
    }

    /// Looks `value` up in a table of known values; unknown values take a
    /// shared default arm.
    pub fn lookup(&mut self, site: u64, value: u64, known: &[u64]) -> Option<usize> {
        let position = known.iter().position(|&k| k == value);
        self.hit(arm(site, position.map_or(1, |p| p as u64 + 2)));
        position
    }

    /// Records which of `bins` equal-width ranges of a `bits`-wide value
    /// `value` falls into, and returns it.
    pub fn bin(&mut self, site: u64, value: u64, bits: u32, bins: u64) -> u64 {
        let bin = ((value as u128 * bins as u128) >> bits) as u64;
        let bin = bin.min(bins - 1);
        self.hit(arm(site, bin + 2));
        bin
    }

    /// A loop body executed `n` times.
    pub fn repeat(&mut self, site: u64, n: u64) {
        for _ in 0..n {
            self.hit(site);
        }
        self.hit(arm(site, 1));
    }

    /// Walks the set bits of the low `width` bits of `value`.
    pub fn flags(&mut self, site: u64, value: u64, width: u32) {
        for bit in 0..width {
            if value >> bit & 1 == 1 {
                self.hit(arm(site, bit as u64 + 2));
            }
        }
        self.hit(arm(site, 1));
    }

    pub fn hits(&self) -> &EdgeHits {
        &self.hits
    }

    pub fn take(&mut self) -> EdgeHits {
        self.prev = ENTRY;
        std::mem::take(&mut self.hits)
    }

    pub fn clear(&mut self) {
        self.hits.clear();
        self.prev = ENTRY;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn site_ids_are_fnv1a() {
        assert_eq!(site_id(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(site_id("a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(site!("a"), site_id("a"));
    }

    #[test]
    fn edges_depend_on_predecessor() {
        let mut a = Tracer::default();
        a.hit(1);
        a.hit(3);
        let mut b = Tracer::default();
        b.hit(2);
        b.hit(3);
        assert_ne!(a.hits(), b.hits());
    }

    #[test]
    fn loops_accumulate_counts() {
        let mut t = Tracer::default();
        t.repeat(7, 10);
        assert!(t.hits().values().any(|&c| c == 9));
    }

    #[test]
    fn split_regions() {
        let mut t = Tracer::default();
        assert_eq!(t.split(1, 0, &[1, 5]), 0);
        assert_eq!(t.split(1, 1, &[1, 5]), 1);
        assert_eq!(t.split(1, 4, &[1, 5]), 1);
        assert_eq!(t.split(1, 99, &[1, 5]), 2);
    }

    #[test]
    fn bins_are_equal_width() {
        let mut t = Tracer::default();
        assert_eq!(t.bin(1, 0, 8, 16), 0);
        assert_eq!(t.bin(1, 15, 8, 16), 0);
        assert_eq!(t.bin(1, 16, 8, 16), 1);
        assert_eq!(t.bin(1, 255, 8, 16), 15);
        assert_eq!(t.bin(1, u64::MAX, 64, 4), 3);
    }

    #[test]
    fn clear_resets_everything() {
        let mut t = Tracer::default();
        t.hit(5);
        t.clear();
        assert!(t.hits().is_empty());
        let mut fresh = Tracer::default();
        t.hit(9);
        fresh.hit(9);
        assert_eq!(t.hits(), fresh.hits());
    }
}
