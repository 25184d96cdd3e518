//! Per-packet fuzzing strategies: no fuzzing, random field mutation with
//! optional replay, and the coverage-adaptive variant.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::coverage::Feedback;
use crate::error::{Error, Result};
use crate::mutation::{FieldKey, Patch, ReplayPayload, apply_patch, make_mutation};
use crate::packet::Packet;
use crate::probability::{IterationLedger, ProbabilityTable};
use crate::replay::ReplayBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FuzzerKind {
    NoFuzz,
    Random,
    Coverage,
}

impl fmt::Display for FuzzerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FuzzerKind::NoFuzz => "nofuzz",
            FuzzerKind::Random => "random",
            FuzzerKind::Coverage => "coverage",
        })
    }
}

impl FromStr for FuzzerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nofuzz" | "none" => Ok(FuzzerKind::NoFuzz),
            "random" => Ok(FuzzerKind::Random),
            "coverage" => Ok(FuzzerKind::Coverage),
            _ => Err(Error::Config(format!("unknown fuzzer mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzerConfig {
    pub kind: FuzzerKind,
    pub k: f64,
    pub beta: f64,
    pub replay_prob: f64,
    pub mut_prob: f64,
    pub feedback: Feedback,
    pub max_iterations: u64,
    pub rng_seed: u64,
}

impl FuzzerConfig {
    pub const DEFAULT_RANDOM_K: f64 = 0.5;
    pub const DEFAULT_COVERAGE_K: f64 = 3.0;
    pub const DEFAULT_BETA: f64 = 4.0;

    pub fn new(kind: FuzzerKind) -> Self {
        FuzzerConfig {
            kind,
            k: match kind {
                FuzzerKind::Coverage => Self::DEFAULT_COVERAGE_K,
                _ => Self::DEFAULT_RANDOM_K,
            },
            beta: Self::DEFAULT_BETA,
            replay_prob: 0.0,
            mut_prob: 1.0,
            feedback: Feedback::Grey,
            max_iterations: 2000,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("replay_prob", self.replay_prob)?;
        unit("mut_prob", self.mut_prob)?;
        if self.replay_prob + self.mut_prob > 1.0 + 1e-9 {
            return Err(Error::Config(format!(
                "replay_prob + mut_prob must not exceed 1, got {}",
                self.replay_prob + self.mut_prob
            )));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("k must be positive, got {}", self.k)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Fuzzer {
    config: FuzzerConfig,
    table: ProbabilityTable,
    buffer: ReplayBuffer,
    ledger: IterationLedger,
    packets_seen: u64,
    adaptive: bool,
}

impl Fuzzer {
    pub fn new(config: FuzzerConfig) -> Result<Self> {
        config.validate()?;
        let table = ProbabilityTable::new(config.k, config.beta, config.max_iterations)?;
        Ok(Fuzzer {
            table,
            buffer: ReplayBuffer::default(),
            ledger: IterationLedger::new(1),
            packets_seen: 0,
            adaptive: config.kind == FuzzerKind::Coverage,
            config,
        })
    }

    pub fn config(&self) -> &FuzzerConfig {
        &self.config
    }

    pub fn table(&self) -> &ProbabilityTable {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut ProbabilityTable {
        &mut self.table
    }

    pub fn replay_buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn ledger(&self) -> &IterationLedger {
        &self.ledger
    }

    /// Current 1-based iteration number.
    pub fn iteration(&self) -> u64 {
        self.ledger.iteration
    }

    /// Packets intercepted in the current iteration.
    pub fn packets_seen(&self) -> u64 {
        self.packets_seen
    }

    /// Disables probability updates; a coverage fuzzer then behaves exactly
    /// like a random one.
    pub fn set_adaptive(&mut self, adaptive: bool) {
        self.adaptive = adaptive && self.config.kind == FuzzerKind::Coverage;
    }

    /// Decides what to do with one intercepted packet and returns the packet
    /// to deliver plus the patch that produced it, if any.
    pub fn fuzz_packet<R: Rng + ?Sized>(&mut self, packet: &Packet, rng: &mut R) -> (Packet, Option<Patch>) {
        self.packets_seen += 1;
        if self.config.kind == FuzzerKind::NoFuzz {
            return (packet.clone(), None);
        }
        self.table.init_packet(packet);

        let r1: f64 = rng.random();
        let mut result = None;
        if r1 < self.config.replay_prob {
            if let Some(stored) = self.buffer.select(packet.channel, packet.layer, rng) {
                let mut patch = Patch::Replay(ReplayPayload {
                    channel: stored.channel,
                    bytes: stored.bytes.clone(),
                });
                let out = apply_patch(&mut patch, packet, rng);
                result = Some((out, Some(patch)));
            }
        }
        let result = match result {
            Some(r) => r,
            None if r1 < self.config.replay_prob + self.config.mut_prob => self.mutate(packet, rng),
            None => (packet.clone(), None),
        };
        self.buffer.insert(packet.clone());
        result
    }

    fn mutate<R: Rng + ?Sized>(&mut self, packet: &Packet, rng: &mut R) -> (Packet, Option<Patch>) {
        let mut mutations = Vec::new();
        for field in &packet.fields {
            let p = self.table.probability(packet, field).unwrap_or(0.0);
            if rng.random::<f64>() < p {
                mutations.push(make_mutation(&packet.packet_type, field, rng));
                self.ledger.record(FieldKey::of(packet, field), field.mask);
            }
        }
        if mutations.is_empty() {
            return (packet.clone(), None);
        }
        let mut patch = Patch::Mutation(mutations);
        let out = apply_patch(&mut patch, packet, rng);
        (out, Some(patch))
    }

    /// Closes the current iteration. The coverage fuzzer adapts its table
    /// using `new_units` from its feedback source; the others only reset
    /// their per-iteration bookkeeping.
    pub fn end_iteration(&mut self, new_units: u64) -> Result<()> {
        if self.adaptive {
            self.ledger.new_units = new_units;
            self.table.update(&self.ledger)?;
        }
        self.ledger = IterationLedger::new(self.ledger.iteration + 1);
        self.packets_seen = 0;
        Ok(())
    }

    pub fn needs_finish(&self) -> bool {
        self.ledger.iteration > self.config.max_iterations
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{Channel, Direction, Field, Layer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn packet(fields: usize) -> Packet {
        Packet {
            bytes: vec![0x5A; fields],
            layer: Layer::Rrc,
            direction: Direction::Downlink,
            channel: Channel::Dcch,
            packet_type: "Synthetic".into(),
            fields: (0..fields)
                .map(|i| Field::new(format!("f{i}"), 0, i, 1, 0xFF).unwrap())
                .collect(),
        }
    }

    fn force_all(fuzzer: &mut Fuzzer, pkt: &Packet, p: f64) {
        for field in &pkt.fields {
            fuzzer.table_mut().force(FieldKey::of(pkt, field), p);
        }
    }

    #[test]
    fn zero_probability_never_mutates() {
        let mut fuzzer = Fuzzer::new(FuzzerConfig::new(FuzzerKind::Random)).unwrap();
        let pkt = packet(10);
        fuzzer.table_mut().init_packet(&pkt);
        force_all(&mut fuzzer, &pkt, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let (out, patch) = fuzzer.fuzz_packet(&pkt, &mut rng);
            assert!(patch.is_none());
            assert_eq!(out, pkt);
        }
    }

    #[test]
    fn half_probability_selects_half_the_fields() {
        let mut fuzzer = Fuzzer::new(FuzzerConfig::new(FuzzerKind::Random)).unwrap();
        let pkt = packet(10);
        fuzzer.table_mut().init_packet(&pkt);
        force_all(&mut fuzzer, &pkt, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trials = 10_000;
        let total: usize = (0..trials)
            .map(|_| fuzzer.fuzz_packet(&pkt, &mut rng).1.map_or(0, |p| p.mutation_count()))
            .sum();
        let mean = total as f64 / trials as f64;
        assert!((mean - 5.0).abs() < 0.15, "{mean}");
    }

    #[test]
    fn replay_branch_returns_buffered_bytes() {
        let mut config = FuzzerConfig::new(FuzzerKind::Random);
        config.replay_prob = 1.0;
        config.mut_prob = 0.0;
        let mut fuzzer = Fuzzer::new(config).unwrap();
        let mut first = packet(4);
        first.bytes = vec![1, 2, 3, 4];
        let second = packet(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        fuzzer.table_mut().init_packet(&first);
        force_all(&mut fuzzer, &first, 0.0);
        // Empty buffer falls back to the mutation branch.
        let (out, _) = fuzzer.fuzz_packet(&first, &mut rng);
        assert_eq!(out.bytes, first.bytes);
        let (out, patch) = fuzzer.fuzz_packet(&second, &mut rng);
        assert_eq!(out.bytes, [1, 2, 3, 4]);
        assert!(matches!(patch, Some(Patch::Replay(_))));
    }

    #[test]
    fn nofuzz_passes_through_and_finishes_on_time() {
        let mut config = FuzzerConfig::new(FuzzerKind::NoFuzz);
        config.max_iterations = 2;
        let mut fuzzer = Fuzzer::new(config).unwrap();
        let pkt = packet(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(fuzzer.fuzz_packet(&pkt, &mut rng), (pkt.clone(), None));
        assert!(!fuzzer.needs_finish());
        fuzzer.end_iteration(0).unwrap();
        assert!(!fuzzer.needs_finish());
        fuzzer.end_iteration(0).unwrap();
        assert!(fuzzer.needs_finish());
    }

    #[test]
    fn random_table_is_constant() {
        let mut fuzzer = Fuzzer::new(FuzzerConfig::new(FuzzerKind::Random)).unwrap();
        let pkt = packet(5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        fuzzer.fuzz_packet(&pkt, &mut rng);
        let before = fuzzer.table().clone();
        fuzzer.end_iteration(10).unwrap();
        assert_eq!(fuzzer.table(), &before);
    }

    fn coverage_step(new_units: u64) -> (Fuzzer, ProbabilityTable, Vec<FieldKey>) {
        let mut fuzzer = Fuzzer::new(FuzzerConfig::new(FuzzerKind::Coverage)).unwrap();
        let pkt = packet(5);
        fuzzer.table_mut().init_packet(&pkt);
        force_all(&mut fuzzer, &pkt, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        while fuzzer.ledger().mutation_count == 0 {
            fuzzer.fuzz_packet(&pkt, &mut rng);
        }
        let keys: Vec<_> = fuzzer.ledger().mutated.keys().cloned().collect();
        let before = fuzzer.table().clone();
        fuzzer.end_iteration(new_units).unwrap();
        (fuzzer, before, keys)
    }

    #[test]
    fn coverage_moves_mutated_fields_with_feedback() {
        let (up, before, keys) = coverage_step(4);
        for key in &keys {
            assert!(up.table().get(key).unwrap() > before.get(key).unwrap());
        }
        let (down, before, keys) = coverage_step(0);
        for key in &keys {
            assert!(down.table().get(key).unwrap() < before.get(key).unwrap());
        }
        for (key, p) in down.table().iter() {
            if !keys.contains(key) {
                assert_eq!(before.get(key), Some(p));
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut config = FuzzerConfig::new(FuzzerKind::Random);
        config.replay_prob = 0.5;
        assert!(config.validate().is_err());
        config.mut_prob = 0.5;
        assert!(config.validate().is_ok());
        config.k = 0.0;
        assert!(config.validate().is_err());
    }
}
