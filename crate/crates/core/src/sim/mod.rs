//! In-process simulation of the attach procedure between a UE machine and a
//! network (eNB plus core) machine, with a blocking interception point on
//! one direction.
//!
//! Every packet travels MAC-framed. With RRC-layer interception the fuzzer
//! sees the payload before framing; with MAC-layer interception it sees the
//! whole frame. Exactly one packet is in flight at any time.

pub mod enb;
pub mod protocol;
pub mod trace;
pub mod ue;

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coverage::EdgeHits;
use crate::dissector::{dissect, mac_frame};
use crate::error::{Error, Result};
use crate::fuzzer::Fuzzer;
use crate::mutation::{apply_patch, Patch, ReplayPayload};
use crate::packet::{Direction, Layer, Packet};
use crate::seed::{BugEffect, Component, RecordedOutcome, Seed, SeedEntry};

pub use enb::Enb;
pub use protocol::{Outgoing, Reaction};
pub use ue::Ue;

/// Packets per iteration after which the run counts as hung.
pub const PACKET_BUDGET: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub direction: Direction,
    pub layer: Layer,
    pub packet_budget: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            direction: Direction::Downlink,
            layer: Layer::Rrc,
            packet_budget: PACKET_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    Complete,
    Rejected(Component),
    /// Nothing left in flight: a packet was dropped without an answer.
    Stalled,
    Bug,
    /// The packet budget ran out.
    Watchdog,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BugHit {
    pub id: String,
    pub component: Component,
    pub effect: BugEffect,
}

#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub packets_exchanged: u32,
    pub intercepted: u32,
    pub mutated_fields: u64,
    pub terminal: Terminal,
    pub bug: Option<BugHit>,
    pub hang: bool,
    pub ue_hits: EdgeHits,
    pub enb_hits: EdgeHits,
    pub seed: Seed,
    /// Delivered frames, dissected at the MAC layer.
    pub trace: Vec<Packet>,
    /// Seed ordinals that never matched an intercepted packet.
    pub unused_entries: Vec<u32>,
}

impl IterationOutcome {
    pub fn hits(&self, component: Component) -> &EdgeHits {
        match component {
            Component::Ue => &self.ue_hits,
            Component::Enb => &self.enb_hits,
        }
    }

    pub fn crash_id(&self) -> Option<&str> {
        self.bug.as_ref().map(|b| b.id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReproMode {
    /// Reapply stored patches to freshly generated packets.
    Full,
    /// Deliver the stored post-fuzz bytes in place of patched packets.
    ReplayAll,
}

impl fmt::Display for ReproMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReproMode::Full => "full",
            ReproMode::ReplayAll => "replay-all",
        })
    }
}

impl FromStr for ReproMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "full" => Ok(ReproMode::Full),
            "replay-all" => Ok(ReproMode::ReplayAll),
            _ => Err(Error::Config(format!("unknown reproduction mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Harness {
    config: SimConfig,
    ue: Ue,
    enb: Enb,
}

impl Harness {
    pub fn new(config: SimConfig) -> Self {
        Harness {
            config,
            ue: Ue::default(),
            enb: Enb::default(),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn ue(&self) -> &Ue {
        &self.ue
    }

    pub fn enb(&self) -> &Enb {
        &self.enb
    }

    pub fn enb_mut(&mut self) -> &mut Enb {
        &mut self.enb
    }

    /// Returns both machines to their idle state and clears edge counts.
    pub fn reset(&mut self) {
        self.ue.reset();
        self.enb.reset();
    }

    /// Runs one attach attempt. `intercept` receives each packet travelling
    /// in the configured direction with its 0-based ordinal and returns the
    /// packet to deliver and the patch that produced it.
    pub fn run_iteration<F>(&mut self, rng_seed: u64, mut intercept: F) -> IterationOutcome
    where
        F: FnMut(u32, &Packet) -> (Packet, Option<Patch>),
    {
        self.reset();
        let config = self.config;
        let mut seed = Seed::new(rng_seed);
        seed.direction = Some(config.direction);
        seed.layer = Some(config.layer);
        let mut trace = Vec::new();
        let mut packets = 0;
        let mut intercepted = 0;
        let mut mutated_fields = 0;
        let mut bug = None;

        let mut in_flight = Some((Component::Ue, self.ue.trigger()));
        let terminal = loop {
            let Some((sender, out)) = in_flight.take() else {
                break Terminal::Stalled;
            };
            if packets == config.packet_budget {
                break Terminal::Watchdog;
            }
            packets += 1;
            let direction = match sender {
                Component::Ue => Direction::Uplink,
                Component::Enb => Direction::Downlink,
            };
            let frame = if direction == config.direction {
                let ordinal = intercepted;
                intercepted += 1;
                let packet = match config.layer {
                    Layer::Rrc => dissect(&out.payload, out.channel, direction, Layer::Rrc),
                    Layer::Mac => dissect(&mac_frame(&out.payload, out.channel), out.channel, direction, Layer::Mac),
                };
                let (fuzzed, patch) = intercept(ordinal, &packet);
                if let Some(patch) = patch {
                    mutated_fields += patch.mutation_count() as u64;
                    let delivered = matches!(patch, Patch::Mutation(_)).then(|| ReplayPayload {
                        channel: fuzzed.channel,
                        bytes: fuzzed.bytes.clone(),
                    });
                    seed.entries.push(SeedEntry {
                        ordinal,
                        patch,
                        delivered,
                    });
                }
                match config.layer {
                    Layer::Rrc => mac_frame(&fuzzed.bytes, fuzzed.channel),
                    Layer::Mac => fuzzed.bytes,
                }
            } else {
                mac_frame(&out.payload, out.channel)
            };
            trace.push(dissect(&frame, out.channel, direction, Layer::Mac));

            let receiver = match sender {
                Component::Ue => Component::Enb,
                Component::Enb => Component::Ue,
            };
            let reaction = match receiver {
                Component::Ue => self.ue.receive(&frame),
                Component::Enb => self.enb.receive(&frame),
            };
            match reaction {
                Reaction::Send(next) => in_flight = Some((receiver, next)),
                Reaction::Ignore => {}
                Reaction::Complete => break Terminal::Complete,
                Reaction::Reject => break Terminal::Rejected(receiver),
                Reaction::Crash(id) | Reaction::Hang(id) => {
                    let effect = if matches!(reaction, Reaction::Crash(_)) {
                        BugEffect::Crash
                    } else {
                        BugEffect::Hang
                    };
                    bug = Some(BugHit {
                        id: id.to_string(),
                        component: receiver,
                        effect,
                    });
                    break Terminal::Bug;
                }
            }
        };

        if let Some(b) = &bug {
            seed.outcome = Some(RecordedOutcome {
                effect: b.effect,
                bug_id: b.id.clone(),
                component: b.component,
            });
        }
        let hang = terminal == Terminal::Watchdog || bug.as_ref().is_some_and(|b| b.effect == BugEffect::Hang);
        IterationOutcome {
            packets_exchanged: packets,
            intercepted,
            mutated_fields,
            terminal,
            bug,
            hang,
            ue_hits: self.ue.take_hits(),
            enb_hits: self.enb.take_hits(),
            seed,
            trace,
            unused_entries: Vec::new(),
        }
    }

    /// One iteration with nothing intercepted changed.
    pub fn run_benign(&mut self) -> IterationOutcome {
        self.run_iteration(0, |_, p| (p.clone(), None))
    }

    /// One fuzzing iteration driven by `fuzzer` and an RNG seeded from
    /// `rng_seed`.
    pub fn fuzz_iteration(&mut self, fuzzer: &mut Fuzzer, rng_seed: u64) -> IterationOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        self.run_iteration(rng_seed, |_, packet| fuzzer.fuzz_packet(packet, &mut rng))
    }

    /// Replays `seed` on this harness.
    pub fn replay_seed(&mut self, seed: &Seed, mode: ReproMode) -> IterationOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.rng_seed);
        let mut used = Vec::new();
        let mut outcome = self.run_iteration(seed.rng_seed, |ordinal, packet| {
            let Some(entry) = seed.entry(ordinal) else {
                return (packet.clone(), None);
            };
            used.push(ordinal);
            let mut patch = entry.patch.clone();
            let out = match (&entry.delivered, mode) {
                (Some(d), ReproMode::ReplayAll) => dissect(&d.bytes, d.channel, packet.direction, packet.layer),
                _ => apply_patch(&mut patch, packet, &mut rng),
            };
            debug!("ordinal {ordinal}: delivering {}", out.hex_line());
            (out, Some(patch))
        });
        outcome.unused_entries = seed
            .entries
            .iter()
            .map(|e| e.ordinal)
            .filter(|o| !used.contains(o))
            .collect();
        if !outcome.unused_entries.is_empty() {
            warn!(
                "seed entries {:?} lie beyond the {} intercepted packets",
                outcome.unused_entries, outcome.intercepted
            );
        }
        outcome
    }
}

/// Reproduces a seed on a freshly constructed harness configured from the
/// seed's metadata.
pub fn reproduce(seed: &Seed, mode: ReproMode) -> IterationOutcome {
    let config = SimConfig {
        direction: seed.direction.unwrap_or(Direction::Downlink),
        layer: seed.layer.unwrap_or(Layer::Rrc),
        ..SimConfig::default()
    };
    Harness::new(config).replay_seed(seed, mode)
}

