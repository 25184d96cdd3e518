//! Mutators, mutations and patches.
//!
//! A [`Mutation`] targets one field. Once applied, its mutator is rewritten
//! to `SET x` so that re-applying the same patch reproduces the same bytes.

use std::fmt;
use std::str::FromStr;

use log::debug;
use rand::Rng;

use crate::dissector::dissect;
use crate::error::{Error, Result};
use crate::packet::{read_field, write_field, Channel, Field, Packet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mutator {
    Rand,
    Max,
    Min,
    Add,
    Sub,
    Set(u64),
}

/// The five mutators a fresh mutation is drawn from.
pub const DRAWABLE: [Mutator; 5] = [
    Mutator::Rand,
    Mutator::Max,
    Mutator::Min,
    Mutator::Add,
    Mutator::Sub,
];

impl fmt::Display for Mutator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mutator::Rand => f.write_str("RAND"),
            Mutator::Max => f.write_str("MAX"),
            Mutator::Min => f.write_str("MIN"),
            Mutator::Add => f.write_str("ADD"),
            Mutator::Sub => f.write_str("SUB"),
            Mutator::Set(v) => write!(f, "SET {v}"),
        }
    }
}

fn max_for_bits(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

impl Mutator {
    /// Applies the mutator to `current` for a field with `bits` value bits
    /// (capacity `2^bits`). ADD and SUB wrap around the capacity.
    pub fn apply<R: Rng + ?Sized>(self, current: u64, bits: u32, rng: &mut R) -> Result<u64> {
        if bits == 0 || bits > 64 {
            return Err(Error::Domain(format!("field width {bits} is not in 1..=64")));
        }
        let max = max_for_bits(bits);
        if current > max {
            return Err(Error::ValueOutOfRange {
                value: current,
                capacity_bits: bits,
            });
        }
        Ok(match self {
            Mutator::Rand => rng.random_range(0..=max),
            Mutator::Max => max,
            Mutator::Min => 0,
            Mutator::Add => {
                if current == max {
                    0
                } else {
                    current + 1
                }
            }
            Mutator::Sub => {
                if current == 0 {
                    max
                } else {
                    current - 1
                }
            }
            Mutator::Set(v) if v <= max => v,
            Mutator::Set(v) => {
                return Err(Error::ValueOutOfRange {
                    value: v,
                    capacity_bits: bits,
                })
            }
        })
    }
}

/// Identifies a field across packets: `(packet_type, name, index)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldKey {
    pub packet_type: String,
    pub name: String,
    pub index: u32,
}

impl FieldKey {
    pub fn new(packet_type: impl Into<String>, name: impl Into<String>, index: u32) -> Self {
        FieldKey {
            packet_type: packet_type.into(),
            name: name.into(),
            index,
        }
    }

    pub fn of(packet: &Packet, field: &Field) -> Self {
        FieldKey::new(packet.packet_type.clone(), field.name.clone(), field.index)
    }
}

impl fmt::Display for FieldKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}#{}", self.packet_type, self.name, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutation {
    pub field: FieldKey,
    pub mutator: Mutator,
}

/// Builds a mutation for `field` with a mutator drawn uniformly from
/// RAND, MAX, MIN, ADD and SUB.
pub fn make_mutation<R: Rng + ?Sized>(packet_type: &str, field: &Field, rng: &mut R) -> Mutation {
    Mutation {
        field: FieldKey::new(packet_type, field.name.clone(), field.index),
        mutator: DRAWABLE[rng.random_range(0..DRAWABLE.len())],
    }
}

/// Whole-packet replacement used by replay patches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayPayload {
    pub channel: Channel,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Patch {
    Mutation(Vec<Mutation>),
    Replay(ReplayPayload),
}

impl Patch {
    pub fn mutation_count(&self) -> usize {
        match self {
            Patch::Mutation(m) => m.len(),
            Patch::Replay(_) => 0,
        }
    }

    pub fn is_resolved(&self) -> bool {
        match self {
            Patch::Mutation(m) => m.iter().all(|m| matches!(m.mutator, Mutator::Set(_))),
            Patch::Replay(_) => true,
        }
    }
}

/// Applies `patch` to `packet` and returns the re-dissected result.
///
/// Mutations are applied in list order against the fields of the incoming
/// dissection and are rewritten to `SET x` with the value they produced.
/// A mutation whose field is missing from the packet is skipped.
pub fn apply_patch<R: Rng + ?Sized>(patch: &mut Patch, packet: &Packet, rng: &mut R) -> Packet {
    match patch {
        Patch::Replay(replay) => dissect(&replay.bytes, replay.channel, packet.direction, packet.layer),
        Patch::Mutation(mutations) => {
            let mut bytes = packet.bytes.clone();
            for mutation in mutations.iter_mut() {
                let field = (mutation.field.packet_type == packet.packet_type)
                    .then(|| packet.field(&mutation.field.name, mutation.field.index))
                    .flatten();
                let Some(field) = field else {
                    debug!(
                        "skipping mutation of {}: not present in {}",
                        mutation.field, packet.packet_type
                    );
                    continue;
                };
                let resolved = read_field(&bytes, field).and_then(|current| {
                    let value = mutation.mutator.apply(current, field.value_bits(), rng)?;
                    write_field(&mut bytes, field, value)?;
                    Ok(value)
                });
                match resolved {
                    Ok(value) => mutation.mutator = Mutator::Set(value),
                    Err(e) => debug!("skipping mutation of {}: {e}", mutation.field),
                }
            }
            dissect(&bytes, packet.channel, packet.direction, packet.layer)
        }
    }
}

impl FromStr for Mutator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let kind = parts.next().unwrap_or_default();
        let m = match kind {
            "RAND" => Mutator::Rand,
            "MAX" => Mutator::Max,
            "MIN" => Mutator::Min,
            "ADD" => Mutator::Add,
            "SUB" => Mutator::Sub,
            "SET" => {
                let v = parts
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Domain(format!("SET needs a value: {s:?}")))?;
                Mutator::Set(v)
            }
            _ => return Err(Error::Domain(format!("unknown mutator {s:?}"))),
        };
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissector::schema_by_type;
    use crate::packet::{Direction, Layer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn mutator_semantics() {
        let mut r = rng();
        assert_eq!(Mutator::Max.apply(3, 3, &mut r).unwrap(), 7);
        assert_eq!(Mutator::Min.apply(3, 3, &mut r).unwrap(), 0);
        assert_eq!(Mutator::Set(5).apply(1, 3, &mut r).unwrap(), 5);
        assert_eq!(Mutator::Sub.apply(3, 3, &mut r).unwrap(), 2);
        assert!(Mutator::Set(8).apply(1, 3, &mut r).is_err());
        assert!(Mutator::Rand.apply(9, 3, &mut r).is_err());
        assert_eq!(Mutator::Max.apply(0, 64, &mut r).unwrap(), u64::MAX);
        assert_eq!(Mutator::Add.apply(u64::MAX, 64, &mut r).unwrap(), 0);
    }

    #[test]
    fn add_and_sub_wrap_like_modular_arithmetic() {
        let mut r = rng();
        for bits in 1..=10u32 {
            let cap = 1u64 << bits;
            for current in 0..cap {
                assert_eq!(Mutator::Add.apply(current, bits, &mut r).unwrap(), (current + 1) % cap);
                assert_eq!(
                    Mutator::Sub.apply(current, bits, &mut r).unwrap(),
                    (current + cap - 1) % cap
                );
            }
        }
    }

    #[test]
    fn rand_stays_in_range() {
        let mut r = rng();
        for _ in 0..1000 {
            assert!(Mutator::Rand.apply(0, 3, &mut r).unwrap() < 8);
        }
    }

    #[test]
    fn mutator_kinds_are_uniform() {
        let f = Field::new("x", 0, 0, 1, 0xFF).unwrap();
        let mut r = rng();
        let mut counts = [0usize; 5];
        let draws = 100_000;
        for _ in 0..draws {
            let m = make_mutation("T", &f, &mut r);
            let idx = DRAWABLE.iter().position(|k| *k == m.mutator).unwrap();
            counts[idx] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.2).abs() < 0.01, "{freq}");
        }
        let m = make_mutation("T", &f, &mut r);
        assert_eq!((m.field.name.as_str(), m.field.index), ("x", 0));
    }

    #[test]
    fn same_seed_same_kinds() {
        let f = Field::new("x", 0, 0, 1, 0xFF).unwrap();
        let seq = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..32).map(|_| make_mutation("T", &f, &mut r).mutator).collect::<Vec<_>>()
        };
        assert_eq!(seq(11), seq(11));
    }

    fn conn_setup() -> Packet {
        let s = schema_by_type("ConnSetup").unwrap();
        let bytes = s.encode(&[("max_harq_tx", 1), ("p_max", 23)]);
        dissect(&bytes, s.channel, Direction::Downlink, Layer::Rrc)
    }

    #[test]
    fn set_patch_writes_value_and_resolves() {
        let p = conn_setup();
        let mut patch = Patch::Mutation(vec![Mutation {
            field: FieldKey::new("ConnSetup", "max_harq_tx", 0),
            mutator: Mutator::Set(5),
        }]);
        let out = apply_patch(&mut patch, &p, &mut rng());
        assert_eq!(out.get("max_harq_tx"), Some(5));
        assert_eq!(out.get("p_max"), Some(23));
    }

    #[test]
    fn resolved_patch_is_idempotent() {
        let p = conn_setup();
        let mut patch = Patch::Mutation(vec![
            Mutation {
                field: FieldKey::new("ConnSetup", "p_max", 0),
                mutator: Mutator::Rand,
            },
            Mutation {
                field: FieldKey::new("ConnSetup", "max_harq_tx", 0),
                mutator: Mutator::Add,
            },
        ]);
        let first = apply_patch(&mut patch, &p, &mut rng());
        assert!(patch.is_resolved());
        let second = apply_patch(&mut patch.clone(), &p, &mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(first.bytes, second.bytes);
    }

    #[test]
    fn replay_patch_replaces_bytes() {
        let p = conn_setup();
        let old = schema_by_type("ConnSetup").unwrap().encode(&[("p_max", 3)]);
        let mut patch = Patch::Replay(ReplayPayload {
            channel: p.channel,
            bytes: old.clone(),
        });
        let out = apply_patch(&mut patch, &p, &mut rng());
        assert_eq!(out.bytes, old);
    }

    #[test]
    fn missing_fields_are_skipped() {
        let p = conn_setup();
        let mut patch = Patch::Mutation(vec![Mutation {
            field: FieldKey::new("AuthRequest", "rand", 0),
            mutator: Mutator::Max,
        }]);
        let out = apply_patch(&mut patch, &p, &mut rng());
        assert_eq!(out.bytes, p.bytes);
        assert!(!patch.is_resolved());
    }
}
