//! Seeds: the reproducible record of one fuzzing iteration, and their
//! line-oriented file format.
//!
//! ```text
//! seed 86e56248c04e17b7
//! # direction DL
//! # layer RRC
//! # outcome hang enb.imeisv_lookup_hang ENB
//! M 0 ConnSetup antenna_ports#0 SET 7
//! P 0 CCCH 24a0774520242a17015fef31
//! R 1 DCCH 415a3c96e1012080006bf5452710
//! M 2 SecModeCommand integrity_prot_algorithm#0 SET 0
//! M 2 SecModeCommand imeisv_request#0 SET 0
//! P 2 DCCH 6840e0e00200252d7d89c0
//! ```
//!
//! `M` lines carry resolved field mutations, `R` lines whole-packet
//! replays. A `P` line follows the `M` lines of an ordinal and records the
//! bytes actually delivered, which crash reproduction can substitute
//! directly. Lines starting with `#` hold optional metadata; unknown
//! comments are ignored.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mutation::{FieldKey, Mutation, Mutator, Patch, ReplayPayload};
use crate::packet::{Channel, Direction, Layer};

/// Simulated component of the attach procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Ue,
    Enb,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::Ue => "UE",
            Component::Enb => "ENB",
        })
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "UE" => Ok(Component::Ue),
            "ENB" => Ok(Component::Enb),
            _ => Err(Error::Domain(format!("unknown component {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BugEffect {
    Crash,
    Hang,
}

impl fmt::Display for BugEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BugEffect::Crash => "crash",
            BugEffect::Hang => "hang",
        })
    }
}

/// The misbehavior a seed is known to trigger.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RecordedOutcome {
    pub effect: BugEffect,
    pub bug_id: String,
    pub component: Component,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedEntry {
    /// Index of the intercepted packet within the iteration, from 0.
    pub ordinal: u32,
    pub patch: Patch,
    /// Bytes delivered after a mutation patch was applied.
    pub delivered: Option<ReplayPayload>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Seed {
    pub rng_seed: u64,
    pub direction: Option<Direction>,
    pub layer: Option<Layer>,
    pub outcome: Option<RecordedOutcome>,
    pub entries: Vec<SeedEntry>,
}

impl Seed {
    pub fn new(rng_seed: u64) -> Self {
        Seed {
            rng_seed,
            ..Seed::default()
        }
    }

    pub fn entry(&self, ordinal: u32) -> Option<&SeedEntry> {
        self.entries.iter().find(|e| e.ordinal == ordinal)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("seed {:016x}\n", self.rng_seed);
        if let Some(direction) = self.direction {
            let _ = writeln!(out, "# direction {direction}");
        }
        if let Some(layer) = self.layer {
            let _ = writeln!(out, "# layer {layer}");
        }
        if let Some(o) = &self.outcome {
            let _ = writeln!(out, "# outcome {} {} {}", o.effect, o.bug_id, o.component);
        }
        for entry in &self.entries {
            match &entry.patch {
                Patch::Mutation(mutations) => {
                    for m in mutations {
                        let Mutator::Set(value) = m.mutator else {
                            panic!("unresolved mutation {} in seed", m.field);
                        };
                        let _ = writeln!(
                            out,
                            "M {} {} {}#{} SET {}",
                            entry.ordinal, m.field.packet_type, m.field.name, m.field.index, value
                        );
                    }
                    if let Some(d) = &entry.delivered {
                        let _ = writeln!(out, "P {} {} {}", entry.ordinal, d.channel, hex::encode(&d.bytes));
                    }
                }
                Patch::Replay(r) => {
                    let _ = writeln!(out, "R {} {} {}", entry.ordinal, r.channel, hex::encode(&r.bytes));
                }
            }
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line_no, header) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "empty seed file"))?;
        let rng_hex = header
            .strip_prefix("seed ")
            .ok_or_else(|| Error::parse(origin, line_no, "expected `seed <hex>` header"))?;
        let rng_seed = u64::from_str_radix(rng_hex.trim(), 16)
            .map_err(|e| Error::parse(origin, line_no, format!("bad rng seed: {e}")))?;
        let mut seed = Seed::new(rng_seed);

        for (line_no, line) in lines {
            let err = |msg: String| Error::parse(origin, line_no, msg);
            if let Some(comment) = line.strip_prefix('#') {
                seed.parse_comment(comment.trim()).map_err(|e| err(e.to_string()))?;
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let ordinal: u32 = tokens
                .get(1)
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| err(format!("missing or bad ordinal in {line:?}")))?;
            if let Some(last) = seed.entries.last() {
                let same_patch_continues = last.ordinal == ordinal
                    && matches!(tokens[0], "M" | "P")
                    && matches!(last.patch, Patch::Mutation(_))
                    && last.delivered.is_none();
                if last.ordinal > ordinal || (last.ordinal == ordinal && !same_patch_continues) {
                    return Err(err(format!("ordinal {ordinal} out of order")));
                }
            }
            match tokens[0] {
                "M" => {
                    let [_, _, packet_type, field, "SET", value] = tokens.as_slice() else {
                        return Err(err(format!(
                            "expected `M <ordinal> <type> <name>#<index> SET <value>`, got {line:?}"
                        )));
                    };
                    let (name, index) = field
                        .rsplit_once('#')
                        .and_then(|(n, i)| Some((n, i.parse::<u32>().ok()?)))
                        .ok_or_else(|| err(format!("bad field reference {field:?}")))?;
                    let value: u64 = value
                        .parse()
                        .map_err(|e| err(format!("bad SET value {value:?}: {e}")))?;
                    let mutation = Mutation {
                        field: FieldKey::new(*packet_type, name, index),
                        mutator: Mutator::Set(value),
                    };
                    match seed.entries.last_mut() {
                        Some(SeedEntry {
                            ordinal: o,
                            patch: Patch::Mutation(list),
                            delivered: None,
                        }) if *o == ordinal => list.push(mutation),
                        _ => seed.entries.push(SeedEntry {
                            ordinal,
                            patch: Patch::Mutation(vec![mutation]),
                            delivered: None,
                        }),
                    }
                }
                "P" | "R" => {
                    let [kind, _, channel, bytes] = tokens.as_slice() else {
                        return Err(err(format!("expected `{} <ordinal> <channel> <hex>`", tokens[0])));
                    };
                    let channel: Channel = channel.parse().map_err(|e: Error| err(e.to_string()))?;
                    let bytes = hex::decode(bytes).map_err(|e| err(format!("bad hex: {e}")))?;
                    if *kind == "R" {
                        seed.entries.push(SeedEntry {
                            ordinal,
                            patch: Patch::Replay(ReplayPayload { channel, bytes }),
                            delivered: None,
                        });
                    } else {
                        match seed.entries.last_mut() {
                            Some(entry)
                                if entry.ordinal == ordinal
                                    && matches!(entry.patch, Patch::Mutation(_)) =>
                            {
                                entry.delivered = Some(ReplayPayload { channel, bytes })
                            }
                            _ => return Err(err("P line without preceding M lines".into())),
                        }
                    }
                }
                other => return Err(err(format!("unknown record kind {other:?}"))),
            }
        }
        Ok(seed)
    }

    fn parse_comment(&mut self, comment: &str) -> Result<()> {
        let mut parts = comment.split_whitespace();
        match parts.next() {
            Some("direction") => {
                self.direction = Some(parts.next().unwrap_or_default().parse()?);
            }
            Some("layer") => {
                self.layer = Some(parts.next().unwrap_or_default().parse()?);
            }
            Some("outcome") => {
                let effect = match parts.next() {
                    Some("crash") => BugEffect::Crash,
                    Some("hang") => BugEffect::Hang,
                    other => return Err(Error::Domain(format!("unknown outcome {other:?}"))),
                };
                let bug_id = parts
                    .next()
                    .ok_or_else(|| Error::Domain("outcome needs a bug id".into()))?
                    .to_string();
                let component = parts.next().unwrap_or("UE").parse()?;
                self.outcome = Some(RecordedOutcome {
                    effect,
                    bug_id,
                    component,
                });
            }
            _ => {}
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Seed::parse(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Seed {
        Seed {
            rng_seed: 0x4d2,
            direction: Some(Direction::Downlink),
            layer: Some(Layer::Rrc),
            outcome: Some(RecordedOutcome {
                effect: BugEffect::Crash,
                bug_id: "ue.sr_pucch_overflow".into(),
                component: Component::Ue,
            }),
            entries: vec![
                SeedEntry {
                    ordinal: 1,
                    patch: Patch::Mutation(vec![Mutation {
                        field: FieldKey::new("ConnSetup", "sr_pucch_resource_index", 0),
                        mutator: Mutator::Set(2047),
                    }]),
                    delivered: Some(ReplayPayload {
                        channel: Channel::Ccch,
                        bytes: vec![0x24, 0xd9],
                    }),
                },
                SeedEntry {
                    ordinal: 3,
                    patch: Patch::Replay(ReplayPayload {
                        channel: Channel::Dcch,
                        bytes: vec![0x68, 0x48],
                    }),
                    delivered: None,
                },
            ],
        }
    }

    #[test]
    fn empty_seed_round_trips() {
        let seed = Seed::new(42);
        let text = seed.to_text();
        assert_eq!(text, "seed 000000000000002a\n");
        assert_eq!(Seed::parse(&text, "t").unwrap(), seed);
    }

    #[test]
    fn sample_round_trips() {
        let seed = sample();
        assert_eq!(Seed::parse(&seed.to_text(), "t").unwrap(), seed);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "seed 10\nM 0 ConnSetup p_max#0 SET 3\nX 1 what\n";
        match Seed::parse(text, "f.seed") {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(path, "f.seed");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(Seed::parse("", "f"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            Seed::parse("seed zz\n", "f"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Seed::parse("seed 1\nM 3 A b#0 SET 1\nM 2 A b#0 SET 1\n", "f"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            Seed::parse("seed 1\nP 3 DCCH 00\n", "f"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    fn name() -> impl Strategy<Value = String> {
        "[a-z][a-z_.]{0,12}"
    }

    fn entry(ordinal: u32) -> impl Strategy<Value = SeedEntry> {
        let mutation = (name(), name(), 0u32..3, any::<u64>()).prop_map(|(t, n, i, v)| Mutation {
            field: FieldKey::new(t, n, i),
            mutator: Mutator::Set(v),
        });
        let channel = prop_oneof![Just(Channel::Ccch), Just(Channel::Dcch)];
        let bytes = proptest::collection::vec(any::<u8>(), 1..16);
        prop_oneof![
            (
                proptest::collection::vec(mutation, 1..4),
                proptest::option::of((channel.clone(), bytes.clone()))
            )
                .prop_map(move |(m, delivered)| SeedEntry {
                    ordinal,
                    patch: Patch::Mutation(m),
                    delivered: delivered.map(|(channel, bytes)| ReplayPayload { channel, bytes }),
                }),
            (channel, bytes).prop_map(move |(channel, bytes)| SeedEntry {
                ordinal,
                patch: Patch::Replay(ReplayPayload { channel, bytes }),
                delivered: None,
            }),
        ]
    }

    fn seed_strategy() -> impl Strategy<Value = Seed> {
        (any::<u64>(), proptest::collection::btree_set(0u32..40, 0..8)).prop_flat_map(
            |(rng_seed, ordinals)| {
                let entries: Vec<_> = ordinals.into_iter().map(entry).collect();
                entries.prop_map(move |entries| Seed {
                    rng_seed,
                    entries,
                    ..Seed::default()
                })
            },
        )
    }

    proptest! {
        #[test]
        fn text_form_round_trips(seed in seed_strategy()) {
            let parsed = Seed::parse(&seed.to_text(), "prop").unwrap();
            prop_assert_eq!(parsed, seed);
        }
    }
}
