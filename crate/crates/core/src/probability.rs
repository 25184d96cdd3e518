//! Per-field mutation probabilities and their coverage-driven adaptation.
//!
//! After iteration `i` every field key mutated during that iteration moves by
//!
//! ```text
//! coverage_sign(c) * schedule_weight(c, i) / n  /  log2(|V| + 1)
//! ```
//!
//! where `c` is the new coverage of the iteration, `n` the number of field
//! mutations it made and `|V|` the field's value space. The result is
//! clamped to `[P_MIN, P_MAX]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mutation::FieldKey;
use crate::packet::{Field, Packet};

pub const P_MIN: f64 = 0.005;
pub const P_MAX: f64 = 0.90;

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(P_MIN, P_MAX)
}

/// Starting probability of each field of a packet with `field_count` fields.
pub fn initial_probability(k: f64, field_count: usize) -> f64 {
    if field_count == 0 {
        return P_MIN;
    }
    clamp_probability(k / field_count as f64)
}

/// `+1` when the iteration found new coverage, `-1` otherwise.
pub fn coverage_sign(new_units: u64) -> f64 {
    if new_units > 0 { 1.0 } else { -1.0 }
}

/// Magnitude schedule: grows linearly with `iteration` when coverage was
/// found, shrinks reciprocally when it was not.
pub fn schedule_weight(new_units: u64, iteration: u64, max_iterations: u64, beta: f64) -> Result<f64> {
    if iteration == 0 {
        return Err(Error::Domain("iterations are numbered from 1".into()));
    }
    if max_iterations == 0 {
        return Err(Error::Domain("max_iterations must be positive".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    let progress = beta * iteration as f64 / max_iterations as f64;
    Ok(if new_units > 0 { progress } else { 1.0 / progress })
}

/// Number of values a mask can represent, `2^popcount(mask)`, as a float so
/// that 64-bit masks do not overflow.
pub fn value_space(mask: u64) -> f64 {
    2f64.powi(mask.count_ones() as i32)
}

/// Unclamped change applied to one mutated field.
pub fn increment(
    new_units: u64,
    iteration: u64,
    max_iterations: u64,
    beta: f64,
    mutation_count: u64,
    value_space: f64,
) -> Result<f64> {
    if mutation_count == 0 {
        return Err(Error::Domain("no mutations to normalize by".into()));
    }
    if value_space.is_nan() || value_space < 1.0 {
        return Err(Error::InvalidField {
            name: "?".into(),
            reason: format!("value space {value_space} is below 1"),
        });
    }
    let weight = schedule_weight(new_units, iteration, max_iterations, beta)?;
    Ok(coverage_sign(new_units) * weight / mutation_count as f64 / (value_space + 1.0).log2())
}

pub fn updated_probability(
    p: f64,
    new_units: u64,
    iteration: u64,
    max_iterations: u64,
    beta: f64,
    mutation_count: u64,
    value_space: f64,
) -> Result<f64> {
    let delta = increment(new_units, iteration, max_iterations, beta, mutation_count, value_space)?;
    Ok(clamp_probability(p + delta))
}

/// What one iteration mutated: the distinct field keys (with the value
/// space of each) and the total number of mutation events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationLedger {
    pub iteration: u64,
    pub mutated: BTreeMap<FieldKey, f64>,
    pub mutation_count: u64,
    pub new_units: u64,
}

impl IterationLedger {
    pub fn new(iteration: u64) -> Self {
        IterationLedger {
            iteration,
            ..Default::default()
        }
    }

    pub fn record(&mut self, key: FieldKey, mask: u64) {
        self.mutated.insert(key, value_space(mask));
        self.mutation_count += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    pub k: f64,
    pub beta: f64,
    pub max_iterations: u64,
    probs: BTreeMap<FieldKey, f64>,
}

impl ProbabilityTable {
    pub fn new(k: f64, beta: f64, max_iterations: u64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Domain(format!("k must be positive, got {k}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")));
        }
        Ok(ProbabilityTable {
            k,
            beta,
            max_iterations,
            probs: BTreeMap::new(),
        })
    }

    /// Adds entries for every field of `packet` not seen before.
    pub fn init_packet(&mut self, packet: &Packet) {
        let p0 = initial_probability(self.k, packet.fields.len());
        for field in &packet.fields {
            self.probs.entry(FieldKey::of(packet, field)).or_insert(p0);
        }
    }

    pub fn probability(&self, packet: &Packet, field: &Field) -> Option<f64> {
        self.get(&FieldKey::of(packet, field))
    }

    pub fn get(&self, key: &FieldKey) -> Option<f64> {
        self.probs.get(key).copied()
    }

    /// Overrides a probability without clamping; meant for tests and tools.
    pub fn force(&mut self, key: FieldKey, p: f64) {
        self.probs.insert(key, p);
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FieldKey, f64)> {
        self.probs.iter().map(|(k, p)| (k, *p))
    }

    /// Moves every key mutated in `ledger`; a ledger without mutations
    /// leaves the table untouched.
    pub fn update(&mut self, ledger: &IterationLedger) -> Result<()> {
        if ledger.mutation_count == 0 {
            return Ok(());
        }
        for (key, &space) in &ledger.mutated {
            let p = self.probs.get(key).copied().unwrap_or(initial_probability(self.k, 1));
            let next = updated_probability(
                p,
                ledger.new_units,
                ledger.iteration,
                self.max_iterations,
                self.beta,
                ledger.mutation_count,
                space,
            )?;
            self.probs.insert(key.clone(), next);
        }
        Ok(())
    }

    /// CSV with columns `packet_type,field,index,p`.
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("packet_type,field,index,p\n");
        for (key, p) in &self.probs {
            let _ = writeln!(out, "{},{},{},{p:.6}", key.packet_type, key.name, key.index);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_values_and_clamps() {
        assert!((initial_probability(0.5, 10) - 0.05).abs() < 1e-15);
        assert_eq!(initial_probability(0.25, 100), 0.005);
        assert_eq!(initial_probability(3.0, 3), 0.90);
    }

    #[test]
    fn schedule_branches() {
        assert_eq!(schedule_weight(1, 1000, 2000, 4.0).unwrap(), 2.0);
        assert_eq!(schedule_weight(0, 1000, 2000, 4.0).unwrap(), 0.5);
        assert_eq!(schedule_weight(5, 2000, 2000, 2.0).unwrap(), 2.0);
        assert!(matches!(schedule_weight(1, 0, 2000, 4.0), Err(Error::Domain(_))));
    }

    #[test]
    fn sign() {
        assert_eq!(coverage_sign(3), 1.0);
        assert_eq!(coverage_sign(0), -1.0);
        assert_eq!(coverage_sign(1), 1.0);
    }

    #[test]
    fn worked_updates() {
        let up = updated_probability(0.30, 3, 1000, 2000, 4.0, 2, 256.0).unwrap();
        assert!((up - 0.42491).abs() < 1e-4, "{up}");
        let down = updated_probability(0.30, 0, 1000, 2000, 4.0, 2, 256.0).unwrap();
        assert!((down - 0.26877).abs() < 1e-4, "{down}");
    }

    #[test]
    fn ceiling_clamp() {
        assert_eq!(clamp_probability(0.895 + 0.02), 0.90);
    }

    #[test]
    fn value_space_of_wide_masks() {
        assert_eq!(value_space(0x70), 8.0);
        assert_eq!(value_space(u64::MAX), 2f64.powi(64));
    }

    #[test]
    fn ledger_counts_events_but_updates_keys_once() {
        let mut table = ProbabilityTable::new(3.0, 4.0, 2000).unwrap();
        let key = FieldKey::new("T", "a", 0);
        table.force(key.clone(), 0.3);
        let mut ledger = IterationLedger::new(1000);
        ledger.record(key.clone(), 0xFF);
        ledger.record(key.clone(), 0xFF);
        ledger.new_units = 3;
        table.update(&ledger).unwrap();
        let expected = 0.30 + 1.0 / 257f64.log2();
        assert!((table.get(&key).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_ledger_is_a_no_op() {
        let mut table = ProbabilityTable::new(3.0, 4.0, 2000).unwrap();
        table.force(FieldKey::new("T", "a", 0), 0.3);
        let before = table.clone();
        table.update(&IterationLedger::new(0)).unwrap();
        assert_eq!(table, before);
    }
}
