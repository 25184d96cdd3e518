//! Experiment orchestration: configuration, sets of fuzzing iterations,
//! CSV output and campaign comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::coverage::{dut, feedback_source, peer, CoverageMap};
use crate::error::{Error, Result};
use crate::fuzzer::{Fuzzer, FuzzerConfig, FuzzerKind};
use crate::packet::{Direction, Layer};
use crate::seed::Seed;
use crate::sim::{Harness, SimConfig};

pub const CSV_HEADER: &str = "set,iteration,new_units_dut,total_units_dut,new_units_peer,total_units_peer,mutated_fields,packets,crash_id,hang";
pub const SUMMARY_HEADER: &str = "set,rng_seed,final_total_units_dut,final_total_units_peer,crashes,hangs,mean_packets,mean_mutations_per_packet";
pub const DIAGNOSTICS_HEADER: &str = "set,iteration,intercepted,mutated_fields,mutations_per_packet";
pub const PROBABILITY_HEADER: &str = "iteration,packet_type,field,index,p";

pub const CONFIG_KEYS: [&str; 13] = [
    "mode",
    "direction",
    "layer",
    "feedback",
    "k",
    "beta",
    "replay_prob",
    "mut_prob",
    "iterations",
    "sets",
    "rng_seed",
    "out_dir",
    "diagnostics",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub fuzzer: FuzzerConfig,
    pub direction: Direction,
    pub layer: Layer,
    pub sets: u32,
    pub out_dir: Option<PathBuf>,
    pub diagnostics: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            fuzzer: FuzzerConfig::new(FuzzerKind::Random),
            direction: Direction::Downlink,
            layer: Layer::Rrc,
            sets: 20,
            out_dir: None,
            diagnostics: false,
        }
    }
}

/// Parses flat `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, i + 1, format!("expected `key = value`, got {line:?}")))?;
        let key = key.trim().to_ascii_lowercase();
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::parse(origin, i + 1, format!("unknown key {key:?}")));
        }
        pairs.push((key, value.trim().to_string()));
    }
    Ok(pairs)
}

impl CampaignConfig {
    /// Builds a configuration from key/value pairs applied in order; later
    /// pairs override earlier ones. Unset `k` and `mut_prob` take
    /// mode-dependent defaults.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let get = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let kind = get("mode").map(str::parse).transpose()?.unwrap_or(FuzzerKind::Random);
        let mut config = CampaignConfig {
            fuzzer: FuzzerConfig::new(kind),
            ..CampaignConfig::default()
        };
        let num = |key: &str, v: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::Config(format!("{key}: not a number: {v:?}")))
        };
        let int = |key: &str, v: &str| -> Result<u64> {
            let parsed = match v.strip_prefix("0x") {
                Some(hex) => u64::from_str_radix(hex, 16),
                None => v.parse(),
            };
            parsed.map_err(|_| Error::Config(format!("{key}: not an integer: {v:?}")))
        };
        let f = &mut config.fuzzer;
        if let Some(v) = get("direction") {
            config.direction = v.parse()?;
        }
        if let Some(v) = get("layer") {
            config.layer = v.parse()?;
        }
        if let Some(v) = get("feedback") {
            f.feedback = v.parse()?;
        }
        if let Some(v) = get("k") {
            f.k = num("k", v)?;
        }
        if let Some(v) = get("beta") {
            f.beta = num("beta", v)?;
        }
        if let Some(v) = get("replay_prob") {
            f.replay_prob = num("replay_prob", v)?;
        }
        f.mut_prob = match get("mut_prob") {
            Some(v) => num("mut_prob", v)?,
            None => 1.0 - f.replay_prob,
        };
        if let Some(v) = get("iterations") {
            f.max_iterations = int("iterations", v)?;
        }
        if let Some(v) = get("rng_seed") {
            f.rng_seed = int("rng_seed", v)?;
        }
        if let Some(v) = get("sets") {
            config.sets = u32::try_from(int("sets", v)?).map_err(|_| Error::Config("sets too large".into()))?;
        }
        if let Some(v) = get("out_dir") {
            config.out_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = get("diagnostics") {
            config.diagnostics = match v.to_ascii_lowercase().as_str() {
                "1" | "true" | "yes" | "on" => true,
                "0" | "false" | "no" | "off" => false,
                _ => return Err(Error::Config(format!("diagnostics: not a boolean: {v:?}"))),
            };
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.fuzzer.validate()?;
        if self.sets == 0 {
            return Err(Error::Config("sets must be at least 1".into()));
        }
        Ok(())
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            direction: self.direction,
            layer: self.layer,
            ..SimConfig::default()
        }
    }

    pub fn set_seed(&self, set: u32) -> u64 {
        self.fuzzer.rng_seed.wrapping_add(set as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationRecord {
    pub set: u32,
    pub iteration: u64,
    pub new_units_dut: u64,
    pub total_units_dut: u64,
    pub new_units_peer: u64,
    pub total_units_peer: u64,
    pub mutated_fields: u64,
    pub packets: u32,
    pub crash_id: Option<String>,
    pub hang: bool,
    /// Packets seen by the fuzzer; not part of the CSV row.
    pub intercepted: u32,
}

impl IterationRecord {
    /// Column values in `CSV_HEADER` order.
    pub fn csv_fields(&self) -> [String; 10] {
        [
            self.set.to_string(),
            self.iteration.to_string(),
            self.new_units_dut.to_string(),
            self.total_units_dut.to_string(),
            self.new_units_peer.to_string(),
            self.total_units_peer.to_string(),
            self.mutated_fields.to_string(),
            self.packets.to_string(),
            self.crash_id.clone().unwrap_or_default(),
            (self.hang as u8).to_string(),
        ]
    }

    pub fn mutations_per_packet(&self) -> f64 {
        if self.intercepted == 0 {
            0.0
        } else {
            self.mutated_fields as f64 / self.intercepted as f64
        }
    }

    fn from_csv(row: &csv::StringRecord, origin: &str, line_no: usize) -> Result<Self> {
        if row.len() != 10 {
            return Err(Error::parse(origin, line_no, format!("expected 10 columns, got {}", row.len())));
        }
        let n = |i: usize| -> Result<u64> {
            row[i]
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, line_no, format!("column {} is not a number", i + 1)))
        };
        Ok(IterationRecord {
            set: n(0)? as u32,
            iteration: n(1)?,
            new_units_dut: n(2)?,
            total_units_dut: n(3)?,
            new_units_peer: n(4)?,
            total_units_peer: n(5)?,
            mutated_fields: n(6)?,
            packets: n(7)? as u32,
            crash_id: Some(row[8].trim()).filter(|c| !c.is_empty()).map(str::to_string),
            hang: n(9)? != 0,
            intercepted: 0,
        })
    }
}

/// A saved crash or hang seed.
#[derive(Debug, Clone)]
pub struct CrashRecord {
    pub set: u32,
    pub iteration: u64,
    pub seed: Seed,
}

#[derive(Debug, Clone)]
pub struct SetResult {
    pub set: u32,
    pub rng_seed: u64,
    pub records: Vec<IterationRecord>,
    pub crashes: Vec<CrashRecord>,
    /// Probability table snapshots in `PROBABILITY_HEADER` order
    /// (diagnostics only).
    pub probability_rows: Vec<[String; 5]>,
}

impl SetResult {
    pub fn final_total_dut(&self) -> u64 {
        self.records.last().map_or(0, |r| r.total_units_dut)
    }

    pub fn final_total_peer(&self) -> u64 {
        self.records.last().map_or(0, |r| r.total_units_peer)
    }

    pub fn mean_packets(&self) -> f64 {
        mean(self.records.iter().map(|r| r.packets as f64))
    }

    pub fn mean_mutations_per_packet(&self) -> f64 {
        mean(self.records.iter().map(IterationRecord::mutations_per_packet))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 { 0.0 } else { sum / n as f64 }
}

/// Median of a sample; the mean of the two middle values for even sizes.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// Runs every iteration of one set in memory.
pub fn run_set(config: &CampaignConfig, set: u32) -> Result<SetResult> {
    let rng_seed = config.set_seed(set);
    let mut fuzzer_config = config.fuzzer.clone();
    fuzzer_config.rng_seed = rng_seed;
    let mut fuzzer = Fuzzer::new(fuzzer_config)?;
    let mut master = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut harness = Harness::new(config.sim());
    let dut_component = dut(config.direction);
    let peer_component = peer(config.direction);
    let source = feedback_source(config.fuzzer.feedback, config.direction);
    let mut dut_map = CoverageMap::new();
    let mut peer_map = CoverageMap::new();
    let mut records = Vec::with_capacity(config.fuzzer.max_iterations as usize);
    let mut crashes = Vec::new();
    let mut probability_rows = Vec::new();

    while !fuzzer.needs_finish() {
        let iteration = fuzzer.iteration();
        let outcome = harness.fuzz_iteration(&mut fuzzer, master.next_u64());
        let new_dut = dut_map.merge(outcome.hits(dut_component));
        let new_peer = peer_map.merge(outcome.hits(peer_component));
        let feedback = if source == dut_component { new_dut } else { new_peer };
        fuzzer.end_iteration(feedback)?;
        if config.diagnostics {
            for (key, p) in fuzzer.table().iter() {
                probability_rows.push([
                    iteration.to_string(),
                    key.packet_type.to_string(),
                    key.name.to_string(),
                    key.index.to_string(),
                    format!("{p:.6}"),
                ]);
            }
        }
        if outcome.bug.is_some() {
            crashes.push(CrashRecord {
                set,
                iteration,
                seed: outcome.seed.clone(),
            });
        }
        records.push(IterationRecord {
            set,
            iteration,
            new_units_dut: new_dut,
            total_units_dut: dut_map.total_units(),
            new_units_peer: new_peer,
            total_units_peer: peer_map.total_units(),
            mutated_fields: outcome.mutated_fields,
            packets: outcome.packets_exchanged,
            crash_id: outcome.crash_id().map(str::to_string),
            hang: outcome.hang,
            intercepted: outcome.intercepted,
        });
    }
    Ok(SetResult {
        set,
        rng_seed,
        records,
        crashes,
        probability_rows,
    })
}

#[derive(Debug, Clone)]
pub struct CampaignSummary {
    pub sets: Vec<SetResult>,
}

impl CampaignSummary {
    pub fn final_totals_dut(&self) -> Vec<f64> {
        self.sets.iter().map(|s| s.final_total_dut() as f64).collect()
    }

    pub fn median_final_dut(&self) -> f64 {
        median(&self.final_totals_dut())
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        for s in &self.sets {
            let hangs = s.records.iter().filter(|r| r.hang).count();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.4},{:.4}",
                s.set,
                s.rng_seed,
                s.final_total_dut(),
                s.final_total_peer(),
                s.crashes.len(),
                hangs,
                s.mean_packets(),
                s.mean_mutations_per_packet()
            );
        }
        let col = |f: &dyn Fn(&SetResult) -> f64| median(&self.sets.iter().map(f).collect::<Vec<_>>());
        let _ = writeln!(
            out,
            "median,,{},{},{},{},{:.4},{:.4}",
            col(&|s| s.final_total_dut() as f64),
            col(&|s| s.final_total_peer() as f64),
            col(&|s| s.crashes.len() as f64),
            col(&|s| s.records.iter().filter(|r| r.hang).count() as f64),
            col(&SetResult::mean_packets),
            col(&SetResult::mean_mutations_per_packet)
        );
        out
    }
}

/// Runs all sets (in parallel) and writes the output files when an output
/// directory is configured.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignSummary> {
    config.validate()?;
    if let Some(dir) = &config.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let sets = (0..config.sets)
        .into_par_iter()
        .map(|s| {
            let result = run_set(config, s)?;
            if let Some(dir) = &config.out_dir {
                write_set(dir, config, &result)?;
            }
            Ok(result)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = CampaignSummary { sets };
    if let Some(dir) = &config.out_dir {
        let path = dir.join("summary.csv");
        fs::write(&path, summary.summary_csv()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(summary)
}

pub fn crash_seed_path(dir: &Path, set: u32, iteration: u64) -> PathBuf {
    dir.join("crashes").join(format!("set_{set}")).join(format!("{iteration}.seed"))
}

fn write_csv<R, I>(path: &Path, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let err = |e: csv::Error| Error::io(path, e.into());
    let mut writer = csv::Writer::from_path(path).map_err(err)?;
    writer.write_record(header.split(',')).map_err(err)?;
    for row in rows {
        writer.write_record(row).map_err(err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn write_set(dir: &Path, config: &CampaignConfig, result: &SetResult) -> Result<()> {
    let set = result.set;
    write_csv(
        &dir.join(format!("set_{set}.csv")),
        CSV_HEADER,
        result.records.iter().map(IterationRecord::csv_fields),
    )?;
    for crash in &result.crashes {
        crash.seed.save(&crash_seed_path(dir, crash.set, crash.iteration))?;
    }
    if config.diagnostics {
        let diagnostics = result.records.iter().map(|r| {
            [
                r.set.to_string(),
                r.iteration.to_string(),
                r.intercepted.to_string(),
                r.mutated_fields.to_string(),
                format!("{:.6}", r.mutations_per_packet()),
            ]
        });
        write_csv(&dir.join(format!("diagnostics_{set}.csv")), DIAGNOSTICS_HEADER, diagnostics)?;
        write_csv(
            &dir.join(format!("probabilities_{set}.csv")),
            PROBABILITY_HEADER,
            &result.probability_rows,
        )?;
    }
    Ok(())
}

/// Loads iteration records from a CSV file or from every `set_*.csv` in a
/// campaign directory.
pub fn load_records(path: &Path) -> Result<Vec<IterationRecord>> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("set_") && n.ends_with(".csv"))
            })
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::Config(format!("no set_*.csv files in {}", path.display())));
    }
    let mut records = Vec::new();
    for file in files {
        let origin = file.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(&file)
            .map_err(|e| Error::io(&file, e.into()))?;
        let mut rows = reader.records();
        match rows.next() {
            Some(Ok(header)) if header.iter().eq(CSV_HEADER.split(',')) => {}
            _ => return Err(Error::parse(&origin, 1, "missing or unexpected CSV header")),
        }
        for row in rows {
            let row = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::parse(&origin, line, e.to_string())
            })?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            if row.iter().all(|c| c.trim().is_empty()) {
                continue;
            }
            records.push(IterationRecord::from_csv(&row, &origin, line)?);
        }
    }
    Ok(records)
}

/// Final `total_units_dut` per set, with the iteration count of each set.
pub fn final_totals(records: &[IterationRecord]) -> BTreeMap<u32, (u64, u64)> {
    let mut out = BTreeMap::new();
    for r in records {
        let entry = out.entry(r.set).or_insert((0, 0));
        if r.iteration >= entry.1 {
            *entry = (r.total_units_dut, r.iteration);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub wins: u32,
    pub losses: u32,
    pub ties: u32,
    /// P(at least `wins` successes) under a fair coin, ties dropped.
    pub p_one_sided: f64,
    pub p_two_sided: f64,
}

/// P(X >= k) for X ~ Binomial(n, 1/2).
fn binomial_upper_tail(n: u32, k: u32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let dist = Binomial::new(0.5, n as u64).expect("valid binomial parameters");
    dist.sf(k as u64 - 1)
}

/// Paired sign test of `a` against `b`.
pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    let mut wins = 0;
    let mut losses = 0;
    let mut ties = 0;
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Greater) => wins += 1,
            Some(std::cmp::Ordering::Less) => losses += 1,
            _ => ties += 1,
        }
    }
    let n = wins + losses;
    let p_one_sided = if n == 0 { 1.0 } else { binomial_upper_tail(n, wins) };
    let p_two_sided = if n == 0 {
        1.0
    } else {
        (2.0 * binomial_upper_tail(n, wins.max(losses))).min(1.0)
    };
    SignTest {
        wins,
        losses,
        ties,
        p_one_sided,
        p_two_sided,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub median_a: f64,
    pub median_b: f64,
    pub baseline: f64,
    pub gain_a: f64,
    pub gain_b: f64,
    /// Relative gain of `a` over `b` in percent; `None` when `b` gained
    /// nothing over the baseline.
    pub improvement_pct: Option<f64>,
    pub sign: SignTest,
}

impl Comparison {
    pub fn report(&self) -> String {
        let improvement = self
            .improvement_pct
            .map_or_else(|| "undefined (no gain in b)".to_string(), |p| format!("{p:.2}%"));
        format!(
            "median final total_units_dut: a={} b={}\n\
             baseline: {}\n\
             gain over baseline: a={} b={}\n\
             improvement of a over b: {improvement}\n\
             sign test: wins={} losses={} ties={} p(one-sided)={:.5} p(two-sided)={:.5}\n",
            self.median_a,
            self.median_b,
            self.baseline,
            self.gain_a,
            self.gain_b,
            self.sign.wins,
            self.sign.losses,
            self.sign.ties,
            self.sign.p_one_sided,
            self.sign.p_two_sided
        )
    }
}

/// Compares two campaigns set by set. `baseline` is the coverage treated as
/// zero, typically the median final total of a no-fuzzing campaign.
pub fn compare_records(a: &[IterationRecord], b: &[IterationRecord], baseline: f64) -> Result<Comparison> {
    let fa = final_totals(a);
    let fb = final_totals(b);
    let shape = |m: &BTreeMap<u32, (u64, u64)>| m.iter().map(|(s, (_, i))| (*s, *i)).collect::<Vec<_>>();
    if shape(&fa) != shape(&fb) {
        return Err(Error::Config("campaigns differ in sets or iterations".into()));
    }
    let va: Vec<f64> = fa.values().map(|(t, _)| *t as f64).collect();
    let vb: Vec<f64> = fb.values().map(|(t, _)| *t as f64).collect();
    let median_a = median(&va);
    let median_b = median(&vb);
    let gain_a = median_a - baseline;
    let gain_b = median_b - baseline;
    let improvement_pct = (gain_b != 0.0).then(|| (gain_a - gain_b) / gain_b * 100.0);
    Ok(Comparison {
        median_a,
        median_b,
        baseline,
        gain_a,
        gain_b,
        improvement_pct,
        sign: sign_test(&va, &vb),
    })
}

pub fn compare_campaigns(a: &Path, b: &Path, baseline: Option<&Path>) -> Result<Comparison> {
    let ra = load_records(a)?;
    let rb = load_records(b)?;
    let base = match baseline {
        Some(path) => {
            let finals = final_totals(&load_records(path)?);
            median(&finals.values().map(|(t, _)| *t as f64).collect::<Vec<_>>())
        }
        None => 0.0,
    };
    compare_records(&ra, &rb, base)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "samples must pair up");
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::Feedback;

    #[test]
    fn sign_test_tail_values() {
        let wins9 = sign_test(&[1.0; 10], &[[0.0; 9].as_slice(), &[2.0]].concat());
        assert_eq!((wins9.wins, wins9.losses), (9, 1));
        assert!((wins9.p_one_sided - 11.0 / 1024.0).abs() < 1e-12);
        assert!((wins9.p_two_sided - 22.0 / 1024.0).abs() < 1e-12);
        let all_ties = sign_test(&[1.0; 4], &[1.0; 4]);
        assert_eq!(all_ties.ties, 4);
        assert_eq!(all_ties.p_one_sided, 1.0);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[]), 0.0);
    }

    #[test]
    fn spearman_with_ties() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        // Ranks (1.5, 1.5, 3) and (1, 2, 3): r = sqrt(3)/2.
        let r = spearman(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0]);
        assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn config_defaults_and_overrides() {
        let pairs = parse_key_values("mode = coverage\nreplay_prob = 0.25 # comment\nsets=3\n", "t").unwrap();
        let config = CampaignConfig::from_pairs(&pairs).unwrap();
        assert_eq!(config.fuzzer.kind, FuzzerKind::Coverage);
        assert_eq!(config.fuzzer.k, 3.0);
        assert_eq!(config.fuzzer.mut_prob, 0.75);
        assert_eq!(config.sets, 3);
        assert_eq!(config.fuzzer.feedback, Feedback::Grey);
        assert!(matches!(parse_key_values("bogus = 1", "t"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_key_values("\n\nno equals", "t"), Err(Error::Parse { line: 3, .. })));
    }
}
