//! Campaign orchestration: determinism, output files, CSV accounting and
//! comparison against a no-fuzzing baseline.

use std::fs;
use std::path::Path;

use attachfuzz::campaign::{
    compare_campaigns, crash_seed_path, load_records, parse_key_values, run_campaign, CampaignConfig, CSV_HEADER,
    SUMMARY_HEADER,
};
use attachfuzz::seed::Seed;
use attachfuzz::sim::{reproduce, ReproMode};

fn config(text: &str, out_dir: Option<&Path>) -> CampaignConfig {
    let mut pairs = parse_key_values(text, "inline").unwrap();
    if let Some(dir) = out_dir {
        pairs.push(("out_dir".into(), dir.display().to_string()));
    }
    CampaignConfig::from_pairs(&pairs).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn crash_files(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let root = dir.join("crashes");
    if !root.exists() {
        return out;
    }
    for set in fs::read_dir(&root).unwrap() {
        let set = set.unwrap().path();
        for file in fs::read_dir(&set).unwrap() {
            let file = file.unwrap().path();
            out.push(format!("{}\n{}", file.strip_prefix(dir).unwrap().display(), fs::read_to_string(&file).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let text = "mode = coverage\nk = 2\nsets = 2\niterations = 200\nrng_seed = 99\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_campaign(&config(text, Some(a.path()))).unwrap();
    run_campaign(&config(text, Some(b.path()))).unwrap();
    for name in ["set_0.csv", "set_1.csv", "summary.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let crashes = crash_files(a.path());
    assert!(!crashes.is_empty(), "expected at least one crash in 400 iterations");
    assert_eq!(crashes, crash_files(b.path()));
}

#[test]
fn different_sets_use_different_streams() {
    let summary = run_campaign(&config("k = 2\nsets = 2\niterations = 50\n", None)).unwrap();
    let a: Vec<_> = summary.sets[0].records.iter().map(|r| r.mutated_fields).collect();
    let b: Vec<_> = summary.sets[1].records.iter().map(|r| r.mutated_fields).collect();
    assert_ne!(a, b);
}

#[test]
fn no_fuzzing_closes_after_the_first_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_campaign(&config("mode = nofuzz\nsets = 2\niterations = 10\n", Some(dir.path()))).unwrap();
    let records = load_records(dir.path()).unwrap();
    assert_eq!(records.len(), 20);
    for r in &records {
        assert_eq!(r.mutated_fields, 0);
        assert_eq!(r.packets, 9);
        assert!(r.crash_id.is_none() && !r.hang);
        if r.iteration > 1 {
            assert_eq!((r.new_units_dut, r.new_units_peer), (0, 0), "{r:?}");
        }
    }
    let totals = summary.final_totals_dut();
    assert_eq!(totals[0], totals[1]);
    assert!(totals[0] > 0.0);
    assert!(crash_files(dir.path()).is_empty());
}

#[test]
fn csv_rows_accumulate_consistently() {
    let dir = tempfile::tempdir().unwrap();
    run_campaign(&config("mode = coverage\nk = 2\nsets = 2\niterations = 150\n", Some(dir.path()))).unwrap();
    for set in 0..2 {
        let text = read(dir.path(), &format!("set_{set}.csv"));
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        let records = load_records(&dir.path().join(format!("set_{set}.csv"))).unwrap();
        assert_eq!(records.len(), 150);
        let (mut dut, mut peer) = (0, 0);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.iteration, i as u64 + 1);
            assert_eq!(r.total_units_dut, dut + r.new_units_dut);
            assert_eq!(r.total_units_peer, peer + r.new_units_peer);
            dut = r.total_units_dut;
            peer = r.total_units_peer;
            if let Some(id) = &r.crash_id {
                let seed = Seed::load(&crash_seed_path(dir.path(), set, r.iteration)).unwrap();
                assert_eq!(seed.outcome.as_ref().map(|o| o.bug_id.as_str()), Some(id.as_str()));
            }
        }
    }
    let summary = read(dir.path(), "summary.csv");
    let lines: Vec<_> = summary.lines().collect();
    assert_eq!(lines[0], SUMMARY_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("median,"));
}

#[test]
fn saved_crash_seeds_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    run_campaign(&config("k = 1\nsets = 1\niterations = 300\nrng_seed = 5\n", Some(dir.path()))).unwrap();
    let records = load_records(dir.path()).unwrap();
    let crashed: Vec<_> = records.iter().filter(|r| r.crash_id.is_some()).collect();
    assert!(!crashed.is_empty());
    for r in crashed {
        let seed = Seed::load(&crash_seed_path(dir.path(), 0, r.iteration)).unwrap();
        let id = r.crash_id.as_deref();
        assert_eq!(reproduce(&seed, ReproMode::ReplayAll).crash_id(), id, "iteration {}", r.iteration);
        assert_eq!(reproduce(&seed, ReproMode::Full).crash_id(), id, "iteration {}", r.iteration);
    }
}

#[test]
fn comparison_against_self_and_baseline() {
    let base = tempfile::tempdir().unwrap();
    let fuzzed = tempfile::tempdir().unwrap();
    run_campaign(&config("mode = nofuzz\nsets = 4\niterations = 100\n", Some(base.path()))).unwrap();
    run_campaign(&config("mode = random\nk = 0.5\nsets = 4\niterations = 100\n", Some(fuzzed.path()))).unwrap();

    let same = compare_campaigns(fuzzed.path(), fuzzed.path(), Some(base.path())).unwrap();
    assert_eq!(same.improvement_pct, Some(0.0));
    assert_eq!((same.sign.wins, same.sign.losses, same.sign.ties), (0, 0, 4));
    assert_eq!(same.sign.p_one_sided, 1.0);

    let vs_base = compare_campaigns(fuzzed.path(), base.path(), None).unwrap();
    assert!(vs_base.median_a > vs_base.median_b, "{}", vs_base.report());
    assert_eq!(vs_base.sign.wins, 4);

    let gain = compare_campaigns(base.path(), base.path(), Some(base.path())).unwrap();
    assert_eq!(gain.gain_a, 0.0);
    assert_eq!(gain.improvement_pct, None);

    let short = tempfile::tempdir().unwrap();
    run_campaign(&config("mode = nofuzz\nsets = 4\niterations = 50\n", Some(short.path()))).unwrap();
    assert!(compare_campaigns(fuzzed.path(), short.path(), None).is_err());
}

#[test]
fn diagnostics_files_are_written_on_request() {
    let dir = tempfile::tempdir().unwrap();
    run_campaign(&config("mode = coverage\nsets = 1\niterations = 20\ndiagnostics = on\n", Some(dir.path()))).unwrap();
    let diag = read(dir.path(), "diagnostics_0.csv");
    assert_eq!(diag.lines().count(), 21);
    let table = read(dir.path(), "probabilities_0.csv");
    assert!(table.lines().count() > 20);
}
