//! Replays the checked-in fuzz corpus, plus byte-level mutations of it,
//! through the same parser entry points the fuzz targets exercise.

use std::fs;
use std::path::{Path, PathBuf};

use dpcoverage::accountant::{read_journal, BudgetLedger, QueryPlan};
use dpcoverage::table;
use dpcoverage::Epsilon;
use proptest::prelude::*;

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus")
}

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = corpus_dir().join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files.into_iter().map(|p| fs::read(p).unwrap()).collect()
}

fn counts_csv(data: &[u8]) -> bool {
    let Ok(records) = table::read_counts(data) else { return false };
    let mut buf = Vec::new();
    table::write_counts(&mut buf, &records).unwrap();
    assert_eq!(table::read_counts(&buf[..]).unwrap(), records);
    true
}

fn households_csv(data: &[u8]) -> bool {
    let Ok(records) = table::read_households(data) else { return false };
    let mut buf = Vec::new();
    table::write_households(&mut buf, &records).unwrap();
    assert_eq!(table::read_households(&buf[..]).unwrap(), records);
    true
}

fn release_csv(data: &[u8]) -> bool {
    let Ok(rows) = table::read_release(data) else { return false };
    let mut buf = Vec::new();
    table::write_release(&mut buf, &rows).unwrap();
    let again = table::read_release(&buf[..]).unwrap();
    for (a, b) in again.iter().zip(&rows) {
        assert_eq!((&a.zone, a.broadband_usage_raw, a.errors, a.epsilon), (&b.zone, b.broadband_usage_raw, b.errors, b.epsilon));
    }
    true
}

fn private_counts_csv(data: &[u8]) -> bool {
    let Ok(records) = table::read_private_counts(data) else { return false };
    for r in &records {
        let _ = r.coverage(Some(1));
    }
    let mut buf = Vec::new();
    table::write_private_counts(&mut buf, &records).unwrap();
    assert_eq!(table::read_private_counts(&buf[..]).unwrap(), records);
    true
}

fn buckets_csv(data: &[u8]) -> bool {
    table::read_buckets(data).is_ok()
}

fn query_plan(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else { return false };
    let Ok(plan) = text.parse::<QueryPlan>() else { return false };
    assert_eq!(plan.to_string().parse::<QueryPlan>().unwrap(), plan);
    let _ = plan.total_epsilon();
    true
}

fn ledger_journal(data: &[u8]) -> bool {
    let Ok(entries) = read_journal(data) else { return false };
    for e in &entries {
        assert!(read_journal(e.to_journal_line().as_bytes()).is_ok());
    }
    let _ = BudgetLedger::from_entries(Epsilon::from_units(u64::MAX), entries);
    true
}

fn epsilon(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else { return false };
    let Ok(e) = text.parse::<Epsilon>() else { return false };
    assert_eq!(e.to_string().parse::<Epsilon>().unwrap(), e);
    true
}

type Target = fn(&[u8]) -> bool;

const TARGETS: [(&str, Target); 8] = [
    ("counts_csv", counts_csv),
    ("households_csv", households_csv),
    ("release_csv", release_csv),
    ("private_counts_csv", private_counts_csv),
    ("buckets_csv", buckets_csv),
    ("query_plan", query_plan),
    ("ledger_journal", ledger_journal),
    ("epsilon", epsilon),
];

#[test]
fn every_target_has_accepted_and_rejected_seeds() {
    for (name, target) in TARGETS {
        let results: Vec<bool> = seeds(name).iter().map(|s| target(s)).collect();
        assert!(results.contains(&true), "{name}: no seed is accepted");
        if name != "buckets_csv" {
            assert!(results.contains(&false), "{name}: no seed is rejected");
        }
    }
}

#[test]
fn coverage_release_seed_totals_two_tenths() {
    let plan: QueryPlan = "SEQ(PAR(L:0.1,H:0.1),PAR(M:0.1,O:0.1))".parse().unwrap();
    assert_eq!(plan.total_epsilon().unwrap().to_string(), "0.2");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn mutated_seeds_never_panic(which in 0usize..TARGETS.len(), pick in any::<prop::sample::Index>(),
                                 edits in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..6)) {
        let (name, target) = TARGETS[which];
        let all = seeds(name);
        let mut data = pick.get(&all).clone();
        for (pos, byte) in edits {
            if data.is_empty() {
                data.push(byte);
            } else {
                let i = pos.index(data.len());
                data[i] = byte;
            }
        }
        target(&data);
    }
}
