mod common;

use std::fs;
use std::path::Path;

use mobdp::core::data::NoisySeries;
use mobdp::io::{format_series, parse_series};
use proptest::prelude::*;

use common::{mobdp, ok, pipeline, snapshot, GENERATE};

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert!(sa.len() > 20);
    for ((name, x), (_, y)) in sa.iter().zip(&sb) {
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn aggregate_reproduces_generated_series() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), GENERATE);
    ok(dir.path(), &["aggregate", "--records", "r.csv", "--grid", "g.json", "--out", "agg.csv"]);
    assert_eq!(fs::read(dir.path().join("agg.csv")).unwrap(), fs::read(dir.path().join("s.csv")).unwrap());
}

#[test]
fn report_has_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("scheme,epsilon,threshold,seed,repeat,mae,mre,attack_accuracy,error"));
    assert_eq!(lines.count(), 4 * 2 * 2);
    assert!(dir.path().join("report_summary.csv").exists());
    let attack: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a_direct.json")).unwrap()).unwrap();
    assert!(attack["accuracy"].as_f64().is_some());
    assert_eq!(attack["per_timestamp"].as_array().unwrap().len(), 19);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mobdp(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(mobdp(dir.path(), &["publish", "--help"]).status.code(), Some(0));
    assert_eq!(mobdp(dir.path(), &["publish", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(mobdp(dir.path(), &["frobnicate"]).status.code(), Some(2));
    let missing = mobdp(dir.path(), &["postprocess", "--in", "absent.csv", "--out", "x.csv"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.csv"));
}

#[test]
fn hybrid_without_history_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), GENERATE);
    let out = mobdp(
        dir.path(),
        &["publish", "--scheme", "dynamic-hybrid", "--epsilon", "1", "--in", "s.csv", "--out", "p.csv"],
    );
    assert_eq!(out.status.code(), Some(1));
}

proptest! {
    #[test]
    fn series_files_round_trip(
        rows in (1usize..5, 1usize..6).prop_flat_map(|(s, m)| prop::collection::vec(prop::collection::vec(-1e6f64..1e6, m), s)),
        interval in 1u64..100_000,
    ) {
        let series = NoisySeries::from_rows(rows, interval).unwrap();
        let text = format_series(&series);
        prop_assert_eq!(parse_series(&text, Path::new("mem")).unwrap(), series);
    }
}
