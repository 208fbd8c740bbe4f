//! CLI helpers shared by the integration targets.

use std::fs;
use std::path::Path;
use std::process::Command;

pub fn mobdp(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mobdp")).current_dir(dir).args(args).output().expect("binary runs")
}

pub fn ok(dir: &Path, args: &[&str]) {
    let out = mobdp(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

pub const GENERATE: &[&str] = &[
    "generate",
    "--users",
    "120",
    "--grid-side",
    "6",
    "--seed",
    "3",
    "--out-series",
    "s.csv",
    "--out-records",
    "r.csv",
    "--out-truth",
    "t.csv",
    "--out-grid",
    "g.json",
    "--history-days",
    "2",
    "--history-prefix",
    "h",
];

/// Every command of the pipeline, writing into the working directory.
pub fn pipeline(dir: &Path) {
    ok(dir, GENERATE);
    ok(dir, &["aggregate", "--records", "r.csv", "--grid", "g.json", "--out", "agg.csv", "--out-truth", "aggt.csv"]);
    for scheme in ["direct", "threshold", "static-hybrid", "dynamic-hybrid"] {
        let out = format!("p_{scheme}.csv");
        let pp = format!("pp_{scheme}.csv");
        ok(
            dir,
            &[
                "publish",
                "--scheme",
                scheme,
                "--epsilon",
                "0.8",
                "--in",
                "s.csv",
                "--out",
                &out,
                "--seed",
                "9",
                "--history",
                "h1.csv",
                "h2.csv",
                "--report",
                &format!("rep_{scheme}.json"),
            ],
        );
        ok(dir, &["postprocess", "--in", &out, "--out", &pp, "--seed", "9"]);
        ok(
            dir,
            &[
                "attack",
                "--series",
                &pp,
                "--truth",
                "t.csv",
                "--grid",
                "g.json",
                "--night",
                "0:6,17:18",
                "--out",
                &format!("a_{scheme}.json"),
            ],
        );
        ok(
            dir,
            &[
                "evaluate",
                "--raw",
                "s.csv",
                "--published",
                &pp,
                "--mre-denominator",
                "noisy",
                "--out",
                &format!("e_{scheme}.json"),
            ],
        );
    }
    fs::write(
        dir.join("exp.json"),
        r#"{"dataset": {"kind": "files", "series": "s.csv", "truth": "t.csv", "grid": "g.json", "history": ["h1.csv", "h2.csv"]},
            "schemes": ["direct", "threshold", "static-hybrid", "dynamic-hybrid"],
            "epsilons": [0.4, 0.8], "repeats": 2, "seed": 5,
            "attack": {"sigma": 1.0, "lambda": 1.0, "night": [[0, 6], [17, 18]]},
            "output": "report.csv"}"#,
    )
    .unwrap();
    ok(dir, &["experiment", "--config", "exp.json"]);
}

pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}
