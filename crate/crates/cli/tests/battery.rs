//! `verify --battery` end to end. In its own binary so nothing else competes
//! with the timing check.

use std::process::Command;

#[test]
fn battery_passes_with_json_report() {
    let o = Command::new(env!("CARGO_BIN_EXE_treesample"))
        .args(["verify", "--battery", "--seed", "99", "--json"])
        .output()
        .expect("binary runs");
    let log = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(0), "{log}");
    let results: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(results.len(), 12);
    assert!(results.iter().all(|r| r["passed"] == true));
    assert_eq!(log.lines().filter(|l| l.starts_with("PASS")).count(), 12);
}
