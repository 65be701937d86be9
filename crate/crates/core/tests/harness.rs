//! Scenario runner: outputs, determinism, bundled scenarios.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nlslab::checks::Status;
use nlslab::harness::{bundled_scenarios, check_suite, run_scenario, SuiteLevel};
use nlslab::scenario::Scenario;

const SMALL: &str = r#"{
  "name": "small",
  "profile": { "kind": "mode_list", "modes": [{ "n": 1, "re": 0.5 }, { "n": -2, "re": 0.2 }] },
  "point_count": 32,
  "dt": 1e-3,
  "t_end": 1.0,
  "stride": 10,
  "K": 6,
  "frequency_range": 4,
  "write_trajectory": true
}"#;

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn csv_outputs_are_byte_identical_across_runs() {
    let scn = Scenario::from_json(SMALL, "inline").unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_scenario(&scn, a.path()).unwrap();
    run_scenario(&scn, b.path()).unwrap();
    let fa = files(a.path());
    assert_eq!(fa, files(b.path()));
    let names: BTreeSet<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for expected in [
        "conserved.csv",
        "trajectory.csv",
        "spectrum.csv",
        "frequencies.csv",
        "extract.csv",
        "compare_u_v_s3.csv",
        "compare_u_w_s3.csv",
        "norm_s2p5.csv",
        "sigma/sigma_n-4.csv",
        "sigma/sigma_n4.csv",
    ] {
        assert!(
            names.contains(expected),
            "missing {expected}; have {names:?}"
        );
    }
}

#[test]
fn summary_lists_every_criterion() {
    let scn = Scenario::from_json(SMALL, "inline").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_scenario(&scn, dir.path()).unwrap();
    assert_eq!(summary.criteria.len(), 11);
    assert!(summary.criteria.iter().all(|c| c.status == Status::Skipped));
    assert!(summary.passed);
    let json = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert!(json.contains("\"criteria\"") && json.contains("\"skipped\""));
}

#[test]
fn failing_criterion_sets_exit_code() {
    // Criterion 1 on non-zero data fails with a note.
    let text = SMALL.replace(
        "\"write_trajectory\": true",
        "\"criteria\": [1], \"stages\": [\"checks\"]",
    );
    let scn = Scenario::from_json(&text, "inline").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_scenario(&scn, dir.path()).unwrap();
    assert!(!summary.passed);
    assert_eq!(summary.exit_code(), 1);
    let c1 = &summary.criteria[0];
    assert_eq!(c1.status, Status::Fail);
    assert!(c1.note.as_deref().unwrap().contains("zero profile"));
}

#[test]
fn stage_errors_name_the_stage() {
    let text = SMALL.replace(
        "\"dt\": 1e-3",
        "\"dt\": 1e-3, \"spectrum\": { \"cells\": 4 }",
    );
    let scn = Scenario::from_json(&text, "inline").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = run_scenario(&scn, dir.path()).unwrap_err().to_string();
    assert!(err.contains("spectrum"), "{err}");
}

#[test]
fn bundled_scenarios_cover_all_criteria_once() {
    let scenarios = bundled_scenarios().unwrap();
    let mut all: Vec<u32> = scenarios.iter().flat_map(|s| s.criteria.clone()).collect();
    all.sort_unstable();
    assert_eq!(all, (1..=11).collect::<Vec<_>>());
}

#[test]
fn quick_suite_passes() {
    let report = check_suite(SuiteLevel::Quick).unwrap();
    for (name, c) in report.by_criterion() {
        assert_eq!(c.status, Status::Pass, "{name}: {}", c.line());
    }
    assert_eq!(
        report
            .by_criterion()
            .iter()
            .map(|(_, c)| c.id)
            .collect::<Vec<_>>(),
        SuiteLevel::Quick.criteria()
    );
}
