//! Acceptance suite: every criterion on the bundled scenarios, one line each.

use nlslab::checks::Status;
use nlslab::harness::{check_suite, SuiteLevel};

#[test]
fn acceptance_criteria() {
    let report = check_suite(SuiteLevel::Full).expect("bundled scenarios load");
    let rows = report.by_criterion();
    let mut failed = Vec::new();
    for (scenario, c) in &rows {
        println!("{} [{scenario}]", c.line());
        if c.status == Status::Fail {
            failed.push(c.id);
        }
    }
    let covered: Vec<u32> = rows.iter().map(|(_, c)| c.id).collect();
    assert_eq!(
        covered,
        (1..=11).collect::<Vec<_>>(),
        "every criterion runs exactly once"
    );
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
