//! Runs the acceptance battery, printing one line per criterion.

use fixnet::acceptance::{run_criterion, Outcome, CRITERIA};

#[test]
fn acceptance_battery() {
    let mut failed = Vec::new();
    for (id, _) in CRITERIA {
        let c = run_criterion(id).unwrap();
        println!("{c}");
        if c.outcome == Outcome::Fail {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
