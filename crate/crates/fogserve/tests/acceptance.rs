use std::io::Write;

use fogserve::acceptance::{self, CRITERIA};

#[test]
fn acceptance_criteria() {
    // Independent criteria; run them side by side and report in order.
    let checks: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = CRITERIA.iter().map(|&(id, _, _)| s.spawn(move || acceptance::run(id))).collect();
        handles.into_iter().map(|h| h.join().expect("criterion panicked")).collect()
    });
    // Written to the raw handle so the table shows without --nocapture.
    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    for c in &checks {
        writeln!(out, "{c}").unwrap();
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    writeln!(out, "{} criteria, {} failed", checks.len(), failed.len()).unwrap();
    assert!(failed.is_empty(), "failed: {failed:?}");
}
