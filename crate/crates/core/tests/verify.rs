use kdpid::verify::{run_suite, Suite};
use kdpid::SolverOptions;

#[test]
fn every_suite_passes_on_a_small_batch() {
    let report = run_suite(Suite::All, 20, 7, &SolverOptions::default());
    for v in &report.verdicts {
        assert!(v.passed, "{} / {}: {:?}", v.suite, v.property, v.counterexamples);
        assert!(v.checked > 0, "{} / {} checked nothing", v.suite, v.property);
    }
    assert!(report.passed);
}

#[test]
fn reports_are_reproducible() {
    let a = run_suite(Suite::Thm2, 10, 3, &SolverOptions::default());
    let b = run_suite(Suite::Thm2, 10, 3, &SolverOptions::default());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
