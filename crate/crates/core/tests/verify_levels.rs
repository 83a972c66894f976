use ising_poisson::verify::{run, Level};

#[test]
fn quick_suite_is_all_green() {
    let checks = run(Level::Quick);
    assert!(!checks.is_empty());
    for c in &checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
}

#[test]
fn full_suite_is_all_green() {
    let checks = run(Level::Full);
    assert!(checks.len() > run(Level::Quick).len());
    for c in &checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
}
