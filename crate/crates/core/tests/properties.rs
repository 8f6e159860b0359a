//! Equilibrium properties on seeded tiny markets, checked with exact oracles.

mod common;

use common::SuiteResult;

fn assert_suite(r: SuiteResult) {
    assert_eq!(r.checked, common::INSTANCES, "{}: too few instances", r.name);
    assert_eq!(r.failures, 0, "{}: {} failing instances, first {:?}", r.name, r.failures, r.first_failure);
}

#[test]
fn envy_free_at_every_equilibrium() {
    assert_suite(common::envy_suite());
}

#[test]
fn no_mutual_swap_between_comparable_students() {
    assert_suite(common::swap_suite());
}

#[test]
fn deterministic_equilibria_are_pareto_efficient() {
    assert_suite(common::pareto_suite());
}

#[test]
fn deterministic_equilibria_run_out_at_cutoffs() {
    assert_suite(common::run_out_suite());
}

#[test]
fn deterministic_equilibria_survive_signal_expansion() {
    assert_suite(common::expansion_suite());
}

#[test]
fn comparable_students_order_their_signals() {
    assert_suite(common::ordering_suite());
}
