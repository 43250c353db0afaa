//! Analytic gradients against central finite differences.

mod common;

use common::grad::{full_stack_error, primitive_errors, MAX_REL};
use strurw::gnn::Aggregation;

#[test]
fn every_primitive_matches_finite_differences() {
    for (name, err) in primitive_errors() {
        assert!(err < MAX_REL, "{name}: max relative error {err:e}");
    }
}

#[test]
fn full_stack_matches_finite_differences() {
    for agg in [Aggregation::WeightedMean, Aggregation::WeightedSum] {
        let err = full_stack_error(agg);
        assert!(err < MAX_REL, "{agg:?}: max relative error {err:e}");
    }
}
