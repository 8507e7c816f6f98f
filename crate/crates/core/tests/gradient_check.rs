mod common;

use common::max_relative_error;

#[test]
fn analytic_gradient_matches_central_differences() {
    for seed in 0..100 {
        let e = max_relative_error(seed);
        assert!(e < 1e-4, "seed {seed}: max relative error {e:e}");
    }
}
