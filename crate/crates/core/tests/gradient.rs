mod common;

#[test]
fn analytic_gradient_matches_central_differences() {
    for seed in 0..20 {
        let err = common::gradient_check(seed);
        assert!(err < 1e-5, "seed {seed}: relative error {err:e}");
    }
}
