use parboost::adversary::{
    coin_oracle, expected_majority_loss, measure_expected_loss, run_trial, AdversaryParams, Constants, LearnerKind,
    OracleMode,
};

fn params(p: usize, r: usize, c_s: f64) -> AdversaryParams {
    let mut a = AdversaryParams::new(200, 2.0, p, r, 4, 0.1);
    a.constants = Constants { c_s, c_b: 1.0, c_l: 1.0 };
    a
}

#[test]
fn halt_rate_respects_bound_with_larger_blocks() {
    for &(p, r) in &[(1, 1), (4, 1), (1, 4), (4, 4)] {
        let a = params(p, r, 3.0);
        let e = measure_expected_loss(LearnerKind::NaiveBoosting, &a, 300, 21).unwrap();
        assert!(
            e.halt_rate - 3.0 * e.halt_half_width <= e.halt_bound,
            "p={p} R={r}: halt rate {} vs bound {}",
            e.halt_rate,
            e.halt_bound
        );
    }
}

#[test]
fn majority_decoder_matches_closed_form() {
    let a = params(3, 1, 1.0);
    let e = measure_expected_loss(LearnerKind::MajorityDecoder, &a, 3000, 4).unwrap();
    let exact = expected_majority_loss(200, 3, 0.1).unwrap();
    assert_eq!(e.exact_majority, exact);
    assert!((e.mean - exact).abs() <= 3.0 * e.half_width, "{} vs {exact}", e.mean);
}

#[test]
fn concept_has_zero_loss_and_all_ones_half() {
    let a = params(1, 1, 1.0);
    assert_eq!(run_trial(LearnerKind::Concept, &a, 3, 0).unwrap().loss, 0.0);
    let e = measure_expected_loss(LearnerKind::AllOnes, &a, 2000, 3).unwrap();
    assert!((e.mean - 0.5).abs() <= 3.0 * e.half_width);
}

#[test]
fn trials_are_reproducible() {
    let a = params(2, 2, 1.0);
    for kind in LearnerKind::ALL {
        assert_eq!(run_trial(kind, &a, 8, 5).unwrap(), run_trial(kind, &a, 8, 5).unwrap());
    }
}

#[test]
fn protocol_learners_issue_p_t_queries_at_most() {
    let a = params(3, 1, 1.0);
    for i in 0..20 {
        let out = run_trial(LearnerKind::NaiveBoosting, &a, 12, i).unwrap();
        assert!(out.queries <= a.p * a.t);
        assert_eq!(out.concept_responses, 0);
    }
}

#[test]
fn concept_oracle_is_counted() {
    let mut a = params(2, 1, 1.0);
    a.oracle = OracleMode::WithConcept;
    a.extension = false;
    let e = measure_expected_loss(LearnerKind::NaiveBoosting, &a, 50, 1).unwrap();
    assert_eq!(e.halts, 0);
    assert!(e.mean <= 0.5);
}

#[test]
fn coin_oracle_small_cases() {
    assert_eq!(coin_oracle(1, 0.2).unwrap(), 0.3);
    assert_eq!(coin_oracle(3, 0.1).unwrap(), 0.352);
    assert!(coin_oracle(0, 0.1).is_err() || coin_oracle(0, 0.1).unwrap() == 0.5);
}
