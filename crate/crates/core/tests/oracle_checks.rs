//! The oracles against their own hand examples.

mod common;

use common::oracles::*;

#[test]
fn dp_examples() {
    let single = DpOracleSpec {
        l1: vec![(0.0, 0.1)],
        l2: vec![(0.0, 0.0)],
        ed_death: vec![0.0],
        p_direct_ed: 0.0,
        horizon: 5,
    };
    let s = exact_semi_markov_os(&single);
    for (c, v) in s.iter().enumerate() {
        assert!((v - 0.9f64.powi(c as i32)).abs() < 1e-15);
    }
    let two = DpOracleSpec {
        l1: vec![(0.5, 0.0)],
        l2: vec![(0.0, 1.0)],
        ed_death: vec![0.0],
        p_direct_ed: 0.0,
        horizon: 3,
    };
    assert_eq!(exact_semi_markov_os(&two), vec![1.0, 1.0, 0.5, 0.25]);
}

#[test]
fn permutation_examples() {
    assert_eq!(permutation_ks(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], 1000, 0).unwrap(), 0.1);
    assert_eq!(permutation_ks(&[1.0, 3.0], &[2.0, 4.0], 1000, 0).unwrap(), 1.0);
    assert!(permutation_ks(&[], &[1.0], 10, 0).is_err());
}

#[test]
fn classify_examples() {
    let c = brute_force_classify(&[2.0, 5.0, 8.0], &[1, 1, 1], &[5.05], &[1], 0.1, true);
    assert_eq!(c, vec![1, 2, 1]);
    let c = brute_force_classify(&[3.0, 3.05], &[1, 1], &[3.0, 3.1], &[1, 1], 0.1, true);
    assert_eq!(c, vec![2, 2]);
}
