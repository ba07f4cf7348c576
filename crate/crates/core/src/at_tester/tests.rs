use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::adversaries::SubcubeBadSpec;
use crate::oracles::{Backend, OracleMode};

fn oracle(model: ModelSpec, mode: OracleMode, seed: u64) -> OracleHandle {
    OracleHandle::new(Arc::new(model), mode, Backend::Structural, ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn far_count<F>(trials: u64, mut run: F) -> u64
where
    F: FnMut(u64) -> TestRun,
{
    (0..trials).filter(|&t| run(t).verdict.is_far()).count() as u64
}

#[test]
fn levels_example() {
    assert_eq!(reverse_markov_levels(0.1, 1.6).unwrap(), 4);
    assert_eq!(reverse_markov_levels(0.5, 0.5).unwrap(), 0);
    assert!(reverse_markov_levels(1.0, 0.5).is_err());
    assert!(reverse_markov_levels(0.0, 1.0).is_err());
}

#[test]
fn levels_cover_two_point_variables() {
    for &eps in &[0.01, 0.1, 0.3, 1.0] {
        for &ratio in &[1.0, 1.5, 2.0, 3.7, 16.0, 100.0] {
            let m = eps * ratio;
            let l = reverse_markov_levels(eps, m).unwrap();
            // Y = M with probability eps/M, else 0.
            let hit = (0..=l).any(|lvl| {
                let threshold = 2f64.powi(lvl as i32 - 1) * eps;
                let pr = if threshold <= m { eps / m } else { 0.0 };
                pr >= 1.0 / (2f64.powi(lvl as i32) * (l + 1) as f64)
            });
            assert!(hit, "eps {eps} M {m}");
        }
    }
}

#[test]
fn schedule_shape() {
    let p = AtParameters::new(1.0, 0.5, 1.0, 8).unwrap();
    let s = Schedule::new(&p);
    assert!((s.eps_prime - 0.125).abs() < 1e-15);
    assert_eq!(s.top, reverse_markov_levels(0.125, 2f64.ln()).unwrap());
    for (l, level) in s.levels.iter().enumerate() {
        assert_eq!(level.repeats, (4u64 << l) * (s.top as u64 + 1));
        assert!((level.eps - 2f64.powi(l as i32 - 1) * 0.125).abs() < 1e-15);
    }
    assert!((s.delta - 2f64.powi(-2 * s.top as i32 - 6)).abs() < 1e-300);
    assert!(s.sub_failure <= 1.0 / 512.0);
    assert!(s.union_bound() <= 0.125);
}

#[test]
fn union_bound_holds_everywhere() {
    for n in [1, 2, 5, 10, 50] {
        for eps in [0.01, 0.1, 1.0, 5.0] {
            for eta in [0.01, 0.2, 0.5] {
                let s = Schedule::new(&AtParameters::new(2.0, eta, eps, n).unwrap());
                assert!(s.union_bound() <= 0.125);
            }
        }
    }
}

#[test]
fn budget_scale_shrinks_repeats() {
    let p = AtParameters::new(1.0, 0.5, 1.0, 8).unwrap();
    let full = Schedule::new(&p).total_pairs();
    let half = Schedule::new(&p.with_budget_scale(0.5).unwrap()).total_pairs();
    assert!(half < full && half >= full / 2);
    assert!(p.with_budget_scale(0.0).is_err());
}

#[test]
fn parameter_validation() {
    assert!(AtParameters::new(0.5, 0.3, 1.0, 4).is_err());
    assert!(AtParameters::new(1.0, 0.6, 1.0, 4).is_err());
    assert!(AtParameters::new(1.0, 0.3, -1.0, 4).is_err());
    assert!(AtParameters::new(1.0, 0.3, 1.0, 0).is_err());
}

#[test]
fn needs_coordinate_access() {
    let mu = ModelSpec::uniform(4, 2).unwrap();
    let mut h = oracle(mu.clone(), OracleMode::General, 0);
    let p = AtParameters::new(1.0, 0.5, 1.0, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(identity_test_coordinate(&mu, &p, &mut h, &mut rng), Err(Error::IncompatibleMode { .. })));
    assert!(matches!(identity_test_tv(&mu, &p, &mut h, &mut rng), Err(Error::IncompatibleMode { .. })));
}

#[test]
fn dimension_mismatch() {
    let mu = ModelSpec::uniform(4, 2).unwrap();
    let mut h = oracle(ModelSpec::uniform(5, 2).unwrap(), OracleMode::Coordinate, 0);
    let p = AtParameters::new(1.0, 0.5, 1.0, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(identity_test_coordinate(&mu, &p, &mut h, &mut rng), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn uniform_null_and_subcube_alternative() {
    let mu = ModelSpec::uniform(8, 2).unwrap();
    let p = AtParameters::new(1.0, 0.5, 1.0, 8).unwrap();
    let budget = coordinate_query_budget(&p);
    let null = far_count(12, |t| {
        let mut h = oracle(mu.clone(), OracleMode::Coordinate, t);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + t);
        let run = identity_test_coordinate(&mu, &p, &mut h, &mut rng).unwrap();
        assert!((run.counts.total() as f64) <= budget);
        run
    });
    assert!(null <= 4, "{null}");
    let far = far_count(12, |t| {
        let mut r = ChaCha8Rng::seed_from_u64(2000 + t);
        let bad = ModelSpec::subcube_bad(SubcubeBadSpec::random(8, 1, &mut r).unwrap());
        let mut h = oracle(bad, OracleMode::Coordinate, t);
        identity_test_coordinate(&mu, &p, &mut h, &mut r).unwrap()
    });
    assert!(far >= 8, "{far}");
}

#[test]
fn single_coordinate_alternative() {
    let mu = ModelSpec::product_iid(6, &[0.3, 0.7]).unwrap();
    let mut coords = vec![vec![0.3, 0.7]; 6];
    coords[2] = vec![0.95, 0.05];
    let pi = ModelSpec::product(coords).unwrap();
    let p = AtParameters::new(1.0, 0.3, 1.0, 6).unwrap();
    let far = far_count(12, |t| {
        let mut h = oracle(pi.clone(), OracleMode::Coordinate, t);
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + t);
        identity_test_coordinate(&mu, &p, &mut h, &mut rng).unwrap()
    });
    assert!(far >= 8, "{far}");
}

#[test]
fn support_violation_rejects() {
    let mu = ModelSpec::explicit(2, 2, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
    let pi = ModelSpec::uniform(2, 2).unwrap();
    let p = AtParameters::new(1.0, 0.5, 0.5, 2).unwrap();
    let mut h = oracle(pi, OracleMode::Coordinate, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let run = identity_test_coordinate(&mu, &p, &mut h, &mut rng).unwrap();
    assert_eq!(run.verdict, Verdict::Far);
    assert_eq!(run.reason, Some(RejectReason::Support));
}

#[test]
fn tv_wrapper_screens_support_first() {
    let mu = ModelSpec::explicit(2, 2, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
    let pi = ModelSpec::uniform(2, 2).unwrap();
    let p = AtParameters::new(1.0, 0.5, 0.5, 2).unwrap();
    let mut h = oracle(pi, OracleMode::Coordinate, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let run = identity_test_tv(&mu, &p, &mut h, &mut rng).unwrap();
    assert_eq!(run.reason, Some(RejectReason::Support));
    assert_eq!(run.levels_visited, 0);
    assert_eq!(run.counts.coordinate, 0);
    assert_eq!(tv_stage_one_samples(0.5), 10);
}

#[test]
fn tv_wrapper_null() {
    let mu = ModelSpec::uniform(4, 2).unwrap();
    let p = AtParameters::new(1.0, 0.5, 0.9, 4).unwrap();
    let far = far_count(6, |t| {
        let mut h = oracle(mu.clone(), OracleMode::Coordinate, t);
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + t);
        identity_test_tv(&mu, &p, &mut h, &mut rng).unwrap()
    });
    assert!(far <= 2, "{far}");
}

#[test]
fn worst_case_is_within_budget() {
    for n in [2, 4, 8] {
        for eps in [0.2, 1.0] {
            let p = AtParameters::new(1.0, 0.25, eps, n).unwrap();
            assert!(worst_case_queries(&p, 2) <= coordinate_query_budget(&p));
            assert!(budget_ratio(&p, 2) <= constants().coordinate.budget_c);
        }
    }
}

#[test]
fn same_seed_same_run() {
    let mu = ModelSpec::uniform(6, 2).unwrap();
    let p = AtParameters::new(1.0, 0.5, 1.0, 6).unwrap().with_budget_scale(0.2).unwrap();
    let go = || {
        let mut h = oracle(mu.clone(), OracleMode::Coordinate, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        identity_test_coordinate(&mu, &p, &mut h, &mut rng).unwrap()
    };
    assert_eq!(go(), go());
}
