use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::adversaries::SubcubeBadSpec;
use crate::models::{balance_profile, kl_divergence};
use crate::oracles::Backend;
use crate::testers::{ExactTarget, IidStream, Verdict};

fn oracle(model: Arc<ModelSpec>, mode: crate::oracles::OracleMode, seed: u64) -> OracleHandle {
    OracleHandle::new(model, mode, Backend::Structural, ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn subcube(model: Arc<ModelSpec>, seed: u64) -> OracleHandle {
    oracle(model, crate::oracles::OracleMode::Subcube, seed)
}

fn within_rate<F>(runs: u64, tol: f64, truth: f64, mut est: F) -> f64
where
    F: FnMut(u64) -> f64,
{
    (0..runs).filter(|&t| (est(t) - truth).abs() <= tol).count() as f64 / runs as f64
}

#[test]
fn g_size_example() {
    assert_eq!(g_sample_size(0.25, 0.2), 385);
}

#[test]
fn rounds_and_repetitions() {
    assert_eq!(estimation_rounds(1, 0.5, 1.0), (8.0 * 2f64.ln().powi(2)).ceil() as u64);
    let r = round_repetitions(100, 1.0);
    assert_eq!(r, repetitions_for(1e-3, 0.3) as u64);
    assert!(round_repetitions(100, 0.01) >= 1);
}

#[test]
fn g_of_uniform_is_constant() {
    let q = SmallDistribution::uniform(4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut p = IidStream::new(q.masses(), ChaCha8Rng::seed_from_u64(2));
    let g = estimate_g(&mut ExactTarget(q), &mut p, 0.2, 0.25, 1.0, &mut rng).unwrap();
    assert!((g - 4f64.ln()).abs() < 1e-12);
    assert_eq!(p.consumed(), 385);
}

#[test]
fn g_of_skewed_target() {
    let q = SmallDistribution::new(vec![0.5, 0.25, 0.25]).unwrap();
    let truth = 0.5 * 2f64.ln() + 0.5 * 4f64.ln();
    let rate = within_rate(60, 0.1, truth, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(t);
        let mut p = IidStream::new(q.masses(), ChaCha8Rng::seed_from_u64(100 + t));
        estimate_g(&mut ExactTarget(q.clone()), &mut p, 0.1, 0.25, 1.0, &mut rng).unwrap()
    });
    assert!(rate >= 0.8, "{rate}");
}

#[test]
fn g_flags_unsupported_symbols() {
    let q = SmallDistribution::new(vec![1.0, 0.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut p = IidStream::new(&[0.0, 1.0], ChaCha8Rng::seed_from_u64(2));
    let r = estimate_g(&mut ExactTarget(q), &mut p, 0.2, 0.25, 1.0, &mut rng);
    assert!(matches!(r, Err(Error::UnsupportedSymbol { symbol: 1 })));
}

#[test]
fn entropy_examples() {
    let mm = MillerMadow::default();
    let cases: [(&[f64], f64); 3] = [
        (&[0.25; 4], 4f64.ln()),
        (&[0.75, 0.25], 0.5623351446188083),
        (&[1.0, 0.0, 0.0], 0.0),
    ];
    for (p, h) in cases {
        let rate = within_rate(100, 0.1, h, |t| {
            let mut s = IidStream::new(p, ChaCha8Rng::seed_from_u64(t));
            estimate_entropy(&mut s, p.len(), 0.1, 0.1, &mm, 1.0).unwrap()
        });
        assert!(rate >= 0.9, "{p:?} {rate}");
    }
}

#[test]
fn entropy_estimate_is_clamped() {
    let mm = MillerMadow::default();
    assert_eq!(mm.estimate(&[0, 0], 0), 0.0);
    assert!(mm.estimate(&[1, 1], 2) <= 2f64.ln());
    assert!(mm.estimate(&[5, 0], 5) >= 0.0);
    let mut s = IidStream::new(&[1.0], ChaCha8Rng::seed_from_u64(0));
    assert!(estimate_entropy(&mut s, 1, 0.1, 0.1, &mm, 1.0).is_err());
}

#[test]
fn small_kl_examples() {
    let mm = MillerMadow::default();
    let cases: [(&[f64], &[f64], f64, f64); 3] = [
        (&[0.1, 0.9], &[0.5, 0.5], 0.36806, 0.1),
        (&[0.7, 0.1, 0.1, 0.1], &[0.25; 4], 0.445843, 0.15),
        (&[0.3, 0.7], &[0.3, 0.7], 0.0, 0.1),
    ];
    for (p, q, kl, eps) in cases {
        let q = SmallDistribution::new(q.to_vec()).unwrap();
        let direct = SmallDistribution::new(p.to_vec()).unwrap().kl(&q);
        assert!((direct - kl).abs() < 1e-5);
        let b = q.eta_min();
        let rate = within_rate(60, eps, direct, |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(t);
            let mut s = IidStream::new(p, ChaCha8Rng::seed_from_u64(500 + t));
            estimate_kl_small(&mut ExactTarget(q.clone()), q.k(), &mut s, eps, b, &mm, 1.0, &mut rng).unwrap()
        });
        assert!(rate >= 2.0 / 3.0, "{p:?} {rate}");
    }
}

#[test]
fn schedule_matches_coordinate_tester_at_unit_constant() {
    for (b, eps, n) in [(0.5, 1.0, 8), (0.2, 0.3, 6), (0.1, 2.0, 12)] {
        let sp = SubcubeParameters::new(b, eps).unwrap().with_budget_scale(0.3).unwrap();
        let at = AtParameters::new(1.0, b, eps, n).unwrap().with_budget_scale(0.3).unwrap();
        assert_eq!(sp.schedule_parameters(n).unwrap(), at);
        assert_eq!(Schedule::new(&sp.schedule_parameters(n).unwrap()), Schedule::new(&at));
    }
}

#[test]
fn parameter_validation() {
    assert!(SubcubeParameters::new(0.6, 1.0).is_err());
    assert!(SubcubeParameters::new(0.0, 1.0).is_err());
    assert!(SubcubeParameters::new(0.3, 0.0).is_err());
}

#[test]
fn provider_order_and_marginals() {
    let m = Arc::new(ModelSpec::ising_path(4, 0.5).unwrap());
    assert!(ExactPrefixProvider::with_order(Arc::clone(&m), vec![0, 1, 1, 3]).is_err());
    assert!(ExactPrefixProvider::with_order(Arc::clone(&m), vec![0, 1, 2]).is_err());
    let p = ExactPrefixProvider::with_order(Arc::clone(&m), vec![3, 1, 0, 2]).unwrap();
    let got = p.marginal(2, &[1, 0]).unwrap();
    let pin = Pinning::from_pairs(4, &[(3, 1), (1, 0)]).unwrap();
    let want = m.conditional_marginal(0, &pin).unwrap();
    for (a, b) in got.masses().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn needs_subcube_access() {
    let m = Arc::new(ModelSpec::uniform(3, 2).unwrap());
    let provider = ExactPrefixProvider::new(Arc::clone(&m));
    let mut h = oracle(m, crate::oracles::OracleMode::Coordinate, 0);
    let params = SubcubeParameters::new(0.5, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(
        identity_test_subcube(&provider, &params, &mut h, &mut rng),
        Err(Error::IncompatibleMode { .. })
    ));
    assert!(matches!(
        estimate_kl_global(&provider, &params, &mut h, &MillerMadow::default(), &mut rng),
        Err(Error::IncompatibleMode { .. })
    ));
}

#[test]
fn subcube_tester_null_on_ising() {
    let m = Arc::new(ModelSpec::ising_path(6, 0.4).unwrap());
    let b = balance_profile(&m, true).unwrap().b.unwrap();
    let provider = ExactPrefixProvider::new(Arc::clone(&m));
    let params = SubcubeParameters::new(b, 1.0).unwrap();
    let far = (0..6)
        .filter(|&t| {
            let mut h = subcube(Arc::clone(&m), t);
            let mut rng = ChaCha8Rng::seed_from_u64(10 + t);
            identity_test_subcube(&provider, &params, &mut h, &mut rng).unwrap().verdict.is_far()
        })
        .count();
    assert!(far <= 2, "{far}");
}

#[test]
fn subcube_tester_rejects_subcube_bad() {
    let mu = Arc::new(ModelSpec::uniform(8, 2).unwrap());
    let provider = ExactPrefixProvider::new(Arc::clone(&mu));
    for approximate in [None, Some(Perturbation::Alternating)] {
        let mut params = SubcubeParameters::new(0.5, 1.0).unwrap();
        if let Some(mode) = approximate {
            params = params.with_approximation(mode);
        }
        let far = (0..10)
            .filter(|&t| {
                let mut r = ChaCha8Rng::seed_from_u64(20 + t);
                let pi = Arc::new(ModelSpec::subcube_bad(SubcubeBadSpec::random(8, 1, &mut r).unwrap()));
                let mut h = subcube(pi, t);
                identity_test_subcube(&provider, &params, &mut h, &mut r).unwrap().verdict.is_far()
            })
            .count();
        assert!(far >= 7, "{approximate:?} {far}");
    }
}

#[test]
fn subcube_tester_support_violation() {
    let mu = Arc::new(ModelSpec::explicit(2, 2, vec![0.5, 0.5, 0.0, 0.0]).unwrap());
    let provider = ExactPrefixProvider::new(Arc::clone(&mu));
    let mut h = subcube(Arc::new(ModelSpec::uniform(2, 2).unwrap()), 3);
    let params = SubcubeParameters::new(0.5, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let run = identity_test_subcube(&provider, &params, &mut h, &mut rng).unwrap();
    assert_eq!(run.verdict, Verdict::Far);
}

#[test]
fn global_estimate_on_products() {
    let mu = Arc::new(ModelSpec::product_iid(4, &[0.5, 0.5]).unwrap());
    let pi = Arc::new(ModelSpec::product_iid(4, &[0.4, 0.6]).unwrap());
    let truth = kl_divergence(&pi, &mu).unwrap();
    let provider = ExactPrefixProvider::new(Arc::clone(&mu));
    let params = SubcubeParameters::new(0.5, 0.3).unwrap().with_budget_scale(0.02).unwrap();
    let mm = MillerMadow::default();
    let mut hits = 0;
    for t in 0..6 {
        let mut h = subcube(Arc::clone(&pi), t);
        let mut rng = ChaCha8Rng::seed_from_u64(40 + t);
        let est = estimate_kl_global(&provider, &params, &mut h, &mm, &mut rng).unwrap();
        assert_eq!(est.rounds, estimation_rounds(4, 0.5, 0.3));
        assert!(!est.support_violation);
        assert!(est.counts.general == est.rounds);
        if (est.estimate.unwrap() - truth).abs() <= 0.3 {
            hits += 1;
        }
    }
    assert!(hits >= 4, "{hits}");
}

#[test]
fn global_estimate_flags_support() {
    let mu = Arc::new(ModelSpec::explicit(2, 2, vec![0.5, 0.5, 0.0, 0.0]).unwrap());
    let provider = ExactPrefixProvider::new(Arc::clone(&mu));
    let mut h = subcube(Arc::new(ModelSpec::uniform(2, 2).unwrap()), 5);
    let params = SubcubeParameters::new(0.5, 0.5).unwrap().with_budget_scale(0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let est = estimate_kl_global(&provider, &params, &mut h, &MillerMadow::default(), &mut rng).unwrap();
    assert!(est.support_violation);
    assert_eq!(est.estimate, None);
    assert_eq!(tolerant_verdict(&est, 10.0, 0.5), Verdict::Far);
}

#[test]
fn tolerant_threshold() {
    let mk = |v| KlEstimate {
        estimate: Some(v),
        support_violation: false,
        rounds: 1,
        repetitions: 1,
        round_stats: None,
        counts: QueryCounts::default(),
    };
    assert_eq!(tolerant_verdict(&mk(0.24), 0.0, 0.5), Verdict::Equal);
    assert_eq!(tolerant_verdict(&mk(0.26), 0.0, 0.5), Verdict::Far);
    assert_eq!(tolerant_verdict(&mk(1.2), 1.0, 0.5), Verdict::Equal);
}
