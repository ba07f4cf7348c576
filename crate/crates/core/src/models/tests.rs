use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::adversaries::{MatchedIsingSpec, SubcubeBadSpec};

fn random_masses<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 0.01).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn uniform_mass() {
    let m = ModelSpec::uniform(3, 2).unwrap();
    assert!(close(m.mass(&[0, 1, 0]).unwrap(), 0.125, 1e-15));
}

#[test]
fn product_mass() {
    let m = ModelSpec::product_iid(3, &[0.7, 0.3]).unwrap();
    assert!(close(m.mass(&[0, 0, 1]).unwrap(), 0.147, 1e-15));
}

#[test]
fn ising_single_edge_mass() {
    let m = ModelSpec::ising(2, vec![(0, 1, 0.5)], vec![0.0; 2]).unwrap();
    let e = 0.5f64.exp();
    let expected = e / (2.0 * e + 2.0 / e);
    assert!(close(m.mass(&[0, 0]).unwrap(), expected, 1e-14));
    assert!(close(expected, 0.3655, 1e-4));
}

#[test]
fn mass_rejects_wrong_dimension() {
    let m = ModelSpec::uniform(3, 2).unwrap();
    assert!(matches!(m.mass(&[0, 1]), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(m.mass(&[0, 1, 2]), Err(Error::InvalidSymbol { .. })));
}

#[test]
fn scale_guard_is_enforced() {
    let m = ModelSpec::ising_path(23, 0.1).unwrap();
    assert!(matches!(m.table(), Err(Error::ScaleGuardExceeded { .. })));
    let mut x = vec![0; 23];
    x[3] = 1;
    assert!(m.mass(&x).is_err());
}

#[test]
fn every_variant_normalises() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let models = vec![
        ModelSpec::uniform(4, 3).unwrap(),
        ModelSpec::product(vec![random_masses(&mut rng, 3), random_masses(&mut rng, 3)]).unwrap(),
        ModelSpec::ising(4, vec![(0, 1, 0.3), (1, 2, -0.7), (2, 3, 1.1)], vec![0.1, -0.2, 0.0, 0.4]).unwrap(),
        ModelSpec::explicit(2, 3, random_masses(&mut rng, 9)).unwrap(),
        ModelSpec::subcube_bad(SubcubeBadSpec::random(8, 2, &mut rng).unwrap()),
        ModelSpec::matched_ising(MatchedIsingSpec::consecutive(6, 0.4).unwrap()),
        ModelSpec::matched_ising(MatchedIsingSpec::consecutive(5, 0.4).unwrap()),
        ModelSpec::product_mixture(
            vec![0.3, 0.7],
            vec![vec![vec![0.9, 0.1]; 3], vec![vec![0.2, 0.8]; 3]],
        )
        .unwrap(),
    ];
    for m in &models {
        let total: f64 = m.table().unwrap().masses.iter().sum();
        assert!(close(total, 1.0, 1e-10), "{} sums to {total}", m.variant_name());
    }
}

#[test]
fn explicit_table_validates_masses() {
    assert!(ModelSpec::explicit(1, 2, vec![0.5, 0.6]).is_err());
    assert!(ModelSpec::explicit(1, 2, vec![-0.1, 1.1]).is_err());
    assert!(ModelSpec::explicit(1, 2, vec![1.0]).is_err());
}

#[test]
fn ising_rejects_bad_graphs() {
    assert!(ModelSpec::ising(3, vec![(0, 0, 1.0)], vec![0.0; 3]).is_err());
    assert!(ModelSpec::ising(3, vec![(0, 1, 1.0), (1, 0, 1.0)], vec![0.0; 3]).is_err());
    assert!(ModelSpec::ising(3, vec![(0, 5, 1.0)], vec![0.0; 3]).is_err());
    assert!(ModelSpec::ising(3, vec![(0, 1, f64::NAN)], vec![0.0; 3]).is_err());
}

#[test]
fn ising_isolated_vertex_is_fair() {
    let m = ModelSpec::ising(3, vec![(0, 1, 0.8)], vec![0.0; 3]).unwrap();
    let pin = Pinning::from_pairs(3, &[(0, 0), (1, 1)]).unwrap();
    let q = m.conditional_marginal(2, &pin).unwrap();
    assert!(close(q[0], 0.5, 1e-15));
}

#[test]
fn ising_edge_conditional_is_tanh_form() {
    let beta = 0.6;
    let m = ModelSpec::ising(2, vec![(0, 1, beta)], vec![0.0; 2]).unwrap();
    let q = m.conditional_marginal(1, &Pinning::from_pairs(2, &[(0, 0)]).unwrap()).unwrap();
    assert!(close(q[0], (1.0 + f64::tanh(beta)) / 2.0, 1e-14));
}

#[test]
fn uniform_conditional_is_flat() {
    let m = ModelSpec::uniform(5, 2).unwrap();
    let pin = Pinning::from_pairs(5, &[(0, 1), (3, 0)]).unwrap();
    assert_eq!(m.conditional_marginal(2, &pin).unwrap(), vec![0.5, 0.5]);
}

fn enumerated_conditional(m: &ModelSpec, i: usize, pin: &Pinning) -> Option<Vec<f64>> {
    let t = m.table().unwrap();
    let mut w = vec![0.0; m.k()];
    for (idx, &mass) in t.masses.iter().enumerate() {
        let x = config_at(idx, m.n(), m.k());
        if pin.as_slice().iter().zip(&x).all(|(p, &v)| p.is_none_or(|s| s == v)) {
            w[x[i]] += mass;
        }
    }
    let z: f64 = w.iter().sum();
    (z > 0.0).then(|| w.iter().map(|v| v / z).collect())
}

#[test]
fn conditional_marginal_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut sparse = random_masses(&mut rng, 27);
    sparse[4] = 0.0;
    sparse[13] = 0.0;
    let s: f64 = sparse.iter().sum();
    sparse.iter_mut().for_each(|v| *v /= s);
    let models = vec![
        ModelSpec::ising(5, vec![(0, 1, 0.3), (1, 2, -0.7), (2, 3, 1.1), (0, 4, 0.5)], vec![0.1, -0.2, 0.0, 0.4, 0.2])
            .unwrap(),
        ModelSpec::explicit(3, 3, sparse).unwrap(),
        ModelSpec::subcube_bad(SubcubeBadSpec::random(6, 2, &mut rng).unwrap()),
        ModelSpec::matched_ising(MatchedIsingSpec::consecutive(6, 0.9).unwrap()),
        ModelSpec::product_mixture(vec![0.4, 0.6], vec![vec![vec![0.9, 0.1]; 5], vec![vec![0.3, 0.7]; 5]]).unwrap(),
    ];
    for m in &models {
        let (n, k) = (m.n(), m.k());
        for _ in 0..200 {
            let i = rng.random_range(0..n);
            let mut pin = Pinning::free(n);
            for j in (0..n).filter(|&j| j != i) {
                if rng.random::<f64>() < 0.6 {
                    pin.set(j, Some(rng.random_range(0..k)));
                }
            }
            match (m.conditional_marginal(i, &pin), enumerated_conditional(m, i, &pin)) {
                (Ok(got), Some(want)) => {
                    for (g, w) in got.iter().zip(&want) {
                        assert!(close(*g, *w, 1e-12), "{}: {got:?} vs {want:?}", m.variant_name());
                    }
                }
                (Err(Error::ZeroProbabilityPinning | Error::InfeasiblePinning), None) => {}
                (got, want) => panic!("{}: {got:?} vs {want:?}", m.variant_name()),
            }
        }
    }
}

#[test]
fn conditional_joint_matches_enumeration() {
    let m = ModelSpec::ising_path(4, 0.7).unwrap();
    let pin = Pinning::from_pairs(4, &[(1, 1)]).unwrap();
    let joint = m.conditional_joint(&pin).unwrap();
    assert_eq!(joint.len(), 8);
    let t = m.table().unwrap();
    let mut free = Vec::new();
    for (idx, &mass) in t.masses.iter().enumerate() {
        let x = config_at(idx, 4, 2);
        if x[1] == 1 {
            free.push(mass);
        }
    }
    let z: f64 = free.iter().sum();
    for (a, b) in joint.iter().zip(&free) {
        assert!(close(*a, b / z, 1e-12));
    }
}

#[test]
fn kl_examples() {
    let p = ModelSpec::product_iid(1, &[0.1, 0.9]).unwrap();
    let q = ModelSpec::uniform(1, 2).unwrap();
    let kl = kl_divergence(&p, &q).unwrap();
    assert!(close(kl, 0.9 * 1.8f64.ln() + 0.1 * 0.2f64.ln(), 1e-14));
    assert!(close(kl, 0.36806, 1e-5));
    assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
}

#[test]
fn kl_is_infinite_off_support() {
    let p = ModelSpec::explicit(1, 2, vec![0.5, 0.5]).unwrap();
    let q = ModelSpec::explicit(1, 2, vec![1.0, 0.0]).unwrap();
    assert_eq!(kl_divergence(&p, &q).unwrap(), f64::INFINITY);
}

#[test]
fn product_kl_is_additive() {
    let p = ModelSpec::product_iid(4, &[0.4, 0.6]).unwrap();
    let q = ModelSpec::uniform(4, 2).unwrap();
    let one = 0.6 * 1.2f64.ln() + 0.4 * 0.8f64.ln();
    let kl = kl_divergence(&p, &q).unwrap();
    assert!(close(kl, 4.0 * one, 1e-13));
    assert!(close(kl, 0.08054, 1e-5));
}

#[test]
fn tv_examples() {
    let q = ModelSpec::uniform(10, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = ModelSpec::subcube_bad(SubcubeBadSpec::random(10, 3, &mut rng).unwrap());
    let want = (1.0 - 2f64.powi(-7)) * 2f64.powi(-3);
    assert!(close(tv_distance(&p, &q).unwrap(), want, 1e-12));
    let beta = 0.7;
    let mi = ModelSpec::matched_ising(MatchedIsingSpec::consecutive(2, beta).unwrap());
    assert!(close(tv_distance(&mi, &ModelSpec::uniform(2, 2).unwrap()).unwrap(), 0.5 * beta.tanh(), 1e-14));
    assert_eq!(tv_distance(&q, &q).unwrap(), 0.0);
}

#[test]
fn pinsker_holds_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let p = ModelSpec::explicit(2, 3, random_masses(&mut rng, 9)).unwrap();
        let q = ModelSpec::explicit(2, 3, random_masses(&mut rng, 9)).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        let tv = tv_distance(&p, &q).unwrap();
        assert!(kl >= 2.0 * tv * tv - 1e-10);
    }
}

#[test]
fn balance_examples() {
    let b = balance_profile(&ModelSpec::uniform(5, 2).unwrap(), false).unwrap();
    assert_eq!((b.eta, b.b), (0.5, Some(0.5)));
    let b = balance_profile(&ModelSpec::product_iid(4, &[0.7, 0.3]).unwrap(), true).unwrap();
    assert!(close(b.eta, 0.3, 1e-15));
    let m = ModelSpec::ising(2, vec![(0, 1, 1.0)], vec![0.0; 2]).unwrap();
    let b = balance_profile(&m, false).unwrap();
    let want = (-1f64).exp() / (1f64.exp() + (-1f64).exp());
    assert!(close(b.eta, want, 1e-12));
    assert!(close(b.eta, 0.1192, 1e-4));
}

#[test]
fn balance_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let m = ModelSpec::explicit(3, 2, random_masses(&mut rng, 8)).unwrap();
        for prefix in [true, false] {
            let b = balance_profile(&m, prefix).unwrap();
            assert!(b.eta <= 0.5 + 1e-15);
            assert!(b.b.unwrap() <= b.eta);
        }
    }
}

#[test]
fn chain_rule_sums_to_kl() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let mu = ModelSpec::explicit(2, 3, random_masses(&mut rng, 9)).unwrap();
        let pi = ModelSpec::explicit(2, 3, random_masses(&mut rng, 9)).unwrap();
        let terms = chain_rule_decomposition(&mu, &pi).unwrap();
        assert!(close(terms.iter().sum(), kl_divergence(&pi, &mu).unwrap(), 1e-10));
    }
    let mu = ModelSpec::ising_path(3, 0.3).unwrap();
    assert!(chain_rule_decomposition(&mu, &mu).unwrap().iter().all(|t| t.abs() < 1e-14));
}

#[test]
fn chain_rule_for_subcube_bad() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pi = ModelSpec::subcube_bad(SubcubeBadSpec::random(8, 1, &mut rng).unwrap());
    let mu = ModelSpec::uniform(8, 2).unwrap();
    let s: f64 = chain_rule_decomposition(&mu, &pi).unwrap().iter().sum();
    assert!(close(s, 2f64.ln() / 2.0 * 7.0, 1e-10));
}

#[test]
fn chain_rule_reports_support_violation() {
    let mu = ModelSpec::explicit(1, 2, vec![1.0, 0.0]).unwrap();
    let pi = ModelSpec::uniform(1, 2).unwrap();
    assert!(matches!(chain_rule_decomposition(&mu, &pi), Err(Error::SupportViolation)));
}

#[test]
fn product_tensorization_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let mu = ModelSpec::product((0..3).map(|_| random_masses(&mut rng, 2)).collect()).unwrap();
        let pi = ModelSpec::explicit(3, 2, random_masses(&mut rng, 8)).unwrap();
        assert!(verify_tensorization(&mu, &pi, 1.0).unwrap().holds);
    }
    let mu = ModelSpec::ising_path(3, 0.5).unwrap();
    let c = verify_tensorization(&mu, &mu, 1.0).unwrap();
    assert!(c.lhs.abs() < 1e-14 && c.rhs.abs() < 1e-14);
}

#[test]
fn tensorization_can_fail_without_structure() {
    let mut mu = vec![0.1 / 6.0; 8];
    mu[0] = 0.45;
    mu[7] = 0.45;
    let mut pi = vec![0.1 / 7.0; 8];
    pi[0] = 0.9;
    let mu = ModelSpec::explicit(3, 2, mu).unwrap();
    let pi = ModelSpec::explicit(3, 2, pi).unwrap();
    let c = verify_tensorization(&mu, &pi, 1.0).unwrap();
    assert!(!c.holds);
    assert!(c.lhs > c.rhs);
    assert!(verify_tensorization(&mu, &pi, c.lhs / c.rhs + 1e-6).unwrap().holds);
}

#[test]
fn dobrushin_for_weak_path() {
    let m = ModelSpec::ising_path(4, 0.2).unwrap();
    let a = influence_matrix(&m).unwrap();
    assert!(close(a[1][0], 0.2f64.tanh(), 1e-12));
    assert!(close(a[0][1], 0.4f64.tanh() / 2.0, 1e-12));
    assert!(a[0][2].abs() < 1e-12);
    let cert = dobrushin_certificate(&m).unwrap();
    assert!(cert.spectral_norm < 1.0);
    assert!(close(cert.delta, 1.0 - cert.spectral_norm, 1e-15));
    assert!(close(cert.c, dobrushin_constant(cert.b, cert.delta).unwrap(), 1e-12));
}

#[test]
fn pinning_helpers() {
    let x = [1, 0, 1];
    let p = Pinning::all_but(&x, 1);
    assert_eq!(p.free_coords(), vec![1]);
    assert_eq!(p.domain(), vec![0, 2]);
    let p = Pinning::prefix(4, &[1, 1]);
    assert_eq!(p.pinned_count(), 2);
    assert!(Pinning::from_pairs(2, &[(3, 0)]).is_err());
    assert!(Pinning::from_pairs(2, &[(0, 0)]).unwrap().validate(2, 2).is_ok());
    assert!(Pinning::from_pairs(2, &[(0, 4)]).unwrap().validate(2, 2).is_err());
}

#[test]
fn index_round_trip() {
    for idx in 0..81 {
        assert_eq!(index_of(&config_at(idx, 4, 3), 3), idx);
    }
}

#[test]
fn model_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let models = vec![
        ModelSpec::uniform(3, 3).unwrap(),
        ModelSpec::ising(3, vec![(0, 1, 0.5)], vec![0.0, 0.1, 0.0]).unwrap(),
        ModelSpec::subcube_bad(SubcubeBadSpec::random(8, 2, &mut rng).unwrap()),
        ModelSpec::matched_ising(MatchedIsingSpec::consecutive(4, 0.3).unwrap()),
        ModelSpec::explicit(1, 3, vec![0.2, 0.3, 0.5]).unwrap(),
    ];
    for m in &models {
        let text = ModelFile::from_model(m).to_json();
        let back = ModelFile::parse(&text).unwrap().into_model().unwrap();
        assert_eq!(back.table().unwrap().masses, m.table().unwrap().masses);
    }
}

#[test]
fn model_file_errors_name_the_field() {
    let err = ModelFile::parse(r#"{"variant":"Ising","n":2,"k":2,"edges":[[0,1,"x"]]}"#).unwrap_err();
    assert!(matches!(err, Error::InvalidModel { ref field, .. } if field == "edges"), "{err:?}");
    let err = ModelFile::parse(r#"{"variant":"Product","n":2,"k":2}"#).unwrap().into_model().unwrap_err();
    assert!(matches!(err, Error::InvalidModel { ref field, .. } if field == "coords"));
    let err = ModelFile::parse(r#"{"variant":"Uniform","n":2,"k":2,"beta":1.0}"#).unwrap().into_model().unwrap_err();
    assert!(matches!(err, Error::InvalidModel { ref field, .. } if field == "beta"));
    let err = ModelFile::parse(r#"{"variant":"Uniform","n":2,"k":2,"extra":1}"#).unwrap_err();
    assert!(matches!(err, Error::InvalidModel { .. }));
    let err = ModelFile::parse(r#"{"variant":"Blob","n":2,"k":2}"#).unwrap().into_model().unwrap_err();
    assert!(matches!(err, Error::InvalidModel { ref field, .. } if field == "variant"));
}
