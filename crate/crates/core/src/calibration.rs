//! Monte Carlo and enumeration sweeps that produce the frozen constants.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversaries::MatchedIsingSpec;
use crate::at_tester::{budget_ratio, AtParameters};
use crate::constants::{
    BudgetConstant, Constants, EntropyConstants, GlauberConstants, L2Constants, RhoEntry,
};
use crate::error::{range, Result};
use crate::models::{check_guard, config_at, index_of, ModelSpec};
use crate::rng::stream;
use crate::subcube::{EntropyEstimator, MillerMadow};
use crate::testers::{
    confidence_factor, kl_reference_scale, l2_sample_size_with, l2_test_with_mean, planned_samples_with, IidStream,
    SmallDistribution,
};

pub const L2_KS: [usize; 3] = [4, 16, 64];
pub const L2_EPS: [f64; 3] = [0.1, 0.25, 0.5];
pub const L2_CANDIDATES: [f64; 10] = [0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0, 16.0];
pub const SPREAD_CANDIDATES: [f64; 7] = [0.05, 0.1, 0.2, 0.35, 0.5, 1.0, 2.0];
pub const BURN_IN_CANDIDATES: [f64; 8] = [1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 50.0];
pub const RHO_CANDIDATES: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

/// Largest error rate accepted during calibration, below the 1/3 target to
/// leave room for Monte Carlo noise.
pub const TARGET_ERROR: f64 = 0.25;
/// Exact TV the default Glauber burn-in must reach on the Ising fixtures.
pub const GLAUBER_TV: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub trials: usize,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { trials: 300, seed: 20_240_601 }
    }
}

/// One l2 fixture: target `q` and two alternatives at l2 distance `eps2/2`
/// (must be accepted) and `eps2` (must be rejected).
#[derive(Debug, Clone)]
pub struct L2Fixture {
    pub k: usize,
    pub eps2: f64,
    pub q: SmallDistribution,
    pub near: Vec<f64>,
    pub far: Vec<f64>,
}

fn shifted(q: &[f64], d: f64) -> Vec<f64> {
    let mut p = q.to_vec();
    p[0] -= d;
    p[1] += d;
    p
}

/// Half the mass on symbol 0, the rest spread evenly; the alternatives move
/// mass from symbol 0 to symbol 1. Uniform targets are added when the
/// perturbation `+-eps2/sqrt(k)` stays inside the simplex.
pub fn l2_fixtures() -> Vec<L2Fixture> {
    let mut out = Vec::new();
    for &k in &L2_KS {
        for &eps2 in &L2_EPS {
            let mut heavy = vec![0.5 / (k - 1) as f64; k];
            heavy[0] = 0.5;
            let d = eps2 / std::f64::consts::SQRT_2;
            out.push(L2Fixture {
                k,
                eps2,
                near: shifted(&heavy, d / 2.0),
                far: shifted(&heavy, d),
                q: SmallDistribution::new(heavy).expect("valid"),
            });
            let d = eps2 / (k as f64).sqrt();
            if d < 1.0 / k as f64 {
                let q = vec![1.0 / k as f64; k];
                let alt = |d: f64| q.iter().enumerate().map(|(a, m)| if a % 2 == 0 { m + d } else { m - d }).collect();
                out.push(L2Fixture { k, eps2, near: alt(d / 2.0), far: alt(d), q: SmallDistribution::uniform(k) });
            }
        }
    }
    out
}

/// `(reject rate on near, accept rate on far)` at constant `c0`.
pub fn l2_error_rates(fixture: &L2Fixture, c0: f64, trials: usize, seed: u64) -> Result<(f64, f64)> {
    let m = l2_sample_size_with(c0, fixture.q.l2_norm(), fixture.eps2, 1.0 / 3.0);
    let mut near_reject = 0;
    let mut far_accept = 0;
    for t in 0..trials as u64 {
        let mut rng = stream(seed.wrapping_add(t), 0);
        let mut near = IidStream::new(&fixture.near, stream(seed.wrapping_add(t), 1));
        if l2_test_with_mean(&fixture.q, &mut near, fixture.eps2, m, &mut rng)?.is_far() {
            near_reject += 1;
        }
        let mut far = IidStream::new(&fixture.far, stream(seed.wrapping_add(t), 2));
        if !l2_test_with_mean(&fixture.q, &mut far, fixture.eps2, m, &mut rng)?.is_far() {
            far_accept += 1;
        }
    }
    Ok((near_reject as f64 / trials as f64, far_accept as f64 / trials as f64))
}

/// Smallest candidate `c0` whose error rates stay below [`TARGET_ERROR`] on
/// every fixture.
pub fn calibrate_l2(opts: &CalibrationOptions) -> Result<f64> {
    let fixtures = l2_fixtures();
    for &c0 in &L2_CANDIDATES {
        let ok = fixtures.par_iter().map(|f| l2_error_rates(f, c0, opts.trials, opts.seed)).collect::<Result<Vec<_>>>()?;
        if ok.iter().all(|&(a, b)| a <= TARGET_ERROR && b <= TARGET_ERROR) {
            return Ok(c0);
        }
    }
    Err(range("no l2 constant candidate met the error target"))
}

/// Uniform and geometric (ratio 1/2) targets on `k` symbols.
pub fn entropy_fixtures(k: usize) -> Vec<Vec<f64>> {
    let geo: Vec<f64> = (0..k).map(|a| 0.5f64.powi(a as i32 + 1)).collect();
    let total: f64 = geo.iter().sum();
    vec![vec![1.0 / k as f64; k], geo.iter().map(|g| g / total).collect()]
}

fn true_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Fraction of runs with `|H_hat - H| > eps`.
pub fn entropy_error_rate<E: EntropyEstimator + Sync>(
    estimator: &E,
    p: &[f64],
    eps: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> f64 {
    let k = p.len();
    let m = estimator.sample_size(k, eps, delta);
    let h = true_entropy(p);
    let cumulative: Vec<f64> = p
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    let misses = (0..trials as u64)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = stream(seed.wrapping_add(t), 0);
            let mut counts = vec![0u64; k];
            for _ in 0..m {
                let u = rng.random::<f64>() * cumulative[k - 1];
                counts[cumulative.partition_point(|&c| c <= u).min(k - 1)] += 1;
            }
            (estimator.estimate(&counts, m) - h).abs() > eps
        })
        .count();
    misses as f64 / trials as f64
}

pub const ENTROPY_KS: [usize; 4] = [2, 4, 16, 64];
pub const ENTROPY_EPS: [f64; 3] = [0.1, 0.25, 0.5];
pub const ENTROPY_DELTA: f64 = 0.1;

/// Smallest candidate spread (bias coefficient fixed at 1) meeting failure
/// `ENTROPY_DELTA` on every uniform and geometric fixture.
pub fn calibrate_entropy(opts: &CalibrationOptions) -> Result<EntropyConstants> {
    for &spread in &SPREAD_CANDIDATES {
        let est = MillerMadow { bias: 1.0, spread };
        let ok = ENTROPY_KS.iter().all(|&k| {
            ENTROPY_EPS.iter().all(|&eps| {
                entropy_fixtures(k)
                    .iter()
                    .all(|p| entropy_error_rate(&est, p, eps, ENTROPY_DELTA, opts.trials, opts.seed) <= ENTROPY_DELTA)
            })
        });
        if ok {
            return Ok(EntropyConstants { bias: 1.0, spread });
        }
    }
    Err(range("no entropy spread candidate met the error target"))
}

fn kl_fixtures() -> Vec<SmallDistribution> {
    let mut out = Vec::new();
    for k in [2usize, 3, 4, 8, 16, 32] {
        out.push(SmallDistribution::uniform(k));
        for r in [0.5, 0.8] {
            let w: Vec<f64> = (0..k).map(|a| f64::powi(r, a as i32)).collect();
            out.push(SmallDistribution::from_weights(&w).expect("positive"));
        }
    }
    for q in [0.02, 0.05, 0.1, 0.3] {
        out.push(SmallDistribution::new(vec![1.0 - q, q]).expect("valid"));
    }
    out
}

/// Largest `planned / (confidence * reference scale)` over the fixture grid,
/// rounded up with 5% headroom.
pub fn calibrate_kl_budget(c0: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for q in kl_fixtures() {
        let eta = q.eta_min().min(1.0 / q.support_size() as f64);
        for eps in [0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
            for failure in [1.0 / 3.0, 1e-2, 1e-4, 1e-8] {
                let planned = planned_samples_with(c0, &q, eps, failure);
                let scale = confidence_factor(failure) * kl_reference_scale(q.support_size(), eta, eps);
                worst = worst.max(planned / scale);
            }
        }
    }
    (worst * 1.05).ceil()
}

/// Largest worst-case query ratio on a binary alphabet over `n` in 2..=16,
/// `eps` in {0.1, .., 2}, `eta` in {0.05, .., 0.5}, `C` in {1, 2, 4}, with
/// 5% headroom.
pub fn calibrate_coordinate_budget() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for n in 2..=16 {
        for eps in [0.1, 0.25, 0.5, 1.0, 2.0] {
            for eta in [0.05, 0.1, 0.2, 0.3, 0.5] {
                for c in [1.0, 2.0, 4.0] {
                    worst = worst.max(budget_ratio(&AtParameters::new(c, eta, eps, n)?, 2));
                }
            }
        }
    }
    Ok((worst * 1.05).ceil())
}

/// Exact law of the random-scan Glauber chain after `steps` updates from a
/// uniform start, by propagating the full distribution.
pub fn glauber_law(model: &ModelSpec, steps: usize) -> Result<Vec<f64>> {
    let (n, k) = (model.n(), model.k());
    let states = check_guard(n, k)?;
    let mut dist = vec![1.0 / states as f64; states];
    let mut next = vec![0.0; states];
    let mut w = vec![0.0; k];
    for _ in 0..steps {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let mut x = config_at(s, n, k);
            for i in 0..n {
                model.coordinate_weights(i, &x, &mut w);
                let total: f64 = w.iter().sum();
                let keep = x[i];
                for (a, &wa) in w.iter().enumerate() {
                    x[i] = a;
                    next[index_of(&x, k)] += mass * wa / (total * n as f64);
                }
                x[i] = keep;
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    Ok(dist)
}

/// Six-spin Ising fixtures with couplings of magnitude at most 1.
pub fn glauber_fixtures(seed: u64) -> Result<Vec<ModelSpec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![ModelSpec::ising_path(6, 1.0)?, ModelSpec::ising_path(6, -1.0)?];
    let cycle: Vec<_> = (0..6).map(|i| (i, (i + 1) % 6, 0.8)).collect();
    out.push(ModelSpec::ising(6, cycle, vec![0.2; 6])?);
    for _ in 0..3 {
        let mut edges = Vec::new();
        for u in 0..6 {
            for v in u + 1..6 {
                if rng.random::<f64>() < 0.4 {
                    edges.push((u, v, rng.random_range(-1.0..=1.0)));
                }
            }
        }
        let fields = (0..6).map(|_| rng.random_range(-0.5..=0.5)).collect();
        out.push(ModelSpec::ising(6, edges, fields)?);
    }
    Ok(out)
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Smallest burn-in factor whose exact chain law is within [`GLAUBER_TV`] of
/// the target on every fixture.
pub fn calibrate_glauber(seed: u64) -> Result<f64> {
    let fixtures = glauber_fixtures(seed)?;
    for &f in &BURN_IN_CANDIDATES {
        let mut ok = true;
        for m in &fixtures {
            let steps = (f * m.n() as f64 * ((m.n() + 1) as f64).ln()).ceil() as usize;
            if tv(&glauber_law(m, steps)?, &m.table()?.masses) > GLAUBER_TV {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(f);
        }
    }
    Err(range("no burn-in candidate met the TV target"))
}

/// Smallest `rho` in the candidate list with `TV(pi_M, uniform) >= eps`.
pub fn rho_sweep(n: usize, eps: f64) -> Result<Option<f64>> {
    for &rho in &RHO_CANDIDATES {
        let spec = MatchedIsingSpec::consecutive(n, MatchedIsingSpec::beta_for(n, rho, eps))?;
        if spec.tv_to_uniform() >= eps {
            return Ok(Some(rho));
        }
    }
    Ok(None)
}

pub const RHO_GRID: [(usize, f64); 6] = [(4, 0.3), (6, 0.3), (8, 0.2), (8, 0.3), (8, 0.5), (12, 0.3)];

/// Run every sweep. Budget constants are derived from the freshly
/// calibrated l2 constant.
pub fn calibrate(opts: &CalibrationOptions) -> Result<Constants> {
    let c0 = calibrate_l2(opts)?;
    let entropy = calibrate_entropy(opts)?;
    let kl = calibrate_kl_budget(c0);
    let coordinate = calibrate_coordinate_budget()?;
    let burn_in = calibrate_glauber(opts.seed)?;
    let mut rho = Vec::new();
    for &(n, eps) in &RHO_GRID {
        if let Some(r) = rho_sweep(n, eps)? {
            rho.push(RhoEntry { n, eps, rho: r });
        }
    }
    Ok(Constants {
        version: 1,
        l2: L2Constants { c0 },
        kl: BudgetConstant { budget_c: kl },
        coordinate: BudgetConstant { budget_c: coordinate },
        entropy,
        glauber: GlauberConstants { burn_in_factor: burn_in },
        rho,
        digest: String::new(),
    })
}

/// Constants file text in the shipped layout.
pub fn render_constants(c: &Constants, opts: &CalibrationOptions) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Frozen constants. Regenerate with `condtest calibrate`.");
    let _ = writeln!(s, "# Calibrated with {} trials per cell, seed {}.", opts.trials, opts.seed);
    let _ = writeln!(s, "version = {}\n", c.version);
    let _ = writeln!(s, "[l2]\n# m = ceil(c0 * max(||q||_2 / eps2^2, 1 / eps2))\nc0 = {:?}\n", c.l2.c0);
    let _ = writeln!(
        s,
        "[kl]\n# consumed samples <= budget_c * min(1/(eps sqrt(eta)), sqrt(k) ln(1/eta) / eps^2)\nbudget_c = {:?}\n",
        c.kl.budget_c
    );
    let _ = writeln!(
        s,
        "[coordinate]\n# queries <= budget_scale * budget_c * C ln(1/eta) (n/eps) log2^3(n/eps)\nbudget_c = {:?}\n",
        c.coordinate.budget_c
    );
    let _ = writeln!(
        s,
        "[entropy]\n# m = ceil(bias * (k - 1) / eps + spread * v(k) ln(2/delta) / eps^2)\nbias = {:?}\nspread = {:?}\n",
        c.entropy.bias, c.entropy.spread
    );
    let _ = writeln!(
        s,
        "[glauber]\n# burn-in = ceil(burn_in_factor * n * ln(n + 1)) single-site updates\nburn_in_factor = {:?}",
        c.glauber.burn_in_factor
    );
    for r in &c.rho {
        let _ = write!(s, "\n[[rho]]\nn = {}\neps = {:?}\nrho = {:?}\n", r.n, r.eps, r.rho);
    }
    s
}
