//! Divergences and structural constants computed by enumeration.

use serde::{Deserialize, Serialize};

use super::{check_guard, check_states, increment, state_count, ModelSpec, Variant};
use crate::error::{range, Error, Result};
use crate::numerics::CompensatedSum;

fn same_space(p: &ModelSpec, q: &ModelSpec) -> Result<()> {
    if p.n() != q.n() {
        return Err(Error::DimensionMismatch { expected: q.n(), got: p.n() });
    }
    if p.k() != q.k() {
        return Err(Error::DimensionMismatch { expected: q.k(), got: p.k() });
    }
    Ok(())
}

/// `KL(p || q)`; `+inf` when `p` charges an outcome `q` excludes.
pub fn kl_divergence(p: &ModelSpec, q: &ModelSpec) -> Result<f64> {
    same_space(p, q)?;
    let (tp, tq) = (p.table()?, q.table()?);
    let mut acc = CompensatedSum::new();
    for (&a, &b) in tp.masses.iter().zip(&tq.masses) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(f64::INFINITY);
        }
        acc.add(a * (a / b).ln());
    }
    Ok(acc.value())
}

pub fn tv_distance(p: &ModelSpec, q: &ModelSpec) -> Result<f64> {
    same_space(p, q)?;
    let (tp, tq) = (p.table()?, q.table()?);
    let acc: CompensatedSum = tp.masses.iter().zip(&tq.masses).map(|(a, b)| (a - b).abs()).collect();
    Ok((acc.value() / 2.0).clamp(0.0, 1.0))
}

/// Shannon entropy in nats.
pub fn entropy(p: &ModelSpec) -> Result<f64> {
    let t = p.table()?;
    let acc: CompensatedSum = t.masses.iter().filter(|&&m| m > 0.0).map(|&m| -m * m.ln()).collect();
    Ok(acc.value())
}

/// Marginal tables of the prefixes `x_0..x_{j-1}` for `j = 0..=n`.
fn prefix_tables(masses: &[f64], n: usize, k: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); n + 1];
    out[n] = masses.to_vec();
    for j in (0..n).rev() {
        out[j] = out[j + 1].chunks_exact(k).map(|c| c.iter().sum()).collect();
    }
    out
}

/// Per-coordinate terms `E_{x ~ pi_{[i]}} KL(pi_i( . | x) || mu_i( . | x))`
/// along the natural order; they sum to `KL(pi || mu)`.
pub fn chain_rule_decomposition(mu: &ModelSpec, pi: &ModelSpec) -> Result<Vec<f64>> {
    same_space(pi, mu)?;
    let (n, k) = (mu.n(), mu.k());
    let pm = prefix_tables(&mu.table()?.masses, n, k);
    let pp = prefix_tables(&pi.table()?.masses, n, k);
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = CompensatedSum::new();
        for (x, (&px, &mx)) in pp[i].iter().zip(&pm[i]).enumerate() {
            if px == 0.0 {
                continue;
            }
            for a in 0..k {
                let pxa = pp[i + 1][x * k + a];
                if pxa == 0.0 {
                    continue;
                }
                let mxa = pm[i + 1][x * k + a];
                if mxa == 0.0 {
                    return Err(Error::SupportViolation);
                }
                acc.add(pxa * ((pxa * mx) / (px * mxa)).ln());
            }
        }
        terms.push(acc.value());
    }
    Ok(terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorizationCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// Compare `KL(pi || mu)` with `C sum_i E_{x ~ pi} KL(pi_i( . | x_{-i}) || mu_i( . | x_{-i}))`.
pub fn verify_tensorization(mu: &ModelSpec, pi: &ModelSpec, c: f64) -> Result<TensorizationCheck> {
    same_space(pi, mu)?;
    let (n, k) = (mu.n(), mu.k());
    let tm = mu.table()?;
    let tp = pi.table()?;
    let lhs = kl_divergence(pi, mu)?;
    if lhs.is_infinite() {
        return Err(Error::SupportViolation);
    }
    let total = tm.masses.len();
    let mut rhs = CompensatedSum::new();
    for i in 0..n {
        let stride = k.pow((n - 1 - i) as u32);
        let block = stride * k;
        for hi in (0..total).step_by(block) {
            for lo in 0..stride {
                let base = hi + lo;
                let (mut sp, mut sm) = (0.0, 0.0);
                for a in 0..k {
                    sp += tp.masses[base + a * stride];
                    sm += tm.masses[base + a * stride];
                }
                if sp == 0.0 {
                    continue;
                }
                for a in 0..k {
                    let px = tp.masses[base + a * stride];
                    if px > 0.0 {
                        let mx = tm.masses[base + a * stride];
                        rhs.add(px * ((px * sm) / (sp * mx)).ln());
                    }
                }
            }
        }
    }
    let rhs = c * rhs.value();
    Ok(TensorizationCheck { holds: lhs <= rhs + 1e-9, lhs, rhs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceProfile {
    pub eta: f64,
    pub b: Option<f64>,
    pub prefix_only: bool,
}

/// Largest `2^n k^n` for which the all-subsets marginal bound is enumerated.
const SUBSET_WORK_LIMIT: u128 = 1 << 26;

/// Coordinate balance `eta` and marginal bound `b`. With `prefix_only` the
/// bound ranges over prefix pinnings; otherwise over every pinning, which is
/// only attempted when `2^n k^n` is small (else `b` is absent). Reported `b`
/// never exceeds `eta`.
pub fn balance_profile(model: &ModelSpec, prefix_only: bool) -> Result<BalanceProfile> {
    let (n, k) = (model.n(), model.k());
    let cap = 1.0 / k as f64;
    match model.variant() {
        Variant::Uniform => return Ok(BalanceProfile { eta: cap, b: Some(cap), prefix_only }),
        Variant::Product { coords } => {
            let m = coords.iter().flatten().copied().filter(|&m| m > 0.0).fold(cap, f64::min);
            return Ok(BalanceProfile { eta: m, b: Some(m), prefix_only });
        }
        Variant::MatchedIsing(spec) => {
            let m = (1.0 - spec.beta().abs().tanh()) / 2.0;
            return Ok(BalanceProfile { eta: m, b: Some(m), prefix_only });
        }
        _ => {}
    }
    let table = model.table()?;
    let masses = &table.masses;
    let total = masses.len();
    let mut eta = cap;
    for i in 0..n {
        let stride = k.pow((n - 1 - i) as u32);
        for hi in (0..total).step_by(stride * k) {
            for lo in 0..stride {
                let base = hi + lo;
                let s: f64 = (0..k).map(|a| masses[base + a * stride]).sum();
                if s == 0.0 {
                    continue;
                }
                for a in 0..k {
                    let m = masses[base + a * stride];
                    if m > 0.0 {
                        eta = eta.min(m / s);
                    }
                }
            }
        }
    }
    let b = if prefix_only {
        let pt = prefix_tables(masses, n, k);
        let mut b = eta;
        for i in 0..n {
            for (x, &px) in pt[i].iter().enumerate() {
                if px == 0.0 {
                    continue;
                }
                for a in 0..k {
                    let m = pt[i + 1][x * k + a];
                    if m > 0.0 {
                        b = b.min(m / px);
                    }
                }
            }
        }
        Some(b)
    } else if state_count(n, k).saturating_mul(1u128 << n.min(127)) <= SUBSET_WORK_LIMIT {
        Some(eta.min(subset_bound(masses, n, k)))
    } else {
        None
    };
    Ok(BalanceProfile { eta, b, prefix_only })
}

/// Minimum nonzero conditional `mu_i(a | x_{S\i})` over all subsets `S`.
fn subset_bound(masses: &[f64], n: usize, k: usize) -> f64 {
    let mut b = 1.0f64;
    let mut digits = vec![0usize; n];
    for mask in 1u64..(1u64 << n) {
        let coords: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let size = k.pow(coords.len() as u32);
        let mut marg = vec![0.0; size];
        digits.fill(0);
        for &m in masses {
            let idx = coords.iter().fold(0, |acc, &c| acc * k + digits[c]);
            marg[idx] += m;
            increment(&mut digits, k);
        }
        for pos in 0..coords.len() {
            let stride = k.pow((coords.len() - 1 - pos) as u32);
            for hi in (0..size).step_by(stride * k) {
                for lo in 0..stride {
                    let base = hi + lo;
                    let s: f64 = (0..k).map(|a| marg[base + a * stride]).sum();
                    if s == 0.0 {
                        continue;
                    }
                    for a in 0..k {
                        let m = marg[base + a * stride];
                        if m > 0.0 {
                            b = b.min(m / s);
                        }
                    }
                }
            }
        }
    }
    b
}

/// Dobrushin influence matrix `a[i][j]`: the largest TV between the
/// conditionals of `j` under two feasible pinnings that differ only at `i`.
/// Pairs where either pinning is infeasible are skipped.
pub fn influence_matrix(model: &ModelSpec) -> Result<Vec<Vec<f64>>> {
    let (n, k) = (model.n(), model.k());
    if n > 10 {
        return Err(range(format!("influence matrix is enumerated only for n <= 10, got {n}")));
    }
    check_guard(n, k)?;
    let mut a = vec![vec![0.0; n]; n];
    let mut x = vec![0usize; n];
    let mut wa = vec![0.0; k];
    let mut wb = vec![0.0; k];
    for j in 0..n {
        x.fill(0);
        loop {
            if x[j] == 0 && model.coordinate_weights(j, &x, &mut wa) {
                normalize(&mut wa);
                for i in (0..n).filter(|&i| i != j) {
                    let orig = x[i];
                    for v in orig + 1..k {
                        x[i] = v;
                        if model.coordinate_weights(j, &x, &mut wb) {
                            normalize(&mut wb);
                            let tv: f64 = wa.iter().zip(&wb).map(|(p, q)| (p - q).abs()).sum::<f64>() / 2.0;
                            a[i][j] = f64::max(a[i][j], tv);
                        }
                    }
                    x[i] = orig;
                }
            }
            if !increment(&mut x, k) {
                break;
            }
        }
    }
    Ok(a)
}

fn normalize(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
}

/// `C = 1 / (b delta^2)`.
pub fn dobrushin_constant(b: f64, delta: f64) -> Result<f64> {
    if !(b > 0.0 && b <= 1.0) {
        return Err(range(format!("b = {b} outside (0, 1]")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(range(format!("delta = {delta} outside (0, 1]")));
    }
    Ok(1.0 / (b * delta * delta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DobrushinCertificate {
    pub influence: Vec<Vec<f64>>,
    pub spectral_norm: f64,
    pub b: f64,
    pub delta: f64,
    pub c: f64,
}

/// Enumerate the influence matrix, take `delta = 1 - ||A||_2`, and report
/// `C = 1 / (b delta^2)` with `b` the all-pinnings marginal bound.
pub fn dobrushin_certificate(model: &ModelSpec) -> Result<DobrushinCertificate> {
    let influence = influence_matrix(model)?;
    let n = model.n();
    let flat: Vec<f64> = influence.iter().flatten().copied().collect();
    let matrix = nalgebra::DMatrix::from_row_slice(n, n, &flat);
    let spectral_norm = matrix.singular_values().max();
    let delta = 1.0 - spectral_norm;
    if delta <= 0.0 {
        return Err(range(format!("influence norm {spectral_norm} is not below 1")));
    }
    check_states(state_count(n, model.k()).saturating_mul(1u128 << n))?;
    let b = balance_profile(model, false)?.b.ok_or_else(|| range("marginal bound unavailable"))?;
    let c = dobrushin_constant(b, delta)?;
    Ok(DobrushinCertificate { influence, spectral_norm, b, delta, c })
}
