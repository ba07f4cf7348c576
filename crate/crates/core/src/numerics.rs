//! Small numerical helpers shared across modules.

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn stable_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<CompensatedSum>().value()
}

/// `ln(n choose r)` via the log-gamma recurrence on integers.
pub fn ln_choose(n: u64, r: u64) -> f64 {
    if r > n {
        return f64::NEG_INFINITY;
    }
    let r = r.min(n - r);
    let mut acc = 0.0;
    for j in 0..r {
        acc += ((n - j) as f64).ln() - ((j + 1) as f64).ln();
    }
    acc
}

/// Exact `n choose r` as f64 for moderate arguments.
pub fn choose(n: u64, r: u64) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    let mut acc = 1.0f64;
    for j in 0..r {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    acc.round()
}

/// Normalise nonnegative log-weights in place into probabilities. Returns the
/// log of the normaliser, or `None` if every weight is zero.
pub fn softmax_in_place(lw: &mut [f64]) -> Option<f64> {
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut total = CompensatedSum::new();
    for w in lw.iter_mut() {
        *w = (*w - max).exp();
        total.add(*w);
    }
    let z = total.value();
    for w in lw.iter_mut() {
        *w /= z;
    }
    Some(max + z.ln())
}

/// `ceil(log2(x))` that ignores floating-point noise just above a power of two.
pub fn ceil_log2(x: f64) -> i64 {
    (x.log2() - 1e-12).ceil() as i64
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z * z / (4.0 * n)) / n).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}
