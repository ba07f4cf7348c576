use super::Verdict;
use crate::error::{Error, Result};

/// Majority-vote repetitions that push a base failure of `base_failure` down
/// to `delta`: `ceil(ln(1/delta) / (2 (1/2 - base_failure)^2))`, which is
/// `ceil(18 ln(1/delta))` for a base failure of 1/3.
pub fn repetitions_for(delta: f64, base_failure: f64) -> usize {
    if delta >= 1.0 {
        return 1;
    }
    let gap = 0.5 - base_failure;
    ((1.0 / delta).ln() / (2.0 * gap * gap)).ceil().max(1.0) as usize
}

pub fn repetitions(delta: f64) -> usize {
    repetitions_for(delta, 1.0 / 3.0)
}

/// Run `test` up to `repetitions(delta)` times and return the strict-majority
/// verdict (ties go to `Equal`). Stops as soon as the outcome is settled. A
/// sample outside the target's support is an immediate `Far`.
pub fn amplify<F>(delta: f64, mut test: F) -> Result<Verdict>
where
    F: FnMut() -> Result<Verdict>,
{
    let r = repetitions(delta);
    let (mut far, mut equal) = (0, 0);
    while far <= r / 2 && equal < r - r / 2 {
        match test() {
            Ok(Verdict::Far) | Err(Error::UnsupportedSymbol { .. }) => far += 1,
            Ok(Verdict::Equal) => equal += 1,
            Err(e) => return Err(e),
        }
        if far > r / 2 {
            return Ok(Verdict::Far);
        }
    }
    Ok(if far > r / 2 { Verdict::Far } else { Verdict::Equal })
}
