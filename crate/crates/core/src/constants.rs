//! Frozen numerical constants, shipped as a TOML file and overridable at
//! runtime through `CONDTEST_CONSTANTS`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CONSTANTS_ENV: &str = "CONDTEST_CONSTANTS";

const EMBEDDED: &str = include_str!("constants.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    pub version: u32,
    pub l2: L2Constants,
    pub kl: BudgetConstant,
    pub coordinate: BudgetConstant,
    pub entropy: EntropyConstants,
    pub glauber: GlauberConstants,
    #[serde(default)]
    pub rho: Vec<RhoEntry>,
    #[serde(skip)]
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L2Constants {
    pub c0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConstant {
    pub budget_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConstants {
    pub bias: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlauberConstants {
    pub burn_in_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhoEntry {
    pub n: usize,
    pub eps: f64,
    pub rho: f64,
}

impl Constants {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c: Constants = toml::from_str(text).map_err(|e| Error::Constants(e.to_string()))?;
        c.digest = hex::encode(Sha256::digest(text.as_bytes()));
        let positive = [c.l2.c0, c.kl.budget_c, c.coordinate.budget_c, c.entropy.spread, c.glauber.burn_in_factor];
        if positive.iter().any(|v| !(*v > 0.0)) || c.entropy.bias < 0.0 {
            return Err(Error::Constants("constants must be positive".into()));
        }
        Ok(c)
    }

    pub fn embedded() -> Self {
        Self::parse(EMBEDDED).expect("embedded constants parse")
    }

    /// The override file named by `CONDTEST_CONSTANTS`, else the embedded set.
    pub fn load() -> Result<Self> {
        match std::env::var_os(CONSTANTS_ENV) {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Constants(format!("{}: {e}", path.to_string_lossy())))?;
                Self::parse(&text)
            }
            None => Ok(Self::embedded()),
        }
    }

    /// Smallest calibrated `rho` for `(n, eps)`, if the table has the pair.
    pub fn rho_for(&self, n: usize, eps: f64) -> Option<f64> {
        self.rho.iter().find(|r| r.n == n && (r.eps - eps).abs() < 1e-12).map(|r| r.rho)
    }
}

/// Process-wide constants. Panics if an override file is set but invalid;
/// call [`Constants::load`] first to surface that as an error.
pub fn constants() -> &'static Constants {
    static CELL: OnceLock<Constants> = OnceLock::new();
    CELL.get_or_init(|| Constants::load().unwrap_or_else(|e| panic!("{e}")))
}

pub fn embedded_text() -> &'static str {
    EMBEDDED
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_parses_with_digest() {
        let c = Constants::embedded();
        assert_eq!(c.version, 1);
        assert_eq!(c.digest.len(), 64);
        assert_eq!(c.rho_for(8, 0.3), Some(4.0));
    }

    #[test]
    fn rejects_unknown_and_nonpositive() {
        let bad = EMBEDDED.replace("c0 = ", "c0 = -");
        assert!(Constants::parse(&bad).is_err());
        let extra = format!("{EMBEDDED}\nstray = 1\n");
        assert!(Constants::parse(&extra).is_err());
    }
}
