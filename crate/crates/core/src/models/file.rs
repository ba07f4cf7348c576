//! JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelSpec, Variant};
use crate::adversaries::{MatchedIsingSpec, SubcubeBadSpec};
use crate::error::{invalid, Error, Result};

/// On-disk form of a [`ModelSpec`]. Only the fields of the chosen variant may
/// be present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub variant: String,
    pub n: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<f64>>,
    #[serde(default, rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matching: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<Vec<Vec<f64>>>>,
}

const PAYLOAD: [&str; 10] =
    ["masses", "coords", "edges", "fields", "A", "sigma", "matching", "beta", "weights", "components"];

fn require<T: Clone>(field: &'static str, value: &Option<T>) -> Result<T> {
    value.clone().ok_or_else(|| invalid(field, "missing for this variant"))
}

/// Name quoted in serde's unknown- or missing-field messages.
fn unknown_field(msg: &str) -> Option<String> {
    msg.split('`').nth(1).map(str::to_string)
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e
                .path()
                .iter()
                .find_map(|seg| match seg {
                    serde_path_to_error::Segment::Map { key } => Some(key.clone()),
                    _ => None,
                })
                .unwrap_or_else(|| unknown_field(&e.inner().to_string()).unwrap_or_else(|| "model".into()));
            Error::InvalidModel { field, reason: e.into_inner().to_string() }
        })
    }

    pub fn load(path: &Path) -> Result<ModelSpec> {
        Self::parse(&std::fs::read_to_string(path)?)?.into_model()
    }

    fn present(&self) -> Vec<&'static str> {
        let flags = [
            self.masses.is_some(),
            self.coords.is_some(),
            self.edges.is_some(),
            self.fields.is_some(),
            self.a.is_some(),
            self.sigma.is_some(),
            self.matching.is_some(),
            self.beta.is_some(),
            self.weights.is_some(),
            self.components.is_some(),
        ];
        PAYLOAD.iter().zip(flags).filter(|(_, f)| *f).map(|(n, _)| *n).collect()
    }

    pub fn into_model(self) -> Result<ModelSpec> {
        let allowed: &[&str] = match self.variant.as_str() {
            "Uniform" => &[],
            "Product" => &["coords"],
            "Ising" => &["edges", "fields"],
            "ExplicitTable" => &["masses"],
            "SubcubeBad" => &["A", "sigma"],
            "MatchedIsing" => &["matching", "beta"],
            "ProductMixture" => &["weights", "components"],
            other => return Err(invalid("variant", format!("unknown variant `{other}`"))),
        };
        if let Some(extra) = self.present().into_iter().find(|f| !allowed.contains(f)) {
            return Err(invalid(extra, format!("not a field of variant {}", self.variant)));
        }
        let binary = |name: &str| {
            if self.k != 2 {
                Err(invalid("k", format!("{name} requires k = 2")))
            } else {
                Ok(())
            }
        };
        let model = match self.variant.as_str() {
            "Uniform" => ModelSpec::uniform(self.n, self.k)?,
            "Product" => ModelSpec::product(require("coords", &self.coords)?)?,
            "Ising" => {
                binary("Ising")?;
                let fields = self.fields.clone().unwrap_or_else(|| vec![0.0; self.n]);
                ModelSpec::ising(self.n, require("edges", &self.edges)?, fields)?
            }
            "ExplicitTable" => ModelSpec::explicit(self.n, self.k, require("masses", &self.masses)?)?,
            "SubcubeBad" => {
                binary("SubcubeBad")?;
                ModelSpec::subcube_bad(SubcubeBadSpec::new(
                    self.n,
                    require("A", &self.a)?,
                    require("sigma", &self.sigma)?,
                )?)
            }
            "MatchedIsing" => {
                binary("MatchedIsing")?;
                ModelSpec::matched_ising(MatchedIsingSpec::new(
                    self.n,
                    require("matching", &self.matching)?,
                    require("beta", &self.beta)?,
                )?)
            }
            _ => ModelSpec::product_mixture(
                require("weights", &self.weights)?,
                require("components", &self.components)?,
            )?,
        };
        if model.n() != self.n {
            return Err(invalid("n", format!("payload implies n = {}, file says {}", model.n(), self.n)));
        }
        if model.k() != self.k {
            return Err(invalid("k", format!("payload implies k = {}, file says {}", model.k(), self.k)));
        }
        Ok(model)
    }

    pub fn from_model(model: &ModelSpec) -> Self {
        let mut f = ModelFile {
            variant: model.variant_name().to_string(),
            n: model.n(),
            k: model.k(),
            ..Default::default()
        };
        match model.variant() {
            Variant::Uniform => {}
            Variant::Product { coords } => f.coords = Some(coords.clone()),
            Variant::Ising(ising) => {
                f.edges = Some(ising.edges().to_vec());
                f.fields = Some(ising.fields().to_vec());
            }
            Variant::ExplicitTable { masses } => f.masses = Some(masses.clone()),
            Variant::SubcubeBad(spec) => {
                f.a = Some(spec.a().to_vec());
                f.sigma = Some(spec.sigma().to_vec());
            }
            Variant::MatchedIsing(spec) => {
                f.matching = Some(spec.pairs().to_vec());
                f.beta = Some(spec.beta());
            }
            Variant::ProductMixture { weights, components } => {
                f.weights = Some(weights.clone());
                f.components = Some(components.clone());
            }
        }
        f
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files serialize")
    }
}
