use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use wflow::fields::{FieldKind, FieldSpec};
use wflow::flows::{Driver, Scheme};
use wflow::measures::DiscreteMeasure;

/// Parses JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("{origin}: at `{path}`: {}", e.into_inner())
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_json(&text, &path.display().to_string())
}

/// `{"experiment", "field" | "functional", "measures", "scheme", "params", "seed"}`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub experiment: Option<String>,
    #[serde(default)]
    pub field: Option<FieldSpec>,
    #[serde(default)]
    pub functional: Option<FieldSpec>,
    #[serde(default)]
    pub measures: Vec<DiscreteMeasure>,
    #[serde(default)]
    pub scheme: Option<Scheme>,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// The experiment parameters, with paths reported under `params`.
    pub fn params<T: DeserializeOwned>(&self) -> Result<T> {
        let v = if self.params.is_null() { Value::Object(Default::default()) } else { self.params.clone() };
        serde_path_to_error::deserialize(v).map_err(|e| {
            let path = e.path().to_string();
            anyhow!("params.{path}: {}", e.into_inner())
        })
    }

    /// `functional` must be a `pw` spec. A `pw` spec under `field` also
    /// drives through the functional, unless it overrides `lambda`.
    pub fn driver(&self) -> Result<Driver> {
        match (&self.field, &self.functional) {
            (Some(_), Some(_)) => bail!("give either `field` or `functional`, not both"),
            (None, Some(spec)) => Ok(Driver::Functional(spec.functional().context("functional")?)),
            (Some(spec), None) if spec.kind == FieldKind::Pw && spec.lambda.is_none() => {
                Ok(Driver::Functional(spec.functional().context("field")?))
            }
            (Some(spec), None) => Ok(Driver::Field(spec.build().context("field")?)),
            (None, None) => bail!("scenario needs a `field` or a `functional`"),
        }
    }

    pub fn measure(&self, i: usize, role: &str) -> Result<&DiscreteMeasure> {
        self.measures
            .get(i)
            .ok_or_else(|| anyhow!("`measures[{i}]` ({role}) is missing"))
    }

    pub fn scheme(&self) -> Result<Scheme> {
        self.scheme.ok_or_else(|| anyhow!("scenario needs a `scheme`"))
    }
}
