use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{barycentric_projection, Functional, Kernel, SuperpositionField, VelocityField};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Linear,
    Barycentric,
    Pw,
    Superposition,
    Constant,
    Zero,
}

/// JSON description of a field:
/// `{"kind": ..., "params": {...}, "lambda": optional override}`.
///
/// ```
/// use wflow::fields::FieldSpec;
/// let spec: FieldSpec = serde_json::from_str(
///     r#"{"kind": "pw", "params": {"interaction": {"kind": "abs", "coef": 1.0}}}"#,
/// ).unwrap();
/// let f = spec.build().unwrap();
/// assert_eq!(f.lambda(), 0.0);
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub kind: FieldKind,
    #[serde(default)]
    pub params: Value,
    /// Replaces the declared `λ` of the built field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    a: Option<Vec<Vec<f64>>>,
    b: Option<Vec<f64>>,
    /// Scalar shorthand `f(x) = c·x` in any dimension.
    c: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BarycentricParams {
    a: f64,
    #[serde(default)]
    v0: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PwParams {
    #[serde(default = "zero_kernel")]
    potential: Kernel,
    #[serde(default = "zero_kernel")]
    interaction: Kernel,
}

fn zero_kernel() -> Kernel {
    Kernel::Zero
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Component {
    weight: f64,
    field: FieldSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SuperpositionParams {
    components: Vec<Component>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    v: Vec<f64>,
}

fn params<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T> {
    let v = if v.is_null() { Value::Object(Default::default()) } else { v.clone() };
    serde_json::from_value(v).map_err(|e| Error::Parse(format!("params: {e}")))
}

impl FieldSpec {
    pub fn new(kind: FieldKind, params: Value) -> Self {
        Self {
            kind,
            params,
            lambda: None,
        }
    }

    /// The functional behind a `pw` spec.
    pub fn functional(&self) -> Result<Functional> {
        if self.kind != FieldKind::Pw {
            return Err(Error::Parse(format!(
                "expected a `pw` functional, found kind {:?}",
                self.kind
            )));
        }
        let p: PwParams = params(&self.params)?;
        Functional::new(p.potential, p.interaction)
    }

    pub fn build(&self) -> Result<VelocityField> {
        let f = match self.kind {
            FieldKind::Linear => {
                let p: LinearParams = params(&self.params)?;
                match (p.a, p.c) {
                    (Some(a), None) => {
                        let b = p.b.unwrap_or_else(|| vec![0.0; a.len()]);
                        VelocityField::linear(a, b)?
                    }
                    (None, Some(c)) if p.b.is_none() => VelocityField::scalar_linear(c),
                    _ => {
                        return Err(Error::Parse(
                            "params: linear field needs either `a` (with optional `b`) or `c`".into(),
                        ))
                    }
                }
            }
            FieldKind::Barycentric => {
                let p: BarycentricParams = params(&self.params)?;
                VelocityField::barycentric(p.a, p.v0)?
            }
            FieldKind::Pw => self.functional()?.velocity_field(),
            FieldKind::Superposition => {
                let p: SuperpositionParams = params(&self.params)?;
                let comps = p
                    .components
                    .iter()
                    .map(|c| Ok((c.weight, c.field.build()?)))
                    .collect::<Result<Vec<_>>>()?;
                barycentric_projection(&SuperpositionField::new(comps)?)
            }
            FieldKind::Constant => {
                let p: ConstantParams = params(&self.params)?;
                VelocityField::constant(p.v)
            }
            FieldKind::Zero => VelocityField::zero(),
        };
        Ok(match self.lambda {
            Some(l) => f.with_lambda(l),
            None => f,
        })
    }
}
