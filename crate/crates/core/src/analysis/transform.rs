use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonlinear re-scalings of CKA values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    /// Angle in radians; decreasing in the similarity.
    Arccos,
    Tan,
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arccos" => Ok(TransformKind::Arccos),
            "tan" => Ok(TransformKind::Tan),
            other => Err(Error::config("transform", format!("unknown transform `{other}`"))),
        }
    }
}

pub fn transform_cka(values: &[f64], kind: TransformKind) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfDomain { index, value: v });
            }
            Ok(match kind {
                TransformKind::Arccos => v.acos(),
                TransformKind::Tan => v.tan(),
            })
        })
        .collect()
}
