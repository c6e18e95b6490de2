//! Problem files: a TOML description of `x' = f(x)` with a box initial set.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::field::{FieldError, VectorField};
use crate::interval::IBox;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed problem file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid field '{field}': {msg}")]
    Invalid { field: &'static str, msg: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("unknown problem '{0}'")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    EndEnc,
    #[default]
    EndCover,
    Boundary,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Mode, String> {
        match s {
            "endenc" => Ok(Mode::EndEnc),
            "endcover" => Ok(Mode::EndCover),
            "boundary" => Ok(Mode::Boundary),
            _ => Err(format!("unknown mode '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    #[serde(default)]
    pub title: String,
    pub vars: Vec<String>,
    pub field: Vec<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
    pub horizon: f64,
    pub eps: f64,
    #[serde(default)]
    pub mode: Mode,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    /// RK4 step for the sampling oracle; defaults to `min(1e-3, H/1e4)`.
    pub oracle_step: Option<f64>,
}

pub const DEFAULT_ORDER: usize = 20;

const CORPUS: [(&str, &str); 8] = [
    ("eg1", include_str!("../../../problems/eg1.toml")),
    ("eg2", include_str!("../../../problems/eg2.toml")),
    ("eg3", include_str!("../../../problems/eg3.toml")),
    ("eg4", include_str!("../../../problems/eg4.toml")),
    ("eg5", include_str!("../../../problems/eg5.toml")),
    ("eg6", include_str!("../../../problems/eg6.toml")),
    ("eg7", include_str!("../../../problems/eg7.toml")),
    ("eg8", include_str!("../../../problems/eg8.toml")),
];

fn invalid(field: &'static str, msg: impl Into<String>) -> ProblemError {
    ProblemError::Invalid {
        field,
        msg: msg.into(),
    }
}

impl ProblemSpec {
    pub fn parse(text: &str) -> Result<ProblemSpec, ProblemError> {
        let spec: ProblemSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Load from a path, or from the built-in corpus when `name` is `eg1`..`eg8`.
    pub fn load(name: &str) -> Result<ProblemSpec, ProblemError> {
        let path = Path::new(name);
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| ProblemError::Io {
                path: name.to_string(),
                source: e,
            })?;
            return ProblemSpec::parse(&text);
        }
        match CORPUS.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => ProblemSpec::parse(text),
            None => Err(ProblemError::Unknown(name.to_string())),
        }
    }

    pub fn corpus_names() -> Vec<&'static str> {
        CORPUS.iter().map(|(n, _)| *n).collect()
    }

    pub fn n(&self) -> usize {
        self.vars.len()
    }

    fn validate(&self) -> Result<(), ProblemError> {
        let n = self.vars.len();
        if n == 0 {
            return Err(invalid("vars", "at least one variable is required"));
        }
        if self.field.len() != n {
            return Err(invalid("field", format!("expected {n} components, got {}", self.field.len())));
        }
        if self.center.len() != n {
            return Err(invalid("center", format!("expected {n} entries")));
        }
        if self.radius.len() != n {
            return Err(invalid("radius", format!("expected {n} entries")));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("center", "entries must be finite"));
        }
        if self.radius.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(invalid("radius", "entries must be finite and non-negative"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(invalid("horizon", "must be positive"));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(invalid("eps", "must be positive"));
        }
        if let Some(k) = self.k {
            if k < 2 {
                return Err(invalid("k", "must be at least 2"));
            }
        }
        if let Some(h) = self.oracle_step {
            if !(h > 0.0) {
                return Err(invalid("oracle_step", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn vector_field(&self) -> Result<VectorField, ProblemError> {
        let vars: Vec<&str> = self.vars.iter().map(|s| s.as_str()).collect();
        let comps: Vec<&str> = self.field.iter().map(|s| s.as_str()).collect();
        let params: Vec<(&str, f64)> = self.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        Ok(VectorField::parse(&vars, &comps, &params, self.k.unwrap_or(DEFAULT_ORDER))?)
    }

    pub fn initial_box(&self) -> IBox {
        IBox::centered(&self.center, &self.radius)
    }

    pub fn oracle_step(&self, horizon: f64) -> f64 {
        self.oracle_step.unwrap_or((1e-3f64).min(horizon / 1e4))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_loads() {
        for name in ProblemSpec::corpus_names() {
            let p = ProblemSpec::load(name).unwrap();
            let f = p.vector_field().unwrap();
            assert_eq!(f.n, p.n());
        }
    }

    #[test]
    fn eg1_matches_table() {
        let p = ProblemSpec::load("eg1").unwrap();
        let f = p.vector_field().unwrap();
        assert_eq!(f.eval_vec(&[1.0, 3.0]), vec![-4.0, 0.0]);
        let b = p.initial_box();
        assert!(b.contains_point(&[0.9, 3.1]));
        assert!(b.dims[0].width() >= 0.2);
    }

    #[test]
    fn eg7_is_lorenz() {
        let p = ProblemSpec::load("eg7").unwrap();
        let f = p.vector_field().unwrap();
        let v = f.eval_vec(&[1.0, 2.0, 3.0]);
        assert_eq!(v[0], 10.0);
        assert_eq!(v[1], 1.0 * (28.0 - 3.0) - 2.0);
        assert!((v[2] - (2.0 - 8.0)).abs() < 1e-12);
        assert_eq!(p.radius, vec![0.001; 3]);
    }

    #[test]
    fn negative_radius_rejected() {
        let text = include_str!("../../../problems/eg1.toml");
        let bad = text.replace("radius = [0.1, 0.1]", "radius = [0.1, -0.1]");
        match ProblemSpec::parse(&bad) {
            Err(ProblemError::Invalid { field, .. }) => assert_eq!(field, "radius"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
