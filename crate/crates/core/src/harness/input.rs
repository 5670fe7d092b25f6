use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bundles::SampledSet;
use crate::error::{Error, Result};

pub const CLOUD_SCHEMA: &str = "manifold-fit/cloud";
pub const CLOUD_SCHEMA_VERSION: u32 = 1;

/// JSON point cloud: `{n, d, m, points, loops?}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CloudInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u32>,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub points: Vec<Vec<f64>>,
    /// Closed loops as sample indices, checked in addition to the detected ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loops: Vec<Vec<usize>>,
}

impl CloudInput {
    pub fn new(points: &[DVector<f64>], d: usize, m: usize) -> Self {
        Self {
            schema: Some(CLOUD_SCHEMA.to_string()),
            version: Some(CLOUD_SCHEMA_VERSION),
            n: points.first().map_or(0, |p| p.len()),
            d,
            m,
            points: points.iter().map(|p| p.iter().copied().collect()).collect(),
            loops: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cloud: Self = serde_json::from_str(text).map_err(|e| Error::Input(format!("cloud schema: {e}")))?;
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.schema {
            if s != CLOUD_SCHEMA {
                return Err(Error::Input(format!("cloud schema: expected \"{CLOUD_SCHEMA}\", got \"{s}\"")));
            }
        }
        if let Some(v) = self.version {
            if v > CLOUD_SCHEMA_VERSION {
                return Err(Error::Input(format!("cloud schema: version {v} is newer than {CLOUD_SCHEMA_VERSION}")));
            }
        }
        if self.d == 0 || self.d >= self.n {
            return Err(Error::Input(format!("cloud schema: need 0 < d < n, got d = {}, n = {}", self.d, self.n)));
        }
        if self.m == 0 {
            return Err(Error::Input("cloud schema: m must be at least 1".into()));
        }
        if self.points.is_empty() {
            return Err(Error::Input("cloud schema: points is empty".into()));
        }
        if let Some(i) = self.points.iter().position(|p| p.len() != self.n) {
            return Err(Error::Input(format!("cloud schema: point {i} has length {}, expected {}", self.points[i].len(), self.n)));
        }
        for (k, lp) in self.loops.iter().enumerate() {
            if lp.len() < 3 {
                return Err(Error::Input(format!("cloud schema: loop {k} has fewer than 3 samples")));
            }
            if let Some(&i) = lp.iter().find(|&&i| i >= self.points.len()) {
                return Err(Error::Input(format!("cloud schema: loop {k} refers to sample {i}, out of range")));
            }
        }
        Ok(())
    }

    pub fn vectors(&self) -> Vec<DVector<f64>> {
        self.points.iter().map(|p| DVector::from_column_slice(p)).collect()
    }

    pub fn to_set(&self) -> Result<SampledSet> {
        SampledSet::new(self.vectors())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let pts = vec![DVector::from_vec(vec![0.0, 1.0]), DVector::from_vec(vec![0.5, 0.25])];
        let c = CloudInput::new(&pts, 1, 2);
        let back = CloudInput::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.vectors(), pts);
    }

    #[test]
    fn minimal_document_is_accepted() {
        let c = CloudInput::from_json(r#"{"n": 2, "d": 1, "m": 1, "points": [[0, 0], [1, 1]]}"#).unwrap();
        assert!(c.schema.is_none() && c.loops.is_empty());
    }

    #[test]
    fn malformed_documents_are_input_errors() {
        for bad in [
            r#"{"n": 2, "d": 1, "points": [[0, 0]]}"#,
            r#"{"n": 2, "d": 2, "m": 1, "points": [[0, 0]]}"#,
            r#"{"n": 2, "d": 1, "m": 1, "points": [[0, 0, 1]]}"#,
            r#"{"n": 2, "d": 1, "m": 1, "points": [[0, 0]], "loops": [[0, 0, 7]]}"#,
            r#"{"n": 2, "d": 1, "m": 1, "points": [[0, 0]], "extra": 1}"#,
            "not json",
        ] {
            assert!(matches!(CloudInput::from_json(bad), Err(Error::Input(_))), "{bad}");
        }
    }
}
