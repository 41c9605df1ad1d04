//! Run configuration read from a JSON document.

use crate::error::Error;
use crate::interior::DensitySpec;
use crate::load::{LoadSet, LoadSpec};
use crate::material::{Mat6, Mat6x3, MaterialTensor, Preset};
use crate::mesh::{MeshParams, VoidShape};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Material given by name or by its three blocks (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialSpec {
    Preset(Preset),
    Blocks {
        elastic: [[f64; 6]; 6],
        coupling: [[f64; 3]; 6],
        permeability: [[f64; 3]; 3],
    },
}

impl MaterialSpec {
    pub fn build(&self) -> Result<MaterialTensor, Error> {
        match self {
            MaterialSpec::Preset(p) => Ok(p.tensor()),
            MaterialSpec::Blocks { elastic, coupling, permeability } => MaterialTensor::new(
                Mat6::from_fn(|i, j| elastic[i][j]),
                Mat6x3::from_fn(|i, j| coupling[i][j]),
                Matrix3::from_fn(|i, j| permeability[i][j]),
            ),
        }
    }

    pub fn name(&self) -> String {
        match self {
            MaterialSpec::Preset(p) => p.name().to_string(),
            MaterialSpec::Blocks { .. } => "explicit".to_string(),
        }
    }
}

/// Everything a command needs. Every field has a default, so `{}` is a
/// valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub material: MaterialSpec,
    pub shape: VoidShape,
    /// Void scales, strictly decreasing.
    pub h: Vec<f64>,
    pub mesh: MeshParams,
    /// Truncation radii of the exterior problems in units of the void
    /// diameter, increasing.
    pub radii: Vec<f64>,
    pub loads: LoadSpec,
    pub density: DensitySpec,
    /// Coupling amplitudes of the weak-coupling study.
    pub amplitudes: Vec<f64>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            material: MaterialSpec::Preset(Preset::SyntheticCoupled),
            shape: VoidShape::Sphere,
            h: vec![0.12, 0.09, 0.06],
            mesh: MeshParams::default(),
            radii: vec![6.0, 9.0, 12.0],
            loads: LoadSpec::default_test(),
            density: DensitySpec::LeastSquares { weight: 1.0, reference: [0.05, -0.02, -0.1, 0.1] },
            amplitudes: vec![0.05, 0.1],
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.material.build()?;
        self.shape.validate()?;
        self.mesh.validate()?;
        self.loads.build()?;
        if self.h.is_empty() || self.h.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Config("h: need at least one positive value".into()));
        }
        if self.h.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("h: values must be strictly decreasing".into()));
        }
        if self.radii.is_empty() || self.radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("radii: values must be non-empty and increasing".into()));
        }
        if self.radii[0] < 2.0 {
            return Err(Error::Config("radii: truncation must be at least two void diameters".into()));
        }
        if self.amplitudes.iter().any(|t| !(*t >= 0.0 && *t <= 0.1)) {
            return Err(Error::Config("amplitudes: values must lie in [0, 0.1]".into()));
        }
        Ok(())
    }

    pub fn material(&self) -> MaterialTensor {
        self.material.build().expect("validated material")
    }

    pub fn load_set(&self) -> LoadSet {
        self.loads.build().expect("validated loads")
    }

    /// Absolute truncation radii for the configured shape.
    pub fn absolute_radii(&self) -> Vec<f64> {
        let d = 2.0 * self.shape.max_radius();
        self.radii.iter().map(|r| r * d).collect()
    }

    pub fn smallest_h(&self) -> f64 {
        *self.h.last().expect("validated h")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn roundtrip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_fields() {
        let e = RunConfig::from_json("{\n  \"h\": [0.1, 0.2]\n}").unwrap_err();
        assert!(e.to_string().contains("decreasing"));
        let e = RunConfig::from_json("{\n  \"hh\": 1\n}").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(RunConfig::from_json(r#"{"material": {"preset": "unobtainium"}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"amplitudes": [0.5]}"#).is_err());
    }

    #[test]
    fn explicit_blocks() {
        let m = Preset::IsoDecoupled.tensor();
        let spec = MaterialSpec::Blocks {
            elastic: std::array::from_fn(|i| std::array::from_fn(|j| m.elastic[(i, j)])),
            coupling: [[0.0; 3]; 6],
            permeability: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
        assert_eq!(spec.build().unwrap(), m);
    }
}
