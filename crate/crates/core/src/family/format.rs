//! Text format for family specifications (TOML).
//!
//! ```toml
//! name = "quadratic"
//! k = 1
//! d = 2
//! m = 1
//!
//! [[components]]
//! [[components.terms]]
//! monomial = [2, 0]
//! coeff = [{ param = [0], value = [1.0, 0.0] }]
//! [[components.terms]]
//! monomial = [0, 2]
//! coeff = [{ param = [1], value = [1.0, 0.0] }]
//!
//! [[components]]
//! [[components.terms]]
//! monomial = [0, 2]
//! coeff = [{ param = [0], value = [1.0, 0.0] }]
//!
//! [domain]
//! center = [[0.0, 0.0]]
//! radii = [0.2, 0.3, 0.4]
//! mesh = 21
//! ```
//!
//! Complex numbers are `[re, im]` pairs. Floats are written in shortest
//! round-trip form, so `parse(render(spec)) == spec` bit for bit.

use std::path::Path;

use super::FamilySpec;
use crate::error::{Error, Result};

impl FamilySpec {
    /// Parses a specification and checks its structure. Homogeneity is left to
    /// [`super::validate_family`] so that malformed components can be reported.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: FamilySpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.check_structure()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}
