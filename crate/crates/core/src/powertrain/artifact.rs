//! Versioned JSON documents for fitted powertrain artifacts.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::fit::PowerFit;
use super::gear_map::GearMap;
use super::limits::ForceLimitFit;
use crate::error::{Error, Result};

pub trait Artifact: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
    const VERSION: u32 = 1;

    /// Grid shape for tabulated artifacts.
    fn shape(&self) -> Option<[usize; 2]> {
        None
    }

    /// Internal consistency check run after loading.
    fn check(&self) -> Result<()> {
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Document<T> {
    schema: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<[usize; 2]>,
    data: T,
}

pub fn to_json<T: Artifact>(value: &T) -> Result<String> {
    let doc = Document { schema: T::SCHEMA.to_string(), version: T::VERSION, shape: value.shape(), data: value };
    Ok(serde_json::to_string(&doc)?)
}

pub fn from_json<T: Artifact>(text: &str) -> Result<T> {
    let head: serde_json::Value = serde_json::from_str(text)?;
    let schema = head.get("schema").and_then(|s| s.as_str()).unwrap_or("");
    if schema != T::SCHEMA {
        return Err(Error::Schema(format!("expected schema {:?}, found {schema:?}", T::SCHEMA)));
    }
    let version = head.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != T::VERSION as u64 {
        return Err(Error::Schema(format!(
            "{} version {version} is not supported (expected {})",
            T::SCHEMA,
            T::VERSION
        )));
    }
    let doc: Document<T> = serde_json::from_value(head)?;
    if doc.shape != doc.data.shape() {
        return Err(Error::Schema(format!("{} shape does not match its data", T::SCHEMA)));
    }
    doc.data.check()?;
    Ok(doc.data)
}

pub fn save<T: Artifact>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn load<T: Artifact>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    from_json(&text)
}

impl Artifact for GearMap {
    const SCHEMA: &'static str = "ecodrive.gear_map";

    fn shape(&self) -> Option<[usize; 2]> {
        Some([self.energy.len(), self.force.len()])
    }

    fn check(&self) -> Result<()> {
        let (n_e, n_f) = (self.energy.len(), self.force.len());
        if self.gear.len() != n_e * n_f || self.power.len() != n_e * n_f {
            return Err(Error::Schema("gear map tables do not match the grid".into()));
        }
        if [&self.force_max, &self.force_min, &self.additional_min].iter().any(|v| v.len() != n_e) {
            return Err(Error::Schema("gear map limit curves do not match the energy grid".into()));
        }
        Ok(())
    }
}

impl Artifact for PowerFit {
    const SCHEMA: &'static str = "ecodrive.power_fit";

    fn check(&self) -> Result<()> {
        if self.coeffs.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::Schema("power fit coefficients must be nonnegative".into()));
        }
        Ok(())
    }
}

impl Artifact for ForceLimitFit {
    const SCHEMA: &'static str = "ecodrive.force_limits";

    fn check(&self) -> Result<()> {
        if !(self.y1 >= 0.0 && self.x1 <= 0.0) {
            return Err(Error::Schema("force limit curvature has the wrong sign".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VehicleParams;
    use crate::powertrain::{ActuatorMap, GridSpec, WheelTables};

    #[test]
    fn gear_map_round_trip_is_lossless() {
        let tables = WheelTables::build(
            &ActuatorMap::default_cv(),
            &VehicleParams::heavy_truck(),
            &GridSpec { n_energy: 25, n_force: 30, v_min: 1.0 },
        )
        .unwrap();
        let map = GearMap::optimise(&tables);
        let back: GearMap = from_json(&to_json(&map).unwrap()).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn limits_round_trip_is_lossless() {
        let fit = ForceLimitFit {
            y0: 0.1 + 0.2,
            y1: 1.0 / 3.0,
            x0: -std::f64::consts::PI,
            x1: -1e-300,
            f_max: 1.0,
            f_min: -1.0,
            v0: 2.2,
            v1: 30.0,
        };
        let back: ForceLimitFit = from_json(&to_json(&fit).unwrap()).unwrap();
        assert_eq!(back, fit);
    }

    #[test]
    fn wrong_schema_rejected() {
        let fit = ForceLimitFit { y0: 0.0, y1: 0.0, x0: 0.0, x1: 0.0, f_max: 0.0, f_min: 0.0, v0: 1.0, v1: 2.0 };
        let text = to_json(&fit).unwrap();
        assert!(matches!(from_json::<PowerFit>(&text), Err(Error::Schema(_))));
        let bumped = text.replace("\"version\":1", "\"version\":2");
        assert!(matches!(from_json::<ForceLimitFit>(&bumped), Err(Error::Schema(_))));
    }
}
