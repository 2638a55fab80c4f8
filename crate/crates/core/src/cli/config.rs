//! TOML run configuration.
//!
//! Every section is optional. Tables such as `[vehicle]` or `[mpc]` are
//! overlays: keys present in the file replace the defaults for the chosen
//! powertrain kind, the rest keep their default values. Prices are given in
//! EUR/litre or EUR/kWh and converted to EUR/J here.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SyntheticRoute, VehicleParams};
use crate::mpc::MpcConfig;
use crate::ocp::{electricity_price_per_joule, fuel_price_per_joule};
use crate::powertrain::{PowertrainConfig, PowertrainKind};

/// Which of the compared driving cases a command produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CaseLabel {
    /// Heuristic cruise-speed driving.
    Hg,
    /// MPC without jerk penalty.
    Case1,
    /// MPC with the configured jerk penalty.
    Case2,
}

/// Speed band applied to road files without speed columns [km/h].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedBand {
    pub vmin_kmh: f64,
    pub vmax_kmh: f64,
}

impl Default for SpeedBand {
    fn default() -> Self {
        Self { vmin_kmh: 60.0, vmax_kmh: 90.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSettings {
    /// Segment start along the route [m].
    pub start_m: f64,
    pub length_m: f64,
    pub intervals: usize,
    /// Fixed time costate [EUR/s].
    pub lambda: f64,
    pub w2: f64,
    /// Energy-grid sizes of the refinement study, coarse to fine.
    pub energy_levels: Vec<usize>,
    pub accel_levels: usize,
    /// Start speed [km/h].
    pub v0_kmh: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            start_m: 12_000.0,
            length_m: 6_000.0,
            intervals: 20,
            lambda: 0.007,
            w2: 0.0,
            energy_levels: vec![21, 41, 81],
            accel_levels: 81,
            v0_kmh: 75.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSettings {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    /// Fixed costate of the timed QPs [EUR/s].
    pub lambda: f64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self { sizes: vec![100, 200, 400, 800], repeats: 5, lambda: 0.007 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: Option<PowertrainKind>,
    vehicle: Option<toml::Table>,
    powertrain: Option<RawPowertrain>,
    route: Option<RawRoute>,
    prices: Option<RawPrices>,
    mpc: Option<toml::Table>,
    output: Option<RawOutput>,
    case: Option<CaseLabel>,
    compare: Option<RawCompare>,
    sweep: Option<RawSweep>,
    oracle: Option<toml::Table>,
    bench: Option<toml::Table>,
}

// unknown synthesis keys are caught by the overlay
#[derive(Deserialize)]
struct RawPowertrain {
    artifacts: Option<PathBuf>,
    #[serde(flatten)]
    synthesis: toml::Table,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRoute {
    path: Option<PathBuf>,
    vmin_kmh: Option<f64>,
    vmax_kmh: Option<f64>,
    synthetic: Option<toml::Table>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrices {
    fuel_eur_per_litre: Option<f64>,
    electricity_eur_per_kwh: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompare {
    w2: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    weights: Option<Vec<f64>>,
}

/// Where the route comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum RouteSource {
    File { path: PathBuf, band: SpeedBand },
    Synthetic(SyntheticRoute),
}

/// Fully resolved and validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: PowertrainKind,
    pub vehicle: VehicleParams,
    pub powertrain: PowertrainConfig,
    /// Directory holding prefitted artifacts; the output directory when unset.
    pub artifacts: Option<PathBuf>,
    pub route: RouteSource,
    pub fuel_eur_per_litre: f64,
    pub electricity_eur_per_kwh: f64,
    pub mpc: MpcConfig,
    pub out: PathBuf,
    pub case: CaseLabel,
    /// Jerk weight of case 2.
    pub case2_w2: f64,
    pub sweep_weights: Vec<f64>,
    pub oracle: OracleSettings,
    pub bench: BenchSettings,
}

fn overlay<T: Serialize + DeserializeOwned>(base: T, patch: Option<toml::Table>, section: &str) -> Result<T> {
    let Some(patch) = patch else { return Ok(base) };
    let mut value = toml::Value::try_from(&base).map_err(|e| Error::Config(format!("[{section}]: {e}")))?;
    let table = value.as_table_mut().ok_or_else(|| Error::Config(format!("[{section}] is not a table")))?;
    for (k, v) in patch {
        // optional fields are absent from the serialised defaults; the mpc
        // section rejects unknown keys itself
        if !table.contains_key(&k) && section != "mpc" {
            return Err(Error::Config(format!("[{section}] has no key {k:?}")));
        }
        table.insert(k, v);
    }
    value.try_into().map_err(|e| Error::Config(format!("[{section}]: {e}")))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl RunConfig {
    /// Defaults for one powertrain kind on the synthetic route.
    pub fn for_kind(kind: PowertrainKind) -> Self {
        Self {
            kind,
            vehicle: match kind {
                PowertrainKind::Cv => VehicleParams::heavy_truck(),
                PowertrainKind::Ev => VehicleParams::electric_truck(),
            },
            powertrain: PowertrainConfig::for_kind(kind),
            artifacts: None,
            route: RouteSource::Synthetic(SyntheticRoute::default()),
            fuel_eur_per_litre: 1.51,
            electricity_eur_per_kwh: 0.18,
            mpc: MpcConfig::default(),
            out: PathBuf::from("out"),
            case: CaseLabel::Case1,
            case2_w2: 50.0,
            sweep_weights: vec![0.0, 10.0, 100.0, 1e3, 1e4, 1e5],
            oracle: OracleSettings::default(),
            bench: BenchSettings::default(),
        }
    }

    /// Parses a TOML document. Relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let kind = raw.kind.unwrap_or(PowertrainKind::Cv);
        let mut cfg = Self::for_kind(kind);
        cfg.vehicle = overlay(cfg.vehicle, raw.vehicle, "vehicle")?;
        if let Some(p) = raw.powertrain {
            cfg.artifacts = p.artifacts.map(|a| base_dir.join(a));
            let synthesis = if p.synthesis.is_empty() { None } else { Some(p.synthesis) };
            cfg.powertrain = overlay(cfg.powertrain, synthesis, "powertrain")?;
        }
        if let Some(r) = raw.route {
            let band = SpeedBand {
                vmin_kmh: r.vmin_kmh.unwrap_or(SpeedBand::default().vmin_kmh),
                vmax_kmh: r.vmax_kmh.unwrap_or(SpeedBand::default().vmax_kmh),
            };
            cfg.route = match (r.path, r.synthetic) {
                (Some(_), Some(_)) => {
                    return Err(Error::Config("[route] takes either path or [route.synthetic], not both".into()))
                }
                (Some(path), None) => RouteSource::File { path: base_dir.join(path), band },
                (None, synthetic) => {
                    RouteSource::Synthetic(overlay(SyntheticRoute::default(), synthetic, "route.synthetic")?)
                }
            };
        }
        if let Some(p) = raw.prices {
            cfg.fuel_eur_per_litre = p.fuel_eur_per_litre.unwrap_or(cfg.fuel_eur_per_litre);
            cfg.electricity_eur_per_kwh = p.electricity_eur_per_kwh.unwrap_or(cfg.electricity_eur_per_kwh);
        }
        cfg.mpc = overlay(cfg.mpc, raw.mpc, "mpc")?;
        if let Some(o) = raw.output.and_then(|o| o.dir) {
            cfg.out = base_dir.join(o);
        }
        cfg.case = raw.case.unwrap_or(cfg.case);
        if let Some(w) = raw.compare.and_then(|c| c.w2) {
            cfg.case2_w2 = w;
        }
        if let Some(w) = raw.sweep.and_then(|s| s.weights) {
            cfg.sweep_weights = w;
        }
        cfg.oracle = overlay(cfg.oracle, raw.oracle, "oracle")?;
        cfg.bench = overlay(cfg.bench, raw.bench, "bench")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate().map_err(|e| Error::Config(format!("[vehicle]: {e}")))?;
        self.mpc.validate().map_err(|e| Error::Config(format!("[mpc]: {e}")))?;
        positive("prices.fuel_eur_per_litre", self.fuel_eur_per_litre)?;
        positive("prices.electricity_eur_per_kwh", self.electricity_eur_per_kwh)?;
        if self.kind == PowertrainKind::Ev && self.vehicle.gear_count() != 1 {
            return Err(Error::Config("an electric drive has a single transmission ratio".into()));
        }
        if let RouteSource::File { path, band } = &self.route {
            if !path.is_file() {
                return Err(Error::Config(format!("route file {} does not exist", path.display())));
            }
            if !(band.vmin_kmh >= 0.0 && band.vmin_kmh < band.vmax_kmh) {
                return Err(Error::Config(format!("route speed band {band:?} is empty")));
            }
        }
        if let Some(dir) = &self.artifacts {
            if !dir.is_dir() {
                return Err(Error::Config(format!("artifact directory {} does not exist", dir.display())));
            }
        }
        if !(self.case2_w2 >= 0.0) || self.sweep_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("jerk weights must be nonnegative".into()));
        }
        let o = &self.oracle;
        if o.intervals == 0
            || o.energy_levels.is_empty()
            || o.energy_levels.iter().any(|n| *n < 2)
            || o.accel_levels < 2
        {
            return Err(Error::Config("[oracle] needs intervals ≥ 1 and at least two levels per axis".into()));
        }
        positive("oracle.length_m", o.length_m)?;
        positive("oracle.v0_kmh", o.v0_kmh)?;
        if self.bench.sizes.is_empty() || self.bench.sizes.contains(&0) || self.bench.repeats == 0 {
            return Err(Error::Config("[bench] needs nonzero sizes and repeats".into()));
        }
        Ok(())
    }

    /// Energy price c_eg [EUR/J] of the configured powertrain.
    pub fn energy_price(&self) -> f64 {
        match self.kind {
            PowertrainKind::Cv => fuel_price_per_joule(self.fuel_eur_per_litre),
            PowertrainKind::Ev => electricity_price_per_joule(self.electricity_eur_per_kwh),
        }
    }

    /// Directory searched for fitted artifacts.
    pub fn artifact_dir(&self) -> &Path {
        self.artifacts.as_deref().unwrap_or(&self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_cv_defaults() {
        let cfg = RunConfig::from_toml("", Path::new(".")).unwrap();
        assert_eq!(cfg, RunConfig::for_kind(PowertrainKind::Cv));
        assert!((cfg.energy_price() - 1.51 / (0.832 * 42.6e6)).abs() < 1e-20);
    }

    #[test]
    fn overlays_keep_unlisted_defaults() {
        let text = r#"
            kind = "ev"
            [vehicle]
            mass = 30000.0
            [mpc]
            mode = "moving"
            horizon = 20000.0
            [route.synthetic]
            seed = 11
        "#;
        let cfg = RunConfig::from_toml(text, Path::new(".")).unwrap();
        assert_eq!(cfg.vehicle.mass, 30_000.0);
        assert_eq!(cfg.vehicle.frontal_area, VehicleParams::electric_truck().frontal_area);
        assert_eq!(cfg.mpc.horizon, 20_000.0);
        assert_eq!(cfg.mpc.ds, MpcConfig::default().ds);
        match cfg.route {
            RouteSource::Synthetic(ref r) => assert_eq!((r.seed, r.length), (11, 118_000.0)),
            other => panic!("{other:?}"),
        }
        assert!((cfg.energy_price() - 5e-8).abs() < 1e-20);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for text in [
            "colour = 3",
            "[vehicle]\nmas = 1.0",
            "[prices]\nfuel_eur_per_litre = -1.0",
            "[mpc]\nbeta = 0.0",
            "[route]\npath = \"does/not/exist.csv\"",
        ] {
            assert!(matches!(RunConfig::from_toml(text, Path::new(".")), Err(Error::Config(_))), "{text}");
        }
    }
}
