use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::SystemGeometry;
use crate::constellation::ModulationKind;
use crate::error::{Error, Result};
use crate::pgm::{Method, PgmParams};
use crate::sca::ScaParams;

/// Which optimizer(s) an experiment runs on each realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Pgm,
    Sca,
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodChoice::Pgm => vec![Method::Pgm],
            MethodChoice::Sca => vec![Method::Sca],
            MethodChoice::Both => vec![Method::Pgm, Method::Sca],
        }
    }
}

impl std::str::FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgm" => Ok(MethodChoice::Pgm),
            "sca" => Ok(MethodChoice::Sca),
            "both" => Ok(MethodChoice::Both),
            _ => Err(Error::Config(format!("unknown method `{s}` (expected pgm, sca or both)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulationConfig {
    pub kind: ModulationKind,
    pub order: usize,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self { kind: ModulationKind::Qam, order: 4 }
    }
}

/// Everything that determines an experiment. Read from TOML; missing keys
/// take the defaults below.
///
/// ```toml
/// seed = 7
/// noise_power_db = -110.0
/// method = "both"
/// direct_blocked = true
///
/// [modulation]
/// kind = "qam"
/// order = 4
///
/// [pgm]
/// l0 = 1000.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Noise power in dB; the linear value is `10^(dB/10)`.
    pub noise_power_db: f64,
    pub method: MethodChoice,
    pub direct_blocked: bool,
    pub ris_enabled: bool,
    pub n_realizations: usize,
    /// Noise draws per transmit vector for the MI estimate at each iterate.
    pub n_noise: usize,
    /// Noise draws per transmit vector for the MI estimate at the final point.
    pub final_noise: usize,
    pub geometry: SystemGeometry,
    pub modulation: ModulationConfig,
    pub pgm: PgmParams,
    pub sca: ScaParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            noise_power_db: -110.0,
            method: MethodChoice::Both,
            direct_blocked: true,
            ris_enabled: true,
            n_realizations: 30,
            n_noise: 500,
            final_noise: 5000,
            geometry: SystemGeometry::default(),
            modulation: ModulationConfig::default(),
            pgm: PgmParams::default(),
            sca: ScaParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Linear noise power `σ²`.
    pub fn noise_power(&self) -> f64 {
        10f64.powf(self.noise_power_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let sigma2 = self.noise_power();
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Config(format!("noise_power_db = {} gives σ² = {sigma2}", self.noise_power_db)));
        }
        if self.n_realizations == 0 {
            return Err(Error::Config("n_realizations must be at least 1".into()));
        }
        if self.n_noise == 0 || self.final_noise == 0 {
            return Err(Error::Config("n_noise and final_noise must be at least 1".into()));
        }
        self.geometry.validate()?;
        self.pgm.validate()?;
        self.sca.validate()
    }

    /// Returns a copy with the dotted `key` (e.g. `pgm.l0`) set to `value`.
    /// `value` is read as a TOML literal, falling back to a bare string.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        let (last, parents) = parts.split_last().ok_or_else(|| Error::Config("empty key".into()))?;
        let mut table = root.as_table_mut().expect("config serializes to a table");
        for part in parents {
            table = table
                .get_mut(*part)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| Error::Config(format!("unknown config section `{part}` in `{key}`")))?;
        }
        let slot = table
            .get_mut(*last)
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        let mut parsed = parse_literal(value);
        if let (toml::Value::Float(_), toml::Value::Integer(i)) = (&*slot, &parsed) {
            parsed = toml::Value::Float(*i as f64);
        }
        *slot = parsed;
        let config: Self = root.try_into().map_err(|e: toml::de::Error| Error::Config(format!("{key}: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}

fn parse_literal(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

/// Parses `key=v1,v2,...` into a key and its values.
pub fn parse_grid_axis(spec: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("grid axis `{spec}` is not of the form key=v1,v2")))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if key.trim().is_empty() || values.is_empty() {
        return Err(Error::Config(format!("grid axis `{spec}` has no key or no values")));
    }
    Ok((key.trim().to_string(), values))
}

/// Cartesian product of grid axes, first axis varying slowest.
pub fn grid_points(axes: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    axes.iter().fold(vec![Vec::new()], |acc, (key, values)| {
        acc.iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut point = prefix.clone();
                    point.push((key.clone(), v.clone()));
                    point
                })
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), c);
    }

    #[test]
    fn noise_power_conversion() {
        let c = ExperimentConfig::default();
        assert!((c.noise_power() / 1e-11 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_file() {
        let c = ExperimentConfig::from_toml_str(
            "seed = 3\nmethod = \"sca\"\n[modulation]\norder = 16\n[geometry]\nris_rows = 4\n",
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.method, MethodChoice::Sca);
        assert_eq!(c.modulation.order, 16);
        assert_eq!(c.modulation.kind, ModulationKind::Qam);
        assert_eq!(c.geometry.ris_rows, 4);
        assert_eq!(c.geometry.ris_cols, SystemGeometry::default().ris_cols);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(ExperimentConfig::from_toml_str("sead = 3").is_err());
        assert!(ExperimentConfig::from_toml_str("n_realizations = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("[pgm]\nrho = 1.5").is_err());
    }

    #[test]
    fn overrides() {
        let c = ExperimentConfig::default();
        let o = c.with_override("pgm.l0", "100").unwrap();
        assert_eq!(o.pgm.l0, 100.0);
        let o = o.with_override("modulation.kind", "psk").unwrap();
        assert_eq!(o.modulation.kind, ModulationKind::Psk);
        let o = o.with_override("direct_blocked", "false").unwrap();
        assert!(!o.direct_blocked);
        assert!(c.with_override("pgm.nope", "1").is_err());
        assert!(c.with_override("n_realizations", "0").is_err());
        assert!(c.with_override("n_realizations", "abc").is_err());
    }

    #[test]
    fn grid() {
        let axes = vec![
            parse_grid_axis("a=1,2").unwrap(),
            parse_grid_axis("b = x, y ,z").unwrap(),
        ];
        let pts = grid_points(&axes);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![("a".into(), "1".into()), ("b".into(), "x".into())]);
        assert_eq!(pts[5], vec![("a".into(), "2".into()), ("b".into(), "z".into())]);
        assert!(parse_grid_axis("novalues=").is_err());
        assert!(parse_grid_axis("noequals").is_err());
    }
}
