//! JSON experiment configs with friendly schema errors.

use std::path::Path;

use crate::error::{Error, Result};
use crate::train::ExperimentConfig;

/// Parse and validate a config. Missing required keys surface as
/// "config.<field>: required".
pub fn parse_config(json: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(json).map_err(|e| {
        let msg = e.to_string();
        if let Some(rest) = msg.strip_prefix("missing field `") {
            if let Some(field) = rest.split('`').next() {
                return Error::Config(format!("config.{field}: required"));
            }
        }
        Error::Config(format!("config parse error: {msg}"))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("json serialization: {e}")))?;
    super::write_atomic(path, json.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SystemId;

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::desk(SystemId::RigidBody);
        let json = serde_json::to_string(&cfg).unwrap();
        let back = parse_config(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn missing_system_names_the_field() {
        let json = r#"{ "dt": 0.01 }"#;
        let err = parse_config(json).unwrap_err();
        assert_eq!(err.to_string(), "config error: config.system: required");
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = ExperimentConfig::desk(SystemId::TwoBody);
        cfg.dt = -1.0;
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(parse_config(&json).is_err());
    }
}
