use std::path::Path;

use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_PORT: u16 = 8080;
pub const PORT_ENV: &str = "MATERN_PORT";
/// Largest surface resolution served or written (the grid has resolution^2 cells).
pub const MAX_RESOLUTION: usize = 1001;

/// Grid defaults, optionally overridden from a TOML file of plain keys:
///
/// ```toml
/// half_width = 5.0
/// resolution = 101
/// d_step = 0.05
/// port = 8080
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridDefaults {
    pub half_width: f64,
    pub resolution: usize,
    /// Step of the radial distance grid used by the swap table.
    pub d_step: f64,
    pub port: Option<u16>,
}

impl Default for GridDefaults {
    fn default() -> Self {
        Self {
            half_width: matern_core::covariance::DEFAULT_SURFACE_HALF_WIDTH,
            resolution: matern_core::covariance::DEFAULT_SURFACE_RESOLUTION,
            d_step: matern_core::analysis::DistanceGrid::swap_default().step,
            port: None,
        }
    }
}

impl GridDefaults {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        if !(cfg.half_width > 0.0 && cfg.half_width.is_finite()) {
            return Err(format!("half_width must be positive, got {}", cfg.half_width));
        }
        if !(2..=MAX_RESOLUTION).contains(&cfg.resolution) {
            return Err(format!("resolution must be in 2..={MAX_RESOLUTION}, got {}", cfg.resolution));
        }
        if !(cfg.d_step > 0.0 && cfg.d_step.is_finite()) {
            return Err(format!("d_step must be positive, got {}", cfg.d_step));
        }
        Ok(cfg)
    }

    /// `--port`, then `MATERN_PORT`, then the config file, then 8080.
    pub fn resolve_port(&self, flag: Option<u16>) -> Result<u16, CliError> {
        if let Some(p) = flag {
            return Ok(p);
        }
        match std::env::var(PORT_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| CliError::Usage(format!("{PORT_ENV}={v} is not a port"))),
            Err(_) => Ok(self.port.unwrap_or(DEFAULT_PORT)),
        }
    }
}
