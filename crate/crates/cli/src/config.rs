//! Run configuration: a TOML file with a `[system]` table, the energy
//! parameters and the tolerances shared by all commands.

use freetime::{Error, Result, SystemSpec};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitMode {
    /// Class minimization above the `c_u` estimate, mountain pass below.
    Auto,
    MountainPass,
    ClassMin,
}

/// Newton targets (`el`, `energy`) and the thresholds an emitted orbit
/// must meet to count as verified.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub el: f64,
    pub energy: f64,
    /// Gradient tolerance of descents and path relaxation.
    pub gtol: f64,
    pub accept_el: f64,
    pub accept_energy: f64,
    /// Allowed `max |E(t) − k|` over the nodes.
    pub pointwise_energy: f64,
    /// Allowed `|x(T) − x(0) − winding|` after re-integration.
    pub closure: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            el: 1e-10,
            energy: 1e-10,
            gtol: 1e-3,
            accept_el: 1e-9,
            accept_energy: 1e-9,
            pointwise_energy: 1e-5,
            closure: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub k: Option<f64>,
    /// Inclusive `[k_min, k_max]` for sweeps.
    pub k_range: Option<[f64; 2]>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_mode")]
    pub mode: OrbitMode,
    /// Homotopy class for class minimization.
    pub class: Option<Vec<i64>>,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Loop file read by `conjugate`.
    pub orbit_file: Option<PathBuf>,
    /// `conjugate` scans this many periods of the orbit.
    #[serde(default = "default_periods")]
    pub periods: f64,
    /// Periods of the `ps-demo` barrier scan.
    #[serde(default = "default_ps_periods")]
    pub ps_periods: Vec<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_e0_grid")]
    pub e0_grid: usize,
}

fn default_grid() -> usize {
    50
}
fn default_nodes() -> usize {
    256
}
fn default_mode() -> OrbitMode {
    OrbitMode::Auto
}
fn default_periods() -> f64 {
    3.0
}
fn default_ps_periods() -> Vec<f64> {
    vec![10.0, 20.0, 50.0, 100.0, 200.0]
}
fn default_bins() -> usize {
    20
}
fn default_e0_grid() -> usize {
    128
}

fn field(name: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: name.into(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Parse {
                line,
                message: e.message().trim().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| field("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.k {
            if !k.is_finite() {
                return Err(field("k", "must be finite"));
            }
        }
        if let Some([lo, hi]) = self.k_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(field("k_range", "must be a finite, non-decreasing pair"));
            }
        }
        if self.grid < 2 {
            return Err(field("grid", "needs at least two points"));
        }
        if self.nodes < 16 || !self.nodes.is_multiple_of(2) {
            return Err(field("nodes", "must be even and at least 16"));
        }
        let t = &self.tolerances;
        let all = [
            ("el", t.el),
            ("energy", t.energy),
            ("gtol", t.gtol),
            ("accept_el", t.accept_el),
            ("accept_energy", t.accept_energy),
            ("pointwise_energy", t.pointwise_energy),
            ("closure", t.closure),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field(&format!("tolerances.{name}"), "must be positive"));
            }
        }
        if !(self.periods > 0.0 && self.periods.is_finite()) {
            return Err(field("periods", "must be positive"));
        }
        if self.ps_periods.is_empty() || self.ps_periods.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(field("ps_periods", "must be a non-empty list of positive periods"));
        }
        if self.bins == 0 {
            return Err(field("bins", "must be positive"));
        }
        if self.e0_grid < 64 {
            return Err(field("e0_grid", "must be at least 64"));
        }
        Ok(())
    }

    pub fn require_k(&self) -> Result<f64> {
        self.k.ok_or_else(|| field("k", "required by this command"))
    }

    pub fn require_range(&self) -> Result<(f64, f64)> {
        self.k_range
            .map(|[a, b]| (a, b))
            .ok_or_else(|| field("k_range", "required by this command"))
    }

    pub fn require_orbit_file(&self) -> Result<&Path> {
        self.orbit_file
            .as_deref()
            .ok_or_else(|| field("orbit_file", "required by this command"))
    }
}
