//! Run configuration, read from JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::{DEFAULT_MAX_PICARD, PICARD_REL_TOL};
use crate::error::{Error, Result};
use crate::fluid::InitSpec;
use crate::geometry::GeometrySpec;

/// Convergence tests applied to the final window of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitTolerances {
    /// Largest allowed angle between `Omega` and the limit axis, degrees.
    pub angle_deg: f64,
    /// Largest allowed `|Omega x I Omega| / (|Omega| |I Omega|)`.
    pub residual: f64,
    /// Largest allowed `||u||_2` relative to its initial value.
    pub u_rel: f64,
    /// Fraction of the run, counted from the end, that the tests inspect.
    pub window_fraction: f64,
}

impl Default for LimitTolerances {
    fn default() -> Self {
        Self {
            angle_deg: 5.0,
            residual: 1e-2,
            u_rel: 1e-2,
            window_fraction: 0.1,
        }
    }
}

impl LimitTolerances {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("tolerances.angle_deg", self.angle_deg),
            ("tolerances.residual", self.residual),
            ("tolerances.u_rel", self.u_rel),
            ("tolerances.window_fraction", self.window_fraction),
        ];
        for (key, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        if self.window_fraction > 1.0 {
            return Err(Error::config(
                "tolerances.window_fraction",
                format!("must not exceed 1, got {}", self.window_fraction),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardConfig {
    /// Relative stopping tolerance, scaled by `max(|Omega_n|, 1)`.
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            rel_tol: PICARD_REL_TOL,
            max_iterations: DEFAULT_MAX_PICARD,
        }
    }
}

fn default_dt_safety() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    pub geometry: GeometrySpec,
    /// Cells per axis.
    pub grid: [usize; 3],
    /// Initial relative velocity.
    pub init: InitSpec,
    /// Initial rigid angular velocity `I^-1 A0` (body frame). Exclusive with `a0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_bar0: Option<[f64; 3]>,
    /// Initial total angular momentum (body frame). Exclusive with `omega_bar0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<[f64; 3]>,
    #[serde(default)]
    pub l0: [f64; 3],
    /// Fixed step; when absent the largest stable step for the initial field is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_dt_safety")]
    pub dt_safety: f64,
    pub t_end: f64,
    pub sample_interval: f64,
    #[serde(default)]
    pub tolerances: LimitTolerances,
    #[serde(default)]
    pub picard: PicardConfig,
    /// Replace the fluid by relative rest (`u = 0`, `m_f = 0`).
    #[serde(default)]
    pub dry_run: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

/// Initial rotation, either as angular velocity or as angular momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialRotation {
    OmegaBar([f64; 3]),
    Momentum([f64; 3]),
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." {
                "<root>".to_string()
            } else {
                path
            };
            Error::config(key, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry
            .validate()
            .map_err(|e| Error::config("geometry", e.to_string()))?;
        for (i, &n) in self.grid.iter().enumerate() {
            if n < 4 {
                return Err(Error::config(
                    format!("grid[{i}]"),
                    format!("need at least 4 cells, got {n}"),
                ));
            }
        }
        if let Some(a) = self.init.amplitude() {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::config(
                    "init.amplitude",
                    format!("must be positive, got {a}"),
                ));
            }
        }
        match (self.omega_bar0, self.a0) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "omega_bar0",
                    "give exactly one of omega_bar0 and a0, not both",
                ))
            }
            (None, None) => {
                return Err(Error::config(
                    "omega_bar0",
                    "give exactly one of omega_bar0 and a0",
                ))
            }
            _ => {}
        }
        let vectors = [
            ("omega_bar0", self.omega_bar0),
            ("a0", self.a0),
            ("l0", Some(self.l0)),
        ];
        for (key, v) in vectors {
            if v.is_some_and(|v| v.iter().any(|x| !x.is_finite())) {
                return Err(Error::config(key, "components must be finite"));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::config("dt", format!("must be positive, got {dt}")));
            }
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(Error::config(
                "dt_safety",
                format!("must lie in (0, 1], got {}", self.dt_safety),
            ));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::config(
                "t_end",
                format!("must be positive, got {}", self.t_end),
            ));
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(Error::config(
                "sample_interval",
                format!("must be positive, got {}", self.sample_interval),
            ));
        }
        if let Some(dt) = self.dt {
            if self.sample_interval < dt {
                return Err(Error::config(
                    "sample_interval",
                    format!("must be at least dt = {dt}, got {}", self.sample_interval),
                ));
            }
        }
        self.tolerances.validate()?;
        if !(self.picard.rel_tol > 0.0 && self.picard.rel_tol.is_finite()) {
            return Err(Error::config(
                "picard.rel_tol",
                format!("must be positive, got {}", self.picard.rel_tol),
            ));
        }
        if self.picard.max_iterations == 0 {
            return Err(Error::config("picard.max_iterations", "must be at least 1"));
        }
        Ok(())
    }

    pub fn initial_rotation(&self) -> InitialRotation {
        match (self.omega_bar0, self.a0) {
            (Some(w), _) => InitialRotation::OmegaBar(w),
            (None, Some(a)) => InitialRotation::Momentum(a),
            (None, None) => unreachable!("validated config"),
        }
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
