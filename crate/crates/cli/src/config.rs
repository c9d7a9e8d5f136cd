//! Experiment configuration: one strict JSON document per run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Largest number of free fine dofs a configuration may request.
pub const FINE_DOF_BUDGET: usize = 70_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CoefficientSpec {
    Identity {},
    /// `(2 + sin(2 pi x / epsilon)) (2 + sin(2 pi y / epsilon))`
    Periodic { epsilon: f64 },
    /// Log-uniform values in `[1, contrast]` on square cells of side `epsilon`.
    Checkerboard { epsilon: f64, contrast: f64, seed: u64 },
    /// Horizontal bands of height `epsilon`, alternating between 1 and `contrast`.
    Channels {
        epsilon: f64,
        contrast: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl CoefficientSpec {
    pub fn contrast(&self) -> f64 {
        match self {
            CoefficientSpec::Identity {} => 1.0,
            CoefficientSpec::Periodic { .. } => 9.0,
            CoefficientSpec::Checkerboard { contrast, .. } | CoefficientSpec::Channels { contrast, .. } => *contrast,
        }
    }

    /// The same field with another contrast; only the random and banded
    /// fields have one to vary.
    pub fn with_contrast(&self, c: f64) -> CliResult<Self> {
        match self {
            CoefficientSpec::Checkerboard { epsilon, seed, .. } => Ok(CoefficientSpec::Checkerboard {
                epsilon: *epsilon,
                contrast: c,
                seed: *seed,
            }),
            CoefficientSpec::Channels { epsilon, seed, .. } => Ok(CoefficientSpec::Channels {
                epsilon: *epsilon,
                contrast: c,
                seed: *seed,
            }),
            _ => Err(CliError::Config(
                "field `contrasts` needs a checkerboard or channels coefficient".into(),
            )),
        }
    }
}

/// Elementwise constant right-hand side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RhsSpec {
    Constant { value: f64 },
    Zero {},
}

impl Default for RhsSpec {
    fn default() -> Self {
        RhsSpec::Constant { value: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    #[default]
    Chebyshev,
    Damped,
}

fn default_ell_max() -> usize {
    6
}

fn default_tol() -> f64 {
    1e-10
}

fn default_lanczos() -> usize {
    60
}

fn default_samples() -> usize {
    20
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Coarse subdivisions, `H = 1/n` for each entry.
    pub coarse_n: Vec<usize>,
    /// Refinement levels below every coarse mesh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<u32>,
    /// Fixed fine subdivision; the levels follow from each `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_n: Option<usize>,
    pub coefficient: CoefficientSpec,
    #[serde(default)]
    pub rhs: RhsSpec,
    #[serde(default)]
    pub scheme: SchemeName,
    /// Damping factor; defaults to `2 / (lambda_min + lambda_max)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default)]
    pub ell_min: usize,
    #[serde(default = "default_ell_max")]
    pub ell_max: usize,
    /// Relative residual of the fine reference solve.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_lanczos")]
    pub lanczos_steps: usize,
    /// Contrast grid of the spectrum study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrasts: Option<Vec<f64>>,
    /// Random kernel vectors used to measure the decomposition constant.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Seed of start vectors and samples.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// File stem of the outputs; defaults to the command name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            CliError::Config(format!("{origin}:{}:{}: {}", e.line(), e.column(), strip_position(&e)))
        })?;
        cfg.validate().map_err(|m| CliError::Config(format!("{origin}: {m}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: cannot read config: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Levels below coarse mesh `n`.
    pub fn levels_for(&self, n: usize) -> Result<u32, String> {
        match (self.levels, self.fine_n) {
            (Some(l), None) => Ok(l),
            (None, Some(f)) => {
                if f % n != 0 || !(f / n).is_power_of_two() {
                    return Err(format!("field `fine_n`: {f} is not {n} times a power of two"));
                }
                Ok((f / n).trailing_zeros())
            }
            _ => Err("exactly one of `levels` and `fine_n` must be given".into()),
        }
    }

    pub fn fine_subdivision(&self, n: usize) -> Result<usize, String> {
        Ok(n << self.levels_for(n)?)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.coarse_n.is_empty() {
            return Err("field `coarse_n`: at least one coarse mesh is required".into());
        }
        for &n in &self.coarse_n {
            if n < 2 {
                return Err(format!("field `coarse_n`: {n} has no interior vertex (need n >= 2)"));
            }
            let levels = self.levels_for(n)?;
            if levels == 0 || levels > 10 {
                return Err(format!("field `levels`: {levels} refinement levels for n = {n}, need 1..=10"));
            }
            let fine = n << levels;
            let dofs = (fine - 1) * (fine - 1);
            if dofs > FINE_DOF_BUDGET {
                return Err(format!(
                    "n = {n} with {levels} levels gives {dofs} fine dofs, above the budget of {FINE_DOF_BUDGET}"
                ));
            }
            let h = 1.0 / fine as f64;
            if let Some(eps) = self.epsilon() {
                if !(eps > h) {
                    return Err(format!(
                        "field `coefficient.epsilon`: {eps} is not resolved by the fine mesh width {h} (n = {n})"
                    ));
                }
            }
        }
        match &self.coefficient {
            CoefficientSpec::Identity {} => {}
            CoefficientSpec::Periodic { epsilon } => positive("coefficient.epsilon", *epsilon)?,
            CoefficientSpec::Checkerboard { epsilon, contrast, .. } | CoefficientSpec::Channels { epsilon, contrast, .. } => {
                positive("coefficient.epsilon", *epsilon)?;
                contrast_ok("coefficient.contrast", *contrast)?;
            }
        }
        if let RhsSpec::Constant { value } = self.rhs {
            if !value.is_finite() {
                return Err("field `rhs.value` must be finite".into());
            }
        }
        if let Some(omega) = self.omega {
            positive("omega", omega)?;
        }
        if self.ell_min > self.ell_max || self.ell_max > 30 {
            return Err(format!(
                "fields `ell_min`/`ell_max`: need ell_min <= ell_max <= 30, got {}..{}",
                self.ell_min, self.ell_max
            ));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(format!("field `tol`: {} outside (0, 1)", self.tol));
        }
        if self.lanczos_steps < 2 {
            return Err("field `lanczos_steps`: need at least 2".into());
        }
        if let Some(cs) = &self.contrasts {
            if cs.is_empty() {
                return Err("field `contrasts`: empty list".into());
            }
            for &c in cs {
                contrast_ok("contrasts", c)?;
            }
            self.coefficient.with_contrast(1.0).map_err(|e| e.to_string())?;
        }
        if let Some(out) = &self.output {
            if out.is_empty() || out.contains(['/', '\\']) {
                return Err(format!("field `output`: `{out}` is not a plain file stem"));
            }
        }
        Ok(())
    }

    fn epsilon(&self) -> Option<f64> {
        match &self.coefficient {
            CoefficientSpec::Identity {} => None,
            CoefficientSpec::Periodic { epsilon }
            | CoefficientSpec::Checkerboard { epsilon, .. }
            | CoefficientSpec::Channels { epsilon, .. } => Some(*epsilon),
        }
    }

    /// First 16 hex digits of the SHA-256 of the normalized configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configuration serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn positive(field: &str, x: f64) -> Result<(), String> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(format!("field `{field}`: {x} must be positive"))
    }
}

fn contrast_ok(field: &str, c: f64) -> Result<(), String> {
    if c >= 1.0 && c.is_finite() {
        Ok(())
    } else {
        Err(format!("field `{field}`: contrast {c} must be at least 1"))
    }
}

/// serde_json appends " at line L column C"; the position is reported
/// separately.
fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}
