//! The model JSON format: a mixture of ellipsoid components plus
//! provenance. Writing is deterministic (stable field order, round-trip
//! float formatting), so two writes of the same model differ only in the
//! provenance timestamp.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use ellmix::{EllipsoidParams, MixtureParams};

use crate::error::{load_error, CliError};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct ModelFile {
    pub schema_version: String,
    pub dim: usize,
    pub components: Vec<ComponentRecord>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct ComponentRecord {
    pub mu: Vec<f64>,
    /// Row-major `dim x dim` shape matrix.
    pub sigma_mat: Vec<f64>,
    pub noise_sigma: f64,
    pub weight: f64,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct Provenance {
    pub seed: u64,
    pub command: String,
    pub timestamp: String,
}

/// RFC 3339 timestamp; honors SOURCE_DATE_EPOCH for reproducible output.
pub fn timestamp_now() -> String {
    if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(secs) = epoch.parse::<i64>() {
            if let Some(t) = chrono::DateTime::from_timestamp(secs, 0) {
                return t.to_rfc3339();
            }
        }
    }
    chrono::Utc::now().to_rfc3339()
}

impl ModelFile {
    pub fn from_params(mix: &MixtureParams, provenance: Provenance) -> Self {
        let dim = mix.components()[0].dim();
        let components = mix
            .components()
            .iter()
            .zip(mix.weights())
            .map(|(c, &w)| ComponentRecord {
                mu: c.mu().iter().copied().collect(),
                sigma_mat: c.sigma_mat().transpose().as_slice().to_vec(),
                noise_sigma: c.noise_sigma(),
                weight: w,
            })
            .collect();
        ModelFile {
            schema_version: SCHEMA_VERSION.to_string(),
            dim,
            components,
            provenance,
        }
    }

    /// Validates and converts to library parameters; shape matrices are
    /// checked for symmetry and positive-definiteness on the way.
    pub fn to_params(&self) -> Result<MixtureParams, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::data(format!(
                "unsupported schema_version {:?}; this build reads version {:?}",
                self.schema_version, SCHEMA_VERSION
            )));
        }
        if self.components.is_empty() {
            return Err(CliError::data("model has no components"));
        }
        let d = self.dim;
        let mut comps = Vec::with_capacity(self.components.len());
        let mut weights = Vec::with_capacity(self.components.len());
        for (i, rec) in self.components.iter().enumerate() {
            if rec.mu.len() != d {
                return Err(CliError::data(format!(
                    "component {i}: mu has {} entries, dim is {d}",
                    rec.mu.len()
                )));
            }
            if rec.sigma_mat.len() != d * d {
                return Err(CliError::data(format!(
                    "component {i}: sigma_mat has {} entries, expected {}",
                    rec.sigma_mat.len(),
                    d * d
                )));
            }
            let mu = DVector::from_row_slice(&rec.mu);
            let sigma = DMatrix::from_row_slice(d, d, &rec.sigma_mat);
            let params = EllipsoidParams::new(mu, sigma, rec.noise_sigma)
                .map_err(|e| CliError::data(format!("component {i}: {e}")))?;
            comps.push(params);
            weights.push(rec.weight);
        }
        MixtureParams::new(comps, weights).map_err(load_error)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}
