//! Run configuration: a flat key-value TOML file plus CLI-flag overrides.
//!
//! Precedence, lowest to highest: built-in defaults, then the config file,
//! then command-line flags. Every training-relevant knob lives here so a
//! config file plus a dataset pins down a run completely.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pluvio_core::graph::AdjacencyScheme;
use pluvio_core::model::{model_preset, GcnConfig};

use crate::commands::CmdError;

/// Fully resolved configuration; serialized into checkpoints so a trained
/// model carries its own provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub stations_csv: Option<PathBuf>,
    pub records_csv: Option<PathBuf>,
    /// Every file a command produces lands under this directory.
    pub output_dir: PathBuf,
    pub gcl_widths: Vec<usize>,
    pub fc_width: usize,
    pub window_length: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub heavy_threshold_mm: f64,
    /// "inverse_distance" or "knn".
    pub adjacency: String,
    pub epsilon_km: f64,
    pub self_loop_weight: f64,
    pub knn_k: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    /// Stations missing more than this fraction of days are dropped.
    pub max_missing_frac: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            stations_csv: None,
            records_csv: None,
            output_dir: PathBuf::from("out"),
            gcl_widths: vec![10, 10, 10, 10],
            fc_width: 32,
            window_length: 7,
            learning_rate: 0.01,
            batch_size: 64,
            max_epochs: 500,
            patience: 10,
            seed: 42,
            heavy_threshold_mm: 8.0,
            adjacency: "inverse_distance".to_string(),
            epsilon_km: 1.0,
            self_loop_weight: 1.0,
            knn_k: 3,
            train_frac: 0.7,
            val_frac: 0.2,
            test_frac: 0.1,
            max_missing_frac: 0.3,
        }
    }
}

/// The config file's shape: every key optional, unknown keys rejected so a
/// typo cannot silently fall back to a default.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    stations_csv: Option<PathBuf>,
    records_csv: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    /// Width preset name (A-D); mutually exclusive with `gcl_widths`.
    model: Option<String>,
    gcl_widths: Option<Vec<usize>>,
    fc_width: Option<usize>,
    window_length: Option<usize>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    seed: Option<u64>,
    heavy_threshold_mm: Option<f64>,
    adjacency: Option<String>,
    epsilon_km: Option<f64>,
    self_loop_weight: Option<f64>,
    knn_k: Option<usize>,
    train_frac: Option<f64>,
    val_frac: Option<f64>,
    test_frac: Option<f64>,
    max_missing_frac: Option<f64>,
}

impl RunConfig {
    /// Defaults overlaid with a config file, if one was given.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CmdError> {
        let mut config = RunConfig::default();
        let Some(path) = path else {
            return Ok(config);
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CmdError::Usage(format!("config: cannot read {}: {e}", path.display()))
        })?;
        let file: FileConfig = toml::from_str(&text)
            .map_err(|e| CmdError::Usage(format!("config: {}: {e}", path.display())))?;

        if file.model.is_some() && file.gcl_widths.is_some() {
            return Err(CmdError::Usage(
                "config: set either `model` or `gcl_widths`, not both".to_string(),
            ));
        }
        if let Some(name) = &file.model {
            config.gcl_widths = model_preset(name).ok_or_else(|| {
                CmdError::Usage(format!("config: unknown model preset {name:?} (use A-D)"))
            })?;
        }

        // The path fields stay optional in the resolved config too.
        if let Some(v) = file.stations_csv {
            config.stations_csv = Some(v);
        }
        if let Some(v) = file.records_csv {
            config.records_csv = Some(v);
        }

        macro_rules! overlay {
            ($($field:ident),+ $(,)?) => {
                $(if let Some(v) = file.$field { config.$field = v; })+
            };
        }
        overlay!(
            output_dir,
            gcl_widths,
            fc_width,
            window_length,
            learning_rate,
            batch_size,
            max_epochs,
            patience,
            seed,
            heavy_threshold_mm,
            adjacency,
            epsilon_km,
            self_loop_weight,
            knn_k,
            train_frac,
            val_frac,
            test_frac,
            max_missing_frac,
        );
        Ok(config)
    }

    /// The stations path, which must come from the file or a flag.
    pub fn stations_csv(&self) -> Result<&Path, CmdError> {
        self.stations_csv
            .as_deref()
            .ok_or_else(|| CmdError::Usage("config: stations_csv is not set".to_string()))
    }

    pub fn records_csv(&self) -> Result<&Path, CmdError> {
        self.records_csv
            .as_deref()
            .ok_or_else(|| CmdError::Usage("config: records_csv is not set".to_string()))
    }

    pub fn gcn_config(&self) -> GcnConfig {
        GcnConfig {
            gcl_widths: self.gcl_widths.clone(),
            fc_width: self.fc_width,
            window_length: self.window_length,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            heavy_threshold_mm: self.heavy_threshold_mm,
        }
    }

    pub fn adjacency_scheme(&self) -> Result<AdjacencyScheme, CmdError> {
        match self.adjacency.as_str() {
            "inverse_distance" => Ok(AdjacencyScheme::InverseDistance {
                epsilon_km: self.epsilon_km,
                self_loop_weight: self.self_loop_weight,
            }),
            "knn" => Ok(AdjacencyScheme::Knn {
                k: self.knn_k,
                epsilon_km: self.epsilon_km,
                self_loop_weight: self.self_loop_weight,
            }),
            other => Err(CmdError::Usage(format!(
                "config: unknown adjacency scheme {other:?} (use inverse_distance or knn)"
            ))),
        }
    }

    pub fn split_fractions(&self) -> (f64, f64, f64) {
        (self.train_frac, self.val_frac, self.test_frac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_training_protocol() {
        let c = RunConfig::default();
        assert_eq!(c.learning_rate, 0.01);
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.heavy_threshold_mm, 8.0);
        assert_eq!(c.window_length, 7);
        assert_eq!(c.split_fractions(), (0.7, 0.2, 0.1));
        assert_eq!(c.gcl_widths, vec![10, 10, 10, 10]);
        assert_eq!(c.adjacency, "inverse_distance");
        assert_eq!(c.epsilon_km, 1.0);
        assert_eq!(c.self_loop_weight, 1.0);
        assert!(c.gcn_config().validate().is_ok());
    }

    #[test]
    fn file_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "learning_rate = 0.005\nmodel = \"C\"\nseed = 7\n").unwrap();
        let c = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(c.learning_rate, 0.005);
        assert_eq!(c.gcl_widths, vec![128, 64, 32]);
        assert_eq!(c.seed, 7);
        // Untouched keys keep their defaults.
        assert_eq!(c.batch_size, 64);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "learning_rat = 0.005\n").unwrap();
        let err = RunConfig::load(Some(&path)).unwrap_err();
        assert_eq!(err.exit_code(), 1, "{err}");
    }

    #[test]
    fn model_and_widths_conflict() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "model = \"A\"\ngcl_widths = [4, 4]\n").unwrap();
        assert!(RunConfig::load(Some(&path)).is_err());
    }

    #[test]
    fn missing_file_is_a_usage_error() {
        let err = RunConfig::load(Some(Path::new("/nonexistent/run.toml"))).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
