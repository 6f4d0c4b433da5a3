//! Self-describing model checkpoints.
//!
//! A checkpoint is one JSON document carrying everything needed to run the
//! model somewhere else: the resolved run configuration (minus machine
//! paths), the station order the rows are bound to, the fitted
//! standardization, and every weight tensor. Serialization is fully
//! deterministic — fixed field order, shortest-roundtrip floats — so two
//! identical training runs produce byte-identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use pluvio_core::data::Standardization;
use pluvio_core::matrix::Matrix;
use pluvio_core::model::GcnModel;

use crate::commands::CmdError;
use crate::config::RunConfig;

pub const CHECKPOINT_FORMAT: &str = "pluvio-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Row-major tensor with explicit shape, so a truncated or hand-edited
/// file fails loudly instead of silently shifting weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl TensorData {
    fn from_matrix(m: &Matrix) -> TensorData {
        TensorData { rows: m.rows(), cols: m.cols(), data: m.data().to_vec() }
    }

    fn to_matrix(&self, name: &str) -> Result<Matrix, CmdError> {
        if self.rows * self.cols != self.data.len() {
            return Err(CmdError::Data(format!(
                "checkpoint: tensor {name} declares {}x{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(Matrix::from_vec(self.rows, self.cols, self.data.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationData {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Always [`CHECKPOINT_FORMAT`]; guards against feeding some other JSON.
    pub format: String,
    pub version: u32,
    /// The run configuration, with input/output paths cleared: a checkpoint
    /// describes a model, not the machine it was trained on.
    pub config: RunConfig,
    /// Station ids in the exact row order the model was trained with.
    pub node_order: Vec<String>,
    pub feature_dim: usize,
    pub standardization: StandardizationData,
    pub gcl_weights: Vec<TensorData>,
    pub fc_weight: TensorData,
    pub fc_bias: Vec<f64>,
    pub out_weight: Vec<f64>,
    pub out_bias: f64,
}

impl Checkpoint {
    pub fn from_trained(
        config: &RunConfig,
        node_order: &[String],
        feature_dim: usize,
        stats: &Standardization,
        model: &GcnModel,
    ) -> Checkpoint {
        let mut config = config.clone();
        config.stations_csv = None;
        config.records_csv = None;
        config.output_dir = std::path::PathBuf::from("out");
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config,
            node_order: node_order.to_vec(),
            feature_dim,
            standardization: StandardizationData {
                means: stats.means.clone(),
                stds: stats.stds.clone(),
            },
            gcl_weights: model.gcl_weights.iter().map(TensorData::from_matrix).collect(),
            fc_weight: TensorData::from_matrix(&model.fc_weight),
            fc_bias: model.fc_bias.clone(),
            out_weight: model.out_weight.clone(),
            out_bias: model.out_bias,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CmdError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CmdError::Internal(format!("serializing checkpoint: {e}")))?;
        text.push('\n');
        std::fs::write(path, text)
            .map_err(|e| CmdError::Internal(format!("cannot write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CmdError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CmdError::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let checkpoint: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| CmdError::Data(format!("checkpoint {}: {e}", path.display())))?;
        if checkpoint.format != CHECKPOINT_FORMAT {
            return Err(CmdError::Data(format!(
                "checkpoint {}: format is {:?}, not a model checkpoint",
                path.display(),
                checkpoint.format
            )));
        }
        if checkpoint.version != CHECKPOINT_VERSION {
            return Err(CmdError::Data(format!(
                "checkpoint {}: version {} is not supported (expected {})",
                path.display(),
                checkpoint.version,
                CHECKPOINT_VERSION
            )));
        }
        Ok(checkpoint)
    }

    pub fn standardization(&self) -> Standardization {
        Standardization {
            means: self.standardization.means.clone(),
            stds: self.standardization.stds.clone(),
        }
    }

    /// Rebuilds the model and re-validates every shape, so corruption shows
    /// up here rather than as a panic mid-forward.
    pub fn to_model(&self) -> Result<GcnModel, CmdError> {
        let mut gcl_weights = Vec::with_capacity(self.gcl_weights.len());
        for (i, t) in self.gcl_weights.iter().enumerate() {
            gcl_weights.push(t.to_matrix(&format!("gcl_weights[{i}]"))?);
        }
        let model = GcnModel {
            config: self.config.gcn_config(),
            feature_dim: self.feature_dim,
            gcl_weights,
            fc_weight: self.fc_weight.to_matrix("fc_weight")?,
            fc_bias: self.fc_bias.clone(),
            out_weight: self.out_weight.clone(),
            out_bias: self.out_bias,
        };
        model
            .validate_shapes()
            .map_err(|e| CmdError::Data(format!("checkpoint: {e}")))?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pluvio_core::model::forward;

    fn sample_checkpoint() -> Checkpoint {
        let mut config = RunConfig::default();
        config.gcl_widths = vec![4, 3];
        config.fc_width = 5;
        config.window_length = 2;
        let model = GcnModel::init(config.gcn_config(), 3, 7).unwrap();
        let stats = Standardization {
            means: vec![0.5, 1.5, 0.0],
            stds: vec![1.0, 2.0, 1.0],
        };
        Checkpoint::from_trained(
            &config,
            &["ST-01".to_string(), "ST-02".to_string()],
            3,
            &stats,
            &model,
        )
    }

    #[test]
    fn roundtrips_weights_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");
        let checkpoint = sample_checkpoint();
        checkpoint.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, checkpoint);

        // The rebuilt model computes exactly what the original would.
        let model = back.to_model().unwrap();
        let a_hat = Matrix::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let x = Matrix::from_rows(&[&[1.0, 2.0, 0.5], &[0.0, 1.0, -0.5]]);
        let original = GcnModel {
            config: checkpoint.config.gcn_config(),
            feature_dim: 3,
            gcl_weights: checkpoint.gcl_weights.iter().map(|t| t.to_matrix("w").unwrap()).collect(),
            fc_weight: checkpoint.fc_weight.to_matrix("fc").unwrap(),
            fc_bias: checkpoint.fc_bias.clone(),
            out_weight: checkpoint.out_weight.clone(),
            out_bias: checkpoint.out_bias,
        };
        let a = forward(&model, &a_hat, &x).unwrap();
        let b = forward(&original, &a_hat, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn saves_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        let checkpoint = sample_checkpoint();
        checkpoint.save(&p1).unwrap();
        checkpoint.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_foreign_and_future_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");

        std::fs::write(&path, "{\"hello\": 1}\n").unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap_err().exit_code(), 2);

        let mut wrong_format = sample_checkpoint();
        wrong_format.format = "something-else".to_string();
        wrong_format.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap_err().exit_code(), 2);

        let mut future = sample_checkpoint();
        future.version = CHECKPOINT_VERSION + 1;
        future.save(&path).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn corrupt_tensors_fail_closed() {
        let mut checkpoint = sample_checkpoint();
        checkpoint.fc_bias.pop(); // shape no longer matches fc_width
        assert!(checkpoint.to_model().is_err());

        let mut checkpoint = sample_checkpoint();
        checkpoint.fc_weight.data.pop(); // declared shape vs data length
        assert!(checkpoint.to_model().is_err());
    }

    #[test]
    fn paths_never_leak_into_checkpoints() {
        let mut config = RunConfig::default();
        config.stations_csv = Some("/home/someone/stations.csv".into());
        config.records_csv = Some("/home/someone/records.csv".into());
        config.output_dir = "/tmp/some-run".into();
        let model = GcnModel::init(config.gcn_config(), 8, 1).unwrap();
        let stats = Standardization { means: vec![0.0; 8], stds: vec![1.0; 8] };
        let checkpoint = Checkpoint::from_trained(&config, &[], 8, &stats, &model);
        assert_eq!(checkpoint.config.stations_csv, None);
        assert_eq!(checkpoint.config.records_csv, None);
        assert_eq!(checkpoint.config.output_dir, std::path::PathBuf::from("out"));
    }
}
