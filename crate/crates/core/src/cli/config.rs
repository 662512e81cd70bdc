use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gnn::CheckpointDtype;
use crate::metrics::{CorrelationMode, DatasetKind, F1Mode};
use crate::train::{LossMode, TrainConfig};

/// Grid for the window / learning-rate sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub windows: Vec<i64>,
    pub learning_rates: Vec<f64>,
    /// Training repeats per split and cell.
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            windows: vec![1, 2, 5, 10, 20],
            learning_rates: vec![0.0002, 0.002, 0.02],
            repeats: 10,
        }
    }
}

/// Everything a subcommand needs, after merging defaults, the config file
/// and command-line flags (in increasing priority).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub splits: usize,
    pub correlation_mode: CorrelationMode,
    /// `None` follows the benchmark convention for the dataset name.
    pub f1_mode: Option<F1Mode>,
    pub checkpoint_dtype: CheckpointDtype,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_dataset(DatasetKind::Tvsum)
    }
}

/// Values given on the command line; `None` leaves the lower layers alone.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub splits: Option<usize>,
    pub window: Option<i64>,
    pub learning_rate: Option<f64>,
    pub loss_mode: Option<LossMode>,
    pub epochs: Option<usize>,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    pub fn for_dataset(kind: DatasetKind) -> Self {
        RunConfig {
            dataset: None,
            out_dir: PathBuf::from("runs"),
            splits: 5,
            correlation_mode: CorrelationMode::GroundTruth,
            f1_mode: None,
            checkpoint_dtype: CheckpointDtype::F64,
            train: TrainConfig::for_dataset(kind),
            sweep: SweepConfig::default(),
        }
    }

    /// Reads a JSON config file as an untyped layer for [`RunConfig::resolve`].
    pub fn read_layer(path: &Path) -> Result<Value> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))
    }

    /// Defaults for `kind`, overlaid with `file` (any subset of fields), then
    /// with `flags`. The result is validated.
    pub fn resolve(kind: DatasetKind, file: Option<Value>, flags: &Overrides) -> Result<Self> {
        let mut value = serde_json::to_value(Self::for_dataset(kind))?;
        if let Some(layer) = file {
            if !layer.is_object() {
                return Err(Error::config("config", "top level must be an object"));
            }
            merge(&mut value, layer);
        }
        let mut cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "config".to_string() } else { path };
            Error::Config {
                field,
                message: e.into_inner().to_string(),
            }
        })?;
        if let Some(v) = &flags.dataset {
            cfg.dataset = Some(v.clone());
        }
        if let Some(v) = &flags.out_dir {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = flags.seed {
            cfg.train.seed = v;
        }
        if let Some(v) = flags.splits {
            cfg.splits = v;
        }
        if let Some(v) = flags.window {
            cfg.train.model.window = v;
        }
        if let Some(v) = flags.learning_rate {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = flags.loss_mode {
            cfg.train.loss_mode = v;
        }
        if let Some(v) = flags.epochs {
            cfg.train.epochs = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.splits == 0 {
            return Err(Error::config("splits", "must be >= 1"));
        }
        if self.sweep.windows.is_empty() || self.sweep.windows.iter().any(|&t| t < 0) {
            return Err(Error::config("sweep.windows", "need at least one window, all >= 0"));
        }
        if self.sweep.learning_rates.is_empty() || self.sweep.learning_rates.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::config("sweep.learning_rates", "need at least one positive rate"));
        }
        if self.sweep.repeats == 0 {
            return Err(Error::config("sweep.repeats", "must be >= 1"));
        }
        self.train.validate()
    }

    pub fn f1_mode_for(&self, dataset_name: &str) -> F1Mode {
        self.f1_mode.unwrap_or_else(|| DatasetKind::from_name(dataset_name).f1_mode())
    }

    /// Writes the resolved config as `<out_dir>/<command>_config.json`.
    pub fn persist(&self, command: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let path = self.out_dir.join(format!("{command}_config.json"));
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn precedence_flags_over_file_over_defaults() {
        let file = json!({"train": {"learning_rate": 0.01, "epochs": 7}, "splits": 3});
        let flags = Overrides {
            learning_rate: Some(0.5),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(DatasetKind::Summe, Some(file), &flags).unwrap();
        assert_eq!(cfg.train.learning_rate, 0.5);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.splits, 3);
        // untouched fields keep the dataset-specific defaults
        assert_eq!(cfg.train.weight_decay, 0.003);
        assert_eq!(cfg.train.model.window, 20);
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::for_dataset(DatasetKind::Summe);
        let back = RunConfig::resolve(DatasetKind::Tvsum, Some(serde_json::to_value(&cfg).unwrap()), &Overrides::default()).unwrap();
        assert_eq!(back, cfg);
    }

    fn field_of(r: Result<RunConfig>) -> String {
        match r {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        let k = DatasetKind::Tvsum;
        let none = Overrides::default();
        assert_eq!(field_of(RunConfig::resolve(k, Some(json!({"train": {"learning_rate": "fast"}})), &none)), "train.learning_rate");
        assert!(field_of(RunConfig::resolve(k, Some(json!({"train": {"model": {"widht": 3}}})), &none)).starts_with("train.model"));
        assert_eq!(field_of(RunConfig::resolve(k, Some(json!([1])), &none)), "config");
        let bad_lr = Overrides {
            learning_rate: Some(-1.0),
            ..none.clone()
        };
        assert_eq!(field_of(RunConfig::resolve(k, None, &bad_lr)), "learning_rate");
        let bad_t = Overrides {
            window: Some(-2),
            ..none.clone()
        };
        assert_eq!(field_of(RunConfig::resolve(k, None, &bad_t)), "window");
        assert_eq!(field_of(RunConfig::resolve(k, Some(json!({"splits": 0})), &none)), "splits");
        assert_eq!(field_of(RunConfig::resolve(k, Some(json!({"sweep": {"repeats": 0}})), &none)), "sweep.repeats");
    }
}
