//! Experiment manifests (TOML) and their fully resolved form.

use std::path::{Path, PathBuf};

use gae_core::data::LongTailSpec;
use gae_core::model::ModelSpec;
use gae_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const DEFAULT_SYNTH_N_MAX: usize = 1000;
pub const DEFAULT_SYNTH_TEST_PER_CLASS: usize = 500;
/// Held-out fraction of the smallest class when a real dataset has no test file.
pub const DEFAULT_SPLIT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Idx,
    Csv,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub source: SourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_csv: Option<PathBuf>,
    /// Required for synthetic data; inferred from labels otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    /// Head-class count. Defaults to 1000 for synthetic data and to the
    /// smallest source class for real data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    pub rho: f64,
    #[serde(default)]
    pub seed: u64,
    /// Balanced test examples per class (synthetic draw or held-out split).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_per_class: Option<usize>,
    /// Custom mixture; the circle layout is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stds: Option<Vec<Vec<f64>>>,
}

impl DatasetManifest {
    pub fn synthetic(num_classes: usize, rho: f64) -> Self {
        Self {
            source: SourceKind::Synthetic,
            images: None,
            labels: None,
            test_images: None,
            test_labels: None,
            csv: None,
            test_csv: None,
            num_classes: Some(num_classes),
            n_max: None,
            rho,
            seed: 0,
            test_per_class: None,
            means: None,
            stds: None,
        }
    }

    /// Every path field with its name, in a fixed order.
    fn paths_mut(&mut self) -> [(&'static str, &mut Option<PathBuf>); 6] {
        [
            ("dataset.images", &mut self.images),
            ("dataset.labels", &mut self.labels),
            ("dataset.test_images", &mut self.test_images),
            ("dataset.test_labels", &mut self.test_labels),
            ("dataset.csv", &mut self.csv),
            ("dataset.test_csv", &mut self.test_csv),
        ]
    }

    pub fn longtail_spec(&self) -> Result<LongTailSpec> {
        let (Some(c), Some(n_max)) = (self.num_classes, self.n_max) else {
            return Err(HarnessError::Config(
                "dataset.num_classes and dataset.n_max must be resolved first".into(),
            ));
        };
        Ok(LongTailSpec::new(c, n_max, self.rho)?)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Hidden widths; `[]` is a linear softmax classifier. Defaults to
    /// `[256, 256]` for real data and `[]` for synthetic data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetManifest,
    #[serde(default)]
    pub model: ModelSection,
    /// `train.seed` is replaced by each entry of `seeds`.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Parse a manifest file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(HarnessError::MissingPath {
                field: "config".into(),
                path: path.to_path_buf(),
            });
        }
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for (_, p) in self.dataset.paths_mut() {
            if let Some(p) = p {
                join(p);
            }
        }
        join(&mut self.out_dir);
    }

    /// Checks that do not need the data on disk.
    pub fn validate(&mut self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must not be empty".into()));
        }
        let d = &mut self.dataset;
        let required: &[&str] = match d.source {
            SourceKind::Idx => &["dataset.images", "dataset.labels"],
            SourceKind::Csv => &["dataset.csv"],
            SourceKind::Synthetic => &[],
        };
        let is_synth = d.source == SourceKind::Synthetic;
        for (field, p) in d.paths_mut() {
            match p {
                Some(path) if !path.exists() => {
                    return Err(HarnessError::MissingPath {
                        field: field.into(),
                        path: path.clone(),
                    })
                }
                None if required.contains(&field) => {
                    return Err(HarnessError::Config(format!("{field} is required")))
                }
                _ => {}
            }
        }
        if d.test_images.is_some() != d.test_labels.is_some() {
            return Err(HarnessError::Config(
                "dataset.test_images and dataset.test_labels go together".into(),
            ));
        }
        if is_synth {
            let Some(c) = d.num_classes else {
                return Err(HarnessError::Config(
                    "dataset.num_classes is required for synthetic data".into(),
                ));
            };
            if d.means.is_some() != d.stds.is_some() {
                return Err(HarnessError::Config(
                    "dataset.means and dataset.stds go together".into(),
                ));
            }
            if let Some(m) = &d.means {
                if m.len() != c {
                    return Err(HarnessError::Config(format!(
                        "dataset.means has {} rows for {c} classes",
                        m.len()
                    )));
                }
            }
        } else if d.means.is_some() || d.stds.is_some() {
            return Err(HarnessError::Config(
                "dataset.means/stds only apply to synthetic data".into(),
            ));
        }
        if !(d.rho > 0.0 && d.rho <= 1.0) {
            return Err(HarnessError::Config(format!(
                "dataset.rho must lie in (0, 1], got {}",
                d.rho
            )));
        }
        if d.test_per_class == Some(0) {
            return Err(HarnessError::Config("dataset.test_per_class must be positive".into()));
        }
        self.train
            .validate()
            .map_err(|e| HarnessError::Config(format!("train: {e}")))?;
        Ok(())
    }

    pub fn model_spec(&self, input_dim: usize, num_classes: usize) -> ModelSpec {
        let hidden = self.model.hidden.clone().unwrap_or_else(|| {
            if self.dataset.source == SourceKind::Synthetic {
                Vec::new()
            } else {
                vec![256, 256]
            }
        });
        ModelSpec::mlp(input_dim, &hidden, num_classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [dataset]
        source = "synthetic"
        num_classes = 10
        rho = 0.01
    "#;

    #[test]
    fn defaults_fill_in() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.model_spec(2, 10).hidden, Vec::<usize>::new());
    }

    #[test]
    fn unknown_field_is_named() {
        let text = format!("{MINIMAL}\n[train]\nepochz = 3\n");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("epochz"), "{err}");
    }

    #[test]
    fn empty_seed_list() {
        let text = format!("seeds = []\n{MINIMAL}");
        let mut cfg = ExperimentConfig::from_toml(&text).unwrap();
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_file_names_path() {
        let text = r#"
            [dataset]
            source = "idx"
            images = "/nonexistent/train-images"
            labels = "/nonexistent/train-labels"
            rho = 0.1
        "#;
        let mut cfg = ExperimentConfig::from_toml(text).unwrap();
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/train-images"));
    }

    #[test]
    fn warmup_longer_than_run() {
        let text = format!("{MINIMAL}\n[train]\nepochs = 2\nwarmup_epochs = 3\n");
        let mut cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.dataset.n_max = Some(1000);
        cfg.model.hidden = Some(vec![64]);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
