use std::path::{Path, PathBuf};

use cfu_core::counterfactual::{AutoencoderConfig, CfMethod, ProtoCfConfig, WachterConfig};
use cfu_core::dataset::SynthConfig;
use cfu_core::nn::{LayerSpec, TrainConfig};
use cfu_core::rng::mix_seed;
use cfu_core::uncertainty::{LofConfig, McDropoutConfig, TrustScoreConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Where the three splits come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synth(SynthConfig),
    #[serde(rename_all = "snake_case")]
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ood_images: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ood_labels: Option<PathBuf>,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ood: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label_column: Option<usize>,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synth(SynthConfig::default())
    }
}

impl DatasetSpec {
    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            DatasetSpec::Synth(_) => Vec::new(),
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ood_images,
                ood_labels,
            } => {
                let mut v = vec![train_images, train_labels, test_images, test_labels];
                v.extend(ood_images.as_mut());
                v.extend(ood_labels.as_mut());
                v
            }
            DatasetSpec::Csv { train, test, ood, .. } => {
                let mut v = vec![train, test];
                v.extend(ood.as_mut());
                v
            }
        }
    }
}

/// Classifier architecture. `layers`, when given, is used verbatim;
/// otherwise a dense ReLU stack of `hidden` widths with `dropout` after
/// each hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerSpec>>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            dropout: 0.2,
            layers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfSettings {
    pub methods: Vec<CfMethod>,
    /// Upper bound on misclassified test rows explained.
    pub max_queries: usize,
    pub wachter: WachterConfig,
    pub proto: ProtoCfConfig,
    pub autoencoder: AutoencoderConfig,
    /// Store each counterfactual's features in the record dump.
    pub dump_features: bool,
}

impl Default for CfSettings {
    fn default() -> Self {
        Self {
            methods: vec![CfMethod::Nun, CfMethod::Wachter, CfMethod::Proto],
            max_queries: 50,
            wachter: WachterConfig::default(),
            proto: ProtoCfConfig::default(),
            autoencoder: AutoencoderConfig::default(),
            dump_features: false,
        }
    }
}

/// One JSON document describing a run. Component seeds are derived from
/// `seed` when the config is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub trust: TrustScoreConfig,
    #[serde(default)]
    pub mc: McDropoutConfig,
    #[serde(default)]
    pub lof: LofConfig,
    #[serde(default)]
    pub counterfactual: CfSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Classifier checkpoint to load instead of training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Parse a config document; syntax and schema errors carry the line and
    /// column.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::ConfigSyntax {
            path: origin.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Read, parse and resolve a config file. Relative paths inside it are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.dataset.paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = cfg.checkpoint.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Derive every component seed from the top-level seed.
    pub fn resolve(mut self) -> Self {
        let seed = self.seed;
        if let DatasetSpec::Synth(s) = &mut self.dataset {
            s.seed = seed;
        }
        self.train.seed = mix_seed(seed, 1);
        self.mc.seed = mix_seed(seed, 3);
        self.counterfactual.autoencoder.seed = mix_seed(seed, 4);
        self
    }

    pub fn init_seed(&self) -> u64 {
        mix_seed(self.seed, 2)
    }

    /// Check everything that can be checked before any output is written.
    pub fn validate(&self) -> Result<()> {
        self.train
            .validate()
            .map_err(CliError::Input)?;
        if self.mc.passes < 2 {
            return Err(CliError::Usage("mc.passes must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return Err(CliError::Usage("model.dropout must be in [0, 1)".into()));
        }
        self.counterfactual.wachter.validate().map_err(CliError::Input)?;
        self.counterfactual.proto.validate().map_err(CliError::Input)?;
        let mut missing = Vec::new();
        let mut spec = self.dataset.clone();
        for p in spec.paths_mut() {
            if !p.exists() {
                missing.push(p.display().to_string());
            }
        }
        if let Some(p) = &self.checkpoint {
            if !p.exists() {
                missing.push(p.display().to_string());
            }
        }
        if !missing.is_empty() {
            return Err(CliError::Usage(format!("missing input files: {}", missing.join(", "))));
        }
        Ok(())
    }
}
