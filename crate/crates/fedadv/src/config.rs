//! TOML experiment configuration: one document drives any pipeline.

use crate::activation::ActKind;
use crate::attack::{AttackConfig, AttackKind};
use crate::data::{load_cifar10, AugmentPlan, LabeledBatch, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::fed::FedConfig;
use crate::nn::optim::{Schedule, SgdConfig};
use crate::nn::resnet::{build_mini_resnet, MiniResNetConfig};
use crate::nn::Network;
use crate::partition::Strategy;
use crate::rng::stream_key;
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

const DATA_TRAIN_TAG: u64 = 0x4346_0001;
const DATA_TEST_TAG: u64 = 0x4346_0002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    TrainCentral,
    TrainFed,
    AttackEval,
    PartitionInspect,
    FitRegression,
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::TrainCentral => "train-central",
            Pipeline::TrainFed => "train-fed",
            Pipeline::AttackEval => "attack-eval",
            Pipeline::PartitionInspect => "partition-inspect",
            Pipeline::FitRegression => "fit-regression",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnSection {
    pub activation: ActKind,
    /// Residual block count.
    pub depth: usize,
    pub channels: usize,
    pub batch_norm: bool,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    /// Centralized training epochs (federated runs use [fed] R and E).
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for NnSection {
    fn default() -> Self {
        let sgd = SgdConfig::default();
        Self {
            activation: ActKind::Relu,
            depth: 1,
            channels: 8,
            batch_norm: false,
            lr: sgd.lr,
            momentum: sgd.momentum,
            weight_decay: sgd.weight_decay,
            schedule: sgd.schedule,
            epochs: 5,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// "synthetic" or "cifar10".
    pub kind: String,
    /// Directory holding the CIFAR-10 binary batches (cifar10 kind only).
    pub path: Option<String>,
    pub classes: usize,
    /// Synthetic train/test examples per class.
    pub per_class: usize,
    pub test_per_class: usize,
    pub alpha_sl: f64,
    pub crop_padding: usize,
    pub hflip_prob: f64,
    pub include_pgd: bool,
    pub include_gaussian: bool,
    pub regen_per_epoch: bool,
    /// Synthetic generator background noise and blob-center jitter.
    pub noise_sigma: f64,
    pub jitter: f64,
    /// Peak blob brightness. Relative to attack.epsilon this sets how much
    /// margin the class signal has, and with it how fragile the task is.
    pub amplitude: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            kind: "synthetic".into(),
            path: None,
            classes: 2,
            per_class: 40,
            test_per_class: 16,
            alpha_sl: 0.05,
            crop_padding: 1,
            hflip_prob: 0.5,
            include_pgd: true,
            include_gaussian: false,
            regen_per_epoch: true,
            noise_sigma: 0.06,
            jitter: 0.5,
            amplitude: 0.85,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSection {
    pub strategy: String,
    pub alpha_share: f64,
    pub beta_dirichlet: f64,
    pub shared_per_class: usize,
    /// When set, train-fed repeats the run once per sharing level and
    /// emits a sweep table.
    pub alpha_share_sweep: Option<Vec<f64>>,
}

impl Default for PartitionSection {
    fn default() -> Self {
        Self {
            strategy: "iid".into(),
            alpha_share: 0.0,
            beta_dirichlet: 0.1,
            shared_per_class: 10,
            alpha_share_sweep: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedSection {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "E")]
    pub e: usize,
    pub eval_every: usize,
}

impl Default for FedSection {
    fn default() -> Self {
        Self {
            k: 5,
            r: 10,
            e: 3,
            eval_every: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub attacks: Vec<String>,
    pub sigma: f64,
    pub mu: f64,
    pub subsample: Option<usize>,
    pub noisy_natural: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            attacks: vec!["fgsm".into(), "pgd".into()],
            sigma: 0.1,
            mu: 0.0,
            subsample: None,
            noisy_natural: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionSection {
    /// Convention for the x column of `points` ("percent" or "fraction").
    pub x_domain: Option<String>,
    /// (x, y) pairs for the fit-regression pipeline.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub seed: u64,
    /// Train federated clients on worker threads.
    pub parallel: bool,
    /// Evaluate an existing serialized model instead of training one
    /// (attack-eval only).
    pub model_path: Option<String>,
    pub nn: NnSection,
    pub data: DataSection,
    pub attack: AttackConfig,
    pub partition: PartitionSection,
    pub fed: FedSection,
    pub eval: EvalSection,
    pub regression: RegressionSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pipeline: Pipeline::TrainCentral,
            seed: 0,
            parallel: false,
            model_path: None,
            nn: NnSection::default(),
            data: DataSection::default(),
            attack: AttackConfig::default(),
            partition: PartitionSection::default(),
            fed: FedSection::default(),
            eval: EvalSection::default(),
            regression: RegressionSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| Error::config("config", e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        match self.data.kind.as_str() {
            "synthetic" => {}
            "cifar10" => {
                if self.data.path.is_none() {
                    return Err(Error::config("data.path", "cifar10 needs a directory"));
                }
                if self.data.classes != 10 {
                    return Err(Error::config("data.classes", "cifar10 has 10 classes"));
                }
            }
            other => {
                return Err(Error::config(
                    "data.kind",
                    format!("unknown dataset '{other}' (synthetic, cifar10)"),
                ));
            }
        }
        if self.data.classes < 2 {
            return Err(Error::config("data.classes", "need at least 2 classes"));
        }
        if !self.data.amplitude.is_finite() || self.data.amplitude <= 0.0 {
            return Err(Error::config("data.amplitude", "must be positive"));
        }
        self.strategy()?;
        self.attack.validate()?;
        self.eval_config()?;
        if let Some(sweep) = &self.partition.alpha_share_sweep {
            if sweep.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::config(
                    "partition.alpha_share_sweep",
                    "levels must lie in [0, 1]",
                ));
            }
        }
        Ok(())
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            lr: self.nn.lr,
            momentum: self.nn.momentum,
            weight_decay: self.nn.weight_decay,
            schedule: self.nn.schedule,
        }
    }

    fn image_side(&self) -> usize {
        if self.data.kind == "cifar10" {
            32
        } else {
            8
        }
    }

    pub fn augment_plan(&self) -> AugmentPlan {
        AugmentPlan {
            crop_size: self.image_side(),
            crop_padding: self.data.crop_padding,
            hflip_prob: self.data.hflip_prob,
            include_pgd: self.data.include_pgd,
            include_gaussian: self.data.include_gaussian,
            attack: self.attack,
            alpha_sl: self.data.alpha_sl,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.nn.epochs,
            batch_size: self.nn.batch_size,
            n_classes: self.data.classes,
            sgd: self.sgd(),
            augment: self.augment_plan(),
            regen_per_epoch: self.data.regen_per_epoch,
        }
    }

    pub fn fed_config(&self) -> FedConfig {
        FedConfig {
            n_clients: self.fed.k,
            rounds: self.fed.r,
            local_epochs: self.fed.e,
            batch_size: self.nn.batch_size,
            eval_every: self.fed.eval_every,
            parallel: self.parallel,
        }
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        let attacks = self
            .eval
            .attacks
            .iter()
            .map(|s| AttackKind::parse(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalConfig {
            attacks,
            test_noise_sigma: self.eval.sigma,
            test_noise_mu: self.eval.mu,
            subsample: self.eval.subsample,
            noisy_natural: self.eval.noisy_natural,
        })
    }

    pub fn strategy(&self) -> Result<Strategy> {
        Strategy::parse(&self.partition.strategy, self.partition.beta_dirichlet)
    }

    pub fn network(&self) -> Result<Network> {
        build_mini_resnet(&MiniResNetConfig {
            in_ch: if self.data.kind == "cifar10" { 3 } else { 1 },
            height: self.image_side(),
            width: self.image_side(),
            depth: self.nn.depth,
            channels: self.nn.channels,
            n_classes: self.data.classes,
            act: self.nn.activation,
            batch_norm: self.nn.batch_norm,
            init_seed: self.seed,
        })
    }

    /// Materializes the (train, test) splits this config describes.
    pub fn datasets(&self) -> Result<(LabeledBatch, LabeledBatch)> {
        match self.data.kind.as_str() {
            "cifar10" => {
                let dir = self.data.path.as_ref().expect("validated");
                load_cifar10(Path::new(dir))
            }
            _ => {
                let mut spec = SyntheticSpec::grid(self.data.classes, self.data.per_class);
                spec.noise_sigma = self.data.noise_sigma;
                spec.center_jitter = self.data.jitter;
                for blobs in &mut spec.class_blobs {
                    for blob in blobs {
                        blob.amplitude = self.data.amplitude;
                    }
                }
                let train = spec.generate(stream_key(self.seed, &[DATA_TRAIN_TAG]))?;
                spec.per_class = self.data.test_per_class;
                let test = spec.generate(stream_key(self.seed, &[DATA_TEST_TAG]))?;
                Ok((train, test))
            }
        }
    }
}
