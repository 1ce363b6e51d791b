//! Run configuration, read from TOML.
//!
//! Every section is optional; missing keys take the desk-scale defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{child_seed, DEFAULT_SINUSOIDS};
use crate::dataset::{DatasetSpec, Preprocessing};
use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;
use crate::interference::{AccountingMode, PowerEstimator};
use crate::mlp::{NetworkSpec, TrainConfig};
use crate::numerology::{default_pairs, NumerologySet, NumerologySpec, SystemConfig};

const TRAIN_STREAM: u64 = 1 << 40;
const INIT_STREAM: u64 = (1 << 40) + 1;
const SPLIT_STREAM: u64 = (1 << 40) + 2;
const SWEEP_STREAM: u64 = (1 << 40) + 3;
const VALIDATE_STREAM: u64 = (1 << 40) + 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub system: SystemConfig,
    pub numerology: NumerologySection,
    pub channel: ChannelSection,
    pub dataset: DatasetSection,
    pub training: TrainingSection,
    pub sweep: SweepSection,
    pub validate: ValidateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumerologySection {
    pub members: Vec<NumerologySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub sinusoids: usize,
    pub mode: AccountingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub n_conditions: usize,
    pub delay_range_us: [f64; 2],
    pub velocity_range_kmh: [f64; 2],
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub snr_step_db: f64,
    pub n_realizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub hidden_layers: Vec<usize>,
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_frac: f64,
    /// Fraction of training conditions held back for picking the best epoch.
    pub val_frac: f64,
    pub preprocessing: Preprocessing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub n_realizations: usize,
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub link_symbols: usize,
    pub conservation_realizations: usize,
    pub equivalence_instances: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            system: SystemConfig::standard(),
            numerology: NumerologySection::default(),
            channel: ChannelSection::default(),
            dataset: DatasetSection::default(),
            training: TrainingSection::default(),
            sweep: SweepSection::default(),
            validate: ValidateSection::default(),
        }
    }
}

impl Default for NumerologySection {
    fn default() -> Self {
        Self {
            members: default_pairs().into_iter().map(|(n, cp)| NumerologySpec { n, cp }).collect(),
        }
    }
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            sinusoids: DEFAULT_SINUSOIDS,
            mode: AccountingMode::Paper,
        }
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self::from_spec(&DatasetSpec::desk())
    }
}

impl DatasetSection {
    fn from_spec(s: &DatasetSpec) -> Self {
        Self {
            n_conditions: s.n_conditions,
            delay_range_us: [s.delay_range[0] * 1e6, s.delay_range[1] * 1e6],
            velocity_range_kmh: s.velocity_range_kmh,
            snr_min_db: s.snr_min_db,
            snr_max_db: s.snr_max_db,
            snr_step_db: s.snr_step_db,
            n_realizations: s.n_realizations,
        }
    }
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let n = NetworkSpec::default();
        Self {
            hidden_layers: n.layer_sizes[1..n.layer_sizes.len() - 1].to_vec(),
            l2_lambda: n.l2_lambda,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            batch_size: t.batch_size,
            epochs: t.epochs,
            train_frac: 0.8,
            val_frac: 0.1,
            preprocessing: Preprocessing::Standardize,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            n_realizations: 500,
            grid: 25,
        }
    }
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            link_symbols: 2000,
            conservation_realizations: 2000,
            equivalence_instances: 50,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        SystemConfig::new(self.system.bandwidth_hz, self.system.carrier_hz)?;
        self.numerology_set()?;
        self.dataset_spec().validate()?;
        self.network_spec()?.validate()?;
        self.train_config().validate()?;
        if self.channel.sinusoids == 0 {
            return Err(Error::Config("channel.sinusoids must be positive".into()));
        }
        if !(self.training.train_frac > 0.0 && self.training.train_frac < 1.0) {
            return Err(Error::Config("training.train_frac must be in (0, 1)".into()));
        }
        if !(self.training.val_frac > 0.0 && self.training.val_frac < 1.0) {
            return Err(Error::Config("training.val_frac must be in (0, 1)".into()));
        }
        if self.sweep.n_realizations < 2 || self.sweep.grid < 2 {
            return Err(Error::Config("sweep needs >= 2 realizations and a grid of >= 2".into()));
        }
        Ok(())
    }

    /// Switches to the large-scale dataset counts.
    pub fn paper_scale(&mut self) {
        let p = DatasetSpec::paper_scale();
        self.dataset.n_conditions = p.n_conditions;
        self.dataset.n_realizations = p.n_realizations;
    }

    pub fn numerology_set(&self) -> Result<NumerologySet> {
        NumerologySet::from_specs(&self.numerology.members, &self.system)
    }

    pub fn estimator(&self) -> PowerEstimator {
        PowerEstimator::new(self.system).with_sinusoids(self.channel.sinusoids)
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        let d = &self.dataset;
        DatasetSpec {
            n_conditions: d.n_conditions,
            delay_range: [d.delay_range_us[0] * 1e-6, d.delay_range_us[1] * 1e-6],
            velocity_range_kmh: d.velocity_range_kmh,
            snr_min_db: d.snr_min_db,
            snr_max_db: d.snr_max_db,
            snr_step_db: d.snr_step_db,
            n_realizations: d.n_realizations,
            base_seed: self.seed,
            mode: self.channel.mode,
        }
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let mut sizes = vec![FEATURE_DIM];
        sizes.extend(&self.training.hidden_layers);
        sizes.push(self.numerology.members.len());
        NetworkSpec::new(sizes, self.training.l2_lambda)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: self.train_seed(),
        }
    }

    pub fn train_seed(&self) -> u64 {
        child_seed(self.seed, TRAIN_STREAM)
    }

    pub fn init_seed(&self) -> u64 {
        child_seed(self.seed, INIT_STREAM)
    }

    pub fn split_seed(&self) -> u64 {
        child_seed(self.seed, SPLIT_STREAM)
    }

    pub fn sweep_seed(&self) -> u64 {
        child_seed(self.seed, SWEEP_STREAM)
    }

    pub fn validate_seed(&self) -> u64 {
        child_seed(self.seed, VALIDATE_STREAM)
    }

    /// Hex SHA-256 of the full configuration.
    pub fn hash(&self) -> String {
        crate::dataset::config_hash(self)
    }
}
