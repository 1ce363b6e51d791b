//! Labeled datasets: random channel conditions, oracle labels over an SNR
//! grid, CSV persistence, grouped splits and feature standardization.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{child_rng, child_seed, kmh_to_mps, snr_db_to_noise, ChannelCondition};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureVector, FEATURE_DIM, PDP_DIM};
use crate::interference::{AccountingMode, PowerEstimator};
use crate::numerology::{NumerologySet, NumerologySpec, SystemConfig};
use crate::selection::{SetEstimate, Selector};

/// Stream of the condition sampler; estimation uses streams `0..n_conditions`.
const CONDITION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub n_conditions: usize,
    /// Seconds, inclusive.
    pub delay_range: [f64; 2],
    /// km/h, inclusive.
    pub velocity_range_kmh: [f64; 2],
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub snr_step_db: f64,
    pub n_realizations: usize,
    pub base_seed: u64,
    pub mode: AccountingMode,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self::desk()
    }
}

impl DatasetSpec {
    pub fn desk() -> Self {
        Self {
            n_conditions: 200,
            delay_range: [0.2e-6, 10e-6],
            velocity_range_kmh: [1.0, 500.0],
            snr_min_db: 0.0,
            snr_max_db: 49.0,
            snr_step_db: 1.0,
            n_realizations: 500,
            base_seed: 1,
            mode: AccountingMode::Paper,
        }
    }

    pub fn paper_scale() -> Self {
        Self {
            n_conditions: 2000,
            n_realizations: 5000,
            ..Self::desk()
        }
    }

    pub fn snr_grid(&self) -> Vec<f64> {
        let count = ((self.snr_max_db - self.snr_min_db) / self.snr_step_db + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.snr_min_db + i as f64 * self.snr_step_db).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let [d0, d1] = self.delay_range;
        let [v0, v1] = self.velocity_range_kmh;
        if self.n_conditions == 0 {
            return Err(Error::Config("n_conditions must be positive".into()));
        }
        if self.n_realizations < 2 {
            return Err(Error::Config("n_realizations must be at least 2".into()));
        }
        if !(0.0 <= d0 && d0 <= d1 && d1.is_finite()) {
            return Err(Error::Config(format!("bad delay range [{d0}, {d1}]")));
        }
        if !(0.0 <= v0 && v0 <= v1 && v1.is_finite()) {
            return Err(Error::Config(format!("bad velocity range [{v0}, {v1}]")));
        }
        if !(self.snr_step_db > 0.0 && self.snr_min_db <= self.snr_max_db) {
            return Err(Error::Config("bad SNR grid".into()));
        }
        Ok(())
    }
}

/// One channel condition of a dataset (noise excluded).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionDraw {
    pub cond_id: usize,
    pub rms_delay: f64,
    /// m/s
    pub velocity: f64,
}

/// Draws the dataset conditions i.i.d. uniform over the configured ranges.
pub fn draw_conditions(spec: &DatasetSpec) -> Vec<ConditionDraw> {
    let mut rng = child_rng(spec.base_seed, CONDITION_STREAM);
    (0..spec.n_conditions)
        .map(|cond_id| {
            let d = rng.gen_range(spec.delay_range[0]..=spec.delay_range[1]);
            let v = rng.gen_range(spec.velocity_range_kmh[0]..=spec.velocity_range_kmh[1]);
            ConditionDraw {
                cond_id,
                rms_delay: d,
                velocity: kmh_to_mps(v),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureVector,
    /// 1-based numerology index.
    pub label: usize,
    pub cond_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// SNR loss (dB) of every member for each sample, when known.
    pub losses: Option<Vec<Vec<f64>>>,
}

/// Provenance written next to a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub config_hash: String,
    pub spec: DatasetSpec,
    pub system: SystemConfig,
    pub numerologies: Vec<NumerologySpec>,
    pub sinusoids: usize,
    /// Estimation seed of condition `i` is child `i` of `base_seed`.
    pub seed_scheme: String,
    pub rows: usize,
}

impl DatasetMeta {
    pub fn new(spec: &DatasetSpec, est: &PowerEstimator, set: &NumerologySet, rows: usize) -> Self {
        let mut meta = Self {
            generator: concat!("numerolab ", env!("CARGO_PKG_VERSION")).to_string(),
            config_hash: String::new(),
            spec: spec.clone(),
            system: est.system,
            numerologies: set.specs(),
            sinusoids: est.sinusoids,
            seed_scheme: "chacha8 streams: conditions=u64::MAX, realizations=child(child(base, cond), r)".into(),
            rows,
        };
        meta.config_hash = config_hash(&(&meta.spec, &meta.system, &meta.numerologies, meta.sinusoids));
        meta
    }
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable config");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

/// Estimates every condition and labels it at each SNR of the grid.
pub fn generate_dataset(spec: &DatasetSpec, set: &NumerologySet, estimator: &PowerEstimator) -> Result<Dataset> {
    spec.validate()?;
    let selector = Selector::new(*estimator).with_mode(spec.mode);
    let grid = spec.snr_grid();
    let draws = draw_conditions(spec);
    let per_cond: Vec<Result<Vec<(Sample, Vec<f64>)>>> = draws
        .par_iter()
        .map(|d| {
            let cond = ChannelCondition::new(d.rms_delay, d.velocity, 1.0, &estimator.system)?;
            let est = selector.estimate(&cond, set, spec.n_realizations, child_seed(spec.base_seed, d.cond_id as u64))?;
            label_condition(d.cond_id, &cond, &est, &grid, &estimator.system)
        })
        .collect();
    let mut samples = Vec::with_capacity(draws.len() * grid.len());
    let mut losses = Vec::with_capacity(draws.len() * grid.len());
    for rows in per_cond {
        for (s, l) in rows? {
            samples.push(s);
            losses.push(l);
        }
    }
    Ok(Dataset {
        samples,
        losses: Some(losses),
    })
}

fn label_condition(
    cond_id: usize,
    cond: &ChannelCondition,
    est: &SetEstimate,
    grid: &[f64],
    system: &SystemConfig,
) -> Result<Vec<(Sample, Vec<f64>)>> {
    let pdp = cond.pdp(system)?;
    grid.iter()
        .map(|&snr| {
            let noise = snr_db_to_noise(snr);
            let c = cond.with_noise(noise);
            let r = est.oracle(noise)?;
            let sample = Sample {
                features: extract_features(&c, &pdp)?,
                label: r.chosen_index,
                cond_id,
            };
            Ok((sample, r.per_numerology_loss.iter().map(|l| l.loss_db).collect()))
        })
        .collect()
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::DatasetFormat(format!("{}: {other:?}", path.display())),
    }
}

pub fn dataset_header() -> Vec<String> {
    let mut h = vec!["sigma0_sq".to_string(), "velocity_mps".to_string()];
    h.extend((0..PDP_DIM).map(|i| format!("p{i:03}")));
    h.push("label".into());
    h.push("cond_id".into());
    h
}

/// Sidecar paths for a dataset CSV: metadata and per-sample losses.
pub fn sidecar_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("meta.json"), path.with_extension("losses.csv"))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn condition_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.samples.iter().map(|s| s.cond_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn features(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        indices.iter().map(|&i| self.samples[i].features.to_vec()).collect()
    }

    pub fn labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.samples[i].label).collect()
    }

    /// Writes the dataset CSV, the loss sidecar (if losses are known) and
    /// the metadata sidecar.
    pub fn write(&self, path: &Path, meta: &DatasetMeta) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(dataset_header()).map_err(|e| csv_err(path, e))?;
        let mut row = Vec::with_capacity(FEATURE_DIM + 2);
        for s in &self.samples {
            row.clear();
            row.extend(s.features.to_vec().into_iter().map(fmt_f64));
            row.push(s.label.to_string());
            row.push(s.cond_id.to_string());
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;

        let (meta_path, loss_path) = sidecar_paths(path);
        if let Some(losses) = &self.losses {
            let m = losses.first().map_or(0, Vec::len);
            let mut w = csv_writer(&loss_path)?;
            let mut header = vec!["cond_id".to_string(), "sigma0_sq".to_string()];
            header.extend((1..=m).map(|u| format!("loss_u{u}_db")));
            w.write_record(&header).map_err(|e| csv_err(&loss_path, e))?;
            for (s, l) in self.samples.iter().zip(losses) {
                let mut r = vec![s.cond_id.to_string(), fmt_f64(s.features.noise_power)];
                r.extend(l.iter().copied().map(fmt_f64));
                w.write_record(&r).map_err(|e| csv_err(&loss_path, e))?;
            }
            w.flush().map_err(|e| Error::io(&loss_path, e))?;
        }
        let mut f = fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let json = serde_json::to_string_pretty(meta).expect("serializable metadata");
        writeln!(f, "{json}").map_err(|e| Error::io(&meta_path, e))?;
        Ok(())
    }

    /// Reads a dataset CSV and, if present, its loss sidecar.
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .from_path(path)
            .map_err(|e| csv_err(path, e))?;
        let header: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
        if header != dataset_header() {
            return Err(Error::DatasetFormat(format!("{}: unexpected header", path.display())));
        }
        let mut samples = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let bad = |what: &str| Error::DatasetFormat(format!("{} row {}: {what}", path.display(), line + 2));
            let values: Vec<f64> = rec
                .iter()
                .take(FEATURE_DIM)
                .map(|v| v.parse::<f64>().map_err(|_| bad("non-numeric feature")))
                .collect::<Result<_>>()?;
            let label: usize = rec.get(FEATURE_DIM).and_then(|v| v.parse().ok()).ok_or_else(|| bad("label"))?;
            let cond_id: usize = rec.get(FEATURE_DIM + 1).and_then(|v| v.parse().ok()).ok_or_else(|| bad("cond_id"))?;
            if label == 0 {
                return Err(bad("label must be 1-based"));
            }
            samples.push(Sample {
                features: FeatureVector::from_slice(&values)?,
                label,
                cond_id,
            });
        }
        let (_, loss_path) = sidecar_paths(path);
        let losses = if loss_path.exists() {
            Some(read_losses(&loss_path, &samples)?)
        } else {
            None
        };
        Ok(Self { samples, losses })
    }
}

fn read_losses(path: &Path, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::with_capacity(samples.len());
    for (rec, s) in r.records().zip(samples) {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let id: usize = rec.get(0).and_then(|v| v.parse().ok()).unwrap_or(usize::MAX);
        if id != s.cond_id {
            return Err(Error::DatasetFormat(format!("{}: rows do not match the dataset", path.display())));
        }
        out.push(
            rec.iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|_| Error::DatasetFormat(format!("{}: bad loss", path.display()))))
                .collect::<Result<_>>()?,
        );
    }
    if out.len() != samples.len() {
        return Err(Error::DatasetFormat(format!("{}: row count mismatch", path.display())));
    }
    Ok(out)
}

/// Sample indices of a condition-grouped split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Assigns whole conditions to train or test; `round(train_frac * conditions)`
/// go to train (at least one on each side when there are two or more).
pub fn grouped_split(ds: &Dataset, train_frac: f64, seed: u64) -> Result<Split> {
    grouped_subsplit(ds, &(0..ds.len()).collect::<Vec<_>>(), train_frac, seed)
}

/// [`grouped_split`] restricted to the samples in `indices`.
pub fn grouped_subsplit(ds: &Dataset, indices: &[usize], train_frac: f64, seed: u64) -> Result<Split> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!("train fraction must be in (0, 1), got {train_frac}")));
    }
    let mut ids: Vec<usize> = indices.iter().map(|&i| ds.samples[i].cond_id).collect();
    ids.sort_unstable();
    ids.dedup();
    let n = ids.len();
    let mut n_train = (train_frac * n as f64).round() as usize;
    if n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    }
    ids.shuffle(&mut child_rng(seed, 0));
    let mut in_train = std::collections::HashSet::with_capacity(n_train);
    in_train.extend(ids[..n_train].iter().copied());
    let (train, test) = indices.iter().partition(|&&i| in_train.contains(&ds.samples[i].cond_id));
    Ok(Split { train, test })
}

/// How raw features are mapped before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preprocessing {
    /// log10 of the noise power, then per-dimension standardization.
    #[default]
    Standardize,
    /// Features as stored.
    Raw,
}

/// Per-dimension affine map `(f(x) - offset) / scale`, where `f` takes the
/// log10 of the noise-power entry when `log_noise` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub log_noise: bool,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

const STD_HEADER: &str = "numerolab-std v1";

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            log_noise: false,
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Fits on `rows`; constant dimensions keep scale 1 and map to 0.
    pub fn fit(rows: &[Vec<f64>], log_noise: bool) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or_else(|| Error::Dimension("no rows to fit".into()))?;
        let pre = |r: &Vec<f64>| Self::pre(log_noise, r);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            if r.len() != dim {
                return Err(Error::Dimension("ragged feature rows".into()));
            }
            mean.iter_mut().zip(pre(r)).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            var.iter_mut().zip(pre(r).iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        let scale = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            log_noise,
            offset: mean,
            scale,
        })
    }

    fn pre(log_noise: bool, row: &[f64]) -> Vec<f64> {
        let mut v = row.to_vec();
        if log_noise {
            v[0] = v[0].log10();
        }
        v
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        Self::pre(self.log_noise, row)
            .iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| (v - o) / s)
            .collect()
    }

    pub fn inverse(&self, row: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = row
            .iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(z, (o, s))| z * s + o)
            .collect();
        if self.log_noise {
            v[0] = 10f64.powf(v[0]);
        }
        v
    }

    pub fn transform_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{STD_HEADER}\nlog_noise {}\ndim {}\n", self.log_noise, self.dim());
        for (i, (o, sc)) in self.offset.iter().zip(&self.scale).enumerate() {
            s.push_str(&format!("{i} {o:?} {sc:?}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::DatasetFormat(format!("standardizer: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some(STD_HEADER) {
            return Err(bad("missing `numerolab-std v1` header"));
        }
        let mut kv = |key: &str| -> Result<String> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(key))
                .map(|v| v.trim().to_string())
                .ok_or_else(|| bad(&format!("expected `{key}`")))
        };
        let log_noise = kv("log_noise ")?.parse::<bool>().map_err(|_| bad("log_noise"))?;
        let dim: usize = kv("dim ")?.parse().map_err(|_| bad("dim"))?;
        let mut offset = Vec::with_capacity(dim);
        let mut scale = Vec::with_capacity(dim);
        for (i, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                [idx, o, s] if idx.parse::<usize>().ok() == Some(i) => {
                    let o: f64 = o.parse().map_err(|_| bad("offset"))?;
                    let s: f64 = s.parse().map_err(|_| bad("scale"))?;
                    if !(o.is_finite() && s.is_finite() && s > 0.0) {
                        return Err(bad("non-finite entry"));
                    }
                    offset.push(o);
                    scale.push(s);
                }
                _ => return Err(bad(&format!("bad line {}", i + 4))),
            }
        }
        if offset.len() != dim {
            return Err(bad("dimension mismatch"));
        }
        Ok(Self {
            log_noise,
            offset,
            scale,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Grouped split plus a standardizer fitted on the training rows only.
pub fn split_and_standardize(
    ds: &Dataset,
    train_frac: f64,
    seed: u64,
    pre: Preprocessing,
) -> Result<(Split, Standardizer)> {
    let split = grouped_split(ds, train_frac, seed)?;
    let std = match pre {
        Preprocessing::Standardize => Standardizer::fit(&ds.features(&split.train), true)?,
        Preprocessing::Raw => Standardizer::identity(FEATURE_DIM),
    };
    Ok((split, std))
}
