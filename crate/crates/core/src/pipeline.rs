//! End-to-end commands: dataset generation, training, selection sweeps and
//! the validation suite. The CLI is a thin layer over these functions.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{child_seed, exp_pdp, generate_realization, kmh_to_mps, mps_to_kmh, snr_db_to_noise, ChannelCondition, PowerDelayProfile};
use crate::config::RunConfig;
use crate::dataset::{generate_dataset, grouped_split, grouped_subsplit, Dataset, DatasetMeta, Preprocessing, Split, Standardizer};
use crate::error::{Error, Result};
use crate::features::extract_features;
use crate::interference::{
    compute_matrices, powers_from_matrices, symbol_power_breakdown, AccountingMode, Fading,
};
use crate::linksim::{check_matrices_inner, LinkSimulator};
use crate::mlp::{gradient_check, history_csv, train, LabeledSet, Network, NetworkSpec, TrainOutcome};
use crate::numerology::{derive_numerology, CpRatio, Numerology};
use crate::selection::{SelectionResult, Selector, SetEstimate};

pub const DATASET_FILE: &str = "dataset.csv";
pub const MODEL_FILE: &str = "model.mlp";
pub const HISTORY_FILE: &str = "history.csv";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Provenance sidecar written next to every tabular output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMeta {
    pub command: String,
    pub generator: String,
    pub config_hash: String,
    pub seed: u64,
    pub details: serde_json::Value,
}

fn write_meta(path: &Path, cfg: &RunConfig, command: &str, details: serde_json::Value) -> Result<()> {
    let meta = OutputMeta {
        command: command.into(),
        generator: concat!("numerolab ", env!("CARGO_PKG_VERSION")).into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        details,
    };
    let mut json = serde_json::to_string_pretty(&meta).expect("serializable");
    json.push('\n');
    write_file(&path.with_extension("meta.json"), json)
}

fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------- dataset

pub fn build_dataset(cfg: &RunConfig) -> Result<Dataset> {
    generate_dataset(&cfg.dataset_spec(), &cfg.numerology_set()?, &cfg.estimator())
}

/// Generates the dataset and writes it to `out/dataset.csv` with sidecars.
pub fn cmd_gen_dataset(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let ds = build_dataset(cfg)?;
    ensure_dir(out)?;
    let path = out.join(DATASET_FILE);
    let meta = DatasetMeta::new(&cfg.dataset_spec(), &cfg.estimator(), &cfg.numerology_set()?, ds.len());
    ds.write(&path, &meta)?;
    Ok(path)
}

// ---------------------------------------------------------------- training

/// A trained network with its input transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub net: Network,
    pub standardizer: Standardizer,
}

impl Classifier {
    pub fn standardizer_path(model: &Path) -> PathBuf {
        model.with_extension("std")
    }

    pub fn load(model: &Path) -> Result<Self> {
        let net = Network::load(model)?;
        let standardizer = Standardizer::load(&Self::standardizer_path(model))?;
        if standardizer.dim() != net.spec.input_dim() {
            return Err(Error::ModelFormat("standardizer does not match the network input".into()));
        }
        Ok(Self { net, standardizer })
    }

    pub fn save(&self, model: &Path) -> Result<()> {
        self.net.save(model)?;
        self.standardizer.save(&Self::standardizer_path(model))
    }

    /// 1-based predicted numerology for each raw feature row.
    pub fn predict_raw(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        self.net.predict_rows(&self.standardizer.transform_all(rows))
    }

    pub fn predict_condition(&self, cond: &ChannelCondition, pdp: &PowerDelayProfile) -> Result<usize> {
        Ok(self.predict_raw(&[extract_features(cond, pdp)?.to_vec()])?[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config_hash: String,
    pub seed: u64,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub test_samples: usize,
    pub best_epoch: usize,
    /// Fraction of held-out samples labeled with the oracle's choice.
    pub held_out_accuracy: f64,
    /// Mean of (loss of predicted member - oracle loss) over held-out samples.
    pub mean_loss_gap_db: Option<f64>,
    pub max_loss_gap_db: Option<f64>,
}

pub struct TrainResult {
    pub classifier: Classifier,
    pub outcome: TrainOutcome,
    /// Train/test split; the validation conditions are a subset of `train`.
    pub split: Split,
    pub validation: Vec<usize>,
    pub report: TrainReport,
}

/// Splits, standardizes and trains on `ds`. `resume` starts from an existing
/// network, which must match the configured architecture.
pub fn train_on(cfg: &RunConfig, ds: &Dataset, resume: Option<Network>) -> Result<TrainResult> {
    let spec: NetworkSpec = cfg.network_spec()?;
    let m = spec.classes();
    if let Some(bad) = ds.samples.iter().find(|s| s.label > m) {
        return Err(Error::DatasetFormat(format!("label {} outside the {m} configured numerologies", bad.label)));
    }
    let split = grouped_split(ds, cfg.training.train_frac, cfg.split_seed())?;
    let fit = grouped_subsplit(ds, &split.train, 1.0 - cfg.training.val_frac, child_seed(cfg.split_seed(), 1))?;
    let standardizer = match cfg.training.preprocessing {
        Preprocessing::Standardize => Standardizer::fit(&ds.features(&fit.train), true)?,
        Preprocessing::Raw => Standardizer::identity(spec.input_dim()),
    };
    let to_set = |idx: &[usize]| LabeledSet::new(&standardizer.transform_all(&ds.features(idx)), ds.labels(idx), spec.input_dim());
    let train_set = to_set(&fit.train)?;
    let val_set = to_set(&fit.test)?;
    let net = match resume {
        Some(net) if net.spec.layer_sizes != spec.layer_sizes => {
            return Err(Error::ModelFormat(format!(
                "resume model has layers {:?}, config expects {:?}",
                net.spec.layer_sizes, spec.layer_sizes
            )))
        }
        Some(mut net) => {
            net.spec.l2_lambda = spec.l2_lambda;
            net
        }
        None => Network::init(&spec, cfg.init_seed())?,
    };
    let mut tc = cfg.train_config();
    tc.batch_size = tc.batch_size.min(train_set.len());
    let outcome = train(net, &train_set, &val_set, &tc)?;
    let classifier = Classifier {
        net: outcome.best.clone(),
        standardizer,
    };
    let predicted = classifier.net.predict_rows(&standardizer_rows(&classifier, ds, &split.test))?;
    let correct = predicted.iter().zip(&split.test).filter(|(p, &i)| **p == ds.samples[i].label).count();
    let gaps: Option<Vec<f64>> = ds.losses.as_ref().map(|losses| {
        predicted
            .iter()
            .zip(&split.test)
            .map(|(&p, &i)| losses[i][p - 1] - losses[i][ds.samples[i].label - 1])
            .collect()
    });
    let n_test = split.test.len().max(1) as f64;
    let report = TrainReport {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        train_samples: fit.train.len(),
        validation_samples: fit.test.len(),
        test_samples: split.test.len(),
        best_epoch: outcome.best_epoch,
        held_out_accuracy: correct as f64 / n_test,
        mean_loss_gap_db: gaps.as_ref().map(|g| g.iter().sum::<f64>() / n_test),
        max_loss_gap_db: gaps.as_ref().map(|g| g.iter().copied().fold(0.0, f64::max)),
    };
    Ok(TrainResult {
        classifier,
        outcome,
        split,
        validation: fit.test,
        report,
    })
}

fn standardizer_rows(c: &Classifier, ds: &Dataset, idx: &[usize]) -> Vec<Vec<f64>> {
    c.standardizer.transform_all(&ds.features(idx))
}

/// Trains on a dataset file and writes the model, standardizer, history and
/// report into `out`.
pub fn cmd_train(cfg: &RunConfig, dataset: &Path, out: &Path, resume: Option<&Path>) -> Result<TrainReport> {
    let ds = Dataset::read(dataset)?;
    let resume = resume.map(Network::load).transpose()?;
    let r = train_on(cfg, &ds, resume)?;
    ensure_dir(out)?;
    let model = out.join(MODEL_FILE);
    r.classifier.save(&model)?;
    let history = out.join(HISTORY_FILE);
    write_file(&history, history_csv(&r.outcome.history))?;
    write_meta(&history, cfg, "train", serde_json::json!({ "dataset": dataset }))?;
    let mut json = serde_json::to_string_pretty(&r.report).expect("serializable");
    json.push('\n');
    write_file(&out.join(TRAIN_REPORT_FILE), json)?;
    Ok(r.report)
}

// ---------------------------------------------------------------- selection

/// Oracle, baseline, every fixed member and (with a model) the classifier at
/// one operating point.
pub fn cmd_select(
    cfg: &RunConfig,
    delay_s: f64,
    velocity_mps: f64,
    snr_db: f64,
    model: Option<&Classifier>,
) -> Result<Vec<SelectionResult>> {
    let set = cfg.numerology_set()?;
    let cond = ChannelCondition::from_snr_db(delay_s, velocity_mps, snr_db, &cfg.system)?;
    let est = Selector::new(cfg.estimator())
        .with_mode(cfg.channel.mode)
        .estimate(&cond, &set, cfg.sweep.n_realizations, cfg.sweep_seed())?;
    let mut out = vec![est.oracle(cond.noise_power)?, est.baseline(cond.noise_power)?];
    if let Some(c) = model {
        let u = c.predict_condition(&cond, &cond.pdp(&cfg.system)?)?;
        out.push(est.predicted(u, cond.noise_power)?);
    }
    for u in 1..=set.len() {
        out.push(est.fixed(u, cond.noise_power)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub oracle_index: usize,
    pub oracle_loss_db: f64,
    pub oracle_std_err_db: f64,
    pub dnn_loss_db: Option<f64>,
    pub baseline_index: usize,
    pub baseline_loss_db: f64,
    pub fixed_loss_db: Vec<f64>,
}

/// SNR-loss curves over the configured SNR grid for one (delay, velocity).
pub fn sweep_snr(cfg: &RunConfig, delay_s: f64, velocity_mps: f64, model: Option<&Classifier>) -> Result<Vec<SnrPoint>> {
    let set = cfg.numerology_set()?;
    let base = ChannelCondition::new(delay_s, velocity_mps, 1.0, &cfg.system)?;
    let est = Selector::new(cfg.estimator())
        .with_mode(cfg.channel.mode)
        .estimate(&base, &set, cfg.sweep.n_realizations, cfg.sweep_seed())?;
    let pdp = base.pdp(&cfg.system)?;
    curve_from_estimate(&est, &base, &pdp, &cfg.dataset_spec().snr_grid(), model)
}

pub fn curve_from_estimate(
    est: &SetEstimate,
    base: &ChannelCondition,
    pdp: &PowerDelayProfile,
    grid: &[f64],
    model: Option<&Classifier>,
) -> Result<Vec<SnrPoint>> {
    grid.iter()
        .map(|&snr| {
            let noise = snr_db_to_noise(snr);
            let oracle = est.oracle(noise)?;
            let baseline = est.baseline(noise)?;
            let dnn = match model {
                Some(c) => {
                    let u = c.predict_condition(&base.with_noise(noise), pdp)?;
                    Some(est.predicted(u, noise)?.loss_db())
                }
                None => None,
            };
            Ok(SnrPoint {
                snr_db: snr,
                oracle_index: oracle.chosen_index,
                oracle_loss_db: oracle.loss_db(),
                oracle_std_err_db: oracle.chosen().std_err,
                dnn_loss_db: dnn,
                baseline_index: baseline.chosen_index,
                baseline_loss_db: baseline.loss_db(),
                fixed_loss_db: oracle.per_numerology_loss.iter().map(|l| l.loss_db).collect(),
            })
        })
        .collect()
}

pub fn snr_curve_csv(points: &[SnrPoint]) -> String {
    let m = points.first().map_or(0, |p| p.fixed_loss_db.len());
    let mut s = String::from("snr_db,oracle_loss_db,dnn_loss_db,baseline_loss_db");
    for u in 1..=m {
        s.push_str(&format!(",fixed_u{u}_loss_db"));
    }
    s.push_str(",oracle_std_err_db,oracle_index,baseline_index\n");
    for p in points {
        let dnn = p.dnn_loss_db.map(f17).unwrap_or_default();
        s.push_str(&format!("{},{},{dnn},{}", f17(p.snr_db), f17(p.oracle_loss_db), f17(p.baseline_loss_db)));
        for l in &p.fixed_loss_db {
            s.push(',');
            s.push_str(&f17(*l));
        }
        s.push_str(&format!(",{},{},{}\n", f17(p.oracle_std_err_db), p.oracle_index, p.baseline_index));
    }
    s
}

pub fn cmd_sweep_snr(
    cfg: &RunConfig,
    delay_s: f64,
    velocity_mps: f64,
    model: Option<&Classifier>,
    out: &Path,
) -> Result<PathBuf> {
    let points = sweep_snr(cfg, delay_s, velocity_mps, model)?;
    ensure_dir(out)?;
    let path = out.join(format!("snr_curve_d{:.2}us_v{:.0}kmh.csv", delay_s * 1e6, mps_to_kmh(velocity_mps)));
    write_file(&path, snr_curve_csv(&points))?;
    write_meta(
        &path,
        cfg,
        "sweep-snr",
        serde_json::json!({ "delay_s": delay_s, "velocity_mps": velocity_mps, "realizations": cfg.sweep.n_realizations, "model": model.is_some() }),
    )?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCell {
    pub delay_us: f64,
    pub velocity_kmh: f64,
    pub oracle_label: usize,
    pub dnn_label: Option<usize>,
}

/// Labels on a `grid x grid` lattice over the dataset ranges, one map per SNR.
/// Cells are ordered velocity-major so each velocity row is contiguous.
pub fn sweep_boundary(cfg: &RunConfig, snrs: &[f64], model: Option<&Classifier>) -> Result<Vec<Vec<BoundaryCell>>> {
    let set = cfg.numerology_set()?;
    let n = cfg.sweep.grid;
    let spec = cfg.dataset_spec();
    let lin = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let cells: Vec<(f64, f64)> = (0..n)
        .flat_map(|vi| (0..n).map(move |di| (vi, di)))
        .map(|(vi, di)| {
            (
                lin(spec.delay_range[0], spec.delay_range[1], di),
                lin(spec.velocity_range_kmh[0], spec.velocity_range_kmh[1], vi),
            )
        })
        .collect();
    let selector = Selector::new(cfg.estimator()).with_mode(cfg.channel.mode);
    let seed = cfg.sweep_seed();
    let per_cell: Vec<Result<Vec<BoundaryCell>>> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(d, v_kmh))| {
            let cond = ChannelCondition::new(d, kmh_to_mps(v_kmh), 1.0, &cfg.system)?;
            let est = selector.estimate(&cond, &set, cfg.sweep.n_realizations, child_seed(seed, i as u64))?;
            let pdp = cond.pdp(&cfg.system)?;
            snrs.iter()
                .map(|&snr| {
                    let noise = snr_db_to_noise(snr);
                    Ok(BoundaryCell {
                        delay_us: d * 1e6,
                        velocity_kmh: v_kmh,
                        oracle_label: est.oracle(noise)?.chosen_index,
                        dnn_label: model.map(|c| c.predict_condition(&cond.with_noise(noise), &pdp)).transpose()?,
                    })
                })
                .collect()
        })
        .collect();
    let per_cell = per_cell.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((0..snrs.len()).map(|k| per_cell.iter().map(|c| c[k].clone()).collect()).collect())
}

pub fn boundary_csv(cells: &[BoundaryCell]) -> String {
    let mut s = String::from("delay_us,velocity_kmh,oracle_label,dnn_label\n");
    for c in cells {
        let dnn = c.dnn_label.map(|u| u.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{dnn}\n", f17(c.delay_us), f17(c.velocity_kmh), c.oracle_label));
    }
    s
}

pub fn cmd_sweep_boundary(cfg: &RunConfig, snr_db: f64, model: Option<&Classifier>, out: &Path) -> Result<PathBuf> {
    let grid = sweep_boundary(cfg, &[snr_db], model)?.remove(0);
    ensure_dir(out)?;
    let path = out.join(format!("boundary_snr{snr_db:.0}db.csv"));
    write_file(&path, boundary_csv(&grid))?;
    write_meta(
        &path,
        cfg,
        "sweep-boundary",
        serde_json::json!({ "snr_db": snr_db, "grid": cfg.sweep.grid, "realizations": cfg.sweep.n_realizations, "model": model.is_some() }),
    )?;
    Ok(path)
}

// ---------------------------------------------------------------- validation

/// Deliberate implementation faults for exercising the validation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Flips the sign of the delay phase in the previous-symbol matrix.
    NegateIsiPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn at_most(name: impl Into<String>, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
            detail: detail.into(),
        }
    }
}

fn custom_numerology(cfg: &RunConfig, n: usize, g: usize) -> Result<Numerology> {
    derive_numerology(n, CpRatio::new(g as u32, n as u32)?, &cfg.system)
}

/// Static single-tap link: no interference, loss equals the CP overhead.
pub fn check_zero_interference(cfg: &RunConfig) -> Result<Vec<Check>> {
    let set = cfg.numerology_set()?;
    let est = cfg.estimator().with_fading(Fading::Static);
    let cond = ChannelCondition::from_snr_db(0.0, 0.0, 20.0, &cfg.system)?;
    let mut pu = 0.0f64;
    let mut pi = 0.0f64;
    let mut loss = 0.0f64;
    for m in set.iter() {
        let pb = est.estimate_powers(&cond, m, 2, cfg.seed, cfg.channel.mode)?;
        pu = pu.max((pb.p_ave - 1.0).abs());
        pi = pi.max(pb.total_interference);
        let l = crate::interference::snr_loss(&pb, m.mu(), cond.noise_power)?;
        loss = loss.max((l - 10.0 * (1.0 + m.mu()).log10()).abs());
    }
    Ok(vec![
        Check::at_most("zero-interference: |P_U - 1|", pu, 1e-12, "static single tap, all members"),
        Check::at_most("zero-interference: P_I", pi, 1e-12, "static single tap, all members"),
        Check::at_most("zero-interference: loss - 10log10(1+mu) [dB]", loss, 1e-6, "static single tap"),
    ])
}

/// 24 taps: fits inside N = 32 and averages enough taps to keep the
/// per-realization power spread small.
const CONSERVATION_DELAY: f64 = 1e-6;

/// `P_U + P_ICI1 = 1` in expectation, measured in standard errors.
pub fn check_conservation(cfg: &RunConfig, realizations: usize) -> Result<Vec<Check>> {
    let est = cfg.estimator();
    let mut checks = Vec::new();
    for n in [32usize, 64] {
        let num = custom_numerology(cfg, n, n / 4)?;
        for fd in [100.0, 500.0, 1000.0] {
            let cond = ChannelCondition::new(CONSERVATION_DELAY, 0.0, 1.0, &cfg.system)?.with_doppler(fd);
            let per = est.realization_powers(&cond, &[num], realizations, child_seed(cfg.validate_seed(), n as u64 + fd as u64), AccountingMode::Full)?;
            let vals: Vec<f64> = per.iter().map(|r| r[0].p_ave + r[0].p_ici1).collect();
            let k = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / k;
            let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
            checks.push(Check::at_most(
                format!("conservation N={n} f_d={fd} Hz [std errs]"),
                (mean - 1.0).abs() / se.max(1e-300),
                3.0,
                format!("mean={mean:.6} se={se:.2e}"),
            ));
            checks.push(Check::at_most(format!("conservation N={n} f_d={fd} Hz std err"), se, 0.01, ""));
        }
    }
    Ok(checks)
}

/// Components smaller than this fraction of the received power are compared
/// on an absolute scale; they are zero up to rounding.
const ZERO_FLOOR: f64 = 1e-6;

/// Fast-path identities vs the definitional matrices on random instances.
pub fn check_fast_path(cfg: &RunConfig, instances: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.validate_seed(), 1));
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = [8usize, 16, 24, 32, 40, 48, 64][rng.gen_range(0..7)];
        let taps = rng.gen_range(2..=16usize.min(n));
        let g = rng.gen_range(0..taps);
        let fd = [0.0, 100.0, 1000.0, 10_000.0][rng.gen_range(0..4)];
        let num = custom_numerology(cfg, n, g)?;
        let powers: Vec<f64> = (0..taps).map(|l| (-(l as f64) / taps as f64 * 3.0).exp()).collect();
        let pdp = PowerDelayProfile::from_taps(&powers, taps as f64 * cfg.system.sample_time(), cfg.system.sample_time())?;
        let h = generate_realization(&pdp, fd, n, rng.gen());
        let mats = compute_matrices(&h, &num)?;
        for mode in [AccountingMode::Paper, AccountingMode::Full] {
            let a = powers_from_matrices(&mats, mode);
            let b = symbol_power_breakdown(&h, &num, mode)?;
            let total = a.p_ave + a.p_ici1 + a.p_isi_ici2;
            for (x, y) in [(a.p_ave, b.p_ave), (a.p_ici1, b.p_ici1), (a.p_isi_ici2, b.p_isi_ici2)] {
                let scale = x.abs().max(y.abs()).max(ZERO_FLOOR * total);
                worst = worst.max((x - y).abs() / scale);
            }
        }
    }
    Ok(Check::at_most(
        "fast path vs definitional matrices [rel err]",
        worst,
        1e-10,
        format!("{instances} random instances, N <= 64, both modes"),
    ))
}

/// Spot conditions of the link-level cross-check: (delay s, km/h, N, CP ratio).
pub fn link_spot_conditions() -> Vec<(f64, f64, usize, CpRatio)> {
    let quarter = CpRatio::new(1, 4).expect("valid");
    let tenth = CpRatio::new(1, 10).expect("valid");
    vec![
        (1e-6, 60.0, 960, quarter),
        (1e-6, 250.0, 960, quarter),
        (6e-6, 60.0, 960, quarter),
        (6e-6, 250.0, 960, quarter),
        (6e-6, 60.0, 240, tenth),
        (6e-6, 250.0, 240, tenth),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkComparison {
    pub delay_s: f64,
    pub velocity_kmh: f64,
    pub idft_size: usize,
    pub cp_len: usize,
    pub empirical: f64,
    pub empirical_std_err: f64,
    pub analytic: f64,
    pub relative_error: f64,
}

/// Link-simulator interference vs the full-accounting estimate with shared
/// channel draws.
pub fn compare_link(cfg: &RunConfig, delay_s: f64, velocity_kmh: f64, num: &Numerology, symbols: usize, seed: u64) -> Result<LinkComparison> {
    let cond = ChannelCondition::new(delay_s, kmh_to_mps(velocity_kmh), 1.0, &cfg.system)?;
    let mut sim = LinkSimulator::new(cfg.system);
    sim.sinusoids = cfg.channel.sinusoids;
    let e = sim.empirical_sinr(&cond, num, symbols, seed)?;
    let a = cfg.estimator().estimate_powers(&cond, num, symbols, seed, AccountingMode::Full)?;
    Ok(LinkComparison {
        delay_s,
        velocity_kmh,
        idft_size: num.idft_size,
        cp_len: num.cp_len,
        empirical: e.p_i,
        empirical_std_err: e.std_err_i,
        analytic: a.total_interference,
        relative_error: (e.p_i - a.total_interference).abs() / a.total_interference,
    })
}

pub fn check_link(cfg: &RunConfig, symbols: usize) -> Result<Vec<Check>> {
    let conditions = link_spot_conditions();
    let results: Vec<Result<LinkComparison>> = conditions
        .par_iter()
        .enumerate()
        .map(|(i, &(d, v, n, cp))| {
            let num = derive_numerology(n, cp, &cfg.system)?;
            compare_link(cfg, d, v, &num, symbols, child_seed(cfg.validate_seed(), 100 + i as u64))
        })
        .collect();
    results
        .into_iter()
        .map(|r| {
            let r = r?;
            Ok(Check::at_most(
                format!(
                    "link sim vs analytic {:.0} us {:.0} km/h N={} G={} [rel err]",
                    r.delay_s * 1e6,
                    r.velocity_kmh,
                    r.idft_size,
                    r.cp_len
                ),
                r.relative_error,
                0.05,
                format!("empirical={:.4e} analytic={:.4e} symbols={symbols}", r.empirical, r.analytic),
            ))
        })
        .collect()
}

/// Impulse-probed link matrices vs the analytic ISI/ICI matrices.
pub fn check_link_matrices(cfg: &RunConfig, fault: Fault) -> Result<Check> {
    let pdp = exp_pdp(1.5e-6, cfg.system.sample_time())?;
    let taps = &pdp.taps()[..24];
    let pdp = PowerDelayProfile::from_taps(taps, 1.5e-6, cfg.system.sample_time())?;
    let mut worst = 0.0f64;
    for (i, &(n, g, fd)) in [(64usize, 4usize, 0.0), (64, 8, 2000.0), (48, 0, 500.0), (64, 16, 8000.0)].iter().enumerate() {
        let num = custom_numerology(cfg, n, g)?;
        let h = generate_realization(&pdp, fd, n + g, child_seed(cfg.validate_seed(), 200 + i as u64));
        let c = check_matrices_inner(&h, &num, fault == Fault::NegateIsiPhase)?;
        worst = worst.max(c.worst());
    }
    Ok(Check::at_most(
        "link impulse response vs analytic matrices [rel err]",
        worst,
        1e-9,
        "diagonals and Frobenius norms of current/previous-symbol matrices",
    ))
}

pub fn check_gradients(cfg: &RunConfig) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.validate_seed(), 2));
    let mut run = |sizes: Vec<usize>, batch: usize, coords: usize| -> Result<f64> {
        let spec = NetworkSpec::new(sizes, 1e-3)?;
        let mut net = Network::init(&spec, rng.gen())?;
        for b in net.biases.iter_mut() {
            b.mapv_inplace(|_| rng.gen_range(-0.1..0.1));
        }
        let x = ndarray::Array2::from_shape_simple_fn((batch, spec.input_dim()), || rng.gen_range(-1.0..1.0));
        let y: Vec<usize> = (0..batch).map(|_| rng.gen_range(1..=spec.classes())).collect();
        gradient_check(&net, x.view(), &y, coords, rng.gen())
    };
    let tiny = run(vec![10, 8, 6], 8, 20)?;
    let prod = run(cfg.network_spec()?.layer_sizes, 4, 40)?;
    Ok(vec![
        Check::at_most("gradient check 10-8-6 [rel err]", tiny, 1e-5, "20 coordinates"),
        Check::at_most("gradient check production shape [rel err]", prod, 1e-4, "40 coordinates, batch 4"),
    ])
}

/// Runs the full invariant suite. `quick` shrinks the Monte-Carlo sizes.
pub fn cmd_validate(cfg: &RunConfig, quick: bool, fault: Fault) -> Result<Vec<Check>> {
    let v = &cfg.validate;
    let cons = v.conservation_realizations;
    let (inst, symbols) = if quick { (10, 300) } else { (v.equivalence_instances, v.link_symbols) };
    let mut checks = check_zero_interference(cfg)?;
    checks.extend(check_conservation(cfg, cons)?);
    checks.push(check_fast_path(cfg, inst)?);
    checks.push(check_link_matrices(cfg, fault)?);
    if !quick {
        checks.extend(check_link(cfg, symbols)?);
    } else {
        let quarter = CpRatio::new(1, 4)?;
        let num = derive_numerology(240, CpRatio::new(1, 10)?, &cfg.system)?;
        let r = compare_link(cfg, 6e-6, 250.0, &num, symbols, cfg.validate_seed())?;
        checks.push(Check::at_most("link sim vs analytic 6 us 250 km/h N=240 [rel err]", r.relative_error, 0.05, format!("{symbols} symbols")));
        let num = derive_numerology(240, quarter, &cfg.system)?;
        let r = compare_link(cfg, 1e-6, 250.0, &num, symbols, cfg.validate_seed())?;
        checks.push(Check::at_most("link sim vs analytic 1 us 250 km/h N=240 [rel err]", r.relative_error, 0.05, format!("{symbols} symbols")));
    }
    checks.extend(check_gradients(cfg)?);
    Ok(checks)
}

pub fn format_checks(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        s.push_str(&format!(
            "{:<4} {:<width$}  measured={:.3e}  tol={:.1e}  {}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance,
            c.detail
        ));
    }
    s
}
