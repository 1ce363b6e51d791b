//! Numerology selection: the Monte-Carlo oracle, an interference-only
//! baseline and fixed choices.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelCondition;
use crate::error::{Error, Result};
use crate::interference::{snr_loss, snr_loss_std_err, AccountingMode, PowerBreakdown, PowerEstimator};
use crate::numerology::NumerologySet;

/// Losses closer than this (dB) are treated as equal.
pub const TIE_TOLERANCE_DB: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Oracle,
    Dnn,
    MinInterferenceBaseline,
    Fixed(usize),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Oracle => f.write_str("oracle"),
            Method::Dnn => f.write_str("dnn"),
            Method::MinInterferenceBaseline => f.write_str("baseline"),
            Method::Fixed(u) => write!(f, "fixed{u}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumerologyLoss {
    /// 1-based member index.
    pub index: usize,
    pub loss_db: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen_index: usize,
    pub per_numerology_loss: Vec<NumerologyLoss>,
    pub method: Method,
}

impl SelectionResult {
    pub fn chosen(&self) -> &NumerologyLoss {
        &self.per_numerology_loss[self.chosen_index - 1]
    }

    pub fn loss_db(&self) -> f64 {
        self.chosen().loss_db
    }
}

/// Power estimates of every member of a set under one channel condition,
/// from a shared realization batch. Losses at any noise level follow without
/// further simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SetEstimate {
    pub breakdowns: Vec<PowerBreakdown>,
    mus: Vec<f64>,
    sizes: Vec<usize>,
}

impl SetEstimate {
    pub fn new(breakdowns: Vec<PowerBreakdown>, set: &NumerologySet) -> Result<Self> {
        if breakdowns.len() != set.len() {
            return Err(Error::Dimension(format!(
                "{} estimates for {} numerologies",
                breakdowns.len(),
                set.len()
            )));
        }
        Ok(Self {
            breakdowns,
            mus: set.iter().map(|m| m.mu()).collect(),
            sizes: set.iter().map(|m| m.idft_size).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.breakdowns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakdowns.is_empty()
    }

    pub fn losses(&self, noise_power: f64) -> Result<Vec<NumerologyLoss>> {
        self.breakdowns
            .iter()
            .zip(&self.mus)
            .enumerate()
            .map(|(j, (pb, &mu))| {
                Ok(NumerologyLoss {
                    index: j + 1,
                    loss_db: snr_loss(pb, mu, noise_power)?,
                    std_err: snr_loss_std_err(pb, mu, noise_power),
                })
            })
            .collect()
    }

    /// Member minimizing the SNR loss; near-ties go to the smaller CP ratio,
    /// then the smaller IDFT size.
    pub fn oracle(&self, noise_power: f64) -> Result<SelectionResult> {
        let losses = self.losses(noise_power)?;
        let best = losses.iter().map(|l| l.loss_db).fold(f64::INFINITY, f64::min);
        let chosen = (0..losses.len())
            .filter(|&j| losses[j].loss_db <= best + TIE_TOLERANCE_DB)
            .min_by(|&a, &b| {
                self.mus[a]
                    .total_cmp(&self.mus[b])
                    .then(self.sizes[a].cmp(&self.sizes[b]))
                    .then(a.cmp(&b))
            })
            .ok_or(Error::DegenerateEstimate(best))?;
        Ok(SelectionResult {
            chosen_index: chosen + 1,
            per_numerology_loss: losses,
            method: Method::Oracle,
        })
    }

    /// Member maximizing `P_U / P_I`, blind to noise and CP overhead.
    ///
    /// Members with equal ratio are indistinguishable to this selector; they
    /// resolve to the larger CP ratio (a fixed, conservative CP), then the
    /// smaller IDFT size.
    pub fn baseline(&self, noise_power: f64) -> Result<SelectionResult> {
        let ratio: Vec<f64> = self
            .breakdowns
            .iter()
            .map(|pb| {
                if pb.total_interference > 0.0 {
                    pb.p_ave / pb.total_interference
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let best = ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied = |r: f64| {
            if best.is_infinite() {
                r.is_infinite()
            } else {
                r >= best * (1.0 - 1e-9)
            }
        };
        let chosen = (0..ratio.len())
            .filter(|&j| tied(ratio[j]))
            .min_by(|&a, &b| {
                self.mus[b]
                    .total_cmp(&self.mus[a])
                    .then(self.sizes[a].cmp(&self.sizes[b]))
                    .then(a.cmp(&b))
            })
            .ok_or(Error::DegenerateEstimate(best))?;
        Ok(SelectionResult {
            chosen_index: chosen + 1,
            per_numerology_loss: self.losses(noise_power)?,
            method: Method::MinInterferenceBaseline,
        })
    }

    pub fn fixed(&self, index: usize, noise_power: f64) -> Result<SelectionResult> {
        if index == 0 || index > self.len() {
            return Err(Error::BadIndex {
                index,
                size: self.len(),
            });
        }
        Ok(SelectionResult {
            chosen_index: index,
            per_numerology_loss: self.losses(noise_power)?,
            method: Method::Fixed(index),
        })
    }

    /// Wraps an externally chosen index (e.g. a classifier prediction).
    pub fn predicted(&self, index: usize, noise_power: f64) -> Result<SelectionResult> {
        let mut r = self.fixed(index, noise_power)?;
        r.method = Method::Dnn;
        Ok(r)
    }
}

/// Runs the estimator and the selectors on top of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selector {
    pub estimator: PowerEstimator,
    pub mode: AccountingMode,
}

impl Selector {
    pub fn new(estimator: PowerEstimator) -> Self {
        Self {
            estimator,
            mode: AccountingMode::Paper,
        }
    }

    pub fn with_mode(mut self, mode: AccountingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn estimate(&self, cond: &ChannelCondition, set: &NumerologySet, n_real: usize, seed: u64) -> Result<SetEstimate> {
        let pbs = self.estimator.estimate_set(cond, set.members(), n_real, seed, self.mode)?;
        SetEstimate::new(pbs, set)
    }

    pub fn oracle_select(&self, cond: &ChannelCondition, set: &NumerologySet, n_real: usize, seed: u64) -> Result<SelectionResult> {
        self.estimate(cond, set, n_real, seed)?.oracle(cond.noise_power)
    }

    pub fn baseline_select_min_interference(
        &self,
        cond: &ChannelCondition,
        set: &NumerologySet,
        n_real: usize,
        seed: u64,
    ) -> Result<SelectionResult> {
        self.estimate(cond, set, n_real, seed)?.baseline(cond.noise_power)
    }

    pub fn evaluate_fixed(
        &self,
        index: usize,
        cond: &ChannelCondition,
        set: &NumerologySet,
        n_real: usize,
        seed: u64,
    ) -> Result<SelectionResult> {
        set.get(index)?;
        self.estimate(cond, set, n_real, seed)?.fixed(index, cond.noise_power)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interference::Fading;
    use crate::numerology::{default_candidate_set, SystemConfig};

    fn setup() -> (SystemConfig, NumerologySet) {
        let cfg = SystemConfig::standard();
        (cfg, default_candidate_set(&cfg))
    }

    #[test]
    fn static_single_tap_picks_short_cp_small_n() {
        let (cfg, set) = setup();
        let sel = Selector::new(PowerEstimator::new(cfg).with_fading(Fading::Static));
        for snr in [0.0, 20.0, 45.0] {
            let c = ChannelCondition::from_snr_db(0.0, 0.0, snr, &cfg).unwrap();
            let r = sel.oracle_select(&c, &set, 2, 1).unwrap();
            assert_eq!(r.chosen_index, 4);
            assert!((r.loss_db() - 10.0 * 1.1f64.log10()).abs() < 1e-9);
            let b = sel.baseline_select_min_interference(&c, &set, 2, 1).unwrap();
            assert_eq!(b.chosen_index, 1);
            assert!((b.loss_db() - r.loss_db() - 0.555_173_278).abs() < 1e-6);
            for u in 1..=6 {
                let f = sel.evaluate_fixed(u, &c, &set, 2, 1).unwrap();
                let mu = set.get(u).unwrap().mu();
                assert!((f.loss_db() - 10.0 * (1.0 + mu).log10()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fixed_at_oracle_choice_matches() {
        let (cfg, set) = setup();
        let sel = Selector::new(PowerEstimator::new(cfg));
        let c = ChannelCondition::from_snr_db(3e-6, 120.0 / 3.6, 25.0, &cfg).unwrap();
        let o = sel.oracle_select(&c, &set, 50, 4).unwrap();
        let f = sel.evaluate_fixed(o.chosen_index, &c, &set, 50, 4).unwrap();
        assert_eq!(o.loss_db(), f.loss_db());
        assert!(matches!(sel.evaluate_fixed(7, &c, &set, 50, 4), Err(Error::BadIndex { .. })));
        assert!(matches!(sel.evaluate_fixed(0, &c, &set, 50, 4), Err(Error::BadIndex { .. })));
    }

    #[test]
    fn long_delay_high_snr_prefers_long_cp() {
        let (cfg, set) = setup();
        let sel = Selector::new(PowerEstimator::new(cfg));
        let c = ChannelCondition::from_snr_db(6e-6, 60.0 / 3.6, 45.0, &cfg).unwrap();
        let r = sel.oracle_select(&c, &set, 100, 2).unwrap();
        assert_eq!(set.get(r.chosen_index).unwrap().cp_ratio.denom(), 4, "{r:?}");
    }

    #[test]
    fn high_speed_prefers_wide_spacing() {
        let (cfg, set) = setup();
        let sel = Selector::new(PowerEstimator::new(cfg));
        let c = ChannelCondition::from_snr_db(0.2e-6, 250.0 / 3.6, 40.0, &cfg).unwrap();
        let r = sel.oracle_select(&c, &set, 100, 3).unwrap();
        assert_eq!(set.get(r.chosen_index).unwrap().idft_size, 240, "{r:?}");
        let l = &r.per_numerology_loss;
        assert!(l[0].loss_db < l[1].loss_db && l[1].loss_db < l[2].loss_db);
    }

    #[test]
    fn longer_symbols_see_more_ici() {
        let (cfg, set) = setup();
        let sel = Selector::new(PowerEstimator::new(cfg));
        let c = ChannelCondition::from_snr_db(1e-6, 250.0 / 3.6, 30.0, &cfg).unwrap();
        let e = sel.estimate(&c, &set, 200, 9).unwrap();
        let (a, b) = (&e.breakdowns[0], &e.breakdowns[2]);
        assert!(b.p_ici1 - a.p_ici1 > 3.0 * (a.std_err + b.std_err));
    }

    #[test]
    fn oracle_dominates_and_ties_are_deterministic() {
        let (cfg, set) = setup();
        let sel = Selector::new(PowerEstimator::new(cfg));
        for (i, &(d, v)) in [(0.5e-6, 30.0), (4e-6, 300.0), (8e-6, 10.0), (2e-6, 500.0)].iter().enumerate() {
            let c = ChannelCondition::from_snr_db(d, v / 3.6, 10.0 * i as f64 + 5.0, &cfg).unwrap();
            let e = sel.estimate(&c, &set, 60, i as u64).unwrap();
            let o = e.oracle(c.noise_power).unwrap();
            let b = e.baseline(c.noise_power).unwrap();
            assert!(o.loss_db() <= b.loss_db() + TIE_TOLERANCE_DB);
            for l in &o.per_numerology_loss {
                assert!(o.loss_db() <= l.loss_db + TIE_TOLERANCE_DB);
            }
            assert_eq!(e.oracle(c.noise_power).unwrap(), o);
        }
    }

    #[test]
    fn tie_rule_orders_by_cp_then_size() {
        let (_, set) = setup();
        let pb = PowerBreakdown::from_samples(
            &[crate::interference::SymbolPowers { p_ave: 1.0, p_ici1: 0.0, p_isi_ici2: 0.0 }; 2],
            AccountingMode::Paper,
        );
        let e = SetEstimate::new(vec![pb; 6], &set).unwrap();
        assert_eq!(e.oracle(0.1).unwrap().chosen_index, 4);
        assert_eq!(e.baseline(0.1).unwrap().chosen_index, 1);
        assert!(SetEstimate::new(vec![pb; 5], &set).is_err());
    }
}
