use std::f64::consts::TAU;

use super::{symbol_power_breakdown, AccountingMode, PowerBreakdown, SeriesEvaluator, SymbolPowers};
use crate::channel::{child_rng, ChannelCondition, SosChannel, DEFAULT_SINUSOIDS};
use crate::error::{Error, Result};
use crate::numerology::{Numerology, SystemConfig};

/// Monte-Carlo estimator of the expected symbol powers.
///
/// Realization `r` is drawn from child stream `r` of the seed, so a batch is
/// reproducible and every numerology evaluated in one call sees the same
/// channel draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimator {
    pub system: SystemConfig,
    pub sinusoids: usize,
    pub fading: Fading,
}

/// Tap statistics used by the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fading {
    /// Sum-of-sinusoids Rayleigh taps with Clarke Doppler.
    #[default]
    Rayleigh,
    /// Deterministic taps `sqrt(p_l)`, no Doppler: the ideal reference link.
    Static,
}

impl PowerEstimator {
    pub fn new(system: SystemConfig) -> Self {
        Self {
            system,
            sinusoids: DEFAULT_SINUSOIDS,
            fading: Fading::Rayleigh,
        }
    }

    pub fn with_fading(mut self, fading: Fading) -> Self {
        self.fading = fading;
        self
    }

    pub fn with_sinusoids(mut self, sinusoids: usize) -> Self {
        self.sinusoids = sinusoids;
        self
    }

    /// Per-realization powers, indexed `[realization][numerology]`.
    pub fn realization_powers(
        &self,
        cond: &ChannelCondition,
        nums: &[Numerology],
        n_real: usize,
        seed: u64,
        mode: AccountingMode,
    ) -> Result<Vec<Vec<SymbolPowers>>> {
        if nums.is_empty() {
            return Err(Error::InvalidNumerology("no numerologies to evaluate".into()));
        }
        let pdp = cond.pdp(&self.system)?;
        let shortest = nums.iter().map(|m| m.idft_size).min().unwrap();
        if pdp.tap_count() > shortest {
            return Err(Error::DelaySpreadTooLong {
                taps: pdp.tap_count(),
                limit: shortest,
            });
        }
        let window = nums.iter().map(|m| m.idft_size).max().unwrap();
        let omega_d = match self.fading {
            Fading::Rayleigh => TAU * cond.doppler * self.system.sample_time(),
            Fading::Static => 0.0,
        };
        let series = SeriesEvaluator::new(nums, omega_d);
        (0..n_real as u64)
            .map(|r| {
                let ch = match self.fading {
                    Fading::Rayleigh => {
                        let mut rng = child_rng(seed, r);
                        SosChannel::draw(&pdp, cond.doppler, self.sinusoids, &mut rng)
                    }
                    Fading::Static => SosChannel::unfaded(&pdp),
                };
                match &series {
                    Some(ev) => ev.evaluate(&ch, mode),
                    None => {
                        let h = ch.realize(0, window);
                        nums.iter().map(|m| symbol_power_breakdown(&h, m, mode)).collect()
                    }
                }
            })
            .collect()
    }

    /// Estimates for several numerologies from one shared realization batch.
    pub fn estimate_set(
        &self,
        cond: &ChannelCondition,
        nums: &[Numerology],
        n_real: usize,
        seed: u64,
        mode: AccountingMode,
    ) -> Result<Vec<PowerBreakdown>> {
        if n_real < 2 {
            return Err(Error::Config(format!("need at least 2 realizations, got {n_real}")));
        }
        let per_real = self.realization_powers(cond, nums, n_real, seed, mode)?;
        let mut column = Vec::with_capacity(n_real);
        Ok((0..nums.len())
            .map(|j| {
                column.clear();
                column.extend(per_real.iter().map(|row| row[j]));
                PowerBreakdown::from_samples(&column, mode)
            })
            .collect())
    }

    pub fn estimate_powers(
        &self,
        cond: &ChannelCondition,
        num: &Numerology,
        n_real: usize,
        seed: u64,
        mode: AccountingMode,
    ) -> Result<PowerBreakdown> {
        Ok(self.estimate_set(cond, std::slice::from_ref(num), n_real, seed, mode)?[0])
    }
}
