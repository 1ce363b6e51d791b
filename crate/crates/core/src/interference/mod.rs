//! Channel-effect matrices and Monte-Carlo interference powers.
//!
//! For one OFDM symbol the post-DFT signal splits into a desired diagonal
//! term, ICI from time variation (ICI1), ISI from the previous symbol and ICI
//! from an insufficient CP (ICI2). Three routes compute the k-averaged powers:
//!
//! * [`compute_matrices`] + [`powers_from_matrices`]: the definitional sums,
//!   `O(N^3 L)`; reference only.
//! * [`symbol_power_breakdown`]: time-domain identities on sampled taps,
//!   `O(N L)`.
//! * the series evaluator used by [`PowerEstimator`]: Taylor moments of the
//!   sum-of-sinusoids taps, independent of `N` for the ICI terms.

mod estimate;
mod fast;
mod matrices;
mod series;
#[cfg(test)]
mod tests_equivalence;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use estimate::{Fading, PowerEstimator};
pub use fast::symbol_power_breakdown;
pub(crate) use matrices::compute_matrices_with_fault;
pub use matrices::{compute_matrices, powers_from_matrices, InterferenceMatrices};
pub use series::SeriesEvaluator;

/// How the ISI and CP-induced ICI terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AccountingMode {
    /// Coherent `|H_isi + H_ici2|^2`, off-diagonal entries only.
    #[default]
    Paper,
    /// Incoherent `|H_isi|^2 + |H_ici2|^2` over all entries; matches the
    /// power a receiver actually sees with independent data symbols.
    Full,
}

impl fmt::Display for AccountingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccountingMode::Paper => "paper",
            AccountingMode::Full => "full",
        })
    }
}

impl FromStr for AccountingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(AccountingMode::Paper),
            "full" => Ok(AccountingMode::Full),
            _ => Err(Error::Config(format!("unknown accounting mode `{s}` (paper|full)"))),
        }
    }
}

/// Powers of a single channel realization (no expectation taken).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymbolPowers {
    pub p_ave: f64,
    pub p_ici1: f64,
    pub p_isi_ici2: f64,
}

impl SymbolPowers {
    pub fn interference(&self) -> f64 {
        self.p_ici1 + self.p_isi_ici2
    }
}

/// Monte-Carlo estimate of the expected powers for one (condition,
/// numerology) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBreakdown {
    pub p_ave: f64,
    pub p_ici1: f64,
    pub p_isi_ici2: f64,
    pub total_interference: f64,
    pub mode: AccountingMode,
    pub n_realizations: usize,
    /// Standard error of `total_interference`.
    pub std_err: f64,
    /// Standard error of `p_ave`.
    pub std_err_ave: f64,
    /// Covariance of the `p_ave` and `total_interference` estimates.
    pub cov_ave_interference: f64,
}

impl PowerBreakdown {
    /// Aggregates per-realization powers (needs at least two).
    pub fn from_samples(samples: &[SymbolPowers], mode: AccountingMode) -> Self {
        let n = samples.len();
        assert!(n >= 2, "need at least two realizations");
        let nf = n as f64;
        let mean = |f: &dyn Fn(&SymbolPowers) -> f64| samples.iter().map(f).sum::<f64>() / nf;
        let p_ave = mean(&|s| s.p_ave);
        let p_ici1 = mean(&|s| s.p_ici1);
        let p_isi_ici2 = mean(&|s| s.p_isi_ici2);
        let total = p_ici1 + p_isi_ici2;
        let (mut var_i, mut var_u, mut cov) = (0.0, 0.0, 0.0);
        for s in samples {
            let di = s.interference() - total;
            let du = s.p_ave - p_ave;
            var_i += di * di;
            var_u += du * du;
            cov += di * du;
        }
        let denom = (nf - 1.0) * nf;
        Self {
            p_ave,
            p_ici1,
            p_isi_ici2,
            total_interference: total,
            mode,
            n_realizations: n,
            std_err: (var_i / denom).sqrt(),
            std_err_ave: (var_u / denom).sqrt(),
            cov_ave_interference: cov / denom,
        }
    }
}

/// `P_U / (P_I + (1 + mu) sigma0^2)`
pub fn sinr(pb: &PowerBreakdown, mu: f64, noise_power: f64) -> f64 {
    pb.p_ave / (pb.total_interference + (1.0 + mu) * noise_power)
}

/// SNR loss in dB relative to an interference-free, CP-free link.
pub fn snr_loss(pb: &PowerBreakdown, mu: f64, noise_power: f64) -> Result<f64> {
    snr_loss_db(pb.p_ave, pb.total_interference, mu, noise_power)
}

pub fn snr_loss_db(p_ave: f64, interference: f64, mu: f64, noise_power: f64) -> Result<f64> {
    if !(p_ave > 0.0) {
        return Err(Error::DegenerateEstimate(p_ave));
    }
    Ok(10.0 * ((interference + (1.0 + mu) * noise_power) / (p_ave * noise_power)).log10())
}

/// Delta-method standard error of [`snr_loss`].
pub fn snr_loss_std_err(pb: &PowerBreakdown, mu: f64, noise_power: f64) -> f64 {
    let c = 10.0 / std::f64::consts::LN_10;
    let a = c / (pb.total_interference + (1.0 + mu) * noise_power);
    let b = -c / pb.p_ave;
    let var = a * a * pb.std_err * pb.std_err
        + b * b * pb.std_err_ave * pb.std_err_ave
        + 2.0 * a * b * pb.cov_ave_interference;
    var.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal(p_ave: f64, p_i: f64) -> PowerBreakdown {
        let s = SymbolPowers {
            p_ave,
            p_ici1: p_i,
            p_isi_ici2: 0.0,
        };
        PowerBreakdown::from_samples(&[s, s], AccountingMode::Paper)
    }

    #[test]
    fn sinr_examples() {
        assert!((sinr(&ideal(1.0, 0.0), 0.0, 0.01) - 100.0).abs() < 1e-9);
        assert!((sinr(&ideal(1.0, 0.0), 0.25, 0.1) - 8.0).abs() < 1e-12);
        // noise-free ceiling
        let pb = ideal(1.0, 0.02);
        assert!((sinr(&pb, 0.25, 1e-12) - 50.0).abs() < 1e-6);
    }

    #[test]
    fn snr_loss_examples() {
        for noise in [1.0, 0.1, 1e-4] {
            assert!((snr_loss(&ideal(1.0, 0.0), 0.25, noise).unwrap() - 0.969_100_130_080_564).abs() < 1e-9);
            assert!((snr_loss(&ideal(1.0, 0.0), 0.1, noise).unwrap() - 0.413_926_851_582_250_4).abs() < 1e-9);
        }
        let l = snr_loss(&ideal(1.0, 0.01), 0.1, 0.01).unwrap();
        assert!((l - 10.0 * 2.1f64.log10()).abs() < 1e-12);
        assert!((l - 3.222).abs() < 1e-3);
        assert!(matches!(snr_loss(&ideal(0.0, 0.1), 0.1, 0.1), Err(Error::DegenerateEstimate(_))));
    }

    #[test]
    fn snr_loss_shift_identity() {
        for &(pu, pi, mu, s) in &[(0.9, 0.03, 0.25, 0.2), (0.5, 1e-5, 0.1, 1e-4), (1.0, 0.0, 0.0, 3.0)] {
            let l = snr_loss(&ideal(pu, pi), mu, s).unwrap();
            let shifted = l - 10.0 * ((pi + (1.0 + mu) * s) / s).log10();
            assert!((shifted + 10.0 * f64::log10(pu)).abs() < 1e-12);
        }
    }

    #[test]
    fn breakdown_statistics() {
        let samples = [
            SymbolPowers { p_ave: 1.0, p_ici1: 0.1, p_isi_ici2: 0.0 },
            SymbolPowers { p_ave: 0.8, p_ici1: 0.3, p_isi_ici2: 0.1 },
        ];
        let pb = PowerBreakdown::from_samples(&samples, AccountingMode::Full);
        assert!((pb.p_ave - 0.9).abs() < 1e-15);
        assert!((pb.total_interference - 0.25).abs() < 1e-15);
        assert!((pb.total_interference - pb.p_ici1 - pb.p_isi_ici2).abs() < 1e-15);
        // sample std 0.2121 / sqrt(2)
        assert!((pb.std_err - 0.15).abs() < 1e-12);
        assert!((pb.std_err_ave - 0.1).abs() < 1e-12);
        assert!((pb.cov_ave_interference + 0.015).abs() < 1e-12);
    }
}
