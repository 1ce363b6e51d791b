//! WSSUS Rayleigh tapped-delay-line channels.
//!
//! Every tap is an independent sum-of-sinusoids process
//!
//! ```text
//! h(n, l) = sqrt(p_l / M) * sum_m exp(j (w_m n + phi_m)),   w_m = 2 pi f_d T_s cos(a_m)
//! ```
//!
//! with arrival angles `a_m = (2 pi m + theta_l) / M`, a per-tap random
//! rotation `theta_l` and i.i.d. uniform phases. Averaged over `theta_l` the
//! autocorrelation is exactly `p_l J0(2 pi f_d T_s dn)` (Clarke spectrum).

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bessel::j0;
use crate::error::{Error, Result};
use crate::numerology::SystemConfig;

/// Length of the PDP part of the feature vector; also the longest delay
/// spread (in taps) the toolkit accepts.
pub const MAX_PDP_TAPS: usize = 256;

pub const DEFAULT_SINUSOIDS: usize = 64;

/// Taps are kept while their unnormalized power is at least this fraction of
/// the first tap (20 dB).
const TRUNCATION_FLOOR: f64 = 0.01;

const REANCHOR_INTERVAL: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerDelayProfile {
    taps: Vec<f64>,
    rms_delay: f64,
    sample_time: f64,
}

impl PowerDelayProfile {
    /// Profile from explicit tap powers, normalized to unit sum.
    pub fn from_taps(powers: &[f64], rms_delay: f64, sample_time: f64) -> Result<Self> {
        if powers.is_empty() || powers.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidCondition("tap powers must be finite and nonnegative".into()));
        }
        let total: f64 = powers.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidCondition("tap powers sum to zero".into()));
        }
        Ok(Self {
            taps: powers.iter().map(|p| p / total).collect(),
            rms_delay,
            sample_time,
        })
    }

    pub fn single_tap(sample_time: f64) -> Self {
        Self {
            taps: vec![1.0],
            rms_delay: 0.0,
            sample_time,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn tap_count(&self) -> usize {
        self.taps.len()
    }

    pub fn rms_delay(&self) -> f64 {
        self.rms_delay
    }

    pub fn sample_time(&self) -> f64 {
        self.sample_time
    }
}

/// Exponential profile `exp(-l T_s / sigma_tau)` truncated 20 dB below the
/// first tap (boundary tap kept) and normalized.
pub fn exp_pdp(rms_delay: f64, sample_time: f64) -> Result<PowerDelayProfile> {
    if !(rms_delay > 0.0 && rms_delay.is_finite()) {
        return Err(Error::InvalidCondition(format!("rms delay must be positive, got {rms_delay}")));
    }
    let mut powers = Vec::new();
    loop {
        let p = (-(powers.len() as f64) * sample_time / rms_delay).exp();
        if p < TRUNCATION_FLOOR {
            break;
        }
        powers.push(p);
        if powers.len() > MAX_PDP_TAPS {
            return Err(Error::DelaySpreadTooLong {
                taps: powers.len(),
                limit: MAX_PDP_TAPS,
            });
        }
    }
    PowerDelayProfile::from_taps(&powers, rms_delay, sample_time)
}

pub fn doppler_freq(velocity: f64, cfg: &SystemConfig) -> f64 {
    velocity / cfg.light_speed() * cfg.carrier_hz
}

/// Clarke reference autocorrelation `J0(2 pi f_d dt)`.
pub fn reference_autocorr(doppler: f64, delta_t: f64) -> f64 {
    j0(TAU * doppler * delta_t)
}

pub fn kmh_to_mps(v: f64) -> f64 {
    v / 3.6
}

pub fn mps_to_kmh(v: f64) -> f64 {
    v * 3.6
}

/// Operating point: delay spread, mobility and noise level. All SI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelCondition {
    pub rms_delay: f64,
    pub velocity: f64,
    /// Noise variance relative to unit signal power; the SNR is `1 / noise_power`.
    pub noise_power: f64,
    pub doppler: f64,
}

impl ChannelCondition {
    pub fn new(rms_delay: f64, velocity: f64, noise_power: f64, cfg: &SystemConfig) -> Result<Self> {
        if !(rms_delay >= 0.0) {
            return Err(Error::InvalidCondition(format!("negative rms delay {rms_delay}")));
        }
        if !(velocity >= 0.0 && velocity.is_finite()) {
            return Err(Error::InvalidCondition(format!("velocity must be >= 0, got {velocity}")));
        }
        if !(noise_power > 0.0 && noise_power.is_finite()) {
            return Err(Error::InvalidCondition(format!("noise power must be > 0, got {noise_power}")));
        }
        Ok(Self {
            rms_delay,
            velocity,
            noise_power,
            doppler: doppler_freq(velocity, cfg),
        })
    }

    /// Same as [`ChannelCondition::new`] but with the SNR in dB.
    pub fn from_snr_db(rms_delay: f64, velocity: f64, snr_db: f64, cfg: &SystemConfig) -> Result<Self> {
        Self::new(rms_delay, velocity, snr_db_to_noise(snr_db), cfg)
    }

    /// Overrides the Doppler shift derived from the velocity.
    pub fn with_doppler(mut self, doppler: f64) -> Self {
        self.doppler = doppler;
        self
    }

    pub fn with_noise(mut self, noise_power: f64) -> Self {
        self.noise_power = noise_power;
        self
    }

    /// Exponential PDP of this condition; zero delay gives a single tap.
    pub fn pdp(&self, cfg: &SystemConfig) -> Result<PowerDelayProfile> {
        if self.rms_delay == 0.0 {
            Ok(PowerDelayProfile::single_tap(cfg.sample_time()))
        } else {
            exp_pdp(self.rms_delay, cfg.sample_time())
        }
    }
}

pub fn snr_db_to_noise(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Counter-based child generator: stream `index` of the ChaCha keystream
/// seeded by `base`. Children are independent of evaluation order.
pub fn child_rng(base: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index);
    rng
}

/// Derives a child seed, for nesting one seeded stage inside another.
pub fn child_seed(base: u64, index: u64) -> u64 {
    child_rng(base, index).gen()
}

#[derive(Debug, Clone)]
pub struct SosTap {
    /// `sqrt(p_l / M) exp(j phi_m)`
    pub amps: Vec<Complex64>,
    /// Doppler shift of each sinusoid in radians per sample.
    pub omegas: Vec<f64>,
}

impl SosTap {
    pub fn eval(&self, n: f64) -> Complex64 {
        self.amps
            .iter()
            .zip(&self.omegas)
            .map(|(c, w)| c * Complex64::from_polar(1.0, w * n))
            .sum()
    }
}

/// Parameters of one sum-of-sinusoids channel draw.
#[derive(Debug, Clone)]
pub struct SosChannel {
    taps: Vec<SosTap>,
    max_omega: f64,
}

impl SosChannel {
    pub fn draw(pdp: &PowerDelayProfile, doppler: f64, sinusoids: usize, rng: &mut impl Rng) -> Self {
        assert!(sinusoids > 0, "need at least one sinusoid per tap");
        let omega_d = TAU * doppler * pdp.sample_time();
        let ms = sinusoids as f64;
        let taps = pdp
            .taps()
            .iter()
            .map(|&p| {
                let theta = rng.gen::<f64>() * TAU;
                let scale = (p / ms).sqrt();
                let mut amps = Vec::with_capacity(sinusoids);
                let mut omegas = Vec::with_capacity(sinusoids);
                for m in 0..sinusoids {
                    let phi = rng.gen::<f64>() * TAU;
                    amps.push(Complex64::from_polar(scale, phi));
                    let alpha = (TAU * m as f64 + theta) / ms;
                    omegas.push(omega_d * alpha.cos());
                }
                SosTap { amps, omegas }
            })
            .collect();
        Self {
            taps,
            max_omega: omega_d.abs(),
        }
    }

    /// Time-invariant channel with deterministic gains `sqrt(p_l)`.
    pub fn unfaded(pdp: &PowerDelayProfile) -> Self {
        let taps = pdp
            .taps()
            .iter()
            .map(|&p| SosTap {
                amps: vec![Complex64::new(p.sqrt(), 0.0)],
                omegas: vec![0.0],
            })
            .collect();
        Self { taps, max_omega: 0.0 }
    }

    pub fn taps(&self) -> &[SosTap] {
        &self.taps
    }

    pub fn tap_count(&self) -> usize {
        self.taps.len()
    }

    /// Largest |w_m| over all sinusoids (rad/sample).
    pub fn max_omega(&self) -> f64 {
        self.max_omega
    }

    pub fn sample(&self, n: i64, l: usize) -> Complex64 {
        self.taps[l].eval(n as f64)
    }

    /// Samples `h(n, l)` for `n` in `[start, start + len)`.
    pub fn realize(&self, start: i64, len: usize) -> ChannelRealization {
        let taps = self.taps.len();
        let mut data = vec![Complex64::new(0.0, 0.0); taps * len];
        for (tap, out) in self.taps.iter().zip(data.chunks_mut(len.max(1))) {
            fill_tap(tap, start, out);
        }
        ChannelRealization {
            n_samples: len,
            tap_count: taps,
            origin: 0,
            data,
        }
    }
}

fn fill_tap(tap: &SosTap, start: i64, out: &mut [Complex64]) {
    let m = tap.amps.len();
    let (mut zr, mut zi) = (vec![0.0; m], vec![0.0; m]);
    let (wr, wi): (Vec<f64>, Vec<f64>) = tap.omegas.iter().map(|w| (w.cos(), w.sin())).unzip();
    for (block, chunk) in out.chunks_mut(REANCHOR_INTERVAL).enumerate() {
        let t0 = (start + (block * REANCHOR_INTERVAL) as i64) as f64;
        for i in 0..m {
            let z = tap.amps[i] * Complex64::from_polar(1.0, tap.omegas[i] * t0);
            zr[i] = z.re;
            zi[i] = z.im;
        }
        for h in chunk.iter_mut() {
            let (mut sr, mut si) = (0.0, 0.0);
            for i in 0..m {
                sr += zr[i];
                si += zi[i];
                let r = zr[i] * wr[i] - zi[i] * wi[i];
                zi[i] = zr[i] * wi[i] + zi[i] * wr[i];
                zr[i] = r;
            }
            *h = Complex64::new(sr, si);
        }
    }
}

/// Sampled tap matrix `h(n, l)`, stored tap-major.
///
/// `origin` is the absolute stream sample that row `n = 0` belongs to; it is
/// only meaningful to the link simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    n_samples: usize,
    tap_count: usize,
    origin: usize,
    data: Vec<Complex64>,
}

impl ChannelRealization {
    /// Builds a realization from tap-major samples (`taps[l][n]`).
    pub fn from_taps(taps: Vec<Vec<Complex64>>) -> Result<Self> {
        let n_samples = taps.first().map_or(0, Vec::len);
        if taps.is_empty() || n_samples == 0 || taps.iter().any(|t| t.len() != n_samples) {
            return Err(Error::Dimension("taps must be non-empty and of equal length".into()));
        }
        Ok(Self {
            n_samples,
            tap_count: taps.len(),
            origin: 0,
            data: taps.concat(),
        })
    }

    /// Time-invariant channel with the given tap gains.
    pub fn constant(gains: &[Complex64], n_samples: usize) -> Self {
        Self::from_taps(gains.iter().map(|&g| vec![g; n_samples]).collect()).expect("non-empty gains")
    }

    pub fn with_origin(mut self, origin: usize) -> Self {
        self.origin = origin;
        self
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn tap_count(&self) -> usize {
        self.tap_count
    }

    #[inline]
    pub fn h(&self, n: usize, l: usize) -> Complex64 {
        self.data[l * self.n_samples + n]
    }

    pub fn tap(&self, l: usize) -> &[Complex64] {
        &self.data[l * self.n_samples..(l + 1) * self.n_samples]
    }

    /// Rows `[start, start + len)` as a new realization.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_samples || len == 0 {
            return Err(Error::Dimension(format!(
                "window [{start}, {}) outside {} samples",
                start + len,
                self.n_samples
            )));
        }
        let taps = (0..self.tap_count)
            .map(|l| self.tap(l)[start..start + len].to_vec())
            .collect();
        Ok(Self::from_taps(taps)?.with_origin(self.origin + start))
    }
}

pub fn generate_realization(pdp: &PowerDelayProfile, doppler: f64, n_samples: usize, seed: u64) -> ChannelRealization {
    generate_realization_with(pdp, doppler, n_samples, seed, DEFAULT_SINUSOIDS)
}

pub fn generate_realization_with(
    pdp: &PowerDelayProfile,
    doppler: f64,
    n_samples: usize,
    seed: u64,
    sinusoids: usize,
) -> ChannelRealization {
    assert!(n_samples >= 1, "realization needs at least one sample");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SosChannel::draw(pdp, doppler, sinusoids, &mut rng).realize(0, n_samples)
}

/// First null of the Clarke autocorrelation, in seconds.
pub fn coherence_null(doppler: f64) -> f64 {
    2.404_825_557_695_773 / (2.0 * PI * doppler)
}
