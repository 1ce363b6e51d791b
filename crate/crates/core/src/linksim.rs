//! Sample-level OFDM link: modulation, linear convolution through a
//! time-varying channel and DFT demodulation.
//!
//! Stream sample `t = 0` is the first CP sample of symbol 0; symbol `i`
//! occupies `[i (N + G), (i + 1)(N + G))`. A [`ChannelRealization`] row `r`
//! holds the taps at stream sample `origin + r`, so a realization only needs
//! to cover the symbols that are actually measured.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::channel::{child_rng, ChannelCondition, ChannelRealization, SosChannel, DEFAULT_SINUSOIDS};
use crate::error::{Error, Result};
use crate::interference::{compute_matrices_with_fault, InterferenceMatrices};
use crate::numerology::{Numerology, SystemConfig};

const DATA_STREAM_SALT: u64 = 0x5eed_da7a;
const NOISE_STREAM_SALT: u64 = 0x0015_e000;

/// Forward/inverse DFT pair for one symbol length.
#[derive(Clone)]
pub struct Modem {
    num: Numerology,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Modem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Modem").field("num", &self.num).finish()
    }
}

impl Modem {
    pub fn new(num: &Numerology) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            num: *num,
            fwd: planner.plan_fft_forward(num.idft_size),
            inv: planner.plan_fft_inverse(num.idft_size),
        }
    }

    pub fn numerology(&self) -> &Numerology {
        &self.num
    }

    /// `x(n) = (1/N) sum_k X(k) exp(j 2 pi k n / N)` for `n` in `[-G, N)`.
    pub fn modulate(&self, freq: &[Complex64]) -> Result<Vec<Complex64>> {
        let (n, g) = (self.num.idft_size, self.num.cp_len);
        if freq.len() != n {
            return Err(Error::Dimension(format!("{} subcarrier values for N = {n}", freq.len())));
        }
        let mut body = freq.to_vec();
        self.inv.process(&mut body);
        let scale = 1.0 / n as f64;
        body.iter_mut().for_each(|v| *v *= scale);
        let mut out = Vec::with_capacity(n + g);
        out.extend_from_slice(&body[n - g..]);
        out.extend_from_slice(&body);
        Ok(out)
    }

    /// Drops the CP and applies the unnormalized DFT.
    pub fn demodulate(&self, samples: &[Complex64]) -> Result<Vec<Complex64>> {
        let (n, g) = (self.num.idft_size, self.num.cp_len);
        if samples.len() != n + g {
            return Err(Error::Dimension(format!("{} samples for a symbol of {}", samples.len(), n + g)));
        }
        let mut body = samples[g..].to_vec();
        self.fwd.process(&mut body);
        Ok(body)
    }
}

pub fn modulate(freq: &[Complex64], num: &Numerology) -> Result<Vec<Complex64>> {
    Modem::new(num).modulate(freq)
}

/// Unit-power QPSK points.
pub fn qpsk(count: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    (0..count)
        .map(|_| {
            let re = if rng.gen::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            let im = if rng.gen::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            Complex64::new(re, im)
        })
        .collect()
}

/// Consecutive OFDM symbols and their concatenated time samples.
#[derive(Debug, Clone)]
pub struct OfdmSymbolStream {
    num: Numerology,
    freq: Vec<Vec<Complex64>>,
    time: Vec<Complex64>,
}

impl OfdmSymbolStream {
    pub fn new(num: &Numerology, freq_symbols: Vec<Vec<Complex64>>) -> Result<Self> {
        Self::with_modem(&Modem::new(num), freq_symbols)
    }

    pub fn with_modem(modem: &Modem, freq_symbols: Vec<Vec<Complex64>>) -> Result<Self> {
        if freq_symbols.len() < 2 {
            return Err(Error::Dimension(format!(
                "a stream needs at least 2 symbols, got {}",
                freq_symbols.len()
            )));
        }
        let mut time = Vec::with_capacity(freq_symbols.len() * modem.num.symbol_len());
        for x in &freq_symbols {
            time.extend(modem.modulate(x)?);
        }
        Ok(Self {
            num: modem.num,
            freq: freq_symbols,
            time,
        })
    }

    /// Random QPSK stream.
    pub fn qpsk(num: &Numerology, symbols: usize, rng: &mut impl Rng) -> Result<Self> {
        let freq = (0..symbols).map(|_| qpsk(num.idft_size, rng)).collect();
        Self::new(num, freq)
    }

    pub fn numerology(&self) -> &Numerology {
        &self.num
    }

    pub fn symbol_count(&self) -> usize {
        self.freq.len()
    }

    pub fn freq_symbol(&self, i: usize) -> &[Complex64] {
        &self.freq[i]
    }

    pub fn time_samples(&self) -> &[Complex64] {
        &self.time
    }

    /// Time samples of symbol `i`, CP first.
    pub fn symbol_samples(&self, i: usize) -> &[Complex64] {
        let len = self.num.symbol_len();
        &self.time[i * len..(i + 1) * len]
    }

    /// Stream sample at which symbol `i` starts (its first CP sample).
    pub fn symbol_start(&self, i: usize) -> usize {
        i * self.num.symbol_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSymbol {
    /// Position of the symbol in the stream.
    pub index: usize,
    /// Received samples, CP included.
    pub time: Vec<Complex64>,
    /// DFT output with noise added.
    pub freq: Vec<Complex64>,
    pub noise: Vec<Complex64>,
}

/// Passes `stream` through `h` by linear convolution and demodulates every
/// symbol after the first whose samples `h` covers.
///
/// Samples before the stream start are zero. Noise `W(k) ~ CN(0, sigma0_sq)`
/// is added after the DFT.
pub fn transmit_stream(
    stream: &OfdmSymbolStream,
    h: &ChannelRealization,
    sigma0_sq: f64,
    seed: u64,
) -> Result<Vec<ReceivedSymbol>> {
    transmit_with(&Modem::new(&stream.num), stream, h, sigma0_sq, seed)
}

fn transmit_with(
    modem: &Modem,
    stream: &OfdmSymbolStream,
    h: &ChannelRealization,
    sigma0_sq: f64,
    seed: u64,
) -> Result<Vec<ReceivedSymbol>> {
    if !(sigma0_sq >= 0.0 && sigma0_sq.is_finite()) {
        return Err(Error::InvalidCondition(format!("noise power {sigma0_sq}")));
    }
    let len = stream.num.symbol_len();
    let (lo, hi) = (h.origin(), h.origin() + h.n_samples());
    let x = stream.time_samples();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_STREAM_SALT);
    let std = (sigma0_sq / 2.0).sqrt();
    let mut out = Vec::new();
    for i in 1..stream.symbol_count() {
        let start = stream.symbol_start(i);
        if start < lo || start + len > hi {
            continue;
        }
        let time: Vec<Complex64> = (start..start + len)
            .map(|t| {
                let row = t - lo;
                let taps = h.tap_count().min(t + 1);
                (0..taps).map(|l| h.h(row, l) * x[t - l]).sum()
            })
            .collect();
        let mut freq = modem.demodulate(&time)?;
        let noise: Vec<Complex64> = (0..freq.len())
            .map(|_| {
                if sigma0_sq > 0.0 {
                    let re: f64 = noise_rng.sample(StandardNormal);
                    let im: f64 = noise_rng.sample(StandardNormal);
                    Complex64::new(re * std, im * std)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        freq.iter_mut().zip(&noise).for_each(|(y, w)| *y += w);
        out.push(ReceivedSymbol { index: i, time, freq, noise });
    }
    if out.is_empty() {
        return Err(Error::Dimension(
            "channel realization covers no symbol after the first".into(),
        ));
    }
    Ok(out)
}

/// `H_ave(k) = (1/N) sum_n sum_l h(n, l) exp(-j 2 pi k l / N)` over the first
/// `N` rows of `h`.
pub fn average_response(h: &ChannelRealization, modem: &Modem) -> Vec<Complex64> {
    let n = modem.num.idft_size;
    let mut mean_taps = vec![Complex64::new(0.0, 0.0); n];
    for (l, slot) in mean_taps.iter_mut().enumerate().take(h.tap_count()) {
        *slot = h.tap(l)[..n].iter().sum::<Complex64>() / n as f64;
    }
    modem.fwd.process(&mut mean_taps);
    mean_taps
}

/// Link-level powers measured over many symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalPowers {
    pub p_u: f64,
    pub p_i: f64,
    /// Mean `|Y(k)|^2` without noise.
    pub p_rx: f64,
    pub std_err_u: f64,
    pub std_err_i: f64,
    /// Standard error of the per-symbol residual `p_rx - p_u - p_i`.
    pub std_err_residual: f64,
    pub n_symbols: usize,
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo link simulator.
///
/// Measured symbol `r` is the second symbol of a two-symbol stream whose
/// channel is drawn from child stream `r` of the seed, with time zero at the
/// start of its useful part. This matches the draws of
/// [`crate::interference::PowerEstimator`] for the same seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSimulator {
    pub system: SystemConfig,
    pub sinusoids: usize,
}

impl LinkSimulator {
    pub fn new(system: SystemConfig) -> Self {
        Self {
            system,
            sinusoids: DEFAULT_SINUSOIDS,
        }
    }

    pub fn empirical_sinr(
        &self,
        cond: &ChannelCondition,
        num: &Numerology,
        n_symbols: usize,
        seed: u64,
    ) -> Result<EmpiricalPowers> {
        if n_symbols < 2 {
            return Err(Error::Config(format!("need at least 2 symbols, got {n_symbols}")));
        }
        let pdp = cond.pdp(&self.system)?;
        let (n, g) = (num.idft_size, num.cp_len);
        if pdp.tap_count() > n {
            return Err(Error::DelaySpreadTooLong {
                taps: pdp.tap_count(),
                limit: n,
            });
        }
        let modem = Modem::new(num);
        let mut pu = Vec::with_capacity(n_symbols);
        let mut pi = Vec::with_capacity(n_symbols);
        let mut resid = Vec::with_capacity(n_symbols);
        for r in 0..n_symbols as u64 {
            let mut rng = child_rng(seed, r);
            let ch = SosChannel::draw(&pdp, cond.doppler, self.sinusoids, &mut rng);
            // rows cover the CP and useful part of the measured symbol
            let h = ch.realize(-(g as i64), n + g).with_origin(n + g);
            let mut data_rng = child_rng(seed ^ DATA_STREAM_SALT, r);
            let stream = OfdmSymbolStream::with_modem(
                &modem,
                vec![qpsk(n, &mut data_rng), qpsk(n, &mut data_rng)],
            )?;
            let rx = transmit_with(&modem, &stream, &h, 0.0, 0)?;
            let h_ave = average_response(&h.window(g, n)?, &modem);
            let x = stream.freq_symbol(1);
            let y = &rx[0].freq;
            let nf = n as f64;
            let u = h_ave.iter().map(|v| v.norm_sqr()).sum::<f64>() / nf;
            let i = (0..n).map(|k| (y[k] - h_ave[k] * x[k]).norm_sqr()).sum::<f64>() / nf;
            let p = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / nf;
            pu.push(u);
            pi.push(i);
            resid.push(p - u - i);
        }
        let (p_u, std_err_u) = mean_and_se(&pu);
        let (p_i, std_err_i) = mean_and_se(&pi);
        let (res, std_err_residual) = mean_and_se(&resid);
        Ok(EmpiricalPowers {
            p_u,
            p_i,
            p_rx: p_u + p_i + res,
            std_err_u,
            std_err_i,
            std_err_residual,
            n_symbols,
        })
    }
}

/// Transfer matrices of the linear-convolution link for one symbol, found by
/// sending unit impulses on each subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbedTransfer {
    pub size: usize,
    /// `Y_i = T_cur X_i` when the previous symbol is silent, row-major.
    pub current: Vec<Complex64>,
    /// `Y_i = T_prev X_{i-1}` when the current symbol is silent, row-major.
    pub previous: Vec<Complex64>,
}

/// Probes the link for the symbol whose useful part starts at row `G` of `h`
/// (`h` must have `N + G` rows covering its CP and useful part).
pub fn probe_transfer(h: &ChannelRealization, num: &Numerology) -> Result<ProbedTransfer> {
    let (n, g) = (num.idft_size, num.cp_len);
    if h.n_samples() != n + g {
        return Err(Error::Dimension(format!("probe needs {} channel rows, got {}", n + g, h.n_samples())));
    }
    let modem = Modem::new(num);
    let h = h.clone().with_origin(n + g);
    let silent = vec![Complex64::new(0.0, 0.0); n];
    let mut current = vec![Complex64::new(0.0, 0.0); n * n];
    let mut previous = vec![Complex64::new(0.0, 0.0); n * n];
    for m in 0..n {
        let mut e = silent.clone();
        e[m] = Complex64::new(1.0, 0.0);
        for (first, target) in [(false, &mut current), (true, &mut previous)] {
            let symbols = if first { vec![e.clone(), silent.clone()] } else { vec![silent.clone(), e.clone()] };
            let stream = OfdmSymbolStream::with_modem(&modem, symbols)?;
            let y = &transmit_with(&modem, &stream, &h, 0.0, 0)?[0].freq;
            for k in 0..n {
                target[k * n + m] = y[k];
            }
        }
    }
    Ok(ProbedTransfer {
        size: n,
        current,
        previous,
    })
}

/// Largest deviation between the probed link and the analytic matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixCheck {
    pub isi_diag: f64,
    pub current_diag: f64,
    /// Relative Frobenius-norm mismatch of the previous-symbol matrix.
    pub isi_norm: f64,
    /// Relative Frobenius-norm mismatch of the current-symbol matrix.
    pub current_norm: f64,
}

impl MatrixCheck {
    pub fn worst(&self) -> f64 {
        self.isi_diag.max(self.current_diag).max(self.isi_norm).max(self.current_norm)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares [`probe_transfer`] with the analytic matrices of the same symbol.
///
/// The analytic model carries the delay phase on the output subcarrier and
/// the link on the input subcarrier, so entries are only comparable on the
/// diagonal; the Frobenius norms agree exactly.
pub fn check_matrices(h: &ChannelRealization, num: &Numerology) -> Result<MatrixCheck> {
    check_matrices_inner(h, num, false)
}

pub(crate) fn check_matrices_inner(h: &ChannelRealization, num: &Numerology, fault: bool) -> Result<MatrixCheck> {
    let n = num.idft_size;
    let probed = probe_transfer(h, num)?;
    let body = h.window(num.cp_len, n)?;
    let m: InterferenceMatrices = compute_matrices_with_fault(&body, num, fault)?;
    let mut isi_diag = 0.0f64;
    let mut current_diag = 0.0f64;
    let scale = m.h_ave.iter().map(|v| v.norm()).fold(1e-300, f64::max);
    let mut cur = vec![Complex64::new(0.0, 0.0); n * n];
    for k in 0..n {
        for c in 0..n {
            let i = k * n + c;
            cur[i] = m.h_ici1[i] + m.h_ici2[i] + if k == c { m.h_ave[k] } else { Complex64::new(0.0, 0.0) };
        }
        let i = k * n + k;
        isi_diag = isi_diag.max((probed.previous[i] - m.h_isi[i]).norm() / scale);
        current_diag = current_diag.max((probed.current[i] - cur[i]).norm() / scale);
    }
    let fro = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(MatrixCheck {
        isi_diag,
        current_diag,
        isi_norm: rel(fro(&probed.previous), fro(&m.h_isi)),
        current_norm: rel(fro(&probed.current), fro(&cur)),
    })
}
