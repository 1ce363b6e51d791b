use num_complex::Complex64;

use super::fast::isi_powers;
use super::{AccountingMode, SymbolPowers};
use crate::channel::SosChannel;
use crate::error::{Error, Result};
use crate::numerology::Numerology;

/// Beyond this phase excursion over the window the Taylor expansion loses
/// too many digits to cancellation; callers fall back to sampled taps.
pub(crate) const MAX_PHASE_SPAN: f64 = 3.0;

const TRUNCATION_TOL: f64 = 1e-17;

/// Evaluates symbol powers of sum-of-sinusoids channels for a fixed list of
/// numerologies without sampling every `h(n, l)`.
///
/// Over the window `n < T` (largest `N`) each tap is expanded as
/// `h(n) = sum_q a_q t^q` with `t = n / T`. Desired and ICI1 powers then
/// reduce to moment sums of `t`, and only the short leakage triangle of the
/// CP terms is evaluated pointwise.
#[derive(Debug, Clone)]
pub struct SeriesEvaluator {
    nums: Vec<(usize, usize)>,
    scale: usize,
    order: usize,
    /// Per distinct size: (N, mean of t^q, covariance of t^q and t^q', q,q' >= 1).
    moments: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

impl SeriesEvaluator {
    /// Prepares moment tables for `nums` at maximum Doppler shift
    /// `max_omega` (rad/sample). Returns `None` when the phase span over the
    /// longest window is too large for the expansion.
    pub fn new(nums: &[Numerology], max_omega: f64) -> Option<Self> {
        let scale = nums.iter().map(|m| m.idft_size).max()?;
        let span = max_omega.abs() * scale as f64;
        if span > MAX_PHASE_SPAN {
            return None;
        }
        // smallest Q with span^(Q+1) / (Q+1)! below tolerance
        let mut order = 0;
        let mut bound = span;
        while bound > TRUNCATION_TOL {
            order += 1;
            bound *= span / (order + 1) as f64;
        }
        let mut sizes: Vec<usize> = nums.iter().map(|m| m.idft_size).collect();
        sizes.sort_unstable();
        sizes.dedup();
        let q = order + 1;
        let moments = sizes
            .into_iter()
            .map(|n| {
                let mut sums = vec![0.0; 2 * order + 1];
                for s in 0..n {
                    let t = s as f64 / scale as f64;
                    let mut p = 1.0;
                    for v in sums.iter_mut() {
                        *v += p;
                        p *= t;
                    }
                }
                let mean: Vec<f64> = sums.iter().map(|v| v / n as f64).collect();
                let mut cov = vec![0.0; q * q];
                for a in 1..q {
                    for b in 1..q {
                        cov[a * q + b] = mean[a + b] - mean[a] * mean[b];
                    }
                }
                (n, mean, cov)
            })
            .collect();
        Some(Self {
            nums: nums.iter().map(|m| (m.idft_size, m.cp_len)).collect(),
            scale,
            order,
            moments,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Powers of `ch` for every numerology given at construction, in order.
    pub fn evaluate(&self, ch: &SosChannel, mode: AccountingMode) -> Result<Vec<SymbolPowers>> {
        let taps = ch.tap_count();
        if let Some(&(n, _)) = self.nums.iter().find(|&&(n, _)| taps > n) {
            return Err(Error::Dimension(format!("{taps} taps exceed the symbol length {n}")));
        }
        let q = self.order + 1;
        let scale = self.scale as f64;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); taps * q];
        let mut factorial = vec![1.0; q];
        for i in 1..q {
            factorial[i] = factorial[i - 1] * i as f64;
        }
        for (tap, a) in ch.taps().iter().zip(coeffs.chunks_mut(q)) {
            for (c, w) in tap.amps.iter().zip(&tap.omegas) {
                let x = w * scale;
                let mut p = *c;
                for v in a.iter_mut() {
                    *v += p;
                    p *= x;
                }
            }
            // a_q = (j^q / q!) sum_m c_m x_m^q
            for (i, v) in a.iter_mut().enumerate() {
                let jq = match i % 4 {
                    0 => Complex64::new(1.0, 0.0),
                    1 => Complex64::new(0.0, 1.0),
                    2 => Complex64::new(-1.0, 0.0),
                    _ => Complex64::new(0.0, -1.0),
                };
                *v *= jq / factorial[i];
            }
        }

        // Gram of the time-varying coefficients, summed over taps.
        let mut gram = vec![0.0; q * q];
        for a in coeffs.chunks(q) {
            for i in 1..q {
                for k in i..q {
                    let v = (a[i] * a[k].conj()).re;
                    gram[i * q + k] += v;
                }
            }
        }

        // Leakage triangle for the shortest CP that leaks.
        let g_min = self
            .nums
            .iter()
            .filter(|&&(_, g)| taps > g + 1)
            .map(|&(_, g)| g)
            .min();
        let triangle = g_min.map(|g| Triangle::build(&coeffs, q, taps, g, scale));

        let mut out = Vec::with_capacity(self.nums.len());
        for &(n, g) in &self.nums {
            let (_, mean, cov) = self.moments.iter().find(|(m, _, _)| *m == n).unwrap();
            let mut p_ave = 0.0;
            for a in coeffs.chunks(q) {
                let avg: Complex64 = a.iter().zip(mean).map(|(c, m)| c * m).sum();
                p_ave += avg.norm_sqr();
            }
            let mut p_ici1 = 0.0;
            for i in 1..q {
                p_ici1 += gram[i * q + i] * cov[i * q + i];
                for k in (i + 1)..q {
                    p_ici1 += 2.0 * gram[i * q + k] * cov[i * q + k];
                }
            }
            let p_isi_ici2 = match &triangle {
                Some(tri) if taps > g + 1 => isi_powers(n, g, taps, mode, |s, l| tri.get(s, l)),
                _ => 0.0,
            };
            out.push(SymbolPowers {
                p_ave,
                p_ici1: p_ici1.max(0.0),
                p_isi_ici2,
            });
        }
        Ok(out)
    }
}

/// `h(s, l)` for `l > g_min` and `s < l - g_min`.
struct Triangle {
    g: usize,
    offsets: Vec<usize>,
    values: Vec<Complex64>,
}

impl Triangle {
    fn build(coeffs: &[Complex64], q: usize, taps: usize, g: usize, scale: f64) -> Self {
        let mut offsets = vec![0; taps + 1];
        let mut values = Vec::new();
        for l in 0..taps {
            offsets[l] = values.len();
            if l > g {
                let a = &coeffs[l * q..(l + 1) * q];
                for s in 0..(l - g) {
                    let t = s as f64 / scale;
                    let v = a.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * t + c);
                    values.push(v);
                }
            }
        }
        offsets[taps] = values.len();
        Self { g, offsets, values }
    }

    #[inline]
    fn get(&self, s: usize, l: usize) -> Complex64 {
        debug_assert!(l > self.g && s < l - self.g);
        self.values[self.offsets[l] + s]
    }
}
