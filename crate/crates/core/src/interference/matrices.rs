use num_complex::Complex64;

use super::{AccountingMode, SymbolPowers};
use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::numerology::Numerology;

/// `N x N` channel-effect matrices of one symbol, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceMatrices {
    pub size: usize,
    /// Diagonal of the desired-signal matrix.
    pub h_ave: Vec<Complex64>,
    pub h_ici1: Vec<Complex64>,
    pub h_isi: Vec<Complex64>,
    pub h_ici2: Vec<Complex64>,
}

impl InterferenceMatrices {
    #[inline]
    pub fn at(m: &[Complex64], size: usize, k: usize, col: usize) -> Complex64 {
        m[k * size + col]
    }
}

pub(crate) fn check_dims(h: &ChannelRealization, num: &Numerology) -> Result<()> {
    if h.n_samples() < num.idft_size {
        return Err(Error::Dimension(format!(
            "realization has {} samples, symbol needs {}",
            h.n_samples(),
            num.idft_size
        )));
    }
    if h.tap_count() > num.idft_size {
        return Err(Error::Dimension(format!(
            "{} taps exceed the symbol length {}",
            h.tap_count(),
            num.idft_size
        )));
    }
    Ok(())
}

/// Evaluates the four matrices from their defining double sums.
///
/// The previous-symbol leakage for tap `l` covers samples `n <= l - G - 1`:
/// sample `n - l` belongs to the previous symbol exactly when `n - l < -G`.
pub fn compute_matrices(h: &ChannelRealization, num: &Numerology) -> Result<InterferenceMatrices> {
    compute_matrices_with_fault(h, num, false)
}

/// `negate_isi_phase` flips the sign of the delay phase in the ISI matrix.
/// It only exists so the validation harness can prove it catches the fault.
pub(crate) fn compute_matrices_with_fault(
    h: &ChannelRealization,
    num: &Numerology,
    negate_isi_phase: bool,
) -> Result<InterferenceMatrices> {
    check_dims(h, num)?;
    let n = num.idft_size;
    let g = num.cp_len;
    let taps = h.tap_count();
    let inv = 1.0 / n as f64;
    // twiddle[q] = exp(-j 2 pi q / N)
    let twiddle: Vec<Complex64> = (0..n)
        .map(|q| Complex64::from_polar(1.0, -std::f64::consts::TAU * q as f64 / n as f64))
        .collect();
    let tw = |q: i64| twiddle[q.rem_euclid(n as i64) as usize];

    let mut h_ave = vec![Complex64::new(0.0, 0.0); n];
    let mut h_ici1 = vec![Complex64::new(0.0, 0.0); n * n];
    let mut h_isi = vec![Complex64::new(0.0, 0.0); n * n];
    let mut h_ici2 = vec![Complex64::new(0.0, 0.0); n * n];

    for k in 0..n {
        for m in 0..n {
            let d = m as i64 - k as i64;
            let mut full = Complex64::new(0.0, 0.0);
            for s in 0..n {
                let rot = tw(-(s as i64) * d);
                for l in 0..taps {
                    full += h.h(s, l) * tw((k * l) as i64) * rot;
                }
            }
            if k == m {
                h_ave[k] = full * inv;
            } else {
                h_ici1[k * n + m] = full * inv;
            }

            let mut isi = Complex64::new(0.0, 0.0);
            let mut ici2 = Complex64::new(0.0, 0.0);
            for l in (g + 1)..taps {
                let isi_phase = if negate_isi_phase {
                    tw(-((k * (l - g)) as i64))
                } else {
                    tw((k * (l - g)) as i64)
                };
                for s in 0..(l - g) {
                    let rot = tw(-(s as i64) * d);
                    isi += h.h(s, l) * isi_phase * rot;
                    ici2 += h.h(s, l) * tw((k * l) as i64) * rot;
                }
            }
            h_isi[k * n + m] = isi * inv;
            h_ici2[k * n + m] = -ici2 * inv;
        }
    }
    Ok(InterferenceMatrices {
        size: n,
        h_ave,
        h_ici1,
        h_isi,
        h_ici2,
    })
}

/// k-averaged powers read off the matrices.
pub fn powers_from_matrices(m: &InterferenceMatrices, mode: AccountingMode) -> SymbolPowers {
    let n = m.size;
    let nf = n as f64;
    let p_ave = m.h_ave.iter().map(|v| v.norm_sqr()).sum::<f64>() / nf;
    let p_ici1 = m.h_ici1.iter().map(|v| v.norm_sqr()).sum::<f64>() / nf;
    let p_isi_ici2 = match mode {
        AccountingMode::Paper => {
            let mut acc = 0.0;
            for k in 0..n {
                for c in 0..n {
                    if c != k {
                        acc += (m.h_isi[k * n + c] + m.h_ici2[k * n + c]).norm_sqr();
                    }
                }
            }
            acc / nf
        }
        AccountingMode::Full => {
            m.h_isi
                .iter()
                .chain(&m.h_ici2)
                .map(|v| v.norm_sqr())
                .sum::<f64>()
                / nf
        }
    };
    SymbolPowers {
        p_ave,
        p_ici1,
        p_isi_ici2,
    }
}
