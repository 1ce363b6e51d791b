use num_complex::Complex64;

use super::matrices::check_dims;
use super::{AccountingMode, SymbolPowers};
use crate::channel::ChannelRealization;
use crate::error::Result;
use crate::numerology::Numerology;

/// Single-realization powers from the first `N` samples of `h`.
///
/// With `g_k(n) = sum_l h(n,l) e^{-j2pi kl/N}` the desired power is
/// `mean_k |mean_n g_k|^2` and the ICI1 row power is the variance of `g_k`
/// over `n`; Parseval over `k` turns both into per-tap sums. The CP terms
/// are handled by [`isi_powers`].
pub fn symbol_power_breakdown(h: &ChannelRealization, num: &Numerology, mode: AccountingMode) -> Result<SymbolPowers> {
    check_dims(h, num)?;
    let n = num.idft_size;
    let nf = n as f64;
    let mut p_ave = 0.0;
    let mut p_ici1 = 0.0;
    for l in 0..h.tap_count() {
        let tap = &h.tap(l)[..n];
        let mean = tap.iter().sum::<Complex64>() / nf;
        p_ave += mean.norm_sqr();
        p_ici1 += tap.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / nf;
    }
    let p_isi_ici2 = isi_powers(n, num.cp_len, h.tap_count(), mode, |s, l| h.h(s, l));
    Ok(SymbolPowers {
        p_ave,
        p_ici1,
        p_isi_ici2,
    })
}

/// Combined ISI + CP-induced ICI power, k-averaged.
///
/// Tap `l > G` leaks the previous symbol into samples `n < l - G`. Writing
/// the row-`k` entries as a transform of
/// `w_n(r) = h(n, r+G) [r > n] - h(n, r) [r > G+n]` (over the leaking set),
/// the all-`m` row power is `(1/N) sum_n sum_r |w_n(r)|^2` and its `m = k`
/// entry averages to `sum_r |mean_n w_n(r)|^2`.
pub(crate) fn isi_powers(
    n: usize,
    g: usize,
    taps: usize,
    mode: AccountingMode,
    h: impl Fn(usize, usize) -> Complex64,
) -> f64 {
    if taps <= g + 1 {
        return 0.0;
    }
    let nf = n as f64;
    let last = taps - 1;
    match mode {
        AccountingMode::Full => {
            let mut acc = 0.0;
            for l in (g + 1)..=last {
                for s in 0..(l - g) {
                    acc += h(s, l).norm_sqr();
                }
            }
            2.0 * acc / nf
        }
        AccountingMode::Paper => {
            // w_n(r) is supported on r in [s+1, last]; collect the mean over n
            // in `col` as we go.
            let mut col = vec![Complex64::new(0.0, 0.0); taps];
            let mut row_power = 0.0;
            for s in 0..(last - g) {
                for r in (s + 1)..=last {
                    let mut w = Complex64::new(0.0, 0.0);
                    if r + g <= last {
                        w += h(s, r + g);
                    }
                    if r > g + s {
                        w -= h(s, r);
                    }
                    row_power += w.norm_sqr();
                    col[r] += w;
                }
            }
            let diag: f64 = col.iter().map(|c| (c / nf).norm_sqr()).sum();
            (row_power / nf - diag).max(0.0)
        }
    }
}
