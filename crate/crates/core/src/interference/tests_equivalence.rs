//! Cross-checks between the definitional matrices, the sampled fast path and
//! the series evaluator.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::channel::{child_rng, exp_pdp, ChannelCondition, ChannelRealization, PowerDelayProfile, SosChannel};
use crate::numerology::{derive_numerology, CpRatio, Numerology, SystemConfig};

const TS: f64 = 2e-7;

fn num(n: usize, g: usize) -> Numerology {
    let mut m = derive_numerology(n, CpRatio::new(g as u32, n as u32).unwrap(), &SystemConfig::standard()).unwrap();
    m.cp_len = g;
    m
}

fn random_h(n: usize, taps: usize, seed: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taps = (0..taps)
        .map(|_| (0..n).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect())
        .collect();
    ChannelRealization::from_taps(taps).unwrap()
}

/// Literal transcription of the defining sums, one exponential per term.
fn naive(h: &ChannelRealization, n: usize, g: usize) -> [Vec<Complex64>; 4] {
    let e = |x: f64| Complex64::from_polar(1.0, std::f64::consts::TAU * x / n as f64);
    let nf = n as f64;
    let taps = h.tap_count();
    let mut ave = vec![Complex64::default(); n * n];
    let mut ici1 = vec![Complex64::default(); n * n];
    let mut isi = vec![Complex64::default(); n * n];
    let mut ici2 = vec![Complex64::default(); n * n];
    for k in 0..n {
        for m in 0..n {
            let (kf, mf) = (k as f64, m as f64);
            let mut s = Complex64::default();
            for t in 0..n {
                for l in 0..taps {
                    s += h.h(t, l) * e(-kf * l as f64) * e(t as f64 * (mf - kf));
                }
            }
            if k == m {
                ave[k * n + m] = s / nf;
            } else {
                ici1[k * n + m] = s / nf;
            }
            let mut a = Complex64::default();
            let mut b = Complex64::default();
            for l in g..taps {
                // previous-symbol samples: n - l < -G
                for t in 0..n {
                    if (t as i64) - (l as i64) < -(g as i64) {
                        a += h.h(t, l) * e(-kf * (l - g) as f64) * e(t as f64 * (mf - kf));
                        b += h.h(t, l) * e(-kf * l as f64) * e(t as f64 * (mf - kf));
                    }
                }
            }
            isi[k * n + m] = a / nf;
            ici2[k * n + m] = -b / nf;
        }
    }
    [ave, ici1, isi, ici2]
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() < 1e-15
}

#[test]
fn matrices_match_naive_sums() {
    let h = random_h(8, 3, 1);
    let nm = num(8, 1);
    let m = compute_matrices(&h, &nm).unwrap();
    let [ave, ici1, isi, ici2] = naive(&h, 8, 1);
    for k in 0..8 {
        assert!((m.h_ave[k] - ave[k * 8 + k]).norm() <= 1e-12);
        assert_eq!(m.h_ici1[k * 8 + k], Complex64::default());
        for c in 0..8 {
            let i = k * 8 + c;
            assert!((m.h_ici1[i] - ici1[i]).norm() <= 1e-12);
            assert!((m.h_isi[i] - isi[i]).norm() <= 1e-12);
            assert!((m.h_ici2[i] - ici2[i]).norm() <= 1e-12);
        }
    }
    assert!(m.h_isi.iter().any(|v| v.norm() > 1e-3));
}

#[test]
fn single_static_tap_collapses() {
    let g0 = Complex64::new(0.3, -0.8);
    let h = ChannelRealization::constant(&[g0], 16);
    let m = compute_matrices(&h, &num(16, 2)).unwrap();
    assert!(m.h_ave.iter().all(|v| (v - g0).norm() < 1e-14));
    for v in m.h_ici1.iter().chain(&m.h_isi).chain(&m.h_ici2) {
        assert!(v.norm() < 1e-14);
    }
}

#[test]
fn static_channel_with_sufficient_cp_has_no_leakage() {
    let pdp = exp_pdp(0.6e-6, TS).unwrap();
    let h = crate::channel::generate_realization(&pdp, 0.0, 32, 4);
    let g = pdp.tap_count();
    let m = compute_matrices(&h, &num(32, g)).unwrap();
    assert!(m.h_ici1.iter().all(|v| v.norm() < 1e-13));
    assert!(m.h_isi.iter().chain(&m.h_ici2).all(|v| *v == Complex64::default()));
    for mode in [AccountingMode::Paper, AccountingMode::Full] {
        let p = symbol_power_breakdown(&h, &num(32, g), mode).unwrap();
        assert_eq!(p.p_isi_ici2, 0.0);
        assert!(p.p_ici1 < 1e-28);
        let expect: f64 = (0..g).map(|l| h.h(0, l).norm_sqr()).sum();
        assert!(rel_close(p.p_ave, expect, 1e-12));
    }
}

#[test]
fn fast_path_matches_matrices_example() {
    let pdp = exp_pdp(0.5e-6, TS).unwrap();
    let pdp = PowerDelayProfile::from_taps(&pdp.taps()[..12.min(pdp.tap_count())], 0.5e-6, TS).unwrap();
    let mut rng = child_rng(77, 0);
    let ch = SosChannel::draw(&pdp, 900.0, 64, &mut rng);
    let h = ch.realize(0, 64);
    let nm = num(64, 4);
    let mats = compute_matrices(&h, &nm).unwrap();
    for mode in [AccountingMode::Paper, AccountingMode::Full] {
        let a = powers_from_matrices(&mats, mode);
        let b = symbol_power_breakdown(&h, &nm, mode).unwrap();
        assert!(rel_close(a.p_ave, b.p_ave, 1e-10));
        assert!(rel_close(a.p_ici1, b.p_ici1, 1e-10));
        assert!(rel_close(a.p_isi_ici2, b.p_isi_ici2, 1e-10));
    }
}

#[test]
fn single_tap_parseval_identity() {
    let pdp = PowerDelayProfile::single_tap(TS);
    let h = crate::channel::generate_realization(&pdp, 700.0, 128, 9);
    let p = symbol_power_breakdown(&h, &num(128, 8), AccountingMode::Paper).unwrap();
    let direct = h.tap(0).iter().map(|v| v.norm_sqr()).sum::<f64>() / 128.0;
    assert!(rel_close(p.p_ave + p.p_ici1, direct, 1e-10));
}

#[test]
fn dimension_errors() {
    let h = random_h(8, 3, 2);
    assert!(compute_matrices(&h, &num(16, 2)).is_err());
    let h = random_h(8, 9, 2);
    assert!(symbol_power_breakdown(&h, &num(8, 1), AccountingMode::Full).is_err());
}

#[test]
fn modes_agree_without_leakage() {
    let h = random_h(32, 6, 5);
    let a = symbol_power_breakdown(&h, &num(32, 5), AccountingMode::Paper).unwrap();
    let b = symbol_power_breakdown(&h, &num(32, 5), AccountingMode::Full).unwrap();
    assert_eq!(a, b);
}

#[test]
fn series_matches_sampled_candidate_set() {
    let cfg = SystemConfig::standard();
    let set = crate::numerology::default_candidate_set(&cfg);
    for &(sigma, v_kmh) in &[(6e-6, 250.0), (10e-6, 500.0), (0.2e-6, 1.0), (3e-6, 0.0)] {
        let cond = ChannelCondition::new(sigma, v_kmh / 3.6, 0.01, &cfg).unwrap();
        let pdp = cond.pdp(&cfg).unwrap();
        let omega = std::f64::consts::TAU * cond.doppler * TS;
        let ev = SeriesEvaluator::new(set.members(), omega).unwrap();
        let mut rng = child_rng(13, 2);
        let ch = SosChannel::draw(&pdp, cond.doppler, 64, &mut rng);
        let h = ch.realize(0, 960);
        for mode in [AccountingMode::Paper, AccountingMode::Full] {
            let fast = ev.evaluate(&ch, mode).unwrap();
            for (m, f) in set.iter().zip(&fast) {
                let s = symbol_power_breakdown(&h, m, mode).unwrap();
                assert!(rel_close(s.p_ave, f.p_ave, 1e-10), "{sigma} {v_kmh} {mode} {:?} {:?}", s, f);
                assert!(rel_close(s.p_ici1, f.p_ici1, 1e-9), "{sigma} {v_kmh} {mode} {:?} {:?}", s, f);
                assert!(rel_close(s.p_isi_ici2, f.p_isi_ici2, 1e-10), "{sigma} {v_kmh} {mode}");
            }
        }
    }
}

#[test]
fn estimator_falls_back_for_fast_fading() {
    let cfg = SystemConfig::standard();
    let nm = num(64, 4);
    // 2 pi f_d T_s 64 > 3 rad
    let cond = ChannelCondition::new(0.4e-6, 0.0, 0.1, &cfg).unwrap().with_doppler(60_000.0);
    assert!(SeriesEvaluator::new(&[nm], std::f64::consts::TAU * cond.doppler * TS).is_none());
    let est = PowerEstimator::new(cfg);
    let per = est.realization_powers(&cond, &[nm], 3, 21, AccountingMode::Full).unwrap();
    let pdp = cond.pdp(&cfg).unwrap();
    let mut rng = child_rng(21, 1);
    let h = SosChannel::draw(&pdp, cond.doppler, 64, &mut rng).realize(0, 64);
    let direct = symbol_power_breakdown(&h, &nm, AccountingMode::Full).unwrap();
    assert_eq!(per[1][0], direct);
}

#[test]
fn estimates_for_static_links() {
    let cfg = SystemConfig::standard();
    let set = crate::numerology::default_candidate_set(&cfg);
    let unfaded = PowerEstimator::new(cfg).with_fading(Fading::Static);
    let single = ChannelCondition::new(0.0, 0.0, 0.1, &cfg).unwrap();
    for m in set.iter() {
        let pb = unfaded.estimate_powers(&single, m, 4, 1, AccountingMode::Paper).unwrap();
        assert!((pb.p_ave - 1.0).abs() <= 1e-12);
        assert!(pb.total_interference <= 1e-12);
    }
    let spread = ChannelCondition::new(1e-6, 0.0, 0.1, &cfg).unwrap();
    let pb = unfaded.estimate_powers(&spread, set.get(1).unwrap(), 2, 1, AccountingMode::Paper).unwrap();
    assert!((pb.p_ave - 1.0).abs() <= 1e-12 && pb.total_interference <= 1e-12);

    // Rayleigh draws: interference still exactly zero, desired power unbiased.
    let est = PowerEstimator::new(cfg);
    let pb = est.estimate_powers(&spread, set.get(1).unwrap(), 400, 3, AccountingMode::Paper).unwrap();
    assert!(pb.total_interference <= 1e-12);
    assert!((pb.p_ave - 1.0).abs() <= 3.0 * pb.std_err_ave, "{pb:?}");
}

#[test]
fn conservation_with_sufficient_cp() {
    let cfg = SystemConfig::standard();
    let est = PowerEstimator::new(cfg);
    let cond = ChannelCondition::new(0.5e-6, 250.0 / 3.6, 0.1, &cfg).unwrap();
    let nm = num(64, 16);
    let per = est.realization_powers(&cond, &[nm], 1000, 8, AccountingMode::Paper).unwrap();
    let vals: Vec<f64> = per.iter().map(|r| r[0].p_ave + r[0].p_ici1).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!((mean - 1.0).abs() <= 3.0 * se, "mean={mean} se={se}");
}

#[test]
fn ici_grows_with_doppler() {
    let cfg = SystemConfig::standard();
    let est = PowerEstimator::new(cfg);
    let nm = num(64, 16);
    let mut prev: Option<PowerBreakdown> = None;
    for fd in [0.0, 100.0, 500.0, 1000.0] {
        let cond = ChannelCondition::new(0.5e-6, 0.0, 0.1, &cfg).unwrap().with_doppler(fd);
        let pb = est.estimate_powers(&cond, &nm, 500, 31, AccountingMode::Paper).unwrap();
        let se_ici = pb.std_err;
        if let Some(p) = prev {
            assert!(pb.p_ici1 + 3.0 * (se_ici + p.std_err) >= p.p_ici1, "fd={fd}");
        }
        prev = Some(pb);
    }
}

/// Expected ICI1 power of a Clarke channel: 1 - (1/N^2) sum_{n,n'} J0(w (n - n')).
#[test]
fn ici_matches_clarke_expectation() {
    let cfg = SystemConfig::standard();
    let est = PowerEstimator::new(cfg);
    let set = crate::numerology::default_candidate_set(&cfg);
    let cond = ChannelCondition::new(1e-6, 500.0 / 3.6, 0.1, &cfg).unwrap();
    let pbs = est.estimate_set(&cond, set.members(), 600, 17, AccountingMode::Paper).unwrap();
    for (m, pb) in set.iter().zip(&pbs) {
        let n = m.idft_size;
        let w = std::f64::consts::TAU * cond.doppler * TS;
        let mut acc = 0.0;
        for d in -(n as i64 - 1)..(n as i64) {
            acc += (n as i64 - d.abs()) as f64 * crate::bessel::j0(w * d as f64);
        }
        let expect = 1.0 - acc / (n * n) as f64;
        let se_ici = pb.std_err;
        assert!((pb.p_ici1 - expect).abs() <= 4.0 * se_ici + 1e-6, "N={n} {} vs {expect}", pb.p_ici1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fast_path_equals_definitional(
        n in prop::sample::select(vec![8usize, 12, 16, 24, 32, 48, 64]),
        taps_frac in 0.05f64..1.0,
        g_frac in 0.0f64..1.0,
        fd in prop::sample::select(vec![0.0, 50.0, 400.0, 2000.0, 20000.0]),
        seed in any::<u64>(),
    ) {
        let taps = ((taps_frac * 16.0).ceil() as usize).clamp(2, 16).min(n);
        let g = ((g_frac * taps as f64) as usize).min(taps - 1);
        let sigma = taps as f64 * TS;
        let pdp = PowerDelayProfile::from_taps(&(0..taps).map(|l| (-(l as f64) * TS / sigma).exp()).collect::<Vec<_>>(), sigma, TS).unwrap();
        let mut rng = child_rng(seed, 0);
        let ch = SosChannel::draw(&pdp, fd, 16, &mut rng);
        let h = ch.realize(0, n);
        let nm = num(n, g);
        let mats = compute_matrices(&h, &nm).unwrap();
        for mode in [AccountingMode::Paper, AccountingMode::Full] {
            let a = powers_from_matrices(&mats, mode);
            let b = symbol_power_breakdown(&h, &nm, mode).unwrap();
            prop_assert!(rel_close(a.p_ave, b.p_ave, 1e-10));
            prop_assert!(rel_close(a.p_ici1, b.p_ici1, 1e-10), "{} {}", a.p_ici1, b.p_ici1);
            prop_assert!(rel_close(a.p_isi_ici2, b.p_isi_ici2, 1e-10), "{} {}", a.p_isi_ici2, b.p_isi_ici2);
            if let Some(ev) = SeriesEvaluator::new(&[nm], ch.max_omega()) {
                let c = ev.evaluate(&ch, mode).unwrap()[0];
                prop_assert!(rel_close(c.p_ave, b.p_ave, 1e-10));
                prop_assert!(rel_close(c.p_ici1, b.p_ici1, 1e-8) || (c.p_ici1 - b.p_ici1).abs() < 1e-13, "{} {}", c.p_ici1, b.p_ici1);
                prop_assert!(rel_close(c.p_isi_ici2, b.p_isi_ici2, 1e-10));
            }
        }
    }
}
