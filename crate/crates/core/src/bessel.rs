//! Zeroth-order Bessel function of the first kind.

use std::f64::consts::{FRAC_PI_4, PI};

/// Crossover between the power series and the Hankel asymptotic expansion.
const SERIES_LIMIT: f64 = 12.0;

/// `J0(x)`, absolute error below 1e-10 on the real line.
pub fn j0(x: f64) -> f64 {
    let x = x.abs();
    if x < SERIES_LIMIT {
        series(x)
    } else {
        asymptotic(x)
    }
}

fn series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) && term.abs() < 1e-18 {
            break;
        }
        k += 1.0;
        if k > 200.0 {
            break;
        }
    }
    sum
}

fn asymptotic(x: f64) -> f64 {
    // c_k = prod_{i<=k} (2i-1)^2 / (k! 8^k); P uses even k, Q odd k, alternating.
    let mut p = 0.0;
    let mut q = 0.0;
    let mut c = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            c *= odd * odd / (k as f64 * 8.0 * x);
        }
        if c >= prev {
            break;
        }
        prev = c;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * c;
        } else {
            q += sign * c;
        }
    }
    let w = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * w.cos() + q * w.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain alternating power series, summed in order without any cutoff
    /// heuristics beyond a fixed term count.
    fn oracle(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut fact = 1.0f64;
        for k in 0..120 {
            if k > 0 {
                fact *= k as f64;
            }
            let t = (x / 2.0).powi(2 * k) / (fact * fact);
            if !t.is_finite() {
                break;
            }
            sum += if k % 2 == 0 { t } else { -t };
        }
        sum
    }

    #[test]
    fn known_points() {
        assert_eq!(j0(0.0), 1.0);
        assert!((j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-7);
        assert!((j0(1.0) - oracle(1.0)).abs() < 1e-15);
        assert!(j0(2.404_825_557_695_773).abs() < 1e-6);
        assert!(j0(2.404826).abs() < 1e-6);
        assert_eq!(j0(-3.3), j0(3.3));
    }

    #[test]
    fn matches_series_oracle_across_crossover() {
        let mut x = 0.0;
        while x <= 20.0 {
            let err = (j0(x) - oracle(x)).abs();
            assert!(err < 1e-7, "x={x} err={err}");
            x += 0.037;
        }
    }

    #[test]
    fn large_argument_envelope() {
        for &x in &[50.0, 100.0, 1000.0] {
            assert!(j0(x).abs() <= (2.0 / (PI * x)).sqrt() + 1e-9);
        }
        // zeros of J0 near 30.6346
        assert!(j0(30.634_606_468_431_98).abs() < 1e-10);
    }
}
