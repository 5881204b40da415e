//! Critical values and small descriptive statistics.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("probability {0} outside (0, 1)")]
    BadProbability(f64),
    #[error("degrees of freedom must be at least 1, got {0}")]
    BadDof(f64),
    #[error("need at least {need} values, got {got}")]
    TooFewValues { need: usize, got: usize },
}

/// Standard normal quantile, Wichura's AS241 (PPND16), relative accuracy about 1e-16.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Upper-α critical value of N(0,1).
pub fn z_quantile(alpha: f64) -> Result<f64, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::BadProbability(alpha));
    }
    Ok(norm_quantile(1.0 - alpha))
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9.
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    // Modified Lentz evaluation of the incomplete-beta continued fraction.
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `dof` degrees of freedom.
pub fn t_cdf(t: f64, dof: f64) -> f64 {
    let tail = 0.5 * reg_inc_beta(dof / 2.0, 0.5, dof / (dof + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Upper-α critical value of Student's t, by bisection on [`t_cdf`].
pub fn t_quantile(alpha: f64, dof: f64) -> Result<f64, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::BadProbability(alpha));
    }
    if !(dof >= 1.0) {
        return Err(StatsError::BadDof(dof));
    }
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (-1.0, 1.0);
    while t_cdf(lo, dof) > target {
        lo *= 2.0;
    }
    while t_cdf(hi, dof) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, dof) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Mean and two-sided `1 − α` t-interval half-width.
pub fn mean_with_halfwidth(xs: &[f64], alpha: f64) -> Result<(f64, f64), StatsError> {
    if xs.is_empty() {
        return Err(StatsError::TooFewValues { need: 1, got: 0 });
    }
    let m = mean(xs);
    if xs.len() < 2 {
        return Ok((m, 0.0));
    }
    let n = xs.len() as f64;
    let t = t_quantile(alpha / 2.0, n - 1.0)?;
    Ok((m, t * sample_variance(xs).sqrt() / n.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

    #[test]
    fn z_examples() {
        assert_eq!(z_quantile(0.5).unwrap(), 0.0);
        assert!((z_quantile(0.05).unwrap() - 1.6449).abs() < 1e-4);
        assert!(z_quantile(1.0).is_err());
    }

    #[test]
    fn t_examples() {
        assert!((t_quantile(0.05, 1.0).unwrap() - 6.3138).abs() < 1e-3);
        assert!((t_quantile(0.05, 49.0).unwrap() - 1.6766).abs() < 1e-3);
        let z = z_quantile(0.05).unwrap();
        assert!((t_quantile(0.05, 1e6).unwrap() - z).abs() < 1e-3);
        assert!(t_quantile(0.05, 0.0).is_err());
    }

    #[test]
    fn halfwidth_two_values() {
        let (m, h) = mean_with_halfwidth(&[8.0, 12.0], 0.05).unwrap();
        assert_eq!(m, 10.0);
        let expected = 12.706_204_736 * 8f64.sqrt() / 2f64.sqrt();
        assert!((h - expected).abs() < 1e-4, "{h} vs {expected}");
    }

    proptest! {
        #[test]
        fn normal_quantile_matches_statrs(p in 1e-12f64..(1.0 - 1e-12)) {
            let oracle = Normal::new(0.0, 1.0).unwrap().inverse_cdf(p);
            prop_assert!((norm_quantile(p) - oracle).abs() < 1e-9 * oracle.abs().max(1.0));
        }

        #[test]
        fn t_quantile_matches_statrs(alpha in 0.001f64..0.5, dof in 1u32..200) {
            let oracle = StudentsT::new(0.0, 1.0, dof as f64).unwrap().inverse_cdf(1.0 - alpha);
            let ours = t_quantile(alpha, dof as f64).unwrap();
            prop_assert!((ours - oracle).abs() < 1e-6, "{} vs {}", ours, oracle);
        }

        #[test]
        fn normal_quantile_is_monotone(a in 1e-9f64..0.999, d in 1e-9f64..1e-3) {
            let b = (a + d).min(1.0 - 1e-12);
            prop_assert!(norm_quantile(a) <= norm_quantile(b));
        }
    }
}
