#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper-tail p-value of Pearson's statistic for `counts` against `probs`.
/// Cells with zero probability must be empty and are dropped.
pub fn chi_square_pvalue(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&c, &p) in counts.iter().zip(probs) {
        if p == 0.0 {
            assert_eq!(c, 0, "draw in a zero-probability cell");
            continue;
        }
        let e = n as f64 * p;
        stat += (c as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn se_mean(v: &[f64]) -> f64 {
    (var(v) / v.len() as f64).sqrt()
}

/// Large-sample standard error of the sample variance, `sqrt((m4 - s^4) / n)`.
pub fn se_var(v: &[f64]) -> f64 {
    let m = mean(v);
    let n = v.len() as f64;
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((m4 - m2 * m2) / n).sqrt()
}
