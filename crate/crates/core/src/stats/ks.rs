use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `|a| * |b|` for which the two-sample test uses the exact null
/// distribution instead of the asymptotic one.
const EXACT_TWO_SAMPLE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: f64,
}

/// One-sample test of `sample` against a continuous `cdf`.
pub fn ks_one_sample<F>(sample: &[f64], cdf: F) -> Result<KsResult>
where
    F: Fn(f64) -> f64,
{
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = (i + 1) as f64 / m - f;
            let below = f - i as f64 / m;
            above.max(below)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_pvalue(statistic, m),
        n_effective: m,
    })
}

fn two_sample_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

fn check_two(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        Err(Error::EmptySample)
    } else {
        Ok(())
    }
}

/// Two-sample test. Small designs (`|a|·|b| <= 10_000`) use the exact null
/// distribution of the statistic; larger ones the asymptotic Kolmogorov law
/// with `n_eff = |a||b| / (|a| + |b|)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    check_two(a, b)?;
    if a.len() * b.len() <= EXACT_TWO_SAMPLE_LIMIT {
        ks_two_sample_exact(a, b)
    } else {
        ks_two_sample_asymptotic(a, b)
    }
}

pub fn ks_two_sample_asymptotic(a: &[f64], b: &[f64]) -> Result<KsResult> {
    check_two(a, b)?;
    let statistic = two_sample_statistic(a, b);
    let n_effective = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_pvalue(statistic, n_effective),
        n_effective,
    })
}

/// Exact two-sided P-value by counting monotone lattice paths that stay
/// strictly inside the band `|i/n - j/m| < D` (continuous data assumed).
pub fn ks_two_sample_exact(a: &[f64], b: &[f64]) -> Result<KsResult> {
    check_two(a, b)?;
    let statistic = two_sample_statistic(a, b);
    let (n, m) = (a.len(), b.len());
    let n_effective = (n * m) as f64 / (n + m) as f64;
    if statistic == 0.0 {
        return Ok(KsResult {
            statistic,
            p_value: 1.0,
            n_effective,
        });
    }
    // D * n * m is an integer for a realized statistic
    let band = (statistic * (n * m) as f64).round() as i64;
    let inside = |i: usize, j: usize| ((i * m) as i64 - (j * n) as i64).abs() < band;
    // u[j] holds P(path to (i, j) stays inside) under the uniform path law
    let mut u = vec![0.0f64; m + 1];
    u[0] = 1.0;
    for j in 1..=m {
        u[j] = if inside(0, j) { u[j - 1] } else { 0.0 };
    }
    for i in 1..=n {
        u[0] = if inside(i, 0) { u[0] } else { 0.0 };
        for j in 1..=m {
            u[j] = if inside(i, j) {
                let w = (i + j) as f64;
                u[j] * i as f64 / w + u[j - 1] * j as f64 / w
            } else {
                0.0
            };
        }
    }
    let p_value = (1.0 - u[m]).clamp(f64::MIN_POSITIVE, 1.0);
    Ok(KsResult {
        statistic,
        p_value,
        n_effective,
    })
}

/// Asymptotic Kolmogorov tail `P(K > sqrt(n_eff)·D)`, clamped to `(0, 1]`.
pub fn kolmogorov_pvalue(statistic: f64, n_effective: f64) -> f64 {
    let lambda = n_effective.sqrt() * statistic;
    if !(lambda > 0.0) {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // Jacobi theta form of the CDF; the alternating series converges
        // slowly for small arguments
        let x = PI * PI / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        let mut k = 1.0f64;
        loop {
            let term = (-k * k * x).exp();
            cdf += term;
            if term < 1e-17 * cdf || k > 201.0 {
                break;
            }
            k += 2.0;
        }
        1.0 - (2.0 * PI).sqrt() / lambda * cdf
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += sign * term;
            if term <= 1e-17 * sum.abs() {
                break;
            }
            sign = -sign;
        }
        2.0 * sum
    };
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_sample_quantile_sample_hits_half_step() {
        let m = 40;
        let sample: Vec<f64> = (1..=m).map(|i| (i as f64 - 0.5) / m as f64).collect();
        let r = ks_one_sample(&sample, |x| x).unwrap();
        assert!((r.statistic - 1.0 / (2.0 * m as f64)).abs() < 1e-12);
    }

    #[test]
    fn one_sample_step_function_oracle() {
        let r = ks_one_sample(&[0.1, 0.2, 0.3], |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((r.statistic - 0.7).abs() < 1e-12);
        assert_eq!(r.n_effective, 3.0);
        assert!(matches!(ks_one_sample(&[], |x| x), Err(Error::EmptySample)));
    }

    #[test]
    fn two_sample_examples() {
        let a = [0.1, 0.4, 0.7, 0.2];
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let lo: Vec<f64> = (0..30).map(|i| i as f64 / 60.0).collect();
        let hi: Vec<f64> = (0..30).map(|i| 0.5 + i as f64 / 60.0).collect();
        assert_eq!(ks_two_sample(&lo, &hi).unwrap().statistic, 1.0);
        assert!(matches!(ks_two_sample(&[], &a), Err(Error::EmptySample)));
        assert!(matches!(ks_two_sample(&a, &[]), Err(Error::EmptySample)));
    }

    #[test]
    fn two_sample_is_symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (n, m) in [(5, 9), (60, 300), (400, 250)] {
            let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.gen::<f64>().powf(1.3)).collect();
            assert_eq!(ks_two_sample(&a, &b).unwrap(), ks_two_sample(&b, &a).unwrap());
        }
    }

    #[test]
    fn pvalue_edge_cases() {
        assert_eq!(kolmogorov_pvalue(0.0, 10.0), 1.0);
        let tiny = kolmogorov_pvalue(5.0, 1.0);
        assert!(tiny > 0.0 && tiny < 1e-10);
        assert!(kolmogorov_pvalue(100.0, 100.0) > 0.0);
    }

    #[test]
    fn pvalue_matches_long_series() {
        // oracle: 1000 terms of the alternating series
        let series = |lam: f64| {
            2.0 * (1..=1000)
                .map(|k| {
                    let k = k as f64;
                    let s = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
                    s * (-2.0 * k * k * lam * lam).exp()
                })
                .sum::<f64>()
        };
        for lam in [0.6, 0.9, 1.0, 1.17, 1.19, 1.5, 2.2] {
            let p = kolmogorov_pvalue(lam, 1.0);
            assert!((p - series(lam)).abs() < 1e-6, "lam {lam}: {p} vs {}", series(lam));
        }
        assert!((kolmogorov_pvalue(1.0, 1.0) - series(1.0)).abs() < 1e-12);
    }

    #[test]
    fn exact_and_asymptotic_agree_for_large_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..100).map(|_| rng.gen::<f64>() * 0.9).collect();
        let e = ks_two_sample_exact(&a, &b).unwrap();
        let s = ks_two_sample_asymptotic(&a, &b).unwrap();
        assert_eq!(e.statistic, s.statistic);
        assert!((e.p_value - s.p_value).abs() < 0.03, "{} vs {}", e.p_value, s.p_value);
    }

    #[test]
    fn statistics_invariant_to_monotone_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..150).map(|_| rng.gen::<f64>().sqrt()).collect();
        let warp = |v: &[f64]| v.iter().map(|x| 7.0 * x.powi(3) + 2.0).collect::<Vec<_>>();
        assert_eq!(ks_two_sample(&a, &b).unwrap(), ks_two_sample(&warp(&a), &warp(&b)).unwrap());
        let one = ks_one_sample(&a, |x| x).unwrap();
        let warped = ks_one_sample(&warp(&a), |y| ((y - 2.0) / 7.0).cbrt()).unwrap();
        assert!((one.statistic - warped.statistic).abs() < 1e-12);
    }
}
