#![allow(dead_code)]

use hybridavg::averaged::BirthDeathChain;

/// Asymptotic 1% critical value of the one-sample Kolmogorov-Smirnov statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// KS distance between the empirical law of `draws` and `cdf`.
pub fn ks_statistic(draws: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn exp_cdf(rate: f64) -> impl Fn(f64) -> f64 {
    move |t| if t <= 0.0 { 0.0 } else { 1.0 - (-rate * t).exp() }
}

pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `E[n_t]` of a birth-death chain from `n0`, by RK4 on the forward
/// (master) equation truncated at `states` with births suppressed at the top.
pub fn forward_equation_mean<C: BirthDeathChain<f64>>(chain: &C, n0: usize, t: f64, states: usize, dt: f64) -> f64 {
    let rates: Vec<(f64, f64)> = (0..=states)
        .map(|n| {
            let (b, d) = chain.rates(n as u64).unwrap();
            (if n == states { 0.0 } else { b }, d)
        })
        .collect();
    let deriv = |p: &[f64]| -> Vec<f64> {
        (0..=states)
            .map(|n| {
                let (b, d) = rates[n];
                let mut v = -(b + d) * p[n];
                if n > 0 {
                    v += rates[n - 1].0 * p[n - 1];
                }
                if n < states {
                    v += rates[n + 1].1 * p[n + 1];
                }
                v
            })
            .collect()
    };
    let mut p = vec![0.0; states + 1];
    p[n0] = 1.0;
    let steps = (t / dt).round() as usize;
    let axpy = |a: &[f64], h: f64, k: &[f64]| -> Vec<f64> { a.iter().zip(k).map(|(x, y)| x + h * y).collect() };
    for _ in 0..steps {
        let k1 = deriv(&p);
        let k2 = deriv(&axpy(&p, dt / 2.0, &k1));
        let k3 = deriv(&axpy(&p, dt / 2.0, &k2));
        let k4 = deriv(&axpy(&p, dt, &k3));
        for i in 0..=states {
            p[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    p.iter().enumerate().map(|(n, q)| n as f64 * q).sum()
}

/// Bisection on the reference drift written out by hand, independent of the
/// crate's root finder.
pub fn reference_root(n: u64) -> f64 {
    let g = |x: f64| 0.1 * (7.0 - x) - 0.5 * (0.15 * x / (1.0 + x)) * n as f64;
    let (mut lo, mut hi) = (0.0f64, 8.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
