//! Absorption probability and mean absorption time of a birth-death chain.
//!
//! With `rho_i = prod_{k=1..i} d_k / b_k`:
//!
//! ```text
//! p_m = sum_{i>=m} rho_i / (1 + sum_{i>=1} rho_i)      if sum rho_i < inf, else 1
//! t_m = S_1 + sum_{k=1..m-1} rho_k S_{k+1},   S_k = sum_{j>=k} 1 / (b_j rho_j)
//! ```
//!
//! Both series are infinite. They are classified from their term ratios:
//! convergent once the last [`RATIO_WINDOW`] ratios are at most
//! [`CONVERGENT_RATIO`] and the geometric tail bound is below `tol` times the
//! partial sum; divergent once [`RATIO_WINDOW`] consecutive ratios are at
//! least [`DIVERGENT_RATIO`] or a term exceeds [`TERM_CAP`]. Anything else is
//! reported as undetermined when `i_max` terms are exhausted.
//!
//! All products and suffix sums are kept in log space.

use std::collections::VecDeque;

use crate::averaged::BirthDeathChain;
use crate::error::{Error, Result};
use crate::scalar::{log_add_exp, CompensatedSum, Scalar};
use crate::tridiag::solve_tridiagonal;

pub const RATIO_WINDOW: usize = 20;
pub const CONVERGENT_RATIO: f64 = 0.999;
pub const DIVERGENT_RATIO: f64 = 1.001;
pub const TERM_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions<T> {
    /// Relative truncation tolerance.
    pub tol: T,
    /// Maximum number of terms examined.
    pub i_max: u64,
}

impl<T: Scalar> Default for SeriesOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-12),
            i_max: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesVerdict {
    Diverges,
    Converges,
    Undetermined,
}

impl SeriesVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            SeriesVerdict::Diverges => "diverges",
            SeriesVerdict::Converges => "converges",
            SeriesVerdict::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanTime<T> {
    Finite(T),
    Infinite,
    Undetermined,
}

impl<T: Scalar> MeanTime<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            MeanTime::Finite(v) => Some(v),
            _ => None,
        }
    }
}

/// Absorption probability from `m` with its classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityEstimate<T> {
    /// `None` when the series could not be classified.
    pub p_m: Option<T>,
    pub verdict: SeriesVerdict,
    pub terms_used: u64,
    pub truncation_error_bound: T,
}

/// Mean absorption time from `m` with its classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeEstimate<T> {
    pub t_m: MeanTime<T>,
    pub verdict: SeriesVerdict,
    pub terms_used: u64,
    pub truncation_error_bound: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorptionResult<T> {
    pub m: u64,
    pub p_m: Option<T>,
    pub t_m: MeanTime<T>,
    /// Terms of `sum rho_i` examined.
    pub rho_terms_used: u64,
    /// Terms of `sum 1 / (b_i rho_i)` examined.
    pub time_terms_used: u64,
    /// Absolute truncation bound on `t_m` (zero unless finite).
    pub truncation_error_bound: T,
    /// Classification of `sum rho_i`.
    pub divergence_verdict: SeriesVerdict,
    /// Classification of `sum 1 / (b_i rho_i)`.
    pub time_verdict: SeriesVerdict,
}

/// Ratio bookkeeping shared by both series.
struct RatioWatch<T> {
    window: VecDeque<T>,
    div_run: usize,
    conv_run: usize,
    log_conv: T,
    log_div: T,
}

impl<T: Scalar> RatioWatch<T> {
    fn new() -> Self {
        Self {
            window: VecDeque::with_capacity(RATIO_WINDOW),
            div_run: 0,
            conv_run: 0,
            log_conv: T::lit(CONVERGENT_RATIO).ln(),
            log_div: T::lit(DIVERGENT_RATIO).ln(),
        }
    }

    fn push(&mut self, log_ratio: T) {
        if self.window.len() == RATIO_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back(log_ratio);
        if log_ratio >= self.log_div {
            self.div_run += 1;
        } else {
            self.div_run = 0;
        }
        if log_ratio <= self.log_conv {
            self.conv_run += 1;
        } else {
            self.conv_run = 0;
        }
    }

    fn diverging(&self) -> bool {
        self.div_run >= RATIO_WINDOW
    }

    /// Largest recent ratio once the window is uniformly contracting.
    fn contraction(&self) -> Option<T> {
        (self.conv_run >= RATIO_WINDOW).then(|| self.window.iter().copied().fold(T::neg_infinity(), T::max).exp())
    }
}

fn rates_checked<T: Scalar, C: BirthDeathChain<T> + ?Sized>(chain: &C, k: u64, index: u64) -> Result<(T, T)> {
    let (b, d) = chain.rates(k)?;
    if !(b > T::zero()) {
        return Err(Error::ZeroBirthRate { state: k, index });
    }
    if !(d >= T::zero()) || !d.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid rates in state {k}")));
    }
    Ok((b, d))
}

/// `ln rho_i`, accumulated term by term.
pub fn log_rho<T: Scalar, C: BirthDeathChain<T> + ?Sized>(chain: &C, i: u64) -> Result<T> {
    if i == 0 {
        return Err(Error::InvalidArgument("rho_i is defined for i >= 1".into()));
    }
    let mut acc = CompensatedSum::new();
    for k in 1..=i {
        let (b, d) = rates_checked(chain, k, i)?;
        acc.add(d.ln() - b.ln());
    }
    Ok(acc.value())
}

/// `rho_i = prod_{k=1..i} d_k / b_k`.
pub fn rho<T: Scalar, C: BirthDeathChain<T> + ?Sized>(chain: &C, i: u64) -> Result<T> {
    Ok(log_rho(chain, i)?.exp())
}

fn check_options<T: Scalar>(opts: &SeriesOptions<T>) -> Result<()> {
    if !(opts.tol > T::zero()) || opts.i_max < RATIO_WINDOW as u64 + 1 {
        return Err(Error::InvalidArgument(format!(
            "series options need tol > 0 and i_max > {RATIO_WINDOW}"
        )));
    }
    Ok(())
}

/// Absorption probability into 0 from `m`.
pub fn absorption_probability<T: Scalar, C: BirthDeathChain<T> + ?Sized>(
    chain: &C,
    m: u64,
    opts: &SeriesOptions<T>,
) -> Result<ProbabilityEstimate<T>> {
    check_options(opts)?;
    let cap = T::lit(TERM_CAP);
    let mut watch = RatioWatch::new();
    let mut log_rho = CompensatedSum::new();
    let mut total = CompensatedSum::new();
    let mut suffix = CompensatedSum::new();

    for i in 1..=opts.i_max {
        let (b, d) = rates_checked(chain, i, i)?;
        let log_ratio = d.ln() - b.ln();
        log_rho.add(log_ratio);
        let term = log_rho.value().exp();
        if i > 1 {
            watch.push(log_ratio);
        }
        if term > cap || watch.diverging() {
            return Ok(ProbabilityEstimate {
                p_m: Some(T::one()),
                verdict: SeriesVerdict::Diverges,
                terms_used: i,
                truncation_error_bound: T::zero(),
            });
        }
        total.add(term);
        if i >= m {
            suffix.add(term);
        }
        if let Some(r) = watch.contraction() {
            let tail = term * r / (T::one() - r);
            if i >= m && tail <= opts.tol * total.value() {
                let denom = T::one() + total.value();
                let p = if m == 0 { T::one() } else { suffix.value() / denom };
                return Ok(ProbabilityEstimate {
                    p_m: Some(p),
                    verdict: SeriesVerdict::Converges,
                    terms_used: i,
                    truncation_error_bound: tail / denom,
                });
            }
        }
    }
    Ok(ProbabilityEstimate {
        p_m: (m == 0).then_some(T::one()),
        verdict: SeriesVerdict::Undetermined,
        terms_used: opts.i_max,
        truncation_error_bound: T::infinity(),
    })
}

/// Mean absorption time from `m` (finite only when `sum 1 / (b_i rho_i)` converges).
pub fn mean_absorption_time<T: Scalar, C: BirthDeathChain<T> + ?Sized>(
    chain: &C,
    m: u64,
    opts: &SeriesOptions<T>,
) -> Result<TimeEstimate<T>> {
    check_options(opts)?;
    if m == 0 {
        return Ok(TimeEstimate {
            t_m: MeanTime::Finite(T::zero()),
            verdict: SeriesVerdict::Converges,
            terms_used: 0,
            truncation_error_bound: T::zero(),
        });
    }
    let cap = T::lit(TERM_CAP);
    let mut watch = RatioWatch::new();
    let mut log_rho = CompensatedSum::new();
    // index 0 unused so that position i holds term i
    let mut log_rhos = vec![T::zero()];
    let mut log_terms = vec![T::neg_infinity()];
    let mut log_suffix_m = T::neg_infinity();

    for i in 1..=opts.i_max {
        let (b, d) = rates_checked(chain, i, i)?;
        log_rho.add(d.ln() - b.ln());
        let lr = log_rho.value();
        let log_term = -b.ln() - lr;
        if i > 1 {
            watch.push(log_term - log_terms[i as usize - 1]);
        }
        log_rhos.push(lr);
        log_terms.push(log_term);
        if log_term.exp() > cap || watch.diverging() {
            return Ok(TimeEstimate {
                t_m: MeanTime::Infinite,
                verdict: SeriesVerdict::Diverges,
                terms_used: i,
                truncation_error_bound: T::zero(),
            });
        }
        if i >= m {
            log_suffix_m = log_add_exp(log_suffix_m, log_term);
        }
        let Some(r) = watch.contraction() else { continue };
        if i < m {
            continue;
        }
        let log_tail = log_term + (r / (T::one() - r)).ln();
        if log_tail > opts.tol.ln() + log_suffix_m {
            continue;
        }

        // S_k for k = i down to 1, in log space.
        let len = i as usize;
        let mut log_s = vec![T::neg_infinity(); len + 2];
        for k in (1..=len).rev() {
            log_s[k] = log_add_exp(log_s[k + 1], log_terms[k]);
        }
        let mut t = CompensatedSum::new();
        t.add(log_s[1].exp());
        let mut rho_sum = CompensatedSum::new();
        for k in 1..m as usize {
            t.add((log_rhos[k] + log_s[k + 1]).exp());
            rho_sum.add(log_rhos[k].exp());
        }
        let tail = log_tail.exp();
        return Ok(TimeEstimate {
            t_m: MeanTime::Finite(t.value()),
            verdict: SeriesVerdict::Converges,
            terms_used: i,
            truncation_error_bound: tail * (T::one() + rho_sum.value()),
        });
    }
    Ok(TimeEstimate {
        t_m: MeanTime::Undetermined,
        verdict: SeriesVerdict::Undetermined,
        terms_used: opts.i_max,
        truncation_error_bound: T::infinity(),
    })
}

/// Absorption probability and mean absorption time from `m`.
pub fn analyze<T: Scalar, C: BirthDeathChain<T> + ?Sized>(
    chain: &C,
    m: u64,
    opts: &SeriesOptions<T>,
) -> Result<AbsorptionResult<T>> {
    let p = absorption_probability(chain, m.max(1), opts)?;
    let t = mean_absorption_time(chain, m, opts)?;
    Ok(AbsorptionResult {
        m,
        p_m: if m == 0 { Some(T::one()) } else { p.p_m },
        t_m: t.t_m,
        rho_terms_used: p.terms_used,
        time_terms_used: t.terms_used,
        truncation_error_bound: t.truncation_error_bound,
        divergence_verdict: p.verdict,
        time_verdict: t.verdict,
    })
}

/// Mean absorption time from `m` on the truncated chain `{0..=states}`
/// (births suppressed at the top state), by first-step analysis.
pub fn absorption_time_linear_system<T: Scalar, C: BirthDeathChain<T> + ?Sized>(
    chain: &C,
    m: u64,
    states: u64,
) -> Result<T> {
    if m == 0 {
        return Ok(T::zero());
    }
    if states <= m {
        return Err(Error::InvalidArgument(format!(
            "truncation state {states} must exceed m = {m}"
        )));
    }
    let n = states as usize;
    let mut lower = vec![T::zero(); n];
    let mut diag = vec![T::zero(); n];
    let mut upper = vec![T::zero(); n];
    let rhs = vec![T::one(); n];
    for row in 0..n {
        let i = row as u64 + 1;
        let (b, d) = chain.rates(i)?;
        let b = if i == states { T::zero() } else { b };
        diag[row] = b + d;
        lower[row] = -d;
        upper[row] = -b;
    }
    let z = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    Ok(z[m as usize - 1])
}

/// Probability of hitting 0 before the top state `states` from `m`.
pub fn absorption_probability_linear_system<T: Scalar, C: BirthDeathChain<T> + ?Sized>(
    chain: &C,
    m: u64,
    states: u64,
) -> Result<T> {
    if m == 0 {
        return Ok(T::one());
    }
    if states <= m {
        return Err(Error::InvalidArgument(format!(
            "truncation state {states} must exceed m = {m}"
        )));
    }
    // unknowns p_1..p_{states-1}; p_0 = 1, p_states = 0
    let n = states as usize - 1;
    let mut lower = vec![T::zero(); n];
    let mut diag = vec![T::zero(); n];
    let mut upper = vec![T::zero(); n];
    let mut rhs = vec![T::zero(); n];
    for row in 0..n {
        let (b, d) = chain.rates(row as u64 + 1)?;
        diag[row] = b + d;
        lower[row] = -d;
        upper[row] = -b;
        if row == 0 {
            rhs[row] = d;
        }
    }
    let z = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    Ok(z[m as usize - 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate<T> {
    pub value: T,
    /// Truncation state of the last solve.
    pub states: u64,
    /// Whether two successive doublings agreed to the requested tolerance.
    pub converged: bool,
}

/// Doubles the truncation state from `initial_states` until successive
/// linear-system answers agree to `rel_tol`, or `max_states` is passed.
pub fn absorption_time_oracle<T: Scalar, C: BirthDeathChain<T> + ?Sized>(
    chain: &C,
    m: u64,
    initial_states: u64,
    rel_tol: T,
    max_states: u64,
) -> Result<OracleEstimate<T>> {
    let mut states = initial_states.max(m + 1);
    let mut prev = absorption_time_linear_system(chain, m, states)?;
    while states < max_states {
        states = (states * 2).min(max_states);
        let next = absorption_time_linear_system(chain, m, states)?;
        if (next - prev).abs() <= rel_tol * next.abs() {
            return Ok(OracleEstimate {
                value: next,
                states,
                converged: true,
            });
        }
        prev = next;
    }
    Ok(OracleEstimate {
        value: prev,
        states,
        converged: false,
    })
}
