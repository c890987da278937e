//! Hybrid model interface and the chemostat predator-prey instance.
//!
//! A hybrid model is the triple `(g, b, d)`: the prey concentration `x`
//! follows `dx/dt = g(x, n) / eps` between jumps, and the predator count `n`
//! jumps to `n + 1` at rate `b(x, n)` and to `n - 1` at rate `d(x, n)`.
//! State `n = 0` is absorbing.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pure evaluators of a hybrid model.
pub trait HybridModel<T: Scalar>: Send + Sync {
    /// Drift of the continuous component, `g(x, n)`.
    fn drift(&self, x: T, n: u64) -> T;
    /// Rate of the jump `n -> n + 1`.
    fn birth(&self, x: T, n: u64) -> T;
    /// Rate of the jump `n -> n - 1`.
    fn death(&self, x: T, n: u64) -> T;

    /// Analytic dissipativity data when known in closed form.
    fn dissipativity(&self) -> Option<Dissipativity<T>> {
        None
    }

    fn total_rate(&self, x: T, n: u64) -> T {
        self.birth(x, n) + self.death(x, n)
    }
}

impl<T: Scalar, M: HybridModel<T> + ?Sized> HybridModel<T> for &M {
    fn drift(&self, x: T, n: u64) -> T {
        (**self).drift(x, n)
    }
    fn birth(&self, x: T, n: u64) -> T {
        (**self).birth(x, n)
    }
    fn death(&self, x: T, n: u64) -> T {
        (**self).death(x, n)
    }
    fn dissipativity(&self) -> Option<Dissipativity<T>> {
        (**self).dissipativity()
    }
}

impl<T: Scalar, M: HybridModel<T> + ?Sized> HybridModel<T> for std::sync::Arc<M> {
    fn drift(&self, x: T, n: u64) -> T {
        (**self).drift(x, n)
    }
    fn birth(&self, x: T, n: u64) -> T {
        (**self).birth(x, n)
    }
    fn death(&self, x: T, n: u64) -> T {
        (**self).death(x, n)
    }
    fn dissipativity(&self) -> Option<Dissipativity<T>> {
        (**self).dissipativity()
    }
}

/// Uniform contraction data of the drift: `sup_n g(0, n)` and the rate `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissipativity<T> {
    pub g_zero_bound: T,
    pub delta: T,
}

impl<T: Scalar> Dissipativity<T> {
    /// Upper bound on every quasi-equilibrium, `sup_n g(0, n) / delta`.
    pub fn equilibrium_bound(&self) -> T {
        self.g_zero_bound / self.delta
    }

    /// Right end of the root bracket, one unit past the equilibrium bound.
    pub fn bracket_upper(&self) -> T {
        self.equilibrium_bound() + T::one()
    }

    /// Envelope of the continuous component along any hybrid path started at `x0`.
    pub fn trajectory_envelope(&self, x0: T, t: T, epsilon: T) -> T {
        let b = self.equilibrium_bound();
        (x0 + b) * (-(self.delta * t) / epsilon).exp() + b
    }
}

/// Chemostat parameters with Monod consumption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    /// Prey inflow concentration.
    pub x_in: T,
    /// Dilution rate `D`.
    pub dilution: T,
    /// Vessel volume `V`.
    pub volume: T,
    /// Prey-side conversion efficiency.
    pub alpha: T,
    /// Predator-side conversion efficiency.
    pub beta: T,
    /// Predator death ratio (death rate is `gamma * D * n`).
    pub gamma: T,
    /// Monod plateau.
    pub mu_max: T,
    /// Monod half-saturation constant.
    pub mu_half: T,
}

impl<T: Scalar> ModelParams<T> {
    /// The reference parameter table: `x_in = 7, D = 0.1, V = 1, alpha = 0.5,
    /// beta = gamma = 1, mu(x) = 0.15 x / (1 + x)`.
    pub fn reference() -> Self {
        Self {
            x_in: T::lit(7.0),
            dilution: T::lit(0.1),
            volume: T::one(),
            alpha: T::lit(0.5),
            beta: T::one(),
            gamma: T::one(),
            mu_max: T::lit(0.15),
            mu_half: T::one(),
        }
    }

    pub fn is_reference(&self) -> bool {
        *self == Self::reference()
    }

    pub fn fields(&self) -> [(&'static str, T); 8] {
        [
            ("x_in", self.x_in),
            ("D", self.dilution),
            ("V", self.volume),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("mu_max", self.mu_max),
            ("mu_half", self.mu_half),
        ]
    }

    /// Checks that every field is finite and strictly positive.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.fields() {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "parameter {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Parameters of the volume-rescaled process: `V -> N V`.
    pub fn with_volume_scaled(&self, scale: u64) -> Self {
        Self {
            volume: self.volume * T::count(scale),
            ..*self
        }
    }
}

/// Monod consumption `mu_max * x / (mu_half + x)`.
pub fn monod_mu<T: Scalar>(x: T, params: &ModelParams<T>) -> Result<T> {
    if x < T::zero() || x.is_nan() {
        return Err(Error::InvalidArgument(format!("Monod function needs x >= 0, got {x}")));
    }
    Ok(monod(x, params))
}

#[inline]
fn monod<T: Scalar>(x: T, p: &ModelParams<T>) -> T {
    p.mu_max * x / (p.mu_half + x)
}

/// `g(x, n) = D (x_in - x) - (alpha / V) mu(x) n`.
pub fn drift_g<T: Scalar>(x: T, n: u64, p: &ModelParams<T>) -> T {
    p.dilution * (p.x_in - x) - p.alpha / p.volume * monod(x, p) * T::count(n)
}

/// `b(x, n) = beta mu(x) n`.
pub fn birth_rate<T: Scalar>(x: T, n: u64, p: &ModelParams<T>) -> T {
    p.beta * monod(x, p) * T::count(n)
}

/// `d(x, n) = gamma D n`.
pub fn death_rate<T: Scalar>(_x: T, n: u64, p: &ModelParams<T>) -> T {
    p.gamma * p.dilution * T::count(n)
}

/// The chemostat predator-prey hybrid model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredatorPrey<T> {
    pub params: ModelParams<T>,
}

impl<T: Scalar> PredatorPrey<T> {
    pub fn new(params: ModelParams<T>) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    /// Builds the model without checking parameter signs. Used to probe the
    /// assumption validator with deliberately broken models.
    pub fn new_unchecked(params: ModelParams<T>) -> Self {
        Self { params }
    }

    pub fn reference() -> Self {
        Self {
            params: ModelParams::reference(),
        }
    }
}

impl<T: Scalar> HybridModel<T> for PredatorPrey<T> {
    fn drift(&self, x: T, n: u64) -> T {
        drift_g(x, n, &self.params)
    }

    fn birth(&self, x: T, n: u64) -> T {
        birth_rate(x, n, &self.params)
    }

    fn death(&self, x: T, n: u64) -> T {
        death_rate(x, n, &self.params)
    }

    // g'(x) = -D - (alpha/V) mu'(x) n <= -D because mu is nondecreasing.
    fn dissipativity(&self) -> Option<Dissipativity<T>> {
        let p = &self.params;
        if p.validate().is_err() {
            return None;
        }
        Some(Dissipativity {
            g_zero_bound: p.dilution * p.x_in,
            delta: p.dilution,
        })
    }
}

/// A hybrid model assembled from closures.
pub struct FnModel<G, B, D, T> {
    pub drift: G,
    pub birth: B,
    pub death: D,
    pub bounds: Option<Dissipativity<T>>,
}

impl<G, B, D, T> FnModel<G, B, D, T>
where
    T: Scalar,
    G: Fn(T, u64) -> T + Send + Sync,
    B: Fn(T, u64) -> T + Send + Sync,
    D: Fn(T, u64) -> T + Send + Sync,
{
    pub fn new(drift: G, birth: B, death: D) -> Self {
        Self {
            drift,
            birth,
            death,
            bounds: None,
        }
    }

    pub fn with_dissipativity(mut self, bounds: Dissipativity<T>) -> Self {
        self.bounds = Some(bounds);
        self
    }
}

impl<G, B, D, T> HybridModel<T> for FnModel<G, B, D, T>
where
    T: Scalar,
    G: Fn(T, u64) -> T + Send + Sync,
    B: Fn(T, u64) -> T + Send + Sync,
    D: Fn(T, u64) -> T + Send + Sync,
{
    fn drift(&self, x: T, n: u64) -> T {
        (self.drift)(x, n)
    }
    fn birth(&self, x: T, n: u64) -> T {
        (self.birth)(x, n)
    }
    fn death(&self, x: T, n: u64) -> T {
        (self.death)(x, n)
    }
    fn dissipativity(&self) -> Option<Dissipativity<T>> {
        self.bounds
    }
}

/// Structural assumption whose numerical check failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumptionId {
    /// `b >= 0` and `d >= 0`.
    RatesNonnegative,
    /// `b(., 0) = d(., 0) = 0`.
    AbsorbingZero,
    /// `b + d > 0` away from the absorbing state.
    RatesPositive,
    /// Sub-linear growth and Lipschitz envelope are finite.
    Growth,
    /// Secant slopes of `g(., n)` bounded by `-delta < 0`.
    Dissipative,
    /// `g(0, n) > 0` and bounded.
    DriftPositiveAtZero,
    /// `g(., n)` changes sign on `[0, sup g(0,.)/delta + 1]`.
    RootBracketed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation<T> {
    pub assumption: AssumptionId,
    pub x: T,
    pub n: u64,
    pub value: T,
}

/// Growth envelope fitted on a grid.
///
/// `sup_x b + d <= c1 + c2 n` and the `x`-Lipschitz constant of `b + d` at
/// level `n` is at most `c1 (1 + c2 n + c3 n^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthConstants<T> {
    pub c1: T,
    pub c2: T,
    pub c3: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport<T> {
    /// Smallest contraction rate seen over all grid secants and levels.
    pub dissipativity_rate_delta: T,
    pub growth_constants: GrowthConstants<T>,
    /// `max_n g(0, n)` over the checked levels.
    pub g_zero_bound: T,
    pub violations: Vec<Violation<T>>,
}

impl<T: Scalar> AssumptionReport<T> {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Dissipativity data usable for equilibrium brackets, if the report is clean.
    pub fn dissipativity(&self) -> Option<Dissipativity<T>> {
        self.is_valid().then_some(Dissipativity {
            g_zero_bound: self.g_zero_bound,
            delta: self.dissipativity_rate_delta,
        })
    }
}

/// Numerically checks the structural assumptions of `model` on `x_grid × {0..=n_max}`.
///
/// Violations are collected, not raised; an error is returned only for an
/// unusable grid. Secants are taken between adjacent grid points: the slope
/// of any wider secant is a weighted mean of adjacent ones, so the extreme
/// pairwise slope is always attained on neighbours.
pub fn validate_assumptions<T: Scalar, M: HybridModel<T> + ?Sized>(
    model: &M,
    x_grid: &[T],
    n_max: u64,
) -> Result<AssumptionReport<T>> {
    if x_grid.len() < 2 {
        return Err(Error::InvalidArgument(
            "assumption grid needs at least two points".into(),
        ));
    }
    if n_max < 1 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    if x_grid.windows(2).any(|w| !(w[1] > w[0])) || x_grid[0] < T::zero() {
        return Err(Error::InvalidArgument(
            "assumption grid must be nonnegative and strictly increasing".into(),
        ));
    }

    let mut violations = Vec::new();
    let mut flag = |assumption, x, n, value| {
        violations.push(Violation {
            assumption,
            x,
            n,
            value,
        })
    };

    let mut delta = T::infinity();
    let mut g_zero_bound = T::neg_infinity();
    let mut rate_sup = Vec::with_capacity(n_max as usize + 1);
    let mut lipschitz = Vec::with_capacity(n_max as usize + 1);

    for n in 0..=n_max {
        let mut sup = T::zero();
        let mut lip = T::zero();
        let mut prev: Option<(T, T, T, T)> = None;
        for &x in x_grid {
            let (g, b, d) = (model.drift(x, n), model.birth(x, n), model.death(x, n));
            if !(g.is_finite() && b.is_finite() && d.is_finite()) {
                flag(AssumptionId::Growth, x, n, g + b + d);
                continue;
            }
            if b < T::zero() {
                flag(AssumptionId::RatesNonnegative, x, n, b);
            }
            if d < T::zero() {
                flag(AssumptionId::RatesNonnegative, x, n, d);
            }
            if n == 0 && (b != T::zero() || d != T::zero()) {
                flag(AssumptionId::AbsorbingZero, x, n, b + d);
            }
            if n > 0 && !(b + d > T::zero()) {
                flag(AssumptionId::RatesPositive, x, n, b + d);
            }
            sup = sup.max(b + d);
            if let Some((px, pg, pb, pd)) = prev {
                let dx = x - px;
                let slope = (g - pg) / dx;
                delta = delta.min(-slope);
                if !(slope < T::zero()) {
                    flag(AssumptionId::Dissipative, x, n, slope);
                }
                lip = lip.max(((b - pb).abs() + (d - pd).abs()) / dx);
            }
            prev = Some((x, g, b, d));
        }
        rate_sup.push(sup);
        lipschitz.push(lip);

        let g0 = model.drift(T::zero(), n);
        g_zero_bound = g_zero_bound.max(g0);
        if !(g0 > T::zero()) || !g0.is_finite() {
            flag(AssumptionId::DriftPositiveAtZero, T::zero(), n, g0);
        }
    }

    if !(delta > T::zero()) {
        // already witnessed per secant
        delta = delta.max(T::zero());
    } else if g_zero_bound > T::zero() {
        let upper = g_zero_bound / delta + T::one();
        for n in 0..=n_max {
            let g_hi = model.drift(upper, n);
            if !(g_hi < T::zero()) {
                flag(AssumptionId::RootBracketed, upper, n, g_hi);
            }
        }
    }

    let growth_constants = fit_growth(&rate_sup, &lipschitz);
    if !(growth_constants.c2.is_finite() && growth_constants.c3.is_finite()) {
        flag(AssumptionId::Growth, T::nan(), n_max, growth_constants.c2);
    }

    Ok(AssumptionReport {
        dissipativity_rate_delta: delta,
        growth_constants,
        g_zero_bound,
        violations,
    })
}

// c1 is pinned to max(1, rate at n = 0) so that the Lipschitz envelope, which
// reuses c1 as a prefactor, stays meaningful; c2 and c3 are then the least
// values making both envelopes hold on the grid.
fn fit_growth<T: Scalar>(rate_sup: &[T], lipschitz: &[T]) -> GrowthConstants<T> {
    let floor = T::lit(1e-12);
    let c1 = T::one().max(rate_sup[0]).max(lipschitz[0]);
    let mut c2 = floor;
    for (n, &s) in rate_sup.iter().enumerate().skip(1) {
        c2 = c2.max((s - c1) / T::count(n as u64));
    }
    let mut c3 = floor;
    for (n, &l) in lipschitz.iter().enumerate().skip(1) {
        let nf = T::count(n as u64);
        c3 = c3.max((l / c1 - T::one() - c2 * nf) / (nf * nf));
    }
    GrowthConstants { c1, c2, c3 }
}

/// `count` evenly spaced points from `lo` to `hi` inclusive.
pub fn uniform_grid<T: Scalar>(lo: T, hi: T, count: usize) -> Vec<T> {
    assert!(count >= 2, "grid needs at least two points");
    let step = (hi - lo) / T::count(count as u64 - 1);
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo + step * T::count(i as u64)
            }
        })
        .collect()
}
