//! Quasi-equilibria `x*_n`: the unique positive root of `g(., n)`.

use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::model::{Dissipativity, HybridModel, ModelParams};
use crate::ode::{integrate_at, OdeOptions};
use crate::scalar::Scalar;

/// Default bisection tolerance on the bracket width.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;

const MAX_BISECTIONS: usize = 400;

/// Root of `g(., n)` by bisection on `[0, upper]`.
///
/// `g(0, n) > 0` and `g(upper, n) < 0` are required; the iteration stops when
/// the bracket is narrower than `tol` (or cannot shrink further in `T`).
pub fn equilibrium_in<T: Scalar, M: HybridModel<T> + ?Sized>(model: &M, n: u64, upper: T, tol: T) -> Result<T> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "root tolerance must be positive, got {tol}"
        )));
    }
    let mut lo = T::zero();
    let mut hi = upper;
    let g_lo = model.drift(lo, n);
    let g_hi = model.drift(hi, n);
    if g_lo == T::zero() {
        return Ok(lo);
    }
    if !(g_lo > T::zero() && g_hi < T::zero()) {
        return Err(Error::BracketFailure {
            n,
            upper: upper.to_f64_lossy(),
            g_low: g_lo.to_f64_lossy(),
            g_high: g_hi.to_f64_lossy(),
        });
    }
    let half = T::lit(0.5);
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol {
            break;
        }
        let mid = lo + (hi - lo) * half;
        if mid <= lo || mid >= hi {
            break;
        }
        let g = model.drift(mid, n);
        if g == T::zero() {
            return Ok(mid);
        }
        if g > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo + (hi - lo) * half)
}

/// Quasi-equilibrium `x*_n` using the model's analytic dissipativity bounds.
pub fn equilibrium<T: Scalar, M: HybridModel<T> + ?Sized>(model: &M, n: u64, tol: T) -> Result<T> {
    let bounds = model.dissipativity().ok_or(Error::MissingBounds)?;
    equilibrium_in(model, n, bounds.bracket_upper(), tol)
}

// Coefficients of x^2 + u_n x - v = 0 for the reference table, obtained by
// clearing the Monod denominator in g(x, n) = 0:
// u_n = (alpha mu_max / (V D)) n + mu_half - x_in = 0.75 n - 6, v = x_in mu_half = 7.
const U_SLOPE: f64 = 0.75;
const U_INTERCEPT: f64 = -6.0;
const V_CONST: f64 = 7.0;

/// Closed-form quasi-equilibrium `(sqrt(u_n^2 + 4v) - u_n) / 2` of the
/// reference model, with `u_n = 0.75 n - 6` and `v = 7`.
pub fn closed_form_equilibrium<T: Scalar>(n: u64, params: &ModelParams<T>) -> Result<T> {
    if !params.is_reference() {
        return Err(Error::NotReferenceParameters);
    }
    let u = T::lit(U_SLOPE) * T::count(n) + T::lit(U_INTERCEPT);
    let v = T::lit(V_CONST);
    let four = T::lit(4.0);
    // rationalized form avoids cancellation once u_n > 0
    let root = (u * u + four * v).sqrt();
    Ok(if u > T::zero() {
        T::lit(2.0) * v / (root + u)
    } else {
        T::lit(0.5) * (root - u)
    })
}

/// Memoized quasi-equilibria of one model.
///
/// Entries are filled contiguously up to the largest `n` requested so far.
/// Lookups take a read lock; only growth takes the write lock.
pub struct EquilibriumTable<T, M> {
    model: M,
    bounds: Dissipativity<T>,
    tol: T,
    entries: RwLock<Vec<T>>,
}

impl<T: Scalar, M: HybridModel<T>> EquilibriumTable<T, M> {
    /// Table for a model exposing analytic dissipativity bounds.
    pub fn new(model: M, tol: T) -> Result<Self> {
        let bounds = model.dissipativity().ok_or(Error::MissingBounds)?;
        Self::with_bounds(model, bounds, tol)
    }

    pub fn with_bounds(model: M, bounds: Dissipativity<T>, tol: T) -> Result<Self> {
        if !(bounds.delta > T::zero() && bounds.g_zero_bound > T::zero()) {
            return Err(Error::InvalidArgument("dissipativity bounds must be positive".into()));
        }
        if !(tol > T::zero()) {
            return Err(Error::InvalidArgument("root tolerance must be positive".into()));
        }
        Ok(Self {
            model,
            bounds,
            tol,
            entries: RwLock::new(Vec::new()),
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn bounds(&self) -> Dissipativity<T> {
        self.bounds
    }

    pub fn tol(&self) -> T {
        self.tol
    }

    /// Right end of the bisection bracket.
    pub fn upper_bound(&self) -> T {
        self.bounds.bracket_upper()
    }

    /// Number of cached entries (`n = 0 .. len`).
    pub fn len(&self) -> usize {
        self.entries.read().expect("equilibrium cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, n: u64) -> Result<T> {
        let idx = n as usize;
        {
            let cache = self.entries.read().expect("equilibrium cache poisoned");
            if let Some(&x) = cache.get(idx) {
                return Ok(x);
            }
        }
        let mut cache = self.entries.write().expect("equilibrium cache poisoned");
        let upper = self.upper_bound();
        while cache.len() <= idx {
            let k = cache.len() as u64;
            cache.push(equilibrium_in(&self.model, k, upper, self.tol)?);
        }
        Ok(cache[idx])
    }

    /// Copy of the cached entries.
    pub fn snapshot(&self) -> Vec<T> {
        self.entries.read().expect("equilibrium cache poisoned").clone()
    }
}

/// Checks `x*_n <= sup_n g(0, n) / delta` for every `n <= n_max`.
pub fn equilibrium_bound_check<T: Scalar, M: HybridModel<T>>(
    table: &EquilibriumTable<T, M>,
    n_max: u64,
) -> Result<bool> {
    let bound = table.bounds().equilibrium_bound();
    // bisection may overshoot the exact root by up to the tolerance
    let slack = table.tol();
    for n in 0..=n_max {
        if table.get(n)? > bound + slack {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Largest amount by which the frozen-`n` fast subsystem exceeds the
/// exponential relaxation envelope on `t_grid`:
/// `max_t |x_t - x*_n| - |x_0 - x*_n| exp(-t delta / eps)`.
pub fn relaxation_check<T: Scalar, M: HybridModel<T>>(
    table: &EquilibriumTable<T, M>,
    n: u64,
    x0: T,
    epsilon: T,
    t_grid: &[T],
    ode: &OdeOptions<T>,
) -> Result<T> {
    if !(x0 > T::zero()) {
        return Err(Error::InvalidArgument("x0 must be positive".into()));
    }
    if !(epsilon > T::zero() && epsilon <= T::one()) {
        return Err(Error::InvalidArgument("epsilon must lie in (0, 1]".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("t_grid must be increasing".into()));
    }
    let x_star = table.get(n)?;
    let delta = table.bounds().delta;
    let model = table.model();
    let f = |_t: T, y: &[T; 1]| [model.drift(y[0], n) / epsilon];
    let path = integrate_at(&f, T::zero(), [x0], t_grid, ode, epsilon)?;
    let d0 = (x0 - x_star).abs();
    Ok(t_grid
        .iter()
        .zip(path)
        .map(|(&t, y)| (y[0] - x_star).abs() - d0 * (-(t * delta) / epsilon).exp())
        .fold(T::neg_infinity(), T::max))
}
