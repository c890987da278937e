//! Explicit Runge-Kutta steppers for small fixed-size systems.
//!
//! Two methods are available: classical RK4 at a fixed step and the
//! Dormand-Prince 5(4) embedded pair with an I-controller. Steps are always
//! capped at `epsilon * dt0` so that the fast relaxation of a slow-fast system
//! is resolved whatever the tolerances.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeMethod {
    /// Classical fourth-order Runge-Kutta at step `epsilon * dt0`.
    FixedRk4,
    /// Dormand-Prince 5(4) with error control.
    AdaptiveRk45,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions<T> {
    pub method: OdeMethod,
    /// Base step; the effective maximum step is `epsilon * dt0`.
    pub dt0: T,
    pub rel_tol: T,
    pub abs_tol: T,
    /// Tolerance on the cumulative hazard when localizing a jump time.
    pub hazard_tol: T,
}

impl<T: Scalar> Default for OdeOptions<T> {
    fn default() -> Self {
        Self {
            method: OdeMethod::AdaptiveRk45,
            dt0: T::lit(0.5),
            rel_tol: T::lit(1e-8),
            abs_tol: T::lit(1e-10),
            hazard_tol: T::lit(1e-10),
        }
    }
}

impl<T: Scalar> OdeOptions<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt0", self.dt0),
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("hazard_tol", self.hazard_tol),
        ] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "ODE option {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Tableau<T> {
    c: [T; 7],
    a: [[T; 6]; 7],
    b5: [T; 7],
    err: [T; 7],
}

impl<T: Scalar> Tableau<T> {
    fn new() -> Self {
        Self {
            c: C.map(T::lit),
            a: A.map(|row| row.map(T::lit)),
            b5: B5.map(T::lit),
            err: std::array::from_fn(|i| T::lit(B5[i] - B4[i])),
        }
    }
}

/// Result of one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct Step<T, const N: usize> {
    pub t: T,
    pub h: T,
    pub y: [T; N],
}

/// Stateful stepper carrying the adaptive step size between calls.
pub struct Stepper<T, const N: usize> {
    opts: OdeOptions<T>,
    max_step: T,
    h: T,
    tab: Tableau<T>,
}

impl<T: Scalar, const N: usize> Stepper<T, N> {
    /// Stepper for a system whose fast time scale is `epsilon`.
    pub fn new(opts: OdeOptions<T>, epsilon: T) -> Self {
        let max_step = opts.dt0 * epsilon;
        Self {
            opts,
            max_step,
            h: max_step,
            tab: Tableau::new(),
        }
    }

    pub fn max_step(&self) -> T {
        self.max_step
    }

    /// Advances from `(t, y)` by at most `h_limit`, retrying on rejection.
    pub fn step<F>(&mut self, f: &F, t: T, y: &[T; N], h_limit: T) -> Result<Step<T, N>>
    where
        F: Fn(T, &[T; N]) -> [T; N],
    {
        let cap = self.max_step.min(h_limit);
        match self.opts.method {
            OdeMethod::FixedRk4 => {
                let y_new = rk4(f, t, y, cap);
                check_finite(t + cap, &y_new)?;
                Ok(Step {
                    t: t + cap,
                    h: cap,
                    y: y_new,
                })
            }
            OdeMethod::AdaptiveRk45 => self.adaptive(f, t, y, cap),
        }
    }

    fn adaptive<F>(&mut self, f: &F, t: T, y: &[T; N], cap: T) -> Result<Step<T, N>>
    where
        F: Fn(T, &[T; N]) -> [T; N],
    {
        let safety = T::lit(0.9);
        let grow_max = T::lit(5.0);
        let shrink_min = T::lit(0.2);
        let exponent = T::lit(0.2);
        let h_min = T::epsilon() * T::lit(16.0) * (T::one() + t.abs());

        let mut h = self.h.min(cap);
        loop {
            let (y_new, err) = dp_step(&self.tab, f, t, y, h);
            let mut norm = T::zero();
            for i in 0..N {
                let scale = self.opts.abs_tol + self.opts.rel_tol * y[i].abs().max(y_new[i].abs());
                let e = err[i] / scale;
                norm = norm + e * e;
            }
            let norm = (norm / T::count(N as u64)).sqrt();

            if norm.is_finite() && norm <= T::one() {
                check_finite(t + h, &y_new)?;
                let factor = if norm == T::zero() {
                    grow_max
                } else {
                    (safety * norm.powf(-exponent)).min(grow_max).max(shrink_min)
                };
                // a step clipped by the caller says nothing about the natural size
                if h >= self.h.min(cap) {
                    self.h = (h * factor).min(self.max_step);
                }
                return Ok(Step { t: t + h, h, y: y_new });
            }

            let factor = if norm.is_finite() {
                (safety * norm.powf(-exponent)).max(shrink_min)
            } else {
                shrink_min
            };
            h = h * factor;
            self.h = h;
            if h < h_min {
                return Err(Error::StepSizeUnderflow { t: t.to_f64_lossy() });
            }
        }
    }

    /// Single untimed step of size `h` with the configured method, used to
    /// evaluate the flow inside an accepted step.
    pub fn substep<F>(&self, f: &F, t: T, y: &[T; N], h: T) -> [T; N]
    where
        F: Fn(T, &[T; N]) -> [T; N],
    {
        match self.opts.method {
            OdeMethod::FixedRk4 => rk4(f, t, y, h),
            OdeMethod::AdaptiveRk45 => dp_step(&self.tab, f, t, y, h).0,
        }
    }
}

fn check_finite<T: Scalar, const N: usize>(t: T, y: &[T; N]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { t: t.to_f64_lossy() })
    }
}

fn axpy<T: Scalar, const N: usize>(y: &[T; N], h: T, terms: &[(T, &[T; N])]) -> [T; N] {
    std::array::from_fn(|i| {
        let mut acc = T::zero();
        for (w, k) in terms {
            acc = acc + *w * k[i];
        }
        y[i] + h * acc
    })
}

fn rk4<T: Scalar, const N: usize, F>(f: &F, t: T, y: &[T; N], h: T) -> [T; N]
where
    F: Fn(T, &[T; N]) -> [T; N],
{
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let k1 = f(t, y);
    let k2 = f(t + half * h, &axpy(y, half * h, &[(T::one(), &k1)]));
    let k3 = f(t + half * h, &axpy(y, half * h, &[(T::one(), &k2)]));
    let k4 = f(t + h, &axpy(y, h, &[(T::one(), &k3)]));
    let sixth = T::one() / T::lit(6.0);
    axpy(
        y,
        h * sixth,
        &[(T::one(), &k1), (two, &k2), (two, &k3), (T::one(), &k4)],
    )
}

// Butcher-tableau indexing reads more clearly than iterator chains here.
#[allow(clippy::needless_range_loop)]
fn dp_step<T: Scalar, const N: usize, F>(tab: &Tableau<T>, f: &F, t: T, y: &[T; N], h: T) -> ([T; N], [T; N])
where
    F: Fn(T, &[T; N]) -> [T; N],
{
    let mut k = [[T::zero(); N]; 7];
    k[0] = f(t, y);
    for s in 1..7 {
        let stage: [T; N] = std::array::from_fn(|i| {
            let mut acc = T::zero();
            for j in 0..s {
                acc = acc + tab.a[s][j] * k[j][i];
            }
            y[i] + h * acc
        });
        k[s] = f(t + tab.c[s] * h, &stage);
    }
    let y_new = std::array::from_fn(|i| {
        let mut acc = T::zero();
        for s in 0..7 {
            acc = acc + tab.b5[s] * k[s][i];
        }
        y[i] + h * acc
    });
    let err = std::array::from_fn(|i| {
        let mut acc = T::zero();
        for s in 0..7 {
            acc = acc + tab.err[s] * k[s][i];
        }
        h * acc
    });
    (y_new, err)
}

/// Integrates `dy/dt = f(t, y)` from `t0` and reports the state at each
/// requested output time (which must be nondecreasing and `>= t0`).
pub fn integrate_at<T, F, const N: usize>(
    f: &F,
    t0: T,
    y0: [T; N],
    times: &[T],
    opts: &OdeOptions<T>,
    epsilon: T,
) -> Result<Vec<[T; N]>>
where
    T: Scalar,
    F: Fn(T, &[T; N]) -> [T; N],
{
    opts.validate()?;
    let mut stepper = Stepper::new(*opts, epsilon);
    let mut t = t0;
    let mut y = y0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < t {
            return Err(Error::InvalidArgument(
                "output times must be nondecreasing and start at or after t0".into(),
            ));
        }
        while t < target {
            let remaining = target - t;
            let step = stepper.step(f, t, &y, remaining)?;
            y = step.y;
            // land exactly on the output time
            t = if step.h >= remaining { target } else { step.t };
        }
        out.push(y);
    }
    Ok(out)
}
