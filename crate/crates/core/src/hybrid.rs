//! Exact simulation of the slow-fast hybrid process.
//!
//! Between jumps the pair `(x, L)` solves
//!
//! ```text
//! dx/dt = g(x, n) / eps,    dL/dt = b(x, n) + d(x, n),
//! ```
//!
//! and a jump fires when the cumulative hazard `L` reaches an independent
//! `Exp(1)` threshold. The crossing is localized by bisection in time inside
//! the step that brackets it, then the jump is a birth with probability
//! `b / (b + d)` evaluated at the jump time.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::model::{monod_mu, Dissipativity, HybridModel, ModelParams, PredatorPrey};
use crate::ode::{integrate_at, OdeOptions, Stepper};
use crate::rng::seeded_rng;
use crate::scalar::Scalar;
use crate::trajectory::{EpsilonTag, HybridTrajectory, JumpEvent, JumpKind, Sample};

const MAX_LOCALIZE_ITERS: usize = 200;

/// Which states are kept as samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Record<T> {
    /// Every accepted integration step.
    Steps,
    /// Multiples of the given spacing, plus the final time.
    Grid(T),
    /// Initial and final state only.
    Endpoints,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions<T> {
    pub ode: OdeOptions<T>,
    pub record: Record<T>,
    /// End the run at absorption instead of following the `n = 0` flow to `t_end`.
    pub stop_at_absorption: bool,
}

impl<T: Scalar> Default for SimOptions<T> {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            record: Record::Steps,
            stop_at_absorption: false,
        }
    }
}

/// Initial condition and horizon of one hybrid run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridRun<T> {
    pub epsilon: T,
    pub x0: T,
    pub n0: u64,
    pub t_end: T,
}

impl<T: Scalar> HybridRun<T> {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero() && self.epsilon <= T::one()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.x0 >= T::zero() && self.x0.is_finite()) {
            return Err(Error::InvalidArgument("x0 must be finite and >= 0".into()));
        }
        if !(self.t_end > T::zero()) {
            return Err(Error::InvalidArgument("t_end must be positive".into()));
        }
        Ok(())
    }
}

/// Simulates one path from `seed`.
pub fn simulate_hybrid<T: Scalar, M: HybridModel<T> + ?Sized>(
    model: &M,
    run: &HybridRun<T>,
    seed: u64,
    opts: &SimOptions<T>,
) -> Result<HybridTrajectory<T>> {
    simulate_hybrid_with(model, run, &mut seeded_rng(seed), opts)
}

struct Recorder<T> {
    record: Record<T>,
    next_grid: u64,
    t_end: T,
}

impl<T: Scalar> Recorder<T> {
    fn new(record: Record<T>, t_end: T) -> Result<Self> {
        if let Record::Grid(dt) = record {
            if !(dt > T::zero()) {
                return Err(Error::InvalidArgument("recording grid spacing must be positive".into()));
            }
        }
        Ok(Self {
            record,
            next_grid: 1,
            t_end,
        })
    }

    /// Next time the integrator must land on exactly.
    fn next_stop(&self) -> T {
        match self.record {
            Record::Grid(dt) => (T::count(self.next_grid) * dt).min(self.t_end),
            _ => self.t_end,
        }
    }

    fn wants(&mut self, t: T) -> bool {
        match self.record {
            Record::Steps => true,
            Record::Endpoints => t >= self.t_end,
            Record::Grid(dt) => {
                let mut hit = t >= self.t_end;
                while T::count(self.next_grid) * dt <= t {
                    self.next_grid += 1;
                    hit = true;
                }
                hit
            }
        }
    }
}

/// Simulates one path drawing from the supplied generator.
pub fn simulate_hybrid_with<T, M, R>(
    model: &M,
    run: &HybridRun<T>,
    rng: &mut R,
    opts: &SimOptions<T>,
) -> Result<HybridTrajectory<T>>
where
    T: Scalar,
    M: HybridModel<T> + ?Sized,
    R: Rng + ?Sized,
{
    run.validate()?;
    opts.ode.validate()?;
    let eps = run.epsilon;
    let t_end = run.t_end;
    let hazard_tol = opts.ode.hazard_tol;

    let mut recorder = Recorder::new(opts.record, t_end)?;
    let mut stepper = Stepper::<T, 2>::new(opts.ode, eps);
    let mut samples = vec![Sample {
        t: T::zero(),
        x: Some(run.x0),
        n: run.n0,
    }];
    let mut events = Vec::new();

    let mut t = T::zero();
    let mut x = run.x0;
    let mut n = run.n0;
    let mut hazard = T::zero();
    let mut threshold = draw_exp1::<T, R>(rng);
    let mut absorbed_at = (n == 0).then_some(T::zero());

    if n == 0 && opts.stop_at_absorption {
        return Ok(HybridTrajectory {
            samples,
            events,
            epsilon: EpsilonTag::Scale(eps),
            absorbed_at,
            t_stop: T::zero(),
        });
    }

    while t < t_end {
        let target = recorder.next_stop();
        let remaining = target - t;
        let level = n;
        let f = |_t: T, y: &[T; 2]| [model.drift(y[0], level) / eps, model.total_rate(y[0], level)];
        let start = [x, hazard];
        let step = stepper.step(&f, t, &start, remaining)?;

        if n > 0 && step.y[1] >= threshold {
            let (s, y) = localize(&stepper, &f, t, &start, step.h, step.y, threshold, hazard_tol);
            t = t + s;
            x = y[0];
            if !x.is_finite() {
                return Err(Error::NonFiniteState { t: t.to_f64_lossy() });
            }
            let b = model.birth(x, n);
            let d = model.death(x, n);
            let total = b + d;
            if !(total > T::zero()) {
                return Err(Error::ZeroTotalRate { n });
            }
            let u = T::lit(rng.random::<f64>());
            let kind = if u * total < b {
                JumpKind::Birth
            } else {
                JumpKind::Death
            };
            let n_after = match kind {
                JumpKind::Birth => n + 1,
                JumpKind::Death => n - 1,
            };
            events.push(JumpEvent {
                t,
                x: Some(x),
                n_before: n,
                n_after,
                kind,
            });
            n = n_after;
            hazard = T::zero();
            threshold = draw_exp1::<T, R>(rng);
            if n == 0 {
                absorbed_at = Some(t);
                if opts.stop_at_absorption {
                    break;
                }
            }
            continue;
        }

        t = if step.h >= remaining { target } else { step.t };
        x = step.y[0];
        hazard = step.y[1];
        if recorder.wants(t) {
            samples.push(Sample { t, x: Some(x), n });
        }
    }

    Ok(HybridTrajectory {
        samples,
        events,
        epsilon: EpsilonTag::Scale(eps),
        absorbed_at,
        t_stop: t,
    })
}

fn draw_exp1<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let e: f64 = Exp1.sample(rng);
    T::lit(e)
}

/// Bisection in time on `(0, h]` for the first `s` with `L(s) >= threshold`,
/// stopping once `L(s) - threshold <= tol`.
#[allow(clippy::too_many_arguments)]
fn localize<T, F>(
    stepper: &Stepper<T, 2>,
    f: &F,
    t: T,
    start: &[T; 2],
    h: T,
    y_h: [T; 2],
    threshold: T,
    tol: T,
) -> (T, [T; 2])
where
    T: Scalar,
    F: Fn(T, &[T; 2]) -> [T; 2],
{
    let half = T::lit(0.5);
    let mut lo = T::zero();
    let mut hi = h;
    let mut y_hi = y_h;
    for _ in 0..MAX_LOCALIZE_ITERS {
        if y_hi[1] - threshold <= tol {
            break;
        }
        let mid = lo + (hi - lo) * half;
        if mid <= lo || mid >= hi {
            break;
        }
        let y_mid = stepper.substep(f, t, start, mid);
        if y_mid[1] >= threshold {
            hi = mid;
            y_hi = y_mid;
        } else {
            lo = mid;
        }
    }
    (hi, y_hi)
}

/// Path of the frozen-`n` fast subsystem `dx/dt = g(x, n) / eps` on `times`.
pub fn solve_frozen_ode<T: Scalar, M: HybridModel<T> + ?Sized>(
    model: &M,
    n: u64,
    epsilon: T,
    x0: T,
    times: &[T],
    ode: &OdeOptions<T>,
) -> Result<Vec<(T, T)>> {
    if !(epsilon > T::zero()) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let f = |_t: T, y: &[T; 1]| [model.drift(y[0], n) / epsilon];
    let ys = integrate_at(&f, T::zero(), [x0], times, ode, epsilon)?;
    Ok(times.iter().zip(ys).map(|(&t, y)| (t, y[0])).collect())
}

/// Solution of the large-population limit
///
/// ```text
/// dx/dt = D (x_in - x) - (alpha / V) mu(x) y,
/// dy/dt = (beta mu(x) - gamma D) y,
/// ```
///
/// reported at `times` as `(t, x, y)`.
pub fn solve_deterministic_limit<T: Scalar>(
    params: &ModelParams<T>,
    x0: T,
    y0: T,
    times: &[T],
    ode: &OdeOptions<T>,
) -> Result<Vec<(T, T, T)>> {
    if !(x0 >= T::zero() && y0 >= T::zero()) {
        return Err(Error::InvalidArgument("x0 and y0 must be nonnegative".into()));
    }
    let p = *params;
    let f = move |_t: T, s: &[T; 2]| deterministic_rhs(&p, s[0], s[1]);
    let ys = integrate_at(&f, T::zero(), [x0, y0], times, ode, T::one())?;
    Ok(times.iter().zip(ys).map(|(&t, s)| (t, s[0], s[1])).collect())
}

/// Right-hand side of the large-population limit.
pub fn deterministic_rhs<T: Scalar>(p: &ModelParams<T>, x: T, y: T) -> [T; 2] {
    let mu = p.mu_max * x / (p.mu_half + x);
    [
        p.dilution * (p.x_in - x) - p.alpha / p.volume * mu * y,
        (p.beta * mu - p.gamma * p.dilution) * y,
    ]
}

/// Coexistence fixed point of the large-population limit, if one exists:
/// `mu(x) = gamma D / beta`, `y = D (x_in - x) V / (alpha mu(x))`.
pub fn deterministic_fixed_point<T: Scalar>(p: &ModelParams<T>) -> Option<(T, T)> {
    let target = p.gamma * p.dilution / p.beta;
    if !(target > T::zero() && target < p.mu_max) {
        return None;
    }
    let x = p.mu_half * target / (p.mu_max - target);
    if x >= p.x_in {
        return None;
    }
    let mu = monod_mu(x, p).ok()?;
    let y = p.dilution * (p.x_in - x) * p.volume / (p.alpha * mu);
    Some((x, y))
}

/// Largest excess of `x` over the envelope
/// `(x_0 + B) exp(-delta t / eps) + B`, `B = sup g(0, .) / delta`,
/// over the samples and jump points of a hybrid path.
pub fn envelope_excess<T: Scalar>(path: &HybridTrajectory<T>, bounds: &Dissipativity<T>) -> T {
    let eps = match path.epsilon {
        EpsilonTag::Scale(e) => e,
        EpsilonTag::Averaged => return T::neg_infinity(),
    };
    let x0 = match path.samples.first().and_then(|s| s.x) {
        Some(x) => x,
        None => return T::neg_infinity(),
    };
    let points = path
        .samples
        .iter()
        .filter_map(|s| s.x.map(|x| (s.t, x)))
        .chain(path.events.iter().filter_map(|e| e.x.map(|x| (e.t, x))));
    points
        .map(|(t, x)| x - bounds.trajectory_envelope(x0, t, eps))
        .fold(T::neg_infinity(), T::max)
}

/// A path of the volume-rescaled process, where the jump component is
/// reported as the density `n / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledTrajectory<T> {
    pub scale: u64,
    pub path: HybridTrajectory<T>,
}

impl<T: Scalar> RescaledTrajectory<T> {
    pub fn density(&self, n: u64) -> T {
        T::count(n) / T::count(self.scale)
    }

    /// `(t, x, n / N)` for every recorded sample.
    pub fn densities(&self) -> Vec<(T, T, T)> {
        self.path
            .samples
            .iter()
            .filter_map(|s| s.x.map(|x| (s.t, x, self.density(s.n))))
            .collect()
    }
}

/// Simulates the process with volume `N V` and `round(N y0)` predators at
/// `eps = 1`; jump rates therefore scale with `N` in density units.
#[allow(clippy::too_many_arguments)]
pub fn simulate_rescaled<T: Scalar>(
    params: &ModelParams<T>,
    scale: u64,
    x0: T,
    density0: T,
    t_end: T,
    seed: u64,
    opts: &SimOptions<T>,
) -> Result<RescaledTrajectory<T>> {
    if scale == 0 {
        return Err(Error::InvalidArgument("scale N must be at least 1".into()));
    }
    if !(density0 >= T::zero()) {
        return Err(Error::InvalidArgument("initial density must be nonnegative".into()));
    }
    let model = PredatorPrey::new(params.with_volume_scaled(scale))?;
    let n0 = (density0 * T::count(scale))
        .round()
        .to_u64()
        .ok_or_else(|| Error::InvalidArgument("initial count out of range".into()))?;
    let run = HybridRun {
        epsilon: T::one(),
        x0,
        n0,
        t_end,
    };
    let path = simulate_hybrid(&model, &run, seed, opts)?;
    Ok(RescaledTrajectory { scale, path })
}

/// Sup-distance between a rescaled path and the deterministic limit started
/// from the same point, over the path's samples.
pub fn sup_distance_to_limit<T: Scalar>(
    params: &ModelParams<T>,
    rescaled: &RescaledTrajectory<T>,
    ode: &OdeOptions<T>,
) -> Result<T> {
    let pts = rescaled.densities();
    let Some(&(_, x0, y0)) = pts.first() else {
        return Ok(T::zero());
    };
    let times: Vec<T> = pts.iter().map(|p| p.0).collect();
    let det = solve_deterministic_limit(params, x0, y0, &times, ode)?;
    Ok(pts
        .iter()
        .zip(det)
        .map(|(&(_, x, y), (_, xd, yd))| (x - xd).abs().max((y - yd).abs()))
        .fold(T::zero(), T::max))
}
