//! The averaged birth-death process.
//!
//! Freezing the fast variable at its quasi-equilibrium gives a homogeneous
//! birth-death chain on the nonnegative integers with rates
//! `b̄_n = b(x*_n, n)` and `d̄_n = d(x*_n, n)`, absorbed at zero.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::equilibrium::EquilibriumTable;
use crate::error::{Error, Result};
use crate::model::HybridModel;
use crate::rng::seeded_rng;
use crate::scalar::Scalar;
use crate::trajectory::{EpsilonTag, HybridTrajectory, JumpEvent, JumpKind, Sample};

/// A birth-death chain on `{0, 1, 2, ...}`.
pub trait BirthDeathChain<T: Scalar>: Send + Sync {
    /// `(birth, death)` rates in state `n`.
    fn rates(&self, n: u64) -> Result<(T, T)>;
}

impl<T: Scalar, C: BirthDeathChain<T> + ?Sized> BirthDeathChain<T> for &C {
    fn rates(&self, n: u64) -> Result<(T, T)> {
        (**self).rates(n)
    }
}

/// Chain given by a rate closure. The closure is responsible for making
/// state 0 absorbing if that is intended.
pub struct RateFnChain<F>(pub F);

impl<T: Scalar, F: Fn(u64) -> (T, T) + Send + Sync> BirthDeathChain<T> for RateFnChain<F> {
    fn rates(&self, n: u64) -> Result<(T, T)> {
        Ok((self.0)(n))
    }
}

/// Averaged chain of a hybrid model, backed by a lazily grown equilibrium table.
pub struct AveragedChain<T, M> {
    table: EquilibriumTable<T, M>,
}

impl<T: Scalar, M: HybridModel<T>> AveragedChain<T, M> {
    pub fn new(table: EquilibriumTable<T, M>) -> Self {
        Self { table }
    }

    /// Chain of a model with analytic dissipativity bounds.
    pub fn from_model(model: M, tol: T) -> Result<Self> {
        Ok(Self::new(EquilibriumTable::new(model, tol)?))
    }

    pub fn table(&self) -> &EquilibriumTable<T, M> {
        &self.table
    }

    pub fn model(&self) -> &M {
        self.table.model()
    }

    pub fn equilibrium(&self, n: u64) -> Result<T> {
        self.table.get(n)
    }

    /// `(b̄_n, d̄_n)`; both vanish at `n = 0`.
    pub fn averaged_rates(&self, n: u64) -> Result<(T, T)> {
        if n == 0 {
            return Ok((T::zero(), T::zero()));
        }
        let x = self.table.get(n)?;
        let model = self.table.model();
        Ok((model.birth(x, n), model.death(x, n)))
    }
}

impl<T: Scalar, M: HybridModel<T>> BirthDeathChain<T> for AveragedChain<T, M> {
    fn rates(&self, n: u64) -> Result<(T, T)> {
        self.averaged_rates(n)
    }
}

/// Horizon of a chain simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon<T> {
    Until(T),
    /// Run until absorption, giving up (censored) past the given time.
    Absorption {
        max_time: T,
    },
}

/// Gillespie direct-method simulation of a birth-death chain from `seed`.
pub fn simulate_averaged<T: Scalar, C: BirthDeathChain<T> + ?Sized>(
    chain: &C,
    n0: u64,
    horizon: Horizon<T>,
    seed: u64,
) -> Result<HybridTrajectory<T>> {
    simulate_averaged_with(chain, n0, horizon, &mut seeded_rng(seed))
}

pub fn simulate_averaged_with<T, C, R>(
    chain: &C,
    n0: u64,
    horizon: Horizon<T>,
    rng: &mut R,
) -> Result<HybridTrajectory<T>>
where
    T: Scalar,
    C: BirthDeathChain<T> + ?Sized,
    R: Rng + ?Sized,
{
    let (t_limit, stop_at_absorption) = match horizon {
        Horizon::Until(t) => (t, false),
        Horizon::Absorption { max_time } => (max_time, true),
    };
    if !(t_limit > T::zero()) {
        return Err(Error::InvalidArgument("time horizon must be positive".into()));
    }
    let mut samples = vec![Sample {
        t: T::zero(),
        x: None,
        n: n0,
    }];
    let mut events = Vec::new();
    let mut t = T::zero();
    let mut n = n0;
    let mut absorbed_at = (n == 0).then_some(T::zero());

    while n > 0 {
        let (b, d) = chain.rates(n)?;
        let total = b + d;
        if !(total > T::zero()) {
            return Err(Error::ZeroTotalRate { n });
        }
        let hold: f64 = Exp1.sample(rng);
        let t_next = t + T::lit(hold) / total;
        if t_next > t_limit {
            break;
        }
        t = t_next;
        let u = T::lit(rng.random::<f64>());
        let (kind, n_after) = if u * total < b {
            (JumpKind::Birth, n + 1)
        } else {
            (JumpKind::Death, n - 1)
        };
        events.push(JumpEvent {
            t,
            x: None,
            n_before: n,
            n_after,
            kind,
        });
        n = n_after;
        if n == 0 {
            absorbed_at = Some(t);
        }
    }

    let t_stop = match absorbed_at {
        Some(ta) if stop_at_absorption => ta,
        _ => t_limit,
    };
    if t_stop > T::zero() && !(stop_at_absorption && absorbed_at.is_some()) {
        samples.push(Sample { t: t_stop, x: None, n });
    }
    Ok(HybridTrajectory {
        samples,
        events,
        epsilon: EpsilonTag::Averaged,
        absorbed_at,
        t_stop,
    })
}

/// Piecewise-constant path `t -> x*_{n̄_t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FastPath<T> {
    /// `(start time, value)` of each constancy interval, in time order.
    pub pieces: Vec<(T, T)>,
    pub t_end: T,
}

impl<T: Scalar> FastPath<T> {
    pub fn value_at(&self, t: T) -> Option<T> {
        let idx = self.pieces.partition_point(|p| p.0 <= t);
        (idx > 0).then(|| self.pieces[idx - 1].1)
    }
}

/// Maps an averaged path to the quasi-equilibrium of its current state.
pub fn reconstruct_fast<T: Scalar, M: HybridModel<T>>(
    chain: &AveragedChain<T, M>,
    path: &HybridTrajectory<T>,
) -> Result<FastPath<T>> {
    let mut pieces = vec![(T::zero(), chain.equilibrium(path.initial_n())?)];
    for e in &path.events {
        pieces.push((e.t, chain.equilibrium(e.n_after)?));
    }
    Ok(FastPath {
        pieces,
        t_end: path.t_stop,
    })
}

/// Copy of an averaged path whose `x` fields carry `x*_{n̄_t}`.
pub fn with_reconstruction<T: Scalar, M: HybridModel<T>>(
    chain: &AveragedChain<T, M>,
    path: &HybridTrajectory<T>,
) -> Result<HybridTrajectory<T>> {
    let mut out = path.clone();
    for s in &mut out.samples {
        s.x = Some(chain.equilibrium(s.n)?);
    }
    for e in &mut out.events {
        e.x = Some(chain.equilibrium(e.n_after)?);
    }
    Ok(out)
}
