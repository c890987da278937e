//! Replication harness comparing slow-fast runs against the averaged chain.
//!
//! Replication `i` of the `k`-th epsilon cell draws from stream `(k, i)` of
//! the master seed, and results are aggregated in replication order, so the
//! summaries do not depend on the number of worker threads.

use std::io::Write;

use rayon::prelude::*;

use crate::absorption::{absorption_probability, SeriesOptions, SeriesVerdict};
use crate::averaged::{simulate_averaged_with, AveragedChain, BirthDeathChain, Horizon};
use crate::equilibrium::DEFAULT_ROOT_TOL;
use crate::error::{Error, Result};
use crate::hybrid::{simulate_hybrid_with, HybridRun, Record, SimOptions};
use crate::model::{ModelParams, PredatorPrey};
use crate::ode::OdeOptions;
use crate::rng::{replication_rng, stream_id};
use crate::scalar::CompensatedSum;
use crate::trajectory::{EpsilonTag, HybridTrajectory};

/// Cutoff applied to absorption-time runs when none is configured.
pub const DEFAULT_MAX_TIME: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    /// Predator count at the given time.
    StateAtTime(f64),
    /// Time of absorption at zero.
    AbsorptionTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: ModelParams<f64>,
    pub epsilons: Vec<EpsilonTag<f64>>,
    pub x0: f64,
    pub n0: u64,
    pub observable: Observable,
    pub replications: u32,
    pub master_seed: u64,
    pub ode: OdeOptions<f64>,
    /// Explicit cutoff for absorption-time runs; required when absorption
    /// is not certain.
    pub max_time: Option<f64>,
    /// Worker threads; `0` uses the global rayon pool.
    pub workers: usize,
}

impl ExperimentConfig {
    /// The reference state-at-time experiment: `x0 = 10`, `n0 = 30`,
    /// observation at `t = 20`, `epsilon ∈ {1, 0.5, 0.1, averaged}`.
    pub fn reference(replications: u32, master_seed: u64) -> Self {
        Self {
            params: ModelParams::reference(),
            epsilons: vec![
                EpsilonTag::Scale(1.0),
                EpsilonTag::Scale(0.5),
                EpsilonTag::Scale(0.1),
                EpsilonTag::Averaged,
            ],
            x0: 10.0,
            n0: 30,
            observable: Observable::StateAtTime(20.0),
            replications,
            master_seed,
            ode: OdeOptions::default(),
            max_time: None,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.ode.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be at least 1".into()));
        }
        if self.epsilons.is_empty() {
            return Err(Error::InvalidArgument("epsilon list is empty".into()));
        }
        for e in &self.epsilons {
            if let EpsilonTag::Scale(v) = e {
                if !(*v > 0.0 && *v <= 1.0) {
                    return Err(Error::InvalidArgument(format!("epsilon {v} outside (0, 1]")));
                }
            }
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(Error::InvalidArgument("x0 must be positive".into()));
        }
        if let Observable::StateAtTime(t) = self.observable {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument("observation time must be positive".into()));
            }
        }
        if let Some(t) = self.max_time {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument("max_time must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Statistics of one epsilon cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub epsilon: EpsilonTag<f64>,
    /// Uncensored replications.
    pub count: u64,
    pub mean: f64,
    /// Sample standard deviation; `None` for a single draw.
    pub sd: Option<f64>,
    pub se: Option<f64>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Runs that hit the time cutoff before absorbing.
    pub censored: u64,
    /// First and last stream identifiers used.
    pub streams: (u64, u64),
}

impl ReplicationSummary {
    /// Aggregates draws in the given order.
    pub fn from_draws(epsilon: EpsilonTag<f64>, draws: &[f64], censored: u64, streams: (u64, u64)) -> Self {
        let count = draws.len() as u64;
        if draws.is_empty() {
            return Self {
                epsilon,
                count,
                mean: f64::NAN,
                sd: None,
                se: None,
                min: f64::NAN,
                q1: f64::NAN,
                median: f64::NAN,
                q3: f64::NAN,
                max: f64::NAN,
                censored,
                streams,
            };
        }
        let mean = draws.iter().copied().collect::<CompensatedSum<f64>>().value() / count as f64;
        let sd = (count > 1).then(|| {
            let ss = draws
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .collect::<CompensatedSum<f64>>()
                .value();
            (ss / (count - 1) as f64).sqrt()
        });
        let se = sd.map(|s| s / (count as f64).sqrt());
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            epsilon,
            count,
            mean,
            sd,
            se,
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
            censored,
            streams,
        }
    }

    /// Half-width of the normal 95% interval (zero for a single draw).
    pub fn ci95(&self) -> f64 {
        1.96 * self.se.unwrap_or(0.0)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * w
}

/// Outcome of one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Draw {
    Value(f64),
    Censored,
}

/// Runs every epsilon cell of the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ReplicationSummary>> {
    config.validate()?;
    let model = PredatorPrey::new(config.params)?;
    let chain = AveragedChain::from_model(model, DEFAULT_ROOT_TOL)?;

    let max_time = match config.observable {
        Observable::AbsorptionTime => absorption_cutoff(&chain, config.n0, config.max_time)?,
        Observable::StateAtTime(t) => t,
    };

    let run_cells = || -> Result<Vec<ReplicationSummary>> {
        config
            .epsilons
            .iter()
            .enumerate()
            .map(|(cell, &tag)| run_cell(config, &model, &chain, cell as u32, tag, max_time))
            .collect()
    };
    if config.workers == 0 {
        run_cells()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(run_cells)
    }
}

/// Cutoff for absorption-time runs from `n0`.
///
/// An explicit `max_time` is always accepted. Without one, the default cutoff
/// applies only when the chain is certain to absorb.
pub fn absorption_cutoff<C: BirthDeathChain<f64> + ?Sized>(chain: &C, n0: u64, max_time: Option<f64>) -> Result<f64> {
    if let Some(t) = max_time {
        return Ok(t);
    }
    let p = absorption_probability(chain, n0.max(1), &SeriesOptions::default())?;
    if p.verdict != SeriesVerdict::Diverges {
        return Err(Error::CutoffRequired { m: n0 });
    }
    Ok(DEFAULT_MAX_TIME)
}

fn run_cell(
    config: &ExperimentConfig,
    model: &PredatorPrey<f64>,
    chain: &AveragedChain<f64, PredatorPrey<f64>>,
    cell: u32,
    tag: EpsilonTag<f64>,
    max_time: f64,
) -> Result<ReplicationSummary> {
    let draws: Vec<Draw> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(config.master_seed, cell, rep);
            let path = match tag {
                EpsilonTag::Averaged => {
                    let horizon = match config.observable {
                        Observable::StateAtTime(t) => Horizon::Until(t),
                        Observable::AbsorptionTime => Horizon::Absorption { max_time },
                    };
                    simulate_averaged_with(chain, config.n0, horizon, &mut rng)?
                }
                EpsilonTag::Scale(eps) => {
                    let run = HybridRun {
                        epsilon: eps,
                        x0: config.x0,
                        n0: config.n0,
                        t_end: max_time,
                    };
                    let opts = SimOptions {
                        ode: config.ode,
                        record: Record::Endpoints,
                        stop_at_absorption: matches!(config.observable, Observable::AbsorptionTime),
                    };
                    simulate_hybrid_with(model, &run, &mut rng, &opts)?
                }
            };
            Ok(observe(&path, config.observable))
        })
        .collect::<Result<_>>()?;

    let values: Vec<f64> = draws
        .iter()
        .filter_map(|d| match d {
            Draw::Value(v) => Some(*v),
            Draw::Censored => None,
        })
        .collect();
    let censored = (draws.len() - values.len()) as u64;
    let streams = (stream_id(cell, 0), stream_id(cell, config.replications - 1));
    Ok(ReplicationSummary::from_draws(tag, &values, censored, streams))
}

fn observe(path: &HybridTrajectory<f64>, observable: Observable) -> Draw {
    match observable {
        Observable::StateAtTime(_) => Draw::Value(path.final_n() as f64),
        Observable::AbsorptionTime => match path.absorbed_at {
            Some(t) => Draw::Value(t),
            None => Draw::Censored,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapEntry {
    pub epsilon: f64,
    pub mean: f64,
    /// `|mean(eps) - mean(averaged)|`.
    pub gap: f64,
    /// Whether the 95% intervals of this cell and the averaged cell overlap.
    pub ci_overlap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub averaged_mean: f64,
    /// Slow-fast cells ordered by decreasing epsilon.
    pub entries: Vec<GapEntry>,
    /// Gaps never increase as epsilon decreases.
    pub monotone: bool,
}

/// Gap of each slow-fast cell to the averaged cell.
///
/// Returns `None` without an averaged cell or with fewer than two cells.
pub fn compare_to_averaged(summaries: &[ReplicationSummary]) -> Option<ConvergenceReport> {
    if summaries.len() < 2 {
        return None;
    }
    let avg = summaries.iter().find(|s| s.epsilon == EpsilonTag::Averaged)?;
    let mut entries: Vec<GapEntry> = summaries
        .iter()
        .filter_map(|s| match s.epsilon {
            EpsilonTag::Scale(e) => Some(GapEntry {
                epsilon: e,
                mean: s.mean,
                gap: (s.mean - avg.mean).abs(),
                ci_overlap: (s.mean - avg.mean).abs() <= s.ci95() + avg.ci95(),
            }),
            EpsilonTag::Averaged => None,
        })
        .collect();
    entries.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let monotone = entries.windows(2).all(|w| w[1].gap <= w[0].gap);
    Some(ConvergenceReport {
        averaged_mean: avg.mean,
        entries,
        monotone,
    })
}

pub const SUMMARY_HEADER: [&str; 11] = [
    "epsilon", "count", "mean", "sd", "se", "min", "q1", "median", "q3", "max", "censored",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the summary CSV; `sd` and `se` are empty for single draws and the
/// averaged cell is labelled `0`.
pub fn write_summary_csv<W: Write>(out: W, summaries: &[ReplicationSummary]) -> Result<()> {
    let err = |e: csv::Error| Error::InvalidArgument(format!("summary csv: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(err)?;
    for s in summaries {
        w.write_record([
            s.epsilon.as_f64().to_string(),
            s.count.to_string(),
            s.mean.to_string(),
            fmt_opt(s.sd),
            fmt_opt(s.se),
            s.min.to_string(),
            s.q1.to_string(),
            s.median.to_string(),
            s.q3.to_string(),
            s.max.to_string(),
            s.censored.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidArgument(format!("summary csv: {e}")))?;
    Ok(())
}

/// One parsed summary CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub epsilon: f64,
    pub count: u64,
    pub mean: f64,
    pub sd: Option<f64>,
    pub se: Option<f64>,
    pub five_numbers: [f64; 5],
    pub censored: u64,
}

pub fn read_summary_csv<R: std::io::Read>(input: R) -> Result<Vec<SummaryRow>> {
    let err = |e: String| Error::InvalidArgument(format!("summary csv: {e}"));
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| err(e.to_string()))?.clone();
    if header.iter().ne(SUMMARY_HEADER) {
        return Err(err(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| err(e.to_string()));
    let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
    let int = |s: &str| s.parse::<u64>().map_err(|e| err(e.to_string()));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        rows.push(SummaryRow {
            epsilon: num(&rec[0])?,
            count: int(&rec[1])?,
            mean: num(&rec[2])?,
            sd: opt(&rec[3])?,
            se: opt(&rec[4])?,
            five_numbers: [
                num(&rec[5])?,
                num(&rec[6])?,
                num(&rec[7])?,
                num(&rec[8])?,
                num(&rec[9])?,
            ],
            censored: int(&rec[10])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_known_draws() {
        let s = ReplicationSummary::from_draws(EpsilonTag::Scale(1.0), &[4.0, 1.0, 3.0, 2.0, 5.0], 0, (0, 4));
        assert_eq!(s.count, 5);
        assert_eq!(s.mean, 3.0);
        assert!((s.sd.unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        assert!((s.se.unwrap() - (2.5f64 / 5.0).sqrt()).abs() < 1e-15);
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
    }

    #[test]
    fn single_draw_has_no_spread() {
        let s = ReplicationSummary::from_draws(EpsilonTag::Averaged, &[7.0], 0, (0, 0));
        assert_eq!(s.mean, 7.0);
        assert_eq!(s.sd, None);
        assert_eq!(s.se, None);
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "0,1,7,,,7,7,7,7,7,0");
        let rows = read_summary_csv(text.as_bytes()).unwrap();
        assert_eq!(rows[0].sd, None);
    }

    #[test]
    fn identical_cells_have_zero_gap() {
        let a = ReplicationSummary::from_draws(EpsilonTag::Scale(0.5), &[1.0, 2.0, 3.0], 0, (0, 2));
        let b = ReplicationSummary {
            epsilon: EpsilonTag::Averaged,
            ..a.clone()
        };
        let report = compare_to_averaged(&[a, b]).unwrap();
        assert_eq!(report.entries[0].gap, 0.0);
        assert!(report.entries[0].ci_overlap);
        assert!(compare_to_averaged(&[]).is_none());
    }

    #[test]
    fn single_replication_experiment() {
        let mut cfg = ExperimentConfig::reference(1, 3);
        cfg.epsilons = vec![EpsilonTag::Scale(1.0), EpsilonTag::Averaged];
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.len(), 2);
        for s in &out {
            assert_eq!(s.count, 1);
            assert!(s.sd.is_none());
            assert_eq!(s.mean, s.median);
        }
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ExperimentConfig::reference(0, 1);
        assert!(run_experiment(&cfg).is_err());
        cfg.replications = 2;
        cfg.epsilons = vec![EpsilonTag::Scale(2.0)];
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn uncertain_absorption_needs_cutoff() {
        let geometric = crate::averaged::RateFnChain(|n: u64| (2.0 * n as f64, n as f64));
        assert_eq!(
            absorption_cutoff(&geometric, 30, None).unwrap_err(),
            Error::CutoffRequired { m: 30 }
        );
        assert_eq!(absorption_cutoff(&geometric, 30, Some(50.0)).unwrap(), 50.0);
        let chain = AveragedChain::from_model(PredatorPrey::reference(), DEFAULT_ROOT_TOL).unwrap();
        assert_eq!(absorption_cutoff(&chain, 30, None).unwrap(), DEFAULT_MAX_TIME);
    }
}
