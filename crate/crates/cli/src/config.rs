//! Run configuration: a sectioned key-value file (TOML syntax) with
//! `[model]`, `[simulation]`, `[analysis]` and `[output]` tables.
//!
//! Every model parameter is required; the other keys fall back to the
//! reference experiment. Errors carry the line and the dotted key.

use std::path::PathBuf;

use hybridavg::absorption::RATIO_WINDOW;
use hybridavg::model::ModelParams;
use hybridavg::ode::{OdeMethod, OdeOptions};
use hybridavg::EpsilonTag;
use serde::Deserialize;
use toml::Spanned;

use crate::error::CliError;

pub const DEFAULT_CONFIG: &str = include_str!("../paper4.cfg");

#[derive(Debug, Clone, PartialEq)]
pub enum ObservableKind {
    State,
    Absorption,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams<f64>,
    pub epsilons: Vec<EpsilonTag>,
    pub x0: f64,
    pub n0: u64,
    pub t_end: f64,
    pub observable: ObservableKind,
    pub max_time: Option<f64>,
    pub replications: u32,
    pub master_seed: u64,
    pub record_dt: f64,
    pub ode: OdeOptions<f64>,
    pub m: Vec<u64>,
    pub tol: f64,
    pub i_max: u64,
    pub out_dir: PathBuf,
    pub trajectory_prefix: String,
    pub summary_prefix: String,
}

type Field<T> = Option<Spanned<T>>;

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<Spanned<RawModel>>,
    #[serde(default)]
    simulation: RawSimulation,
    #[serde(default)]
    analysis: RawAnalysis,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawModel {
    x_in: Field<f64>,
    #[serde(rename = "D")]
    dilution: Field<f64>,
    #[serde(rename = "V")]
    volume: Field<f64>,
    alpha: Field<f64>,
    beta: Field<f64>,
    gamma: Field<f64>,
    mu_max: Field<f64>,
    mu_half: Field<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    epsilon: Field<Vec<f64>>,
    x0: Field<f64>,
    n0: Field<u64>,
    t_end: Field<f64>,
    observable: Field<String>,
    max_time: Field<f64>,
    replications: Field<u32>,
    master_seed: Field<u64>,
    record_dt: Field<f64>,
    dt0: Field<f64>,
    rel_tol: Field<f64>,
    abs_tol: Field<f64>,
    hazard_tol: Field<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    m: Field<Vec<u64>>,
    tol: Field<f64>,
    i_max: Field<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Field<String>,
    trajectory_prefix: Field<String>,
    summary_prefix: Field<String>,
}

/// Source text plus helpers to turn byte offsets into located errors.
struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn line_of(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn error(&self, offset: usize, key: &str, msg: impl std::fmt::Display) -> CliError {
        CliError::Config(format!("line {}: {key}: {msg}", self.line_of(offset)))
    }

    /// `section.key` for the assignment on the line containing `offset`.
    fn key_at(&self, offset: usize) -> Option<String> {
        let offset = offset.min(self.text.len());
        let line_start = self.text[..offset].rfind('\n').map_or(0, |i| i + 1);
        let line = self.text[line_start..].lines().next().unwrap_or("");
        let key = line.split_once('=')?.0.trim();
        if key.is_empty() || key.starts_with('[') {
            return None;
        }
        let section = self.text[..line_start]
            .lines()
            .rev()
            .map(str::trim)
            .find(|l| l.starts_with('['))
            .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
        Some(match section {
            Some(s) => format!("{s}.{key}"),
            None => key.to_string(),
        })
    }

    fn take<T>(
        &self,
        field: Field<T>,
        key: &str,
        check: impl Fn(&T) -> Result<(), String>,
    ) -> Result<Option<T>, CliError> {
        match field {
            None => Ok(None),
            Some(s) => {
                let start = s.span().start;
                let v = s.into_inner();
                check(&v).map_err(|m| self.error(start, key, m))?;
                Ok(Some(v))
            }
        }
    }
}

fn positive(v: &f64) -> Result<(), String> {
    if v.is_finite() && *v > 0.0 {
        Ok(())
    } else {
        Err(format!("must be finite and positive, got {v}"))
    }
}

fn nonnegative(v: &f64) -> Result<(), String> {
    if v.is_finite() && *v >= 0.0 {
        Ok(())
    } else {
        Err(format!("must be finite and nonnegative, got {v}"))
    }
}

fn any<T>(_: &T) -> Result<(), String> {
    Ok(())
}

pub fn epsilon_tag(v: f64) -> Result<EpsilonTag, String> {
    EpsilonTag::from_f64(v).map_err(|e| e.to_string().replace("invalid argument: ", ""))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let src = Source { text };
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().trim().to_string();
            match e.span() {
                Some(span) => match src.key_at(span.start) {
                    Some(key) => src.error(span.start, &key, msg),
                    None => CliError::Config(format!("line {}: {msg}", src.line_of(span.start))),
                },
                None => CliError::Config(msg),
            }
        })?;

        let model_span = raw.model.as_ref().map(|m| m.span().start);
        let model = raw.model.map(Spanned::into_inner).unwrap_or_default();
        let need = |field: Field<f64>, key: &str| -> Result<f64, CliError> {
            src.take(field, &format!("model.{key}"), positive)?
                .ok_or_else(|| match model_span {
                    Some(at) => src.error(at, &format!("model.{key}"), "missing required key"),
                    None => CliError::Config(format!("model.{key}: missing required key (no [model] section)")),
                })
        };
        let params = ModelParams {
            x_in: need(model.x_in, "x_in")?,
            dilution: need(model.dilution, "D")?,
            volume: need(model.volume, "V")?,
            alpha: need(model.alpha, "alpha")?,
            beta: need(model.beta, "beta")?,
            gamma: need(model.gamma, "gamma")?,
            mu_max: need(model.mu_max, "mu_max")?,
            mu_half: need(model.mu_half, "mu_half")?,
        };

        let sim = raw.simulation;
        let epsilons = match sim.epsilon {
            None => vec![
                EpsilonTag::Scale(1.0),
                EpsilonTag::Scale(0.5),
                EpsilonTag::Scale(0.1),
                EpsilonTag::Averaged,
            ],
            Some(s) => {
                let at = s.span().start;
                let list = s.into_inner();
                if list.is_empty() {
                    return Err(src.error(at, "simulation.epsilon", "list is empty"));
                }
                list.into_iter()
                    .map(|v| epsilon_tag(v).map_err(|m| src.error(at, "simulation.epsilon", m)))
                    .collect::<Result<_, _>>()?
            }
        };
        let observable = match src.take(sim.observable, "simulation.observable", |s: &String| match s.as_str() {
            "state" | "absorption" => Ok(()),
            other => Err(format!("expected \"state\" or \"absorption\", got {other:?}")),
        })? {
            Some(s) if s == "absorption" => ObservableKind::Absorption,
            _ => ObservableKind::State,
        };
        let defaults = OdeOptions::<f64>::default();
        let ode = OdeOptions {
            method: OdeMethod::AdaptiveRk45,
            dt0: src.take(sim.dt0, "simulation.dt0", positive)?.unwrap_or(defaults.dt0),
            rel_tol: src
                .take(sim.rel_tol, "simulation.rel_tol", positive)?
                .unwrap_or(defaults.rel_tol),
            abs_tol: src
                .take(sim.abs_tol, "simulation.abs_tol", positive)?
                .unwrap_or(defaults.abs_tol),
            hazard_tol: src
                .take(sim.hazard_tol, "simulation.hazard_tol", positive)?
                .unwrap_or(defaults.hazard_tol),
        };
        let analysis = raw.analysis;
        let output = raw.output;
        let nonempty = |s: &String| {
            if s.is_empty() {
                Err("must not be empty".to_string())
            } else {
                Ok(())
            }
        };

        Ok(Self {
            params,
            epsilons,
            x0: src.take(sim.x0, "simulation.x0", positive)?.unwrap_or(10.0),
            n0: src.take(sim.n0, "simulation.n0", any)?.unwrap_or(30),
            t_end: src.take(sim.t_end, "simulation.t_end", positive)?.unwrap_or(20.0),
            observable,
            max_time: src.take(sim.max_time, "simulation.max_time", positive)?,
            replications: src
                .take(sim.replications, "simulation.replications", |r: &u32| {
                    if *r == 0 {
                        Err("must be at least 1".to_string())
                    } else {
                        Ok(())
                    }
                })?
                .unwrap_or(10_000),
            master_seed: src
                .take(sim.master_seed, "simulation.master_seed", any)?
                .unwrap_or(2024),
            record_dt: src
                .take(sim.record_dt, "simulation.record_dt", nonnegative)?
                .unwrap_or(0.0),
            ode,
            m: src
                .take(analysis.m, "analysis.m", any)?
                .unwrap_or_else(|| vec![1, 5, 10, 30]),
            tol: src.take(analysis.tol, "analysis.tol", positive)?.unwrap_or(1e-12),
            i_max: src
                .take(analysis.i_max, "analysis.i_max", |v: &u64| {
                    if *v <= RATIO_WINDOW as u64 {
                        Err(format!("must exceed the {RATIO_WINDOW}-term ratio window, got {v}"))
                    } else {
                        Ok(())
                    }
                })?
                .unwrap_or(100_000),
            out_dir: PathBuf::from(
                src.take(output.dir, "output.dir", nonempty)?
                    .unwrap_or_else(|| ".".into()),
            ),
            trajectory_prefix: src
                .take(output.trajectory_prefix, "output.trajectory_prefix", nonempty)?
                .unwrap_or_else(|| "traj".into()),
            summary_prefix: src
                .take(output.summary_prefix, "output.summary_prefix", nonempty)?
                .unwrap_or_else(|| "summary".into()),
        })
    }

    pub fn load(path: Option<&std::path::Path>) -> Result<Self, CliError> {
        match path {
            None => Self::parse(DEFAULT_CONFIG),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }
}
