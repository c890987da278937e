use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hybridavg::absorption::{absorption_time_oracle, analyze, MeanTime, SeriesOptions, SeriesVerdict};
use hybridavg::averaged::{simulate_averaged, with_reconstruction, Horizon};
use hybridavg::hybrid::{simulate_hybrid, HybridRun, Record, SimOptions};
use hybridavg::model::PredatorPrey;
use hybridavg::montecarlo::{compare_to_averaged, run_experiment, write_summary_csv};
use hybridavg::{AveragedChain, EpsilonTag, ExperimentConfig, Observable};

use crate::config::{epsilon_tag, ObservableKind, RunConfig};
use crate::error::CliError;
use crate::{AbsorbArgs, Common};

pub const SEED_ENV: &str = "HYBRIDAVG_SEED";

/// Config file with command-line overrides applied.
fn resolve(args: &Common) -> Result<RunConfig, CliError> {
    let mut c = RunConfig::load(args.config.as_deref())?;
    if !args.epsilons.is_empty() {
        c.epsilons = args
            .epsilons
            .iter()
            .map(|&e| epsilon_tag(e).map_err(|m| CliError::Config(format!("--epsilon: {m}"))))
            .collect::<Result<_, _>>()?;
    }
    if let Some(r) = args.reps {
        if r == 0 {
            return Err(CliError::Config("--reps: must be at least 1".into()));
        }
        c.replications = r;
    }
    if let Some(t) = args.t_end {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Config(format!(
                "--t-end: must be finite and positive, got {t}"
            )));
        }
        c.t_end = t;
    }
    if let Some(dir) = &args.out {
        c.out_dir = dir.clone();
    }
    Ok(c)
}

fn seeds(args: &Common, config: &RunConfig) -> Result<Vec<u64>, CliError> {
    if !args.seeds.is_empty() {
        return Ok(args.seeds.clone());
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(|s| vec![s])
            .map_err(|_| CliError::Config(format!("{SEED_ENV}: not an unsigned integer: {v:?}"))),
        Err(_) => Ok(vec![config.master_seed]),
    }
}

fn single_seed(args: &Common, config: &RunConfig) -> Result<u64, CliError> {
    match seeds(args, config)?.as_slice() {
        [s] => Ok(*s),
        _ => Err(CliError::Config("--seed: this command takes a single seed".into())),
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
    Ok((path, BufWriter::new(file)))
}

pub fn simulate(args: &Common, out: &mut impl Write) -> Result<u8, CliError> {
    let config = resolve(args)?;
    let seeds = seeds(args, &config)?;
    let model = PredatorPrey::new(config.params)?;
    let chain = AveragedChain::from_model(model, 1e-12)?;
    let opts = SimOptions {
        ode: config.ode,
        record: if config.record_dt > 0.0 {
            Record::Grid(config.record_dt)
        } else {
            Record::Steps
        },
        stop_at_absorption: false,
    };
    for &seed in &seeds {
        for &tag in &config.epsilons {
            let path = match tag {
                EpsilonTag::Averaged => {
                    let p = simulate_averaged(&chain, config.n0, Horizon::Until(config.t_end), seed)?;
                    with_reconstruction(&chain, &p)?
                }
                EpsilonTag::Scale(epsilon) => {
                    let run = HybridRun {
                        epsilon,
                        x0: config.x0,
                        n0: config.n0,
                        t_end: config.t_end,
                    };
                    simulate_hybrid(&model, &run, seed, &opts)?
                }
            };
            let name = format!("{}_eps{}_s{seed}.csv", config.trajectory_prefix, tag);
            let (file, mut w) = create(&config.out_dir, &name)?;
            path.write_csv(&mut w)?;
            w.flush()?;
            writeln!(
                out,
                "{}: {} jumps, n({}) = {}",
                file.display(),
                path.events.len(),
                config.t_end,
                path.final_n()
            )?;
        }
    }
    Ok(0)
}

pub fn compare(args: &Common, out: &mut impl Write) -> Result<u8, CliError> {
    let config = resolve(args)?;
    let experiment = ExperimentConfig {
        params: config.params,
        epsilons: config.epsilons.clone(),
        x0: config.x0,
        n0: config.n0,
        observable: match config.observable {
            ObservableKind::State => Observable::StateAtTime(config.t_end),
            ObservableKind::Absorption => Observable::AbsorptionTime,
        },
        replications: config.replications,
        master_seed: single_seed(args, &config)?,
        ode: config.ode,
        max_time: config.max_time,
        workers: args.workers.unwrap_or(0),
    };
    experiment.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let summaries = run_experiment(&experiment)?;

    let (file, mut w) = create(&config.out_dir, &format!("{}.csv", config.summary_prefix))?;
    write_summary_csv(&mut w, &summaries)?;
    w.flush()?;

    let label = match config.observable {
        ObservableKind::State => format!("mean n({})", config.t_end),
        ObservableKind::Absorption => "mean t_abs".to_string(),
    };
    let width = label.len().max(8);
    write!(out, "{:<width$}", "epsilon")?;
    for s in &summaries {
        write!(out, " {:>10}", s.epsilon.to_string())?;
    }
    writeln!(out)?;
    write!(out, "{label:<width$}")?;
    for s in &summaries {
        write!(out, " {:>10.4}", s.mean)?;
    }
    writeln!(out)?;
    let censored: u64 = summaries.iter().map(|s| s.censored).sum();
    if censored > 0 {
        writeln!(out, "{censored} runs censored at the time cutoff")?;
    }

    if let Some(report) = compare_to_averaged(&summaries) {
        writeln!(out, "\ngap to the averaged model (mean {:.4}):", report.averaged_mean)?;
        for e in &report.entries {
            writeln!(
                out,
                "  epsilon {:<6} gap {:.4}  95% intervals overlap: {}",
                e.epsilon,
                e.gap,
                if e.ci_overlap { "yes" } else { "no" }
            )?;
        }
        writeln!(
            out,
            "gap shrinks with epsilon: {}",
            if report.monotone { "yes" } else { "no" }
        )?;
    }
    writeln!(out, "summary written to {}", file.display())?;
    Ok(0)
}

pub const ABSORPTION_HEADER: [&str; 9] = [
    "m",
    "p_m",
    "t_m",
    "probability_verdict",
    "time_verdict",
    "rho_terms",
    "time_terms",
    "truncation_bound",
    "oracle_t_m",
];

fn fmt_time(t: MeanTime<f64>) -> String {
    match t {
        MeanTime::Finite(v) => v.to_string(),
        MeanTime::Infinite => "inf".into(),
        MeanTime::Undetermined => String::new(),
    }
}

pub fn absorb(args: &AbsorbArgs, out: &mut impl Write) -> Result<u8, CliError> {
    let mut config = resolve(&args.common)?;
    if !args.m.is_empty() {
        config.m = args.m.clone();
    }
    if config.m.is_empty() {
        return Err(CliError::Config("no initial states given (--m or analysis.m)".into()));
    }
    if let Some(tol) = args.tol {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(CliError::Config(format!(
                "--tol: must be finite and positive, got {tol}"
            )));
        }
        config.tol = tol;
    }
    let chain = AveragedChain::from_model(PredatorPrey::new(config.params)?, 1e-12)?;
    let opts = SeriesOptions {
        tol: config.tol,
        i_max: config.i_max,
    };

    let (file, w) = create(&config.out_dir, &format!("{}_absorption.csv", config.summary_prefix))?;
    let mut csv = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| CliError::Runtime(format!("absorption csv: {e}"));
    csv.write_record(ABSORPTION_HEADER).map_err(csv_err)?;

    write!(
        out,
        "{:>6} {:>8} {:>14} {:>12} {:>12} {:>12}",
        "m", "p_m", "t_m", "p verdict", "t verdict", "trunc bound"
    )?;
    if args.oracle {
        write!(out, " {:>14} {:>10}", "oracle t_m", "rel diff")?;
    }
    writeln!(out)?;

    let mut undetermined = false;
    for &m in &config.m {
        let r = analyze(&chain, m, &opts)?;
        undetermined |=
            r.divergence_verdict == SeriesVerdict::Undetermined || r.time_verdict == SeriesVerdict::Undetermined;
        let oracle = match (args.oracle, r.t_m) {
            (true, MeanTime::Finite(_)) if m > 0 => {
                let o = absorption_time_oracle(&chain, m, 64, 1e-12, 1 << 16)?;
                o.converged.then_some(o.value)
            }
            (true, MeanTime::Finite(_)) => Some(0.0),
            _ => None,
        };
        let p = r.p_m.map(|p| p.to_string()).unwrap_or_default();
        write!(
            out,
            "{m:>6} {:>8} {:>14} {:>12} {:>12} {:>12.3e}",
            r.p_m.map(|p| format!("{p:.6}")).unwrap_or_else(|| "?".into()),
            match r.t_m {
                MeanTime::Finite(t) => format!("{t:.6}"),
                MeanTime::Infinite => "inf".into(),
                MeanTime::Undetermined => "?".into(),
            },
            r.divergence_verdict.as_str(),
            r.time_verdict.as_str(),
            r.truncation_error_bound
        )?;
        if args.oracle {
            match (oracle, r.t_m.finite()) {
                (Some(o), Some(t)) => {
                    let rel = if o == 0.0 { (t - o).abs() } else { (t - o).abs() / o };
                    write!(out, " {o:>14.6} {rel:>10.2e}")?;
                }
                _ => write!(out, " {:>14} {:>10}", "-", "-")?,
            }
        }
        writeln!(out)?;
        csv.write_record([
            m.to_string(),
            p,
            fmt_time(r.t_m),
            r.divergence_verdict.as_str().to_string(),
            r.time_verdict.as_str().to_string(),
            r.rho_terms_used.to_string(),
            r.time_terms_used.to_string(),
            format!("{:e}", r.truncation_error_bound),
            oracle.map(|o| o.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    csv.flush()?;
    writeln!(out, "results written to {}", file.display())?;
    if undetermined {
        writeln!(out, "warning: some series could not be classified within i_max terms")?;
        if args.strict {
            return Ok(2);
        }
    }
    Ok(0)
}
