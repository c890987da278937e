//! Simulated paths and their CSV form.
//!
//! The CSV header is `t,x,n,event`. Sample rows leave `event` empty; jump
//! rows carry `birth` or `death` and the state just after the jump. Rows are
//! sorted by `t`, and at equal times sample rows precede event rows. An empty
//! `x` means the continuous component was not tracked (averaged chain without
//! reconstruction).

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JumpKind {
    Birth,
    Death,
}

impl JumpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JumpKind::Birth => "birth",
            JumpKind::Death => "death",
        }
    }
}

impl fmt::Display for JumpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Time-scale label of a run: a slow-fast `epsilon`, or the averaged limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonTag<T> {
    Scale(T),
    Averaged,
}

impl<T: Scalar> EpsilonTag<T> {
    /// Tables use `0` for the averaged model.
    pub fn as_f64(&self) -> f64 {
        match self {
            EpsilonTag::Scale(e) => e.to_f64_lossy(),
            EpsilonTag::Averaged => 0.0,
        }
    }

    pub fn from_f64(v: f64) -> Result<Self> {
        if v == 0.0 {
            Ok(EpsilonTag::Averaged)
        } else if v > 0.0 && v <= 1.0 {
            Ok(EpsilonTag::Scale(T::lit(v)))
        } else {
            Err(Error::InvalidArgument(format!(
                "epsilon must be 0 (averaged) or lie in (0, 1], got {v}"
            )))
        }
    }
}

impl<T: Scalar> fmt::Display for EpsilonTag<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub t: T,
    pub x: Option<T>,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent<T> {
    pub t: T,
    /// Continuous component at the jump, when tracked.
    pub x: Option<T>,
    pub n_before: u64,
    pub n_after: u64,
    pub kind: JumpKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrajectory<T> {
    pub samples: Vec<Sample<T>>,
    pub events: Vec<JumpEvent<T>>,
    pub epsilon: EpsilonTag<T>,
    pub absorbed_at: Option<T>,
    /// Time at which the simulation stopped.
    pub t_stop: T,
}

impl<T: Scalar> HybridTrajectory<T> {
    pub fn initial_n(&self) -> u64 {
        self.samples.first().map(|s| s.n).unwrap_or(0)
    }

    pub fn final_n(&self) -> u64 {
        self.events
            .last()
            .map(|e| e.n_after)
            .unwrap_or_else(|| self.initial_n())
    }

    /// Predator count at time `t` (right-continuous).
    pub fn n_at(&self, t: T) -> u64 {
        let idx = self.events.partition_point(|e| e.t <= t);
        if idx == 0 {
            self.initial_n()
        } else {
            self.events[idx - 1].n_after
        }
    }

    /// Times at which the jump component changes, with the new value.
    pub fn jump_times(&self) -> impl Iterator<Item = (T, u64)> + '_ {
        self.events.iter().map(|e| (e.t, e.n_after))
    }

    /// Checks the structural invariants: increasing sample times, unit jumps,
    /// consistency of samples with events, nothing after absorption.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("trajectory invariant: {m}")));
        if self.samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return bad("sample times not strictly increasing");
        }
        if self.events.windows(2).any(|w| w[1].t < w[0].t) {
            return bad("event times decreasing");
        }
        let mut n = self.initial_n();
        for e in &self.events {
            if e.n_before != n {
                return bad("event does not start from the current state");
            }
            let ok = match e.kind {
                JumpKind::Birth => e.n_after == n + 1,
                JumpKind::Death => n > 0 && e.n_after == n - 1,
            };
            if !ok {
                return bad("jump is not a unit step of the declared kind");
            }
            n = e.n_after;
        }
        for s in &self.samples {
            if s.n != self.n_at(s.t) {
                return bad("sample disagrees with event history");
            }
        }
        if let Some(ta) = self.absorbed_at {
            if self.events.iter().any(|e| e.t > ta) {
                return bad("event after absorption");
            }
            if self.samples.iter().any(|s| s.t >= ta && s.n != 0) {
                return bad("nonzero state after absorption");
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.rows())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Rows in output order.
    pub fn rows(&self) -> Vec<TrajectoryRow> {
        let mut rows = Vec::with_capacity(self.samples.len() + self.events.len());
        let (mut i, mut j) = (0, 0);
        while i < self.samples.len() || j < self.events.len() {
            let take_sample = match (self.samples.get(i), self.events.get(j)) {
                (Some(s), Some(e)) => s.t <= e.t,
                (Some(_), None) => true,
                _ => false,
            };
            if take_sample {
                let s = &self.samples[i];
                rows.push(TrajectoryRow {
                    t: s.t.to_f64_lossy(),
                    x: s.x.map(Scalar::to_f64_lossy),
                    n: s.n,
                    event: None,
                });
                i += 1;
            } else {
                let e = &self.events[j];
                rows.push(TrajectoryRow {
                    t: e.t.to_f64_lossy(),
                    x: e.x.map(Scalar::to_f64_lossy),
                    n: e.n_after,
                    event: Some(e.kind),
                });
                j += 1;
            }
        }
        rows
    }
}

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: Option<f64>,
    pub n: u64,
    pub event: Option<JumpKind>,
}

pub const TRAJECTORY_HEADER: [&str; 4] = ["t", "x", "n", "event"];

fn csv_err(e: impl fmt::Display) -> Error {
    Error::InvalidArgument(format!("trajectory csv: {e}"))
}

fn write_rows<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER).map_err(csv_err)?;
    for r in rows {
        let x = r.x.map(|v| v.to_string()).unwrap_or_default();
        let ev = r.event.map(JumpKind::as_str).unwrap_or("");
        w.write_record([r.t.to_string(), x, r.n.to_string(), ev.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)?;
    Ok(())
}

/// Parses a trajectory CSV, enforcing the header and the row schema.
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(csv_err(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let t = f64::from_str(&rec[0]).map_err(csv_err)?;
        let x = if rec[1].is_empty() {
            None
        } else {
            Some(f64::from_str(&rec[1]).map_err(csv_err)?)
        };
        let n = u64::from_str(&rec[2]).map_err(csv_err)?;
        let event = match &rec[3] {
            "" => None,
            "birth" => Some(JumpKind::Birth),
            "death" => Some(JumpKind::Death),
            other => return Err(csv_err(format!("unknown event {other:?}"))),
        };
        rows.push(TrajectoryRow { t, x, n, event });
    }
    if rows.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(csv_err("rows not sorted by t"));
    }
    Ok(rows)
}
