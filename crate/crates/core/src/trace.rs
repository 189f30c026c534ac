//! Per-iteration CSV traces with the fixed header
//! `k,stage,time_sec,f,gap,grad_norm,A_k,a_k,L_k,rho,probes,inner_iters`.
//!
//! Floats are written in shortest round-trip exponent form, so a trace read
//! back and written again is byte-identical. Empty cells are absent values.

use std::io::{Read, Write};

use crate::baselines::BaselineTrace;
use crate::error::{Error, Result};
use crate::optimal::{normalized_gap, RunTrace};
use crate::restart::RestartTrace;

pub const HEADER: [&str; 12] = [
    "k",
    "stage",
    "time_sec",
    "f",
    "gap",
    "grad_norm",
    "A_k",
    "a_k",
    "L_k",
    "rho",
    "probes",
    "inner_iters",
];

/// One CSV row. Row `k` describes `y^k`; `L_k` holds the line-search value
/// that produced it and `k = 0` is the starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub stage: usize,
    pub time_sec: Option<f64>,
    pub f: f64,
    pub gap: Option<f64>,
    pub grad_norm: f64,
    pub a_total: Option<f64>,
    pub a: Option<f64>,
    pub l: Option<f64>,
    pub rho: Option<f64>,
    pub probes: Option<usize>,
    pub inner_iters: Option<usize>,
}

impl TraceRow {
    fn start(f: f64, grad_norm: f64, f_star: Option<f64>, stage: usize) -> Self {
        Self {
            k: 0,
            stage,
            time_sec: Some(0.0),
            f,
            gap: f_star.map(|s| normalized_gap(f, s)),
            grad_norm,
            a_total: None,
            a: None,
            l: None,
            rho: None,
            probes: None,
            inner_iters: None,
        }
    }
}

pub fn rows_from_run(trace: &RunTrace, f_star: Option<f64>, stage: usize) -> Vec<TraceRow> {
    let mut rows = Vec::with_capacity(trace.records.len() + 1);
    if stage == 0 {
        rows.push(TraceRow::start(trace.f0, trace.grad0_norm, f_star, 0));
    }
    rows.extend(trace.records.iter().map(|r| TraceRow {
        k: r.k,
        stage,
        time_sec: Some(r.elapsed.as_secs_f64()),
        f: r.f_y,
        gap: f_star.map(|s| normalized_gap(r.f_y, s)),
        grad_norm: r.grad_norm,
        a_total: Some(r.a_total),
        a: Some(r.a),
        l: Some(r.l),
        rho: Some(r.rho),
        probes: Some(r.probes),
        inner_iters: Some(r.inner_iters),
    }));
    rows
}

pub fn rows_from_baseline(trace: &BaselineTrace, f_star: Option<f64>) -> Vec<TraceRow> {
    let mut rows = vec![TraceRow::start(trace.f0, trace.grad0_norm, f_star, 0)];
    rows.extend(trace.records.iter().map(|r| TraceRow {
        k: r.k,
        stage: 0,
        time_sec: Some(r.elapsed.as_secs_f64()),
        f: r.f_y,
        gap: f_star.map(|s| normalized_gap(r.f_y, s)),
        grad_norm: r.grad_norm,
        a_total: r.a_total,
        a: r.a,
        l: None,
        rho: None,
        probes: Some(1),
        inner_iters: Some(r.inner_iters),
    }));
    rows
}

/// Stage `s >= 1` rows restart `k` at 1; stage 0 is the single starting row.
pub fn rows_from_restart(trace: &RestartTrace, f_star: Option<f64>, grad0_norm: f64) -> Vec<TraceRow> {
    let mut rows = vec![TraceRow::start(trace.f0, grad0_norm, f_star, 0)];
    let mut offset = 0.0;
    for stage in &trace.stages {
        let mut stage_rows = rows_from_run(&stage.run, f_star, stage.index);
        for r in &mut stage_rows {
            r.time_sec = r.time_sec.map(|t| t + offset);
        }
        offset = stage_rows.last().and_then(|r| r.time_sec).unwrap_or(offset);
        rows.extend(stage_rows);
    }
    rows
}

fn float(v: f64) -> String {
    format!("{v:e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

fn opt_int(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.stage.to_string(),
            opt_float(r.time_sec),
            float(r.f),
            opt_float(r.gap),
            float(r.grad_norm),
            opt_float(r.a_total),
            opt_float(r.a),
            opt_float(r.l),
            opt_float(r.rho),
            opt_int(r.probes),
            opt_int(r.inner_iters),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[TraceRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers().map_err(|e| Error::Io(e.to_string()))?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected trace header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let err = |col: &str, msg: String| Error::Parse {
            line,
            message: format!("column {col}: {msg}"),
        };
        let req_f = |idx: usize| -> Result<f64> {
            rec[idx].parse::<f64>().map_err(|e| err(HEADER[idx], e.to_string()))
        };
        let opt_f = |idx: usize| -> Result<Option<f64>> {
            if rec[idx].is_empty() {
                Ok(None)
            } else {
                req_f(idx).map(Some)
            }
        };
        let req_u = |idx: usize| -> Result<usize> {
            rec[idx].parse::<usize>().map_err(|e| err(HEADER[idx], e.to_string()))
        };
        let opt_u = |idx: usize| -> Result<Option<usize>> {
            if rec[idx].is_empty() {
                Ok(None)
            } else {
                req_u(idx).map(Some)
            }
        };
        rows.push(TraceRow {
            k: req_u(0)?,
            stage: req_u(1)?,
            time_sec: opt_f(2)?,
            f: req_f(3)?,
            gap: opt_f(4)?,
            grad_norm: req_f(5)?,
            a_total: opt_f(6)?,
            a: opt_f(7)?,
            l: opt_f(8)?,
            rho: opt_f(9)?,
            probes: opt_u(10)?,
            inner_iters: opt_u(11)?,
        });
    }
    Ok(rows)
}

/// The CSV text with every `time_sec` cell blanked, for determinism checks.
pub fn without_timing(rows: &[TraceRow]) -> String {
    let stripped: Vec<TraceRow> = rows
        .iter()
        .cloned()
        .map(|mut r| {
            r.time_sec = None;
            r
        })
        .collect();
    to_csv_string(&stripped)
}
