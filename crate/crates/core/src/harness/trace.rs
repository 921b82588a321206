//! Per-tick trace records and their CSV form.
//!
//! Floats are rounded to 9 significant digits when a record is built, so a
//! trace in memory equals the trace read back from disk. Absent values
//! (no visual frame, inference suspended) are empty cells.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::Status;
use crate::{DOF, HIST_BINS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreLearning,
    Learning,
    Evaluation,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::PreLearning => "pre_learning",
            Phase::Learning => "learning",
            Phase::Evaluation => "evaluation",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "pre_learning" => Some(Phase::PreLearning),
            "learning" => Some(Phase::Learning),
            "evaluation" => Some(Phase::Evaluation),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Round to 9 significant digits.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub tick: u64,
    pub t: f64,
    pub phase: Phase,
    pub status: Status,
    /// The forward model has been trained (or loaded).
    pub trained: bool,
    pub mu: [f64; DOF],
    pub s_p: [f64; DOF],
    pub s_v: Option<[f64; 2]>,
    pub g: Option<[f64; 2]>,
    pub sigma_star: Option<f64>,
    pub kernel: Option<usize>,
    pub e_p_norm: Option<f64>,
    pub e_v: Option<[f64; 2]>,
    /// Velocity command applied during this tick.
    pub a: [f64; DOF],
    pub h: [f64; HIST_BINS],
    pub p_cont: f64,
    pub l_i: Option<f64>,
    pub ln_p_cont: Option<f64>,
    pub l: f64,
    pub p_norm: f64,
    pub p_self: f64,
    pub buffer: usize,
    pub free_energy: Option<f64>,
}

impl TraceRecord {
    /// Round every float field to the serialized precision.
    pub fn quantized(mut self) -> Self {
        let q = |v: &mut f64| *v = sig9(*v);
        let qo = |v: &mut Option<f64>| {
            if let Some(x) = v {
                *x = sig9(*x)
            }
        };
        q(&mut self.t);
        self.mu.iter_mut().for_each(q);
        self.s_p.iter_mut().for_each(q);
        for pair in [&mut self.s_v, &mut self.g, &mut self.e_v].into_iter().flatten() {
            pair.iter_mut().for_each(q);
        }
        qo(&mut self.sigma_star);
        qo(&mut self.e_p_norm);
        self.a.iter_mut().for_each(q);
        self.h.iter_mut().for_each(q);
        q(&mut self.p_cont);
        qo(&mut self.l_i);
        qo(&mut self.ln_p_cont);
        q(&mut self.l);
        q(&mut self.p_norm);
        q(&mut self.p_self);
        qo(&mut self.free_energy);
        self
    }

    fn cells(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt9).unwrap_or_default();
        let mut row = Vec::with_capacity(column_count());
        row.push(self.tick.to_string());
        row.push(fmt9(self.t));
        row.push(self.phase.name().to_string());
        row.push(self.status.name().to_string());
        row.push(u8::from(self.trained).to_string());
        row.extend(self.mu.iter().copied().map(fmt9));
        row.extend(self.s_p.iter().copied().map(fmt9));
        for pair in [self.s_v, self.g] {
            row.extend((0..2).map(|i| opt(pair.map(|p| p[i]))));
        }
        row.push(opt(self.sigma_star));
        row.push(self.kernel.map(|k| k.to_string()).unwrap_or_default());
        row.push(opt(self.e_p_norm));
        row.extend((0..2).map(|i| opt(self.e_v.map(|p| p[i]))));
        row.extend(self.a.iter().copied().map(fmt9));
        row.extend(self.h.iter().copied().map(fmt9));
        row.push(fmt9(self.p_cont));
        row.push(opt(self.l_i));
        row.push(opt(self.ln_p_cont));
        row.push(fmt9(self.l));
        row.push(fmt9(self.p_norm));
        row.push(fmt9(self.p_self));
        row.push(self.buffer.to_string());
        row.push(opt(self.free_energy));
        row
    }
}

/// Column order of the CSV trace.
pub fn columns() -> Vec<String> {
    let mut c: Vec<String> = ["tick", "t", "phase", "status", "trained"].map(String::from).into();
    c.extend((0..DOF).map(|i| format!("mu_{i}")));
    c.extend((0..DOF).map(|i| format!("s_p_{i}")));
    c.extend(["s_v_x", "s_v_y", "g_x", "g_y", "sigma_star", "kernel", "e_p_norm", "e_v_x", "e_v_y"].map(String::from));
    c.extend((0..DOF).map(|i| format!("a_{i}")));
    c.extend((0..HIST_BINS).map(|i| format!("h_{i}")));
    c.extend(["p_cont", "L_i", "ln_p_cont", "L", "p_norm", "p_self", "buffer", "free_energy"].map(String::from));
    c
}

pub fn column_count() -> usize {
    5 + 2 * DOF + 9 + DOF + HIST_BINS + 8
}

pub fn write_trace<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(columns()).map_err(err)?;
    for r in records {
        w.write_record(r.cells()).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_trace_file(records: &[TraceRecord], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_trace(records, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Cells<'a> {
    rec: &'a csv::StringRecord,
    at: usize,
    line: usize,
}

impl Cells<'_> {
    fn next(&mut self) -> &str {
        let s = self.rec.get(self.at).unwrap_or("");
        self.at += 1;
        s
    }

    fn bad(&self, what: &str) -> Error {
        Error::Format(format!("trace row {}: bad {what} in column {}", self.line, self.at))
    }

    fn f64(&mut self) -> Result<f64> {
        let s = self.next();
        s.parse().map_err(|_| self.bad("number"))
    }

    fn opt(&mut self) -> Result<Option<f64>> {
        let s = self.next();
        if s.is_empty() {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| self.bad("number"))
    }

    fn array<const N: usize>(&mut self) -> Result<[f64; N]> {
        let mut out = [0.0; N];
        for v in &mut out {
            *v = self.f64()?;
        }
        Ok(out)
    }

    fn pair(&mut self) -> Result<Option<[f64; 2]>> {
        match (self.opt()?, self.opt()?) {
            (Some(x), Some(y)) => Ok(Some([x, y])),
            (None, None) => Ok(None),
            _ => Err(self.bad("half-empty pair")),
        }
    }

    fn int<T: std::str::FromStr>(&mut self) -> Result<T> {
        let s = self.next();
        s.parse().map_err(|_| self.bad("integer"))
    }
}

pub fn parse_trace<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if header.iter().ne(columns().iter().map(String::as_str)) {
        return Err(Error::Format("trace header does not match the schema".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.len() != column_count() {
            return Err(Error::Format(format!("trace row {}: {} columns", i + 1, rec.len())));
        }
        let mut c = Cells { rec: &rec, at: 0, line: i + 1 };
        let tick = c.int()?;
        let t = c.f64()?;
        let phase = Phase::from_name(c.next()).ok_or_else(|| c.bad("phase"))?;
        let status = Status::from_name(c.next()).ok_or_else(|| c.bad("status"))?;
        let trained = match c.next() {
            "0" => false,
            "1" => true,
            _ => return Err(c.bad("flag")),
        };
        let mu = c.array()?;
        let s_p = c.array()?;
        let s_v = c.pair()?;
        let g = c.pair()?;
        let sigma_star = c.opt()?;
        let kernel = match c.next() {
            "" => None,
            s => Some(s.parse().map_err(|_| c.bad("kernel"))?),
        };
        let e_p_norm = c.opt()?;
        let e_v = c.pair()?;
        let a = c.array()?;
        let h = c.array()?;
        out.push(TraceRecord {
            tick,
            t,
            phase,
            status,
            trained,
            mu,
            s_p,
            s_v,
            g,
            sigma_star,
            kernel,
            e_p_norm,
            e_v,
            a,
            h,
            p_cont: c.f64()?,
            l_i: c.opt()?,
            ln_p_cont: c.opt()?,
            l: c.f64()?,
            p_norm: c.f64()?,
            p_self: c.f64()?,
            buffer: c.int()?,
            free_energy: c.opt()?,
        });
    }
    Ok(out)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trace(std::io::BufReader::new(f))
}

/// Phases never go backwards and `t` strictly increases.
pub fn check_order(records: &[TraceRecord]) -> Result<()> {
    for w in records.windows(2) {
        if w[1].phase < w[0].phase {
            return Err(Error::Format(format!("phase regresses at tick {}", w[1].tick)));
        }
        if !(w[1].t > w[0].t) {
            return Err(Error::Format(format!("time does not increase at tick {}", w[1].tick)));
        }
    }
    Ok(())
}
