//! Strict JSON config loading, line-delimited routing traces and the
//! versioned search CSV.
//!
//! Every config struct rejects unknown fields, so a typo such as
//! `hiden_size` fails loudly instead of silently falling back to a default.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::{RoutingTrace, TokenRoute, TraceSpec};
use crate::cluster::HardwareDescription;
use crate::model::{DesignSpace, ModelConfig};
use crate::plan::{zero_factors, ParallelPlan};
use crate::search::RankedReport;

/// First line of every search CSV.
pub const SEARCH_CSV_VERSION: &str = "# moesim-search v1";

/// Where and why a document failed to parse.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub origin: String,
    pub line: usize,
    pub column: usize,
    /// Dotted path of the offending field, or the unknown field's name.
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: ", self.origin, self.line, self.column)?;
        if let Some(field) = &self.field {
            write!(f, "field `{field}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("{origin}: {message}")]
    Invalid { origin: String, message: String },
}

impl IoError {
    /// True for filesystem failures as opposed to bad content.
    pub fn is_io(&self) -> bool {
        matches!(self, IoError::Read { .. } | IoError::Write { .. })
    }
}

/// The name inside the first pair of backticks, which is how serde quotes
/// unknown and missing fields.
fn quoted_name(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

/// Parses `text` as `T`, reporting line, column and field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, ParseError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        convert(e.into_inner(), &path, origin)
    })?;
    de.end().map_err(|e| convert(e, ".", origin))?;
    Ok(value)
}

fn convert(inner: serde_json::Error, path: &str, origin: &str) -> ParseError {
    let message = inner.to_string();
    let leaf = if message.starts_with("unknown field") || message.starts_with("missing field") {
        quoted_name(&message)
    } else {
        None
    };
    let field = match (leaf, path) {
        (Some(l), "." | "") => Some(l),
        (Some(l), p) if !p.ends_with(&l) => Some(format!("{p}.{l}")),
        (_, "." | "") => None,
        (_, p) => Some(p.to_string()),
    };
    // serde_json appends " at line L column C"; those are reported separately
    let message = match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message,
    };
    ParseError {
        origin: origin.to_string(),
        line: inner.line(),
        column: inner.column(),
        field,
        message,
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    Ok(parse_json(&read(path)?, &path.display().to_string())?)
}

fn invalid(path: &Path, message: impl fmt::Display) -> IoError {
    IoError::Invalid {
        origin: path.display().to_string(),
        message: message.to_string(),
    }
}

pub fn load_model(path: &Path) -> Result<ModelConfig, IoError> {
    let cfg: ModelConfig = load_json(path)?;
    cfg.validate().map_err(|e| invalid(path, e))?;
    Ok(cfg)
}

pub fn load_cluster(path: &Path) -> Result<HardwareDescription, IoError> {
    let hw: HardwareDescription = load_json(path)?;
    hw.validate().map_err(|e| invalid(path, e))?;
    Ok(hw)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(ParallelPlan),
    Many(Vec<ParallelPlan>),
}

fn check_plan(path: &Path, plan: &ParallelPlan) -> Result<(), IoError> {
    let zero = zero_factors(plan);
    if zero.is_empty() {
        return Ok(());
    }
    let list: Vec<String> = zero.iter().map(ToString::to_string).collect();
    Err(invalid(path, format!("invalid plan: {}", list.join("; "))))
}

pub fn load_plan(path: &Path) -> Result<ParallelPlan, IoError> {
    let plan: ParallelPlan = load_json(path)?;
    check_plan(path, &plan)?;
    Ok(plan)
}

/// A single plan object or an array of them.
pub fn load_plans(path: &Path) -> Result<Vec<ParallelPlan>, IoError> {
    let text = read(path)?;
    let origin = path.display().to_string();
    let plans = match serde_json::from_str::<OneOrMany>(&text) {
        Ok(OneOrMany::One(p)) => vec![p],
        Ok(OneOrMany::Many(v)) => v,
        // re-parse strictly for a useful message
        Err(_) => match text.trim_start().starts_with('[') {
            true => parse_json::<Vec<ParallelPlan>>(&text, &origin)?,
            false => vec![parse_json::<ParallelPlan>(&text, &origin)?],
        },
    };
    if plans.is_empty() {
        return Err(invalid(path, "plan list is empty"));
    }
    for p in &plans {
        check_plan(path, p)?;
    }
    Ok(plans)
}

pub fn load_space(path: &Path) -> Result<DesignSpace, IoError> {
    load_json(path)
}

pub fn load_trace_spec(path: &Path) -> Result<TraceSpec, IoError> {
    let spec: TraceSpec = load_json(path)?;
    spec.validate().map_err(|e| invalid(path, e))?;
    Ok(spec)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_text(path, &to_json(value))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceHeader {
    num_experts: u32,
    top_k: u32,
    seq_len: u64,
}

/// Header line with the trace geometry, then one token per line.
pub fn write_trace<W: Write>(trace: &RoutingTrace, out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    let header = TraceHeader {
        num_experts: trace.num_experts,
        top_k: trace.top_k,
        seq_len: trace.seq_len,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for t in &trace.tokens {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_trace(path: &Path, trace: &RoutingTrace) -> Result<(), IoError> {
    let f = fs::File::create(path).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    write_trace(trace, f).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a trace written by [`write_trace`]. Blank lines are skipped; the
/// trace is validated before it is returned.
pub fn read_trace<R: BufRead>(input: R, origin: &str) -> Result<RoutingTrace, IoError> {
    let mut header: Option<TraceHeader> = None;
    let mut tokens = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|source| IoError::Read {
            path: PathBuf::from(origin),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |mut e: ParseError| {
            e.line = i + 1;
            e
        };
        if header.is_none() {
            header = Some(parse_json(&line, origin).map_err(at)?);
        } else {
            tokens.push(parse_json::<TokenRoute>(&line, origin).map_err(at)?);
        }
    }
    let h = header.ok_or_else(|| IoError::Invalid {
        origin: origin.to_string(),
        message: "trace file is empty".into(),
    })?;
    let trace = RoutingTrace {
        num_experts: h.num_experts,
        top_k: h.top_k,
        seq_len: h.seq_len,
        tokens,
    };
    trace.validate().map_err(|e| IoError::Invalid {
        origin: origin.to_string(),
        message: e.to_string(),
    })?;
    Ok(trace)
}

pub fn load_trace(path: &Path) -> Result<RoutingTrace, IoError> {
    let f = fs::File::open(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    read_trace(BufReader::new(f), &path.display().to_string())
}

#[derive(Serialize)]
struct SearchRow<'a> {
    rank: usize,
    score: f64,
    model_id: &'a str,
    tp: u64,
    pp: u64,
    vpp: u64,
    ep: u64,
    dp: u64,
    cp: u64,
    micro_batch_size: u64,
    global_batch_size: u64,
    step_time: f64,
    mfu: f64,
    tps: f64,
    bubble_ratio: f64,
    comm_overlap_rate: f64,
    exposed_comm: f64,
    host_idle: f64,
    training_throughput: f64,
    inference_throughput: f64,
    static_bytes: f64,
    activation_peak_bytes: f64,
    memory_plan: String,
}

/// Ranked reports as CSV, preceded by the schema version comment.
pub fn write_search_csv<W: Write>(ranked: &[RankedReport], mut out: W) -> Result<(), csv::Error> {
    writeln!(out, "{SEARCH_CSV_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    for r in ranked {
        let c = &r.report;
        let (p, s, m) = (&c.plan, &c.step_report, &c.memory_report);
        w.serialize(SearchRow {
            rank: r.rank,
            score: r.score,
            model_id: &c.model_id,
            tp: p.tp,
            pp: p.pp,
            vpp: p.vpp,
            ep: p.ep,
            dp: p.dp,
            cp: p.cp,
            micro_batch_size: p.micro_batch_size,
            global_batch_size: p.global_batch_size,
            step_time: s.step_time,
            mfu: s.mfu,
            tps: s.tps,
            bubble_ratio: s.bubble_ratio,
            comm_overlap_rate: s.comm_overlap_rate,
            exposed_comm: s.exposed_comm,
            host_idle: s.host_idle,
            training_throughput: c.training_throughput,
            inference_throughput: c.inference_throughput,
            static_bytes: m.static_bytes,
            activation_peak_bytes: m.activation_peak_bytes,
            memory_plan: c.memory_plan.describe(),
        })?;
    }
    w.flush()?;
    Ok(())
}
