//! Trajectory files: JSON lines (header object, then one record per line) or
//! CSV (a `#` version comment, a header row, then one row per step).

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::QpStatus;

pub const FORMAT_NAME: &str = "combicbf-trajectory";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

impl StepStatus {
    pub fn from_qp(s: &QpStatus) -> Self {
        match s {
            QpStatus::Optimal => Self::Optimal,
            QpStatus::Infeasible { .. } => Self::Infeasible,
            QpStatus::IterationLimit => Self::IterationLimit,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::IterationLimit => "iteration_limit",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "optimal" => Some(Self::Optimal),
            "infeasible" => Some(Self::Infeasible),
            "iteration_limit" => Some(Self::IterationLimit),
            _ => None,
        }
    }
}

/// One simulation step: the state at `t`, the control applied over
/// `[t, t + dt)` and the quantities that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub status: StepStatus,
    pub pivot: f64,
    pub primitives: Vec<f64>,
    /// Node values by height (leaves first), each sorted descending.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<Vec<f64>>,
    pub active: usize,
    /// Smallest row slack at `u`; absent without rows.
    pub min_slack: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub region_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub format: String,
    pub version: u32,
    pub scenario: String,
    pub state_dim: usize,
    pub input_dim: usize,
    pub primitives: usize,
    pub rows_per_step: usize,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<String>,
}

impl TrajectoryHeader {
    fn check(&self) -> Result<()> {
        if self.format != FORMAT_NAME {
            return Err(Error::Format(format!("unknown format '{}'", self.format)));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "version mismatch: file has {}, expected {FORMAT_VERSION}",
                self.version
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub records: Vec<StepRecord>,
}

pub fn write_jsonl<W: Write>(mut w: W, traj: &Trajectory) -> Result<()> {
    serde_json::to_writer(&mut w, &traj.header)?;
    w.write_all(b"\n")?;
    for r in &traj.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(mut w: W, traj: &Trajectory) -> Result<()> {
    let h = &traj.header;
    writeln!(
        w,
        "# {FORMAT_NAME} version={FORMAT_VERSION} scenario={} dt={} primitives={} rows_per_step={}",
        h.scenario, h.dt, h.primitives, h.rows_per_step
    )?;
    let mut cols = vec!["step".to_string(), "t".to_string()];
    cols.extend((0..h.state_dim).map(|i| format!("x{i}")));
    cols.extend((0..h.input_dim).map(|i| format!("u{i}")));
    cols.extend(["pivot", "status", "active", "min_slack"].map(String::from));
    cols.extend((0..h.primitives).map(|i| format!("h{i}")));
    cols.extend(h.regions.iter().map(|r| format!("count_{r}")));
    writeln!(w, "{}", cols.join(","))?;

    let mut line = String::new();
    for r in &traj.records {
        line.clear();
        write!(line, "{},{}", r.step, r.t).unwrap();
        for v in r.x.iter().chain(&r.u) {
            write!(line, ",{v}").unwrap();
        }
        write!(line, ",{},{},{},", r.pivot, r.status.as_str(), r.active).unwrap();
        if let Some(s) = r.min_slack {
            write!(line, "{s}").unwrap();
        }
        for v in &r.primitives {
            write!(line, ",{v}").unwrap();
        }
        for c in &r.region_counts {
            write!(line, ",{c}").unwrap();
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads either format, detected from the first line.
pub fn read_trajectory<R: BufRead>(r: R) -> Result<Trajectory> {
    let mut lines = r.lines();
    let first = loop {
        match lines.next() {
            None => return Err(Error::Format("empty trajectory".into())),
            Some(l) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break l;
                }
            }
        }
    };
    if first.starts_with('#') {
        read_csv_body(&first, lines)
    } else {
        let header: TrajectoryHeader = serde_json::from_str(&first)
            .map_err(|e| Error::Format(format!("line 1: bad header: {e}")))?;
        header.check()?;
        let mut records = Vec::new();
        for (i, l) in lines.enumerate() {
            let l = l?;
            if l.trim().is_empty() {
                continue;
            }
            let rec: StepRecord = serde_json::from_str(&l)
                .map_err(|e| Error::Format(format!("line {}: {e}", i + 2)))?;
            records.push(rec);
        }
        Ok(Trajectory { header, records })
    }
}

fn read_csv_body(
    first: &str,
    mut lines: impl Iterator<Item = std::io::Result<String>>,
) -> Result<Trajectory> {
    let mut meta = std::collections::BTreeMap::new();
    let mut words = first.trim_start_matches('#').split_whitespace();
    let format = words.next().unwrap_or_default().to_string();
    for w in words {
        if let Some((k, v)) = w.split_once('=') {
            meta.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| {
        meta.get(k)
            .cloned()
            .ok_or_else(|| Error::Format(format!("csv header lacks '{k}'")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::Format(format!("csv header '{k}' is not a number")))
    };
    let version: u32 = num("version")? as u32;
    let cols_line = lines
        .next()
        .ok_or_else(|| Error::Format("csv lacks a column row".into()))??;
    let cols: Vec<&str> = cols_line.split(',').collect();
    let count = |p: &str| {
        cols.iter()
            .filter(|c| c.strip_prefix(p).is_some_and(|d| d.parse::<usize>().is_ok()))
            .count()
    };
    let state_dim = count("x");
    let input_dim = count("u");
    let primitives = count("h");
    let regions: Vec<String> = cols
        .iter()
        .filter_map(|c| c.strip_prefix("count_").map(String::from))
        .collect();
    let header = TrajectoryHeader {
        format,
        version,
        scenario: get("scenario")?,
        state_dim,
        input_dim,
        primitives,
        rows_per_step: num("rows_per_step")? as usize,
        dt: num("dt")?,
        regions,
    };
    header.check()?;

    let mut records = Vec::new();
    for (i, l) in lines.enumerate() {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let lineno = i + 3;
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::Format(format!(
                "line {lineno}: expected {} fields, got {}",
                cols.len(),
                f.len()
            )));
        }
        let bad = |what: &str| Error::Format(format!("line {lineno}: bad {what}"));
        let fl = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        let mut k = 0;
        let mut take = |n: usize| {
            let s = &f[k..k + n];
            k += n;
            s
        };
        let step = take(1)[0].parse().map_err(|_| bad("step"))?;
        let t = fl(take(1)[0], "t")?;
        let x = take(state_dim).iter().map(|s| fl(s, "x")).collect::<Result<_>>()?;
        let u = take(input_dim).iter().map(|s| fl(s, "u")).collect::<Result<_>>()?;
        let pivot = fl(take(1)[0], "pivot")?;
        let status = StepStatus::parse(take(1)[0]).ok_or_else(|| bad("status"))?;
        let active = take(1)[0].parse().map_err(|_| bad("active"))?;
        let ms = take(1)[0];
        let min_slack = if ms.is_empty() { None } else { Some(fl(ms, "min_slack")?) };
        let prims = take(primitives).iter().map(|s| fl(s, "h")).collect::<Result<_>>()?;
        let region_counts = take(header.regions.len())
            .iter()
            .map(|s| s.parse().map_err(|_| bad("count")))
            .collect::<Result<_>>()?;
        records.push(StepRecord {
            step,
            t,
            x,
            u,
            status,
            pivot,
            primitives: prims,
            levels: Vec::new(),
            active,
            min_slack,
            region_counts,
        });
    }
    Ok(Trajectory { header, records })
}
