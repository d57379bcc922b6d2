//! Agent traces: one row per agent per tick, stored as CSV.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::polygon::Point2;

pub const TRACE_HEADER: [&str; 7] = ["tick", "id", "kind", "x_m", "y_m", "state", "lane"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace line {line}: {message}")]
    Parse { line: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentKind {
    Pedestrian,
    Car,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Pedestrian => "pedestrian",
            AgentKind::Car => "car",
        }
    }
}

impl FromStr for AgentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pedestrian" => Ok(AgentKind::Pedestrian),
            "car" => Ok(AgentKind::Car),
            other => Err(format!("unknown agent kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentState {
    Walking,
    Waiting,
    Arrived,
    Driving,
    Stopped,
}

impl AgentState {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentState::Walking => "walking",
            AgentState::Waiting => "waiting",
            AgentState::Arrived => "arrived",
            AgentState::Driving => "driving",
            AgentState::Stopped => "stopped",
        }
    }
}

impl FromStr for AgentState {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "walking" => AgentState::Walking,
            "waiting" => AgentState::Waiting,
            "arrived" => AgentState::Arrived,
            "driving" => AgentState::Driving,
            "stopped" => AgentState::Stopped,
            other => return Err(format!("unknown agent state {other:?}")),
        })
    }
}

impl fmt::Display for AgentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground position of one agent at one tick. Cars report their front
/// bumper on the lane centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub tick: u64,
    pub id: u64,
    pub kind: AgentKind,
    pub x: f64,
    pub y: f64,
    pub state: AgentState,
    pub lane: Option<usize>,
}

impl TraceRow {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn agent(&self) -> (AgentKind, u64) {
        (self.kind, self.id)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    /// Number of ticks covered, i.e. one past the last tick present.
    pub fn tick_count(&self) -> u64 {
        self.rows.iter().map(|r| r.tick + 1).max().unwrap_or(0)
    }

    pub fn at_tick(&self, tick: u64) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.tick == tick)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), TraceError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TRACE_HEADER)?;
        for r in &self.rows {
            let lane = r.lane.map(|l| l.to_string()).unwrap_or_default();
            out.write_record([
                r.tick.to_string(),
                r.id.to_string(),
                r.kind.as_str().to_string(),
                format!("{:.6}", r.x),
                format!("{:.6}", r.y),
                r.state.as_str().to_string(),
                lane,
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn write_file(&self, path: &Path) -> Result<(), TraceError> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn read<R: Read>(r: R) -> Result<Self, TraceError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
            return Err(TraceError::Parse { line: 1, message: format!("unexpected header {:?}", header) });
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let err = |message: String| TraceError::Parse { line, message };
            let field = |k: usize| rec.get(k).ok_or_else(|| err(format!("missing column {}", TRACE_HEADER[k])));
            let num = |k: usize| -> Result<f64, TraceError> {
                field(k)?.parse::<f64>().map_err(|e| err(format!("{}: {e}", TRACE_HEADER[k])))
            };
            let int = |k: usize| -> Result<u64, TraceError> {
                field(k)?.parse::<u64>().map_err(|e| err(format!("{}: {e}", TRACE_HEADER[k])))
            };
            let lane = match field(6)? {
                "" => None,
                s => Some(s.parse::<usize>().map_err(|e| err(format!("lane: {e}")))?),
            };
            rows.push(TraceRow {
                tick: int(0)?,
                id: int(1)?,
                kind: field(2)?.parse().map_err(err)?,
                x: num(3)?,
                y: num(4)?,
                state: field(5)?.parse().map_err(err)?,
                lane,
            });
        }
        Ok(Self { rows })
    }

    pub fn read_file(path: &Path) -> Result<Self, TraceError> {
        Self::read(std::fs::File::open(path)?)
    }
}
