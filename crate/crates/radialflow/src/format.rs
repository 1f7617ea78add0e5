//! Network files: one JSON document, or a `buses.csv` / `lines.csv` pair.
//!
//! Bus ids are arbitrary labels (strings or integers). The slack bus gets
//! index 0 and the remaining buses follow in file order.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use radialflow_core::network::DEFAULT_KAPPA_TOLERANCE;
use radialflow_core::{Injections, Line, RadialNetwork, ValidationError};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("no bus is flagged as slack")]
    MissingSlack,
    #[error("buses {0} and {1} are both flagged as slack")]
    MultipleSlack(String, String),
    #[error("bus id {0} appears more than once")]
    DuplicateBus(String),
    #[error("line {line} refers to unknown bus {bus}")]
    UnknownBus { line: usize, bus: String },
    #[error("line {line}: {reason}")]
    LineSpec { line: usize, reason: &'static str },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// Bus label as written in the file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Deserialize)]
#[serde(untagged)]
pub enum BusId {
    Int(i64),
    Text(String),
}

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BusId::Int(i) => write!(f, "{i}"),
            BusId::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct BusRecord {
    pub id: BusId,
    #[serde(default)]
    pub slack: bool,
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub q: f64,
    /// Reserved; only 1.0 is accepted on the slack bus.
    #[serde(default)]
    pub v0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct LineRecord {
    pub from: BusId,
    pub to: BusId,
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub x: Option<f64>,
    #[serde(default)]
    pub g: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
}

impl LineRecord {
    fn admittance(&self, line: usize) -> Result<(f64, f64), ParseError> {
        match (self.r, self.x, self.g, self.b) {
            (Some(r), Some(x), None, None) => {
                if r * r + x * x == 0.0 {
                    return Err(ParseError::LineSpec {
                        line,
                        reason: "zero impedance",
                    });
                }
                let z2 = r * r + x * x;
                Ok((r / z2, x / z2))
            }
            (None, None, g, Some(b)) => Ok((g.unwrap_or(0.0), b)),
            (None, None, _, None) => Err(ParseError::LineSpec {
                line,
                reason: "needs either r and x, or b (with optional g)",
            }),
            _ => Err(ParseError::LineSpec {
                line,
                reason: "give either r and x, or g and b, not a mix",
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct NetworkFile {
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
    /// Per-unit base information, carried along but unused.
    #[serde(default)]
    pub base: Option<serde_json::Value>,
}

/// A validated network with its injections and the original labels.
#[derive(Debug, Clone)]
pub struct ParsedNetwork {
    pub network: RadialNetwork,
    pub injections: Injections,
    /// `labels[i]` is the file id of internal bus `i`.
    pub labels: Vec<String>,
    /// SHA-256 of the raw input, hex encoded.
    pub digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    pub kappa_tolerance: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            kappa_tolerance: DEFAULT_KAPPA_TOLERANCE,
        }
    }
}

impl NetworkFile {
    pub fn into_network(self, options: &ParseOptions, digest: String) -> Result<ParsedNetwork, ParseError> {
        let mut slack = None;
        for bus in &self.buses {
            if bus.slack {
                if let Some(prev) = &slack {
                    return Err(ParseError::MultipleSlack(
                        format!("{prev}"),
                        bus.id.to_string(),
                    ));
                }
                slack = Some(bus.id.clone());
            }
        }
        let slack = slack.ok_or(ParseError::MissingSlack)?;

        let mut order: Vec<&BusRecord> = Vec::with_capacity(self.buses.len());
        order.extend(self.buses.iter().filter(|b| b.slack));
        order.extend(self.buses.iter().filter(|b| !b.slack));
        let mut index = HashMap::new();
        for (i, bus) in order.iter().enumerate() {
            if index.insert(bus.id.clone(), i).is_some() {
                return Err(ParseError::DuplicateBus(bus.id.to_string()));
            }
        }
        if let Some(v0) = order[0].v0 {
            if v0 != 1.0 {
                return Err(ValidationError::NonUnitSlackVoltage(v0).into());
            }
        }
        if order[0].p != 0.0 || order[0].q != 0.0 {
            log::warn!("injections given for slack bus {slack} are ignored");
        }

        let mut lines = Vec::with_capacity(self.lines.len());
        for (k, rec) in self.lines.iter().enumerate() {
            let lookup = |id: &BusId| {
                index.get(id).copied().ok_or_else(|| ParseError::UnknownBus {
                    line: k,
                    bus: id.to_string(),
                })
            };
            let (from, to) = (lookup(&rec.from)?, lookup(&rec.to)?);
            let (g, b) = rec.admittance(k)?;
            lines.push(Line::new(from, to, g, b));
        }
        let network = RadialNetwork::with_tolerance(order.len(), lines, options.kappa_tolerance)?;
        let rest = &order[1..];
        let injections = Injections::new(rest.iter().map(|b| b.p).collect(), rest.iter().map(|b| b.q).collect());
        injections.check(network.n())?;
        Ok(ParsedNetwork {
            network,
            injections,
            labels: order.iter().map(|b| b.id.to_string()).collect(),
            digest,
        })
    }
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

pub fn parse_json(bytes: &[u8], options: &ParseOptions) -> Result<ParsedNetwork, ParseError> {
    let file: NetworkFile = serde_json::from_slice(bytes)?;
    file.into_network(options, sha256_hex(&[bytes]))
}

fn read_csv<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<Vec<T>, ParseError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    reader.deserialize().map(|r| r.map_err(ParseError::from)).collect()
}

/// CSV bus ids are always labels; `7` and `"7"` are the same bus.
#[derive(Deserialize)]
struct CsvBus {
    id: String,
    #[serde(default, deserialize_with = "csv_bool")]
    slack: bool,
    #[serde(default)]
    p: Option<f64>,
    #[serde(default)]
    q: Option<f64>,
    #[serde(default)]
    v0: Option<f64>,
}

#[derive(Deserialize)]
struct CsvLine {
    from: String,
    to: String,
    #[serde(default)]
    r: Option<f64>,
    #[serde(default)]
    x: Option<f64>,
    #[serde(default)]
    g: Option<f64>,
    #[serde(default)]
    b: Option<f64>,
}

fn csv_bool<'de, D: serde::Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" => Ok(false),
        "1" | "true" | "yes" => Ok(true),
        other => Err(serde::de::Error::custom(format!("not a boolean: {other:?}"))),
    }
}

pub fn parse_csv(buses: &[u8], lines: &[u8], options: &ParseOptions) -> Result<ParsedNetwork, ParseError> {
    let bus_rows: Vec<CsvBus> = read_csv(buses)?;
    let line_rows: Vec<CsvLine> = read_csv(lines)?;
    let file = NetworkFile {
        buses: bus_rows
            .into_iter()
            .map(|b| BusRecord {
                id: BusId::Text(b.id),
                slack: b.slack,
                p: b.p.unwrap_or(0.0),
                q: b.q.unwrap_or(0.0),
                v0: b.v0,
            })
            .collect(),
        lines: line_rows
            .into_iter()
            .map(|l| LineRecord {
                from: BusId::Text(l.from),
                to: BusId::Text(l.to),
                r: l.r,
                x: l.x,
                g: l.g,
                b: l.b,
            })
            .collect(),
        base: None,
    };
    file.into_network(options, sha256_hex(&[buses, lines]))
}

fn read_file(path: &Path) -> Result<Vec<u8>, ParseError> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| ParseError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(buf)
}

/// Loads a network from a JSON file, a directory holding `buses.csv` and
/// `lines.csv`, or a `.csv` bus file with `lines.csv` beside it.
pub fn load(path: &Path, options: &ParseOptions) -> Result<ParsedNetwork, ParseError> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if path.is_dir() {
        let buses = read_file(&path.join("buses.csv"))?;
        let lines = read_file(&path.join("lines.csv"))?;
        parse_csv(&buses, &lines, options)
    } else if is_csv {
        let buses = read_file(path)?;
        let lines = read_file(&path.with_file_name("lines.csv"))?;
        parse_csv(&buses, &lines, options)
    } else {
        parse_json(&read_file(path)?, options)
    }
}
