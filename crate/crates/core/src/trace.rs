//! Line-delimited JSON file formats.
//!
//! CSI traces start with a header `{"version":1,"m_t":..,"m_r":..,"label":..}`
//! followed by one `{"t":..,"re":[..],"im":[..]}` record per slot, with the
//! matrix flattened row-major. Numbers are written in shortest round-trip
//! decimal form, so export followed by import is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::channel::CsiObservation;
use crate::error::{Error, Result};
use crate::linalg;

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub m_t: usize,
    pub m_r: usize,
    pub label: String,
    /// Free-form provenance (channel parameters, seed, generator settings).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl TraceHeader {
    pub fn new(m_t: usize, m_r: usize, label: impl Into<String>) -> Self {
        Self {
            version: TRACE_VERSION,
            m_t,
            m_r,
            label: label.into(),
            meta: None,
        }
    }

    pub fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = Some(meta);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub t: u64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl TraceRecord {
    pub fn from_observation(obs: &CsiObservation) -> Self {
        let (re, im) = linalg::to_row_major(&obs.h_hat);
        Self { t: obs.t, re, im }
    }
}

/// Streaming writer for any line-delimited JSON file with a header line.
pub struct JsonLinesWriter<W: Write> {
    out: W,
    path: PathBuf,
}

impl JsonLinesWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            path,
        })
    }
}

impl<W: Write> JsonLinesWriter<W> {
    pub fn from_writer(out: W) -> Self {
        Self {
            out,
            path: PathBuf::from("<stream>"),
        }
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value)
            .map_err(|e| Error::io(&self.path, std::io::Error::other(e)))?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.out)
    }
}

/// Read a header line plus records, reporting 1-based line numbers on error.
pub fn read_json_lines<H, R>(path: impl AsRef<Path>) -> Result<(H, Vec<(usize, R)>)>
where
    H: DeserializeOwned,
    R: DeserializeOwned,
{
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_json_lines(BufReader::new(file), path)
}

pub fn parse_json_lines<H, R, B>(reader: B, path: &Path) -> Result<(H, Vec<(usize, R)>)>
where
    H: DeserializeOwned,
    R: DeserializeOwned,
    B: BufRead,
{
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut header = None;
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            header = Some(
                serde_json::from_str::<H>(&line)
                    .map_err(|e| parse_err(lineno, format!("bad header: {e}")))?,
            );
        } else {
            let rec = serde_json::from_str::<R>(&line)
                .map_err(|e| parse_err(lineno, format!("bad record: {e}")))?;
            records.push((lineno, rec));
        }
    }
    let header = header.ok_or_else(|| parse_err(1, "missing header line".into()))?;
    Ok((header, records))
}

/// A validated CSI trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiTrace {
    pub header: TraceHeader,
    pub records: Vec<CsiObservation>,
}

impl CsiTrace {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (header, raw): (TraceHeader, Vec<(usize, TraceRecord)>) = read_json_lines(path)?;
        Self::validate(header, raw, path)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let path = Path::new("<memory>");
        let (header, raw) = parse_json_lines(text.as_bytes(), path)?;
        Self::validate(header, raw, path)
    }

    fn validate(header: TraceHeader, raw: Vec<(usize, TraceRecord)>, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if header.version != TRACE_VERSION {
            return Err(err(1, format!("unsupported trace version {}", header.version)));
        }
        if header.m_t == 0 || header.m_r == 0 {
            return Err(err(1, "antenna counts must be positive".into()));
        }
        let n = header.m_t * header.m_r;
        let mut records = Vec::with_capacity(raw.len());
        for (line, rec) in raw {
            if rec.re.len() != n || rec.im.len() != n {
                return Err(err(
                    line,
                    format!(
                        "dimension mismatch: expected {n} = {}x{} entries, got re={} im={}",
                        header.m_r,
                        header.m_t,
                        rec.re.len(),
                        rec.im.len()
                    ),
                ));
            }
            if rec.re.iter().chain(&rec.im).any(|v| !v.is_finite()) {
                return Err(err(line, "non-finite entry".into()));
            }
            records.push(CsiObservation {
                t: rec.t,
                h_hat: linalg::from_row_major(header.m_r, header.m_t, &rec.re, &rec.im),
            });
        }
        Ok(Self { header, records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csi_trace(path, &self.header, &self.records)
    }
}

pub fn write_csi_trace(path: impl AsRef<Path>, header: &TraceHeader, records: &[CsiObservation]) -> Result<()> {
    let mut w = JsonLinesWriter::create(path)?;
    w.write(header)?;
    for obs in records {
        if obs.h_hat.shape() != (header.m_r, header.m_t) {
            return Err(Error::dims(
                format!("{}x{}", header.m_r, header.m_t),
                format!("{}x{}", obs.h_hat.nrows(), obs.h_hat.ncols()),
            ));
        }
        w.write(&TraceRecord::from_observation(obs))?;
    }
    w.finish()?;
    Ok(())
}
