//! Replicated draws of `Y_n` and their on-disk formats.
//!
//! CSV: header `replicate,extinct_flag,Y_1,…,Y_p`; complex batches use
//! `Y_1_re,Y_1_im,…`. Rows whose replicate hit the population cap hold `NaN`.
//!
//! Binary (all little-endian):
//!
//! | bytes | content                     |
//! |-------|-----------------------------|
//! | 8     | magic `MCASCADE`            |
//! | 4     | version (`u32`, currently 1)|
//! | 4     | `p` (`u32`)                 |
//! | 8     | `R` (`u64`)                 |
//! | 4     | `n` (`u32`)                 |
//! | 1     | field tag: 0 real, 1 complex|
//! | …     | `R·p` (real) or `2·R·p` (complex) `f64`, row-major |

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ReplicateStatus;
use crate::error::{Error, Result};
use crate::model::Field;

pub const BINARY_MAGIC: &[u8; 8] = b"MCASCADE";
pub const BINARY_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum BatchValues {
    Real(Vec<Vec<f64>>),
    Complex(Vec<Vec<Complex64>>),
}

impl From<Vec<Vec<f64>>> for BatchValues {
    fn from(v: Vec<Vec<f64>>) -> Self {
        BatchValues::Real(v)
    }
}

impl From<Vec<Vec<Complex64>>> for BatchValues {
    fn from(v: Vec<Vec<Complex64>>) -> Self {
        BatchValues::Complex(v)
    }
}

impl BatchValues {
    pub fn len(&self) -> usize {
        match self {
            BatchValues::Real(v) => v.len(),
            BatchValues::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn field(&self) -> Field {
        match self {
            BatchValues::Real(_) => Field::Real,
            BatchValues::Complex(_) => Field::Complex,
        }
    }
}

/// `R` draws of `Y_n` (row `r` reproducible from `(master_seed, r)`).
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub model_id: String,
    pub p: usize,
    pub n: usize,
    pub master_seed: u64,
    /// Tilt order for tilted batches.
    pub tilt: Option<f64>,
    /// Normalized `Y_n` per replicate.
    pub values: BatchValues,
    /// Unnormalized sums for tilted batches.
    pub raw_values: Option<BatchValues>,
    pub status: Vec<ReplicateStatus>,
    /// `|T_n|` per replicate (0 for capped rows).
    pub node_counts: Vec<usize>,
    /// Per-replicate stream keys.
    pub seeds: Vec<u64>,
}

/// Summary written next to a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMeta {
    pub schema_version: u32,
    pub model_id: String,
    pub field: Field,
    pub p: usize,
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub tilt: Option<f64>,
    pub extinct_count: usize,
    pub cap_breaches: usize,
    pub cap_breach_replicates: Vec<usize>,
}

impl SampleBatch {
    pub fn replicates(&self) -> usize {
        self.values.len()
    }

    pub fn field(&self) -> Field {
        self.values.field()
    }

    pub fn is_extinct(&self, r: usize) -> bool {
        matches!(self.status[r], ReplicateStatus::Extinct { .. })
    }

    pub fn is_ok(&self, r: usize) -> bool {
        !matches!(self.status[r], ReplicateStatus::CapExceeded { .. })
    }

    pub fn extinct_count(&self) -> usize {
        (0..self.replicates())
            .filter(|&r| self.is_extinct(r))
            .count()
    }

    pub fn cap_breaches(&self) -> usize {
        (0..self.replicates()).filter(|&r| !self.is_ok(r)).count()
    }

    /// Real rows of completed replicates.
    pub fn real_rows(&self) -> Result<Vec<&[f64]>> {
        match &self.values {
            BatchValues::Real(v) => Ok(v
                .iter()
                .enumerate()
                .filter(|(r, _)| self.is_ok(*r))
                .map(|(_, x)| &x[..])
                .collect()),
            BatchValues::Complex(_) => Err(Error::WrongField { expected: "real" }),
        }
    }

    /// Complex rows of completed replicates.
    pub fn complex_rows(&self) -> Result<Vec<&[Complex64]>> {
        match &self.values {
            BatchValues::Complex(v) => Ok(v
                .iter()
                .enumerate()
                .filter(|(r, _)| self.is_ok(*r))
                .map(|(_, x)| &x[..])
                .collect()),
            BatchValues::Real(_) => Err(Error::WrongField {
                expected: "complex",
            }),
        }
    }

    /// `y·Y_n` for completed replicates.
    pub fn projections(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.p {
            return Err(Error::Dimension(format!(
                "projection vector of length {} for p = {}",
                y.len(),
                self.p
            )));
        }
        Ok(self
            .real_rows()?
            .into_iter()
            .map(|row| row.iter().zip(y).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn meta(&self) -> BatchMeta {
        BatchMeta {
            schema_version: 1,
            model_id: self.model_id.clone(),
            field: self.field(),
            p: self.p,
            n: self.n,
            replicates: self.replicates(),
            master_seed: self.master_seed,
            tilt: self.tilt,
            extinct_count: self.extinct_count(),
            cap_breaches: self.cap_breaches(),
            cap_breach_replicates: (0..self.replicates()).filter(|&r| !self.is_ok(r)).collect(),
        }
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["replicate".to_string(), "extinct_flag".to_string()];
        for i in 1..=self.p {
            match self.field() {
                Field::Real => cols.push(format!("Y_{i}")),
                Field::Complex => {
                    cols.push(format!("Y_{i}_re"));
                    cols.push(format!("Y_{i}_im"));
                }
            }
        }
        cols.join(",")
    }

    /// CSV text; floats use Rust's shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for r in 0..self.replicates() {
            out.push_str(&format!("{r},{}", u8::from(self.is_extinct(r))));
            match &self.values {
                BatchValues::Real(v) => {
                    for x in &v[r] {
                        out.push_str(&format!(",{x:?}"));
                    }
                }
                BatchValues::Complex(v) => {
                    for z in &v[r] {
                        out.push_str(&format!(",{:?},{:?}", z.re, z.im));
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), self.to_csv().as_bytes())
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let r = self.replicates();
        let width = match self.field() {
            Field::Real => self.p,
            Field::Complex => 2 * self.p,
        };
        let mut buf = Vec::with_capacity(29 + 8 * r * width);
        buf.extend_from_slice(BINARY_MAGIC);
        buf.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.p as u32).to_le_bytes());
        buf.extend_from_slice(&(r as u64).to_le_bytes());
        buf.extend_from_slice(&(self.n as u32).to_le_bytes());
        match &self.values {
            BatchValues::Real(v) => {
                buf.push(0);
                for x in v.iter().flatten() {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
            BatchValues::Complex(v) => {
                buf.push(1);
                for z in v.iter().flatten() {
                    buf.extend_from_slice(&z.re.to_le_bytes());
                    buf.extend_from_slice(&z.im.to_le_bytes());
                }
            }
        }
        buf
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_binary())
    }

    pub fn write_meta(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.meta()).expect("metadata serializes");
        write_file(path.as_ref(), text.as_bytes())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    w.write_all(bytes).map_err(io)?;
    w.flush().map_err(io)
}

fn take<'a>(bytes: &mut &'a [u8], k: usize) -> Result<&'a [u8]> {
    if bytes.len() < k {
        return Err(Error::Parse("truncated batch file".into()));
    }
    let (head, tail) = bytes.split_at(k);
    *bytes = tail;
    Ok(head)
}

/// Decoded binary batch: `(p, n, values)`.
pub fn read_batch_binary(bytes: &[u8]) -> Result<(usize, usize, BatchValues)> {
    let mut b = bytes;
    if take(&mut b, 8)? != BINARY_MAGIC {
        return Err(Error::Parse("bad magic in batch file".into()));
    }
    let version = u32::from_le_bytes(take(&mut b, 4)?.try_into().expect("4 bytes"));
    if version != BINARY_VERSION {
        return Err(Error::Parse(format!("unsupported batch version {version}")));
    }
    let p = u32::from_le_bytes(take(&mut b, 4)?.try_into().expect("4 bytes")) as usize;
    let r = u64::from_le_bytes(take(&mut b, 8)?.try_into().expect("8 bytes")) as usize;
    let n = u32::from_le_bytes(take(&mut b, 4)?.try_into().expect("4 bytes")) as usize;
    let tag = take(&mut b, 1)?[0];
    let mut next = || -> Result<f64> {
        Ok(f64::from_le_bytes(
            take(&mut b, 8)?.try_into().expect("8 bytes"),
        ))
    };
    let values = match tag {
        0 => {
            let mut rows = Vec::with_capacity(r);
            for _ in 0..r {
                rows.push((0..p).map(|_| next()).collect::<Result<Vec<_>>>()?);
            }
            BatchValues::Real(rows)
        }
        1 => {
            let mut rows = Vec::with_capacity(r);
            for _ in 0..r {
                rows.push(
                    (0..p)
                        .map(|_| Ok(Complex64::new(next()?, next()?)))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            BatchValues::Complex(rows)
        }
        t => return Err(Error::Parse(format!("unknown field tag {t}"))),
    };
    if !b.is_empty() {
        return Err(Error::Parse("trailing bytes in batch file".into()));
    }
    Ok((p, n, values))
}

/// Parses batch CSV into `(extinct flags, values)`.
pub fn read_batch_csv(text: &str) -> Result<(Vec<bool>, BatchValues)> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty batch CSV".into()))?
        .split(',')
        .collect();
    if header.len() < 3 || header[0] != "replicate" || header[1] != "extinct_flag" {
        return Err(Error::Parse("unexpected batch CSV header".into()));
    }
    let complex = header[2].ends_with("_re");
    let mut flags = Vec::new();
    let mut real = Vec::new();
    let mut cplx = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Parse(format!(
                "row {i}: expected {} columns",
                header.len()
            )));
        }
        flags.push(fields[1] == "1");
        let nums = fields[2..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if complex {
            cplx.push(
                nums.chunks_exact(2)
                    .map(|c| Complex64::new(c[0], c[1]))
                    .collect(),
            );
        } else {
            real.push(nums);
        }
    }
    Ok((
        flags,
        if complex {
            BatchValues::Complex(cplx)
        } else {
            BatchValues::Real(real)
        },
    ))
}

/// Standard file names inside a batch directory.
pub const BATCH_CSV: &str = "batch.csv";
pub const BATCH_BIN: &str = "batch.bin";
pub const BATCH_META: &str = "batch.meta.json";

impl SampleBatch {
    /// Writes `batch.csv`, `batch.bin` and `batch.meta.json` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.write_csv(dir.join(BATCH_CSV))?;
        self.write_binary(dir.join(BATCH_BIN))?;
        self.write_meta(dir.join(BATCH_META))
    }

    /// Reloads a batch written by [`SampleBatch::write_dir`]. Extinction
    /// depths are not stored; extinct rows get depth `n`.
    pub fn read_dir(dir: impl AsRef<Path>) -> Result<SampleBatch> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| Error::Io { path, source })
        };
        let meta: BatchMeta =
            serde_json::from_str(&read(BATCH_META)?).map_err(|e| Error::Parse(e.to_string()))?;
        let (flags, values) = read_batch_csv(&read(BATCH_CSV)?)?;
        if values.len() != meta.replicates || values.field() != meta.field {
            return Err(Error::Parse("batch CSV does not match its metadata".into()));
        }
        let status = flags
            .iter()
            .enumerate()
            .map(|(r, &extinct)| {
                if meta.cap_breach_replicates.binary_search(&r).is_ok() {
                    ReplicateStatus::CapExceeded { depth: meta.n }
                } else if extinct {
                    ReplicateStatus::Extinct { depth: meta.n }
                } else {
                    ReplicateStatus::Ok
                }
            })
            .collect();
        Ok(SampleBatch {
            model_id: meta.model_id,
            p: meta.p,
            n: meta.n,
            master_seed: meta.master_seed,
            tilt: meta.tilt,
            values,
            raw_values: None,
            status,
            node_counts: Vec::new(),
            seeds: (0..meta.replicates as u64)
                .map(|r| crate::rng::replicate_key(meta.master_seed, r))
                .collect(),
        })
    }
}
