//! Binary dataset files and their JSON-lines export.
//!
//! Layout: the magic `CLSPDATA`, a little-endian `u32` version, a `u32`
//! header length and a JSON header, followed by `size` records of
//!
//! ```text
//! orbit_label: u32
//! x: obs_dim × f64
//! g: flat_len × f64   (translations, then angles, then axis-angle vectors)
//! y: obs_dim × f64
//! ```
//!
//! with every float little-endian.

use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::Context;
use classpose_core::datasets::{Dataset, GeneratorId, Triple};
use classpose_core::liegroup::{GroupElement, GroupSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::invalid;

pub const DATASET_MAGIC: &[u8; 8] = b"CLSPDATA";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub generator: GeneratorId,
    pub group: GroupSpec,
    pub obs_dim: usize,
    pub size: usize,
    pub seed: u64,
    pub scale: Vec<f64>,
}

impl DatasetHeader {
    pub fn flat_len(&self) -> usize {
        self.group.algebra_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub triples: Vec<Triple>,
}

impl DatasetFile {
    pub fn from_dataset(dataset: &Dataset, scale: Vec<f64>) -> Self {
        let header = DatasetHeader {
            generator: dataset.generator,
            group: dataset.group.clone(),
            obs_dim: dataset.obs_dim,
            size: dataset.triples.len(),
            seed: dataset.seed,
            scale,
        };
        Self { header, triples: dataset.triples.clone() }
    }
}

pub(crate) fn write_header<W: Write, H: Serialize>(w: &mut W, magic: &[u8; 8], version: u32, header: &H) -> io::Result<()> {
    let json = serde_json::to_vec(header).map_err(io::Error::other)?;
    w.write_all(magic)?;
    w.write_all(&version.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)
}

pub(crate) fn read_header<R: Read, H: for<'de> Deserialize<'de>>(r: &mut R, magic: &[u8; 8], version: u32, what: &str) -> anyhow::Result<H> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m).with_context(|| format!("reading {what} magic"))?;
    if &m != magic {
        return invalid(format!("not a {what} file (bad magic)"));
    }
    let v = read_u32(r)?;
    if v != version {
        return invalid(format!("unsupported {what} version {v}, expected {version}"));
    }
    let len = read_u32(r)? as usize;
    if len > 1 << 24 {
        return invalid(format!("{what} header of {len} bytes is implausibly large"));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).with_context(|| format!("reading {what} header"))?;
    match serde_json::from_slice(&json) {
        Ok(h) => Ok(h),
        Err(e) => invalid(format!("corrupt {what} header: {e}")),
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> anyhow::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).context("unexpected end of file")?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> anyhow::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).context("unexpected end of file")?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn write_dataset<W: Write>(w: &mut W, file: &DatasetFile) -> anyhow::Result<()> {
    let h = &file.header;
    if h.size != file.triples.len() {
        return invalid(format!("header says {} records but {} were given", h.size, file.triples.len()));
    }
    write_header(w, DATASET_MAGIC, DATASET_VERSION, h)?;
    for t in &file.triples {
        if t.x.len() != h.obs_dim || t.y.len() != h.obs_dim || !t.g.matches(&h.group) {
            return invalid("record does not match the dataset header");
        }
        w.write_all(&t.orbit_label.to_le_bytes())?;
        write_f64s(w, &t.x)?;
        write_f64s(w, &t.g.to_flat())?;
        write_f64s(w, &t.y)?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(r: &mut R) -> anyhow::Result<DatasetFile> {
    let header: DatasetHeader = read_header(r, DATASET_MAGIC, DATASET_VERSION, "dataset")?;
    if header.generator.build().group() != header.group {
        return invalid(format!("header group does not belong to generator {}", header.generator));
    }
    let mut triples = Vec::with_capacity(header.size.min(1 << 20));
    for i in 0..header.size {
        let orbit_label = read_u32(r).with_context(|| format!("record {i}"))?;
        let x = read_f64s(r, header.obs_dim).with_context(|| format!("record {i}"))?;
        let flat = read_f64s(r, header.flat_len()).with_context(|| format!("record {i}"))?;
        let y = read_f64s(r, header.obs_dim).with_context(|| format!("record {i}"))?;
        let g = match GroupElement::from_flat(&header.group, &flat) {
            Ok(g) => g,
            Err(e) => return invalid(format!("record {i}: {e}")),
        };
        triples.push(Triple { x, g, y, orbit_label });
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return invalid("trailing bytes after the last record");
    }
    Ok(DatasetFile { header, triples })
}

pub fn save(path: &Path, file: &DatasetFile) -> anyhow::Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_dataset(&mut w, file)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> anyhow::Result<DatasetFile> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_dataset(&mut BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    orbit_label: u32,
    x: &'a [f64],
    g: Vec<f64>,
    y: &'a [f64],
}

/// One JSON object per line: the header first, then every record.
pub fn write_jsonl<W: Write>(w: &mut W, file: &DatasetFile) -> anyhow::Result<()> {
    serde_json::to_writer(&mut *w, &file.header)?;
    writeln!(w)?;
    for t in &file.triples {
        serde_json::to_writer(&mut *w, &JsonRecord { orbit_label: t.orbit_label, x: &t.x, g: t.g.to_flat(), y: &t.y })?;
        writeln!(w)?;
    }
    Ok(())
}

/// Number of records in a JSON-lines export.
pub fn count_jsonl_records<R: BufRead>(r: R) -> io::Result<usize> {
    let mut lines = 0usize;
    for line in r.lines() {
        if !line?.trim().is_empty() {
            lines += 1;
        }
    }
    Ok(lines.saturating_sub(1))
}

/// Hex SHA-256 of a file's bytes.
pub fn file_hash(path: &Path) -> anyhow::Result<String> {
    let mut f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    io::copy(&mut f, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}
