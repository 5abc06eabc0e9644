//! CSV, JSON and PGM outputs.
//!
//! Floats are printed with Rust's shortest round-trip formatting, so a
//! rerun with the same configuration writes the same bytes.

use std::io::{self, Write};
use std::path::Path;

use anyhow::Context;
use classpose_core::eval::{DensityMap, HitRateReport, Rigid2};
use classpose_core::train::StepRecord;
use serde::{Deserialize, Serialize};

pub const LOSS_CSV_HEADER: &str = "step,total,class_term,pose_term,wall_clock_ms";
pub const HIT_RATE_CSV_HEADER: &str = "dataset,model,T,distractors,test_size,mean,std,runs";
pub const LOCALIZATION_CSV_HEADER: &str = "index,true_orbit,true_row,true_col,pred_orbit,pred_row,pred_col,clamped,correct";

/// Streams one row per optimizer step.
pub struct LossCsv<W: Write> {
    out: W,
}

impl<W: Write> LossCsv<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{LOSS_CSV_HEADER}")?;
        Ok(Self { out })
    }

    /// Appends to a file that already has a header.
    pub fn resume(out: W) -> Self {
        Self { out }
    }

    pub fn row(&mut self, rec: &StepRecord, wall_clock_ms: u64) -> io::Result<()> {
        writeln!(self.out, "{},{},{},{},{}", rec.step, rec.total, rec.class_term, rec.pose_term, wall_clock_ms)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parsed loss CSV row, used by tests and the acceptance suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub step: u64,
    pub total: f64,
    pub class_term: f64,
    pub pose_term: f64,
}

pub fn parse_loss_csv(text: &str) -> anyhow::Result<Vec<LossRow>> {
    let mut lines = text.lines();
    anyhow::ensure!(lines.next() == Some(LOSS_CSV_HEADER), "missing loss CSV header");
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            anyhow::ensure!(f.len() == 5, "bad loss row `{l}`");
            Ok(LossRow { step: f[0].parse()?, total: f[1].parse()?, class_term: f[2].parse()?, pose_term: f[3].parse()? })
        })
        .collect()
}

pub fn write_hit_rate_csv<W: Write>(mut out: W, dataset: &str, model: &str, report: &HitRateReport) -> io::Result<()> {
    writeln!(out, "{HIT_RATE_CSV_HEADER}")?;
    for row in &report.rows {
        let runs: Vec<String> = row.runs.iter().map(|r| r.to_string()).collect();
        writeln!(
            out,
            "{dataset},{model},{},{},{},{},{},{}",
            row.steps,
            report.distractors,
            report.test_size,
            row.mean,
            row.std,
            runs.join(";")
        )?;
    }
    Ok(())
}

/// Scores written next to the hit-rate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub dataset: String,
    pub model: String,
    pub hit_rate: HitRateReport,
    /// Held-out nearest-centroid orbit accuracy; class-pose models only.
    pub orbit_purity: Option<f64>,
    /// Per-factor leakage matrix; product groups only.
    pub leakage: Option<Vec<Vec<f64>>>,
    pub leakage_diagonally_dominant: Option<bool>,
}

/// Binary greyscale image of a density map, north up, scaled so the
/// fullest cell is white.
pub fn write_pgm<W: Write>(mut out: W, map: &DensityMap) -> io::Result<()> {
    let n = map.resolution;
    write!(out, "P5\n{n} {n}\n255\n")?;
    let max = map.max_count().max(1) as u64;
    let mut pixels = Vec::with_capacity(n * n);
    for row in (0..n).rev() {
        for col in 0..n {
            let c = map.counts[row * n + col] as u64;
            pixels.push(((c * 255 + max / 2) / max) as u8);
        }
    }
    out.write_all(&pixels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub orbit: u32,
    pub resolution: usize,
    pub origin: [f64; 2],
    pub extent: f64,
    pub cell_size: f64,
    /// Rigid motion from latent translations to world coordinates.
    pub alignment: Rigid2,
    pub max_count: u32,
    pub total_count: u64,
    /// Overlap with the reachable cells, when those are known.
    pub reachable_iou: Option<f64>,
}

impl MapMetadata {
    pub fn new(map: &DensityMap, reachable_iou: Option<f64>) -> Self {
        Self {
            orbit: map.orbit,
            resolution: map.resolution,
            origin: map.origin,
            extent: map.extent,
            cell_size: map.cell_size(),
            alignment: map.alignment,
            max_count: map.max_count(),
            total_count: map.counts.iter().map(|c| *c as u64).sum(),
            reachable_iou,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationRow {
    pub true_orbit: u32,
    pub true_cell: (usize, usize),
    pub pred_orbit: u32,
    pub pred_cell: (usize, usize),
    pub clamped: bool,
}

impl LocalizationRow {
    pub fn correct(&self) -> bool {
        self.true_orbit == self.pred_orbit && self.true_cell == self.pred_cell
    }
}

pub fn write_localization_csv<W: Write>(mut out: W, rows: &[LocalizationRow]) -> io::Result<()> {
    writeln!(out, "{LOCALIZATION_CSV_HEADER}")?;
    for (i, r) in rows.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{}",
            r.true_orbit,
            r.true_cell.0,
            r.true_cell.1,
            r.pred_orbit,
            r.pred_cell.0,
            r.pred_cell.1,
            r.clamped as u8,
            r.correct() as u8
        )?;
    }
    Ok(())
}

pub fn localization_accuracy(rows: &[LocalizationRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| r.correct()).count() as f64 / rows.len() as f64
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_csv_roundtrip() {
        let mut csv = LossCsv::new(Vec::new()).unwrap();
        let rec = StepRecord { step: 3, epoch: 0, total: 1.25, class_term: 1.0, pose_term: 0.25 };
        csv.row(&rec, 0).unwrap();
        let text = String::from_utf8(csv.into_inner()).unwrap();
        assert_eq!(text, "step,total,class_term,pose_term,wall_clock_ms\n3,1.25,1,0.25,0\n");
        let rows = parse_loss_csv(&text).unwrap();
        assert_eq!(rows, vec![LossRow { step: 3, total: 1.25, class_term: 1.0, pose_term: 0.25 }]);
    }

    #[test]
    fn hit_rate_csv_has_distractor_column() {
        let report = HitRateReport::new(&[1], vec![vec![1.0, 0.5, 0.75]], 32, 10);
        let mut out = Vec::new();
        write_hit_rate_csv(&mut out, "sprites", "ours", &report).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "sprites,ours,1,32,10,0.75,0.25,1;0.5;0.75");
    }

    #[test]
    fn pgm_is_north_up_and_scaled() {
        let map = DensityMap {
            orbit: 0,
            resolution: 2,
            origin: [0.0, 0.0],
            extent: 1.0,
            alignment: Rigid2::IDENTITY,
            counts: vec![4, 0, 0, 2],
        };
        let mut out = Vec::new();
        write_pgm(&mut out, &map).unwrap();
        assert_eq!(&out[..11], b"P5\n2 2\n255\n");
        assert_eq!(&out[11..], &[0, 128, 255, 0]);
    }

    #[test]
    fn localization_rows() {
        let rows = [
            LocalizationRow { true_orbit: 0, true_cell: (1, 2), pred_orbit: 0, pred_cell: (1, 2), clamped: false },
            LocalizationRow { true_orbit: 0, true_cell: (1, 2), pred_orbit: 1, pred_cell: (1, 2), clamped: false },
        ];
        assert_eq!(localization_accuracy(&rows), 0.5);
        let mut out = Vec::new();
        write_localization_csv(&mut out, &rows).unwrap();
        assert!(String::from_utf8(out).unwrap().ends_with("1,0,1,2,1,1,2,0,0\n"));
    }
}
