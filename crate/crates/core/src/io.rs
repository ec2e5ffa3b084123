//! Pose CSV ingestion, report emission and the flat run configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::{AlignmentConfig, Fusion, GlobalAlignment};
use crate::error::{AlignError, Result};
use crate::evaluation::{ErrorReport, ScalingReport};
use crate::matchers::{AzimuthHistogram, MatcherConfig, MatcherKind};
use crate::rotation::{quat_from_wxyz, quat_to_rotation, rotation_to_quat, Rotation, RotationSet};

/// Largest accepted deviation of a quaternion norm from 1.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuatConvention {
    #[default]
    Hamilton,
    /// Converted to Hamilton by conjugation.
    Jpl,
}

impl std::str::FromStr for QuatConvention {
    type Err = AlignError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hamilton" => Ok(Self::Hamilton),
            "jpl" => Ok(Self::Jpl),
            other => Err(AlignError::InvalidConfig(format!(
                "unknown quaternion convention {other:?}"
            ))),
        }
    }
}

const FIELDS: [&str; 8] = ["t", "x", "y", "z", "qx", "qy", "qz", "qw"];

/// Column index of each pose field, in `FIELDS` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnLayout {
    columns: [usize; 8],
}

impl Default for ColumnLayout {
    /// `t,x,y,z,qx,qy,qz,qw`.
    fn default() -> Self {
        Self {
            columns: [0, 1, 2, 3, 4, 5, 6, 7],
        }
    }
}

impl ColumnLayout {
    /// Parses a comma-separated list of field names in file order, e.g.
    /// `t,x,y,z,qw,qx,qy,qz`. A `_` marks a column to skip.
    pub fn parse(spec: &str) -> Result<Self> {
        let names: Vec<String> = spec
            .split(',')
            .map(|s| s.trim().to_ascii_lowercase())
            .collect();
        Self::from_names(&names).ok_or_else(|| {
            AlignError::InvalidConfig(format!(
                "--cols {spec:?} must name each of {} once",
                FIELDS.join(",")
            ))
        })
    }

    fn from_names(names: &[String]) -> Option<Self> {
        let mut columns = [usize::MAX; 8];
        for (col, name) in names.iter().enumerate() {
            if let Some(f) = FIELDS.iter().position(|f| f == name) {
                if columns[f] != usize::MAX {
                    return None;
                }
                columns[f] = col;
            }
        }
        columns
            .iter()
            .all(|&c| c != usize::MAX)
            .then_some(Self { columns })
    }

    /// Resolves a header row; accepts the plain field names plus a few
    /// common spellings (`timestamp`, `q_x`, ...).
    fn from_header(header: &csv::StringRecord) -> Option<Self> {
        let names: Vec<String> = header
            .iter()
            .map(|h| {
                let h: String = h
                    .trim()
                    .trim_start_matches('#')
                    .to_ascii_lowercase()
                    .chars()
                    .filter(|c| !c.is_whitespace() && *c != '_')
                    .collect();
                match h.as_str() {
                    "time" | "timestamp" | "ts" => "t".to_string(),
                    "tx" | "px" => "x".to_string(),
                    "ty" | "py" => "y".to_string(),
                    "tz" | "pz" => "z".to_string(),
                    _ => h,
                }
            })
            .collect();
        Self::from_names(&names)
    }

    fn width(&self) -> usize {
        self.columns.iter().max().map_or(0, |m| m + 1)
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Explicit layout; otherwise the header is used when it names all
    /// fields, falling back to `t,x,y,z,qx,qy,qz,qw`.
    pub layout: Option<ColumnLayout>,
    pub convention: QuatConvention,
}

/// Reads a pose CSV into timestamped rotations.
///
/// Row numbers in errors are 1-based file lines. Translation columns are
/// parsed for validity and then dropped.
pub fn ingest_pose_csv(path: &Path, opts: &IngestOptions) -> Result<RotationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(None)
        .from_path(path)?;
    let mut layout = opts.layout;
    let mut items = Vec::new();
    let mut stamps = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let row = k + 1;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let is_header = row == 1 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err());
        if is_header {
            if layout.is_none() {
                layout = ColumnLayout::from_header(&record);
            }
            continue;
        }
        let layout = layout.get_or_insert_with(ColumnLayout::default);
        if record.len() < layout.width() {
            return Err(AlignError::Parse {
                row,
                column: FIELDS[layout
                    .columns
                    .iter()
                    .position(|&c| c >= record.len())
                    .unwrap_or(0)]
                .into(),
                message: format!(
                    "expected at least {} fields, found {}",
                    layout.width(),
                    record.len()
                ),
            });
        }
        let mut v = [0.0; 8];
        for (f, &col) in layout.columns.iter().enumerate() {
            let raw = &record[col];
            let value: f64 = raw.parse().map_err(|_| AlignError::Parse {
                row,
                column: FIELDS[f].into(),
                message: format!("{raw:?} is not a number"),
            })?;
            if !value.is_finite() {
                return Err(AlignError::Parse {
                    row,
                    column: FIELDS[f].into(),
                    message: format!("{raw:?} is not finite"),
                });
            }
            v[f] = value;
        }
        let [t, _x, _y, _z, qx, qy, qz, qw] = v;
        let norm = (qx * qx + qy * qy + qz * qz + qw * qw).sqrt();
        if (norm - 1.0).abs() > QUAT_NORM_TOLERANCE {
            return Err(AlignError::NonUnitQuaternion { row, norm });
        }
        let q = match opts.convention {
            QuatConvention::Hamilton => quat_from_wxyz(qw, qx, qy, qz),
            QuatConvention::Jpl => quat_from_wxyz(qw, -qx, -qy, -qz),
        };
        items.push(quat_to_rotation(&q));
        stamps.push(t);
    }
    if items.is_empty() {
        return Err(AlignError::EmptyFile(path.to_path_buf()));
    }
    log::info!(
        "{}: {} poses read, translation columns ignored",
        path.display(),
        items.len()
    );
    RotationSet::with_timestamps(items, stamps)
}

/// Writes rotations as a pose CSV with header `t,x,y,z,qx,qy,qz,qw`
/// (zero translation; the index stands in for missing timestamps).
pub fn write_pose_csv(set: &RotationSet, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(FIELDS)?;
    for (k, r) in set.iter().enumerate() {
        let t = set.timestamps().map_or(k as f64, |ts| ts[k]);
        let q = rotation_to_quat(r);
        w.serialize((t, 0.0, 0.0, 0.0, q.i, q.j, q.k, q.w))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = AlignError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(AlignError::InvalidConfig(format!(
                "unknown format {other:?}"
            ))),
        }
    }
}

/// Per-axis part of an [`AlignmentSummary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSummary {
    pub axis: String,
    /// `"<sign>B<axis>"` matched against this target axis.
    pub source: String,
    pub rotation: [[f64; 3]; 3],
    pub score: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Serializable view of a [`GlobalAlignment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub l_star: [[i8; 3]; 3],
    pub l_star_mapping: String,
    pub r_bar: [[f64; 3]; 3],
    pub score: f64,
    pub converged: bool,
    pub selected_hypothesis: Option<usize>,
    pub hypotheses: Vec<String>,
    pub hypothesis_scores: Vec<Option<f64>>,
    pub per_axis: Vec<AxisSummary>,
    pub matcher: MatcherKind,
    pub fusion: Fusion,
    pub pasi: bool,
}

fn rows(m: &nalgebra::Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

impl AlignmentSummary {
    pub fn new(ga: &GlobalAlignment, cfg: &AlignmentConfig) -> Self {
        let per_axis = crate::rotation::Axis::ALL
            .iter()
            .map(|&axis| {
                let (src, sign) = ga.l_star.pairing(axis);
                let m = &ga.per_axis[axis.index()];
                AxisSummary {
                    axis: axis.to_string(),
                    source: format!("{}B{src}", if sign > 0 { '+' } else { '-' }),
                    rotation: rows(m.rotation.matrix()),
                    score: m.score,
                    converged: m.converged,
                    iterations: m.iterations,
                }
            })
            .collect();
        Self {
            l_star: ga.l_star.l(),
            l_star_mapping: ga.l_star.to_mapping(),
            r_bar: rows(ga.r_bar.matrix()),
            score: ga.score,
            converged: ga.converged,
            selected_hypothesis: ga.selected_index(),
            hypotheses: ga.hypotheses.iter().map(|l| l.to_mapping()).collect(),
            hypothesis_scores: ga.hypothesis_scores.clone(),
            per_axis,
            matcher: cfg.matcher.matcher_kind,
            fusion: cfg.fusion,
            pasi: cfg.pasi,
        }
    }

    pub fn r_bar(&self) -> Result<Rotation> {
        let m = nalgebra::Matrix3::from_fn(|i, j| self.r_bar[i][j]);
        crate::rotation::rotation_from_matrix(m)
    }

    pub fn l_star(&self) -> Result<crate::signed_perm::SignedPermutation> {
        crate::signed_perm::SignedPermutation::from_matrix(self.l_star)
    }
}

pub fn read_alignment_summary(path: &Path) -> Result<AlignmentSummary> {
    Ok(serde_json::from_reader(std::io::BufReader::new(
        File::open(path)?,
    ))?)
}

/// Anything the CLI can write out.
#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Error(&'a ErrorReport),
    Scaling(&'a ScalingReport),
    Alignment(&'a AlignmentSummary),
    Histogram(&'a AzimuthHistogram),
}

/// Writes `report` as pretty JSON or as a plot-ready CSV:
///
/// - error reports: `index_a,index_b,error_deg`
/// - scaling reports: `n,time_s`
/// - alignments: `index,mapping,score` over all hypotheses
/// - histograms: `bin_lo_deg,bin_hi_deg,count`
pub fn emit_report(report: Report<'_>, path: &Path, format: ReportFormat) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_report(report, file, format)
}

pub fn write_report<W: Write>(report: Report<'_>, mut out: W, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => {
            match report {
                Report::Error(r) => serde_json::to_writer_pretty(&mut out, r)?,
                Report::Scaling(r) => serde_json::to_writer_pretty(&mut out, r)?,
                Report::Alignment(r) => serde_json::to_writer_pretty(&mut out, r)?,
                Report::Histogram(h) => serde_json::to_writer_pretty(&mut out, h)?,
            }
            writeln!(out)?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            match report {
                Report::Error(r) => {
                    w.write_record(["index_a", "index_b", "error_deg"])?;
                    for (k, e) in r.per_pair_errors_deg.iter().enumerate() {
                        let (a, b) = r.pairs.get(k).copied().unwrap_or((k, k));
                        w.serialize((a, b, e))?;
                    }
                }
                Report::Scaling(r) => {
                    w.write_record(["n", "time_s"])?;
                    for (n, t) in r.sizes.iter().zip(&r.times_s) {
                        w.serialize((n, t))?;
                    }
                }
                Report::Alignment(r) => {
                    w.write_record(["index", "mapping", "score"])?;
                    for (k, (m, s)) in r.hypotheses.iter().zip(&r.hypothesis_scores).enumerate() {
                        w.serialize((k, m, s))?;
                    }
                }
                Report::Histogram(h) => {
                    w.write_record(["bin_lo_deg", "bin_hi_deg", "count"])?;
                    for row in h.rows_deg() {
                        w.serialize(row)?;
                    }
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Flat key-value run configuration, read from TOML. Every key is
/// optional; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub scenario: Option<u8>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub level: Option<String>,
    pub noise_std: Option<f64>,
    pub outlier_fraction: Option<f64>,
    pub mapping: Option<String>,
    pub matcher: Option<String>,
    pub fusion: Option<String>,
    pub pasi: Option<bool>,
    pub proper_only: Option<bool>,
    pub procrustes_refine: Option<bool>,
    pub parallel: Option<bool>,
    pub bins: Option<usize>,
    pub polar_bins: Option<usize>,
    pub hemisphere_flip: Option<bool>,
    pub frs_max_iters: Option<usize>,
    pub frs_tol: Option<usize>,
    pub hybrid_max_iters: Option<usize>,
    pub hybrid_tol: Option<usize>,
    pub mean_threshold: Option<f64>,
    pub thresholds: Option<Vec<f64>>,
    pub sizes: Option<Vec<usize>>,
    pub repeats: Option<usize>,
    pub cols: Option<String>,
    pub quat: Option<String>,
    pub max_gap: Option<f64>,
    pub output: Option<PathBuf>,
    pub format: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| AlignError::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Matcher and alignment settings with file values applied over the
    /// defaults.
    pub fn alignment(&self) -> Result<AlignmentConfig> {
        let d = MatcherConfig::default();
        let matcher = MatcherConfig {
            bins: self.bins.unwrap_or(d.bins),
            polar_bins: self.polar_bins.unwrap_or(d.polar_bins),
            hemisphere_flip: self.hemisphere_flip.unwrap_or(d.hemisphere_flip),
            frs_max_iters: self.frs_max_iters.unwrap_or(d.frs_max_iters),
            frs_tol: self.frs_tol.unwrap_or(d.frs_tol),
            hybrid_max_iters: self.hybrid_max_iters.unwrap_or(d.hybrid_max_iters),
            hybrid_tol: self.hybrid_tol.unwrap_or(d.hybrid_tol),
            matcher_kind: self
                .matcher
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or(d.matcher_kind),
            mean_threshold: self.mean_threshold.unwrap_or(d.mean_threshold),
        };
        let a = AlignmentConfig::default();
        let cfg = AlignmentConfig {
            matcher,
            fusion: self
                .fusion
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or(a.fusion),
            pasi: self.pasi.unwrap_or(a.pasi),
            proper_only: self.proper_only.unwrap_or(a.proper_only),
            procrustes_refine: self.procrustes_refine.unwrap_or(a.procrustes_refine),
            parallel: self.parallel.unwrap_or(a.parallel),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
