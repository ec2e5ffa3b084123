//! Correspondence-free registration of two point sets on the sphere.
//!
//! Every matcher returns the rotation taking the source set onto the
//! target set (`target ~ R * source`) together with a correlation score.

mod correlate;
mod frs;
mod histogram;
mod spmc;

pub use correlate::{circular_correlate, signed_shift, Correlation};
pub use frs::frs;
pub use histogram::{
    azimuth, azimuth_bin, azimuth_histogram, occupancy_grid, polar, AzimuthHistogram, OccupancyGrid,
};
pub use spmc::spmc;

use serde::{Deserialize, Serialize};

use crate::error::{AlignError, Result};
use crate::rotation::Rotation;
use crate::tbv::{S2PointSet, DEFAULT_MEAN_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherKind {
    #[default]
    Spmc,
    Frs,
    SpmcFrs,
}

impl std::str::FromStr for MatcherKind {
    type Err = AlignError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "spmc" => Ok(MatcherKind::Spmc),
            "frs" => Ok(MatcherKind::Frs),
            "spmc_frs" | "hybrid" => Ok(MatcherKind::SpmcFrs),
            other => Err(AlignError::InvalidConfig(format!(
                "unknown matcher {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    /// Azimuth bins `K`.
    pub bins: usize,
    /// Polar resolution of occupancy grids.
    pub polar_bins: usize,
    /// Reflect points below the equator before histogramming (SPMC only).
    pub hemisphere_flip: bool,
    /// FRS iteration cap `T`.
    pub frs_max_iters: usize,
    /// FRS stop tolerance in bins.
    pub frs_tol: usize,
    /// FRS iteration cap when warm-started by SPMC.
    pub hybrid_max_iters: usize,
    pub hybrid_tol: usize,
    pub matcher_kind: MatcherKind,
    /// Mean norms below this abort the match with `DegenerateMean`.
    pub mean_threshold: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            bins: 360,
            polar_bins: 180,
            hemisphere_flip: false,
            frs_max_iters: 10,
            frs_tol: 1,
            hybrid_max_iters: 5,
            hybrid_tol: 1,
            matcher_kind: MatcherKind::Spmc,
            mean_threshold: DEFAULT_MEAN_THRESHOLD,
        }
    }
}

impl MatcherConfig {
    pub fn with_kind(kind: MatcherKind) -> Self {
        Self {
            matcher_kind: kind,
            ..Self::default()
        }
    }

    pub fn bin_width(&self) -> f64 {
        std::f64::consts::TAU / self.bins as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AlignError::InvalidConfig(m));
        if self.bins < histogram::MIN_BINS {
            return bad(format!("bins must be >= {}", histogram::MIN_BINS));
        }
        if self.polar_bins == 0 {
            return bad("polar_bins must be positive".into());
        }
        if self.frs_max_iters == 0 || self.hybrid_max_iters == 0 {
            return bad("FRS iteration caps must be >= 1".into());
        }
        if 2 * self.frs_tol >= self.bins || 2 * self.hybrid_tol >= self.bins {
            return bad("FRS tolerance must be below K/2".into());
        }
        if self.mean_threshold.is_nan() || self.mean_threshold < 0.0 {
            return bad("mean_threshold must be non-negative".into());
        }
        Ok(())
    }
}

/// Result of one spherical match.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Takes the source onto the target.
    pub rotation: Rotation,
    /// Correlation peak (sum of per-view peaks for FRS).
    pub score: f64,
    pub aligned_source: S2PointSet,
    /// Always true for SPMC; FRS reports whether all shifts fell within
    /// tolerance before the iteration cap.
    pub converged: bool,
    pub iterations: usize,
}

/// SPMC proposal refined by a short warm-started FRS run.
pub fn spmc_frs(
    target: &S2PointSet,
    source: &S2PointSet,
    cfg: &MatcherConfig,
) -> Result<MatchResult> {
    let proposal = spmc(target, source, cfg)?;
    let refine_cfg = MatcherConfig {
        frs_max_iters: cfg.hybrid_max_iters,
        frs_tol: cfg.hybrid_tol,
        ..cfg.clone()
    };
    frs(target, source, &refine_cfg, Some(&proposal.rotation))
}

/// Runs the matcher selected by `cfg.matcher_kind`.
pub fn run_matcher(
    target: &S2PointSet,
    source: &S2PointSet,
    cfg: &MatcherConfig,
) -> Result<MatchResult> {
    match cfg.matcher_kind {
        MatcherKind::Spmc => spmc(target, source, cfg),
        MatcherKind::Frs => frs(target, source, cfg, None),
        MatcherKind::SpmcFrs => spmc_frs(target, source, cfg),
    }
}
