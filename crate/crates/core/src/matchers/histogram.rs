use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{AlignError, Result};
use crate::rotation::Axis;
use crate::tbv::S2PointSet;

pub const MIN_BINS: usize = 4;

/// Circular histogram of azimuth angles with `K` equal bins over `[0, 2pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AzimuthHistogram {
    bins: Vec<f64>,
}

impl AzimuthHistogram {
    pub fn zeros(k: usize) -> Result<Self> {
        check_bins(k)?;
        Ok(Self { bins: vec![0.0; k] })
    }

    pub fn from_counts(bins: Vec<f64>) -> Result<Self> {
        check_bins(bins.len())?;
        if bins.iter().any(|c| c.is_nan() || *c < 0.0) {
            return Err(AlignError::InvalidConfig(
                "histogram counts must be non-negative".into(),
            ));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn k(&self) -> usize {
        self.bins.len()
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        TAU / self.k() as f64
    }

    /// `(lo_deg, hi_deg, count)` per bin, for plotting.
    pub fn rows_deg(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let w = 360.0 / self.k() as f64;
        self.bins
            .iter()
            .enumerate()
            .map(move |(i, &c)| (i as f64 * w, (i + 1) as f64 * w, c))
    }

    /// Circularly shifted copy: bin `i` moves to `(i + shift) mod K`.
    pub fn shifted(&self, shift: isize) -> Self {
        let k = self.k() as isize;
        let mut out = vec![0.0; self.k()];
        for (i, &c) in self.bins.iter().enumerate() {
            out[(i as isize + shift).rem_euclid(k) as usize] = c;
        }
        Self { bins: out }
    }

    fn add(&mut self, bin: usize) {
        self.bins[bin] += 1.0;
    }
}

fn check_bins(k: usize) -> Result<()> {
    if k < MIN_BINS {
        return Err(AlignError::InvalidConfig(format!(
            "histogram needs at least {MIN_BINS} bins, got {k}"
        )));
    }
    Ok(())
}

/// Right-handed azimuth of `v` about `axis`, in `[0, 2pi)`.
///
/// z uses `atan2(vy, vx)`, x uses `atan2(vz, vy)`, y uses `atan2(vx, vz)`,
/// so a rotation by `theta` about the axis adds `theta` to the azimuth.
#[inline]
pub fn azimuth(v: &Vector3<f64>, axis: Axis) -> f64 {
    let a = match axis {
        Axis::Z => v.y.atan2(v.x),
        Axis::X => v.z.atan2(v.y),
        Axis::Y => v.x.atan2(v.z),
    };
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

/// Polar angle of `v` measured from `axis`, in `[0, pi]`.
#[inline]
pub fn polar(v: &Vector3<f64>, axis: Axis) -> f64 {
    v[axis.index()].clamp(-1.0, 1.0).acos()
}

/// Bin index `floor(K * azimuth / 2pi)`.
#[inline]
pub fn azimuth_bin(v: &Vector3<f64>, axis: Axis, k: usize) -> usize {
    let b = (azimuth(v, axis) * k as f64 / TAU) as usize;
    if b >= k {
        0
    } else {
        b
    }
}

pub fn azimuth_histogram(s: &S2PointSet, axis: Axis, k: usize) -> Result<AzimuthHistogram> {
    if s.is_empty() {
        return Err(AlignError::EmptySet);
    }
    histogram_of_rotated(s.points(), &Matrix3::identity(), axis, k, false)
}

/// Histograms `m * v` for every point without materializing the rotated
/// set. With `flip`, points whose rotated z is negative are replaced by
/// their antipode first.
pub(crate) fn histogram_of_rotated(
    points: &[Vector3<f64>],
    m: &Matrix3<f64>,
    axis: Axis,
    k: usize,
    flip: bool,
) -> Result<AzimuthHistogram> {
    let mut h = AzimuthHistogram::zeros(k)?;
    for p in points {
        let mut v = m * p;
        if flip && v.z < 0.0 {
            v = -v;
        }
        h.add(azimuth_bin(&v, axis, k));
    }
    Ok(h)
}

/// Three histograms (about x, y and z) of `m * v` in one pass.
pub(crate) fn histograms_xyz(
    points: &[Vector3<f64>],
    m: &Matrix3<f64>,
    k: usize,
) -> Result<[AzimuthHistogram; 3]> {
    let mut hs = [
        AzimuthHistogram::zeros(k)?,
        AzimuthHistogram::zeros(k)?,
        AzimuthHistogram::zeros(k)?,
    ];
    for p in points {
        let v = m * p;
        for axis in Axis::ALL {
            hs[axis.index()].add(azimuth_bin(&v, axis, k));
        }
    }
    Ok(hs)
}

/// Polar x azimuth occupancy counts about one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    polar_bins: usize,
    k: usize,
    counts: Vec<f64>,
}

impl OccupancyGrid {
    pub fn polar_bins(&self) -> usize {
        self.polar_bins
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self, polar_bin: usize, azimuth_bin: usize) -> f64 {
        self.counts[polar_bin * self.k + azimuth_bin]
    }

    /// Sum over polar bins.
    pub fn azimuth_marginal(&self) -> AzimuthHistogram {
        let mut bins = vec![0.0; self.k];
        for row in self.counts.chunks(self.k) {
            for (b, c) in bins.iter_mut().zip(row) {
                *b += c;
            }
        }
        AzimuthHistogram { bins }
    }

    /// Zero-shift correlation `sum h1 * h2` over all cells.
    pub fn overlap(&self, other: &OccupancyGrid) -> Result<f64> {
        if self.k != other.k || self.polar_bins != other.polar_bins {
            return Err(AlignError::MismatchedBins {
                left: self.counts.len(),
                right: other.counts.len(),
            });
        }
        Ok(self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a * b)
            .sum())
    }
}

pub fn occupancy_grid(
    s: &S2PointSet,
    axis: Axis,
    polar_bins: usize,
    k: usize,
) -> Result<OccupancyGrid> {
    if s.is_empty() {
        return Err(AlignError::EmptySet);
    }
    check_bins(k)?;
    if polar_bins == 0 {
        return Err(AlignError::InvalidConfig(
            "polar_bins must be positive".into(),
        ));
    }
    let mut counts = vec![0.0; polar_bins * k];
    for v in s.iter() {
        let pb = ((polar(v, axis) / PI * polar_bins as f64) as usize).min(polar_bins - 1);
        counts[pb * k + azimuth_bin(v, axis, k)] += 1.0;
    }
    Ok(OccupancyGrid {
        polar_bins,
        k,
        counts,
    })
}
