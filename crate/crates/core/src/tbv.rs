//! Transformed Basis Vectors: each rotation contributes its three rows as
//! points on the unit sphere, giving one spherical point set per axis.

use nalgebra::{Matrix3, Unit, Vector3};

use crate::error::{AlignError, Result};
use crate::rotation::{Axis, Rotation, RotationSet};

/// A unit 3-vector.
pub type S2Point = Unit<Vector3<f64>>;

/// Mean norms below this are treated as directionless.
pub const DEFAULT_MEAN_THRESHOLD: f64 = 1e-6;

const UNIT_TOLERANCE: f64 = 1e-9;

/// An ordered list of unit vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct S2PointSet {
    points: Vec<Vector3<f64>>,
}

impl S2PointSet {
    /// Checks every point is unit length within 1e-9.
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| {
            (p.norm() - 1.0)
                .abs()
                .partial_cmp(&UNIT_TOLERANCE)
                .is_none_or(|o| o.is_gt())
        }) {
            return Err(AlignError::InvalidConfig(format!(
                "point {p:?} is not on the unit sphere"
            )));
        }
        Ok(Self { points })
    }

    /// Normalizes each input vector; zero vectors are rejected.
    pub fn from_directions(dirs: impl IntoIterator<Item = Vector3<f64>>) -> Result<Self> {
        let points = dirs
            .into_iter()
            .map(|d| {
                d.try_normalize(1e-15)
                    .ok_or_else(|| AlignError::InvalidConfig("zero-length direction".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { points })
    }

    pub(crate) fn from_unit_unchecked(points: Vec<Vector3<f64>>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vector3<f64>> {
        self.points.iter()
    }

    /// Unnormalized arithmetic mean.
    pub fn mean(&self) -> Result<Vector3<f64>> {
        if self.points.is_empty() {
            return Err(AlignError::EmptySet);
        }
        Ok(self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64)
    }

    /// Antipodal copy, `v -> -v`.
    pub fn negated(&self) -> Self {
        Self {
            points: self.points.iter().map(|p| -p).collect(),
        }
    }
}

/// The x, y and z TBV point sets of one rotation set.
#[derive(Debug, Clone, PartialEq)]
pub struct TbvTriple {
    pub x: S2PointSet,
    pub y: S2PointSet,
    pub z: S2PointSet,
}

impl TbvTriple {
    pub fn axis(&self, axis: Axis) -> &S2PointSet {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Stacks the k-th x, y and z points back into rows of a matrix.
    pub fn row_matrices(&self) -> Vec<Matrix3<f64>> {
        (0..self.len())
            .map(|k| {
                Matrix3::from_rows(&[
                    self.x.points[k].transpose(),
                    self.y.points[k].transpose(),
                    self.z.points[k].transpose(),
                ])
            })
            .collect()
    }
}

/// Row k of every rotation becomes point k of the matching axis set.
pub fn tbvs_from_so3(rs: &RotationSet) -> Result<TbvTriple> {
    if rs.is_empty() {
        return Err(AlignError::EmptySet);
    }
    let rows = |i: usize| {
        S2PointSet::from_unit_unchecked(rs.iter().map(|r| r.matrix().row(i).transpose()).collect())
    };
    Ok(TbvTriple {
        x: rows(0),
        y: rows(1),
        z: rows(2),
    })
}

/// Normalized arithmetic mean with the default degeneracy threshold.
pub fn mean_direction(s: &S2PointSet) -> Result<S2Point> {
    mean_direction_with(s, DEFAULT_MEAN_THRESHOLD)
}

pub fn mean_direction_with(s: &S2PointSet, threshold: f64) -> Result<S2Point> {
    direction_of(&s.mean()?, threshold)
}

pub(crate) fn direction_of(mean: &Vector3<f64>, threshold: f64) -> Result<S2Point> {
    let norm = mean.norm();
    if norm.partial_cmp(&threshold).is_none_or(|o| o.is_lt()) {
        return Err(AlignError::DegenerateMean { norm, axis: None });
    }
    Ok(Unit::new_unchecked(mean / norm))
}

/// Minimal-angle rotation taking `d` to `+z`. The antipode `-z` uses a
/// half turn about `+x`.
pub fn rotation_to_north(d: &S2Point) -> Rotation {
    let z = Vector3::z();
    let cross = d.cross(&z);
    let sin = cross.norm();
    let cos = d.dot(&z);
    if sin < 1e-15 {
        return if cos > 0.0 {
            Rotation::identity()
        } else {
            Rotation::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
        };
    }
    let axis = Unit::new_unchecked(cross / sin);
    Rotation::from_axis_angle(&axis, sin.atan2(cos))
}

/// Maps every point `v -> r v`.
pub fn apply_rotation(s: &S2PointSet, r: &Rotation) -> S2PointSet {
    let m = r.matrix();
    S2PointSet::from_unit_unchecked(s.points.iter().map(|p| m * p).collect())
}
