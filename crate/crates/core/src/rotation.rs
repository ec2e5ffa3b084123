//! Rotation arithmetic: representations and conversions, the geodesic
//! metric, projection onto SO(3) and rotation averaging.
//!
//! Points on the sphere are acted on as columns (`v' = R v`) everywhere in
//! this crate. The row-vector form `P R` is only exposed through
//! [`rotate_points`].

use std::fmt;

use nalgebra::{Matrix3, Quaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{AlignError, Result};

/// A proper orthogonal 3x3 matrix.
pub type Rotation = nalgebra::Rotation3<f64>;

/// Hamilton unit quaternion `w + xi + yj + zk`.
pub type UnitQuaternion = nalgebra::UnitQuaternion<f64>;

/// Tolerance used when validating orthonormality and determinant.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        Axis::ALL.get(i).copied()
    }

    pub fn unit(self) -> Vector3<f64> {
        let mut v = Vector3::zeros();
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        };
        f.write_str(c)
    }
}

/// Composition order for Euler angles. All orders are intrinsic: `Xyz`
/// composes `R = Rx(roll) * Ry(pitch) * Rz(yaw)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EulerOrder {
    #[default]
    Xyz,
    Xzy,
    Yxz,
    Yzx,
    Zxy,
    Zyx,
}

impl EulerOrder {
    fn axes(self) -> [Axis; 3] {
        use Axis::*;
        match self {
            EulerOrder::Xyz => [X, Y, Z],
            EulerOrder::Xzy => [X, Z, Y],
            EulerOrder::Yxz => [Y, X, Z],
            EulerOrder::Yzx => [Y, Z, X],
            EulerOrder::Zxy => [Z, X, Y],
            EulerOrder::Zyx => [Z, Y, X],
        }
    }
}

/// Roll, pitch and yaw in radians, about x, y and z respectively.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn from_degrees(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(roll.to_radians(), pitch.to_radians(), yaw.to_radians())
    }

    fn about(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.roll,
            Axis::Y => self.pitch,
            Axis::Z => self.yaw,
        }
    }
}

/// An ordered collection of rotations with optional timestamps (seconds).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RotationSet {
    items: Vec<Rotation>,
    timestamps: Option<Vec<f64>>,
}

impl RotationSet {
    pub fn new(items: Vec<Rotation>) -> Self {
        Self {
            items,
            timestamps: None,
        }
    }

    /// Attaches timestamps; they must match `items` in length and be
    /// monotone non-decreasing.
    pub fn with_timestamps(items: Vec<Rotation>, timestamps: Vec<f64>) -> Result<Self> {
        if timestamps.len() != items.len() {
            return Err(AlignError::InvalidConfig(format!(
                "{} timestamps for {} rotations",
                timestamps.len(),
                items.len()
            )));
        }
        if timestamps
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]).is_none_or(|o| o.is_lt()))
        {
            return Err(AlignError::InvalidConfig(
                "timestamps must be monotone non-decreasing".into(),
            ));
        }
        Ok(Self {
            items,
            timestamps: Some(timestamps),
        })
    }

    pub fn items(&self) -> &[Rotation] {
        &self.items
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Rotation> {
        self.items.iter()
    }

    pub fn into_items(self) -> Vec<Rotation> {
        self.items
    }

    /// Maps every element, keeping timestamps.
    pub fn map(&self, f: impl FnMut(&Rotation) -> Rotation) -> Self {
        Self {
            items: self.items.iter().map(f).collect(),
            timestamps: self.timestamps.clone(),
        }
    }
}

impl From<Vec<Rotation>> for RotationSet {
    fn from(items: Vec<Rotation>) -> Self {
        Self::new(items)
    }
}

impl<'a> IntoIterator for &'a RotationSet {
    type Item = &'a Rotation;
    type IntoIter = std::slice::Iter<'a, Rotation>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

/// Validates a raw matrix as a rotation (orthonormal, det +1, within 1e-9).
pub fn rotation_from_matrix(m: Matrix3<f64>) -> Result<Rotation> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(AlignError::InvalidRotation("non-finite entry".into()));
    }
    let defect = (m * m.transpose() - Matrix3::identity()).abs().max();
    if defect > ROTATION_TOLERANCE {
        return Err(AlignError::InvalidRotation(format!(
            "not orthonormal (max |MM^T - I| = {defect:.3e})"
        )));
    }
    let det = m.determinant();
    if (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(AlignError::InvalidRotation(format!("determinant {det}")));
    }
    Ok(Rotation::from_matrix_unchecked(m))
}

/// Applies `r` to every row of `points` with the row-vector convention
/// `P_rotated = P R`.
pub fn rotate_points(points: &[Vector3<f64>], r: &Rotation) -> Vec<Vector3<f64>> {
    let rt = r.matrix().transpose();
    points.iter().map(|p| rt * p).collect()
}

/// Right-handed rotation by `angle` radians about a coordinate axis.
pub fn axis_rotation(axis: Axis, angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    let m = match axis {
        Axis::X => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        Axis::Y => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        Axis::Z => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
    };
    Rotation::from_matrix_unchecked(m)
}

/// Geodesic distance `acos((tr(R1 R2^T) - 1) / 2)` in radians, in `[0, pi]`.
///
/// Evaluated as `atan2(sin, cos)` with the sine taken from the skew part,
/// which stays accurate near zero (identical inputs give exactly 0).
pub fn geodesic_angle(r1: &Rotation, r2: &Rotation) -> f64 {
    let m = r1.matrix() * r2.matrix().transpose();
    let cos = (m.trace() - 1.0) / 2.0;
    let sin = 0.5
        * Vector3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        )
        .norm();
    sin.atan2(cos)
}

/// Nearest rotation in Frobenius norm, `U diag(1, 1, det(U V^T)) V^T`.
///
/// Fails with [`AlignError::DegenerateMatrix`] when the two largest
/// singular values are not both positive.
pub fn project_to_so3(m: &Matrix3<f64>) -> Result<Rotation> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(AlignError::DegenerateMatrix);
    }
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(AlignError::DegenerateMatrix),
    };
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let largest = sv[order[0]];
    if largest.is_nan() || largest <= 0.0 || sv[order[1]] <= largest * 1e-12 {
        return Err(AlignError::DegenerateMatrix);
    }
    let mut d = Matrix3::identity();
    d[(order[2], order[2])] = (u * v_t).determinant().signum();
    let r = u * d * v_t;
    Ok(Rotation::from_matrix_unchecked(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMethod {
    #[default]
    ProjectedArithmetic,
    Karcher,
}

const KARCHER_TOL: f64 = 1e-10;
const KARCHER_MAX_ITERS: usize = 100;

/// Mean of a non-empty list of rotations.
///
/// The Karcher mean starts from the first element and is only unique when
/// all inputs lie within `pi/2` of each other.
pub fn mean_rotation(rs: &[Rotation], method: MeanMethod) -> Result<Rotation> {
    let first = rs.first().ok_or(AlignError::EmptySet)?;
    if rs.len() == 1 {
        return Ok(*first);
    }
    match method {
        MeanMethod::ProjectedArithmetic => {
            let sum: Matrix3<f64> = rs.iter().map(|r| r.matrix()).sum();
            project_to_so3(&(sum / rs.len() as f64))
        }
        MeanMethod::Karcher => {
            let mut mean = *first;
            for _ in 0..KARCHER_MAX_ITERS {
                let step: Vector3<f64> = rs
                    .iter()
                    .map(|r| (mean.inverse() * r).scaled_axis())
                    .sum::<Vector3<f64>>()
                    / rs.len() as f64;
                mean *= Rotation::from_scaled_axis(step);
                if step.norm() < KARCHER_TOL {
                    return Ok(renormalize(&mean));
                }
            }
            Err(AlignError::NonConvergent {
                iterations: KARCHER_MAX_ITERS,
            })
        }
    }
}

fn renormalize(r: &Rotation) -> Rotation {
    project_to_so3(r.matrix()).unwrap_or(*r)
}

pub fn quat_to_rotation(q: &UnitQuaternion) -> Rotation {
    q.to_rotation_matrix()
}

pub fn rotation_to_quat(r: &Rotation) -> UnitQuaternion {
    UnitQuaternion::from_rotation_matrix(r)
}

/// Builds a unit quaternion from Hamilton components, normalizing.
pub fn quat_from_wxyz(w: f64, x: f64, y: f64, z: f64) -> UnitQuaternion {
    UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
}

pub fn euler_to_rotation(e: &EulerAngles, order: EulerOrder) -> Rotation {
    order
        .axes()
        .iter()
        .fold(Rotation::identity(), |acc, &axis| {
            acc * axis_rotation(axis, e.about(axis))
        })
}

/// Inverse of [`euler_to_rotation`] for the default intrinsic X-Y-Z order.
/// Pitch is returned in `[-pi/2, pi/2]`.
pub fn rotation_to_euler_xyz(r: &Rotation) -> EulerAngles {
    let m = r.matrix();
    let pitch = m[(0, 2)].clamp(-1.0, 1.0).asin();
    let roll = (-m[(1, 2)]).atan2(m[(2, 2)]);
    let yaw = (-m[(0, 1)]).atan2(m[(0, 0)]);
    EulerAngles { roll, pitch, yaw }
}

/// Haar-uniform rotation from a normalized 4D Gaussian quaternion.
pub fn uniform_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return quat_to_rotation(&quat_from_wxyz(q[0], q[1], q[2], q[3]));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn rotate_points_identity_and_row_convention() {
        let pts = vec![Vector3::x(), Vector3::y(), Vector3::z()];
        assert_eq!(rotate_points(&pts, &Rotation::identity()), pts);

        let rz = axis_rotation(Axis::Z, FRAC_PI_2);
        let out = rotate_points(&[Vector3::x()], &rz);
        // First row of Rz(90).
        assert!((out[0] - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rotate_points_matches_column_convention() {
        let mut rng = rng();
        let r = uniform_rotation(&mut rng);
        let pts: Vec<_> = (0..20)
            .map(|_| uniform_rotation(&mut rng) * Vector3::x())
            .collect();
        let out = rotate_points(&pts, &r);
        for (p, q) in pts.iter().zip(&out) {
            // (R^T p^T)^T row by row.
            let expected = r.matrix().transpose() * p;
            assert!((q - expected).norm() < 1e-15);
            assert!((q.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn axis_rotation_matches_printed_rz() {
        assert_eq!(axis_rotation(Axis::Z, 0.0), Rotation::identity());
        let rz = axis_rotation(Axis::Z, FRAC_PI_2);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((rz.matrix() - expected).abs().max() < 1e-15);
        let theta = 0.37;
        for axis in Axis::ALL {
            let p = axis_rotation(axis, theta) * axis_rotation(axis, -theta);
            assert!((p.matrix() - Matrix3::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn geodesic_angle_basics() {
        let i = Rotation::identity();
        assert_eq!(geodesic_angle(&i, &i), 0.0);
        let rz = axis_rotation(Axis::Z, FRAC_PI_2);
        assert!((geodesic_angle(&i, &rz) - FRAC_PI_2).abs() < 1e-12);
        let flip = axis_rotation(Axis::X, PI);
        assert!((geodesic_angle(&i, &flip) - PI).abs() < 1e-7);
    }

    #[test]
    fn projection_of_rotation_and_scaled_identity() {
        let mut rng = rng();
        let r = uniform_rotation(&mut rng);
        let p = project_to_so3(r.matrix()).unwrap();
        assert!((p.matrix() - r.matrix()).abs().max() < 1e-12);
        let p = project_to_so3(&(Matrix3::identity() * 3.0)).unwrap();
        assert!((p.matrix() - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn projection_handles_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, -0.5));
        let p = project_to_so3(&m).unwrap();
        assert!((p.matrix().determinant() - 1.0).abs() < 1e-12);
        // Smallest singular direction (z) is the one flipped.
        assert!((p.matrix() - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn projection_rejects_rank_one() {
        let v = Vector3::new(1.0, 2.0, 3.0);
        let m = v * v.transpose();
        assert!(matches!(
            project_to_so3(&m),
            Err(AlignError::DegenerateMatrix)
        ));
        assert!(matches!(
            project_to_so3(&Matrix3::zeros()),
            Err(AlignError::DegenerateMatrix)
        ));
    }

    /// Local grid search over perturbations `exp(w) * R_svd` confirms the SVD
    /// answer is the Frobenius minimizer.
    #[test]
    fn projection_beats_local_grid() {
        let mut rng = rng();
        let rs: Vec<_> = (0..3).map(|_| uniform_rotation(&mut rng)).collect();
        let m: Matrix3<f64> = rs.iter().map(|r| r.matrix()).sum::<Matrix3<f64>>() / 3.0;
        let p = project_to_so3(&m).unwrap();
        let best = (p.matrix() - m).norm();
        let steps = [-0.02, -0.01, -0.002, 0.0, 0.002, 0.01, 0.02];
        for &a in &steps {
            for &b in &steps {
                for &c in &steps {
                    let q = Rotation::from_scaled_axis(Vector3::new(a, b, c)) * p;
                    assert!((q.matrix() - m).norm() >= best - 1e-12);
                }
            }
        }
    }

    #[test]
    fn mean_of_copies_and_singleton() {
        let mut rng = rng();
        let r = uniform_rotation(&mut rng);
        for method in [MeanMethod::ProjectedArithmetic, MeanMethod::Karcher] {
            let m = mean_rotation(&[r, r, r], method).unwrap();
            assert!(geodesic_angle(&m, &r) < 1e-9);
            assert_eq!(mean_rotation(&[r], method).unwrap(), r);
        }
        assert!(matches!(
            mean_rotation(&[], MeanMethod::Karcher),
            Err(AlignError::EmptySet)
        ));
    }

    #[test]
    fn karcher_midpoint_on_one_axis() {
        let rs = [
            Rotation::identity(),
            axis_rotation(Axis::Z, 20f64.to_radians()),
        ];
        let m = mean_rotation(&rs, MeanMethod::Karcher).unwrap();
        assert!(geodesic_angle(&m, &axis_rotation(Axis::Z, 10f64.to_radians())) < 1e-9);
    }

    /// Gradient descent on the sum of squared geodesic distances, written
    /// against the trace formula only.
    #[test]
    fn karcher_matches_gradient_descent_oracle() {
        let mut rng = rng();
        let rs: Vec<_> = (0..3)
            .map(|_| {
                let axis = uniform_rotation(&mut rng) * Vector3::x();
                let angle = rng.random_range(0.0..30f64.to_radians());
                Rotation::from_scaled_axis(axis * angle)
            })
            .collect();
        let cost = |m: &Rotation| rs.iter().map(|r| geodesic_angle(m, r).powi(2)).sum::<f64>();
        let mut m = Rotation::identity();
        let h = 1e-6;
        for _ in 0..2000 {
            let mut g = Vector3::zeros();
            for k in 0..3 {
                let mut d = Vector3::zeros();
                d[k] = h;
                let plus = m * Rotation::from_scaled_axis(d);
                let minus = m * Rotation::from_scaled_axis(-d);
                g[k] = (cost(&plus) - cost(&minus)) / (2.0 * h);
            }
            m *= Rotation::from_scaled_axis(-g * 0.1);
        }
        let k = mean_rotation(&rs, MeanMethod::Karcher).unwrap();
        assert!(geodesic_angle(&k, &m) < 1e-6, "{}", geodesic_angle(&k, &m));
    }

    #[test]
    fn quaternion_and_euler_conversions() {
        let q = quat_from_wxyz(1.0, 0.0, 0.0, 0.0);
        assert_eq!(quat_to_rotation(&q), Rotation::identity());
        let e = EulerAngles::from_degrees(0.0, 0.0, 90.0);
        let r = euler_to_rotation(&e, EulerOrder::Xyz);
        assert!(geodesic_angle(&r, &axis_rotation(Axis::Z, FRAC_PI_2)) < 1e-12);

        let mut rng = rng();
        for _ in 0..100 {
            let r = uniform_rotation(&mut rng);
            let q = rotation_to_quat(&r);
            let back = rotation_to_quat(&quat_to_rotation(&q));
            let d = (back.coords - q.coords)
                .norm()
                .min((back.coords + q.coords).norm());
            assert!(d < 1e-9);
        }
    }

    #[test]
    fn euler_order_composition() {
        let e = EulerAngles::new(0.1, -0.2, 0.3);
        let xyz = euler_to_rotation(&e, EulerOrder::Xyz);
        let manual = axis_rotation(Axis::X, 0.1)
            * axis_rotation(Axis::Y, -0.2)
            * axis_rotation(Axis::Z, 0.3);
        assert!(geodesic_angle(&xyz, &manual) < 1e-14);
        let zyx = euler_to_rotation(&e, EulerOrder::Zyx);
        let manual = axis_rotation(Axis::Z, 0.3)
            * axis_rotation(Axis::Y, -0.2)
            * axis_rotation(Axis::X, 0.1);
        assert!(geodesic_angle(&zyx, &manual) < 1e-14);
        let back = rotation_to_euler_xyz(&xyz);
        assert!((back.roll - 0.1).abs() < 1e-12);
        assert!((back.pitch + 0.2).abs() < 1e-12);
        assert!((back.yaw - 0.3).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        assert!(rotation_from_matrix(Matrix3::identity()).is_ok());
        assert!(rotation_from_matrix(Matrix3::identity() * 1.01).is_err());
        assert!(rotation_from_matrix(-Matrix3::identity()).is_err());
    }

    #[test]
    fn timestamps_must_be_monotone() {
        let items = vec![Rotation::identity(); 3];
        assert!(RotationSet::with_timestamps(items.clone(), vec![0.0, 1.0, 1.0]).is_ok());
        assert!(RotationSet::with_timestamps(items.clone(), vec![0.0, 2.0, 1.0]).is_err());
        assert!(RotationSet::with_timestamps(items, vec![0.0]).is_err());
    }
}
