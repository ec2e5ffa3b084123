//! Seeded generators for synthetic rotation sets, corruption and planted
//! global transforms. Every generator is a pure function of its spec and
//! seed.

use nalgebra::{Unit, Vector3};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AlignError, Result};
use crate::rotation::{
    euler_to_rotation, uniform_rotation, EulerAngles, EulerOrder, Rotation, RotationSet,
};
use crate::signed_perm::SignedPermutation;

/// Default spread of the Gaussian scenario, per Euler angle.
pub const DEFAULT_GAUSSIAN_STD_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    BoundedEuler,
    GaussianQuaternion,
    /// Bounded-Euler targets meant to be planted with a signed permutation;
    /// the planting itself is [`plant_global`].
    PlantedPasi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    /// `(lo, hi)` in radians for roll, pitch and yaw.
    pub euler_ranges: [(f64, f64); 3],
    pub gaussian_mean: EulerAngles,
    /// Standard deviation of each Euler angle, radians.
    pub gaussian_std: f64,
    pub euler_order: EulerOrder,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self::scenario(1, 2000, 0).expect("scenario 1 exists")
    }
}

fn deg_range(lo: f64, hi: f64) -> (f64, f64) {
    (lo.to_radians(), hi.to_radians())
}

impl ScenarioSpec {
    /// The three reference scenarios: integer Euler bounds, the same bounds
    /// widened by half a degree, and a Gaussian around `[30, 10, 15.5]` deg.
    pub fn scenario(id: u8, n: usize, seed: u64) -> Result<Self> {
        let ranges1 = [
            deg_range(-40.0, 10.0),
            deg_range(-20.0, 20.0),
            deg_range(-10.0, 50.0),
        ];
        let ranges2 = [
            deg_range(-40.5, 10.5),
            deg_range(-20.5, 20.5),
            deg_range(-10.5, 50.5),
        ];
        let base = Self {
            kind: ScenarioKind::BoundedEuler,
            n,
            euler_ranges: ranges1,
            gaussian_mean: EulerAngles::from_degrees(30.0, 10.0, 15.5),
            gaussian_std: DEFAULT_GAUSSIAN_STD_DEG.to_radians(),
            euler_order: EulerOrder::Xyz,
            seed,
        };
        match id {
            1 => Ok(base),
            2 => Ok(Self {
                euler_ranges: ranges2,
                ..base
            }),
            3 => Ok(Self {
                kind: ScenarioKind::GaussianQuaternion,
                ..base
            }),
            _ => Err(AlignError::InvalidConfig(format!(
                "unknown scenario {id}, expected 1-3"
            ))),
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_n(self, n: usize) -> Self {
        Self { n, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(AlignError::InvalidConfig("scenario n must be >= 1".into()));
        }
        if self
            .euler_ranges
            .iter()
            .any(|(lo, hi)| lo.partial_cmp(hi).is_none_or(|o| o.is_gt()))
        {
            return Err(AlignError::InvalidConfig(
                "Euler ranges need lo <= hi".into(),
            ));
        }
        if self.gaussian_std.is_nan() || self.gaussian_std < 0.0 {
            return Err(AlignError::InvalidConfig(
                "gaussian_std must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Samples `spec.n` rotations.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<RotationSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let items = match spec.kind {
        ScenarioKind::BoundedEuler | ScenarioKind::PlantedPasi => {
            let sample = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            };
            (0..spec.n)
                .map(|_| {
                    let roll = sample(&mut rng, spec.euler_ranges[0]);
                    let pitch = sample(&mut rng, spec.euler_ranges[1]);
                    let yaw = sample(&mut rng, spec.euler_ranges[2]);
                    euler_to_rotation(&EulerAngles::new(roll, pitch, yaw), spec.euler_order)
                })
                .collect()
        }
        ScenarioKind::GaussianQuaternion => {
            let m = spec.gaussian_mean;
            let mut draw =
                |mean: f64| mean + spec.gaussian_std * rng.sample::<f64, _>(StandardNormal);
            (0..spec.n)
                .map(|_| {
                    let e = EulerAngles::new(draw(m.roll), draw(m.pitch), draw(m.yaw));
                    euler_to_rotation(&e, spec.euler_order)
                })
                .collect()
        }
    };
    Ok(RotationSet::new(items))
}

/// The seven reference corruption levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CorruptionLevel {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
}

impl CorruptionLevel {
    pub const ALL: [CorruptionLevel; 7] = [
        CorruptionLevel::B1,
        CorruptionLevel::B2,
        CorruptionLevel::B3,
        CorruptionLevel::B4,
        CorruptionLevel::B5,
        CorruptionLevel::B6,
        CorruptionLevel::B7,
    ];

    /// `(noise_std_rad, outlier_fraction)`.
    pub fn params(self) -> (f64, f64) {
        match self {
            CorruptionLevel::B1 => (0.0, 0.0),
            CorruptionLevel::B2 => (0.01, 0.0),
            CorruptionLevel::B3 => (0.01, 0.10),
            CorruptionLevel::B4 => (0.01, 0.25),
            CorruptionLevel::B5 => (0.01, 0.50),
            CorruptionLevel::B6 => (0.01, 0.75),
            CorruptionLevel::B7 => (0.01, 0.90),
        }
    }
}

impl std::str::FromStr for CorruptionLevel {
    type Err = AlignError;

    fn from_str(s: &str) -> Result<Self> {
        let k: usize = s
            .trim()
            .trim_start_matches(['B', 'b'])
            .parse()
            .map_err(|_| AlignError::InvalidConfig(format!("unknown corruption level {s:?}")))?;
        Self::ALL
            .get(k.wrapping_sub(1))
            .copied()
            .ok_or_else(|| AlignError::InvalidConfig(format!("unknown corruption level {s:?}")))
    }
}

impl std::fmt::Display for CorruptionLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Set when the parameters come from a reference level.
    pub level: Option<CorruptionLevel>,
    pub noise_std: f64,
    pub outlier_fraction: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn level(level: CorruptionLevel, seed: u64) -> Self {
        let (noise_std, outlier_fraction) = level.params();
        Self {
            level: Some(level),
            noise_std,
            outlier_fraction,
            seed,
        }
    }

    pub fn custom(noise_std: f64, outlier_fraction: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            level: None,
            noise_std,
            outlier_fraction,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_std.is_nan()
            || self.noise_std < 0.0
            || !(0.0..=1.0).contains(&self.outlier_fraction)
        {
            return Err(AlignError::InvalidConfig(format!(
                "corruption needs noise_std >= 0 and outlier_fraction in [0, 1], got {} / {}",
                self.noise_std, self.outlier_fraction
            )));
        }
        Ok(())
    }

    pub fn outlier_count(&self, n: usize) -> usize {
        (self.outlier_fraction * n as f64 + 1e-9).floor() as usize
    }
}

/// Replaces `floor(fraction * n)` randomly chosen elements by Haar-uniform
/// rotations and right-composes every other element with a small random
/// rotation (uniform axis, angle `~ N(0, noise_std)`). Timestamps are kept.
pub fn corrupt(set: &RotationSet, c: &CorruptionSpec) -> Result<RotationSet> {
    Ok(corrupt_with_mask(set, c)?.0)
}

/// As [`corrupt`], also returning which indices became outliers.
pub fn corrupt_with_mask(
    set: &RotationSet,
    c: &CorruptionSpec,
) -> Result<(RotationSet, Vec<bool>)> {
    c.validate()?;
    let n = set.len();
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut outlier = vec![false; n];
    for i in index::sample(&mut rng, n, c.outlier_count(n)) {
        outlier[i] = true;
    }
    let noise =
        Normal::new(0.0, c.noise_std).map_err(|e| AlignError::InvalidConfig(e.to_string()))?;
    let items: Vec<Rotation> = set
        .iter()
        .zip(&outlier)
        .map(|(r, &is_outlier)| {
            if is_outlier {
                uniform_rotation(&mut rng)
            } else if c.noise_std > 0.0 {
                *r * small_rotation(&mut rng, &noise)
            } else {
                *r
            }
        })
        .collect();
    let out = match set.timestamps() {
        Some(ts) => RotationSet::with_timestamps(items, ts.to_vec())?,
        None => RotationSet::new(items),
    };
    Ok((out, outlier))
}

fn small_rotation(rng: &mut ChaCha8Rng, angle: &Normal<f64>) -> Rotation {
    let axis = loop {
        let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        if v.norm() > 1e-12 {
            break Unit::new_normalize(v);
        }
    };
    Rotation::from_axis_angle(&axis, angle.sample(rng))
}

/// Sources built from targets by a planted global transform.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSet {
    pub set: RotationSet,
    /// `origin[k]` is the target index source `k` was made from.
    pub origin: Vec<usize>,
}

/// Maps every `a` to `l^T a r_gt`. With `shuffle_seed` the order is
/// permuted (and timestamps dropped) so no correspondence survives.
pub fn plant_global(
    set: &RotationSet,
    r_gt: &Rotation,
    l: &SignedPermutation,
    shuffle_seed: Option<u64>,
) -> PlantedSet {
    let lt = l.transpose().matrix();
    let planted: Vec<Rotation> = set
        .iter()
        .map(|a| Rotation::from_matrix_unchecked(lt * a.matrix() * r_gt.matrix()))
        .collect();
    let mut origin: Vec<usize> = (0..set.len()).collect();
    match shuffle_seed {
        Some(seed) => {
            origin.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            PlantedSet {
                set: RotationSet::new(origin.iter().map(|&i| planted[i]).collect()),
                origin,
            }
        }
        None => {
            let set = match set.timestamps() {
                Some(ts) => RotationSet::with_timestamps(planted, ts.to_vec())
                    .expect("timestamps already valid"),
                None => RotationSet::new(planted),
            };
            PlantedSet { set, origin }
        }
    }
}

/// `n` Haar-uniform rotations.
pub fn random_rotations(n: usize, seed: u64) -> Vec<Rotation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| uniform_rotation(&mut rng)).collect()
}

/// Derives an independent per-stage seed from a run seed.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    // FNV-1a over the stage name, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
