//! Error metrics, evaluation-only time alignment and the runtime scaling
//! benchmark.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::align::{align, AlignmentConfig};
use crate::error::{AlignError, Result};
use crate::rotation::{geodesic_angle, Rotation, RotationSet};
use crate::signed_perm::SignedPermutation;
use crate::synthesis::{
    corrupt, derive_seed, generate_scenario, plant_global, random_rotations, CorruptionLevel,
    CorruptionSpec, ScenarioKind, ScenarioSpec,
};

/// Success-rate thresholds used when none are given, degrees.
pub const DEFAULT_THRESHOLDS_DEG: [f64; 4] = [1.0, 2.0, 5.0, 10.0];

/// Sizes at or above this enter the log-log fit by default.
pub const DEFAULT_SLOPE_MIN_N: usize = 10_000;

/// Greedy nearest-timestamp pairing, in the order of `a`.
///
/// Each `a_i` takes the closest still-unused `b_j`; pairs further apart
/// than `max_gap` seconds are dropped. No index is used twice.
pub fn pair_by_timestamp(
    a: &RotationSet,
    b: &RotationSet,
    max_gap: f64,
) -> Result<Vec<(usize, usize)>> {
    let ta = a.timestamps().ok_or(AlignError::MissingTimestamps)?;
    let tb = b.timestamps().ok_or(AlignError::MissingTimestamps)?;
    let mut used = vec![false; tb.len()];
    let mut pairs = Vec::new();
    for (i, &t) in ta.iter().enumerate() {
        // Timestamps are non-decreasing, so the nearest unused neighbor is
        // found by walking outwards from the insertion point.
        let split = tb.partition_point(|&x| x < t);
        let left = (0..split).rev().find(|&j| !used[j]);
        let right = (split..tb.len()).find(|&j| !used[j]);
        let best = match (left, right) {
            (Some(l), Some(r)) => Some(if t - tb[l] <= tb[r] - t { l } else { r }),
            (l, r) => l.or(r),
        };
        if let Some(j) = best {
            if (tb[j] - t).abs() <= max_gap {
                used[j] = true;
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub threshold_deg: f64,
    pub rate: f64,
}

/// Per-pair geodesic errors and their summary statistics, in degrees.
/// Statistics are `None` when there are no pairs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    pub count: usize,
    pub mae_deg: Option<f64>,
    pub rmse_deg: Option<f64>,
    pub median_deg: Option<f64>,
    pub max_deg: Option<f64>,
    pub success_rates: Vec<SuccessRate>,
    pub runtime_s: Option<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub per_pair_errors_deg: Vec<f64>,
}

impl ErrorReport {
    /// Summarizes a list of errors; `pairs` may be empty when the errors
    /// do not come from index pairs.
    pub fn from_errors(errors: Vec<f64>, pairs: Vec<(usize, usize)>, thresholds: &[f64]) -> Self {
        let n = errors.len();
        if n == 0 {
            return Self {
                success_rates: thresholds
                    .iter()
                    .map(|&t| SuccessRate {
                        threshold_deg: t,
                        rate: 0.0,
                    })
                    .collect(),
                ..Self::default()
            };
        }
        let mae = errors.iter().sum::<f64>() / n as f64;
        let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let success_rates = thresholds
            .iter()
            .map(|&t| SuccessRate {
                threshold_deg: t,
                rate: errors.iter().filter(|&&e| e < t).count() as f64 / n as f64,
            })
            .collect();
        Self {
            count: n,
            mae_deg: Some(mae),
            rmse_deg: Some(rmse),
            median_deg: Some(median),
            max_deg: sorted.last().copied(),
            success_rates,
            runtime_s: None,
            pairs,
            per_pair_errors_deg: errors,
        }
    }

    pub fn with_runtime(self, seconds: f64) -> Self {
        Self {
            runtime_s: Some(seconds),
            ..self
        }
    }

    pub fn success_rate(&self, threshold_deg: f64) -> Option<f64> {
        self.success_rates
            .iter()
            .find(|s| s.threshold_deg == threshold_deg)
            .map(|s| s.rate)
    }
}

/// Geodesic error per `(target, aligned source)` index pair.
pub fn error_report(
    targets: &RotationSet,
    aligned_sources: &RotationSet,
    pairs: &[(usize, usize)],
    thresholds: &[f64],
) -> Result<ErrorReport> {
    if pairs.is_empty() {
        return Err(AlignError::EmptyPairing);
    }
    let errors = pairs
        .iter()
        .map(|&(i, j)| {
            let (a, b) = targets
                .items()
                .get(i)
                .zip(aligned_sources.items().get(j))
                .ok_or_else(|| {
                    AlignError::InvalidConfig(format!("pair ({i}, {j}) is out of range"))
                })?;
            Ok(geodesic_angle(a, b).to_degrees())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorReport::from_errors(errors, pairs.to_vec(), thresholds))
}

/// Angle of `r_gt * r_est^T` in degrees. In a noiseless planted set this
/// equals every per-pair error.
pub fn constant_delta_error(r_gt: &Rotation, r_est: &Rotation) -> f64 {
    geodesic_angle(r_gt, r_est).to_degrees()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub sizes: Vec<usize>,
    /// Median wall-clock seconds per size.
    pub times_s: Vec<f64>,
    /// Least-squares slope of `log t` on `log n` over the fit window.
    pub loglog_slope: Option<f64>,
    pub slope_min_n: usize,
    pub repeats: usize,
    pub parallel: bool,
}

/// Least-squares slope of `log y` against `log x`; `None` below two points.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Times end-to-end alignment for every size. Data generation happens
/// before the clock starts; each size reports the median of `repeats`.
pub fn scaling_benchmark(
    sizes: &[usize],
    scenario: &ScenarioSpec,
    cfg: &AlignmentConfig,
    repeats: usize,
    slope_min_n: usize,
) -> Result<ScalingReport> {
    if sizes.is_empty() || repeats == 0 {
        return Err(AlignError::InvalidConfig(
            "benchmark needs sizes and repeats >= 1".into(),
        ));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AlignError::InvalidConfig(
            "benchmark sizes must be strictly increasing".into(),
        ));
    }
    let mut times = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let spec = scenario.clone().with_n(n);
        let targets = generate_scenario(&spec)?;
        let r_gt = random_rotations(1, derive_seed(spec.seed, "bench-rotation"))[0];
        let sources = plant_global(&targets, &r_gt, &SignedPermutation::IDENTITY, None).set;
        let mut samples = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            let ga = align(&targets, &sources, cfg)?;
            samples.push(start.elapsed().as_secs_f64());
            std::hint::black_box(ga);
        }
        samples.sort_by(f64::total_cmp);
        let t = samples[samples.len() / 2];
        log::info!("n = {n}: {t:.4} s");
        times.push(t);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = sizes
        .iter()
        .zip(&times)
        .filter(|(n, _)| **n >= slope_min_n)
        .map(|(n, t)| (*n as f64, *t))
        .unzip();
    Ok(ScalingReport {
        sizes: sizes.to_vec(),
        times_s: times,
        loglog_slope: loglog_slope(&xs, &ys),
        slope_min_n,
        repeats,
        parallel: cfg.parallel,
    })
}

/// A batch of planted-transform trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub scenario: ScenarioSpec,
    pub trials: usize,
    /// Applied to the planted sources; its seed is replaced per trial.
    pub corruption: Option<CorruptionSpec>,
    pub mapping: SignedPermutation,
    pub align: AlignmentConfig,
    pub thresholds: Vec<f64>,
    pub seed: u64,
    /// Record wall-clock time; off keeps reports bit-reproducible.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub r_gt: [[f64; 3]; 3],
    pub l_star: String,
    pub l_star_correct: bool,
    pub error_deg: f64,
    pub score: f64,
    pub converged: bool,
}

/// Summary of [`run_simulation`]. Statistics are over the per-trial
/// errors `angle(R_gt, r_bar)`, so `pairs` is `(k, k)` per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: ScenarioKind,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub matcher: crate::matchers::MatcherKind,
    pub fusion: crate::align::Fusion,
    pub pasi: bool,
    pub level: Option<CorruptionLevel>,
    pub noise_std_rad: f64,
    pub outlier_fraction: f64,
    pub planted_mapping: String,
    pub l_star_recovered: usize,
    #[serde(flatten)]
    pub errors: ErrorReport,
    pub trial_results: Vec<TrialResult>,
}

/// For each trial: fresh targets, a random `R_gt`, sources planted with
/// `spec.mapping` and shuffled, optional corruption, then alignment. All
/// randomness is derived from `spec.seed`.
pub fn run_simulation(spec: &SimulationSpec) -> Result<SimulationReport> {
    if spec.trials == 0 {
        return Err(AlignError::InvalidConfig("trials must be >= 1".into()));
    }
    spec.scenario.validate()?;
    spec.align.validate()?;
    if let Some(c) = &spec.corruption {
        c.validate()?;
    }
    let mut results = Vec::with_capacity(spec.trials);
    let mut elapsed = 0.0;
    for k in 0..spec.trials {
        let stage = |name: &str| derive_seed(spec.seed, &format!("{name}/{k}"));
        let targets = generate_scenario(&spec.scenario.clone().with_seed(stage("targets")))?;
        let r_gt = random_rotations(1, stage("r_gt"))[0];
        let mut sources = plant_global(&targets, &r_gt, &spec.mapping, Some(stage("shuffle"))).set;
        if let Some(c) = &spec.corruption {
            let c = CorruptionSpec {
                seed: stage("corrupt"),
                ..c.clone()
            };
            sources = corrupt(&sources, &c)?;
        }
        let start = Instant::now();
        let ga = align(&targets, &sources, &spec.align)?;
        elapsed += start.elapsed().as_secs_f64();
        results.push(TrialResult {
            r_gt: std::array::from_fn(|i| std::array::from_fn(|j| r_gt.matrix()[(i, j)])),
            l_star: ga.l_star.to_mapping(),
            l_star_correct: ga.l_star == spec.mapping,
            error_deg: constant_delta_error(&r_gt, &ga.r_bar),
            score: ga.score,
            converged: ga.converged,
        });
    }
    let errors: Vec<f64> = results.iter().map(|r| r.error_deg).collect();
    let pairs = (0..spec.trials).map(|k| (k, k)).collect();
    let mut report = ErrorReport::from_errors(errors, pairs, &spec.thresholds);
    if spec.timing {
        report = report.with_runtime(elapsed);
    }
    let (noise_std_rad, outlier_fraction) = spec
        .corruption
        .as_ref()
        .map_or((0.0, 0.0), |c| (c.noise_std, c.outlier_fraction));
    Ok(SimulationReport {
        scenario: spec.scenario.kind,
        n: spec.scenario.n,
        trials: spec.trials,
        seed: spec.seed,
        matcher: spec.align.matcher.matcher_kind,
        fusion: spec.align.fusion,
        pasi: spec.align.pasi,
        level: spec.corruption.as_ref().and_then(|c| c.level),
        noise_std_rad,
        outlier_fraction,
        planted_mapping: spec.mapping.to_mapping(),
        l_star_recovered: results.iter().filter(|r| r.l_star_correct).count(),
        errors: report,
        trial_results: results,
    })
}
