use super::correlate::circular_correlate;
use super::histogram::histograms_xyz;
use super::{MatchResult, MatcherConfig};
use crate::error::{AlignError, Result};
use crate::rotation::{axis_rotation, Axis, Rotation};
use crate::tbv::{apply_rotation, direction_of, rotation_to_north, S2PointSet};

/// Fast rotation search: coarse-to-fine azimuth updates about three axes.
///
/// The target is turned to the north pole once and histogrammed about x, y
/// and z. Each iteration histograms the current source estimate in that
/// same frame, takes the per-axis correlation shifts and composes the
/// increment `Rz * Ry * Rx`. The increment is measured in the north frame,
/// so it is conjugated by `R_A` before being applied to the estimate.
///
/// A cold start begins with both mean directions on the pole.
///
/// Hitting the iteration cap is not an error: the best-scoring iterate is
/// returned with `converged = false`. The score is the sum of the three
/// per-axis correlation peaks.
pub fn frs(
    target: &S2PointSet,
    source: &S2PointSet,
    cfg: &MatcherConfig,
    warm_start: Option<&Rotation>,
) -> Result<MatchResult> {
    cfg.validate()?;
    if target.is_empty() || source.is_empty() {
        return Err(AlignError::EmptySet);
    }
    let north_a = rotation_to_north(&direction_of(&target.mean()?, cfg.mean_threshold)?);
    let k = cfg.bins;
    let fixed = histograms_xyz(target.points(), north_a.matrix(), k)?;

    let tol = cfg.frs_tol as isize;
    let width = cfg.bin_width();
    // Without a warm start, begin from the mean-to-north pairing: both
    // means on the pole, no azimuth correction.
    let mut estimate = match warm_start {
        Some(r) => *r,
        None => {
            let north_b = rotation_to_north(&direction_of(&source.mean()?, cfg.mean_threshold)?);
            north_a.inverse() * north_b
        }
    };
    let mut best = (estimate, f64::NEG_INFINITY);
    let mut converged = false;
    let mut iterations = 0;

    // Evaluates one iterate: per-axis signed shifts and summed peak.
    let evaluate = |estimate: &Rotation| -> Result<([isize; 3], f64)> {
        let m = north_a * estimate;
        let moving = histograms_xyz(source.points(), m.matrix(), k)?;
        let mut shifts = [0isize; 3];
        let mut score = 0.0;
        for axis in Axis::ALL {
            let c = circular_correlate(&fixed[axis.index()], &moving[axis.index()])?;
            shifts[axis.index()] = c.signed_shift();
            score += c.peak;
        }
        Ok((shifts, score))
    };

    while iterations < cfg.frs_max_iters {
        let (shifts, score) = evaluate(&estimate)?;
        iterations += 1;
        if score > best.1 {
            best = (estimate, score);
        }
        let step = |estimate: &Rotation| {
            let angle = |axis: Axis| -width * shifts[axis.index()] as f64;
            let increment = axis_rotation(Axis::Z, angle(Axis::Z))
                * axis_rotation(Axis::Y, angle(Axis::Y))
                * axis_rotation(Axis::X, angle(Axis::X));
            north_a.inverse() * increment * north_a * estimate
        };
        if shifts.iter().all(|s| s.abs() <= tol) {
            converged = true;
            best = (estimate, score);
            // Residual shifts inside the tolerance still carry information;
            // take that last step only if it does not lower the score.
            if shifts.iter().any(|&s| s != 0) {
                let polished = step(&estimate);
                let (_, polished_score) = evaluate(&polished)?;
                if polished_score >= score {
                    best = (polished, polished_score);
                }
            }
            break;
        }
        estimate = step(&estimate);
    }
    if !converged {
        // The last update has not been scored yet.
        let (_, score) = evaluate(&estimate)?;
        if score > best.1 {
            best = (estimate, score);
        }
    }

    let (rotation, score) = best;
    Ok(MatchResult {
        rotation,
        score,
        aligned_source: apply_rotation(source, &rotation),
        converged,
        iterations,
    })
}
