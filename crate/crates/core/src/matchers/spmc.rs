use super::correlate::circular_correlate;
use super::histogram::histogram_of_rotated;
use super::{MatchResult, MatcherConfig};
use crate::error::{AlignError, Result};
use crate::rotation::{axis_rotation, Axis};
use crate::tbv::{apply_rotation, direction_of, rotation_to_north, S2PointSet};

/// Spherical pattern matching by correlation.
///
/// Both sets are turned so their mean directions sit on the north pole;
/// the remaining rotation about `z` is the peak of the circular
/// correlation of their azimuth histograms. The result is
/// `R_A^T * Rz(-2 pi s* / K) * R_B`: the source is `s*` bins ahead of the
/// target, so it is turned back by that amount.
pub fn spmc(target: &S2PointSet, source: &S2PointSet, cfg: &MatcherConfig) -> Result<MatchResult> {
    cfg.validate()?;
    if target.is_empty() || source.is_empty() {
        return Err(AlignError::EmptySet);
    }
    let north_a = rotation_to_north(&direction_of(&target.mean()?, cfg.mean_threshold)?);
    let north_b = rotation_to_north(&direction_of(&source.mean()?, cfg.mean_threshold)?);

    let k = cfg.bins;
    let ha = histogram_of_rotated(
        target.points(),
        north_a.matrix(),
        Axis::Z,
        k,
        cfg.hemisphere_flip,
    )?;
    let hb = histogram_of_rotated(
        source.points(),
        north_b.matrix(),
        Axis::Z,
        k,
        cfg.hemisphere_flip,
    )?;
    let corr = circular_correlate(&ha, &hb)?;

    let shift = axis_rotation(Axis::Z, -cfg.bin_width() * corr.s_star as f64);
    let rotation = north_a.inverse() * shift * north_b;
    Ok(MatchResult {
        rotation,
        score: corr.peak,
        aligned_source: apply_rotation(source, &rotation),
        converged: true,
        iterations: 1,
    })
}
