//! End-to-end alignment of two rotation sets.
//!
//! Each set is split into its three TBV point sets and every axis pairing
//! is matched on the sphere. The axis-consistent path pairs x with x, y
//! with y and z with z. The PASI path scores every signed permutation from
//! a table of 18 precomputed matches and keeps the best one.
//!
//! With `L` the selected permutation and `r_bar` the fused rotation, a
//! source rotation `b` is carried onto the targets as `L * b * r_bar^T`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AlignError, Result};
use crate::matchers::{occupancy_grid, run_matcher, MatchResult, MatcherConfig};
use crate::rotation::{mean_rotation, project_to_so3, Axis, MeanMethod, Rotation, RotationSet};
use crate::signed_perm::{apply_to_triple, enumerate_signed_permutations, SignedPermutation};
use crate::tbv::{apply_rotation, direction_of, tbvs_from_so3, S2PointSet, TbvTriple};

/// How the three per-axis rotations become one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Procrustes between the stacked mean TBVs before and after matching.
    #[default]
    MeanFrameProcrustes,
    /// `Pi_SO3((R_x + R_y + R_z) / 3)`.
    ProjectedMean,
    Karcher,
}

impl std::str::FromStr for Fusion {
    type Err = AlignError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mean_frame_procrustes" | "mean_frame" => Ok(Fusion::MeanFrameProcrustes),
            "projected_mean" | "projected" => Ok(Fusion::ProjectedMean),
            "karcher" => Ok(Fusion::Karcher),
            other => Err(AlignError::InvalidConfig(format!(
                "unknown fusion {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    pub matcher: MatcherConfig,
    pub fusion: Fusion,
    pub pasi: bool,
    /// Restrict PASI to the 24 permutations with determinant +1.
    pub proper_only: bool,
    pub procrustes_refine: bool,
    /// Run the PASI table matches on the rayon pool.
    pub parallel: bool,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            matcher: MatcherConfig::default(),
            fusion: Fusion::default(),
            pasi: false,
            proper_only: true,
            procrustes_refine: false,
            parallel: false,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        self.matcher.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalAlignment {
    pub l_star: SignedPermutation,
    /// Takes the permuted source TBVs onto the target TBVs.
    pub r_bar: Rotation,
    /// Matches for target axes x, y, z under `l_star`.
    pub per_axis: [MatchResult; 3],
    /// `S(l_star)`, the sum of the three per-axis scores.
    pub score: f64,
    /// `S(L)` in enumeration order; `None` where a pairing was degenerate.
    /// Axis-consistent runs record the single identity hypothesis.
    pub hypothesis_scores: Vec<Option<f64>>,
    /// The hypotheses scored, in the same order.
    pub hypotheses: Vec<SignedPermutation>,
    /// All three matchers reported convergence.
    pub converged: bool,
}

impl GlobalAlignment {
    /// Index of `l_star` in `hypotheses`.
    pub fn selected_index(&self) -> Option<usize> {
        self.hypotheses.iter().position(|l| *l == self.l_star)
    }
}

/// Runs the path selected by `cfg.pasi`, then the optional refinement.
pub fn align(
    targets: &RotationSet,
    sources: &RotationSet,
    cfg: &AlignmentConfig,
) -> Result<GlobalAlignment> {
    let ga = if cfg.pasi {
        align_pasi(targets, sources, cfg)?
    } else {
        align_axis_consistent(targets, sources, cfg)?
    };
    if cfg.procrustes_refine {
        procrustes_refine(targets, sources, ga, cfg)
    } else {
        Ok(ga)
    }
}

fn split(
    targets: &RotationSet,
    sources: &RotationSet,
    cfg: &AlignmentConfig,
) -> Result<(TbvTriple, TbvTriple)> {
    cfg.validate()?;
    Ok((tbvs_from_so3(targets)?, tbvs_from_so3(sources)?))
}

fn match_axis(
    target: &S2PointSet,
    source: &S2PointSet,
    axis: Axis,
    cfg: &MatcherConfig,
) -> Result<MatchResult> {
    run_matcher(target, source, cfg).map_err(|e| e.with_axis(axis))
}

/// Matches x-x, y-y and z-z and fuses the three rotations.
pub fn align_axis_consistent(
    targets: &RotationSet,
    sources: &RotationSet,
    cfg: &AlignmentConfig,
) -> Result<GlobalAlignment> {
    let (a, b) = split(targets, sources, cfg)?;
    let matches = Axis::ALL.map(|axis| match_axis(a.axis(axis), b.axis(axis), axis, &cfg.matcher));
    let [mx, my, mz] = matches;
    let per_axis = [mx?, my?, mz?];
    let r_bar = fuse(&per_axis, [&b.x, &b.y, &b.z], cfg.fusion)?;
    let score = per_axis.iter().map(|m| m.score).sum();
    Ok(GlobalAlignment {
        l_star: SignedPermutation::IDENTITY,
        r_bar,
        converged: per_axis.iter().all(|m| m.converged),
        per_axis,
        score,
        hypothesis_scores: vec![Some(score)],
        hypotheses: vec![SignedPermutation::IDENTITY],
    })
}

/// One entry per `(target axis i, source axis j, sign s)`.
struct MatchTable {
    entries: Vec<Result<MatchResult>>,
}

impl MatchTable {
    fn index(i: usize, j: usize, sign: i8) -> usize {
        (i * 3 + j) * 2 + (sign < 0) as usize
    }

    fn get(&self, i: usize, j: usize, sign: i8) -> &Result<MatchResult> {
        &self.entries[Self::index(i, j, sign)]
    }

    /// `S(L)`, or `None` when a pairing of `L` was degenerate.
    fn score(&self, l: &SignedPermutation) -> Result<Option<f64>> {
        let mut total = 0.0;
        for i in 0..3 {
            match self.get(i, l.pi()[i], l.signs()[i]) {
                Ok(m) => total += m.score,
                Err(AlignError::DegenerateMean { .. }) => return Ok(None),
                Err(e) => return Err(clone_error(e)),
            }
        }
        Ok(Some(total))
    }
}

// Non-degeneracy errors from the table are configuration errors that would
// have failed every entry identically; re-create them by kind.
fn clone_error(e: &AlignError) -> AlignError {
    match e {
        AlignError::EmptySet => AlignError::EmptySet,
        AlignError::DegenerateMean { norm, axis } => AlignError::DegenerateMean {
            norm: *norm,
            axis: *axis,
        },
        AlignError::DegenerateMatrix => AlignError::DegenerateMatrix,
        AlignError::MismatchedBins { left, right } => AlignError::MismatchedBins {
            left: *left,
            right: *right,
        },
        AlignError::InvalidConfig(m) => AlignError::InvalidConfig(m.clone()),
        other => AlignError::InvalidConfig(other.to_string()),
    }
}

fn signed_sources(b: &TbvTriple) -> [[S2PointSet; 2]; 3] {
    Axis::ALL.map(|axis| {
        let s = b.axis(axis);
        [s.clone(), s.negated()]
    })
}

fn match_table(a: &TbvTriple, b: &TbvTriple, cfg: &AlignmentConfig) -> MatchTable {
    let signed = signed_sources(b);
    let run = |idx: usize| {
        let (ij, neg) = (idx / 2, idx % 2);
        let (i, j) = (ij / 3, ij % 3);
        match_axis(
            a.axis(Axis::ALL[i]),
            &signed[j][neg],
            Axis::ALL[i],
            &cfg.matcher,
        )
    };
    let entries = if cfg.parallel {
        (0..18).into_par_iter().map(run).collect()
    } else {
        (0..18).map(run).collect()
    };
    MatchTable { entries }
}

/// Permutation-and-sign invariant alignment.
///
/// All 18 signed axis pairings are matched once; each hypothesis is scored
/// by looking up its three pairings. Ties go to the earlier hypothesis in
/// enumeration order, which starts with the identity.
pub fn align_pasi(
    targets: &RotationSet,
    sources: &RotationSet,
    cfg: &AlignmentConfig,
) -> Result<GlobalAlignment> {
    let (a, b) = split(targets, sources, cfg)?;
    let table = match_table(&a, &b, cfg);
    let hypotheses = enumerate_signed_permutations(cfg.proper_only);
    let scores = hypotheses
        .iter()
        .map(|l| table.score(l))
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<(usize, f64)> = None;
    for (k, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((k, s));
            }
        }
    }
    let (k, score) = best.ok_or(AlignError::AllHypothesesDegenerate)?;
    let l_star = hypotheses[k];
    log::debug!("PASI selected {l_star} (hypothesis {k}, score {score})");

    let signed = signed_sources(&b);
    let pick = |i: usize| {
        let (j, s) = (l_star.pi()[i], l_star.signs()[i]);
        (
            table
                .get(i, j, s)
                .as_ref()
                .expect("selected pairing is valid")
                .clone(),
            &signed[j][(s < 0) as usize],
        )
    };
    let (px, py, pz) = (pick(0), pick(1), pick(2));
    let per_axis = [px.0, py.0, pz.0];
    let r_bar = fuse(&per_axis, [px.1, py.1, pz.1], cfg.fusion)?;
    Ok(GlobalAlignment {
        l_star,
        r_bar,
        converged: per_axis.iter().all(|m| m.converged),
        per_axis,
        score,
        hypothesis_scores: scores,
        hypotheses,
    })
}

/// Re-derives every PASI hypothesis score by permuting the source TBVs and
/// running the three matches directly, without the shared table.
pub fn recompute_hypothesis_scores(
    targets: &RotationSet,
    sources: &RotationSet,
    cfg: &AlignmentConfig,
) -> Result<Vec<Option<f64>>> {
    let (a, b) = split(targets, sources, cfg)?;
    enumerate_signed_permutations(cfg.proper_only)
        .iter()
        .map(|l| {
            let permuted = apply_to_triple(l, &b);
            let mut total = 0.0;
            for axis in Axis::ALL {
                match run_matcher(a.axis(axis), permuted.axis(axis), &cfg.matcher) {
                    Ok(m) => total += m.score,
                    Err(AlignError::DegenerateMean { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            Ok(Some(total))
        })
        .collect()
}

/// Fuses per-axis matches; `sources[i]` is the (signed, permuted) source
/// set that was matched against target axis `i`.
fn fuse(
    per_axis: &[MatchResult; 3],
    sources: [&S2PointSet; 3],
    fusion: Fusion,
) -> Result<Rotation> {
    match fusion {
        Fusion::MeanFrameProcrustes => {
            // Rows are the Euclidean means before and after matching; the
            // aligned frame is approximately R times the source frame.
            let mut m = Matrix3::zeros();
            for i in 0..3 {
                let aligned = per_axis[i].aligned_source.mean()?;
                let source = sources[i].mean()?;
                m += aligned * source.transpose();
            }
            project_to_so3(&m)
        }
        Fusion::ProjectedMean => mean_rotation(
            &per_axis.each_ref().map(|m| m.rotation),
            MeanMethod::ProjectedArithmetic,
        ),
        Fusion::Karcher => mean_rotation(
            &per_axis.each_ref().map(|m| m.rotation),
            MeanMethod::Karcher,
        ),
    }
}

/// Carries every source onto the target frame: `b -> L b r_bar^T`.
pub fn apply_alignment(sources: &RotationSet, ga: &GlobalAlignment) -> RotationSet {
    let l = ga.l_star.matrix();
    let rt = ga.r_bar.matrix().transpose();
    sources.map(|b| Rotation::from_matrix_unchecked(l * b.matrix() * rt))
}

/// Summed occupancy overlap between the target TBVs and the aligned source
/// TBVs, one polar x azimuth grid per axis.
///
/// Each grid is taken about the coordinate axis most orthogonal to that
/// target TBV mean, which keeps the cluster away from the grid poles.
pub fn alignment_objective(
    targets: &RotationSet,
    aligned_sources: &RotationSet,
    cfg: &MatcherConfig,
) -> Result<f64> {
    let a = tbvs_from_so3(targets)?;
    let b = tbvs_from_so3(aligned_sources)?;
    let mut total = 0.0;
    for axis in Axis::ALL {
        let mean = a.axis(axis).mean()?;
        let about = grid_axis(&mean);
        let ga = occupancy_grid(a.axis(axis), about, cfg.polar_bins, cfg.bins)?;
        let gb = occupancy_grid(b.axis(axis), about, cfg.polar_bins, cfg.bins)?;
        total += ga.overlap(&gb)?;
    }
    Ok(total)
}

fn grid_axis(mean: &Vector3<f64>) -> Axis {
    let mut best = Axis::X;
    for axis in Axis::ALL {
        if mean[axis.index()].abs() < mean[best.index()].abs() {
            best = axis;
        }
    }
    best
}

/// One-shot Procrustes correction of `r_bar` with `l_star` held fixed.
///
/// The aligned sources are matched against the targets once more, axis by
/// axis. Each aligned triad `C` is rebuilt from its re-matched TBVs as
/// `C_hat`, and `Delta = Pi_SO3(sum C_hat^T C)` is composed into `r_bar`.
/// The result is kept only if it does not lower [`alignment_objective`];
/// otherwise `ga` comes back unchanged.
pub fn procrustes_refine(
    targets: &RotationSet,
    sources: &RotationSet,
    ga: GlobalAlignment,
    cfg: &AlignmentConfig,
) -> Result<GlobalAlignment> {
    let aligned = apply_alignment(sources, &ga);
    let a = tbvs_from_so3(targets)?;
    let c = tbvs_from_so3(&aligned)?;

    // sum_l C_hat_l^T C_l = sum_i R_i * sum_l p_il p_il^T
    let mut m = Matrix3::zeros();
    for axis in Axis::ALL {
        let set = c.axis(axis);
        // A degenerate axis cannot contribute a correction.
        if direction_of(&set.mean()?, cfg.matcher.mean_threshold).is_err() {
            continue;
        }
        let r_i = match run_matcher(a.axis(axis), set, &cfg.matcher) {
            Ok(r) => r.rotation,
            Err(AlignError::DegenerateMean { .. }) => continue,
            Err(e) => return Err(e),
        };
        let scatter: Matrix3<f64> = set.iter().map(|p| p * p.transpose()).sum();
        m += r_i.matrix() * scatter;
    }
    let delta = project_to_so3(&m)?;

    let candidate_r = delta * ga.r_bar;
    let candidate_set = sources.map(|b| {
        Rotation::from_matrix_unchecked(
            ga.l_star.matrix() * b.matrix() * candidate_r.matrix().transpose(),
        )
    });
    let before = alignment_objective(targets, &aligned, &cfg.matcher)?;
    let after = alignment_objective(targets, &candidate_set, &cfg.matcher)?;
    if after < before {
        log::debug!("Procrustes refinement skipped: objective {before} -> {after}");
        return Ok(ga);
    }
    let per_axis = ga.per_axis.map(|mut m| {
        m.rotation = delta * m.rotation;
        m.aligned_source = apply_rotation(&m.aligned_source, &delta);
        m
    });
    Ok(GlobalAlignment {
        r_bar: candidate_r,
        per_axis,
        ..ga
    })
}
