use serde::{Deserialize, Serialize};

use super::histogram::AzimuthHistogram;
use crate::error::{AlignError, Result};

/// Output of a circular cross-correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    /// Maximizing shift in `0..K`.
    pub s_star: usize,
    pub peak: f64,
    /// `C(s)` for every shift.
    pub full: Vec<f64>,
}

impl Correlation {
    pub fn signed_shift(&self) -> isize {
        signed_shift(self.s_star, self.full.len())
    }
}

/// Maps `s in 0..K` to the signed shift in `(-K/2, K/2]`.
pub fn signed_shift(s: usize, k: usize) -> isize {
    if s <= k / 2 {
        s as isize
    } else {
        s as isize - k as isize
    }
}

/// `C(s) = sum_l hA(l) * hB((l + s) mod K)`, evaluated directly.
///
/// A peak at `s*` means `hB` is `hA` shifted forward by `s*` bins. Ties
/// go to the smallest `|signed shift|`, then to the smaller index.
pub fn circular_correlate(ha: &AzimuthHistogram, hb: &AzimuthHistogram) -> Result<Correlation> {
    let k = ha.k();
    if hb.k() != k {
        return Err(AlignError::MismatchedBins {
            left: k,
            right: hb.k(),
        });
    }
    let (a, b) = (ha.bins(), hb.bins());
    let full: Vec<f64> = (0..k)
        .map(|s| {
            // Split the wrap so the inner loops stay branch-free.
            let head: f64 = a[..k - s].iter().zip(&b[s..]).map(|(x, y)| x * y).sum();
            let tail: f64 = a[k - s..].iter().zip(&b[..s]).map(|(x, y)| x * y).sum();
            head + tail
        })
        .collect();
    let s_star = argmax_shift(&full);
    Ok(Correlation {
        s_star,
        peak: full[s_star],
        full,
    })
}

fn argmax_shift(full: &[f64]) -> usize {
    let k = full.len();
    let mut best = 0;
    for s in 1..k {
        let (v, bv) = (full[s], full[best]);
        if v > bv || (v == bv && signed_shift(s, k).abs() < signed_shift(best, k).abs()) {
            best = s;
        }
    }
    best
}
