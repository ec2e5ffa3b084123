//! Signed permutations `L = P S`: axis relabels combined with sign flips.
//!
//! Row `i` of `L` has a single nonzero entry `s_i` in column `pi(i)`, so
//! left-multiplying a triad replaces its row `i` by `s_i` times row `pi(i)`.
//! In mapping strings this reads `A<i> -> <s_i>B<pi(i)>`.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{AlignError, Result};
use crate::rotation::{Axis, Rotation};
use crate::tbv::TbvTriple;

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[[i8; 3]; 3]", into = "[[i8; 3]; 3]")]
pub struct SignedPermutation {
    pi: [usize; 3],
    signs: [i8; 3],
}

impl SignedPermutation {
    pub const IDENTITY: SignedPermutation = SignedPermutation {
        pi: [0, 1, 2],
        signs: [1, 1, 1],
    };

    /// `pi[i]` is the source axis feeding target axis `i`; `signs[i]` is
    /// `+1` or `-1`.
    pub fn new(pi: [usize; 3], signs: [i8; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &j in &pi {
            if j > 2 || seen[j] {
                return Err(AlignError::InvalidMapping(format!(
                    "{pi:?} is not a permutation"
                )));
            }
            seen[j] = true;
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(AlignError::InvalidMapping(format!(
                "signs {signs:?} must be +-1"
            )));
        }
        Ok(Self { pi, signs })
    }

    /// Reads an integer matrix with exactly one `+-1` per row and column.
    pub fn from_matrix(l: [[i8; 3]; 3]) -> Result<Self> {
        let mut pi = [0; 3];
        let mut signs = [0; 3];
        for (i, row) in l.iter().enumerate() {
            let nonzero: Vec<usize> = (0..3).filter(|&j| row[j] != 0).collect();
            if nonzero.len() != 1 {
                return Err(AlignError::InvalidMapping(format!(
                    "row {i} of {l:?} needs exactly one nonzero entry"
                )));
            }
            pi[i] = nonzero[0];
            signs[i] = row[nonzero[0]];
        }
        Self::new(pi, signs)
    }

    /// Parses `"Ax->-By, Ay->+Bx, Az->+Bz"`. Whitespace is ignored, axis
    /// letters are case-insensitive, and `→` / `−` are accepted as well.
    pub fn from_mapping(spec: &str) -> Result<Self> {
        let compact: String = spec
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| if c == '−' { '-' } else { c })
            .collect::<String>()
            .replace('→', "->");
        let bad = |m: String| AlignError::InvalidMapping(format!("{spec:?}: {m}"));
        let mut pi: [Option<usize>; 3] = [None; 3];
        let mut signs = [1i8; 3];
        let parse_axis = |part: &str, prefix: char| -> Option<usize> {
            let mut chars = part.chars();
            if !chars.next()?.eq_ignore_ascii_case(&prefix) {
                return None;
            }
            let axis = match chars.next()?.to_ascii_lowercase() {
                'x' => 0,
                'y' => 1,
                'z' => 2,
                _ => return None,
            };
            chars.next().is_none().then_some(axis)
        };
        let terms: Vec<&str> = compact.split(',').collect();
        if terms.len() != 3 {
            return Err(bad(format!("expected 3 terms, found {}", terms.len())));
        }
        for term in terms {
            let (lhs, rhs) = term
                .split_once("->")
                .ok_or_else(|| bad(format!("term {term:?} lacks '->'")))?;
            let i = parse_axis(lhs, 'A').ok_or_else(|| bad(format!("bad target axis {lhs:?}")))?;
            let (sign, rest) = match rhs.chars().next() {
                Some('+') => (1, &rhs[1..]),
                Some('-') => (-1, &rhs[1..]),
                _ => return Err(bad(format!("{rhs:?} needs an explicit sign"))),
            };
            let j =
                parse_axis(rest, 'B').ok_or_else(|| bad(format!("bad source axis {rest:?}")))?;
            if pi[i].is_some() {
                return Err(bad(format!("A{} mapped twice", Axis::ALL[i])));
            }
            pi[i] = Some(j);
            signs[i] = sign;
        }
        let pi = [pi[0].unwrap(), pi[1].unwrap(), pi[2].unwrap()];
        Self::new(pi, signs).map_err(|_| bad("a source axis is used twice".into()))
    }

    /// Canonical mapping string, e.g. `"Ax->-By, Ay->+Bx, Az->+Bz"`.
    pub fn to_mapping(&self) -> String {
        (0..3)
            .map(|i| {
                let sign = if self.signs[i] > 0 { '+' } else { '-' };
                format!("A{}->{}B{}", Axis::ALL[i], sign, Axis::ALL[self.pi[i]])
            })
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn pi(&self) -> [usize; 3] {
        self.pi
    }

    pub fn signs(&self) -> [i8; 3] {
        self.signs
    }

    /// Source axis and sign paired with target axis `i`.
    pub fn pairing(&self, i: Axis) -> (Axis, i8) {
        (Axis::ALL[self.pi[i.index()]], self.signs[i.index()])
    }

    pub fn l(&self) -> [[i8; 3]; 3] {
        let mut l = [[0i8; 3]; 3];
        for i in 0..3 {
            l[i][self.pi[i]] = self.signs[i];
        }
        l
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let l = self.l();
        Matrix3::from_fn(|i, j| l[i][j] as f64)
    }

    /// Sign of the permutation part.
    pub fn permutation_parity(&self) -> i8 {
        let p = self.pi;
        let inversions = (0..3)
            .flat_map(|i| (i + 1..3).map(move |j| (i, j)))
            .filter(|&(i, j)| p[i] > p[j])
            .count();
        if inversions % 2 == 0 {
            1
        } else {
            -1
        }
    }

    pub fn det(&self) -> i8 {
        self.permutation_parity() * self.signs.iter().product::<i8>()
    }

    pub fn is_proper(&self) -> bool {
        self.det() == 1
    }

    /// `L^T`, which is also the inverse.
    pub fn transpose(&self) -> Self {
        let mut pi = [0; 3];
        let mut signs = [0; 3];
        for i in 0..3 {
            pi[self.pi[i]] = i;
            signs[self.pi[i]] = self.signs[i];
        }
        Self { pi, signs }
    }

    /// Matrix product `self * other`.
    pub fn compose(&self, other: &Self) -> Self {
        let mut pi = [0; 3];
        let mut signs = [0; 3];
        for i in 0..3 {
            pi[i] = other.pi[self.pi[i]];
            signs[i] = self.signs[i] * other.signs[self.pi[i]];
        }
        Self { pi, signs }
    }

    /// `L r` as a rotation; only meaningful for proper `L`.
    pub fn left_apply(&self, r: &Rotation) -> Rotation {
        Rotation::from_matrix_unchecked(self.matrix() * r.matrix())
    }
}

impl Default for SignedPermutation {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl fmt::Display for SignedPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_mapping())
    }
}

impl FromStr for SignedPermutation {
    type Err = AlignError;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_mapping(s)
    }
}

impl TryFrom<[[i8; 3]; 3]> for SignedPermutation {
    type Error = AlignError;

    fn try_from(l: [[i8; 3]; 3]) -> Result<Self> {
        Self::from_matrix(l)
    }
}

impl From<SignedPermutation> for [[i8; 3]; 3] {
    fn from(l: SignedPermutation) -> Self {
        l.l()
    }
}

/// All 48 signed permutations, or the 24 proper ones.
///
/// Order is lexicographic on `(pi, signs)` with permutations in
/// lexicographic order and `+` before `-`, so the identity comes first and
/// hypothesis indices are stable.
pub fn enumerate_signed_permutations(proper_only: bool) -> Vec<SignedPermutation> {
    let mut out = Vec::with_capacity(48);
    for pi in PERMUTATIONS {
        for mask in 0..8u8 {
            let sign = |bit: u8| if mask & (4 >> bit) != 0 { -1 } else { 1 };
            let l = SignedPermutation {
                pi,
                signs: [sign(0), sign(1), sign(2)],
            };
            if !proper_only || l.is_proper() {
                out.push(l);
            }
        }
    }
    out
}

/// Output axis `i` holds `s_i` times input axis `pi(i)`.
pub fn apply_to_triple(l: &SignedPermutation, t: &TbvTriple) -> TbvTriple {
    let pick = |i: usize| {
        let src = t.axis(Axis::ALL[l.pi[i]]);
        if l.signs[i] > 0 {
            src.clone()
        } else {
            src.negated()
        }
    };
    TbvTriple {
        x: pick(0),
        y: pick(1),
        z: pick(2),
    }
}
