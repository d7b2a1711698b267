//! Axis-aligned boxes in one or two dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A point in the state space. One-dimensional systems use only the first
/// coordinate; the second is carried along as zero.
pub type Point<S> = [S; 2];

/// Axis-aligned box `[lo_0, hi_0] x [lo_1, hi_1]` (or an interval when `dim == 1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain<S> {
    lo: Point<S>,
    hi: Point<S>,
    dim: usize,
}

impl<S: Scalar> Domain<S> {
    pub fn interval(lo: S, hi: S) -> Result<Self> {
        Self::new(&[lo], &[hi])
    }

    pub fn rectangle(lo: Point<S>, hi: Point<S>) -> Result<Self> {
        Self::new(&lo, &hi)
    }

    pub fn unit_interval() -> Self {
        Self::interval(S::zero(), S::one()).expect("unit interval")
    }

    pub fn unit_square() -> Self {
        Self::rectangle([S::zero(); 2], [S::one(); 2]).expect("unit square")
    }

    pub fn new(lo: &[S], hi: &[S]) -> Result<Self> {
        let dim = lo.len();
        if !(1..=2).contains(&dim) || hi.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "domain needs 1 or 2 matching bounds, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        let mut d = Domain {
            lo: [S::zero(); 2],
            hi: [S::zero(); 2],
            dim,
        };
        for axis in 0..dim {
            if !(lo[axis].is_finite() && hi[axis].is_finite() && hi[axis] > lo[axis]) {
                return Err(Error::InvalidParameter(format!(
                    "axis {axis} needs finite bounds with positive length, got [{}, {}]",
                    lo[axis], hi[axis]
                )));
            }
            d.lo[axis] = lo[axis];
            d.hi[axis] = hi[axis];
        }
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> &[S] {
        &self.lo[..self.dim]
    }

    pub fn hi(&self) -> &[S] {
        &self.hi[..self.dim]
    }

    pub fn side(&self, axis: usize) -> S {
        self.hi[axis] - self.lo[axis]
    }

    /// Lebesgue measure (length or area).
    pub fn measure(&self) -> S {
        (0..self.dim).map(|a| self.side(a)).fold(S::one(), |acc, s| acc * s)
    }

    /// Closed-box membership; NaN coordinates are never contained.
    pub fn contains(&self, x: &Point<S>) -> bool {
        (0..self.dim).all(|a| x[a] >= self.lo[a] && x[a] <= self.hi[a])
    }

    /// Clamps each active coordinate into the box.
    pub fn clamp(&self, x: &Point<S>) -> Point<S> {
        let mut out = *x;
        for a in 0..self.dim {
            out[a] = out[a].max(self.lo[a]).min(self.hi[a]);
        }
        out
    }

    pub(crate) fn to_record(self) -> DomainRecord {
        DomainRecord {
            lo: self.lo().iter().map(|v| v.to_f64_lossy()).collect(),
            hi: self.hi().iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }

    pub fn from_record(rec: &DomainRecord) -> Result<Self> {
        let lo: Vec<S> = rec.lo.iter().map(|&v| S::lit(v)).collect();
        let hi: Vec<S> = rec.hi.iter().map(|&v| S::lit(v)).collect();
        Self::new(&lo, &hi)
    }
}

/// Serialized form used in metadata files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainRecord {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}
