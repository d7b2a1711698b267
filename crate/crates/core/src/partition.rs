//! Regular grid partitions of a box domain.
//!
//! Cells are half-open boxes `[a, b)` per axis, except that the last cell on
//! each axis also owns the top face of the domain, so every point of the
//! closed domain belongs to exactly one cell. Cell indices run row-major with
//! the first axis varying fastest: cell `(ix, iy)` has index `iy * nx + ix`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Domain, Point};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default number of samples per cell.
pub const DEFAULT_SAMPLES_PER_CELL: usize = 100;

/// How initial conditions are placed inside a cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum SamplingScheme {
    /// Midpoints of an `L^(1/d)`-per-axis sublattice.
    #[default]
    UniformSubgrid,
    /// I.i.d. uniform points from a seeded generator.
    Random { seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPartition<S> {
    domain: Domain<S>,
    dims: Vec<usize>,
    widths: [S; 2],
    n: usize,
}

impl<S: Scalar> GridPartition<S> {
    pub fn new(domain: Domain<S>, dims: &[usize]) -> Result<Self> {
        if dims.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: dims.len(),
            });
        }
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(Error::ZeroDimension { axis });
        }
        let mut widths = [S::one(); 2];
        for (axis, &d) in dims.iter().enumerate() {
            widths[axis] = domain.side(axis) / S::of_usize(d);
        }
        Ok(Self {
            domain,
            dims: dims.to_vec(),
            widths,
            n: dims.iter().product(),
        })
    }

    pub fn domain(&self) -> &Domain<S> {
        &self.domain
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    /// Total number of cells `N`.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Lebesgue measure of a cell (uniform across the grid).
    pub fn cell_measure(&self, _i: usize) -> S {
        self.widths[..self.dim()]
            .iter()
            .fold(S::one(), |acc, &w| acc * w)
    }

    /// Per-axis grid coordinates of cell `i`.
    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        match self.dim() {
            1 => [i, 0],
            _ => [i % self.dims[0], i / self.dims[0]],
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        match self.dim() {
            1 => idx[0],
            _ => idx[1] * self.dims[0] + idx[0],
        }
    }

    /// Lower and upper corners of cell `i`.
    pub fn cell_bounds(&self, i: usize) -> (Point<S>, Point<S>) {
        let k = self.multi_index(i);
        let lo = self.domain.lo();
        let mut a = [S::zero(); 2];
        let mut b = [S::zero(); 2];
        for axis in 0..self.dim() {
            a[axis] = lo[axis] + S::of_usize(k[axis]) * self.widths[axis];
            b[axis] = lo[axis] + S::of_usize(k[axis] + 1) * self.widths[axis];
        }
        (a, b)
    }

    pub fn cell_center(&self, i: usize) -> Point<S> {
        let (a, b) = self.cell_bounds(i);
        let half = S::lit(0.5);
        [half * (a[0] + b[0]), half * (a[1] + b[1])]
    }

    /// Index of the cell containing `x`, or `None` outside the domain.
    pub fn locate(&self, x: &Point<S>) -> Option<usize> {
        if !self.domain.contains(x) {
            return None;
        }
        let lo = self.domain.lo();
        let mut k = [0usize; 2];
        for axis in 0..self.dim() {
            let t = ((x[axis] - lo[axis]) / self.widths[axis]).floor();
            let last = self.dims[axis] - 1;
            k[axis] = t.to_usize().unwrap_or(0).min(last);
        }
        Some(self.flat_index(k))
    }

    /// `samples` points inside cell `i`.
    pub fn cell_samples(
        &self,
        i: usize,
        samples: usize,
        scheme: SamplingScheme,
    ) -> Result<Vec<Point<S>>> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, n: self.n });
        }
        let per_axis = self.per_axis_samples(samples, scheme)?;
        let (a, b) = self.cell_bounds(i);
        let d = self.dim();
        match scheme {
            SamplingScheme::UniformSubgrid => {
                let m = per_axis.expect("checked above");
                let step: Vec<S> = (0..d).map(|ax| (b[ax] - a[ax]) / S::of_usize(m)).collect();
                let half = S::lit(0.5);
                let mid = |ax: usize, k: usize| a[ax] + (S::of_usize(k) + half) * step[ax];
                let out = if d == 1 {
                    (0..m).map(|k| [mid(0, k), S::zero()]).collect()
                } else {
                    let mut pts = Vec::with_capacity(samples);
                    for ky in 0..m {
                        for kx in 0..m {
                            pts.push([mid(0, kx), mid(1, ky)]);
                        }
                    }
                    pts
                };
                Ok(out)
            }
            SamplingScheme::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let mut pts = Vec::with_capacity(samples);
                while pts.len() < samples {
                    let mut p = [S::zero(); 2];
                    for ax in 0..d {
                        let u = S::lit(rng.gen::<f64>());
                        p[ax] = a[ax] + u * (b[ax] - a[ax]);
                    }
                    // rounding can push a draw onto the upper face of the cell
                    if self.locate(&p) == Some(i) {
                        pts.push(p);
                    }
                }
                Ok(pts)
            }
        }
    }

    /// Validates `samples` for `scheme`; returns the per-axis count for subgrids.
    pub fn per_axis_samples(&self, samples: usize, scheme: SamplingScheme) -> Result<Option<usize>> {
        if samples == 0 {
            return Err(Error::InvalidSampleCount {
                samples,
                reason: "at least one sample per cell is required".into(),
            });
        }
        match scheme {
            SamplingScheme::Random { .. } => Ok(None),
            SamplingScheme::UniformSubgrid => {
                let m = integer_root(samples, self.dim()).ok_or_else(|| {
                    Error::InvalidSampleCount {
                        samples,
                        reason: format!(
                            "uniform-subgrid sampling in {} dimensions needs a perfect power",
                            self.dim()
                        ),
                    }
                })?;
                Ok(Some(m))
            }
        }
    }

    /// Stable fingerprint of domain and dims, recorded in matrix metadata.
    pub fn fingerprint(&self) -> String {
        let desc = format!(
            "lo={:?};hi={:?};dims={:?}",
            self.domain.lo().iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
            self.domain.hi().iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
            self.dims
        );
        let digest = Sha256::digest(desc.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn integer_root(n: usize, d: usize) -> Option<usize> {
    match d {
        1 => Some(n),
        2 => {
            let r = (n as f64).sqrt().round() as usize;
            (r * r == n).then_some(r)
        }
        _ => None,
    }
}
