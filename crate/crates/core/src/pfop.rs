//! Finite-dimensional Perron-Frobenius operator on a grid partition.
//!
//! `[P]_ij` is the fraction of sample points of cell `i` that land in cell
//! `j` after one application of the map. Entries are kept as integer counts
//! over a per-row denominator, so row sums are exact, and converted to the
//! scalar type once. Multi-step quantities are always obtained by repeated
//! sparse row-vector products; `P^n` is never formed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DomainRecord;
use crate::error::{Error, Result};
use crate::partition::{GridPartition, SamplingScheme};
use crate::scalar::{unit_sum_tolerance, Scalar};
use crate::systems::{SystemRecord, SystemSpec};

/// What to do with sample points whose image leaves the domain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutsidePolicy {
    /// Keep the escaped fraction as per-row outside mass.
    #[default]
    Absorb,
    /// Rescale each row over the in-domain images.
    Renormalize,
    /// Fail on the first escaping sample.
    Reject,
}

/// Provenance of a matrix.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub dims: Vec<usize>,
    pub domain: Option<DomainRecord>,
    pub samples_per_cell: Option<usize>,
    pub scheme: Option<SamplingScheme>,
    pub outside_policy: OutsidePolicy,
    pub partition_hash: Option<String>,
    pub system: Option<SystemRecord>,
}

/// Integer bookkeeping for sample-built matrices.
#[derive(Clone, Debug, PartialEq)]
struct Counts {
    samples: u32,
    entries: Vec<u32>,
    escaped: Vec<u32>,
}

/// Sparse row-stochastic (up to outside mass) `N x N` matrix in CSR layout.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix<S> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<S>,
    outside: Vec<S>,
    counts: Option<Counts>,
    meta: MatrixMeta,
}

/// Result of checking `sum_j P_ij + outside_i = 1` for every row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RowSumAudit {
    /// `Some(true)` when the integer counts balance exactly in every row.
    pub exact: Option<bool>,
    /// Largest floating-point deviation of a row total from one.
    pub max_deviation: f64,
    pub rows_with_outside_mass: usize,
    pub rows_with_escapes: usize,
    pub total_outside_mass: f64,
}

/// Density after pushing forward, with the absorbed mass that was rescaled away.
#[derive(Clone, Debug, PartialEq)]
pub struct PushForward<S> {
    pub density: Vec<S>,
    pub renormalized_by: S,
}

/// Builds `P` from `samples` initial conditions per cell.
pub fn build<S: Scalar>(
    sys: &SystemSpec<S>,
    part: &GridPartition<S>,
    samples: usize,
    scheme: SamplingScheme,
    policy: OutsidePolicy,
) -> Result<TransitionMatrix<S>> {
    part.per_axis_samples(samples, scheme)?;
    let samples_u32 = u32::try_from(samples).map_err(|_| Error::InvalidSampleCount {
        samples,
        reason: "too many samples per cell".into(),
    })?;

    let rows: Vec<(Vec<(usize, u32)>, u32)> = (0..part.len())
        .into_par_iter()
        .map(|i| -> Result<_> {
            let mut hits = Vec::with_capacity(samples);
            let mut escaped = 0u32;
            for x in part.cell_samples(i, samples, scheme)? {
                let y = sys.apply(&x)?;
                match part.locate(&y) {
                    Some(j) => hits.push(j),
                    None if policy == OutsidePolicy::Reject => {
                        return Err(Error::Escaped { row: i })
                    }
                    None => escaped += 1,
                }
            }
            if escaped == samples_u32 && policy == OutsidePolicy::Renormalize {
                return Err(Error::RowFullyEscaped { row: i });
            }
            hits.sort_unstable();
            let mut entries: Vec<(usize, u32)> = Vec::new();
            for j in hits {
                match entries.last_mut() {
                    Some((col, c)) if *col == j => *c += 1,
                    _ => entries.push((j, 1)),
                }
            }
            Ok((entries, escaped))
        })
        .collect::<Result<_>>()?;

    let n = part.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let nnz: usize = rows.iter().map(|(e, _)| e.len()).sum();
    let mut cols = Vec::with_capacity(nnz);
    let mut vals = Vec::with_capacity(nnz);
    let mut entries = Vec::with_capacity(nnz);
    let mut outside = Vec::with_capacity(n);
    let mut escaped_counts = Vec::with_capacity(n);
    for (row, escaped) in &rows {
        let den = denominator(samples_u32, *escaped, policy);
        for &(j, c) in row {
            cols.push(j);
            entries.push(c);
            vals.push(S::of_usize(c as usize) / S::of_usize(den as usize));
        }
        row_ptr.push(cols.len());
        outside.push(match policy {
            OutsidePolicy::Absorb => {
                S::of_usize(*escaped as usize) / S::of_usize(samples)
            }
            _ => S::zero(),
        });
        escaped_counts.push(*escaped);
    }
    let domain = *part.domain();
    Ok(TransitionMatrix {
        n,
        row_ptr,
        cols,
        vals,
        outside,
        counts: Some(Counts {
            samples: samples_u32,
            entries,
            escaped: escaped_counts,
        }),
        meta: MatrixMeta {
            dims: part.dims().to_vec(),
            domain: Some(domain.to_record()),
            samples_per_cell: Some(samples),
            scheme: Some(scheme),
            outside_policy: policy,
            partition_hash: Some(part.fingerprint()),
            system: Some(sys.record()),
        },
    })
}

fn denominator(samples: u32, escaped: u32, policy: OutsidePolicy) -> u32 {
    match policy {
        OutsidePolicy::Renormalize => samples - escaped,
        _ => samples,
    }
}

impl<S: Scalar> TransitionMatrix<S> {
    /// Builds a matrix from `(i, j, value)` triplets; duplicates are summed.
    ///
    /// Every row total plus its outside mass must be one (up to rounding).
    pub fn from_triplets(
        n: usize,
        triplets: &[(usize, usize, S)],
        outside_mass: Option<Vec<S>>,
    ) -> Result<Self> {
        let outside = outside_mass.unwrap_or_else(|| vec![S::zero(); n]);
        if outside.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: outside.len(),
            });
        }
        let mut sorted: Vec<(usize, usize, S)> = triplets.to_vec();
        for &(i, j, v) in &sorted {
            let idx = i.max(j);
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, n });
            }
            if !(v >= S::zero() && v <= S::one()) {
                return Err(Error::InvalidParameter(format!(
                    "entry ({i}, {j}) = {v} is not a probability"
                )));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(sorted.len());
        let mut vals: Vec<S> = Vec::with_capacity(sorted.len());
        let mut rows_of = Vec::with_capacity(sorted.len());
        for (i, j, v) in sorted {
            if v == S::zero() {
                continue;
            }
            if rows_of.last() == Some(&i) && cols.last() == Some(&j) {
                *vals.last_mut().unwrap() = *vals.last().unwrap() + v;
                continue;
            }
            rows_of.push(i);
            cols.push(j);
            vals.push(v);
        }
        for &i in &rows_of {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let m = TransitionMatrix {
            n,
            row_ptr,
            cols,
            vals,
            outside,
            counts: None,
            meta: MatrixMeta {
                dims: vec![n],
                ..MatrixMeta::default()
            },
        };
        let tol = unit_sum_tolerance::<S>(n) * S::lit(1e3);
        for i in 0..n {
            let total = m.row_sum(i) + m.outside[i];
            if (total - S::one()).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "row {i} sums to {total} including outside mass"
                )));
            }
        }
        Ok(m)
    }

    /// Builds a matrix from dense rows.
    pub fn from_dense(rows: &[Vec<S>]) -> Result<Self> {
        let n = rows.len();
        let mut trip = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            trip.extend(
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != S::zero())
                    .map(|(j, &v)| (i, j, v)),
            );
        }
        Self::from_triplets(n, &trip, None)
    }

    pub fn with_meta(mut self, meta: MatrixMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn meta(&self) -> &MatrixMeta {
        &self.meta
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[S]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(S::zero(), |k| vals[k])
    }

    pub fn row_sum(&self, i: usize) -> S {
        self.row(i).1.iter().copied().sum()
    }

    pub fn outside_mass(&self) -> &[S] {
        &self.outside
    }

    /// Number of escaped samples per row, for matrices built from samples.
    pub fn escaped_samples(&self) -> Option<&[u32]> {
        self.counts.as_ref().map(|c| c.escaped.as_slice())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    /// Sums of each column.
    pub fn column_sums(&self) -> Vec<S> {
        let mut out = vec![S::zero(); self.n];
        for (_, j, v) in self.triplets() {
            out[j] = out[j] + v;
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<S>> {
        let mut d = vec![vec![S::zero(); self.n]; self.n];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    pub fn audit(&self) -> RowSumAudit {
        let mut max_dev = 0.0_f64;
        let mut total_outside = 0.0;
        for i in 0..self.n {
            let t = (self.row_sum(i) + self.outside[i]).to_f64_lossy();
            max_dev = max_dev.max((t - 1.0).abs());
            total_outside += self.outside[i].to_f64_lossy();
        }
        let exact = self.counts.as_ref().map(|c| {
            (0..self.n).all(|i| {
                let r = self.row_ptr[i]..self.row_ptr[i + 1];
                let hits: u64 = c.entries[r].iter().map(|&k| k as u64).sum();
                let esc = c.escaped[i] as u64;
                match self.meta.outside_policy {
                    OutsidePolicy::Renormalize => hits == c.samples as u64 - esc,
                    _ => hits + esc == c.samples as u64,
                }
            })
        });
        RowSumAudit {
            exact,
            max_deviation: max_dev,
            rows_with_outside_mass: self.outside.iter().filter(|&&m| m > S::zero()).count(),
            rows_with_escapes: self
                .counts
                .as_ref()
                .map_or(0, |c| c.escaped.iter().filter(|&&e| e > 0).count()),
            total_outside_mass: total_outside,
        }
    }

    /// `v P^n` by `n` sparse row-vector products.
    pub fn propagate_row(&self, v: &[S], n: usize) -> Result<Vec<S>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: v.len(),
            });
        }
        let mut walker = RowWalker::new(self);
        walker.load(v);
        for _ in 0..n {
            walker.step();
        }
        Ok(walker.current().to_vec())
    }

    /// Pushes a probability vector forward `n` steps. Mass absorbed outside
    /// the domain is reported and the result rescaled to sum to one.
    pub fn push_density(&self, rho: &[S], n: usize) -> Result<PushForward<S>> {
        if rho.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: rho.len(),
            });
        }
        check_probability(rho, S::lit(1e-9))?;
        let mut density = self.propagate_row(rho, n)?;
        let absorbs = self.outside.iter().any(|&m| m > S::zero());
        let mut renormalized_by = S::zero();
        if absorbs {
            let total: S = density.iter().copied().sum();
            renormalized_by = S::one() - total;
            if total > S::zero() {
                density.iter_mut().for_each(|x| *x = *x / total);
            }
        }
        Ok(PushForward {
            density,
            renormalized_by,
        })
    }

    /// Image of a cell set when every row in it is a unit entry (a
    /// permutation-like map on those cells); `None` otherwise.
    pub fn deterministic_image(&self, cells: &[usize]) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(cells.len());
        for &i in cells {
            let (c, v) = self.row(i);
            if c.len() != 1 || v[0] != S::one() {
                return None;
            }
            out.push(c[0]);
        }
        out.sort_unstable();
        out.dedup();
        Some(out)
    }

    /// Writes `i,j,value` triplets and a JSON sidecar.
    pub fn save(&self, csv_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(csv_path)?);
        writeln!(w, "i,j,value")?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i},{j},{v}")?;
        }
        w.flush()?;
        let sidecar = MatrixFileMeta {
            n: self.n,
            dims: self.meta.dims.clone(),
            domain: self.meta.domain.clone(),
            samples_per_cell: self.meta.samples_per_cell,
            scheme: self.meta.scheme.map(|s| match s {
                SamplingScheme::UniformSubgrid => "uniform-subgrid".to_string(),
                SamplingScheme::Random { .. } => "random".to_string(),
            }),
            seed: match self.meta.scheme {
                Some(SamplingScheme::Random { seed }) => Some(seed),
                _ => None,
            },
            outside_policy: self.meta.outside_policy,
            partition_hash: self.meta.partition_hash.clone(),
            system: self.meta.system.clone(),
            outside_mass: self.outside.iter().map(|m| m.to_f64_lossy()).collect(),
            escaped_samples: self.counts.as_ref().map(|c| c.escaped.clone()),
        };
        let mut f = BufWriter::new(File::create(meta_path)?);
        serde_json::to_writer_pretty(&mut f, &sidecar)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }

    /// Reads a matrix written by [`TransitionMatrix::save`].
    pub fn load(csv_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<Self> {
        let csv_path = csv_path.as_ref();
        let meta_path = meta_path.as_ref();
        let fmt = |path: &Path, reason: String| Error::Format {
            path: path.display().to_string(),
            reason,
        };
        let sidecar: MatrixFileMeta = serde_json::from_reader(File::open(meta_path)?)
            .map_err(|e| fmt(meta_path, e.to_string()))?;
        let n = sidecar.n;
        if sidecar.outside_mass.len() != n {
            return Err(fmt(meta_path, "outside_mass length differs from n".into()));
        }
        let mut rdr = csv::Reader::from_path(csv_path)?;
        let mut trip = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse_err = |what: &str| fmt(csv_path, format!("row {}: bad {what}", line + 1));
            if rec.len() != 3 {
                return Err(parse_err("field count"));
            }
            let i: usize = rec[0].trim().parse().map_err(|_| parse_err("row index"))?;
            let j: usize = rec[1].trim().parse().map_err(|_| parse_err("column index"))?;
            let v: S = rec[2].trim().parse().map_err(|_| parse_err("value"))?;
            trip.push((i, j, v));
        }
        let outside = sidecar.outside_mass.iter().map(|&m| S::lit(m)).collect();
        let mut m = Self::from_triplets(n, &trip, Some(outside))?;
        let scheme = match (sidecar.scheme.as_deref(), sidecar.seed) {
            (None, _) => None,
            (Some("uniform-subgrid"), _) => Some(SamplingScheme::UniformSubgrid),
            (Some("random"), Some(seed)) => Some(SamplingScheme::Random { seed }),
            (Some(other), _) => {
                return Err(fmt(meta_path, format!("unknown or incomplete scheme `{other}`")))
            }
        };
        m.meta = MatrixMeta {
            dims: sidecar.dims,
            domain: sidecar.domain,
            samples_per_cell: sidecar.samples_per_cell,
            scheme,
            outside_policy: sidecar.outside_policy,
            partition_hash: sidecar.partition_hash,
            system: sidecar.system,
        };
        m.counts = m.recover_counts(sidecar.escaped_samples);
        Ok(m)
    }

    /// Reconstructs the integer counts of a loaded sample-built matrix, if
    /// every stored value is exactly `count / denominator`.
    fn recover_counts(&self, escaped: Option<Vec<u32>>) -> Option<Counts> {
        let samples = u32::try_from(self.meta.samples_per_cell?).ok()?;
        let escaped = escaped?;
        if escaped.len() != self.n {
            return None;
        }
        let mut entries = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            let den = denominator(samples, escaped[i], self.meta.outside_policy);
            for &v in self.row(i).1 {
                let c = (v * S::of_usize(den as usize)).round().to_u32()?;
                if S::of_usize(c as usize) / S::of_usize(den as usize) != v {
                    return None;
                }
                entries.push(c);
            }
        }
        Some(Counts {
            samples,
            entries,
            escaped,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixFileMeta {
    n: usize,
    dims: Vec<usize>,
    domain: Option<DomainRecord>,
    samples_per_cell: Option<usize>,
    scheme: Option<String>,
    seed: Option<u64>,
    outside_policy: OutsidePolicy,
    partition_hash: Option<String>,
    system: Option<SystemRecord>,
    outside_mass: Vec<f64>,
    escaped_samples: Option<Vec<u32>>,
}

pub(crate) fn check_probability<S: Scalar>(v: &[S], tol: S) -> Result<()> {
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, &x)| !(x >= S::zero())) {
        return Err(Error::NegativeEntry {
            index,
            value: value.to_f64_lossy(),
        });
    }
    let sum: S = v.iter().copied().sum();
    if (sum - S::one()).abs() > tol {
        return Err(Error::NotNormalized {
            sum: sum.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Repeated `v <- v P` on a dense buffer that only touches the support of `v`.
pub struct RowWalker<'a, S> {
    p: &'a TransitionMatrix<S>,
    cur: Vec<S>,
    next: Vec<S>,
    support: Vec<usize>,
    next_support: Vec<usize>,
    marked: Vec<bool>,
    stationary: bool,
}

impl<'a, S: Scalar> RowWalker<'a, S> {
    pub fn new(p: &'a TransitionMatrix<S>) -> Self {
        let n = p.n();
        Self {
            p,
            cur: vec![S::zero(); n],
            next: vec![S::zero(); n],
            support: Vec::new(),
            next_support: Vec::new(),
            marked: vec![false; n],
            stationary: false,
        }
    }

    pub fn load(&mut self, v: &[S]) {
        self.clear();
        for (i, &x) in v.iter().enumerate() {
            if x != S::zero() {
                self.cur[i] = x;
                self.support.push(i);
            }
        }
    }

    pub fn load_indicator(&mut self, i: usize) {
        self.clear();
        self.cur[i] = S::one();
        self.support.push(i);
    }

    fn clear(&mut self) {
        for &i in &self.support {
            self.cur[i] = S::zero();
        }
        self.support.clear();
        self.stationary = false;
    }

    /// Current vector (dense).
    pub fn current(&self) -> &[S] {
        &self.cur
    }

    /// Indices that may be nonzero, in first-touched order.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// True once a step left the vector bit-for-bit unchanged; every later
    /// step then reproduces the same vector.
    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    pub fn step(&mut self) {
        if self.stationary {
            return;
        }
        for &i in &self.support {
            let x = self.cur[i];
            if x == S::zero() {
                continue;
            }
            let (cols, vals) = self.p.row(i);
            for (&j, &pij) in cols.iter().zip(vals) {
                if !self.marked[j] {
                    self.marked[j] = true;
                    self.next_support.push(j);
                }
                self.next[j] = self.next[j] + x * pij;
            }
        }
        let mut same = self.next_support.len() == self.support.len();
        for &j in &self.next_support {
            self.marked[j] = false;
            same = same && self.next[j] == self.cur[j];
        }
        if same {
            // supports have equal size and every new entry matches the old
            // value, so the old support is contained in the new one
            same = self.support.iter().all(|&i| self.next[i] == self.cur[i]);
        }
        for &i in &self.support {
            self.cur[i] = S::zero();
        }
        std::mem::swap(&mut self.cur, &mut self.next);
        std::mem::swap(&mut self.support, &mut self.next_support);
        self.next_support.clear();
        self.stationary = same;
    }
}
