//! Set entropies and information transfer between cell sets.
//!
//! For cell sets `A`, `B` and a measure `mu` on the cells, the `n`-step mass
//! `mu^n_AB` is the fraction of `mu`-mass of `A` found in `B` after `n`
//! applications of the transition matrix. The `n`-step transfer is
//! `-mu^n_AB ln mu^n_AB` (nats) and the total transfer sums it over
//! `n = 1..=n_max`. A source of zero measure transfers nothing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::GridPartition;
use crate::pfop::{RowWalker, TransitionMatrix};
use crate::scalar::{neg_x_ln_x, unit_sum_tolerance, Scalar};

/// Nonnegative per-cell weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureVector<S>(Vec<S>);

impl<S: Scalar> MeasureVector<S> {
    pub fn new(weights: Vec<S>) -> Result<Self> {
        let tol = unit_sum_tolerance::<S>(weights.len());
        crate::pfop::check_probability(&weights, tol)?;
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![S::one() / S::of_usize(n); n])
    }

    /// Normalized Lebesgue measure of the cells of a partition.
    pub fn lebesgue(part: &GridPartition<S>) -> Self {
        let total = part.domain().measure();
        Self((0..part.len()).map(|i| part.cell_measure(i) / total).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[S] {
        &self.0
    }

    /// `mu(A)`.
    pub fn of_set(&self, cells: &CellSet) -> S {
        cells.iter().map(|i| self.0[i]).sum()
    }

    /// `|| mu P - mu ||_1`; zero for an invariant measure.
    pub fn invariance_defect(&self, p: &TransitionMatrix<S>) -> Result<S> {
        let pushed = p.propagate_row(&self.0, 1)?;
        Ok(pushed
            .iter()
            .zip(&self.0)
            .map(|(a, b)| (*a - *b).abs())
            .sum())
    }
}

/// Sorted, duplicate-free set of cell indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellSet(Vec<usize>);

impl CellSet {
    pub fn new(mut cells: Vec<usize>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        Self(cells)
    }

    pub fn singleton(i: usize) -> Self {
        Self(vec![i])
    }

    pub fn all(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn check(&self, n: usize) -> Result<()> {
        match self.0.last() {
            Some(&i) if i >= n => Err(Error::IndexOutOfRange { index: i, n }),
            _ => Ok(()),
        }
    }
}

impl FromIterator<usize> for CellSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// `H_mu(A) = -mu(A) ln mu(A)`.
pub fn set_entropy<S: Scalar>(mu: &MeasureVector<S>, cells: &CellSet) -> S {
    neg_x_ln_x(mu.of_set(cells))
}

/// Discrete Shannon entropy `-sum rho_i ln rho_i` in nats.
pub fn density_entropy<S: Scalar>(rho: &[S]) -> Result<S> {
    if let Some((index, &value)) = rho.iter().enumerate().find(|(_, &x)| !(x >= S::zero())) {
        return Err(Error::NegativeEntry {
            index,
            value: value.to_f64_lossy(),
        });
    }
    Ok(rho.iter().map(|&x| neg_x_ln_x(x)).sum())
}

/// `mu^n_AB` for `n = 1..=n_max`.
pub fn step_masses<S: Scalar>(
    p: &TransitionMatrix<S>,
    mu: &MeasureVector<S>,
    source: &CellSet,
    target: &CellSet,
    n_max: usize,
) -> Result<Vec<S>> {
    check_inputs(p, mu, source, target)?;
    let mass = mu.of_set(source);
    if mass == S::zero() {
        return Ok(vec![S::zero(); n_max]);
    }
    let mut start = vec![S::zero(); p.n()];
    for i in source.iter() {
        start[i] = mu.weights()[i] / mass;
    }
    let mut walker = RowWalker::new(p);
    walker.load(&start);
    let mut out = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        walker.step();
        let v = walker.current();
        let m: S = target.iter().map(|j| v[j]).sum();
        out.push(m.min(S::one()));
    }
    Ok(out)
}

fn check_inputs<S: Scalar>(
    p: &TransitionMatrix<S>,
    mu: &MeasureVector<S>,
    source: &CellSet,
    target: &CellSet,
) -> Result<()> {
    if mu.len() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            found: mu.len(),
        });
    }
    source.check(p.n())?;
    target.check(p.n())
}

/// One-step transfer `-mu_AB ln mu_AB`.
pub fn one_step_transfer<S: Scalar>(
    p: &TransitionMatrix<S>,
    mu: &MeasureVector<S>,
    source: &CellSet,
    target: &CellSet,
) -> Result<S> {
    n_step_transfer(p, mu, source, target, 1)
}

/// `n`-step transfer `-mu^n_AB ln mu^n_AB`.
pub fn n_step_transfer<S: Scalar>(
    p: &TransitionMatrix<S>,
    mu: &MeasureVector<S>,
    source: &CellSet,
    target: &CellSet,
    n: usize,
) -> Result<S> {
    if n == 0 {
        return Err(Error::InvalidParameter("step count must be at least 1".into()));
    }
    let masses = step_masses(p, mu, source, target, n)?;
    Ok(neg_x_ln_x(masses[n - 1]))
}

/// Per-step and total transfer from one cell set to another.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport<S> {
    pub source: CellSet,
    pub target: CellSet,
    pub n_max: usize,
    /// `mu^n_AB`, index `k` holds step `k + 1`.
    pub mass_by_step: Vec<S>,
    /// Transfer per step in nats.
    pub transfer_by_step: Vec<S>,
    /// Sum of `transfer_by_step` in nats.
    pub total: S,
}

/// Units for exported transfer values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Nats,
    Bits,
}

impl LogBase {
    /// Converts a value in nats.
    pub fn convert<S: Scalar>(self, nats: S) -> S {
        match self {
            LogBase::Nats => nats,
            LogBase::Bits => nats / S::LN_2(),
        }
    }
}

pub fn total_transfer<S: Scalar>(
    p: &TransitionMatrix<S>,
    mu: &MeasureVector<S>,
    source: &CellSet,
    target: &CellSet,
    n_max: usize,
) -> Result<TransferReport<S>> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    let mass_by_step = step_masses(p, mu, source, target, n_max)?;
    let transfer_by_step: Vec<S> = mass_by_step.iter().map(|&m| neg_x_ln_x(m)).collect();
    let total = transfer_by_step.iter().copied().sum();
    Ok(TransferReport {
        source: source.clone(),
        target: target.clone(),
        n_max,
        mass_by_step,
        transfer_by_step,
        total,
    })
}

/// Default horizon `N - 1` (at least one step).
pub fn default_horizon(n: usize) -> usize {
    n.saturating_sub(1).max(1)
}

impl<S: Scalar> TransferReport<S> {
    /// Writes the per-step table `step,mass,transfer` with transfers in `base`.
    pub fn write_steps_csv(&self, path: impl AsRef<Path>, base: LogBase) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "step,mass,transfer")?;
        for (k, (m, t)) in self.mass_by_step.iter().zip(&self.transfer_by_step).enumerate() {
            writeln!(w, "{},{},{}", k + 1, m, base.convert(*t))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Dense `N x N` matrix of total transfers between single cells.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix<S> {
    n: usize,
    n_max: usize,
    data: Vec<S>,
}

impl<S: Scalar> TransferMatrix<S> {
    /// Wraps row-major data.
    pub fn from_rows(n: usize, n_max: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|&v| !(v >= S::zero()) || !v.is_finite()) {
            return Err(Error::NegativeEntry {
                index: k,
                value: data[k].to_f64_lossy(),
            });
        }
        Ok(Self { n, n_max, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.n_max
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut data = vec![S::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j];
            }
        }
        Self {
            n,
            n_max: self.n_max,
            data,
        }
    }

    pub fn max_value(&self) -> S {
        self.data.iter().copied().fold(S::zero(), S::max)
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|&&v| v > S::zero()).count()
    }

    /// Writes nonzero entries as `i,j,value` triplets (values in `base`)
    /// plus a JSON sidecar with the horizon, log base and measure source.
    pub fn save(
        &self,
        csv_path: impl AsRef<Path>,
        meta_path: impl AsRef<Path>,
        base: LogBase,
        measure: &str,
    ) -> Result<()> {
        let mut w = BufWriter::new(File::create(csv_path)?);
        writeln!(w, "i,j,value")?;
        for i in 0..self.n {
            for (j, &v) in self.row(i).iter().enumerate() {
                if v > S::zero() {
                    writeln!(w, "{i},{j},{}", base.convert(v))?;
                }
            }
        }
        w.flush()?;
        let meta = TransferMatrixMeta {
            n: self.n,
            n_max: self.n_max,
            log_base: base,
            measure: measure.to_string(),
        };
        let mut f = BufWriter::new(File::create(meta_path)?);
        serde_json::to_writer_pretty(&mut f, &meta)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }

    /// Reads a matrix written by [`TransferMatrix::save`], converting back to nats.
    pub fn load(csv_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<Self> {
        let csv_path = csv_path.as_ref();
        let meta_path = meta_path.as_ref();
        let fmt = |path: &Path, reason: String| Error::Format {
            path: path.display().to_string(),
            reason,
        };
        let meta: TransferMatrixMeta = serde_json::from_reader(File::open(meta_path)?)
            .map_err(|e| fmt(meta_path, e.to_string()))?;
        let n = meta.n;
        let mut data = vec![S::zero(); n * n];
        let mut rdr = csv::Reader::from_path(csv_path)?;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = || fmt(csv_path, format!("row {}: malformed triplet", line + 1));
            if rec.len() != 3 {
                return Err(bad());
            }
            let i: usize = rec[0].trim().parse().map_err(|_| bad())?;
            let j: usize = rec[1].trim().parse().map_err(|_| bad())?;
            let v: S = rec[2].trim().parse().map_err(|_| bad())?;
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange { index: i.max(j), n });
            }
            data[i * n + j] = match meta.log_base {
                LogBase::Nats => v,
                LogBase::Bits => v * S::LN_2(),
            };
        }
        Self::from_rows(n, meta.n_max, data)
    }
}

#[derive(Serialize, Deserialize)]
struct TransferMatrixMeta {
    n: usize,
    n_max: usize,
    log_base: LogBase,
    measure: String,
}

/// `[T]_ij` = total transfer from cell `i` to cell `j` over `1..=n_max` steps.
///
/// Each row propagates the indicator of its cell and accumulates
/// `-v ln v` per step. Once a row's vector stops changing, the cached
/// per-step contribution is added for the remaining steps.
pub fn transfer_matrix<S: Scalar>(
    p: &TransitionMatrix<S>,
    mu: &MeasureVector<S>,
    n_max: usize,
) -> Result<TransferMatrix<S>> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    if mu.len() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            found: mu.len(),
        });
    }
    let n = p.n();
    let mut data = vec![S::zero(); n * n];
    data.par_chunks_mut(n.max(1))
        .enumerate()
        .for_each_init(
            || RowWalker::new(p),
            |walker, (i, row)| {
                if mu.weights()[i] > S::zero() {
                    accumulate_row(walker, i, n_max, row);
                }
            },
        );
    TransferMatrix::from_rows(n, n_max, data)
}

fn accumulate_row<S: Scalar>(walker: &mut RowWalker<'_, S>, i: usize, n_max: usize, acc: &mut [S]) {
    walker.load_indicator(i);
    let mut cached: Vec<(usize, S)> = Vec::new();
    for step in 0..n_max {
        walker.step();
        if walker.is_stationary() {
            if cached.is_empty() {
                let v = walker.current();
                cached = walker
                    .support()
                    .iter()
                    .map(|&j| (j, neg_x_ln_x(v[j])))
                    .filter(|&(_, t)| t > S::zero())
                    .collect();
            }
            for _ in step..n_max {
                for &(j, t) in &cached {
                    acc[j] = acc[j] + t;
                }
            }
            return;
        }
        let v = walker.current();
        for &j in walker.support() {
            let t = neg_x_ln_x(v[j]);
            if t > S::zero() {
                acc[j] = acc[j] + t;
            }
        }
    }
}
