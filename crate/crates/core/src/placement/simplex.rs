//! Dense-tableau primal simplex for bounded variables.
//!
//! Solves `max c.x  s.t.  A x = b,  l <= x <= u` (upper bounds may be
//! infinite) from a caller-supplied starting basis made of unit columns, so
//! no phase-one is needed. Nonbasic variables sit at a bound; a bound flip
//! replaces a pivot whenever the entering variable reaches its own opposite
//! bound first. Pricing is Dantzig's rule, falling back to Bland's rule after
//! a run of degenerate steps so the method cannot cycle.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sparse row-wise problem data.
#[derive(Clone, Debug)]
pub struct BoundedLp<S> {
    pub rows: Vec<Vec<(usize, S)>>,
    pub rhs: Vec<S>,
    pub objective: Vec<S>,
    pub lower: Vec<S>,
    pub upper: Vec<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Upper,
}

/// Starting point: `basis[r]` is the variable basic in row `r` (its column
/// must be the `r`-th unit vector); every other variable starts at `at[j]`.
#[derive(Clone, Debug)]
pub struct Start {
    pub basis: Vec<usize>,
    pub at: Vec<Bound>,
}

#[derive(Clone, Debug)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Consecutive degenerate steps before switching to Bland's rule.
    pub degenerate_limit: usize,
    pub optimality_tol: f64,
    pub feasibility_tol: f64,
    pub pivot_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            degenerate_limit: 50,
            optimality_tol: 1e-9,
            feasibility_tol: 1e-9,
            pivot_tol: 1e-11,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LpOutcome<S> {
    pub x: Vec<S>,
    pub objective: S,
    pub pivots: usize,
    pub bound_flips: usize,
}

struct Tableau<S> {
    m: usize,
    n: usize,
    t: Vec<S>,
    d: Vec<S>,
    x: Vec<S>,
    head: Vec<usize>,
    basic_row: Vec<Option<usize>>,
    at: Vec<Bound>,
}

pub fn solve<S: Scalar>(lp: &BoundedLp<S>, start: &Start, opts: &SimplexOptions) -> Result<LpOutcome<S>> {
    let mut tab = Tableau::new(lp, start, opts)?;
    tab.run(lp, opts)
}

impl<S: Scalar> Tableau<S> {
    fn new(lp: &BoundedLp<S>, start: &Start, opts: &SimplexOptions) -> Result<Self> {
        let m = lp.rows.len();
        let n = lp.objective.len();
        let lp_err = |m: String| Err(Error::Lp(m));
        if lp.rhs.len() != m || lp.lower.len() != n || lp.upper.len() != n || start.at.len() != n {
            return lp_err("inconsistent problem dimensions".into());
        }
        if start.basis.len() != m {
            return lp_err(format!("start basis has {} entries for {m} rows", start.basis.len()));
        }
        for j in 0..n {
            if lp.lower[j] > lp.upper[j] || !lp.lower[j].is_finite() {
                return lp_err(format!("variable {j} has bounds [{}, {}]", lp.lower[j], lp.upper[j]));
            }
        }
        let mut t = vec![S::zero(); m * n];
        for (r, row) in lp.rows.iter().enumerate() {
            for &(j, a) in row {
                if j >= n {
                    return lp_err(format!("row {r} references variable {j} of {n}"));
                }
                t[r * n + j] = t[r * n + j] + a;
            }
        }
        let mut basic_row = vec![None; n];
        for (r, &j) in start.basis.iter().enumerate() {
            if j >= n || basic_row[j].is_some() {
                return lp_err(format!("invalid start basis entry {j}"));
            }
            let unit = (0..m).all(|k| t[k * n + j] == if k == r { S::one() } else { S::zero() });
            if !unit {
                return lp_err(format!("start basis column {j} is not unit vector {r}"));
            }
            basic_row[j] = Some(r);
        }
        let mut x = vec![S::zero(); n];
        for j in 0..n {
            if basic_row[j].is_none() {
                x[j] = match start.at[j] {
                    Bound::Lower => lp.lower[j],
                    Bound::Upper if lp.upper[j].is_finite() => lp.upper[j],
                    Bound::Upper => return lp_err(format!("variable {j} has no finite upper bound")),
                };
            }
        }
        let feas = S::lit(opts.feasibility_tol);
        for (r, &j) in start.basis.iter().enumerate() {
            let nonbasic: S = (0..n)
                .filter(|&k| basic_row[k].is_none())
                .map(|k| t[r * n + k] * x[k])
                .sum();
            x[j] = lp.rhs[r] - nonbasic;
            let slack = feas * (S::one() + x[j].abs());
            if x[j] < lp.lower[j] - slack || x[j] > lp.upper[j] + slack {
                return lp_err(format!(
                    "start basis is infeasible: variable {j} = {} outside [{}, {}]",
                    x[j], lp.lower[j], lp.upper[j]
                ));
            }
        }
        let mut d = lp.objective.clone();
        for (r, &j) in start.basis.iter().enumerate() {
            let cb = lp.objective[j];
            if cb != S::zero() {
                for k in 0..n {
                    d[k] = d[k] - cb * t[r * n + k];
                }
            }
        }
        Ok(Self {
            m,
            n,
            t,
            d,
            x,
            head: start.basis.clone(),
            basic_row,
            at: start.at.clone(),
        })
    }

    fn run(&mut self, lp: &BoundedLp<S>, opts: &SimplexOptions) -> Result<LpOutcome<S>> {
        let opt_tol = S::lit(opts.optimality_tol);
        let feas = S::lit(opts.feasibility_tol);
        let piv_tol = S::lit(opts.pivot_tol);
        let (mut pivots, mut flips, mut degenerate) = (0usize, 0usize, 0usize);
        let mut column = vec![S::zero(); self.m];
        for _ in 0..opts.max_iterations {
            let bland = degenerate >= opts.degenerate_limit;
            let Some((q, dir)) = self.price(lp, opt_tol, bland) else {
                let objective = (0..self.n).map(|j| lp.objective[j] * self.x[j]).sum();
                return Ok(LpOutcome {
                    x: std::mem::take(&mut self.x),
                    objective,
                    pivots,
                    bound_flips: flips,
                });
            };
            for (r, c) in column.iter_mut().enumerate() {
                *c = self.t[r * self.n + q];
            }
            let col_max = column.iter().fold(S::zero(), |a, &v| a.max(v.abs()));
            let tiny = piv_tol * col_max.max(S::one());

            // Harris two-pass ratio test: find the largest step allowed with
            // bounds relaxed by `feas`, then take the most stable pivot whose
            // exact ratio does not exceed it.
            let limit = |r: usize, relax: S| -> Option<S> {
                let alpha = dir * column[r];
                let j = self.head[r];
                if alpha > tiny {
                    Some(((self.x[j] - lp.lower[j]) + relax).max(S::zero()) / alpha)
                } else if alpha < -tiny && lp.upper[j].is_finite() {
                    Some(((lp.upper[j] - self.x[j]) + relax).max(S::zero()) / -alpha)
                } else {
                    None
                }
            };
            let own_range = lp.upper[q] - lp.lower[q];
            let mut relaxed_max = own_range;
            for r in 0..self.m {
                let j = self.head[r];
                let relax = feas * (S::one() + lp.lower[j].abs().max(self.x[j].abs()));
                if let Some(ratio) = limit(r, relax) {
                    relaxed_max = relaxed_max.min(ratio);
                }
            }
            if !relaxed_max.is_finite() {
                return Err(Error::Lp(format!("unbounded along variable {q}")));
            }
            let mut leave: Option<(usize, S)> = None;
            for r in 0..self.m {
                if let Some(ratio) = limit(r, S::zero()) {
                    if ratio <= relaxed_max {
                        let better = match leave {
                            None => true,
                            Some((best, _)) if bland => self.head[r] < self.head[best],
                            Some((best, _)) => column[r].abs() > column[best].abs(),
                        };
                        if better {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
            let step = match leave {
                Some((_, ratio)) if ratio < own_range => ratio,
                _ => own_range,
            };
            let pivot_row = leave.filter(|&(_, ratio)| ratio < own_range).map(|(r, _)| r);

            // move along the edge
            self.x[q] = self.x[q] + dir * step;
            for r in 0..self.m {
                if column[r] != S::zero() {
                    let j = self.head[r];
                    self.x[j] = self.x[j] - dir * step * column[r];
                }
            }
            degenerate = if step > S::zero() { 0 } else { degenerate + 1 };

            match pivot_row {
                None => {
                    self.at[q] = if dir > S::zero() { Bound::Upper } else { Bound::Lower };
                    self.x[q] = match self.at[q] {
                        Bound::Upper => lp.upper[q],
                        Bound::Lower => lp.lower[q],
                    };
                    flips += 1;
                }
                Some(r) => {
                    let leaving = self.head[r];
                    let goes_down = dir * column[r] > S::zero();
                    self.at[leaving] = if goes_down { Bound::Lower } else { Bound::Upper };
                    self.x[leaving] = if goes_down { lp.lower[leaving] } else { lp.upper[leaving] };
                    self.pivot(r, q, &column);
                    self.basic_row[leaving] = None;
                    self.basic_row[q] = Some(r);
                    self.head[r] = q;
                    pivots += 1;
                }
            }
        }
        Err(Error::Lp(format!(
            "iteration limit of {} reached",
            opts.max_iterations
        )))
    }

    /// Entering variable and direction (`+1` increase, `-1` decrease).
    fn price(&self, lp: &BoundedLp<S>, tol: S, bland: bool) -> Option<(usize, S)> {
        let mut best: Option<(usize, S, S)> = None;
        for j in 0..self.n {
            if self.basic_row[j].is_some() || lp.lower[j] == lp.upper[j] {
                continue;
            }
            let dj = self.d[j];
            let dir = match self.at[j] {
                Bound::Lower if dj > tol => S::one(),
                Bound::Upper if dj < -tol => -S::one(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, score, _)| dj.abs() > score) {
                best = Some((j, dj.abs(), dir));
            }
        }
        best.map(|(j, _, dir)| (j, dir))
    }

    fn pivot(&mut self, r: usize, q: usize, column: &[S]) {
        let n = self.n;
        let piv = column[r];
        let row_r: Vec<S> = self.t[r * n..(r + 1) * n].iter().map(|&v| v / piv).collect();
        self.t[r * n..(r + 1) * n].copy_from_slice(&row_r);
        for (k, &factor) in column.iter().enumerate() {
            if k == r || factor == S::zero() {
                continue;
            }
            let row_k = &mut self.t[k * n..(k + 1) * n];
            for (a, &b) in row_k.iter_mut().zip(&row_r) {
                *a = *a - factor * b;
            }
            row_k[q] = S::zero();
        }
        let dq = self.d[q];
        if dq != S::zero() {
            for (a, &b) in self.d.iter_mut().zip(&row_r) {
                *a = *a - dq * b;
            }
        }
        self.d[q] = S::zero();
    }
}
