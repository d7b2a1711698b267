//! Actuator and sensor placement over a total-transfer matrix.
//!
//! A selection `S` covers cell `j` when the transfer it sends to `j`
//! (actuators) or receives from `j` (sensors) reaches `epsilon`. Three
//! solvers maximize the covered count for a fixed budget: exhaustive search,
//! greedy maximal coverage, and a linear relaxation rounded to its largest
//! weights.

pub mod simplex;

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pfop::{RowWalker, TransitionMatrix};
use crate::scalar::Scalar;
use crate::transfer::{CellSet, TransferMatrix};
use simplex::{Bound, BoundedLp, SimplexOptions, Start};

pub const DEFAULT_EPSILON: f64 = 1e-10;
pub const DEFAULT_ALPHA: f64 = 0.9;
/// Largest number of subsets `solve_exact` will enumerate.
pub const EXACT_LIMIT: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Actuator,
    Sensor,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Exact,
    Greedy,
    #[default]
    LpRounded,
}

impl std::str::FromStr for Solver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "greedy" => Ok(Self::Greedy),
            "lp" | "lp-rounded" => Ok(Self::LpRounded),
            _ => Err(Error::InvalidParameter(format!(
                "unknown solver `{s}` (expected exact, greedy or lp-rounded)"
            ))),
        }
    }
}

/// Transfer from candidate `i` towards cell `j`, oriented by `mode`.
#[inline]
fn weight<S: Scalar>(t: &TransferMatrix<S>, mode: Mode, i: usize, j: usize) -> S {
    match mode {
        Mode::Actuator => t.get(i, j),
        Mode::Sensor => t.get(j, i),
    }
}

#[derive(Clone, Debug)]
pub struct PlacementProblem<'a, S> {
    matrix: &'a TransferMatrix<S>,
    count: usize,
    mode: Mode,
    admissible: Vec<usize>,
    epsilon: S,
}

impl<'a, S: Scalar> PlacementProblem<'a, S> {
    /// All cells admissible, default `epsilon`.
    pub fn new(matrix: &'a TransferMatrix<S>, count: usize, mode: Mode) -> Result<Self> {
        let admissible = (0..matrix.n()).collect();
        Self::with_options(matrix, count, mode, admissible, S::lit(DEFAULT_EPSILON))
    }

    pub fn with_options(
        matrix: &'a TransferMatrix<S>,
        count: usize,
        mode: Mode,
        admissible: Vec<usize>,
        epsilon: S,
    ) -> Result<Self> {
        let admissible = CellSet::new(admissible).as_slice().to_vec();
        let bad = |m: String| Err(Error::InvalidProblem(m));
        if count == 0 {
            return bad("count must be at least 1".into());
        }
        if admissible.is_empty() {
            return bad("admissible set is empty".into());
        }
        if let Some(&i) = admissible.iter().find(|&&i| i >= matrix.n()) {
            return Err(Error::IndexOutOfRange { index: i, n: matrix.n() });
        }
        if count > admissible.len() {
            return bad(format!(
                "count {count} exceeds the {} admissible cells",
                admissible.len()
            ));
        }
        if !(epsilon > S::zero()) || !epsilon.is_finite() {
            return bad(format!("epsilon must be positive, got {epsilon}"));
        }
        Ok(Self {
            matrix,
            count,
            mode,
            admissible,
            epsilon,
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn admissible(&self) -> &[usize] {
        &self.admissible
    }

    pub fn epsilon(&self) -> S {
        self.epsilon
    }

    fn add_candidate(&self, sums: &mut [S], i: usize) {
        for (j, s) in sums.iter_mut().enumerate() {
            *s = *s + weight(self.matrix, self.mode, i, j);
        }
    }

    fn solution(&self, solver: Solver, selected: Vec<usize>, relaxed_e: Vec<f64>) -> PlacementSolution {
        let values = coverage_values(self.matrix, &selected, self.mode);
        let covered: Vec<usize> = (0..self.n()).filter(|&j| values[j] >= self.epsilon).collect();
        PlacementSolution {
            solver,
            mode: self.mode,
            count: self.count,
            epsilon: self.epsilon.to_f64_lossy(),
            coverage_fraction: covered.len() as f64 / self.n() as f64,
            selected,
            relaxed_e,
            covered,
            coverage_values: values.iter().map(|v| v.to_f64_lossy()).collect(),
            lp: None,
            full_cover: None,
        }
    }

    fn indicator(&self, selected: &[usize]) -> Vec<f64> {
        let mut e = vec![0.0; self.n()];
        for &i in selected {
            e[i] = 1.0;
        }
        e
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSummary {
    /// Optimal `sum z_j` of the relaxation.
    pub objective: f64,
    pub pivots: usize,
    pub bound_flips: usize,
    pub variables: usize,
    pub constraints: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum FullCover {
    Achieved { count: usize, selected: Vec<usize> },
    /// No subset of up to `max_count` admissible cells covers everything.
    Infeasible { max_count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementSolution {
    pub solver: Solver,
    pub mode: Mode,
    pub count: usize,
    pub epsilon: f64,
    pub selected: Vec<usize>,
    /// Relaxed weights for the LP; the selection indicator otherwise.
    pub relaxed_e: Vec<f64>,
    pub covered: Vec<usize>,
    pub coverage_fraction: f64,
    /// Per-cell transfer from (actuator) or to (sensor) the selection.
    pub coverage_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lp: Option<LpSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_cover: Option<FullCover>,
}

impl PlacementSolution {
    pub fn covered_count(&self) -> usize {
        self.covered.len()
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        serde_json::from_reader(File::open(path)?).map_err(|e| Error::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// `sum_{i in set} T_ij` (actuator) or `T_ji` (sensor) for every `j`,
/// accumulated in ascending `i`.
pub fn coverage_values<S: Scalar>(t: &TransferMatrix<S>, set: &[usize], mode: Mode) -> Vec<S> {
    let mut order = set.to_vec();
    order.sort_unstable();
    order.dedup();
    let mut sums = vec![S::zero(); t.n()];
    for i in order {
        for (j, s) in sums.iter_mut().enumerate() {
            *s = *s + weight(t, mode, i, j);
        }
    }
    sums
}

/// Cells whose coverage value reaches `epsilon`.
pub fn coverage<S: Scalar>(t: &TransferMatrix<S>, set: &[usize], mode: Mode, epsilon: S) -> CellSet {
    coverage_values(t, set, mode)
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v >= epsilon)
        .map(|(j, _)| j)
        .collect()
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k as u128 {
        acc = acc.saturating_mul(n as u128 - i) / (i + 1);
    }
    acc
}

fn check_exact_size(na: usize, count: usize) -> Result<()> {
    let combinations = binomial(na, count);
    if combinations > EXACT_LIMIT {
        return Err(Error::InstanceTooLarge {
            combinations,
            limit: EXACT_LIMIT,
        });
    }
    Ok(())
}

/// Best subset of size `count` from lexicographic enumeration.
fn best_subset<S: Scalar>(prob: &PlacementProblem<'_, S>, count: usize) -> (Vec<usize>, usize) {
    struct Search<'p, 'a, S> {
        prob: &'p PlacementProblem<'a, S>,
        count: usize,
        stack: Vec<Vec<S>>,
        chosen: Vec<usize>,
        best: Option<(usize, Vec<usize>)>,
    }
    impl<S: Scalar> Search<'_, '_, S> {
        fn descend(&mut self, from: usize) {
            let depth = self.chosen.len();
            if depth == self.count {
                let eps = self.prob.epsilon;
                let covered = self.stack[depth].iter().filter(|&&v| v >= eps).count();
                if self.best.as_ref().is_none_or(|(b, _)| covered > *b) {
                    self.best = Some((covered, self.chosen.clone()));
                }
                return;
            }
            let adm = &self.prob.admissible;
            let remaining = self.count - depth;
            for k in from..=adm.len() - remaining {
                let i = adm[k];
                let mut next = self.stack[depth].clone();
                self.prob.add_candidate(&mut next, i);
                self.stack[depth + 1] = next;
                self.chosen.push(i);
                self.descend(k + 1);
                self.chosen.pop();
                if self.best.as_ref().is_some_and(|(b, _)| *b == self.prob.n()) {
                    return;
                }
            }
        }
    }
    let n = prob.n();
    let mut search = Search {
        prob,
        count,
        stack: vec![vec![S::zero(); n]; count + 1],
        chosen: Vec::with_capacity(count),
        best: None,
    };
    search.descend(0);
    let (covered, selected) = search.best.expect("at least one subset exists");
    (selected, covered)
}

/// Exhaustive search over all `count`-subsets of the admissible cells.
pub fn solve_exact<S: Scalar>(prob: &PlacementProblem<'_, S>) -> Result<PlacementSolution> {
    check_exact_size(prob.admissible.len(), prob.count)?;
    let (selected, _) = best_subset(prob, prob.count);
    let e = prob.indicator(&selected);
    Ok(prob.solution(Solver::Exact, selected, e))
}

/// Smallest subset size (up to `max_count`) covering every cell, found by
/// exhaustive search; sizes whose enumeration exceeds the limit are errors.
pub fn minimum_full_cover<S: Scalar>(prob: &PlacementProblem<'_, S>, max_count: usize) -> Result<FullCover> {
    let max_count = max_count.min(prob.admissible.len());
    for count in 1..=max_count {
        check_exact_size(prob.admissible.len(), count)?;
        let (selected, covered) = best_subset(prob, count);
        if covered == prob.n() {
            return Ok(FullCover::Achieved { count, selected });
        }
    }
    Ok(FullCover::Infeasible { max_count })
}

fn greedy_selection<S: Scalar>(prob: &PlacementProblem<'_, S>) -> Vec<usize> {
    let n = prob.n();
    let eps = prob.epsilon;
    let mut sums = vec![S::zero(); n];
    let mut taken = vec![false; n];
    let mut selected = Vec::with_capacity(prob.count);
    for _ in 0..prob.count {
        let mut best: Option<(usize, usize)> = None;
        for &i in &prob.admissible {
            if taken[i] {
                continue;
            }
            let gain = (0..n)
                .filter(|&j| sums[j] < eps && sums[j] + weight(prob.matrix, prob.mode, i, j) >= eps)
                .count();
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let (i, _) = best.expect("count never exceeds the admissible set");
        taken[i] = true;
        selected.push(i);
        prob.add_candidate(&mut sums, i);
    }
    selected.sort_unstable();
    selected
}

/// Greedy maximal coverage: repeatedly add the cell covering the most new cells.
pub fn solve_greedy<S: Scalar>(prob: &PlacementProblem<'_, S>) -> Result<PlacementSolution> {
    let selected = greedy_selection(prob);
    let e = prob.indicator(&selected);
    Ok(prob.solution(Solver::Greedy, selected, e))
}

/// Linear relaxation: maximize `sum z_j` over `e in [0,1]^N`, `z in [0,1]^N`
/// with `z_j <= [e T]_j / epsilon` and `sum e = count`, then keep the
/// `count` largest weights.
///
/// Off-admissible weights are removed, as are `z_j` for cells no admissible
/// cell reaches. The simplex starts from the greedy vertex, so the relaxed
/// optimum is reached in few pivots when greedy is already close.
pub fn solve_lp<S: Scalar>(prob: &PlacementProblem<'_, S>) -> Result<PlacementSolution> {
    solve_lp_with(prob, &SimplexOptions::default())
}

pub fn solve_lp_with<S: Scalar>(prob: &PlacementProblem<'_, S>, opts: &SimplexOptions) -> Result<PlacementSolution> {
    let n = prob.n();
    let adm = &prob.admissible;
    let na = adm.len();
    let scale = S::one() / prob.epsilon;
    let cells: Vec<usize> = (0..n)
        .filter(|&j| adm.iter().any(|&i| weight(prob.matrix, prob.mode, i, j) > S::zero()))
        .collect();
    let nz = cells.len();
    // variable layout: e (na) | z (nz) | s (nz) | artificial
    let (z0, s0, art) = (na, na + nz, na + 2 * nz);
    let nvar = art + 1;
    let mut rows = Vec::with_capacity(nz + 1);
    for (r, &j) in cells.iter().enumerate() {
        let mut row = Vec::with_capacity(na + 2);
        for (k, &i) in adm.iter().enumerate() {
            let w = weight(prob.matrix, prob.mode, i, j);
            if w > S::zero() {
                row.push((k, -scale * w));
            }
        }
        row.push((z0 + r, S::one()));
        row.push((s0 + r, S::one()));
        rows.push(row);
    }
    let mut sum_row: Vec<(usize, S)> = (0..na).map(|k| (k, S::one())).collect();
    sum_row.push((art, S::one()));
    rows.push(sum_row);

    let mut rhs = vec![S::zero(); nz];
    rhs.push(S::of_usize(prob.count));
    let mut objective = vec![S::zero(); nvar];
    let mut lower = vec![S::zero(); nvar];
    let mut upper = vec![S::one(); nvar];
    for r in 0..nz {
        objective[z0 + r] = S::one();
        upper[s0 + r] = S::infinity();
    }
    lower[art] = S::zero();
    upper[art] = S::zero();
    let lp = BoundedLp {
        rows,
        rhs,
        objective,
        lower,
        upper,
    };

    // warm start at the greedy vertex
    let greedy = greedy_selection(prob);
    let sums = coverage_values(prob.matrix, &greedy, prob.mode);
    let mut at = vec![Bound::Lower; nvar];
    for (k, &i) in adm.iter().enumerate() {
        if greedy.binary_search(&i).is_ok() {
            at[k] = Bound::Upper;
        }
    }
    for (r, &j) in cells.iter().enumerate() {
        if scale * sums[j] >= S::one() {
            at[z0 + r] = Bound::Upper;
        }
    }
    let start = Start {
        basis: (s0..s0 + nz).chain([art]).collect(),
        at,
    };
    let out = simplex::solve(&lp, &start, opts)?;

    let mut e = vec![0.0; n];
    let mut weights = Vec::with_capacity(na);
    for (k, &i) in adm.iter().enumerate() {
        let v = out.x[k].max(S::zero()).min(S::one());
        e[i] = v.to_f64_lossy();
        weights.push((i, v));
    }
    weights.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite weights").then(a.0.cmp(&b.0)));
    let mut selected: Vec<usize> = weights.iter().take(prob.count).map(|&(i, _)| i).collect();
    selected.sort_unstable();
    let mut sol = prob.solution(Solver::LpRounded, selected, e);
    sol.lp = Some(LpSummary {
        objective: out.objective.to_f64_lossy(),
        pivots: out.pivots,
        bound_flips: out.bound_flips,
        variables: nvar,
        constraints: nz + 1,
    });
    Ok(sol)
}

pub fn solve<S: Scalar>(prob: &PlacementProblem<'_, S>, solver: Solver) -> Result<PlacementSolution> {
    match solver {
        Solver::Exact => solve_exact(prob),
        Solver::Greedy => solve_greedy(prob),
        Solver::LpRounded => solve_lp(prob),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllabilityReport {
    pub actuators: Vec<usize>,
    pub alpha: f64,
    pub n_max: usize,
    pub threshold: f64,
    pub bar_mu: Vec<f64>,
    pub coarse_controllable: bool,
    /// Cells whose entry does not exceed the threshold.
    pub unreached: Vec<usize>,
}

/// `sum_{n=0}^{n_max} alpha^n sum_k e_k P^n`; the system is flagged coarse
/// controllable when every entry exceeds `threshold`.
pub fn controllability_vector<S: Scalar>(
    p: &TransitionMatrix<S>,
    actuators: &[usize],
    alpha: S,
    n_max: usize,
    threshold: S,
) -> Result<ControllabilityReport> {
    let n = p.n();
    if actuators.is_empty() {
        return Err(Error::InvalidParameter("actuator list is empty".into()));
    }
    if let Some(&i) = actuators.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    if !(alpha > S::zero() && alpha < S::one()) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    if !(threshold >= S::zero()) {
        return Err(Error::InvalidParameter(format!("threshold must be nonnegative, got {threshold}")));
    }
    let mut v = vec![S::zero(); n];
    for &k in actuators {
        v[k] = v[k] + S::one();
    }
    let mut walker = RowWalker::new(p);
    walker.load(&v);
    let mut bar = v;
    let mut weight = S::one();
    for _ in 0..n_max {
        walker.step();
        weight = weight * alpha;
        let cur = walker.current();
        for &j in walker.support() {
            bar[j] = bar[j] + weight * cur[j];
        }
    }
    let unreached: Vec<usize> = (0..n).filter(|&j| !(bar[j] > threshold)).collect();
    Ok(ControllabilityReport {
        actuators: actuators.to_vec(),
        alpha: alpha.to_f64_lossy(),
        n_max,
        threshold: threshold.to_f64_lossy(),
        bar_mu: bar.iter().map(|v| v.to_f64_lossy()).collect(),
        coarse_controllable: unreached.is_empty(),
        unreached,
    })
}

/// Cells reachable from `set` in `0..=n_max` steps along positive entries of
/// `P` (actuator), or cells that reach `set` (sensor).
pub fn reachable_cells<S: Scalar>(p: &TransitionMatrix<S>, set: &[usize], mode: Mode, n_max: usize) -> CellSet {
    let n = p.n();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, v) in p.triplets() {
        if v > S::zero() {
            match mode {
                Mode::Actuator => adj[i].push(j),
                Mode::Sensor => adj[j].push(i),
            }
        }
    }
    let mut depth = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for &i in set {
        if i < n && depth[i] == usize::MAX {
            depth[i] = 0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        if depth[i] == n_max {
            continue;
        }
        for &j in &adj[i] {
            if depth[j] == usize::MAX {
                depth[j] = depth[i] + 1;
                queue.push_back(j);
            }
        }
    }
    (0..n).filter(|&j| depth[j] != usize::MAX).collect()
}

/// Per-cell values in grid layout: a `# dims:` comment, then one row per
/// cell in index order with its grid coordinates and `log10` of the value
/// (empty when the value is zero).
pub fn write_coverage_heatmap(path: impl AsRef<Path>, dims: &[usize], values: &[f64]) -> Result<()> {
    let n: usize = dims.iter().product();
    if n != values.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: values.len(),
        });
    }
    let nx = dims.first().copied().unwrap_or(1);
    let mut w = BufWriter::new(File::create(path)?);
    let label: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    writeln!(w, "# dims: {}", label.join("x"))?;
    writeln!(w, "ix,iy,cell,coverage,log10_coverage")?;
    for (cell, &v) in values.iter().enumerate() {
        let (ix, iy) = (cell % nx, cell / nx);
        if v > 0.0 {
            writeln!(w, "{ix},{iy},{cell},{v:e},{:e}", v.log10())?;
        } else {
            writeln!(w, "{ix},{iy},{cell},{v:e},")?;
        }
    }
    w.flush()?;
    Ok(())
}
