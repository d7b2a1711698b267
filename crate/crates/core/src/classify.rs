//! Ergodicity and mixing diagnostics for the discretized chain.
//!
//! Ergodicity is decided on mass positivity: the chain is ergodic at the
//! given resolution iff the directed graph with an edge `i -> j` whenever
//! `[P]_ij` exceeds a threshold is strongly connected. Mixing tracks
//! `d^n = |mu^n_AB - mu(B)|` for sampled pairs of cell sets and inspects the
//! tail of the horizon.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pfop::TransitionMatrix;
use crate::scalar::{neg_x_ln_x, Scalar};
use crate::transfer::{set_entropy, step_masses, CellSet, MeasureVector};

pub const DEFAULT_MASS_THRESHOLD: f64 = 1e-12;
pub const DEFAULT_TAIL_WINDOW: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Yes => "yes",
            Verdict::No => "no",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// An ordered pair of cells with no path between them, and the closed
/// communicating class the source is trapped in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErgodicityWitness {
    pub source: usize,
    pub unreachable: usize,
    pub invariant_component: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityResult {
    pub verdict: Verdict,
    pub witness: Option<ErgodicityWitness>,
    pub components: usize,
    pub mass_threshold: f64,
}

/// Strong-connectivity test on the thresholded transition graph.
pub fn ergodicity_test<S: Scalar>(p: &TransitionMatrix<S>, mass_threshold: S) -> ErgodicityResult {
    let n = p.n();
    let sccs = components(p, mass_threshold);
    let threshold = mass_threshold.to_f64_lossy();
    if sccs.len() <= 1 {
        return ErgodicityResult {
            verdict: Verdict::Yes,
            witness: None,
            components: sccs.len(),
            mass_threshold: threshold,
        };
    }
    let mut comp_of = vec![0usize; n];
    for (c, members) in sccs.iter().enumerate() {
        for &i in members {
            comp_of[i] = c;
        }
    }
    // a closed class has no edge leaving it; pick the one holding the lowest cell
    let closed = |c: usize| {
        sccs[c].iter().all(|&i| {
            let (cols, vals) = p.row(i);
            cols.iter()
                .zip(vals)
                .all(|(&j, &v)| v <= mass_threshold || comp_of[j] == c)
        })
    };
    let mut by_lowest: Vec<usize> = (0..sccs.len()).collect();
    by_lowest.sort_by_key(|&c| sccs[c][0]);
    let sink = by_lowest
        .into_iter()
        .find(|&c| closed(c))
        .expect("a finite condensation always has a sink");
    let source = sccs[sink][0];
    let unreachable = (0..n)
        .find(|&j| comp_of[j] != sink)
        .expect("more than one component");
    ErgodicityResult {
        verdict: Verdict::No,
        witness: Some(ErgodicityWitness {
            source,
            unreachable,
            invariant_component: sccs[sink].clone(),
        }),
        components: sccs.len(),
        mass_threshold: threshold,
    }
}

/// Strongly connected components, each sorted ascending.
pub(crate) fn components<S: Scalar>(p: &TransitionMatrix<S>, threshold: S) -> Vec<Vec<usize>> {
    let g = threshold_graph(p, threshold);
    let mut sccs: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|ix| ix.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    sccs.sort();
    sccs
}

pub(crate) fn threshold_graph<S: Scalar>(p: &TransitionMatrix<S>, threshold: S) -> DiGraph<(), ()> {
    let n = p.n();
    let mut g = DiGraph::<(), ()>::with_capacity(n, p.nnz());
    for _ in 0..n {
        g.add_node(());
    }
    for (i, j, v) in p.triplets() {
        if v > threshold {
            g.add_edge((i as u32).into(), (j as u32).into(), ());
        }
    }
    g
}

/// Which source/target pairs the mixing test examines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "plan")]
pub enum PairPlan {
    /// Random singleton pairs plus random pairs of 4-cell unions.
    Sampled {
        singletons: usize,
        unions: usize,
        seed: u64,
    },
    /// Every ordered pair of cells (only for small grids).
    AllPairs,
    Explicit {
        pairs: Vec<(CellSet, CellSet)>,
    },
}

impl Default for PairPlan {
    fn default() -> Self {
        PairPlan::Sampled {
            singletons: 50,
            unions: 10,
            seed: 0,
        }
    }
}

/// Largest grid for which [`PairPlan::AllPairs`] is accepted.
pub const ALL_PAIRS_LIMIT: usize = 256;

impl PairPlan {
    pub fn pairs(&self, n: usize) -> Result<Vec<(CellSet, CellSet)>> {
        match self {
            PairPlan::AllPairs => {
                if n > ALL_PAIRS_LIMIT {
                    return Err(Error::InvalidParameter(format!(
                        "all-pairs mixing test is limited to {ALL_PAIRS_LIMIT} cells, got {n}"
                    )));
                }
                Ok((0..n)
                    .flat_map(|i| (0..n).map(move |j| (CellSet::singleton(i), CellSet::singleton(j))))
                    .collect())
            }
            PairPlan::Explicit { pairs } => {
                for (a, b) in pairs {
                    a.check(n)?;
                    b.check(n)?;
                }
                Ok(pairs.clone())
            }
            PairPlan::Sampled {
                singletons,
                unions,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut out = Vec::with_capacity(singletons + unions);
                for _ in 0..*singletons {
                    let a = rng.gen_range(0..n);
                    let b = rng.gen_range(0..n);
                    out.push((CellSet::singleton(a), CellSet::singleton(b)));
                }
                let k = 4.min(n);
                let cells: Vec<usize> = (0..n).collect();
                for _ in 0..*unions {
                    let a: CellSet = cells.choose_multiple(&mut rng, k).copied().collect();
                    let b: CellSet = cells.choose_multiple(&mut rng, k).copied().collect();
                    out.push((a, b));
                }
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingOptions {
    pub n_max: usize,
    pub tol: f64,
    pub tail_window: usize,
    pub pairs: PairPlan,
}

impl MixingOptions {
    pub fn new(n_max: usize, tol: f64) -> Self {
        Self {
            n_max,
            tol,
            tail_window: DEFAULT_TAIL_WINDOW,
            pairs: PairPlan::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStatistics {
    pub source: CellSet,
    pub target: CellSet,
    /// `mu(B)`.
    pub target_measure: f64,
    /// Steps covered by the tail columns below.
    pub tail_steps: Vec<usize>,
    /// `mu^n_AB` over the tail.
    pub tail_mass: Vec<f64>,
    /// `|mu^n_AB - mu(B)|` over the tail.
    pub tail_defect: Vec<f64>,
    /// `|T^n_{A->B} - H_mu(B)|` over the tail.
    pub tail_entropy_gap: Vec<f64>,
    /// Estimated per-step contraction of the defect; `>= 1` means no decay.
    pub decay_rate: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingResult {
    pub verdict: Verdict,
    pub options: MixingOptions,
    pub invariance_defect: f64,
    pub pairs: Vec<PairStatistics>,
}

/// Tail-convergence test of `mu^n_AB -> mu(B)`.
///
/// A pair passes when every defect in `[n_max - w, n_max]` is below `tol`.
/// It fails when the defect is not decaying, or decays too slowly to reach
/// `tol` within another `n_max` steps at the observed rate. Anything else is
/// inconclusive. The overall verdict is `yes` if all pairs pass, `no` if any
/// pair fails.
pub fn mixing_test<S: Scalar>(
    p: &TransitionMatrix<S>,
    mu: &MeasureVector<S>,
    opts: &MixingOptions,
) -> Result<MixingResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {}", opts.tol)));
    }
    if opts.n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    if mu.len() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            found: mu.len(),
        });
    }
    let pairs = opts.pairs.pairs(p.n())?;
    let w = opts.tail_window.min(opts.n_max - 1);
    let tail_start = opts.n_max - w; // 1-based first tail step
    let stats = pairs
        .iter()
        .map(|(a, b)| pair_statistics(p, mu, a, b, opts, tail_start))
        .collect::<Result<Vec<_>>>()?;
    let verdict = if stats.iter().all(|s| s.verdict == Verdict::Yes) {
        Verdict::Yes
    } else if stats.iter().any(|s| s.verdict == Verdict::No) {
        Verdict::No
    } else {
        Verdict::Inconclusive
    };
    Ok(MixingResult {
        verdict,
        options: opts.clone(),
        invariance_defect: mu.invariance_defect(p)?.to_f64_lossy(),
        pairs: stats,
    })
}

fn pair_statistics<S: Scalar>(
    p: &TransitionMatrix<S>,
    mu: &MeasureVector<S>,
    a: &CellSet,
    b: &CellSet,
    opts: &MixingOptions,
    tail_start: usize,
) -> Result<PairStatistics> {
    let masses = step_masses(p, mu, a, b, opts.n_max)?;
    let target = mu.of_set(b);
    let entropy_b = set_entropy(mu, b);
    let defect: Vec<f64> = masses
        .iter()
        .map(|&m| (m - target).abs().to_f64_lossy())
        .collect();
    let tail = tail_start - 1..opts.n_max;
    let tail_max = defect[tail.clone()].iter().copied().fold(0.0, f64::max);
    let span = tail.len();
    let earlier = tail.start.saturating_sub(span)..tail.start;
    let decay_rate = if earlier.is_empty() {
        1.0
    } else {
        let prev_max = defect[earlier].iter().copied().fold(0.0, f64::max);
        if prev_max == 0.0 {
            if tail_max == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (tail_max / prev_max).powf(1.0 / span as f64)
        }
    };
    let verdict = if tail_max < opts.tol {
        Verdict::Yes
    } else if decay_rate >= 1.0 {
        Verdict::No
    } else {
        let steps_needed = (opts.tol / tail_max).ln() / decay_rate.ln();
        if steps_needed > opts.n_max as f64 {
            Verdict::No
        } else {
            Verdict::Inconclusive
        }
    };
    Ok(PairStatistics {
        source: a.clone(),
        target: b.clone(),
        target_measure: target.to_f64_lossy(),
        tail_steps: tail.clone().map(|k| k + 1).collect(),
        tail_mass: masses[tail.clone()].iter().map(|m| m.to_f64_lossy()).collect(),
        tail_defect: defect[tail.clone()].to_vec(),
        tail_entropy_gap: masses[tail]
            .iter()
            .map(|&m| (neg_x_ln_x(m) - entropy_b).abs().to_f64_lossy())
            .collect(),
        decay_rate,
        verdict,
    })
}

/// Combined verdicts, qualified by the grid resolution they hold at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub resolution: Vec<usize>,
    pub ergodic: ErgodicityResult,
    pub mixing: MixingResult,
    /// Set when a `yes` mixing verdict was downgraded because the chain is
    /// not ergodic at this resolution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ClassificationReport {
    pub fn is_consistent(&self) -> bool {
        self.mixing.verdict != Verdict::Yes || self.ergodic.verdict == Verdict::Yes
    }
}

/// Runs both tests. Mixing implies ergodicity, so a `yes` mixing verdict on
/// a non-ergodic graph is reported as inconclusive.
pub fn classify<S: Scalar>(
    p: &TransitionMatrix<S>,
    mu: &MeasureVector<S>,
    mass_threshold: S,
    opts: &MixingOptions,
) -> Result<ClassificationReport> {
    let ergodic = ergodicity_test(p, mass_threshold);
    let mut mixing = mixing_test(p, mu, opts)?;
    let mut note = None;
    if mixing.verdict == Verdict::Yes && ergodic.verdict != Verdict::Yes {
        mixing.verdict = Verdict::Inconclusive;
        note = Some("sampled pairs converged but the transition graph is not strongly connected".into());
    }
    let report = ClassificationReport {
        resolution: p.meta().dims.clone(),
        ergodic,
        mixing,
        note,
    };
    debug_assert!(report.is_consistent());
    Ok(report)
}
