//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use num_rational::Rational64;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

use pfit::partition::{GridPartition, SamplingScheme};
use pfit::pfop::{build, OutsidePolicy, TransitionMatrix};
use pfit::systems::make_builtin;
use pfit::transfer::TransferMatrix;

pub type R = Rational64;

pub fn ulam(name: &str, params: &[f64], dims: &[usize], samples: usize) -> TransitionMatrix<f64> {
    let sys = make_builtin(name, params).unwrap();
    let part = GridPartition::new(*sys.domain(), dims).unwrap();
    build(&sys, &part, samples, SamplingScheme::UniformSubgrid, OutsidePolicy::Absorb).unwrap()
}

/// Image of `[a, b)` under `x -> 2x mod 1`, as disjoint intervals.
pub fn doubling_image(a: R, b: R) -> Vec<(R, R)> {
    let half = R::new(1, 2);
    let two = R::from_integer(2);
    let one = R::one();
    let mut out = Vec::new();
    if a < half {
        out.push((two * a, two * b.min(half)));
    }
    if b > half {
        out.push((two * a.max(half) - one, two * b - one));
    }
    out
}

/// Image of `[a, b)` under `x -> x + theta mod 1`.
pub fn rotation_image(theta: R) -> impl Fn(R, R) -> Vec<(R, R)> {
    move |a, b| {
        let one = R::one();
        let (lo, hi) = (a + theta, b + theta);
        if hi <= one {
            vec![(lo, hi)]
        } else if lo >= one {
            vec![(lo - one, hi - one)]
        } else {
            vec![(lo, one), (R::zero(), hi - one)]
        }
    }
}

/// Exact Ulam matrix of a piecewise-affine map of `[0, 1)` with constant
/// slope: `P_ij = |T(D_i) cap D_j| / |T(D_i)|`.
pub fn exact_ulam_1d(n: usize, image: impl Fn(R, R) -> Vec<(R, R)>) -> Vec<Vec<R>> {
    let cell = |i: usize| (R::new(i as i64, n as i64), R::new(i as i64 + 1, n as i64));
    (0..n)
        .map(|i| {
            let (a, b) = cell(i);
            let pieces = image(a, b);
            let total: R = pieces.iter().map(|&(l, h)| h - l).sum();
            (0..n)
                .map(|j| {
                    let (c, d) = cell(j);
                    let overlap: R = pieces
                        .iter()
                        .map(|&(l, h)| (h.min(d) - l.max(c)).max(R::zero()))
                        .sum();
                    overlap / total
                })
                .collect()
        })
        .collect()
}

pub fn max_deviation_from_exact(p: &TransitionMatrix<f64>, exact: &[Vec<R>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in exact.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((p.get(i, j) - v.to_f64().unwrap()).abs());
        }
    }
    worst
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik != 0.0 {
                for j in 0..n {
                    c[i][j] += aik * b[k][j];
                }
            }
        }
    }
    c
}

fn neg_x_ln_x(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.ln()
    }
}

/// Total transfer from dense matrix powers, plus the largest single-step value.
pub fn dense_transfer(p: &[Vec<f64>], n_max: usize) -> (Vec<Vec<f64>>, f64) {
    let n = p.len();
    let mut total = vec![vec![0.0; n]; n];
    let mut power = p.to_vec();
    let mut largest: f64 = 0.0;
    for step in 1..=n_max {
        if step > 1 {
            power = matmul(&power, p);
        }
        for i in 0..n {
            for j in 0..n {
                let t = neg_x_ln_x(power[i][j]);
                largest = largest.max(t);
                total[i][j] += t;
            }
        }
    }
    (total, largest)
}

pub fn max_abs_diff(t: &TransferMatrix<f64>, dense: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in dense.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            worst = worst.max((t.get(i, j) - v).abs());
        }
    }
    worst
}

/// Row-stochastic matrix with roughly `fill` nonzeros per row.
pub fn random_stochastic(rng: &mut impl Rng, n: usize, fill: usize) -> TransitionMatrix<f64> {
    let mut rows = vec![vec![0.0; n]; n];
    for row in rows.iter_mut() {
        for _ in 0..fill.max(1) {
            row[rng.gen_range(0..n)] += rng.gen_range(0.05..1.0);
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    TransitionMatrix::from_dense(&rows).unwrap()
}

/// Random convex combination of permutation matrices (doubly stochastic).
pub fn random_doubly_stochastic(rng: &mut impl Rng, n: usize, terms: usize) -> Vec<Vec<f64>> {
    let weights: Vec<f64> = (0..terms).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut m = vec![vec![0.0; n]; n];
    for w in weights {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        for (i, &j) in perm.iter().enumerate() {
            m[i][j] += w / total;
        }
    }
    m
}

pub fn random_density(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Block-diagonal transfer matrix from copies of `block`.
pub fn block_diagonal(block: &TransferMatrix<f64>, copies: usize) -> TransferMatrix<f64> {
    let b = block.n();
    let n = b * copies;
    let mut data = vec![0.0; n * n];
    for c in 0..copies {
        for i in 0..b {
            for j in 0..b {
                data[(c * b + i) * n + c * b + j] = block.get(i, j);
            }
        }
    }
    TransferMatrix::from_rows(n, block.horizon(), data).unwrap()
}
