mod common;

use common::*;
use num_rational::Rational64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pfit::transfer::{default_horizon, step_masses, transfer_matrix, CellSet, MeasureVector};

#[test]
fn doubling_matches_exact_interval_oracle() {
    for n in [4, 6, 8, 16, 32] {
        let exact = exact_ulam_1d(n, doubling_image);
        for samples in [2, 4, 16, 100] {
            let p = ulam("doubling", &[], &[n], samples);
            let dev = max_deviation_from_exact(&p, &exact);
            assert!(dev <= 1e-12, "n = {n}, L = {samples}: {dev}");
        }
    }
}

#[test]
fn rotation_matches_exact_interval_oracle() {
    let quarter = Rational64::new(1, 4);
    for n in [4, 8, 16] {
        let exact = exact_ulam_1d(n, rotation_image(quarter));
        for samples in [2, 4, 16, 100] {
            let p = ulam("rotation", &[0.25], &[n], samples);
            assert!(max_deviation_from_exact(&p, &exact) <= 1e-12, "n = {n}, L = {samples}");
        }
    }
    // misaligned with the grid: the image splits 4 : 1 across two cells
    let exact = exact_ulam_1d(4, rotation_image(Rational64::new(3, 10)));
    assert_eq!(exact[0][1], Rational64::new(4, 5));
    for samples in [10, 100] {
        let p = ulam("rotation", &[0.3], &[4], samples);
        assert!(max_deviation_from_exact(&p, &exact) <= 1e-12);
    }
}

#[test]
fn transfer_matches_dense_powers() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cases = vec![
        ("doubling 4", ulam("doubling", &[], &[4], 16)),
        ("doubling 16", ulam("doubling", &[], &[16], 16)),
        ("doubling 64", ulam("doubling", &[], &[64], 16)),
        ("rotation golden 16", ulam("rotation", &[0.381_966_011_250_105_1], &[16], 100)),
        ("rotation 0.25 8", ulam("rotation", &[0.25], &[8], 4)),
        ("baker 4x4", ulam("baker", &[], &[4, 4], 16)),
        ("baker 8x8", ulam("baker", &[], &[8, 8], 4)),
        ("gyre 8x4", ulam("double-gyre", &[], &[8, 4], 25)),
        ("identity 2d", ulam("identity", &[2.0], &[3, 3], 4)),
    ];
    for n in [5, 20, 48] {
        cases.push(("random", random_stochastic(&mut rng, n, 3)));
    }
    for (name, p) in cases {
        let n = p.n();
        let n_max = default_horizon(n);
        let t = transfer_matrix(&p, &MeasureVector::uniform(n), n_max).unwrap();
        let (dense, largest) = dense_transfer(&p.to_dense(), n_max);
        let diff = max_abs_diff(&t, &dense);
        assert!(diff <= 1e-12, "{name}: {diff}");
        assert!(largest <= (-1.0f64).exp() + 1e-15, "{name}");
    }
}

#[test]
fn doubling_transfer_pattern() {
    let p = ulam("doubling", &[], &[4], 16);
    let t = transfer_matrix(&p, &MeasureVector::uniform(4), 3).unwrap();
    let h = 0.5 * 2f64.ln();
    // steps 2 and 3 are uniform (1/4 each); step 1 hits the two image cells with 1/2
    for i in 0..4 {
        for j in 0..4 {
            let first = if p.get(i, j) > 0.0 { h } else { 0.0 };
            assert!((t.get(i, j) - (first + 2.0 * h)).abs() < 1e-15);
        }
    }
}

#[test]
fn step_masses_match_dense_powers_for_unions() {
    let p = ulam("baker", &[], &[4, 4], 4);
    let dense = p.to_dense();
    let mu = MeasureVector::uniform(16);
    let a = CellSet::new(vec![0, 5, 9]);
    let b = CellSet::new(vec![2, 3, 15]);
    let masses = step_masses(&p, &mu, &a, &b, 6).unwrap();
    let mut power = dense.clone();
    for (k, m) in masses.iter().enumerate() {
        if k > 0 {
            power = matmul(&power, &dense);
        }
        let expect: f64 = a
            .iter()
            .map(|i| b.iter().map(|j| power[i][j]).sum::<f64>())
            .sum::<f64>()
            / 3.0;
        assert!((m - expect).abs() < 1e-14, "step {}", k + 1);
    }
}
