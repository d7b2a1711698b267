mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pfit::classify::ergodicity_test;
use pfit::placement::{
    controllability_vector, coverage, reachable_cells, solve_exact, solve_greedy, solve_lp, Mode,
    PlacementProblem,
};
use pfit::systems::make_builtin;
use pfit::transfer::{density_entropy, transfer_matrix, MeasureVector, TransferMatrix};
use pfit::{Domain, GridPartition, TransitionMatrix};

fn random_transfer(seed: u64, n: usize, zero_prob: f64) -> TransferMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * n)
        .map(|_| {
            if rng.gen_bool(zero_prob) {
                0.0
            } else {
                rng.gen_range(1e-12..1.0)
            }
        })
        .collect();
    TransferMatrix::from_rows(n, n - 1, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn located_cell_contains_the_point(
        nx in 1usize..40, ny in 1usize..40, fx in 0.0f64..=1.0, fy in 0.0f64..=1.0,
    ) {
        let d = Domain::rectangle([-1.0, 0.5], [3.0, 2.0]).unwrap();
        let g = GridPartition::new(d, &[nx, ny]).unwrap();
        let x = [-1.0 + 4.0 * fx, 0.5 + 1.5 * fy];
        let i = g.locate(&x).unwrap();
        let (lo, hi) = g.cell_bounds(i);
        for ax in 0..2 {
            prop_assert!(lo[ax] <= x[ax] + 1e-12 && x[ax] <= hi[ax] + 1e-12);
        }
        prop_assert_eq!(g.flat_index(g.multi_index(i)), i);
    }

    #[test]
    fn entropy_never_decreases_under_doubly_stochastic_maps(seed in any::<u64>(), n in 2usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_doubly_stochastic(&mut rng, n, 4);
        let p = TransitionMatrix::from_dense(&m).unwrap();
        let rho = random_density(&mut rng, n);
        let pushed = p.push_density(&rho, 1).unwrap().density;
        prop_assert!(density_entropy(&pushed).unwrap() >= density_entropy(&rho).unwrap() - 1e-12);
    }

    #[test]
    fn aligned_rotations_preserve_entropy(k in 1usize..16, seed in any::<u64>()) {
        let n = 16;
        let p = ulam("rotation", &[k as f64 / n as f64], &[n], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(&mut rng, n);
        let h0 = density_entropy(&rho).unwrap();
        let mut cur = rho;
        for _ in 0..100 {
            cur = p.push_density(&cur, 1).unwrap().density;
            prop_assert!((density_entropy(&cur).unwrap() - h0).abs() <= 1e-12);
        }
    }

    #[test]
    fn rotation_then_inverse_is_identity(k in 1usize..32, samples in 1usize..6) {
        let n = 32;
        let fwd = ulam("rotation", &[k as f64 / n as f64], &[n], samples);
        let back = ulam("rotation", &[(n - k) as f64 / n as f64], &[n], samples);
        let prod = matmul(&fwd.to_dense(), &back.to_dense());
        for (i, row) in prod.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                prop_assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn euler_defect_is_second_order(fx in 0.05f64..1.95, fy in 0.05f64..0.95) {
        let x = [fx, fy];
        let defect = |tau: f64| {
            let coarse = make_builtin("double-gyre", &[tau, 1.0]).unwrap().apply(&x).unwrap();
            let fine = make_builtin("double-gyre", &[tau, 64.0]).unwrap().apply(&x).unwrap();
            (coarse[0] - fine[0]).hypot(coarse[1] - fine[1])
        };
        let (d1, d2) = (defect(0.02), defect(0.01));
        prop_assert!(d2 <= 0.3 * d1 + 1e-13, "{} vs {}", d2, d1);
    }

    #[test]
    fn ergodicity_ignores_threshold_rescaling(seed in any::<u64>(), n in 2usize..25, scale in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_stochastic(&mut rng, n, 2);
        let smallest = p.triplets().map(|(_, _, v)| v).filter(|&v| v > 0.0).fold(1.0, f64::min);
        let a = ergodicity_test(&p, 0.5 * smallest);
        let b = ergodicity_test(&p, 0.5 * smallest * scale);
        prop_assert_eq!(a.verdict, b.verdict);
        prop_assert_eq!(a.components, b.components);
        prop_assert_eq!(a.witness, b.witness);
    }

    #[test]
    fn controllability_flag_matches_reachability(seed in any::<u64>(), n in 2usize..20, k in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_stochastic(&mut rng, n, 1);
        let actuators: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n)).collect();
        let report = controllability_vector(&p, &actuators, 0.9, n - 1, 0.0).unwrap();
        let reach = reachable_cells(&p, &actuators, Mode::Actuator, n - 1);
        prop_assert_eq!(report.coarse_controllable, reach.len() == n);
        let unreached: Vec<usize> = (0..n).filter(|&j| !reach.contains(j)).collect();
        prop_assert_eq!(report.unreached, unreached);
    }

    #[test]
    fn coverage_is_monotone(seed in any::<u64>(), n in 2usize..20, picks in prop::collection::vec(0usize..20, 1..6)) {
        let t = random_transfer(seed, n, 0.8);
        let picks: Vec<usize> = picks.into_iter().map(|i| i % n).collect();
        for cut in 0..picks.len() {
            let small = coverage(&t, &picks[..cut], Mode::Actuator, 1e-10);
            let large = coverage(&t, &picks, Mode::Actuator, 1e-10);
            prop_assert!(small.iter().all(|j| large.contains(j)));
        }
    }

    #[test]
    fn solvers_stay_admissible_and_respect_bounds(seed in any::<u64>(), n in 3usize..16, count in 1usize..3) {
        let t = random_transfer(seed, n, 0.85);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut admissible: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.6)).collect();
        if admissible.len() < count {
            admissible = (0..n).collect();
        }
        let prob = PlacementProblem::with_options(&t, count, Mode::Actuator, admissible.clone(), 1e-10).unwrap();
        let exact = solve_exact(&prob).unwrap();
        let greedy = solve_greedy(&prob).unwrap();
        let lp = solve_lp(&prob).unwrap();
        for sol in [&exact, &greedy, &lp] {
            prop_assert_eq!(sol.selected.len(), count);
            prop_assert!(sol.selected.iter().all(|i| admissible.contains(i)));
            prop_assert!((0.0..=1.0).contains(&sol.coverage_fraction));
        }
        prop_assert!(greedy.covered_count() <= exact.covered_count());
        prop_assert!(lp.covered_count() <= exact.covered_count());
        let weights: f64 = lp.relaxed_e.iter().sum();
        prop_assert!((weights - count as f64).abs() < 1e-6);
        prop_assert!(lp.relaxed_e.iter().all(|&e| (0.0..=1.0).contains(&e)));
        // the relaxation bounds the integer optimum from above
        prop_assert!(lp.lp.as_ref().unwrap().objective >= exact.covered_count() as f64 - 1e-6);
    }

    #[test]
    fn sensor_mode_equals_transposed_actuator_mode(seed in any::<u64>(), n in 2usize..14, count in 1usize..3) {
        let t = random_transfer(seed, n, 0.7);
        let tt = t.transpose();
        let count = count.min(n);
        let s = PlacementProblem::new(&t, count, Mode::Sensor).unwrap();
        let a = PlacementProblem::new(&tt, count, Mode::Actuator).unwrap();
        let pairs = [
            (solve_exact(&s).unwrap(), solve_exact(&a).unwrap()),
            (solve_greedy(&s).unwrap(), solve_greedy(&a).unwrap()),
            (solve_lp(&s).unwrap(), solve_lp(&a).unwrap()),
        ];
        for (x, y) in pairs {
            prop_assert_eq!(&x.selected, &y.selected);
            prop_assert_eq!(&x.relaxed_e, &y.relaxed_e);
            prop_assert_eq!(&x.coverage_values, &y.coverage_values);
        }
    }

    #[test]
    fn matrix_files_round_trip_exactly(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_stochastic(&mut rng, n, 3);
        let dir = tempfile::tempdir().unwrap();
        let (csv, meta) = (dir.path().join("m.csv"), dir.path().join("m.meta.json"));
        p.save(&csv, &meta).unwrap();
        let q = TransitionMatrix::<f64>::load(&csv, &meta).unwrap();
        prop_assert_eq!(p.to_dense(), q.to_dense());
        let t = transfer_matrix(&p, &MeasureVector::uniform(n), 5).unwrap();
        let u = transfer_matrix(&q, &MeasureVector::uniform(n), 5).unwrap();
        prop_assert_eq!(t, u);
    }
}

#[test]
fn refined_grid_aggregates_to_coarse_grid() {
    for (name, params) in [("doubling", vec![]), ("rotation", vec![0.25]), ("rotation", vec![0.375])] {
        let coarse = ulam(name, &params, &[4], 8);
        let fine = ulam(name, &params, &[8], 4);
        for i in 0..4 {
            for j in 0..4 {
                let agg: f64 = (2 * i..2 * i + 2)
                    .flat_map(|a| (2 * j..2 * j + 2).map(move |b| (a, b)))
                    .map(|(a, b)| fine.get(a, b))
                    .sum::<f64>()
                    / 2.0;
                assert!((agg - coarse.get(i, j)).abs() < 1e-15, "{name} {params:?} ({i},{j})");
            }
        }
    }
}

#[test]
fn gyre_keeps_sampled_points_in_domain() {
    let sys = make_builtin::<f64>("double-gyre", &[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100_000 {
        let x = [rng.gen_range(0.0..=2.0), rng.gen_range(0.0..=1.0)];
        let y = sys.apply(&x).unwrap();
        assert!(sys.domain().contains(&y), "{x:?} -> {y:?}");
    }
}
