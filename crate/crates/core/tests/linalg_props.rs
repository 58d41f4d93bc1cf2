mod common;

use proptest::prelude::*;
use relu_preimage::linalg::{self, DenseMatrix, DEFAULT_RANK_TOL};

fn orthonormal_residual(q: &DenseMatrix) -> f64 {
    // q^T q against the identity, over the columns of q
    let g = q.transpose().matmul(q).unwrap();
    let mut worst = 0.0f64;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}

fn matrix_strategy() -> impl Strategy<Value = DenseMatrix> {
    (1usize..=64, 1usize..=64, any::<u64>(), 0u8..4).prop_map(|(m, n, seed, kind)| {
        let mut rng = common::rng(seed);
        let mut a = common::gaussian_matrix(&mut rng, m, n);
        match kind {
            // low rank: product of thin factors
            1 => {
                let r = 1 + (seed as usize % m.min(n));
                let left = common::gaussian_matrix(&mut rng, m, r);
                let right = common::gaussian_matrix(&mut rng, r, n);
                a = left.matmul(&right).unwrap();
            }
            // widely spread scales across rows
            2 => {
                for i in 0..m {
                    let s = 10f64.powi((i % 7) as i32 - 3);
                    a.row_mut(i).iter_mut().for_each(|v| *v *= s);
                }
            }
            3 => {
                let zero: Vec<usize> = (0..m).filter(|i| i % 3 == 0).collect();
                a = a.zero_rows(&zero);
            }
            _ => {}
        }
        a
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn svd_reconstructs_and_is_orthonormal(a in matrix_strategy()) {
        let svd = linalg::svd(&a).unwrap();
        let err = svd.reconstruct().sub(&a).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-10 * (a.frobenius_norm() + 1.0), "reconstruction error {err:e}");
        prop_assert!(orthonormal_residual(&svd.u) <= 1e-10);
        prop_assert!(orthonormal_residual(&svd.vt.transpose()) <= 1e-10);
        let s = &svd.s.values;
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.iter().all(|&v| v >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rank_plus_nullity_is_cols(a in matrix_strategy()) {
        let (rank, null) = linalg::rank_and_nullspace(&a, DEFAULT_RANK_TOL).unwrap();
        prop_assert_eq!(rank, linalg::rank(&a, DEFAULT_RANK_TOL).unwrap());
        prop_assert_eq!(rank + null.rows(), a.cols());
        if null.rows() > 0 {
            prop_assert!(orthonormal_residual(&null.transpose()) <= 1e-10);
            let resid = a.matmul(&null.transpose()).unwrap().frobenius_norm();
            prop_assert!(resid <= 1e-8 * a.frobenius_norm().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn singular_values_ignore_row_order(a in matrix_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..a.rows()).collect();
        order.shuffle(&mut common::rng(seed));
        let s1 = linalg::singular_values(&a).unwrap().values;
        let s2 = linalg::singular_values(&a.select_rows(&order)).unwrap().values;
        for (x, y) in s1.iter().zip(&s2) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn singular_values_match_eigen_oracle() {
    let mut rng = common::rng(5);
    for trial in 0..200 {
        let (m, n) = if trial == 0 {
            (5, 3)
        } else {
            (1 + trial % 12, 1 + (trial * 7) % 9)
        };
        let a = common::gaussian_matrix(&mut rng, m, n);
        let got = linalg::singular_values(&a).unwrap().values;
        let want = common::oracle_singular_values(&a);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-8, "{m}x{n}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn dependent_column_drops_rank() {
    let mut rng = common::rng(11);
    let a = common::gaussian_matrix(&mut rng, 4, 2);
    let rows: Vec<Vec<f64>> = a
        .row_iter()
        .map(|r| vec![r[0], r[1], r[0] + r[1]])
        .collect();
    let m = DenseMatrix::from_rows(&rows).unwrap();
    assert_eq!(linalg::rank(&m, DEFAULT_RANK_TOL).unwrap(), 2);
    assert_eq!(
        linalg::nullspace_basis(&m, DEFAULT_RANK_TOL)
            .unwrap()
            .rows(),
        1
    );
}

#[test]
fn min_norm_solution_solves_consistent_systems() {
    let mut rng = common::rng(12);
    for _ in 0..100 {
        let a = common::gaussian_matrix(&mut rng, 3, 6);
        let x0 = common::gaussian_vec(&mut rng, 6);
        let b = a.matvec(&x0).unwrap();
        let x = linalg::min_norm_solve(&a, &b, DEFAULT_RANK_TOL).unwrap();
        let r = a.matvec(&x).unwrap();
        assert!(r.iter().zip(b.iter()).all(|(p, q)| (p - q).abs() < 1e-9));
        assert!(x.norm() <= common::vector(&x0).norm() + 1e-12);
        let null = linalg::nullspace_basis(&a, DEFAULT_RANK_TOL).unwrap();
        assert!(null.matvec(&x).unwrap().norm() < 1e-9);
    }
}
