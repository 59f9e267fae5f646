use proptest::prelude::*;

use faust_core::io::{dense_to_matrix_market, faust_from_json, faust_to_json, parse_dense};
use faust_core::solvers::{hard_threshold, iht, omp, LinearOp};
use faust_core::{
    faust_apply_transpose, project, synthetic, Constraint, ConstraintSet, DenseMatrix,
    FaustOperator, FlopCounter,
};

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c)
            .prop_map(move |v| DenseMatrix::from_vec(r, c, v).unwrap())
    })
}

fn faust() -> impl Strategy<Value = FaustOperator> {
    (prop::collection::vec(1usize..12, 2..5), any::<u64>(), 0.1f64..3.0).prop_map(|(dims, seed, scale)| {
        let shapes: Vec<(usize, usize)> = dims.windows(2).map(|w| (w[0], w[1])).collect();
        let nnz: Vec<usize> = shapes.iter().map(|&(a, b)| (a * b).div_ceil(2)).collect();
        let f = synthetic::random_faust(&shapes, &nnz, seed).unwrap();
        FaustOperator::new(scale, f.factors().to_vec()).unwrap()
    })
}

fn sparse_sets(rows: usize, cols: usize, k: usize) -> Vec<ConstraintSet> {
    vec![
        ConstraintSet::global_sparsity(rows, cols, k).unwrap(),
        ConstraintSet::per_column(rows, cols, k).unwrap(),
        ConstraintSet::per_row(rows, cols, k).unwrap(),
        ConstraintSet::new(rows, cols, Constraint::Triangular { upper: true }).unwrap(),
        ConstraintSet::new(rows, cols, Constraint::Diagonal).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn projections_are_feasible_and_idempotent(u in matrix(6, 6), k in 1usize..6) {
        for set in sparse_sets(u.rows(), u.cols(), k) {
            let p = project(&u, &set).unwrap();
            prop_assert!(set.is_feasible(&p, 1e-12));
            let q = project(&p, &set).unwrap();
            prop_assert!(q.max_abs_diff(&p) < 1e-12);
        }
    }

    #[test]
    fn projection_commutes_with_transpose(u in matrix(5, 5), k in 1usize..5) {
        let set = ConstraintSet::per_column(u.rows(), u.cols(), k).unwrap();
        let direct = project(&u, &set).unwrap().transpose();
        let via = project(&u.transpose(), &set.transposed()).unwrap();
        prop_assert!(direct.max_abs_diff(&via) < 1e-12);
    }

    #[test]
    fn apply_and_adjoint_consistent(f in faust(), seed in any::<u64>()) {
        let mut rng = synthetic::rng(seed);
        let x = synthetic::gaussian_vector(f.cols(), &mut rng);
        let y = synthetic::gaussian_vector(f.rows(), &mut rng);
        let mut flops = FlopCounter::default();
        let fx = f.apply_counted(&x, &mut flops).unwrap();
        prop_assert!(flops.flops() <= 2 * f.s_tot() as u64 + f.rows() as u64);
        let dx = f.to_dense().matvec(&x);
        let scale = dx.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        prop_assert!(fx.iter().zip(&dx).all(|(a, b)| (a - b).abs() <= 1e-10 * scale));
        let fty = faust_apply_transpose(&f, &y).unwrap();
        let lhs: f64 = fx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&fty).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (lhs.abs() + 1.0) * scale);
    }

    #[test]
    fn faust_json_roundtrip(f in faust()) {
        let back = faust_from_json(&faust_to_json(&f)).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn matrix_market_roundtrip(m in matrix(5, 7)) {
        let back = parse_dense(&dense_to_matrix_market(&m)).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn omp_residual_nonincreasing_in_t(seed in any::<u64>()) {
        let mut rng = synthetic::rng(seed);
        let d = synthetic::gaussian_matrix(10, 25, &mut rng);
        let y = synthetic::gaussian_vector(10, &mut rng);
        let mut last = f64::INFINITY;
        for t in 1..=10 {
            let res = omp(LinearOp::Dense(&d), &y, t).unwrap();
            prop_assert!(res.support.len() <= t);
            prop_assert!(res.coefficients.iter().filter(|c| **c != 0.0).count() <= t);
            prop_assert!(res.residual_norm <= last + 1e-12);
            last = res.residual_norm;
        }
    }

    #[test]
    fn omp_faust_matches_dense_support(f in faust(), seed in any::<u64>()) {
        let d = f.to_dense();
        prop_assume!(d.cols() >= 2 && d.max_abs() > 0.0);
        let mut rng = synthetic::rng(seed);
        let y = synthetic::gaussian_vector(d.rows(), &mut rng);
        let t = 2.min(d.cols());
        let a = omp(LinearOp::Dense(&d), &y, t).unwrap();
        let b = omp(LinearOp::Faust(&f), &y, t).unwrap();
        prop_assert_eq!(a.support, b.support);
    }

    #[test]
    fn iht_output_is_t_sparse(seed in any::<u64>(), t in 1usize..6, steps in 0usize..30) {
        let mut rng = synthetic::rng(seed);
        let d = synthetic::gaussian_matrix(12, 20, &mut rng);
        let y = synthetic::gaussian_vector(12, &mut rng);
        let g = iht(LinearOp::Dense(&d), &y, t, steps, None).unwrap();
        prop_assert!(g.iter().filter(|v| **v != 0.0).count() <= t);
    }

    #[test]
    fn hard_threshold_keeps_largest(v in prop::collection::vec(-5.0f64..5.0, 1..20), t in 1usize..8) {
        let h = hard_threshold(&v, t);
        let kept: Vec<f64> = h.iter().filter(|x| **x != 0.0).map(|x| x.abs()).collect();
        let dropped: Vec<f64> = v.iter().zip(&h).filter(|(_, x)| **x == 0.0).map(|(a, _)| a.abs()).collect();
        prop_assert!(kept.len() <= t);
        let min_kept = kept.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(kept.is_empty() || dropped.iter().all(|d| *d <= min_kept));
    }
}
