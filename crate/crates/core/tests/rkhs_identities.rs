mod common;

use common::*;
use mmddro::kernel::squared_distance;
use mmddro::rkhs::{
    fourth_power_trace, fourth_power_trace_gradient, fourth_power_trace_hessian,
    product_norm_squared, trace_submultiplicative_check,
};
use mmddro::{product_norm, GaussianKernel, RkhsFunction};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0f64..3.0, dim)
}

fn point_triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..=5).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d), vec_strategy(d)))
}

fn expansion(max: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..=3, 1usize..=max).prop_flat_map(|(d, n)| {
        (
            proptest::collection::vec(vec_strategy(d), n),
            proptest::collection::vec(-2.0f64..2.0, n),
        )
    })
}

fn shared_pair(max: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, f64)> {
    (1usize..=3, 1usize..=max).prop_flat_map(|(d, n)| {
        (
            proptest::collection::vec(vec_strategy(d), n),
            proptest::collection::vec(-2.0f64..2.0, n),
            proptest::collection::vec(-2.0f64..2.0, n),
            0.4f64..3.0,
        )
    })
}

fn mid(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect()
}

proptest! {
    #[test]
    fn kernel_product_identity((x, y, z) in point_triple(), sigma in 0.5f64..5.0) {
        let k = GaussianKernel::new(sigma).unwrap();
        let lhs = k.eval(&x, &z).unwrap() * k.eval(&y, &z).unwrap();
        let rhs = k.widened().eval(&x, &y).unwrap() * k.narrowed().eval(&z, &mid(&x, &y)).unwrap();
        prop_assume!(lhs > 1e-280);
        prop_assert!(rel_err(lhs, rhs) <= 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn norm_sum_identity_midpoint((x, y, z) in point_triple()) {
        let lhs = squared_distance(&x, &z) + squared_distance(&y, &z);
        let rhs = 0.5 * squared_distance(&x, &y) + 2.0 * squared_distance(&z, &mid(&x, &y));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
    }

    #[test]
    fn norm_sum_identity_four_points(
        (x, y, a, b) in (1usize..=5).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d), vec_strategy(d), vec_strategy(d)))
    ) {
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p + q).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
        let s = squared_distance(&x, &y) + squared_distance(&a, &b) + squared_distance(&xy, &ab);
        let t = squared_distance(&x, &a) + squared_distance(&x, &b) + squared_distance(&y, &a) + squared_distance(&y, &b);
        prop_assert!((s - t).abs() <= 1e-12 * s.max(1.0));
    }

    #[test]
    fn kernel_matrices_are_psd((pts, _) in expansion(12), sigma in 0.2f64..4.0) {
        let km = GaussianKernel::new(sigma).unwrap().matrix(&pts).unwrap();
        prop_assert!(km.min_eigenvalue() >= -1e-10 * pts.len() as f64);
    }

    #[test]
    fn product_bound_on_shared_anchors((pts, a, b, sigma) in shared_pair(8)) {
        let k = GaussianKernel::new(sigma).unwrap();
        let f = RkhsFunction::new(pts.clone(), a, k).unwrap();
        let g = RkhsFunction::new(pts, b, k).unwrap();
        let lhs = product_norm(&f, &g).unwrap();
        prop_assert!(lhs <= f.norm().unwrap() * g.norm().unwrap() + 1e-9);
    }

    #[test]
    fn product_norm_squared_matches_trace((pts, a, _, sigma) in shared_pair(8)) {
        let f = RkhsFunction::new(pts, a, GaussianKernel::new(sigma).unwrap()).unwrap();
        let pn = product_norm(&f, &f).unwrap();
        let tr = f.squared_norm_trace();
        prop_assert!((pn * pn - tr).abs() <= 1e-10 * tr.max(1e-300) + 1e-300, "{} vs {tr}", pn * pn);
    }

    #[test]
    fn trace_form_matches_quadruple_sum((pts, a, b, sigma) in shared_pair(6)) {
        let k = GaussianKernel::new(sigma).unwrap();
        let f = RkhsFunction::new(pts.clone(), a.clone(), k).unwrap();
        let g = RkhsFunction::new(pts.clone(), b.clone(), k).unwrap();
        let quad = product_norm_sq_quad(&pts, &a, &pts, &b, sigma);
        let trace = product_norm_squared(&f, &g).unwrap();
        prop_assert!(rel_err(quad, trace) <= 1e-10 || (quad - trace).abs() <= 1e-14, "{quad} vs {trace}");
        let quad_ff = product_norm_sq_quad(&pts, &a, &pts, &a, sigma);
        prop_assert!(rel_err(quad_ff, f.squared_norm_trace()) <= 1e-10 || quad_ff.abs() <= 1e-14);
    }

    #[test]
    fn pointwise_product_evaluates((pts, a, b, sigma) in shared_pair(6), probe in vec_strategy(3)) {
        let k = GaussianKernel::new(sigma).unwrap();
        let x = &probe[..pts[0].len()];
        let f = RkhsFunction::new(pts.clone(), a, k).unwrap();
        let g = RkhsFunction::new(pts, b, k).unwrap();
        let fg = f.pointwise_product(&g).unwrap();
        let direct = f.evaluate(x).unwrap() * g.evaluate(x).unwrap();
        let expanded = fg.evaluate(x).unwrap();
        prop_assert!((direct - expanded).abs() <= 1e-12 * direct.abs().max(1e-3), "{direct} vs {expanded}");
    }

    #[test]
    fn trace_submultiplicative(seed in any::<u64>(), n in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_psd(&mut rng, n);
        let y = random_psd(&mut rng, n);
        prop_assert!(trace_submultiplicative_check(&x, &y).unwrap());
    }
}

#[test]
fn different_anchor_sets_match_both_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let dim = rng.random_range(1..=3);
        let (nf, ng) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let sigma = rng.random_range(0.4..3.0);
        let (xf, xg) = (
            random_points(&mut rng, nf, dim, 2.0),
            random_points(&mut rng, ng, dim, 2.0),
        );
        let (a, b) = (random_coeffs(&mut rng, nf), random_coeffs(&mut rng, ng));
        let k = GaussianKernel::new(sigma).unwrap();
        let f = RkhsFunction::new(xf.clone(), a.clone(), k).unwrap();
        let g = RkhsFunction::new(xg.clone(), b.clone(), k).unwrap();
        let trace = product_norm_squared(&f, &g).unwrap();
        let quad = product_norm_sq_quad(&xf, &a, &xg, &b, sigma);
        let midpoints = product_norm_sq_midpoints(&xf, &a, &xg, &b, sigma);
        assert!(rel_err(trace, quad) <= 1e-10, "{trace} vs {quad}");
        assert!(rel_err(trace, midpoints) <= 1e-9, "{trace} vs {midpoints}");
        let via_expansion = f.pointwise_product(&g).unwrap().norm_squared().unwrap();
        assert!(rel_err(trace, via_expansion) <= 1e-9);
    }
}

#[test]
fn norms_match_naive_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let sigma = rng.random_range(0.3..3.0);
        let x = random_points(&mut rng, n, 2, 2.0);
        let a = random_coeffs(&mut rng, n);
        let f =
            RkhsFunction::new(x.clone(), a.clone(), GaussianKernel::new(sigma).unwrap()).unwrap();
        let naive = norm_sq(&x, &a, sigma);
        assert!((f.norm_squared().unwrap() - naive).abs() <= 1e-12 * naive.max(1.0));
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let sigma = rng.random_range(0.5..2.0);
        let x = random_points(&mut rng, n, 2, 2.0);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let f = RkhsFunction::new(x, a.clone(), GaussianKernel::new(sigma).unwrap()).unwrap();
        let k = f.widened_anchor_matrix();
        let analytic = f.squared_norm_trace_gradient();
        let fd = fd_gradient(
            |v| fourth_power_trace(&DVector::from_column_slice(v), &k),
            &a,
            1e-4,
        );
        let scale = analytic.amax();
        for i in 0..n {
            let err = (analytic[i] - fd[i]).abs() / analytic[i].abs().max(1e-6 * scale).max(1e-12);
            assert!(err <= 1e-5, "component {i}: {} vs {}", analytic[i], fd[i]);
        }
    }
}

#[test]
fn hessian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let n = rng.random_range(1..=6);
        let x = random_points(&mut rng, n, 1, 2.0);
        let a = random_coeffs(&mut rng, n);
        let k = GaussianKernel::new(1.0)
            .unwrap()
            .widened()
            .matrix(&x)
            .unwrap()
            .into_entries();
        let hess = fourth_power_trace_hessian(&DVector::from_column_slice(&a), &k);
        let scale = hess.amax().max(1e-8);
        for j in 0..n {
            let col = fd_gradient(
                |v| fourth_power_trace_gradient(&DVector::from_column_slice(v), &k)[j],
                &a,
                1e-5,
            );
            for i in 0..n {
                assert!((col[i] - hess[(i, j)]).abs() <= 1e-6 * scale, "({i},{j})");
            }
        }
        assert!((&hess - hess.transpose()).amax() <= 1e-12 * scale);
    }
}

#[test]
fn trace_inequality_fails_without_psd() {
    // trace(XY) ≤ trace(X)trace(Y) needs both factors PSD
    let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(!trace_submultiplicative_check(&x, &x).unwrap());
}
