mod common;

use common::*;
use metamorph_core::grid::{DeformationField, ScalarField};
use metamorph_core::warp::*;
use rand::Rng;

/// Node-sampling matrix of the cubic B-spline with whole-sample mirror
/// boundary.
fn sampling_matrix(n: usize) -> Vec<Vec<f64>> {
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        b[i][i] += 4.0 / 6.0;
        let left = if i == 0 { 1 } else { i - 1 };
        let right = if i == n - 1 { n - 2 } else { i + 1 };
        b[i][left] += 1.0 / 6.0;
        b[i][right] += 1.0 / 6.0;
    }
    b
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / a[row][row];
    }
    x
}

#[test]
fn prefilter_matches_dense_inverse() {
    let mut r = rng(11);
    for n in [3, 4, 5, 9, 16, 33] {
        let g: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
        // constant along y, so the y pass is the identity
        let f = ScalarField::from_fn(dims(n, 4), |i, _| g[i]);
        let coef = bspline_prefilter(&f);
        let expected = solve(sampling_matrix(n), g.clone());
        for j in 0..4 {
            for i in 0..n {
                assert!(
                    (coef.as_field().get(i, j) - expected[i]).abs() < 1e-12,
                    "n={n} i={i}"
                );
            }
        }
    }
}

#[test]
fn prefilter_transpose_matches_dense() {
    let mut r = rng(12);
    for n in [3, 6, 17] {
        let g: Vec<f64> = (0..n).map(|_| r.gen::<f64>() - 0.5).collect();
        let f = ScalarField::from_fn(dims(n, 3), |i, _| g[i]);
        let out = bspline_prefilter_transpose(&f);
        // separable: x-factor B^{-T} g times y-factor B^{-T} 1
        let bt: Vec<Vec<f64>> = {
            let b = sampling_matrix(n);
            (0..n).map(|i| (0..n).map(|j| b[j][i]).collect()).collect()
        };
        let expected = solve(bt, g.clone());
        let col_sum = {
            let bt3: Vec<Vec<f64>> = {
                let b = sampling_matrix(3);
                (0..3).map(|i| (0..3).map(|j| b[j][i]).collect()).collect()
            };
            solve(bt3, vec![1.0; 3])
        };
        for j in 0..3 {
            for i in 0..n {
                assert!((out.get(i, j) - expected[i] * col_sum[j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn spline_reproduces_ramp_away_from_edges() {
    let d = dims(40, 36);
    let f = ScalarField::from_fn(d, |i, j| 0.3 * i as f64 - 0.2 * j as f64 + 1.0);
    let coef = bspline_prefilter(&f);
    for j in 12..24 {
        for i in 12..28 {
            let (x, y) = (i as f64 + 0.5, j as f64 + 0.5);
            let exact = 0.3 * x - 0.2 * y + 1.0;
            assert!((coef.eval(x, y) - exact).abs() < 1e-5);
        }
    }
}

#[test]
fn integer_shift_samples_shifted_nodes() {
    let mut r = rng(13);
    let d = dims(12, 10);
    let f = random_field(&mut r, d);
    let phi = DeformationField::from_displacement(d, |i, j| {
        if i + 2 < 12 && j + 1 < 10 {
            [2.0, 1.0]
        } else {
            [0.0, 0.0]
        }
    });
    let t = warp_channel(&f, &phi).unwrap();
    for j in 1..8 {
        for i in 1..9 {
            assert!((t.get(i, j) - f.get(i + 2, j + 1)).abs() < 1e-10);
        }
    }
}

#[test]
fn identity_and_constant_warps() {
    let mut r = rng(14);
    let d = dims(16, 13);
    let f = random_field(&mut r, d);
    let id = DeformationField::identity(d);
    let t = warp_channel(&f, &id).unwrap();
    let err = t.sub(&f).as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(err < 1e-8, "identity warp error {err}");

    let c = ScalarField::constant(d, 0.37);
    let phi = DeformationField::from_displacement(d, |_, _| [r.gen_range(-2.5..2.5), r.gen_range(-2.5..2.5)]);
    let t = warp_channel(&c, &phi).unwrap();
    assert!(t.as_slice().iter().all(|v| (v - 0.37).abs() < 1e-10));
}

#[test]
fn adjoint_dot_product() {
    let mut r = rng(15);
    for trial in 0..10 {
        let d = dims(9 + trial, 8 + 2 * trial);
        let f = random_field(&mut r, d);
        let res = random_field(&mut r, d);
        // large displacements so that clamping and mirrored taps are exercised
        let phi = DeformationField::from_displacement(d, |_, _| {
            [r.gen_range(-4.0..4.0), r.gen_range(-4.0..4.0)]
        });
        let lhs = warp_channel(&f, &phi).unwrap().dot(&res);
        let rhs = f.dot(&warp_channel_adjoint(&res, &phi).unwrap());
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs(), "trial {trial}: {lhs} vs {rhs}");

        let coef = SplineCoefficients::from_raw(f.clone());
        let lhs = warp(&coef, &phi).unwrap().dot(&res);
        let rhs = f.dot(&warp_adjoint(&res, &phi).unwrap());
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs());
    }
}

#[test]
fn mismatched_dims_rejected() {
    let f = ScalarField::zeros(dims(5, 5));
    let phi = DeformationField::identity(dims(5, 6));
    assert!(warp_channel(&f, &phi).is_err());
    assert!(warp_channel_adjoint(&f, &phi).is_err());
}
