use proptest::prelude::*;

use stgp::kernels::{KernelExpr, KernelParams};
use stgp::Point;

fn composed(v: [f64; 4]) -> KernelExpr {
    let mut k = KernelExpr::default_composed();
    k.set_variances(&v);
    k
}

proptest! {
    #[test]
    fn symmetric_stationary_and_periodic(
        ax in -50.0..50.0f64, ay in -50.0..50.0f64, at in -500.0..500.0f64,
        bx in -50.0..50.0f64, by in -50.0..50.0f64, bt in -500.0..500.0f64,
        sx in -20.0..20.0f64, sy in -20.0..20.0f64, days in -20i32..20,
        v0 in 0.1..3.0f64, v1 in 0.1..3.0f64, v2 in 0.1..3.0f64, v3 in 0.1..3.0f64,
    ) {
        let k = composed([v0, v1, v2, v3]);
        let a = Point::new(ax, ay, at);
        let b = Point::new(bx, by, bt);
        let kab = k.eval_pair(&a, &b).unwrap();
        prop_assert_eq!(kab, k.eval_pair(&b, &a).unwrap());
        let shift = |p: &Point| Point::new(p.x + sx, p.y + sy, p.t);
        prop_assert!((kab - k.eval_pair(&shift(&a), &shift(&b)).unwrap()).abs() < 1e-12);
        let later = Point::new(bx, by, bt + 24.0 * days as f64);
        prop_assert!((kab - k.eval_pair(&a, &later).unwrap()).abs() < 1e-11);
        prop_assert!(kab <= k.eval_pair(&a, &a).unwrap() + 1e-12);
    }

    #[test]
    fn linear_in_each_variance(scale in 0.1..10.0f64, leaf in 0usize..4) {
        let base = [0.7, 1.1, 0.4, 1.9];
        let mut scaled = base;
        scaled[leaf] *= scale;
        let a = Point::new(1.0, 2.0, 3.0);
        let b = Point::new(4.0, -1.0, 10.0);
        let parts = composed(base).grad_variances(&[a], &[b]).unwrap();
        let delta = composed(scaled).eval_pair(&a, &b).unwrap() - composed(base).eval_pair(&a, &b).unwrap();
        let expected = parts[leaf][(0, 0)] * (scaled[leaf] - base[leaf]);
        prop_assert!((delta - expected).abs() < 1e-12 * (1.0 + delta.abs()));
    }
}

#[test]
fn composed_equals_sum_of_its_parts() {
    let t = KernelParams::periodic(0.8, 8.0, 24.0);
    let s = KernelParams::rbf(1.3, 10.0);
    let ti = KernelParams::periodic(0.5, 8.0, 24.0);
    let si = KernelParams::rbf(2.0, 10.0);
    let k = KernelExpr::composed(t, s, ti, si);
    let a = Point::new(0.0, 0.0, 0.0);
    let b = Point::new(3.0, 4.0, 12.0);
    let kt = 0.8 * (-1.0f64 / 128.0).exp();
    let ks = 1.3 * (-0.25f64).exp();
    let kti = 0.5 * (-1.0f64 / 128.0).exp();
    let ksi = 2.0 * (-0.25f64).exp();
    assert!((k.eval_pair(&a, &b).unwrap() - (kt + ks + kti * ksi)).abs() < 1e-12);
}

#[test]
fn matrices_are_positive_semidefinite() {
    let k = composed([1.0, 0.5, 2.0, 0.3]);
    let pts: Vec<Point> = (0..150)
        .map(|i| {
            let f = i as f64;
            Point::new((f * 1.7).sin() * 40.0, (f * 0.3).cos() * 40.0, f * 2.9)
        })
        .collect();
    let m = k.eval_matrix(&pts, &pts).unwrap();
    let min = m.clone().symmetric_eigen().eigenvalues.min();
    assert!(min >= -1e-8 * 150.0 * m.diagonal().max());
}
