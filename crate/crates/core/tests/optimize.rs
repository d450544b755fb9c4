use stgp::optimize::{finite_diff_grad, minimize, OptStatus, OptimizerConfig};

fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
    let n = x.len();
    let mut f = 0.0;
    let mut g = vec![0.0; n];
    for i in 0..n - 1 {
        let a = x[i + 1] - x[i] * x[i];
        let b = 1.0 - x[i];
        f += 100.0 * a * a + b * b;
        g[i] += -400.0 * x[i] * a - 2.0 * b;
        g[i + 1] += 200.0 * a;
    }
    (f, g)
}

#[test]
fn extended_rosenbrock_reaches_the_minimum() {
    let x0: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect();
    let r = minimize(rosenbrock, &x0, &OptimizerConfig::default()).unwrap();
    assert_eq!(r.status, OptStatus::Converged);
    for v in &r.x_final {
        assert!((v - 1.0).abs() < 1e-5);
    }
    assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn analytic_gradient_agrees_with_finite_differences() {
    let x = [0.3, -0.7, 1.1, 0.9];
    let (_, g) = rosenbrock(&x);
    let fd = finite_diff_grad(|p| rosenbrock(p).0, &x, 1e-6);
    for (a, b) in g.iter().zip(&fd) {
        assert!((a - b).abs() < 1e-5 * a.abs().max(1.0));
    }
}

#[test]
fn iteration_cap_is_reported() {
    let x0 = vec![-1.2, 1.0];
    let cfg = OptimizerConfig {
        max_iters: 3,
        ..Default::default()
    };
    let r = minimize(rosenbrock, &x0, &cfg).unwrap();
    assert_eq!(r.status, OptStatus::MaxIters);
    assert_eq!(r.iterations, 3);
    assert!(r.f_final < rosenbrock(&x0).0);
}
