#![allow(dead_code)]

use stgp::data::SpatialExtent;
use stgp::synth::{Bump, IntensitySpec};

/// Gauss–Hermite nodes and weights for `∫ e^{-x²} f(x) dx`, by Newton
/// iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pi_m4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pi_m4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j + 1) as f64).sqrt() * p2 - (j as f64 / (j + 1) as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `E[g(f)]` for `f ~ N(mean, var)` by `n`-point Gauss–Hermite.
pub fn gh_expectation(n: usize, mean: f64, var: f64, g: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_hermite(n);
    let s = (2.0 * var).sqrt();
    let total: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * g(mean + s * xi)).sum();
    total / std::f64::consts::PI.sqrt()
}

/// `ln k!` to 25 significant digits, computed offline with mpmath at 50-digit
/// working precision.
pub const LOG_FACTORIAL_REFERENCE: [(u64, f64); 11] = [
    (2, 0.6931471805599453094172321),
    (10, 15.10441257307551529522571),
    (57, 176.3958484069973517152414),
    (170, 706.5730622457873471107223),
    (171, 711.7147258022900069535218),
    (1000, 5912.128178488163348878131),
    (4096, 29978.64806084404823598542),
    (12345, 103962.9534784496756743722),
    (54321, 537929.0993745935513252104),
    (99999, 1051287.708973656894900858),
    (100000, 1051299.221899121865129278),
];

/// Extent of the synthetic study area, km.
pub fn synthetic_extent() -> SpatialExtent {
    SpatialExtent::new(-15.0, 15.0, -15.0, 15.0).unwrap()
}

/// Diurnal amplitude 0.8 and two spatial bumps, scaled so the mean count per
/// 5 km × 5 km × 4 h bin is `mean_per_bin`.
pub fn two_bump_spec(t_start: f64, t_end: f64, mean_per_bin: f64, seed: u64) -> IntensitySpec {
    let mut spec = IntensitySpec {
        log_base: 0.0,
        diurnal_amplitude: 0.8,
        phase: 0.3,
        bumps: vec![
            Bump {
                center_x: -6.0,
                center_y: 4.0,
                width: 6.0,
                height: 1.2,
            },
            Bump {
                center_x: 7.0,
                center_y: -5.0,
                width: 8.0,
                height: 0.8,
            },
        ],
        extent: synthetic_extent(),
        t_start,
        t_end,
        seed,
    };
    // Average of exp(log-intensity) over a fine lattice at log_base = 0.
    let n = 120;
    let e = spec.extent;
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            for k in 0..48 {
                let p = stgp::Point::new(
                    e.x_min + (i as f64 + 0.5) * e.width() / n as f64,
                    e.y_min + (j as f64 + 0.5) * e.height() / n as f64,
                    (k as f64 + 0.5) * 0.5,
                );
                acc += spec.intensity(&p);
            }
        }
    }
    let mean_rate = acc / (n * n * 48) as f64;
    let bin_volume = 25.0 * 4.0;
    spec.log_base = (mean_per_bin / bin_volume / mean_rate).ln();
    spec
}

/// MEDIC prediction by scanning every history bin of the cell and keeping those
/// whose lag from `t` is `y·8736 + w·168` hours for an allowed `y` and
/// `1 ≤ w ≤ weeks_back`. Times are whole hours.
pub fn medic_oracle(
    history: &[u32],
    nx: usize,
    ny: usize,
    hist_start: i64,
    t_bin: i64,
    test_t: i64,
    j: usize,
    i: usize,
    weeks_back: i64,
    years_back: Option<i64>,
) -> (f64, usize) {
    let n_t = history.len() / (nx * ny);
    let mut gathered = Vec::new();
    for k in 0..n_t {
        let tk = hist_start + k as i64 * t_bin;
        let lag = test_t - tk;
        let max_year = years_back.unwrap_or(i64::MAX / 8736);
        let hit = (0..=max_year.min(lag / 8736)).any(|y| {
            let r = lag - y * 8736;
            r % 168 == 0 && r >= 168 && r <= weeks_back * 168
        });
        if hit {
            gathered.push(history[(k * ny + j) * nx + i]);
        }
    }
    if gathered.is_empty() {
        (0.0, 0)
    } else {
        (gathered.iter().map(|&c| c as f64).sum::<f64>() / gathered.len() as f64, gathered.len())
    }
}

/// `ln p(y)` for `f ~ N(mean·1, K)` and `y_i ~ Poisson(exp f_i)` (n = 3), by
/// tensor Gauss–Hermite with `nodes` per dimension on the Gaussian fitted at
/// the posterior mode.
pub fn log_marginal_3d(y: [u32; 3], mean: f64, k: &nalgebra::Matrix3<f64>, nodes: usize) -> f64 {
    use nalgebra::{Matrix3, Vector3};
    let kinv = k.try_inverse().expect("invertible");
    let yv = Vector3::new(y[0] as f64, y[1] as f64, y[2] as f64);
    let mu = Vector3::from_element(mean);
    let log_joint = |f: &Vector3<f64>| -> f64 {
        let d = f - mu;
        let mut v = -0.5 * (d.transpose() * kinv * d)[(0, 0)];
        for i in 0..3 {
            v += yv[i] * f[i] - f[i].exp() - (1..=y[i]).map(|c| (c as f64).ln()).sum::<f64>();
        }
        v
    };
    // Newton for the mode.
    let mut f = mu;
    for _ in 0..200 {
        let e = f.map(f64::exp);
        let g = yv - e - kinv * (f - mu);
        let h = kinv + Matrix3::from_diagonal(&e);
        let step = h.cholesky().expect("concave").solve(&g);
        f += step;
        if step.amax() < 1e-14 {
            break;
        }
    }
    let h = kinv + Matrix3::from_diagonal(&f.map(f64::exp));
    let cov = h.try_inverse().expect("invertible");
    let l = cov.cholesky().expect("positive definite").l();
    let (x, w) = gauss_hermite(nodes);
    let s2 = std::f64::consts::SQRT_2;
    let norm_k = -0.5 * (3.0 * (2.0 * std::f64::consts::PI).ln() + k.determinant().ln());
    // With f = f̂ + √2 L z, ∫ g df = 2^{3/2} |L| ∫ g e^{z·z} e^{-z·z} dz.
    let log_jac = 1.5 * 2f64.ln() + l.determinant().ln();
    let mut terms = Vec::with_capacity(nodes * nodes * nodes);
    for a in 0..nodes {
        for b in 0..nodes {
            for c in 0..nodes {
                let z = Vector3::new(x[a], x[b], x[c]);
                let fz = f + l * (s2 * z);
                terms.push((w[a] * w[b] * w[c]).ln() + z.norm_squared() + log_jac + norm_k + log_joint(&fz));
            }
        }
    }
    let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
}

/// `KL[N(m1, S1) || N(m0, S0)]` from explicit inverse, trace and determinants.
pub fn dense_kl(m1: &nalgebra::DVector<f64>, s1: &nalgebra::DMatrix<f64>, m0: &nalgebra::DVector<f64>, s0: &nalgebra::DMatrix<f64>) -> f64 {
    let inv = s0.clone().try_inverse().expect("invertible");
    let d = m0 - m1;
    let k = m1.len() as f64;
    0.5 * ((&inv * s1).trace() + (d.transpose() * &inv * &d)[(0, 0)] - k + s0.determinant().ln() - s1.determinant().ln())
}
