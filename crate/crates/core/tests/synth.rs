use stgp::data::SpatialExtent;
use stgp::metrics::{poisson_loglik, ConstantSurface, EvalConfig};
use stgp::synth::{sample_events, true_loglik, Bump, IntensitySpec};

fn flat(log_base: f64, seed: u64) -> IntensitySpec {
    IntensitySpec {
        log_base,
        diurnal_amplitude: 0.0,
        phase: 0.0,
        bumps: vec![],
        extent: SpatialExtent::new(0.0, 2.0, 0.0, 2.0).unwrap(),
        t_start: 0.0,
        t_end: 5.0,
        seed,
    }
}

#[test]
fn total_count_has_poisson_moments() {
    // Λ = e^1 · 4 · 5 ≈ 54.4 events per replicate.
    let lambda = 1f64.exp() * 20.0;
    let n = 400;
    let counts: Vec<f64> = (0..n).map(|s| sample_events(&flat(1.0, s)).unwrap().len() as f64).collect();
    let mean = counts.iter().sum::<f64>() / n as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // Standard error of the mean is sqrt(Λ/n) ≈ 0.37.
    assert!((mean - lambda).abs() < 4.0 * (lambda / n as f64).sqrt(), "mean {mean} vs {lambda}");
    assert!((var / lambda - 1.0).abs() < 0.3, "variance {var} vs {lambda}");
}

#[test]
fn counts_scale_with_the_base_rate() {
    let low = flat(0.0, 0);
    let high = IntensitySpec {
        log_base: 3f64.ln(),
        ..flat(0.0, 0)
    };
    let (mut a, mut b) = (0usize, 0usize);
    for s in 0..200 {
        a += sample_events(&IntensitySpec { seed: s, ..low.clone() }).unwrap().len();
        b += sample_events(&IntensitySpec { seed: 10_000 + s, ..high.clone() }).unwrap().len();
    }
    // a ≈ 4000, b ≈ 12000; sd of the log-ratio is sqrt(1/a + 1/b).
    let ratio = b as f64 / a as f64;
    assert!((ratio.ln() - 3f64.ln()).abs() < 4.0 * (1.0 / a as f64 + 1.0 / b as f64).sqrt(), "ratio {ratio}");
}

#[test]
fn events_concentrate_where_the_intensity_is_high() {
    // Peak of the diurnal cycle (t ≈ 6 h) against its trough (t ≈ 18 h).
    let spec = IntensitySpec {
        diurnal_amplitude: 0.8,
        t_end: 24.0,
        ..flat(0.5, 0)
    };
    let (mut peak, mut trough) = (0usize, 0usize);
    for s in 0..100 {
        for p in sample_events(&IntensitySpec { seed: s, ..spec.clone() }).unwrap() {
            if (3.0..9.0).contains(&p.t) {
                peak += 1;
            } else if (15.0..21.0).contains(&p.t) {
                trough += 1;
            }
        }
    }
    let want = midpoint_ratio(0.8);
    let ratio = peak as f64 / trough as f64;
    assert!((ratio.ln() - want.ln()).abs() < 4.0 * (1.0 / peak as f64 + 1.0 / trough as f64).sqrt(), "{ratio} vs {want}");
}

/// `∫_3^9 e^{b sin(πt/12)} dt / ∫_15^21 e^{b sin(πt/12)} dt` by the midpoint rule.
fn midpoint_ratio(b: f64) -> f64 {
    let int = |lo: f64| {
        let n = 20_000;
        let h = 6.0 / n as f64;
        (0..n).map(|k| (b * (std::f64::consts::PI * (lo + (k as f64 + 0.5) * h) / 12.0).sin()).exp() * h).sum::<f64>()
    };
    int(3.0) / int(15.0)
}

#[test]
fn truth_outscores_a_constant_rate_on_average() {
    let spec = |seed| IntensitySpec {
        log_base: -1.0,
        diurnal_amplitude: 0.8,
        phase: 0.3,
        bumps: vec![Bump {
            center_x: 0.5,
            center_y: 1.5,
            width: 0.6,
            height: 1.2,
        }],
        extent: SpatialExtent::new(0.0, 2.0, 0.0, 2.0).unwrap(),
        t_start: 0.0,
        t_end: 48.0,
        seed,
    };
    let cfg = EvalConfig::default();
    let mut margin = 0.0;
    for s in 0..20 {
        let sp = spec(s);
        let events = sample_events(&sp).unwrap();
        let truth = true_loglik(&sp, &events, &cfg).unwrap();
        let mle = events.len() as f64 / sp.volume();
        let flat_score = poisson_loglik(&ConstantSurface(mle), &events, &sp.window(), &cfg).unwrap();
        margin += truth.total() - flat_score.total();
    }
    assert!(margin > 0.0, "truth should beat the homogeneous fit, margin {margin}");
}
