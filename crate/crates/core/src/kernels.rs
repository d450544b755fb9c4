//! Covariance functions over `(x km, y km, t hours)`.
//!
//! Two leaf kernels, both linear in their variance:
//!
//! * periodic in time: `θ · exp(-sin²(π (t - t') / T) / (2 l²))`
//! * RBF in space: `σ² · exp(-|s - s'|² / l²)`
//!
//! Note the RBF denominator is `l²`, not the more common `2 l²`.
//!
//! Leaves combine through `Sum` and `Product` nodes. Leaf order everywhere
//! (variances, gradients, trainable parameters) is depth-first, left to right.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

/// Fixed temporal period, hours.
pub const DEFAULT_PERIOD: f64 = 24.0;
/// Fixed temporal lengthscale, hours.
pub const DEFAULT_TIME_LENGTHSCALE: f64 = 8.0;
/// Fixed spatial lengthscale, km.
pub const DEFAULT_SPACE_LENGTHSCALE: f64 = 10.0;
/// Relative jitter: `1e-6 × mean(diag)`.
pub const DEFAULT_RELATIVE_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub variance: f64,
    pub lengthscale: f64,
    /// Period in hours; temporal leaves only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default = "yes")]
    pub trainable_variance: bool,
}

fn yes() -> bool {
    true
}

impl KernelParams {
    pub fn periodic(variance: f64, lengthscale: f64, period: f64) -> Self {
        KernelParams {
            variance,
            lengthscale,
            period: Some(period),
            trainable_variance: true,
        }
    }

    pub fn rbf(variance: f64, lengthscale: f64) -> Self {
        KernelParams {
            variance,
            lengthscale,
            period: None,
            trainable_variance: true,
        }
    }

    pub fn fixed(mut self) -> Self {
        self.trainable_variance = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelExpr {
    /// Reads `t` only.
    PeriodicTime(KernelParams),
    /// Reads `(x, y)` only.
    RbfSpace(KernelParams),
    Sum { terms: Vec<KernelExpr> },
    Product { factors: Vec<KernelExpr> },
}

#[inline]
fn periodic_unit(dt: f64, lengthscale: f64, period: f64) -> f64 {
    let s = (std::f64::consts::PI * dt / period).sin();
    (-(s * s) / (2.0 * lengthscale * lengthscale)).exp()
}

#[inline]
fn rbf_unit(dx: f64, dy: f64, lengthscale: f64) -> f64 {
    (-(dx * dx + dy * dy) / (lengthscale * lengthscale)).exp()
}

/// Elementwise algebra shared by scalar, vector and matrix evaluation.
trait Elementwise: Clone {
    fn add_assign(&mut self, other: &Self);
    fn mul_assign(&mut self, other: &Self);
    fn scaled(&self, c: f64) -> Self;
}

impl Elementwise for f64 {
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn mul_assign(&mut self, other: &Self) {
        *self *= other;
    }
    fn scaled(&self, c: f64) -> Self {
        self * c
    }
}

impl Elementwise for DMatrix<f64> {
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn mul_assign(&mut self, other: &Self) {
        self.component_mul_assign(other);
    }
    fn scaled(&self, c: f64) -> Self {
        self * c
    }
}

impl Elementwise for DVector<f64> {
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn mul_assign(&mut self, other: &Self) {
        self.component_mul_assign(other);
    }
    fn scaled(&self, c: f64) -> Self {
        self * c
    }
}

impl KernelExpr {
    /// `k_tm + k_sm + k_ti · k_si` with four untied parameter sets.
    pub fn composed(time_marginal: KernelParams, space_marginal: KernelParams, time_interaction: KernelParams, space_interaction: KernelParams) -> Self {
        KernelExpr::Sum {
            terms: vec![
                KernelExpr::PeriodicTime(time_marginal),
                KernelExpr::RbfSpace(space_marginal),
                KernelExpr::Product {
                    factors: vec![
                        KernelExpr::PeriodicTime(time_interaction),
                        KernelExpr::RbfSpace(space_interaction),
                    ],
                },
            ],
        }
    }

    /// The composed kernel with unit variances and the fixed lengthscales and period.
    pub fn default_composed() -> Self {
        let t = KernelParams::periodic(1.0, DEFAULT_TIME_LENGTHSCALE, DEFAULT_PERIOD);
        let s = KernelParams::rbf(1.0, DEFAULT_SPACE_LENGTHSCALE);
        KernelExpr::composed(t, s, t, s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelExpr::PeriodicTime(p) => {
                let period = p.period.unwrap_or(f64::NAN);
                if !(p.variance > 0.0 && p.lengthscale > 0.0 && period > 0.0) || !(p.variance.is_finite() && p.lengthscale.is_finite() && period.is_finite()) {
                    return Err(Error::InvalidConfig(format!("invalid periodic kernel parameters {p:?}")));
                }
                Ok(())
            }
            KernelExpr::RbfSpace(p) => {
                if !(p.variance > 0.0 && p.lengthscale > 0.0) || !(p.variance.is_finite() && p.lengthscale.is_finite()) {
                    return Err(Error::InvalidConfig(format!("invalid RBF kernel parameters {p:?}")));
                }
                Ok(())
            }
            KernelExpr::Sum { terms: children } | KernelExpr::Product { factors: children } => {
                if children.is_empty() {
                    return Err(Error::InvalidConfig("empty sum/product kernel node".into()));
                }
                children.iter().try_for_each(KernelExpr::validate)
            }
        }
    }

    pub fn leaves(&self) -> Vec<&KernelParams> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |p, _| out.push(p));
        out
    }

    fn visit_leaves<'a>(&'a self, f: &mut impl FnMut(&'a KernelParams, bool)) {
        match self {
            KernelExpr::PeriodicTime(p) => f(p, true),
            KernelExpr::RbfSpace(p) => f(p, false),
            KernelExpr::Sum { terms: c } | KernelExpr::Product { factors: c } => c.iter().for_each(|k| k.visit_leaves(f)),
        }
    }

    fn leaves_mut(&mut self) -> Vec<&mut KernelParams> {
        fn walk<'a>(k: &'a mut KernelExpr, out: &mut Vec<&'a mut KernelParams>) {
            match k {
                KernelExpr::PeriodicTime(p) | KernelExpr::RbfSpace(p) => out.push(p),
                KernelExpr::Sum { terms: c } | KernelExpr::Product { factors: c } => c.iter_mut().for_each(|k| walk(k, out)),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.leaves().iter().map(|p| p.variance).collect()
    }

    /// Overwrites every leaf variance (depth-first order).
    pub fn set_variances(&mut self, variances: &[f64]) {
        let mut leaves = self.leaves_mut();
        assert_eq!(leaves.len(), variances.len(), "one variance per leaf");
        for (p, &v) in leaves.iter_mut().zip(variances) {
            p.variance = v;
        }
    }

    /// Leaf indices whose variance is trainable, in depth-first order.
    pub fn trainable_leaves(&self) -> Vec<usize> {
        self.leaves()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.trainable_variance)
            .map(|(i, _)| i)
            .collect()
    }

    /// Distinct periods of the temporal leaves.
    pub fn periods(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        self.visit_leaves(&mut |p, is_time| {
            if let (true, Some(period)) = (is_time, p.period) {
                if !out.contains(&period) {
                    out.push(period);
                }
            }
        });
        out
    }

    /// Two points with equal keys have identical kernel rows: the spatial
    /// coordinates match and `t` agrees modulo every period in the tree.
    pub fn equivalence_key(&self, p: &Point) -> Vec<u64> {
        let mut key = vec![p.x.to_bits(), p.y.to_bits()];
        key.extend(self.periods().iter().map(|&period| p.t.rem_euclid(period).to_bits()));
        key
    }

    /// Total variance at zero lag.
    pub fn zero_lag(&self) -> f64 {
        let ones = vec![1.0; self.num_leaves()];
        self.combine(&ones, &self.variances(), &mut 0)
    }

    fn combine<F: Elementwise>(&self, unit: &[F], variances: &[f64], cursor: &mut usize) -> F {
        match self {
            KernelExpr::PeriodicTime(_) | KernelExpr::RbfSpace(_) => {
                let i = *cursor;
                *cursor += 1;
                unit[i].scaled(variances[i])
            }
            KernelExpr::Sum { terms } => {
                let mut acc = terms[0].combine(unit, variances, cursor);
                for t in &terms[1..] {
                    acc.add_assign(&t.combine(unit, variances, cursor));
                }
                acc
            }
            KernelExpr::Product { factors } => {
                let mut acc = factors[0].combine(unit, variances, cursor);
                for f in &factors[1..] {
                    acc.mul_assign(&f.combine(unit, variances, cursor));
                }
                acc
            }
        }
    }

    /// Value plus the derivative with respect to every leaf variance in the subtree.
    fn combine_with_grad<F: Elementwise>(&self, unit: &[F], variances: &[f64], cursor: &mut usize) -> (F, Vec<(usize, F)>) {
        match self {
            KernelExpr::PeriodicTime(_) | KernelExpr::RbfSpace(_) => {
                let i = *cursor;
                *cursor += 1;
                (unit[i].scaled(variances[i]), vec![(i, unit[i].clone())])
            }
            KernelExpr::Sum { terms } => {
                let (mut acc, mut grads) = terms[0].combine_with_grad(unit, variances, cursor);
                for t in &terms[1..] {
                    let (v, g) = t.combine_with_grad(unit, variances, cursor);
                    acc.add_assign(&v);
                    grads.extend(g);
                }
                (acc, grads)
            }
            KernelExpr::Product { factors } => {
                let parts: Vec<(F, Vec<(usize, F)>)> = factors.iter().map(|f| f.combine_with_grad(unit, variances, cursor)).collect();
                let mut grads = Vec::new();
                for (a, (_, ga)) in parts.iter().enumerate() {
                    for (leaf, d) in ga {
                        let mut d = d.clone();
                        for (b, (vb, _)) in parts.iter().enumerate() {
                            if a != b {
                                d.mul_assign(vb);
                            }
                        }
                        grads.push((*leaf, d));
                    }
                }
                let mut acc = parts[0].0.clone();
                for (v, _) in &parts[1..] {
                    acc.mul_assign(v);
                }
                (acc, grads)
            }
        }
    }

    pub fn eval_pair(&self, a: &Point, b: &Point) -> Result<f64> {
        check_finite(a)?;
        check_finite(b)?;
        Ok(self.pair_value(a, b))
    }

    fn pair_value(&self, a: &Point, b: &Point) -> f64 {
        match self {
            KernelExpr::PeriodicTime(p) => p.variance * periodic_unit(a.t - b.t, p.lengthscale, p.period.unwrap_or(DEFAULT_PERIOD)),
            KernelExpr::RbfSpace(p) => p.variance * rbf_unit(a.x - b.x, a.y - b.y, p.lengthscale),
            KernelExpr::Sum { terms } => terms.iter().map(|k| k.pair_value(a, b)).sum(),
            KernelExpr::Product { factors } => factors.iter().map(|k| k.pair_value(a, b)).product(),
        }
    }

    /// Unit-variance matrices of every leaf for the point sets `a × b`.
    pub fn leaf_matrices(&self, a: &[Point], b: &[Point]) -> Result<Vec<DMatrix<f64>>> {
        a.iter().chain(b).try_for_each(check_finite)?;
        let mut out = Vec::new();
        self.visit_leaves(&mut |p, is_time| {
            let m = if is_time {
                let period = p.period.unwrap_or(DEFAULT_PERIOD);
                DMatrix::from_fn(a.len(), b.len(), |i, j| periodic_unit(a[i].t - b[j].t, p.lengthscale, period))
            } else {
                DMatrix::from_fn(a.len(), b.len(), |i, j| rbf_unit(a[i].x - b[j].x, a[i].y - b[j].y, p.lengthscale))
            };
            out.push(m);
        });
        Ok(out)
    }

    /// Assembles the kernel matrix from precomputed [`leaf_matrices`](Self::leaf_matrices).
    pub fn assemble(&self, unit: &[DMatrix<f64>], variances: &[f64]) -> DMatrix<f64> {
        self.combine(unit, variances, &mut 0)
    }

    /// Kernel matrix plus `∂K/∂θ` for every leaf variance (depth-first order).
    pub fn assemble_with_grad(&self, unit: &[DMatrix<f64>], variances: &[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let (k, grads) = self.combine_with_grad(unit, variances, &mut 0);
        (k, sort_grads(grads, variances.len()))
    }

    pub fn eval_matrix(&self, a: &[Point], b: &[Point]) -> Result<DMatrix<f64>> {
        Ok(self.assemble(&self.leaf_matrices(a, b)?, &self.variances()))
    }

    pub fn eval_diag(&self, a: &[Point]) -> Result<DVector<f64>> {
        a.iter().try_for_each(check_finite)?;
        Ok(DVector::from_iterator(a.len(), a.iter().map(|p| self.pair_value(p, p))))
    }

    /// Unit-variance leaf diagonals (each is all ones for these stationary leaves).
    pub fn leaf_diagonals(&self, n: usize) -> Vec<DVector<f64>> {
        vec![DVector::from_element(n, 1.0); self.num_leaves()]
    }

    /// Diagonal plus its derivative per leaf variance.
    pub fn assemble_diag_with_grad(&self, unit: &[DVector<f64>], variances: &[f64]) -> (DVector<f64>, Vec<DVector<f64>>) {
        let (d, grads) = self.combine_with_grad(unit, variances, &mut 0);
        (d, sort_grads(grads, variances.len()))
    }

    /// `∂K/∂θ` for each trainable leaf variance, depth-first order.
    pub fn grad_variances(&self, a: &[Point], b: &[Point]) -> Result<Vec<DMatrix<f64>>> {
        let trainable = self.trainable_leaves();
        if trainable.is_empty() {
            return Err(Error::InvalidConfig("kernel has no trainable variance".into()));
        }
        let (_, mut grads) = self.assemble_with_grad(&self.leaf_matrices(a, b)?, &self.variances());
        Ok(trainable.into_iter().map(|i| std::mem::replace(&mut grads[i], DMatrix::zeros(0, 0))).collect())
    }
}

fn sort_grads<F: Elementwise>(grads: Vec<(usize, F)>, n: usize) -> Vec<F> {
    let mut slots: Vec<Option<F>> = vec![None; n];
    for (i, g) in grads {
        slots[i] = Some(g);
    }
    slots.into_iter().map(|g| g.expect("every leaf visited")).collect()
}

fn check_finite(p: &Point) -> Result<()> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(format!("kernel input {p:?}")))
    }
}

/// `M + jitter · I`.
pub fn add_jitter(m: &DMatrix<f64>, jitter: f64) -> DMatrix<f64> {
    assert!(m.is_square(), "jitter needs a square matrix");
    let mut out = m.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += jitter;
    }
    out
}

/// `rel × mean(diag(M))`.
pub fn relative_jitter(m: &DMatrix<f64>, rel: f64) -> f64 {
    if m.nrows() == 0 {
        return rel;
    }
    rel * m.diagonal().mean()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
        (0..n)
            .map(|_| Point::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(0.0..500.0)))
            .collect()
    }

    #[test]
    fn hand_values() {
        let k = KernelExpr::PeriodicTime(KernelParams::periodic(1.0, 8.0, 24.0));
        let v = k.eval_pair(&Point::new(0.0, 0.0, 12.0), &Point::new(0.0, 0.0, 0.0)).unwrap();
        assert!((v - (-1.0f64 / 128.0).exp()).abs() < 1e-12);
        assert!((v - 0.9922179).abs() < 1e-7);

        let k = KernelExpr::RbfSpace(KernelParams::rbf(1.0, 10.0));
        let v = k.eval_pair(&Point::new(3.0, 4.0, 0.0), &Point::new(0.0, 0.0, 7.0)).unwrap();
        assert!((v - (-0.25f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn periodic_zero_lag_and_period() {
        let k = KernelExpr::PeriodicTime(KernelParams::periodic(1.0, 8.0, 24.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let t = rng.random_range(-1e3..1e3);
            let p = Point::new(0.0, 0.0, t);
            assert_eq!(k.eval_pair(&p, &p).unwrap(), 1.0);
            let q = Point::new(0.0, 0.0, t + 24.0);
            assert!((k.eval_pair(&p, &q).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let k = KernelExpr::default_composed();
        let bad = Point::new(f64::NAN, 0.0, 0.0);
        assert!(matches!(k.eval_pair(&bad, &bad), Err(Error::NonFiniteInput(_))));
        assert!(k.eval_matrix(&[bad], &[Point::new(0.0, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn single_point_matrix_is_zero_lag() {
        let mut k = KernelExpr::default_composed();
        k.set_variances(&[2.0, 3.0, 0.5, 4.0]);
        let p = [Point::new(1.0, 2.0, 3.0)];
        let m = k.eval_matrix(&p, &p).unwrap();
        assert_eq!(m.shape(), (1, 1));
        assert!((m[(0, 0)] - (2.0 + 3.0 + 0.5 * 4.0)).abs() < 1e-12);
        assert_eq!(k.zero_lag(), 2.0 + 3.0 + 2.0);
    }

    #[test]
    fn matrix_matches_pairwise_and_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut k = KernelExpr::default_composed();
        k.set_variances(&[1.3, 0.7, 2.1, 0.4]);
        let a = random_points(&mut rng, 20);
        let m = k.eval_matrix(&a, &a).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                assert!((m[(i, j)] - k.eval_pair(&a[i], &a[j]).unwrap()).abs() < 1e-12);
            }
        }
        let leaf = |e: KernelExpr| e.eval_matrix(&a, &a).unwrap();
        let l = k.leaves();
        let composed = leaf(KernelExpr::PeriodicTime(*l[0])) + leaf(KernelExpr::RbfSpace(*l[1])) + leaf(KernelExpr::PeriodicTime(*l[2])).component_mul(&leaf(KernelExpr::RbfSpace(*l[3])));
        assert!((composed - &m).amax() < 1e-12);
    }

    #[test]
    fn diag_matches_matrix_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut k = KernelExpr::default_composed();
        k.set_variances(&[1.5, 0.5, 2.0, 3.0]);
        let a = random_points(&mut rng, 15);
        let d = k.eval_diag(&a).unwrap();
        let m = k.eval_matrix(&a, &a).unwrap();
        assert_eq!(d, m.diagonal());
        assert!(d.iter().all(|&v| v == 1.5 + 0.5 + 2.0 * 3.0));
    }

    #[test]
    fn variance_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_points(&mut rng, 6);
        let b = random_points(&mut rng, 4);

        let single = KernelExpr::RbfSpace(KernelParams::rbf(2.5, 10.0));
        let g = single.grad_variances(&a, &b).unwrap();
        let k = single.eval_matrix(&a, &b).unwrap();
        assert!((&g[0] - &k / 2.5).amax() < 1e-14);

        let t = KernelParams::periodic(1.7, 8.0, 24.0);
        let s = KernelParams::rbf(0.6, 10.0);
        let prod = KernelExpr::Product { factors: vec![KernelExpr::PeriodicTime(t), KernelExpr::RbfSpace(s)] };
        let g = prod.grad_variances(&a, &b).unwrap();
        let kt = KernelExpr::PeriodicTime(t).eval_matrix(&a, &b).unwrap();
        let ks = KernelExpr::RbfSpace(s).eval_matrix(&a, &b).unwrap();
        assert!((&g[0] - (&kt / 1.7).component_mul(&ks)).amax() < 1e-14);
        assert!((&g[1] - kt.component_mul(&(&ks / 0.6))).amax() < 1e-14);
    }

    #[test]
    fn composed_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_points(&mut rng, 8);
        let b = random_points(&mut rng, 5);
        let mut k = KernelExpr::default_composed();
        let base = [1.2, 0.8, 1.9, 0.3];
        k.set_variances(&base);
        let g = k.grad_variances(&a, &b).unwrap();
        for p in 0..4 {
            let h = 1e-6 * base[p];
            let mut plus = base;
            plus[p] += h;
            let mut minus = base;
            minus[p] -= h;
            let mut kp = k.clone();
            kp.set_variances(&plus);
            let mut km = k.clone();
            km.set_variances(&minus);
            let fd = (kp.eval_matrix(&a, &b).unwrap() - km.eval_matrix(&a, &b).unwrap()) / (2.0 * h);
            let scale = g[p].amax().max(1e-300);
            assert!((&fd - &g[p]).amax() / scale < 1e-6, "leaf {p}");
        }
    }

    #[test]
    fn trainable_order_and_fixed_leaves() {
        let t = KernelParams::periodic(1.0, 8.0, 24.0);
        let s = KernelParams::rbf(1.0, 10.0);
        let k = KernelExpr::composed(t, s.fixed(), t, s);
        assert_eq!(k.trainable_leaves(), vec![0, 2, 3]);
        let a = [Point::new(0.0, 0.0, 0.0)];
        assert_eq!(k.grad_variances(&a, &a).unwrap().len(), 3);
        let none = KernelExpr::RbfSpace(s.fixed());
        assert!(none.grad_variances(&a, &a).is_err());
    }

    #[test]
    fn jitter() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(add_jitter(&m, 0.0), m);
        assert_eq!(add_jitter(&DMatrix::zeros(3, 3), 1e-6), DMatrix::identity(3, 3) * 1e-6);

        let k = KernelExpr::default_composed();
        let p = Point::new(1.0, 1.0, 5.0);
        let dup = [p, p, p, Point::new(2.0, 1.0, 7.0)];
        let m = k.eval_matrix(&dup, &dup).unwrap();
        assert!(m.clone().cholesky().is_none() || m.clone().cholesky().unwrap().l().diagonal().min() < 1e-6);
        let j = relative_jitter(&m, DEFAULT_RELATIVE_JITTER);
        assert!(add_jitter(&m, j).cholesky().is_some());
    }

    #[test]
    fn equivalence_key_respects_period() {
        let k = KernelExpr::default_composed();
        let a = Point::new(1.0, 2.0, 2.0);
        let b = Point::new(1.0, 2.0, 2.0 + 24.0 * 40.0);
        let c = Point::new(1.0, 2.0, 6.0);
        assert_eq!(k.equivalence_key(&a), k.equivalence_key(&b));
        assert_ne!(k.equivalence_key(&a), k.equivalence_key(&c));
        let z = [Point::new(0.0, 0.0, 1.0)];
        let ka = k.eval_matrix(&[a], &z).unwrap()[(0, 0)];
        let kb = k.eval_matrix(&[b], &z).unwrap()[(0, 0)];
        assert!((ka - kb).abs() < 1e-12);
    }

    #[test]
    fn serde_round_trip() {
        let k = KernelExpr::default_composed();
        let json = serde_json::to_string(&k).unwrap();
        let back: KernelExpr = serde_json::from_str(&json).unwrap();
        assert_eq!(k, back);
    }
}
