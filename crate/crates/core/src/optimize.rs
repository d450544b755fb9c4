//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The objective returns `(value, gradient)`. A non-finite value inside the
//! line search shrinks the step instead of aborting, so callers may return
//! `NaN` for infeasible points (e.g. a failed Cholesky factorization).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objective magnitude treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e300;
/// Function evaluations allowed per line search.
pub const MAX_LINE_SEARCH_TRIALS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Infinity-norm gradient tolerance.
    pub grad_tol: f64,
    /// Relative objective-change tolerance.
    pub f_tol: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    /// Number of stored curvature pairs.
    pub memory: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 500,
            grad_tol: 1e-5,
            f_tol: 1e-9,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            memory: 20,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < c1 < c2 < 1, got c1={} c2={}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if self.memory == 0 || !(self.grad_tol > 0.0) || !(self.f_tol >= 0.0) {
            return Err(Error::InvalidConfig("optimizer memory and tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptStatus {
    Converged,
    MaxIters,
    LineSearchFailure,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub x_final: Vec<f64>,
    pub f_final: f64,
    /// Infinity norm of the final gradient.
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: OptStatus,
    /// Objective after every accepted step, starting with `f(x0)`.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: `-H g`.
fn lbfgs_direction(g: &[f64], history: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for p in history.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        q.iter_mut().zip(&p.y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (p, a) in history.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        q.iter_mut().zip(&p.s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[derive(Clone)]
struct Probe {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

struct LineSearch<'a, F> {
    objective: &'a mut F,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    trials: usize,
    /// Lowest point meeting the sufficient-decrease condition.
    best: Option<Probe>,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> LineSearch<'_, F> {
    fn probe(&mut self, alpha: f64) -> Option<Probe> {
        if self.trials >= MAX_LINE_SEARCH_TRIALS {
            return None;
        }
        self.trials += 1;
        let (f, g) = (self.objective)(&axpy(self.x, alpha, self.d));
        let slope = if f.is_finite() && g.iter().all(|v| v.is_finite()) {
            dot(&g, self.d)
        } else {
            f64::NAN
        };
        let p = Probe { alpha, f, g, slope };
        if self.armijo(&p) && self.best.as_ref().is_none_or(|b| p.f < b.f) {
            self.best = Some(p.clone());
        }
        Some(p)
    }

    fn armijo(&self, p: &Probe) -> bool {
        p.slope.is_finite() && p.f <= self.f0 + self.c1 * p.alpha * self.slope0 && p.f < self.f0
    }

    fn curvature(&self, p: &Probe) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    fn search(&mut self, alpha0: f64) -> Option<Probe> {
        let mut prev = Probe {
            alpha: 0.0,
            f: self.f0,
            g: Vec::new(),
            slope: self.slope0,
        };
        let mut alpha = alpha0;
        let mut first = true;
        loop {
            let p = self.probe(alpha)?;
            if !p.slope.is_finite() {
                alpha = prev.alpha + 0.5 * (alpha - prev.alpha);
                continue;
            }
            if !self.armijo(&p) || (!first && p.f >= prev.f) {
                return self.zoom(prev, p);
            }
            if self.curvature(&p) {
                return Some(p);
            }
            if p.slope >= 0.0 {
                return self.zoom(p, prev);
            }
            first = false;
            prev = p;
            alpha *= 2.0;
        }
    }

    fn zoom(&mut self, mut lo: Probe, mut hi: Probe) -> Option<Probe> {
        loop {
            let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
            let width = b - a;
            if width <= f64::EPSILON * b.max(1e-300) {
                return None;
            }
            let mut alpha = f64::NAN;
            if hi.slope.is_finite() && hi.f.is_finite() {
                // cubic through both ends
                let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (lo.alpha - hi.alpha);
                let disc = d1 * d1 - lo.slope * hi.slope;
                if disc >= 0.0 {
                    let d2 = (hi.alpha - lo.alpha).signum() * disc.sqrt();
                    alpha = hi.alpha - (hi.alpha - lo.alpha) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
                }
            }
            if !(alpha.is_finite() && alpha >= a + 0.1 * width && alpha <= b - 0.1 * width) {
                alpha = 0.5 * (lo.alpha + hi.alpha);
            }
            let p = self.probe(alpha)?;
            if !p.slope.is_finite() || !self.armijo(&p) || p.f >= lo.f {
                hi = p;
                continue;
            }
            if self.curvature(&p) {
                return Some(p);
            }
            if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
}

/// Minimizes `objective` from `x0`.
pub fn minimize<F>(mut objective: F, x0: &[f64], cfg: &OptimizerConfig) -> Result<OptResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    cfg.validate()?;
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective(&x);
    let mut evaluations = 1;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) || g.len() != x.len() {
        return Err(Error::NonFiniteInput(format!("objective at x0 is {f}")));
    }
    let mut trace = vec![f];
    let mut history: VecDeque<Pair> = VecDeque::with_capacity(cfg.memory);
    let mut status = OptStatus::MaxIters;
    let mut iterations = 0;

    if f.abs() > DIVERGENCE_THRESHOLD {
        status = OptStatus::Diverged;
    }
    while status == OptStatus::MaxIters && iterations < cfg.max_iters {
        if inf_norm(&g) <= cfg.grad_tol {
            status = OptStatus::Converged;
            break;
        }
        let mut d = lbfgs_direction(&g, &history);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let alpha0 = if history.is_empty() {
            (1.0 / dot(&g, &g).sqrt()).min(1.0)
        } else {
            1.0
        };
        let (step, used) = {
            let mut ls = LineSearch {
                objective: &mut objective,
                x: &x,
                d: &d,
                f0: f,
                slope0: slope,
                c1: cfg.wolfe_c1,
                c2: cfg.wolfe_c2,
                trials: 0,
                best: None,
            };
            let found = ls.search(alpha0).or_else(|| ls.best.take());
            (found, ls.trials)
        };
        evaluations += used;
        let Some(step) = step else {
            if history.is_empty() {
                status = OptStatus::LineSearchFailure;
                break;
            }
            log::debug!("line search failed at iteration {iterations}; resetting curvature history");
            history.clear();
            continue;
        };

        let s: Vec<f64> = d.iter().map(|v| step.alpha * v).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back(Pair { s, y, rho: 1.0 / sy });
        }
        x = axpy(&x, step.alpha, &d);
        let f_prev = f;
        f = step.f;
        g = step.g;
        trace.push(f);
        iterations += 1;

        if f.abs() > DIVERGENCE_THRESHOLD {
            status = OptStatus::Diverged;
        } else if inf_norm(&g) <= cfg.grad_tol || (f_prev - f) <= cfg.f_tol * f_prev.abs().max(f.abs()).max(1.0) {
            status = OptStatus::Converged;
        }
    }

    Ok(OptResult {
        grad_norm: inf_norm(&g),
        x_final: x,
        f_final: f,
        iterations,
        status,
        trace,
        evaluations,
    })
}

/// Central differences, one coordinate at a time.
pub fn finite_diff_grad<F: FnMut(&[f64]) -> f64>(mut objective_value: F, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = objective_value(&probe);
            probe[i] = x[i] - h;
            let down = objective_value(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
