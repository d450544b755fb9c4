//! Sparse variational inference for the log-Gaussian Cox process.
//!
//! The latent `f` is a GP with constant mean `μ` and a composed kernel; each
//! training bin count is `Poisson(exp(f(x)))`, so `f` models the log expected
//! count per training bin. `q(u) = N(m_u, L_S L_Sᵀ)` over the values at fixed
//! inducing inputs `Z` and the prior is `p(u) = N(μ·1, K_zz + jitter·I)`.
//!
//! With the exponential link the Gaussian expectation of the Poisson
//! log-likelihood is analytic:
//!
//! `E[y f - exp f - log y!] = y m - exp(m + v/2) - log y!`
//!
//! so no quadrature is needed for the bound or its gradients.
//!
//! Training points whose kernel rows coincide (same cell, same phase modulo
//! every period in the kernel) have identical marginals `q(f_i)`; the data term
//! is accumulated per group, which is exact and keeps evaluation cost
//! independent of the training span.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::linalg::Cholesky;
use nalgebra::{DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BinnedCounts, LandMask, SpatioTemporalGrid};
use crate::error::{Error, Result};
use crate::kernels::{relative_jitter, KernelExpr, DEFAULT_RELATIVE_JITTER};
use crate::linalg::{cholesky_escalating, compensated_sum, log_det_from_factor, log_factorial};
use crate::optimize::{minimize, OptResult, OptStatus, OptimizerConfig};
use crate::Point;

/// Lower bound on the mean count used to initialize `μ`.
pub const MEAN_COUNT_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kernel: KernelExpr,
    pub num_inducing: usize,
    /// Initial constant mean; `None` uses `log(mean count)`.
    pub mean_const: Option<f64>,
    /// Jitter as a fraction of the mean diagonal of `K_zz`.
    pub relative_jitter: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kernel: KernelExpr::default_composed(),
            num_inducing: 180,
            mean_const: None,
            relative_jitter: DEFAULT_RELATIVE_JITTER,
            seed: 0,
        }
    }
}

/// Training inputs and their counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub points: Vec<Point>,
    pub counts: Vec<u32>,
}

impl TrainingData {
    pub fn new(points: Vec<Point>, counts: Vec<u32>) -> Result<Self> {
        if points.len() != counts.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} counts", points.len()),
                found: format!("{} counts", counts.len()),
            });
        }
        Ok(TrainingData { points, counts })
    }

    /// Every land bin of `binned`, located at its bin centre.
    pub fn from_binned(binned: &BinnedCounts, mask: Option<&LandMask>) -> Self {
        let (points, counts) = (0..binned.counts.len())
            .filter(|&b| mask.is_none_or(|m| m.is_land_bin(&binned.grid, b)))
            .map(|b| (binned.grid.bin_center(b), binned.counts[b]))
            .unzip();
        TrainingData { points, counts }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_count(&self) -> f64 {
        if self.counts.is_empty() {
            return 0.0;
        }
        self.counts.iter().map(|&c| f64::from(c)).sum::<f64>() / self.counts.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    /// Inducing inputs, fixed after initialization.
    pub inducing: Vec<Point>,
    pub m_u: DVector<f64>,
    /// Lower-triangular with positive diagonal; `S = L_S L_Sᵀ`.
    pub l_s: DMatrix<f64>,
    /// Kernel carrying the current variances.
    pub kernel: KernelExpr,
    pub mean_const: f64,
    /// Absolute jitter added to `K_zz`.
    pub jitter: f64,
}

impl VariationalState {
    pub fn num_inducing(&self) -> usize {
        self.inducing.len()
    }

    pub fn log_variances(&self) -> Vec<f64> {
        self.kernel.variances().iter().map(|v| v.ln()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.inducing.len();
        if self.m_u.len() != m || self.l_s.shape() != (m, m) {
            return Err(Error::ShapeMismatch {
                expected: format!("m_u[{m}], L_S[{m}x{m}]"),
                found: format!("m_u[{}], L_S{:?}", self.m_u.len(), self.l_s.shape()),
            });
        }
        for i in 0..m {
            if !(self.l_s[(i, i)] > 0.0) {
                return Err(Error::NonFiniteInput(format!("L_S diagonal {i} is {}", self.l_s[(i, i)])));
            }
            for j in i + 1..m {
                if self.l_s[(i, j)] != 0.0 {
                    return Err(Error::NonFiniteInput("L_S is not lower triangular".into()));
                }
            }
        }
        let finite = self.m_u.iter().chain(self.l_s.iter()).all(|v| v.is_finite()) && self.mean_const.is_finite();
        if !finite {
            return Err(Error::NonFiniteInput("variational state has non-finite entries".into()));
        }
        self.kernel.validate()
    }

    fn kzz_cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        let kzz = self.kernel.eval_matrix(&self.inducing, &self.inducing)?;
        crate::kernels::add_jitter(&kzz, self.jitter)
            .cholesky()
            .ok_or(Error::CholeskyFailure { jitter: self.jitter })
    }
}

/// Per-point marginals of `q(f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QfMarginals {
    pub means: DVector<f64>,
    pub vars: DVector<f64>,
    /// Variances that came out negative and were clamped to zero.
    pub clamped: usize,
}

/// Predicted intensity at a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct RateField {
    pub points: Vec<Point>,
    /// Events per km² per hour.
    pub rate: Vec<f64>,
    pub latent_mean: Vec<f64>,
    pub latent_var: Vec<f64>,
}

/// Samples inducing inputs without replacement from the kernel-distinct training inputs.
pub fn init_state(config: &ModelConfig, training: &TrainingData) -> Result<VariationalState> {
    config.kernel.validate()?;
    if config.num_inducing == 0 {
        return Err(Error::InvalidConfig("num_inducing must be positive".into()));
    }
    if !(config.relative_jitter >= 0.0) {
        return Err(Error::InvalidConfig("jitter must be non-negative".into()));
    }
    let candidates = Groups::build(&config.kernel, &training.points).representatives;
    if candidates.len() < config.num_inducing {
        return Err(Error::TooFewPoints {
            needed: config.num_inducing,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let picks = rand::seq::index::sample(&mut rng, candidates.len(), config.num_inducing);
    let inducing: Vec<Point> = picks.iter().map(|i| training.points[candidates[i]]).collect();

    let kzz = config.kernel.eval_matrix(&inducing, &inducing)?;
    let (_, jitter) = cholesky_escalating(&kzz, relative_jitter(&kzz, config.relative_jitter))?;
    let m = inducing.len();
    let mean_const = config
        .mean_const
        .unwrap_or_else(|| training.mean_count().max(MEAN_COUNT_FLOOR).ln());
    Ok(VariationalState {
        inducing,
        m_u: DVector::zeros(m),
        l_s: DMatrix::identity(m, m),
        kernel: config.kernel.clone(),
        mean_const,
        jitter,
    })
}

/// Indices grouped by kernel equivalence, in first-occurrence order.
struct Groups {
    representatives: Vec<usize>,
    membership: Vec<usize>,
}

impl Groups {
    fn build(kernel: &KernelExpr, points: &[Point]) -> Groups {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut representatives = Vec::new();
        let membership = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                *index.entry(kernel.equivalence_key(p)).or_insert_with(|| {
                    representatives.push(i);
                    representatives.len() - 1
                })
            })
            .collect();
        Groups {
            representatives,
            membership,
        }
    }
}

fn marginals_with(state: &VariationalState, chol: &Cholesky<f64, Dyn>, x: &[Point]) -> Result<QfMarginals> {
    let kzx = state.kernel.eval_matrix(&state.inducing, x)?;
    let kdiag = state.kernel.eval_diag(x)?;
    let at = chol.solve(&kzx);
    let delta = state.m_u.add_scalar(-state.mean_const);
    let alpha = chol.solve(&delta);
    let means = kzx.tr_mul(&alpha).add_scalar(state.mean_const);
    let proj = state.l_s.tr_mul(&at);
    let mut clamped = 0;
    let vars = DVector::from_fn(x.len(), |i, _| {
        let v = kdiag[i] - at.column(i).dot(&kzx.column(i)) + proj.column(i).norm_squared();
        if v < 0.0 {
            clamped += 1;
            0.0
        } else {
            v
        }
    });
    if clamped > 0 {
        log::warn!("{clamped} marginal variances clamped at zero");
    }
    Ok(QfMarginals { means, vars, clamped })
}

/// Marginal mean and variance of `q(f_i)` at every point of `x`.
pub fn qf_marginals(state: &VariationalState, x: &[Point]) -> Result<QfMarginals> {
    let chol = state.kzz_cholesky()?;
    marginals_with(state, &chol, x)
}

/// `E_{N(f; mean, var)}[log Poisson(y | exp f)]`.
pub fn expected_poisson_loglik(y: u64, mean: f64, var: f64) -> f64 {
    y as f64 * mean - (mean + 0.5 * var).exp() - log_factorial(y)
}

/// Derivatives of [`expected_poisson_loglik`] with respect to `(mean, var)`.
pub fn expected_poisson_loglik_grad(y: u64, mean: f64, var: f64) -> (f64, f64) {
    let e = (mean + 0.5 * var).exp();
    (y as f64 - e, -0.5 * e)
}

/// `KL[q(u) || p(u)]`.
pub fn kl_q_p(state: &VariationalState) -> Result<f64> {
    let chol = state.kzz_cholesky()?;
    Ok(kl_with(state, &chol))
}

fn kl_with(state: &VariationalState, chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l();
    let m = state.num_inducing() as f64;
    let c = l.solve_lower_triangular(&state.l_s).expect("cholesky factor is invertible");
    let delta = state.m_u.add_scalar(-state.mean_const);
    let alpha = chol.solve(&delta);
    0.5 * (c.norm_squared() + delta.dot(&alpha) - m + log_det_from_factor(&l) - log_det_from_factor(&state.l_s))
}

/// Gradient of the ELBO with respect to the natural state parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboGrad {
    pub m_u: DVector<f64>,
    /// With respect to the entries of `L_S` (lower triangle; upper is zero).
    pub l_s: DMatrix<f64>,
    /// With respect to the log-variance of each trainable leaf, depth-first.
    pub log_variances: Vec<f64>,
    pub mean_const: f64,
}

/// Evidence lower bound over all training points.
pub fn elbo(state: &VariationalState, training: &TrainingData) -> Result<f64> {
    Ok(Objective::new(state, training)?.evaluate(&Parts::from_state(state), false)?.0)
}

pub fn elbo_grad(state: &VariationalState, training: &TrainingData) -> Result<ElboGrad> {
    let (_, grad) = Objective::new(state, training)?.evaluate(&Parts::from_state(state), true)?;
    Ok(grad.expect("gradient requested"))
}

fn softplus(r: f64) -> f64 {
    r.max(0.0) + (-r.abs()).exp().ln_1p()
}

fn softplus_inv(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

fn sigmoid(r: f64) -> f64 {
    1.0 / (1.0 + (-r).exp())
}

/// Unpacked free parameters.
struct Parts {
    m_u: DVector<f64>,
    l_s: DMatrix<f64>,
    variances: Vec<f64>,
    mean_const: f64,
}

impl Parts {
    fn from_state(state: &VariationalState) -> Self {
        Parts {
            m_u: state.m_u.clone(),
            l_s: state.l_s.clone(),
            variances: state.kernel.variances(),
            mean_const: state.mean_const,
        }
    }
}

/// Negative-ELBO objective over a packed parameter vector.
///
/// Layout: `m_u` (m), the rows of `L_S`'s lower triangle with the diagonal
/// stored through a softplus, the log-variance of each trainable leaf, `μ`.
pub struct Objective {
    template: VariationalState,
    trainable: Vec<usize>,
    inputs: Vec<Point>,
    count_sum: DVector<f64>,
    multiplicity: DVector<f64>,
    log_fact_sum: f64,
    zz_unit: Vec<DMatrix<f64>>,
    zx_unit: Vec<DMatrix<f64>>,
    diag_unit: Vec<DVector<f64>>,
}

impl Objective {
    pub fn new(state: &VariationalState, training: &TrainingData) -> Result<Self> {
        state.validate()?;
        if training.is_empty() {
            return Err(Error::InsufficientHistory("no training bins".into()));
        }
        let groups = Groups::build(&state.kernel, &training.points);
        let g = groups.representatives.len();
        let mut count_sum = DVector::zeros(g);
        let mut multiplicity = DVector::zeros(g);
        for (&grp, &c) in groups.membership.iter().zip(&training.counts) {
            count_sum[grp] += f64::from(c);
            multiplicity[grp] += 1.0;
        }
        let log_fact_sum = compensated_sum(training.counts.iter().map(|&c| log_factorial(u64::from(c))));
        let inputs: Vec<Point> = groups.representatives.iter().map(|&i| training.points[i]).collect();
        let kernel = &state.kernel;
        Ok(Objective {
            trainable: kernel.trainable_leaves(),
            zz_unit: kernel.leaf_matrices(&state.inducing, &state.inducing)?,
            zx_unit: kernel.leaf_matrices(&state.inducing, &inputs)?,
            diag_unit: kernel.leaf_diagonals(inputs.len()),
            inputs,
            count_sum,
            multiplicity,
            log_fact_sum,
            template: state.clone(),
        })
    }

    /// Number of distinct kernel inputs after grouping.
    pub fn num_groups(&self) -> usize {
        self.inputs.len()
    }

    pub fn dim(&self) -> usize {
        let m = self.template.num_inducing();
        m + m * (m + 1) / 2 + self.trainable.len() + 1
    }

    pub fn pack(&self, state: &VariationalState) -> Vec<f64> {
        let m = state.num_inducing();
        let mut x = Vec::with_capacity(self.dim());
        x.extend(state.m_u.iter());
        for i in 0..m {
            for j in 0..i {
                x.push(state.l_s[(i, j)]);
            }
            x.push(softplus_inv(state.l_s[(i, i)]));
        }
        let variances = state.kernel.variances();
        x.extend(self.trainable.iter().map(|&leaf| variances[leaf].ln()));
        x.push(state.mean_const);
        x
    }

    fn unpack_parts(&self, x: &[f64]) -> Parts {
        let m = self.template.num_inducing();
        let m_u = DVector::from_column_slice(&x[..m]);
        let mut l_s = DMatrix::zeros(m, m);
        let mut pos = m;
        for i in 0..m {
            for j in 0..i {
                l_s[(i, j)] = x[pos];
                pos += 1;
            }
            l_s[(i, i)] = softplus(x[pos]);
            pos += 1;
        }
        let mut variances = self.template.kernel.variances();
        for &leaf in &self.trainable {
            variances[leaf] = x[pos].exp();
            pos += 1;
        }
        Parts {
            m_u,
            l_s,
            variances,
            mean_const: x[pos],
        }
    }

    pub fn unpack(&self, x: &[f64]) -> VariationalState {
        let parts = self.unpack_parts(x);
        let mut kernel = self.template.kernel.clone();
        kernel.set_variances(&parts.variances);
        VariationalState {
            inducing: self.template.inducing.clone(),
            m_u: parts.m_u,
            l_s: parts.l_s,
            kernel,
            mean_const: parts.mean_const,
            jitter: self.template.jitter,
        }
    }

    /// `(-ELBO, -∂ELBO/∂x)`; `NaN` when `K_zz` cannot be factorized.
    pub fn value_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let parts = self.unpack_parts(x);
        match self.evaluate(&parts, true) {
            Ok((elbo, Some(g))) => (-elbo, self.pack_grad(x, &parts, &g).into_iter().map(|v| -v).collect()),
            _ => (f64::NAN, vec![f64::NAN; x.len()]),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.evaluate(&self.unpack_parts(x), false).map_or(f64::NAN, |(e, _)| -e)
    }

    fn pack_grad(&self, x: &[f64], parts: &Parts, g: &ElboGrad) -> Vec<f64> {
        let m = parts.m_u.len();
        let mut out = Vec::with_capacity(x.len());
        out.extend(g.m_u.iter());
        let mut pos = m;
        for i in 0..m {
            for j in 0..i {
                out.push(g.l_s[(i, j)]);
                pos += 1;
            }
            out.push(g.l_s[(i, i)] * sigmoid(x[pos]));
            pos += 1;
        }
        out.extend(g.log_variances.iter());
        out.push(g.mean_const);
        out
    }

    fn evaluate(&self, p: &Parts, want_grad: bool) -> Result<(f64, Option<ElboGrad>)> {
        let kernel = &self.template.kernel;
        let m = p.m_u.len();
        let jitter = self.template.jitter;
        let (kzz, dkzz) = kernel.assemble_with_grad(&self.zz_unit, &p.variances);
        let (kzx, dkzx) = kernel.assemble_with_grad(&self.zx_unit, &p.variances);
        let (kdiag, dkdiag) = kernel.assemble_diag_with_grad(&self.diag_unit, &p.variances);
        let chol = crate::kernels::add_jitter(&kzz, jitter)
            .cholesky()
            .ok_or(Error::CholeskyFailure { jitter })?;
        let l = chol.l();

        let at = chol.solve(&kzx);
        let delta = p.m_u.add_scalar(-p.mean_const);
        let alpha = chol.solve(&delta);
        let means = kzx.tr_mul(&alpha).add_scalar(p.mean_const);
        let proj = p.l_s.tr_mul(&at);
        let n = self.inputs.len();
        let vars = DVector::from_fn(n, |i, _| kdiag[i] - at.column(i).dot(&kzx.column(i)) + proj.column(i).norm_squared());

        let expo = DVector::from_fn(n, |i, _| (means[i] + 0.5 * vars[i]).exp());
        let data = compensated_sum((0..n).map(|i| self.count_sum[i] * means[i] - self.multiplicity[i] * expo[i])) - self.log_fact_sum;

        let c = l.solve_lower_triangular(&p.l_s).expect("cholesky factor is invertible");
        let kl = 0.5 * (c.norm_squared() + delta.dot(&alpha) - m as f64 + log_det_from_factor(&l) - log_det_from_factor(&p.l_s));
        let elbo = data - kl;
        if !want_grad {
            return Ok((elbo, None));
        }

        let gm = DVector::from_fn(n, |i, _| self.count_sum[i] - self.multiplicity[i] * expo[i]);
        let gv = DVector::from_fn(n, |i, _| -0.5 * self.multiplicity[i] * expo[i]);

        let at_gm = &at * &gm;
        let g_mu = &at_gm - &alpha;
        let g_mean = gm.sum() - at_gm.sum() + alpha.sum();

        let mut at_d = at.clone();
        for (i, mut col) in at_d.column_iter_mut().enumerate() {
            col *= gv[i];
        }
        let big_m = &at_d * at.transpose();
        let kinv = chol.inverse();
        let s = &p.l_s * p.l_s.transpose();
        let b = &kinv * &s;

        let mut g_ls = 2.0 * &big_m * &p.l_s - &kinv * &p.l_s;
        for i in 0..m {
            g_ls[(i, i)] += 1.0 / p.l_s[(i, i)];
            for j in i + 1..m {
                g_ls[(i, j)] = 0.0;
            }
        }

        let mut b_minus_i = b.clone();
        for i in 0..m {
            b_minus_i[(i, i)] -= 1.0;
        }
        let g_zx = &alpha * gm.transpose() + 2.0 * &b_minus_i * &at_d;
        let g_k = -(&at_gm * alpha.transpose()) + &big_m - 2.0 * &big_m * b.transpose() - 0.5 * (&kinv - &b * &kinv - &alpha * alpha.transpose());

        let log_variances = self
            .trainable
            .iter()
            .map(|&leaf| {
                let dv = g_zx.dot(&dkzx[leaf]) + gv.dot(&dkdiag[leaf]) + g_k.dot(&dkzz[leaf]);
                dv * p.variances[leaf]
            })
            .collect();

        Ok((
            elbo,
            Some(ElboGrad {
                m_u: g_mu,
                l_s: g_ls,
                log_variances,
                mean_const: g_mean,
            }),
        ))
    }
}

/// A fitted state with its final bound and the optimizer record.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: VariationalState,
    pub final_elbo: f64,
    pub initial_elbo: f64,
    pub optimizer: OptResult,
}

/// Maximizes the ELBO over `m_u`, `L_S`, the trainable log-variances and `μ`.
pub fn train(config: &ModelConfig, training: &TrainingData, opt: &OptimizerConfig) -> Result<TrainOutcome> {
    if training.is_empty() {
        return Err(Error::InsufficientHistory("no training bins".into()));
    }
    let state = init_state(config, training)?;
    train_from(state, training, opt)
}

/// Runs the optimizer from an existing state.
pub fn train_from(state: VariationalState, training: &TrainingData, opt: &OptimizerConfig) -> Result<TrainOutcome> {
    let objective = Objective::new(&state, training)?;
    let x0 = objective.pack(&state);
    let result = minimize(|x| objective.value_and_grad(x), &x0, opt)?;
    if result.status == OptStatus::Diverged {
        return Err(Error::OptimizerDiverged(result.f_final));
    }
    log::debug!(
        "trained {} params over {} groups: {:?} after {} iterations, ELBO {:.4} -> {:.4}",
        x0.len(),
        objective.num_groups(),
        result.status,
        result.iterations,
        -result.trace[0],
        -result.f_final
    );
    Ok(TrainOutcome {
        state: objective.unpack(&result.x_final),
        final_elbo: -result.f_final,
        initial_elbo: -result.trace[0],
        optimizer: result,
    })
}

/// Rows per batch when predicting at many points.
const PREDICT_BATCH: usize = 4096;

/// `rate = exp(mean + var/2) / bin_volume` at every point, in km⁻² h⁻¹.
pub fn predict_rate(state: &VariationalState, points: &[Point], bin_volume: f64) -> Result<RateField> {
    if !(bin_volume > 0.0) || !bin_volume.is_finite() {
        return Err(Error::InvalidConfig(format!("bin volume must be positive, got {bin_volume}")));
    }
    let chol = state.kzz_cholesky()?;
    let groups = Groups::build(&state.kernel, points);
    let reps: Vec<Point> = groups.representatives.iter().map(|&i| points[i]).collect();
    let mut means = Vec::with_capacity(reps.len());
    let mut vars = Vec::with_capacity(reps.len());
    for chunk in reps.chunks(PREDICT_BATCH) {
        let q = marginals_with(state, &chol, chunk)?;
        means.extend(q.means.iter());
        vars.extend(q.vars.iter());
    }
    let latent_mean: Vec<f64> = groups.membership.iter().map(|&g| means[g]).collect();
    let latent_var: Vec<f64> = groups.membership.iter().map(|&g| vars[g]).collect();
    let rate = latent_mean
        .iter()
        .zip(&latent_var)
        .map(|(m, v)| (m + 0.5 * v).exp() / bin_volume)
        .collect();
    Ok(RateField {
        points: points.to_vec(),
        rate,
        latent_mean,
        latent_var,
    })
}

pub const MODEL_FORMAT: &str = "stgp-model";
pub const MODEL_VERSION: u32 = 1;

/// A trained model with the grid it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub state: VariationalState,
    /// Natural log of every leaf variance, depth-first (informational).
    pub log_variances: Vec<f64>,
    pub grid: SpatioTemporalGrid,
    pub final_elbo: f64,
}

impl ModelFile {
    pub fn new(state: VariationalState, grid: SpatioTemporalGrid, final_elbo: f64) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            log_variances: state.log_variances(),
            state,
            grid,
            final_elbo,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        file.state.validate()?;
        Ok(file)
    }
}
