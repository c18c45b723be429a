//! Mixed-mode Bayesian mixture model for incompletely observed series.
//!
//! Each component models the observed values with a diagonal, time-constant
//! Gaussian and (in [`Mode::MixedMode`]) the observation mask with independent
//! Bernoulli variables. Parameters are fitted by MAP-EM under a smooth
//! Gaussian prior on the component means and an inverse-Gamma prior on the
//! standard deviations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::MaskedMts;
use crate::error::{param_err, Result, TckError};

/// Clamp bound for Bernoulli parameters: `beta` stays in `[EPS, 1 - EPS]`.
pub const BETA_EPS: f64 = 1e-6;
/// Relative diagonal jitter added to the prior covariance `S_v`.
pub const PRIOR_JITTER: f64 = 1e-8;
const DENOM_GUARD: f64 = 1e-12;
const MIN_SCALE: f64 = 1e-6;
const MIN_VARIANCE: f64 = 1e-10;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Prior hyperparameters `(a0, b0, N0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Decay of the squared-exponential prior kernel.
    pub a0: f64,
    /// Scale of the prior kernel.
    pub b0: f64,
    /// Strength of the inverse-Gamma prior.
    pub n0: f64,
}

impl HyperParams {
    pub fn new(a0: f64, b0: f64, n0: f64) -> Result<Self> {
        let hp = Self { a0, b0, n0 };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.a0, self.b0, self.n0].iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(())
        } else {
            param_err(format!("hyperparameters must be positive, got {self:?}"))
        }
    }
}

/// Which modalities the components model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Gaussian over observed values only; the mask is ignored.
    GaussianOnly,
    /// Gaussian over observed values plus Bernoulli over the mask.
    MixedMode,
}

/// Squared-exponential prior kernel `b0 * exp(-a0 (t - t')^2)`.
pub fn prior_kernel(len: usize, a0: f64, b0: f64) -> DMatrix<f64> {
    DMatrix::from_fn(len, len, |i, j| {
        let d = i as f64 - j as f64;
        b0 * (-a0 * d * d).exp()
    })
}

/// Empirical prior for one restricted dataset.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    n_attrs: usize,
    len: usize,
    /// `m_v(t)`, row-major `v * T + t`.
    pub mean: Vec<f64>,
    /// `s_v`, empirical standard deviation of each attribute.
    pub scale: Vec<f64>,
    /// The kernel matrix `K`.
    pub kernel: DMatrix<f64>,
    /// `S_v = s_v K + jitter I`.
    pub cov: Vec<DMatrix<f64>>,
    cov_chol: Vec<DMatrix<f64>>,
    cov_logdet: Vec<f64>,
}

impl PriorSpec {
    pub fn n_attrs(&self) -> usize {
        self.n_attrs
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn mean_of(&self, v: usize) -> &[f64] {
        &self.mean[v * self.len..(v + 1) * self.len]
    }

    /// `log N(mu | m_v, S_v)`.
    fn log_prior_mean(&self, v: usize, mu: &[f64]) -> f64 {
        let diff = DVector::from_iterator(self.len, mu.iter().zip(self.mean_of(v)).map(|(a, b)| a - b));
        let l = &self.cov_chol[v];
        let z = l
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a nonzero diagonal");
        -0.5 * (z.norm_squared() + self.cov_logdet[v] + self.len as f64 * LN_2PI)
    }
}

fn check_shape(data: &[MaskedMts]) -> Result<(usize, usize)> {
    let first = data
        .first()
        .ok_or_else(|| TckError::Parameter("empty data subset".into()))?;
    let (v, t) = (first.n_attrs(), first.len());
    if data.iter().any(|s| s.n_attrs() != v || s.len() != t) {
        return Err(TckError::Schema("series in subset differ in shape".into()));
    }
    Ok((v, t))
}

/// Builds the empirical prior of a (restricted) data subset.
pub fn build_prior(data: &[MaskedMts], hp: &HyperParams) -> Result<PriorSpec> {
    hp.validate()?;
    let (n_attrs, len) = check_shape(data)?;
    let kernel = prior_kernel(len, hp.a0, hp.b0);
    let mut mean = vec![0.0; n_attrs * len];
    let mut scale = vec![0.0; n_attrs];
    let mut cov = Vec::with_capacity(n_attrs);
    let mut cov_chol = Vec::with_capacity(n_attrs);
    let mut cov_logdet = Vec::with_capacity(n_attrs);

    for v in 0..n_attrs {
        let mut sum_t = vec![0.0; len];
        let mut cnt_t = vec![0usize; len];
        for s in data {
            for t in 0..len {
                if let Some(x) = s.value(v, t) {
                    sum_t[t] += x;
                    cnt_t[t] += 1;
                }
            }
        }
        let total: usize = cnt_t.iter().sum();
        if total == 0 {
            return Err(TckError::EmptyAttribute { attribute: v + 1 });
        }
        let grand = sum_t.iter().sum::<f64>() / total as f64;
        for t in 0..len {
            mean[v * len + t] = if cnt_t[t] > 0 {
                sum_t[t] / cnt_t[t] as f64
            } else {
                grand
            };
        }
        let ss: f64 = data
            .iter()
            .flat_map(|s| (0..len).filter_map(move |t| s.value(v, t)))
            .map(|x| (x - grand).powi(2))
            .sum();
        let sd = if total > 1 {
            (ss / (total - 1) as f64).sqrt()
        } else {
            0.0
        };
        let sd = sd.max(MIN_SCALE);
        scale[v] = sd;

        let mut s_v = &kernel * sd;
        for t in 0..len {
            s_v[(t, t)] += PRIOR_JITTER * sd;
        }
        let chol = s_v.clone().cholesky().ok_or_else(|| {
            TckError::Numerical(format!(
                "prior covariance of attribute {} is not positive definite",
                v + 1
            ))
        })?;
        let l = chol.l();
        let logdet = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        cov.push(s_v);
        cov_chol.push(l);
        cov_logdet.push(logdet);
    }

    Ok(PriorSpec {
        n_attrs,
        len,
        mean,
        scale,
        kernel,
        cov,
        cov_chol,
        cov_logdet,
    })
}

/// Parameters of a fitted mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub mode: Mode,
    pub n_components: usize,
    pub n_attrs: usize,
    pub len: usize,
    /// Mixing coefficients.
    pub theta: Vec<f64>,
    /// Means, `(g * V + v) * T + t`.
    pub mu: Vec<f64>,
    /// Variances, `g * V + v`.
    pub sigma2: Vec<f64>,
    /// Bernoulli parameters, same layout as `mu`; `None` in Gaussian-only mode.
    pub beta: Option<Vec<f64>>,
}

impl MixtureParams {
    #[inline]
    pub fn mu_of(&self, g: usize, v: usize) -> &[f64] {
        let start = (g * self.n_attrs + v) * self.len;
        &self.mu[start..start + self.len]
    }

    #[inline]
    pub fn sigma2_of(&self, g: usize, v: usize) -> f64 {
        self.sigma2[g * self.n_attrs + v]
    }

    #[inline]
    pub fn beta_of(&self, g: usize, v: usize, t: usize) -> Option<f64> {
        self.beta.as_ref().map(|b| b[(g * self.n_attrs + v) * self.len + t])
    }

    pub fn validate(&self) -> Result<()> {
        let cells = self.n_components * self.n_attrs * self.len;
        let shape_ok = self.theta.len() == self.n_components
            && self.mu.len() == cells
            && self.sigma2.len() == self.n_components * self.n_attrs
            && match (&self.beta, self.mode) {
                (Some(b), Mode::MixedMode) => b.len() == cells,
                (None, Mode::GaussianOnly) => true,
                _ => false,
            };
        if !shape_ok {
            return Err(TckError::Schema(
                "mixture parameter arrays have inconsistent sizes".into(),
            ));
        }
        let sum: f64 = self.theta.iter().sum();
        if self.theta.iter().any(|&t| !(0.0..=1.0).contains(&t)) || (sum - 1.0).abs() > 1e-8 {
            return param_err("mixing coefficients must lie on the simplex");
        }
        if self.sigma2.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return param_err("variances must be positive and finite");
        }
        if let Some(b) = &self.beta {
            if b.iter().any(|&x| !(BETA_EPS..=1.0 - BETA_EPS).contains(&x)) {
                return param_err("Bernoulli parameters outside clamp bounds");
            }
        }
        Ok(())
    }

    fn check_series(&self, s: &MaskedMts) -> Result<()> {
        if s.n_attrs() != self.n_attrs || s.len() != self.len {
            return Err(TckError::Schema(format!(
                "series {} is {}x{}, model expects {}x{}",
                s.id,
                s.n_attrs(),
                s.len(),
                self.n_attrs,
                self.len
            )));
        }
        Ok(())
    }
}

/// Serialized form of a fitted base model: parameters plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub params: MixtureParams,
    pub hp: HyperParams,
    pub seed: u64,
}

/// Per-series component responsibilities, row-major `n * G + g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMatrix {
    n_series: usize,
    n_components: usize,
    data: Vec<f64>,
}

impl PosteriorMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_components = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_components) {
            return param_err("posterior rows differ in length");
        }
        Ok(Self {
            n_series: rows.len(),
            n_components,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn n_series(&self) -> usize {
        self.n_series
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.n_components..(n + 1) * self.n_components]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_components.max(1)).take(self.n_series)
    }

    /// The rows at the given positions.
    pub fn select(&self, positions: &[usize]) -> PosteriorMatrix {
        let mut data = Vec::with_capacity(positions.len() * self.n_components);
        for &p in positions {
            data.extend_from_slice(self.row(p));
        }
        PosteriorMatrix {
            n_series: positions.len(),
            n_components: self.n_components,
            data,
        }
    }

    /// Applies `f` to every row, producing a matrix with `width` columns.
    pub fn map_rows(&self, width: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> PosteriorMatrix {
        let mut data = Vec::with_capacity(self.n_series * width);
        for r in self.rows() {
            let out = f(r);
            debug_assert_eq!(out.len(), width);
            data.extend(out);
        }
        PosteriorMatrix {
            n_series: self.n_series,
            n_components: width,
            data,
        }
    }
}

/// Log-density lookup tables derived from one parameter set.
struct LogTables {
    n_attrs: usize,
    len: usize,
    log_theta: Vec<f64>,
    /// `-0.5 (ln 2pi + ln sigma2)` per `(g, v)`.
    lnorm: Vec<f64>,
    inv_var: Vec<f64>,
    /// `ln beta - ln(1 - beta)` per cell, mixed mode only.
    logit: Option<Vec<f64>>,
    /// `sum ln(1 - beta)` per component, mixed mode only.
    base: Vec<f64>,
}

impl LogTables {
    fn new(p: &MixtureParams) -> Self {
        let lnorm = p.sigma2.iter().map(|s| -0.5 * (LN_2PI + s.ln())).collect();
        let inv_var = p.sigma2.iter().map(|s| 1.0 / s).collect();
        let cells = p.n_attrs * p.len;
        let (logit, base) = match &p.beta {
            Some(beta) => {
                let logit = beta.iter().map(|b| b.ln() - (1.0 - b).ln()).collect();
                let base = (0..p.n_components)
                    .map(|g| beta[g * cells..(g + 1) * cells].iter().map(|b| (1.0 - b).ln()).sum())
                    .collect();
                (Some(logit), base)
            }
            None => (None, vec![0.0; p.n_components]),
        };
        Self {
            n_attrs: p.n_attrs,
            len: p.len,
            log_theta: p.theta.iter().map(|t| t.ln()).collect(),
            lnorm,
            inv_var,
            logit,
            base,
        }
    }

    /// `ln theta_g + ln f(U | phi_g)` for every component.
    fn log_weights(&self, p: &MixtureParams, s: &MaskedMts, out: &mut [f64]) {
        let (n_attrs, len) = (self.n_attrs, self.len);
        let values = s.values();
        let mask = s.mask();
        for (g, slot) in out.iter_mut().enumerate() {
            let mut acc = self.base[g];
            for v in 0..n_attrs {
                let gv = g * n_attrs + v;
                let lnorm = self.lnorm[gv];
                let inv = self.inv_var[gv];
                let mu = &p.mu[gv * len..(gv + 1) * len];
                let row = v * len;
                match &self.logit {
                    Some(logit) => {
                        let lg = &logit[gv * len..(gv + 1) * len];
                        for t in 0..len {
                            if mask[row + t] {
                                let d = values[row + t] - mu[t];
                                acc += lnorm - 0.5 * d * d * inv + lg[t];
                            }
                        }
                    }
                    None => {
                        for t in 0..len {
                            if mask[row + t] {
                                let d = values[row + t] - mu[t];
                                acc += lnorm - 0.5 * d * d * inv;
                            }
                        }
                    }
                }
            }
            *slot = self.log_theta[g] + acc;
        }
    }
}

/// Numerically stable `ln sum exp`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalizes log weights in place into probabilities; returns the log normalizer.
fn normalize_log_weights(w: &mut [f64], id: u64) -> Result<f64> {
    let lse = log_sum_exp(w);
    if !lse.is_finite() {
        return Err(TckError::Underflow { series: id });
    }
    for x in w.iter_mut() {
        *x = (*x - lse).exp();
    }
    let sum: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= sum;
    }
    Ok(lse)
}

fn posteriors_with_loglik(params: &MixtureParams, data: &[MaskedMts]) -> Result<(PosteriorMatrix, f64)> {
    let tables = LogTables::new(params);
    let g = params.n_components;
    let mut out = vec![0.0; data.len() * g];
    let mut loglik = 0.0;
    for (n, s) in data.iter().enumerate() {
        params.check_series(s)?;
        let row = &mut out[n * g..(n + 1) * g];
        tables.log_weights(params, s, row);
        loglik += normalize_log_weights(row, s.id)?;
    }
    Ok((
        PosteriorMatrix {
            n_series: data.len(),
            n_components: g,
            data: out,
        },
        loglik,
    ))
}

/// E-step: component responsibilities of every series, computed in the log domain.
pub fn e_step(params: &MixtureParams, data: &[MaskedMts]) -> Result<PosteriorMatrix> {
    posteriors_with_loglik(params, data).map(|(p, _)| p)
}

/// Responsibilities of a single series under fitted parameters.
pub fn posterior_new(params: &MixtureParams, series: &MaskedMts) -> Result<Vec<f64>> {
    params.check_series(series)?;
    let tables = LogTables::new(params);
    let mut w = vec![0.0; params.n_components];
    tables.log_weights(params, series, &mut w);
    normalize_log_weights(&mut w, series.id)?;
    Ok(w)
}

/// Solves `(S^-1 + D) mu = S^-1 m + c` for `mu` without forming `S^-1`.
///
/// `precision` is the diagonal of `D`, `weighted_obs` the vector `c`.
fn posterior_mean(cov: &DMatrix<f64>, prior_mean: &[f64], precision: &[f64], weighted_obs: &[f64]) -> Result<Vec<f64>> {
    let len = prior_mean.len();
    // With mu = m + delta: (S^-1 + D) delta = c - D m.
    let rhs = DVector::from_iterator(len, (0..len).map(|t| weighted_obs[t] - precision[t] * prior_mean[t]));
    if rhs.iter().all(|&x| x == 0.0) {
        return Ok(prior_mean.to_vec());
    }
    // Woodbury: (S^-1 + D)^-1 = S - S D^1/2 (I + D^1/2 S D^1/2)^-1 D^1/2 S.
    let d_half: Vec<f64> = precision.iter().map(|d| d.sqrt()).collect();
    let y = cov * rhs;
    let mut b = DMatrix::from_fn(len, len, |i, j| d_half[i] * cov[(i, j)] * d_half[j]);
    for t in 0..len {
        b[(t, t)] += 1.0;
    }
    let chol = b
        .cholesky()
        .ok_or_else(|| TckError::Numerical("mean update system is not positive definite".into()))?;
    let scaled = DVector::from_iterator(len, (0..len).map(|t| d_half[t] * y[t]));
    let z = chol.solve(&scaled);
    let dz = DVector::from_iterator(len, (0..len).map(|t| d_half[t] * z[t]));
    let correction = cov * dz;
    Ok((0..len).map(|t| prior_mean[t] + (y[t] - correction[t])).collect())
}

/// M-step: updates `theta`, then per `(g, v)` the variance (using the incoming
/// means) followed by the mean (using the new variance), then `beta`.
pub fn m_step(
    post: &PosteriorMatrix,
    data: &[MaskedMts],
    prior: &PriorSpec,
    hp: &HyperParams,
    params_in: &MixtureParams,
) -> Result<MixtureParams> {
    let n = data.len();
    if post.n_series() != n {
        return Err(TckError::Schema("posterior rows do not match data".into()));
    }
    let (n_attrs, len) = check_shape(data)?;
    if n_attrs != params_in.n_attrs || len != params_in.len || prior.n_attrs != n_attrs {
        return Err(TckError::Schema("data, prior and parameters disagree in shape".into()));
    }
    let g_count = params_in.n_components;
    let mut out = params_in.clone();

    let mut w_t = vec![0.0; len];
    let mut sx_t = vec![0.0; len];
    let mut precision = vec![0.0; len];
    let mut weighted = vec![0.0; len];

    for g in 0..g_count {
        let resp: f64 = post.rows().map(|r| r[g]).sum();
        out.theta[g] = resp / n as f64;

        for v in 0..n_attrs {
            let mu_old = params_in.mu_of(g, v);
            w_t.iter_mut().for_each(|x| *x = 0.0);
            sx_t.iter_mut().for_each(|x| *x = 0.0);
            let mut ss = 0.0;
            for (s, r) in data.iter().zip(post.rows()) {
                let p = r[g];
                if p == 0.0 {
                    continue;
                }
                let row = v * len;
                let (values, mask) = (s.values(), s.mask());
                for t in 0..len {
                    if mask[row + t] {
                        let x = values[row + t];
                        w_t[t] += p;
                        sx_t[t] += p * x;
                        let d = x - mu_old[t];
                        ss += p * d * d;
                    }
                }
            }
            let w_total: f64 = w_t.iter().sum();
            let s_v = prior.scale[v];
            let var = ((hp.n0 * s_v * s_v + ss) / (hp.n0 + w_total)).max(MIN_VARIANCE);
            out.sigma2[g * n_attrs + v] = var;

            for t in 0..len {
                precision[t] = w_t[t] / var;
                weighted[t] = sx_t[t] / var;
            }
            let mu = posterior_mean(&prior.cov[v], prior.mean_of(v), &precision, &weighted)?;
            let start = (g * n_attrs + v) * len;
            out.mu[start..start + len].copy_from_slice(&mu);
        }

        if let Some(beta) = out.beta.as_mut() {
            let denom = resp + DENOM_GUARD;
            for v in 0..n_attrs {
                for t in 0..len {
                    let num: f64 = data
                        .iter()
                        .zip(post.rows())
                        .filter(|(s, _)| s.is_observed(v, t))
                        .map(|(_, r)| r[g])
                        .sum();
                    beta[(g * n_attrs + v) * len + t] = (num / denom).clamp(BETA_EPS, 1.0 - BETA_EPS);
                }
            }
        }
    }
    Ok(out)
}

/// Log posterior up to constants: observed-data log likelihood plus the
/// log priors on every `mu_gv` and `sigma_gv`.
///
/// The inverse-Gamma term is `-(N0/2) ln sigma^2 - N0 s_v^2 / (2 sigma^2)`,
/// whose maximizer together with the likelihood is the variance update of
/// [`m_step`].
pub fn map_objective(params: &MixtureParams, data: &[MaskedMts], prior: &PriorSpec, hp: &HyperParams) -> Result<f64> {
    let (_, loglik) = posteriors_with_loglik(params, data)?;
    let mut log_prior = 0.0;
    for g in 0..params.n_components {
        for v in 0..params.n_attrs {
            log_prior += prior.log_prior_mean(v, params.mu_of(g, v));
            let var = params.sigma2_of(g, v);
            let s = prior.scale[v];
            log_prior += -0.5 * hp.n0 * var.ln() - hp.n0 * s * s / (2.0 * var);
        }
    }
    let total = loglik + log_prior;
    if !total.is_finite() {
        return Err(TckError::Numerical("MAP objective is not finite".into()));
    }
    Ok(total)
}

/// Stopping rule and iteration cap for [`fit_map_em`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Relative change of the objective below which iteration stops.
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 30,
            tol: 1e-6,
        }
    }
}

/// Output of [`fit_map_em`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: MixtureParams,
    /// Responsibilities under the final parameters.
    pub posteriors: PosteriorMatrix,
    /// Objective at initialization followed by one value per iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Initial parameters: uniform `theta`, `sigma2 = s_v^2`, each component mean
/// blended 50/50 between a distinct random series and the prior mean, and
/// `beta` at the clamped empirical observed fraction.
pub fn initialize_params(
    data: &[MaskedMts],
    prior: &PriorSpec,
    mode: Mode,
    n_components: usize,
    seed: u64,
) -> Result<MixtureParams> {
    let (n_attrs, len) = check_shape(data)?;
    if n_components == 0 {
        return param_err("number of components must be at least 1");
    }
    if data.len() < n_components {
        return param_err(format!("{} series cannot seed {} components", data.len(), n_components));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, data.len(), n_components);

    let mut mu = Vec::with_capacity(n_components * n_attrs * len);
    for g in 0..n_components {
        let s = &data[picks.index(g)];
        for v in 0..n_attrs {
            let m = prior.mean_of(v);
            for t in 0..len {
                let x = s.value(v, t).unwrap_or(m[t]);
                mu.push(0.5 * x + 0.5 * m[t]);
            }
        }
    }
    let sigma2 = (0..n_components)
        .flat_map(|_| prior.scale.iter().map(|s| (s * s).max(MIN_VARIANCE)))
        .collect();
    let beta = match mode {
        Mode::GaussianOnly => None,
        Mode::MixedMode => {
            let mut frac = vec![0.0; n_attrs * len];
            for s in data {
                for (f, &m) in frac.iter_mut().zip(s.mask()) {
                    if m {
                        *f += 1.0;
                    }
                }
            }
            let frac: Vec<f64> = frac
                .iter()
                .map(|c| (c / data.len() as f64).clamp(BETA_EPS, 1.0 - BETA_EPS))
                .collect();
            Some(frac.repeat(n_components))
        }
    };
    Ok(MixtureParams {
        mode,
        n_components,
        n_attrs,
        len,
        theta: vec![1.0 / n_components as f64; n_components],
        mu,
        sigma2,
        beta,
    })
}

/// MAP-EM from the initialization of [`initialize_params`].
pub fn fit_map_em(
    data: &[MaskedMts],
    mode: Mode,
    n_components: usize,
    hp: &HyperParams,
    seed: u64,
    opts: &EmOptions,
) -> Result<FitResult> {
    let prior = build_prior(data, hp)?;
    let params = initialize_params(data, &prior, mode, n_components, seed)?;
    fit_from(data, &prior, hp, params, opts)
}

/// MAP-EM from explicit starting parameters.
pub fn fit_from(
    data: &[MaskedMts],
    prior: &PriorSpec,
    hp: &HyperParams,
    mut params: MixtureParams,
    opts: &EmOptions,
) -> Result<FitResult> {
    let mut prev = map_objective(&params, data, prior, hp)?;
    let mut trace = vec![prev];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let post = e_step(&params, data)?;
        params = m_step(&post, data, prior, hp, &params)?;
        iterations += 1;
        let obj = map_objective(&params, data, prior, hp)?;
        trace.push(obj);
        let rel = (obj - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        prev = obj;
        if rel < opts.tol {
            converged = true;
            break;
        }
    }
    let posteriors = e_step(&params, data)?;
    Ok(FitResult {
        params,
        posteriors,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// `KL(f_i || f_j)` between the Gaussian parts of two components.
pub fn component_kl(params: &MixtureParams, i: usize, j: usize) -> f64 {
    let mut acc = 0.0;
    for v in 0..params.n_attrs {
        let (vi, vj) = (params.sigma2_of(i, v), params.sigma2_of(j, v));
        let ratio = vi / vj;
        let log_term = vj.ln() - vi.ln();
        for (mi, mj) in params.mu_of(i, v).iter().zip(params.mu_of(j, v)) {
            let d = mj - mi;
            acc += ratio + d * d / vj - 1.0 + log_term;
        }
    }
    (0.5 * acc).max(0.0)
}

/// `0.5 * (KL(i || j) + KL(j || i))`.
pub fn symmetric_kl(params: &MixtureParams, i: usize, j: usize) -> f64 {
    if i == j {
        return 0.0;
    }
    0.5 * (component_kl(params, i, j) + component_kl(params, j, i))
}

/// Density of `N(x | mu, var)`; exposed for oracle checks.
pub fn normal_pdf(x: f64, mu: f64, var: f64) -> f64 {
    (-(x - mu) * (x - mu) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}
