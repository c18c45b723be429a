//! Synthetic data: a two-class VAR(1) generator and missingness injectors.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MaskedMts};
use crate::ensemble::mix_seed;
use crate::error::{param_err, Result, TckError};

/// One class of the bivariate VAR(1) model
/// `x(t) = alpha + diag(ar) x(t-1) + xi(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Var1ClassParams {
    /// Autoregression coefficients `(rho1, rho2)`.
    pub ar: [f64; 2],
    /// Target stationary correlation of the two attributes.
    pub corr: f64,
    /// Stationary mean.
    pub mean: [f64; 2],
}

impl Var1ClassParams {
    /// `alpha = (I - diag(ar)) * mean`.
    pub fn intercept(&self) -> [f64; 2] {
        [(1.0 - self.ar[0]) * self.mean[0], (1.0 - self.ar[1]) * self.mean[1]]
    }

    /// Noise correlation giving stationary `corr(x1, x2) = corr`:
    /// `rho (1 - rho1 rho2) / sqrt((1 - rho1^2)(1 - rho2^2))`.
    pub fn noise_corr(&self) -> Result<f64> {
        let [r1, r2] = self.ar;
        if r1.abs() >= 1.0 || r2.abs() >= 1.0 || self.corr.abs() > 1.0 {
            return param_err("VAR(1) needs |rho1|, |rho2| < 1 and |rho| <= 1");
        }
        let c = self.corr * (1.0 - r1 * r2) / ((1.0 - r1 * r1) * (1.0 - r2 * r2)).sqrt();
        if c.abs() > 1.0 {
            return param_err(format!("required noise correlation {c:.4} lies outside [-1, 1]"));
        }
        Ok(c)
    }

    /// Stationary covariance `[var1, cov12, var2]` for noise std `sd`.
    pub fn stationary_cov(&self, sd: f64) -> Result<[f64; 3]> {
        let c = self.noise_corr()?;
        let [r1, r2] = self.ar;
        let s2 = sd * sd;
        Ok([s2 / (1.0 - r1 * r1), c * s2 / (1.0 - r1 * r2), s2 / (1.0 - r2 * r2)])
    }

    /// A chain of `len` steps started from the stationary distribution.
    pub fn simulate<R: Rng>(&self, len: usize, noise_sd: f64, rng: &mut R) -> Result<Vec<[f64; 2]>> {
        let c = self.noise_corr()?;
        let [v1, c12, v2] = self.stationary_cov(noise_sd)?;
        let alpha = self.intercept();
        let (z1, z2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        let l11 = v1.sqrt();
        let l21 = c12 / l11;
        let l22 = (v2 - l21 * l21).max(0.0).sqrt();
        let mut x = [self.mean[0] + l11 * z1, self.mean[1] + l21 * z1 + l22 * z2];
        let mut out = Vec::with_capacity(len);
        let tail = (1.0 - c * c).max(0.0).sqrt();
        for t in 0..len {
            if t > 0 {
                let (z1, z2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                let xi = [noise_sd * z1, noise_sd * (c * z1 + tail * z2)];
                x = [
                    alpha[0] + self.ar[0] * x[0] + xi[0],
                    alpha[1] + self.ar[1] * x[1] + xi[1],
                ];
            }
            out.push(x);
        }
        Ok(out)
    }
}

/// Two-class VAR(1) benchmark settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Var1Params {
    pub classes: Vec<Var1ClassParams>,
    pub len: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub noise_sd: f64,
}

impl Default for Var1Params {
    /// Class 1: `rho = rho1 = rho2 = 0.8`, mean `(0.5, -0.5)`;
    /// class 2: `rho = -0.8`, `rho1 = rho2 = 0.6`, mean `(0, 0)`.
    fn default() -> Self {
        Self {
            classes: vec![
                Var1ClassParams {
                    ar: [0.8, 0.8],
                    corr: 0.8,
                    mean: [0.5, -0.5],
                },
                Var1ClassParams {
                    ar: [0.6, 0.6],
                    corr: -0.8,
                    mean: [0.0, 0.0],
                },
            ],
            len: 50,
            train_per_class: 100,
            test_per_class: 100,
            noise_sd: 1.0,
        }
    }
}

/// Independent training and test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

fn var1_dataset(params: &Var1Params, per_class: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Dataset::new(2, params.len, params.classes.len());
    let mut id = 1;
    for (y, class) in params.classes.iter().enumerate() {
        for _ in 0..per_class {
            let chain = class.simulate(params.len, params.noise_sd, &mut rng)?;
            let rows = vec![
                chain.iter().map(|x| x[0]).collect(),
                chain.iter().map(|x| x[1]).collect(),
            ];
            data.push(MaskedMts::from_rows(id, &rows)?, Some(y))?;
            id += 1;
        }
    }
    Ok(data)
}

/// Fully observed VAR(1) training and test sets; each drawn from its own stream.
pub fn gen_var1(params: &Var1Params, seed: u64) -> Result<Split> {
    if params.len == 0 || params.classes.is_empty() {
        return param_err("VAR(1) generator needs at least one class and one time step");
    }
    for c in &params.classes {
        c.noise_corr()?;
    }
    Ok(Split {
        train: var1_dataset(params, params.train_per_class, mix_seed(seed, 1, 0))?,
        test: var1_dataset(params, params.test_per_class, mix_seed(seed, 2, 0))?,
    })
}

fn require_labels(data: &Dataset) -> Result<Vec<usize>> {
    data.full_labels()
}

/// Drops each observed cell with value above `threshold` with the
/// class-specific probability `p_class[y]`.
pub fn inject_var1_mnar(data: &Dataset, p_class: &[f64], threshold: f64, seed: u64) -> Result<Dataset> {
    let labels = require_labels(data)?;
    if p_class.len() < data.n_classes() || p_class.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return param_err("need one drop probability in [0, 1] per class");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.clone();
    for (s, &y) in out.series_mut().iter_mut().zip(&labels) {
        for v in 0..s.n_attrs() {
            for t in 0..s.len() {
                let u: f64 = rng.random();
                if let Some(x) = s.value(v, t) {
                    if x > threshold && u < p_class[y] {
                        s.clear(v, t);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Drop probabilities of the VAR(1) benchmark: 0.9 for class 1, 0.8 for class 2.
pub const VAR1_DROP_PROBS: [f64; 2] = [0.9, 0.8];
/// Values at or below this threshold are never dropped by [`inject_var1_mnar`].
pub const VAR1_DROP_THRESHOLD: f64 = -1.0;

/// Label-correlated missing-rate schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateScheme {
    /// `gamma ~ U[0.3 + E c_v (y-1), 0.7 + E c_v (y-1)]`, every cell eligible.
    Mar,
    /// `gamma ~ U[0.7 - E(y-1), 1 - E(y-1)]` for `c_v = -1` and
    /// `U[0.3 + E(y-1), 0.6 + E(y-1)]` for `c_v = +1`; only cells above the
    /// attribute mean are eligible.
    Mnar,
}

/// Result of a rate-based injection.
#[derive(Debug, Clone)]
pub struct RateInjection {
    pub data: Dataset,
    /// Sampled missing rates `gamma[n][v]`.
    pub rates: Vec<Vec<f64>>,
    pub signs: Vec<i8>,
}

fn draw_signs(scheme: RateScheme, n_attrs: usize, rng: &mut ChaCha8Rng) -> Vec<i8> {
    match scheme {
        RateScheme::Mar => {
            // Equal counts of each sign, randomly assigned; the odd one out is a coin flip.
            let mut signs: Vec<i8> = (0..n_attrs).map(|v| if v % 2 == 0 { 1 } else { -1 }).collect();
            if n_attrs % 2 == 1 {
                signs[n_attrs - 1] = if rng.random::<bool>() { 1 } else { -1 };
            }
            signs.shuffle(rng);
            signs
        }
        RateScheme::Mnar => loop {
            let signs: Vec<i8> = (0..n_attrs)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect();
            if n_attrs < 2 || signs.iter().any(|&c| c != signs[0]) {
                break signs;
            }
        },
    }
}

fn rate_interval(scheme: RateScheme, sign: i8, e: f64, class: usize) -> (f64, f64) {
    let shift = e * class as f64;
    let (lo, hi) = match (scheme, sign) {
        (RateScheme::Mar, c) => (0.3 + c as f64 * shift, 0.7 + c as f64 * shift),
        (RateScheme::Mnar, -1) => (0.7 - shift, 1.0 - shift),
        (RateScheme::Mnar, _) => (0.3 + shift, 0.6 + shift),
    };
    (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
}

/// Signs and per-(series, attribute) rates; the uniform draws depend only on
/// the seed, so rates vary smoothly with `e` for a fixed seed.
fn sample_rates(
    scheme: RateScheme,
    labels: &[usize],
    n_attrs: usize,
    e: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<i8>, Vec<Vec<f64>>) {
    let signs = draw_signs(scheme, n_attrs, rng);
    let rates = labels
        .iter()
        .map(|&y| {
            signs
                .iter()
                .map(|&c| {
                    let (lo, hi) = rate_interval(scheme, c, e, y);
                    let u: f64 = rng.random();
                    lo + u * (hi - lo)
                })
                .collect()
        })
        .collect();
    (signs, rates)
}

/// Applies a label-correlated missing-rate scheme with informativeness `e`.
pub fn inject_rate(data: &Dataset, scheme: RateScheme, e: f64, seed: u64) -> Result<RateInjection> {
    let labels = require_labels(data)?;
    if !e.is_finite() || e < 0.0 {
        return param_err("informativeness E must be a nonnegative number");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (signs, rates) = sample_rates(scheme, &labels, data.n_attrs(), e, &mut rng);
    let thresholds: Option<Vec<f64>> = match scheme {
        RateScheme::Mar => None,
        RateScheme::Mnar => Some(attribute_means(data)?),
    };
    let mut out = data.clone();
    for (s, gamma) in out.series_mut().iter_mut().zip(&rates) {
        for v in 0..s.n_attrs() {
            for t in 0..s.len() {
                let u: f64 = rng.random();
                let Some(x) = s.value(v, t) else { continue };
                let eligible = thresholds.as_ref().is_none_or(|m| x > m[v]);
                if eligible && u < gamma[v] {
                    s.clear(v, t);
                }
            }
        }
    }
    Ok(RateInjection {
        data: out,
        rates,
        signs,
    })
}

pub fn inject_rate_mar(data: &Dataset, e: f64, seed: u64) -> Result<RateInjection> {
    inject_rate(data, RateScheme::Mar, e, seed)
}

pub fn inject_rate_mnar(data: &Dataset, e: f64, seed: u64) -> Result<RateInjection> {
    inject_rate(data, RateScheme::Mnar, e, seed)
}

fn attribute_means(data: &Dataset) -> Result<Vec<f64>> {
    (0..data.n_attrs())
        .map(|v| {
            let (sum, n) = data
                .series()
                .iter()
                .flat_map(|s| (0..s.len()).filter_map(move |t| s.value(v, t)))
                .fold((0.0, 0usize), |(a, c), x| (a + x, c + 1));
            if n == 0 {
                Err(TckError::EmptyAttribute { attribute: v + 1 })
            } else {
                Ok(sum / n as f64)
            }
        })
        .collect()
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Mean over attributes of `|pearson(gamma_v, y)|`.
pub fn mean_abs_rate_corr(rates: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n_attrs = rates.first().map_or(0, Vec::len);
    if n_attrs == 0 {
        return 0.0;
    }
    let y: Vec<f64> = labels.iter().map(|&c| (c + 1) as f64).collect();
    (0..n_attrs)
        .map(|v| {
            let g: Vec<f64> = rates.iter().map(|r| r[v]).collect();
            pearson(&g, &y).abs()
        })
        .sum::<f64>()
        / n_attrs as f64
}

/// Replicates averaged per correlation estimate in [`tune_e`].
pub const TUNE_REPLICATES: usize = 20;
/// Accepted deviation from the target correlation.
pub const TUNE_TOLERANCE: f64 = 0.02;

/// Outcome of [`tune_e`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedE {
    pub e: f64,
    /// Mean absolute correlation achieved at `e`.
    pub achieved: f64,
}

/// Mean absolute rate/label correlation at `e`, averaged over replicate seeds.
pub fn expected_rate_corr(
    scheme: RateScheme,
    labels: &[usize],
    n_attrs: usize,
    e: f64,
    seed: u64,
    replicates: usize,
) -> f64 {
    (0..replicates)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, r as u64, 0x7475_6e65));
            let (_, rates) = sample_rates(scheme, labels, n_attrs, e, &mut rng);
            mean_abs_rate_corr(&rates, labels)
        })
        .sum::<f64>()
        / replicates as f64
}

/// Finds `E` whose mean absolute rate/label correlation matches `target`.
///
/// A grid scan over `[0, 1 / (N_c - 1)]` brackets the first crossing, which
/// is then refined by bisection. The same replicate seeds are used at every
/// `E`, so the estimate is a smooth function of `E`.
pub fn tune_e(data: &Dataset, scheme: RateScheme, target: f64, seed: u64) -> Result<TunedE> {
    if !(0.0..1.0).contains(&target) {
        return param_err("target correlation must lie in [0, 1)");
    }
    if target == 0.0 {
        return Ok(TunedE { e: 0.0, achieved: 0.0 });
    }
    let labels = require_labels(data)?;
    if data.n_classes() < 2 {
        return param_err("correlation tuning needs at least two classes");
    }
    let n_attrs = data.n_attrs();
    let f = |e: f64| expected_rate_corr(scheme, &labels, n_attrs, e, seed, TUNE_REPLICATES);
    let e_max = 1.0 / (data.n_classes() - 1) as f64;
    const GRID: usize = 40;
    let grid: Vec<(f64, f64)> = (0..=GRID)
        .map(|i| {
            let e = e_max * i as f64 / GRID as f64;
            (e, f(e))
        })
        .collect();
    let Some(hit) = grid.iter().position(|&(_, c)| c >= target) else {
        let &(e, best) = grid.iter().max_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty grid");
        if best >= target - TUNE_TOLERANCE {
            return Ok(TunedE { e, achieved: best });
        }
        return Err(TckError::UnreachableCorrelation {
            target,
            max_achievable: best,
        });
    };
    if hit == 0 {
        return Ok(TunedE {
            e: 0.0,
            achieved: grid[0].1,
        });
    }
    let (mut lo, mut hi) = (grid[hit - 1].0, grid[hit].0);
    let mut best = grid[hit];
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let c = f(mid);
        if (c - target).abs() < (best.1 - target).abs() {
            best = (mid, c);
        }
        if c < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (c - target).abs() < 1e-4 {
            break;
        }
    }
    Ok(TunedE {
        e: best.0,
        achieved: best.1,
    })
}
