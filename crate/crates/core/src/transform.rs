//! Linear maps from mixture-component posteriors to class posteriors.
//!
//! A [`TransformMatrix`] `W` (`q2 x N_c`, rows on the simplex) turns a
//! component posterior `pi` into `W^T pi`. The supervised estimate weights
//! every labeled series by its responsibility and divides by class size; the
//! semi-supervised estimate does the same on the labeled subset and lets
//! components without labeled evidence borrow the row of the nearest anchored
//! component in symmetric KL divergence.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result, TckError};
use crate::mixture::{symmetric_kl, MixtureParams, PosteriorMatrix};

/// Default anchoring threshold `h`.
pub const DEFAULT_THRESHOLD: f64 = 0.1;

/// Row-stochastic `q2 x N_c` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformMatrix {
    pub n_components: usize,
    pub n_classes: usize,
    /// Row-major `i * N_c + j`.
    pub w: Vec<f64>,
    /// Row sums before the final normalization.
    pub unnormalized_row_sums: Vec<f64>,
    /// Base model `(q1, q2)` this matrix belongs to, when attached to an ensemble.
    pub source: Option<(usize, usize)>,
}

impl TransformMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_classes = rows.first().map_or(0, Vec::len);
        if n_classes == 0 || rows.iter().any(|r| r.len() != n_classes) {
            return param_err("transform rows must be nonempty and of equal length");
        }
        Ok(Self {
            n_components: rows.len(),
            n_classes,
            unnormalized_row_sums: rows.iter().map(|r| r.iter().sum()).collect(),
            w: rows.iter().flatten().copied().collect(),
            source: None,
        })
    }
}

/// Anchoring threshold `h` in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelThreshold(f64);

impl LabelThreshold {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            param_err(format!("threshold h must lie in (0, 1), got {h}"))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for LabelThreshold {
    fn default() -> Self {
        Self(DEFAULT_THRESHOLD)
    }
}

/// Class-size normalized evidence `sum_n y_j(n) pi_i(n) / sum_n y_j(n)` over
/// the labeled series, unnormalized across classes.
fn class_evidence(post: &PosteriorMatrix, labels: &[Option<usize>], n_classes: usize) -> Result<Vec<Vec<f64>>> {
    if labels.len() != post.n_series() {
        return Err(TckError::Schema(format!(
            "{} labels for {} posterior rows",
            labels.len(),
            post.n_series()
        )));
    }
    let q2 = post.n_components();
    if q2 < n_classes {
        return param_err(format!("{q2} components cannot be mapped onto {n_classes} classes"));
    }
    let mut counts = vec![0.0; n_classes];
    let mut w = vec![vec![0.0; n_classes]; q2];
    for (row, y) in post.rows().zip(labels) {
        let Some(j) = *y else { continue };
        if j >= n_classes {
            return Err(TckError::Label(format!("label {} outside 1..={n_classes}", j + 1)));
        }
        counts[j] += 1.0;
        for (i, &p) in row.iter().enumerate() {
            w[i][j] += p;
        }
    }
    if let Some(j) = counts.iter().position(|&c| c == 0.0) {
        return Err(TckError::Label(format!("class {} has no labeled members", j + 1)));
    }
    for row in &mut w {
        for (x, c) in row.iter_mut().zip(&counts) {
            *x /= c;
        }
    }
    Ok(w)
}

fn normalize_rows(rows: Vec<Vec<f64>>) -> Result<TransformMatrix> {
    let sums: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    let n_classes = rows[0].len();
    let mut w = Vec::with_capacity(rows.len() * n_classes);
    for (i, (row, &s)) in rows.iter().zip(&sums).enumerate() {
        if !(s > 0.0) {
            return Err(TckError::Numerical(format!(
                "component {} has zero class evidence",
                i + 1
            )));
        }
        w.extend(row.iter().map(|x| x / s));
    }
    Ok(TransformMatrix {
        n_components: rows.len(),
        n_classes,
        w,
        unnormalized_row_sums: sums,
        source: None,
    })
}

/// Supervised transform from fully labeled posteriors.
pub fn supervised_w(post: &PosteriorMatrix, labels: &[usize], n_classes: usize) -> Result<TransformMatrix> {
    let labels: Vec<Option<usize>> = labels.iter().map(|&y| Some(y)).collect();
    normalize_rows(class_evidence(post, &labels, n_classes)?)
}

/// Semi-supervised transform from partially labeled posteriors.
///
/// Rows whose unnormalized sum falls below `h` copy the row of the anchored
/// component with the smallest symmetric KL divergence (lowest index on ties).
pub fn semisupervised_w(
    post: &PosteriorMatrix,
    labels: &[Option<usize>],
    n_classes: usize,
    params: &MixtureParams,
    h: LabelThreshold,
) -> Result<TransformMatrix> {
    if params.n_components != post.n_components() {
        return Err(TckError::Schema("posterior width differs from component count".into()));
    }
    let mut rows = class_evidence(post, labels, n_classes)?;
    let sums: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    let anchored: Vec<usize> = (0..rows.len()).filter(|&l| sums[l] >= h.value()).collect();
    if anchored.is_empty() {
        return Err(TckError::NoAnchoredComponents { h: h.value() });
    }
    for k in 0..rows.len() {
        if sums[k] >= h.value() {
            continue;
        }
        let mut best = anchored[0];
        let mut best_d = symmetric_kl(params, k, best);
        for &l in &anchored[1..] {
            let d = symmetric_kl(params, k, l);
            if d < best_d {
                best = l;
                best_d = d;
            }
        }
        rows[k] = rows[best].clone();
    }
    normalize_rows(rows)
}

/// `W^T pi`.
pub fn apply_transform(w: &TransformMatrix, post: &[f64]) -> Vec<f64> {
    debug_assert_eq!(post.len(), w.n_components);
    let mut out = vec![0.0; w.n_classes];
    for (i, &p) in post.iter().enumerate() {
        for (o, x) in out.iter_mut().zip(w.row(i)) {
            *o += p * x;
        }
    }
    out
}

/// Builds a per-base-model transform from that model's training posteriors.
pub trait PosteriorTransform: Sync {
    /// Posteriors cover every training series in dataset order.
    fn fit(&self, post: &PosteriorMatrix, params: &MixtureParams) -> Result<TransformMatrix>;
}

/// Supervised transform: every training series labeled.
#[derive(Debug, Clone)]
pub struct Supervised {
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl PosteriorTransform for Supervised {
    fn fit(&self, post: &PosteriorMatrix, _params: &MixtureParams) -> Result<TransformMatrix> {
        supervised_w(post, &self.labels, self.n_classes)
    }
}

/// Semi-supervised transform: a subset of training series labeled.
#[derive(Debug, Clone)]
pub struct SemiSupervised {
    pub labels: Vec<Option<usize>>,
    pub n_classes: usize,
    pub h: LabelThreshold,
}

impl PosteriorTransform for SemiSupervised {
    fn fit(&self, post: &PosteriorMatrix, params: &MixtureParams) -> Result<TransformMatrix> {
        semisupervised_w(post, &self.labels, self.n_classes, params, self.h)
    }
}
