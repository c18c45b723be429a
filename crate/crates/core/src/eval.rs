//! Kernel PCA embedding, kNN classification, metrics and cross-validation.

use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::ensemble::{mix_seed, KernelMatrix};
use crate::error::{param_err, Result, TckError};

/// Embedding dimension used by the experiments.
pub const DEFAULT_DIM: usize = 10;
/// Neighbour counts searched when `k` is chosen by cross-validation.
pub const K_GRID: [usize; 5] = [1, 3, 5, 7, 9];

/// KPCA coordinates, one row per series.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: DMatrix<f64>,
    /// Non-increasing, clamped at 0.
    pub eigenvalues: Vec<f64>,
}

impl Embedding {
    pub fn n_points(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.coords.row(i).iter().copied().collect()
    }
}

/// Training-side state needed to embed new kernel columns.
#[derive(Debug, Clone)]
pub struct KpcaProjector {
    center: bool,
    /// `N x d` leading eigenvectors.
    vectors: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    row_means: DVector<f64>,
    grand_mean: f64,
}

fn eigen_floor(values: &[f64]) -> f64 {
    let scale = values.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    1e-10 * scale
}

/// Kernel PCA of a symmetric `N x N` kernel.
pub fn kpca(k: &KernelMatrix, d: usize, center: bool) -> Result<(Embedding, KpcaProjector)> {
    let n = k.rows;
    if k.cols != n {
        return param_err(format!("KPCA needs a square kernel, got {}x{}", k.rows, k.cols));
    }
    if n == 0 || d == 0 {
        return param_err("KPCA needs at least one point and d >= 1");
    }
    let mut m = k.to_dmatrix();
    let row_means = DVector::from_iterator(n, m.row_iter().map(|r| r.mean()));
    let grand_mean = row_means.mean();
    if center {
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += grand_mean - row_means[i] - row_means[j];
            }
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let trace_scale = eig.eigenvalues.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
    let nonneg = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] >= -1e-8 * trace_scale)
        .count();
    let dim = if d > nonneg {
        warn!("KPCA dimension {d} exceeds the {nonneg} nonnegative eigenvalues; truncating");
        nonneg.max(1)
    } else {
        d
    };
    let eigenvalues: Vec<f64> = order[..dim].iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = DMatrix::from_fn(n, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    let coords = DMatrix::from_fn(n, dim, |r, c| vectors[(r, c)] * eigenvalues[c].sqrt());
    let proj = KpcaProjector {
        center,
        vectors,
        eigenvalues: eigenvalues.clone(),
        row_means,
        grand_mean,
    };
    Ok((Embedding { coords, eigenvalues }, proj))
}

impl KpcaProjector {
    /// Embeds the columns of an `N x M` train/test kernel.
    pub fn project(&self, k_test: &KernelMatrix) -> Result<Embedding> {
        let n = self.vectors.nrows();
        if k_test.rows != n {
            return Err(TckError::Schema(format!(
                "test kernel has {} rows, KPCA was fitted on {n} series",
                k_test.rows
            )));
        }
        let mut kt = k_test.to_dmatrix();
        if self.center {
            for j in 0..kt.ncols() {
                let col_mean = kt.column(j).mean();
                for i in 0..n {
                    kt[(i, j)] += self.grand_mean - self.row_means[i] - col_mean;
                }
            }
        }
        let mut coords = self.vectors.transpose() * kt;
        let floor = eigen_floor(&self.eigenvalues);
        for (c, &lambda) in self.eigenvalues.iter().enumerate() {
            let scale = if lambda > floor { 1.0 / lambda.sqrt() } else { 0.0 };
            coords.row_mut(c).scale_mut(scale);
        }
        Ok(Embedding {
            coords: coords.transpose(),
            eigenvalues: self.eigenvalues.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

fn sq_dist(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (0..a.ncols()).map(|c| (a[(i, c)] - b[(j, c)]).powi(2)).sum()
}

fn vote(neigh: &[(f64, usize)], labels: &[usize]) -> usize {
    let n_classes = neigh.iter().map(|&(_, i)| labels[i]).max().unwrap_or(0) + 1;
    let mut count = vec![0usize; n_classes];
    let mut dist = vec![0.0; n_classes];
    for &(d, i) in neigh {
        count[labels[i]] += 1;
        dist[labels[i]] += d.sqrt();
    }
    (0..n_classes)
        .filter(|&c| count[c] > 0)
        .min_by(|&a, &b| {
            count[b]
                .cmp(&count[a])
                .then((dist[a] / count[a] as f64).total_cmp(&(dist[b] / count[b] as f64)))
                .then(a.cmp(&b))
        })
        .expect("at least one neighbour")
}

fn knn_impl(
    train: &DMatrix<f64>,
    labels: &[usize],
    test: &DMatrix<f64>,
    k: usize,
    exclude_self: bool,
) -> Result<Vec<usize>> {
    let n = train.nrows();
    if labels.len() != n {
        return Err(TckError::Label(format!(
            "{} labels for {n} training points",
            labels.len()
        )));
    }
    if train.ncols() != test.ncols() {
        return Err(TckError::Schema("train and test embeddings differ in dimension".into()));
    }
    let avail = if exclude_self { n.saturating_sub(1) } else { n };
    if k == 0 || k > avail {
        return param_err(format!("k = {k} must lie in [1, {avail}]"));
    }
    Ok((0..test.nrows())
        .map(|j| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&i| !(exclude_self && i == j))
                .map(|i| (sq_dist(train, i, test, j), i))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            vote(&d[..k], labels)
        })
        .collect())
}

/// k-nearest-neighbour predictions in embedding space.
///
/// Ties in the vote go to the class with the smallest mean neighbour
/// distance, then to the lowest class index.
pub fn knn(train: &Embedding, labels: &[usize], test: &Embedding, k: usize) -> Result<Vec<usize>> {
    knn_impl(&train.coords, labels, &test.coords, k, false)
}

/// Leave-one-out kNN on the training embedding (each point's own entry is skipped).
pub fn knn_loo(train: &Embedding, labels: &[usize], k: usize) -> Result<Vec<usize>> {
    knn_impl(&train.coords, labels, &train.coords, k, true)
}

/// Classification metrics. The binary scores are present only when a positive
/// class was given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    /// `confusion[truth][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn metrics(pred: &[usize], truth: &[usize], positive: Option<usize>) -> Result<Metrics> {
    if pred.len() != truth.len() || pred.is_empty() {
        return param_err("predictions and truth must have the same nonzero length");
    }
    let n_classes = pred.iter().chain(truth).max().copied().unwrap_or(0) + 1;
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    let accuracy = correct as f64 / pred.len() as f64;
    let (mut sensitivity, mut specificity, mut f1) = (None, None, None);
    if let Some(pos) = positive {
        let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == pos, t == pos) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fneg += 1,
            }
        }
        if tp + fneg == 0 {
            return Err(TckError::Label(format!(
                "positive class {} is absent from the truth labels",
                pos + 1
            )));
        }
        let sens = tp as f64 / (tp + fneg) as f64;
        let prec = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        sensitivity = Some(sens);
        specificity = Some(if tn + fp == 0 {
            1.0
        } else {
            tn as f64 / (tn + fp) as f64
        });
        f1 = Some(if prec + sens == 0.0 {
            0.0
        } else {
            2.0 * prec * sens / (prec + sens)
        });
    }
    Ok(Metrics {
        accuracy,
        f1,
        sensitivity,
        specificity,
        confusion,
    })
}

/// Mean and standard error (sample std over `sqrt(n)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

pub fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    MeanSe { mean, se }
}

/// Fold index per series. Each class (and the unlabeled group) is shuffled
/// and dealt round-robin, continuing where the previous group stopped.
pub fn stratified_folds(labels: &[Option<usize>], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let n = labels.len();
    if folds < 2 || folds > n {
        return param_err(format!("need 2 <= folds <= {n}, got {folds}"));
    }
    let n_groups = labels.iter().flatten().max().map_or(0, |m| m + 1) + 1;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
    for (i, l) in labels.iter().enumerate() {
        groups[l.map_or(n_groups - 1, |c| c)].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0; n];
    let mut next = 0;
    for g in &mut groups {
        g.shuffle(&mut rng);
        for &i in g.iter() {
            assign[i] = next;
            next = (next + 1) % folds;
        }
    }
    let classes: Vec<usize> = labels.iter().flatten().copied().collect();
    let n_distinct = {
        let mut c = classes.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    };
    if n_distinct >= 2 {
        for f in 0..folds {
            let mut seen: Vec<usize> = labels
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a != f)
                .filter_map(|(l, _)| *l)
                .collect();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() < 2 {
                return Err(TckError::Label(format!(
                    "training split of fold {} holds a single class; use fewer folds",
                    f + 1
                )));
            }
        }
    }
    Ok(assign)
}

/// Per-fold metrics and their aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<Metrics>,
    pub accuracy: MeanSe,
    pub f1: Option<MeanSe>,
    pub sensitivity: Option<MeanSe>,
    pub specificity: Option<MeanSe>,
}

impl CvReport {
    pub fn from_folds(folds: Vec<Metrics>) -> Self {
        let agg = |f: fn(&Metrics) -> Option<f64>| -> Option<MeanSe> {
            folds.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| mean_se(&v))
        };
        let acc: Vec<f64> = folds.iter().map(|m| m.accuracy).collect();
        Self {
            accuracy: mean_se(&acc),
            f1: agg(|m| m.f1),
            sensitivity: agg(|m| m.sensitivity),
            specificity: agg(|m| m.specificity),
            folds,
        }
    }

    /// `fold,accuracy,f1,sensitivity,specificity` rows, then `mean` and `se`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fold", "accuracy", "f1", "sensitivity", "specificity"])?;
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        for (i, m) in self.folds.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                m.accuracy.to_string(),
                opt(m.f1),
                opt(m.sensitivity),
                opt(m.specificity),
            ])?;
        }
        let pick = |f: fn(&MeanSe) -> f64| {
            [Some(self.accuracy), self.f1, self.sensitivity, self.specificity].map(|m| opt(m.as_ref().map(f)))
        };
        for (name, row) in [("mean", pick(|m| m.mean)), ("se", pick(|m| m.se))] {
            let mut rec = vec![name.to_string()];
            rec.extend(row);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Stratified k-fold cross-validation. `pipeline(train, test, fold_seed)` must
/// fit everything it needs on `train` alone and return metrics on `test`.
pub fn kfold<F>(data: &Dataset, folds: usize, seed: u64, mut pipeline: F) -> Result<CvReport>
where
    F: FnMut(&Dataset, &Dataset, u64) -> Result<Metrics>,
{
    let assign = stratified_folds(data.labels(), folds, seed)?;
    let mut out = Vec::with_capacity(folds);
    for f in 0..folds {
        let (test_pos, train_pos): (Vec<usize>, Vec<usize>) = (0..data.n_series()).partition(|&i| assign[i] == f);
        let train = data.subset(&train_pos);
        let test = data.subset(&test_pos);
        out.push(pipeline(&train, &test, mix_seed(seed, f as u64, 0x666f_6c64))?);
    }
    Ok(CvReport::from_folds(out))
}

/// Picks `k` from `grid` by stratified cross-validated kNN accuracy on the
/// training embedding; the smallest `k` wins ties.
pub fn select_k(train: &Embedding, labels: &[usize], grid: &[usize], folds: usize, seed: u64) -> Result<usize> {
    let opt: Vec<Option<usize>> = labels.iter().map(|&l| Some(l)).collect();
    let assign = stratified_folds(&opt, folds, seed)?;
    let mut best = (f64::NEG_INFINITY, 0);
    for &k in grid {
        let mut correct = 0usize;
        let mut usable = true;
        for f in 0..folds {
            let tr: Vec<usize> = (0..labels.len()).filter(|&i| assign[i] != f).collect();
            let te: Vec<usize> = (0..labels.len()).filter(|&i| assign[i] == f).collect();
            if k > tr.len() {
                usable = false;
                break;
            }
            let rows = |idx: &[usize]| DMatrix::from_fn(idx.len(), train.dim(), |r, c| train.coords[(idx[r], c)]);
            let tr_labels: Vec<usize> = tr.iter().map(|&i| labels[i]).collect();
            let pred = knn_impl(&rows(&tr), &tr_labels, &rows(&te), k, false)?;
            correct += pred.iter().zip(&te).filter(|(p, &i)| **p == labels[i]).count();
        }
        if usable && correct as f64 > best.0 {
            best = (correct as f64, k);
        }
    }
    if best.1 == 0 {
        return param_err("no k in the grid fits the cross-validation training splits");
    }
    Ok(best.1)
}

/// `series_id,label,pc1,..,pcD` rows for external plotting.
pub fn write_embedding_csv<W: Write>(
    out: W,
    ids: &[u64],
    labels: &[Option<usize>],
    emb: &Embedding,
    dims: usize,
) -> Result<()> {
    if ids.len() != emb.n_points() || labels.len() != emb.n_points() {
        return param_err("ids, labels and embedding differ in length");
    }
    let dims = dims.min(emb.dim());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["series_id".to_string(), "label".to_string()];
    header.extend((1..=dims).map(|c| format!("pc{c}")));
    w.write_record(&header)?;
    for i in 0..emb.n_points() {
        let mut rec = vec![
            ids[i].to_string(),
            labels[i].map_or(String::new(), |c| (c + 1).to_string()),
        ];
        rec.extend((0..dims).map(|c| emb.coords[(i, c)].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
