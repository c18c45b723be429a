//! Randomized ensemble of mixture models and the resulting cluster kernel.
//!
//! Every base model `q = (q1, q2)` is fitted on a random subsample of series
//! restricted to a random contiguous time segment and a random attribute
//! subset. The kernel accumulates, over all successful base models, the
//! cosine similarity of the (optionally label-transformed) posterior vectors.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MaskedMts};
use crate::error::{param_err, Result, TckError};
use crate::mixture::{e_step, fit_map_em, EmOptions, HyperParams, MixtureParams, Mode, ParamsRecord, PosteriorMatrix};
use crate::transform::{apply_transform, PosteriorTransform, TransformMatrix};

/// Largest tolerated share of failed base models.
pub const MAX_FAILURE_RATE: f64 = 0.1;
const INIT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; used to derive independent RNG seeds.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform sampling intervals for the hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpRanges {
    pub a0: (f64, f64),
    pub b0: (f64, f64),
    pub n0: (f64, f64),
}

impl Default for HpRanges {
    fn default() -> Self {
        Self {
            a0: (0.001, 1.0),
            b0: (0.005, 0.2),
            n0: (0.001, 0.2),
        }
    }
}

/// Ensemble settings. `None` bounds resolve from the data shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Random initializations per component count (`Q`).
    pub n_inits: usize,
    /// Component counts (`I_C`).
    pub components: Vec<usize>,
    pub t_min: usize,
    pub t_max: Option<usize>,
    pub v_min: Option<usize>,
    pub v_max: Option<usize>,
    pub n_min: Option<usize>,
    pub hp_ranges: HpRanges,
    pub seed: u64,
    pub mode: Mode,
    pub normalize_by_models: bool,
    pub em: EmOptions,
}

impl EnsembleConfig {
    /// `Q = 30`, `I_C = {N_c, ..., N_c + 20}`.
    pub fn new(n_classes: usize, mode: Mode, seed: u64) -> Self {
        let first = n_classes.max(1);
        Self {
            n_inits: 30,
            components: (first..=first + 20).collect(),
            t_min: 6,
            t_max: None,
            v_min: None,
            v_max: None,
            n_min: None,
            hp_ranges: HpRanges::default(),
            seed,
            mode,
            normalize_by_models: false,
            em: EmOptions::default(),
        }
    }

    pub fn model_count(&self) -> usize {
        self.n_inits * self.components.len()
    }
}

/// Sampling bounds after defaults are filled in from the data shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedBounds {
    pub t_min: usize,
    pub t_max: usize,
    pub v_min: usize,
    pub v_max: usize,
    pub n_min: usize,
    pub n: usize,
}

impl EnsembleConfig {
    pub fn resolve(&self, n: usize, n_attrs: usize, len: usize) -> Result<ResolvedBounds> {
        if self.n_inits == 0 || self.components.is_empty() {
            return param_err("ensemble needs Q >= 1 and a nonempty component set");
        }
        if self.components.contains(&0) {
            return param_err("component counts must be at least 1");
        }
        if len < self.t_min {
            return param_err(format!(
                "series length {len} is shorter than T_min = {}; lower T_min",
                self.t_min
            ));
        }
        let t_max = self.t_max.unwrap_or(len);
        let v_min = self.v_min.unwrap_or(if n_attrs == 1 { 1 } else { 2 });
        let v_max = self.v_max.unwrap_or(n_attrs);
        let n_min = self.n_min.unwrap_or_else(|| (0.8 * n as f64).ceil() as usize);
        if self.t_min < 1 || self.t_min > t_max || t_max > len {
            return param_err(format!(
                "need 1 <= T_min <= T_max <= T, got {} / {t_max} / {len}",
                self.t_min
            ));
        }
        if v_min < 1 || v_min > v_max || v_max > n_attrs {
            return param_err(format!(
                "need 1 <= V_min <= V_max <= V, got {v_min} / {v_max} / {n_attrs}"
            ));
        }
        let g_max = *self.components.iter().max().expect("nonempty");
        if n < g_max {
            return param_err(format!(
                "{n} training series but up to {g_max} components requested; reduce I_C or add data"
            ));
        }
        if n_min > n || n_min == 0 {
            return param_err(format!("N_min = {n_min} must lie in [1, {n}]"));
        }
        Ok(ResolvedBounds {
            t_min: self.t_min,
            t_max,
            v_min,
            v_max,
            n_min,
            n,
        })
    }
}

/// Random choices of one base model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseModelSpec {
    /// Initialization index, `1..=Q`.
    pub q1: usize,
    /// Number of components.
    pub q2: usize,
    pub hp: HyperParams,
    /// Contiguous time segment (0-based, half-open).
    pub segment: Range<usize>,
    /// Sorted attribute indices.
    pub attributes: Vec<usize>,
    /// Sorted ids of the series the model is fitted on.
    pub subsample: Vec<u64>,
    pub sub_seed: u64,
}

impl BaseModelSpec {
    pub fn tag(&self) -> String {
        format!("{:03}_{:03}", self.q1, self.q2)
    }

    fn restrict(&self, s: &MaskedMts) -> MaskedMts {
        s.restrict(&self.attributes, self.segment.clone())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// One spec per `(q1, q2)`, each drawn from its own seed-derived stream.
///
/// Subsamples are drawn from the sorted series ids, so specs do not depend on
/// the order of the dataset.
pub fn sample_configs(cfg: &EnsembleConfig, ids: &[u64], n_attrs: usize, len: usize) -> Result<Vec<BaseModelSpec>> {
    let b = cfg.resolve(ids.len(), n_attrs, len)?;
    let r = &cfg.hp_ranges;
    for (name, (l, h)) in [("a0", r.a0), ("b0", r.b0), ("N0", r.n0)] {
        if !(l > 0.0 && h >= l) {
            return param_err(format!("invalid sampling range for {name}: [{l}, {h}]"));
        }
    }
    let mut sorted_ids = ids.to_vec();
    sorted_ids.sort_unstable();
    if sorted_ids.windows(2).any(|w| w[0] == w[1]) {
        return param_err("series ids must be unique");
    }

    let mut specs = Vec::with_capacity(cfg.model_count());
    for q1 in 1..=cfg.n_inits {
        for &q2 in &cfg.components {
            let sub_seed = mix_seed(cfg.seed, q1 as u64, q2 as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
            let hp = HyperParams {
                a0: uniform(&mut rng, cfg.hp_ranges.a0),
                b0: uniform(&mut rng, cfg.hp_ranges.b0),
                n0: uniform(&mut rng, cfg.hp_ranges.n0),
            };
            let seg_len = rng.random_range(b.t_min..=b.t_max);
            let start = rng.random_range(0..=len - seg_len);
            let n_vars = rng.random_range(b.v_min..=b.v_max);
            let mut attributes = sample(&mut rng, n_attrs, n_vars).into_vec();
            attributes.sort_unstable();
            let n_sub = rng.random_range(b.n_min.max(q2)..=b.n);
            let mut subsample: Vec<u64> = sample(&mut rng, b.n, n_sub)
                .into_iter()
                .map(|i| sorted_ids[i])
                .collect();
            subsample.sort_unstable();
            specs.push(BaseModelSpec {
                q1,
                q2,
                hp,
                segment: start..start + seg_len,
                attributes,
                subsample,
                sub_seed,
            });
        }
    }
    Ok(specs)
}

/// A base model that could not be fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedModel {
    pub q1: usize,
    pub q2: usize,
    pub reason: String,
}

/// A fitted base model with untransformed posteriors for every training series.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: BaseModelSpec,
    pub params: MixtureParams,
    pub posteriors: PosteriorMatrix,
}

/// All base models of an ensemble before any label transform is attached.
#[derive(Debug, Clone)]
pub struct FittedEnsemble {
    pub config: EnsembleConfig,
    pub n_attrs: usize,
    pub len: usize,
    pub train_ids: Vec<u64>,
    pub models: Vec<FittedModel>,
    pub failures: Vec<FailedModel>,
}

fn fit_one(
    data: &Dataset,
    positions: &HashMap<u64, usize>,
    spec: &BaseModelSpec,
    cfg: &EnsembleConfig,
) -> Result<FittedModel> {
    let sub: Vec<MaskedMts> = spec
        .subsample
        .iter()
        .map(|id| spec.restrict(&data.series()[positions[id]]))
        .collect();
    let fit = fit_map_em(&sub, cfg.mode, spec.q2, &spec.hp, spec.sub_seed ^ INIT_STREAM, &cfg.em)?;
    let all: Vec<MaskedMts> = data.series().iter().map(|s| spec.restrict(s)).collect();
    let posteriors = e_step(&fit.params, &all)?;
    Ok(FittedModel {
        spec: spec.clone(),
        params: fit.params,
        posteriors,
    })
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if total == 0 || failed as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(TckError::TooManyFailures { failed, total });
    }
    Ok(())
}

/// Fits every base model (in parallel) without building a kernel.
pub fn fit_base_models(data: &Dataset, cfg: &EnsembleConfig) -> Result<FittedEnsemble> {
    let train_ids: Vec<u64> = data.series().iter().map(|s| s.id).collect();
    let specs = sample_configs(cfg, &train_ids, data.n_attrs(), data.len())?;
    let positions: HashMap<u64, usize> = train_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let results: Vec<Result<FittedModel>> = specs
        .par_iter()
        .map(|spec| fit_one(data, &positions, spec, cfg))
        .collect();

    let mut models = Vec::with_capacity(specs.len());
    let mut failures = Vec::new();
    for (spec, res) in specs.iter().zip(results) {
        match res {
            Ok(m) => models.push(m),
            Err(e) => {
                log::debug!("base model {} failed: {e}", spec.tag());
                failures.push(FailedModel {
                    q1: spec.q1,
                    q2: spec.q2,
                    reason: e.to_string(),
                });
            }
        }
    }
    check_failures(failures.len(), specs.len())?;
    Ok(FittedEnsemble {
        config: cfg.clone(),
        n_attrs: data.n_attrs(),
        len: data.len(),
        train_ids,
        models,
        failures,
    })
}

/// A base model as stored in a trained ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseModel {
    pub spec: BaseModelSpec,
    pub params: MixtureParams,
    /// Training posteriors, transformed when `transform` is present.
    pub posteriors: PosteriorMatrix,
    pub transform: Option<TransformMatrix>,
}

/// Trained ensemble: everything needed to evaluate the kernel on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEnsemble {
    pub config: EnsembleConfig,
    pub n_attrs: usize,
    pub len: usize,
    pub train_ids: Vec<u64>,
    pub models: Vec<BaseModel>,
    pub failures: Vec<FailedModel>,
}

/// Dense kernel matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Number of base models accumulated.
    pub model_count: usize,
    pub normalized: bool,
    data: Vec<f64>,
}

impl KernelMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            model_count: 0,
            normalized: false,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, model_count: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return param_err("kernel data length differs from rows * cols");
        }
        Ok(Self {
            rows,
            cols,
            model_count,
            normalized: false,
            data,
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// Transposed copy (`M x N` for a test kernel).
    pub fn transpose(&self) -> KernelMatrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.get(i, j);
            }
        }
        KernelMatrix {
            rows: self.cols,
            cols: self.rows,
            model_count: self.model_count,
            normalized: self.normalized,
            data,
        }
    }

    fn divide_by_models(&mut self) {
        if self.model_count > 0 {
            let c = self.model_count as f64;
            self.data.iter_mut().for_each(|x| *x /= c);
            self.normalized = true;
        }
    }

    /// Dense CSV: a `rows,cols,model_count` line, then one line per row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{},{},{}", self.rows, self.cols, self.model_count)?;
        for i in 0..self.rows {
            let line: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let header = lines.next().transpose()?.ok_or(TckError::Format {
            line: 1,
            msg: "empty kernel file".into(),
        })?;
        let dims: Vec<usize> = header
            .split(',')
            .map(|x| x.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| TckError::Format {
                line: 1,
                msg: "expected `n,m,model_count`".into(),
            })?;
        let [rows, cols, model_count] = dims[..] else {
            return Err(TckError::Format {
                line: 1,
                msg: "expected `n,m,model_count`".into(),
            });
        };
        let mut data = Vec::with_capacity(rows * cols);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| TckError::Format {
                    line: i + 2,
                    msg: "non-numeric kernel entry".into(),
                })?;
            if row.len() != cols {
                return Err(TckError::Format {
                    line: i + 2,
                    msg: format!("expected {cols} entries, found {}", row.len()),
                });
            }
            data.extend(row);
        }
        if data.len() != rows * cols {
            return Err(TckError::Format {
                line: rows + 1,
                msg: format!("expected {rows} rows"),
            });
        }
        Self::from_vec(rows, cols, model_count, data)
    }
}

/// Cosine similarity of two nonnegative vectors, clamped to `[0, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(TckError::Numerical("cosine of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

/// Rows scaled to unit l2 norm.
fn unit_rows(post: &PosteriorMatrix) -> Result<Vec<Vec<f64>>> {
    post.rows()
        .map(|r| {
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(TckError::Numerical("posterior vector with zero norm".into()));
            }
            Ok(r.iter().map(|x| x / norm).collect())
        })
        .collect()
}

#[inline]
fn unit_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(0.0, 1.0)
}

fn attach_transform(m: &FittedModel, transform: Option<&dyn PosteriorTransform>) -> Result<BaseModel> {
    let (posteriors, w) = match transform {
        None => (m.posteriors.clone(), None),
        Some(t) => {
            let mut w = t.fit(&m.posteriors, &m.params)?;
            w.source = Some((m.spec.q1, m.spec.q2));
            let p = m.posteriors.map_rows(w.n_classes, |r| apply_transform(&w, r));
            (p, Some(w))
        }
    };
    Ok(BaseModel {
        spec: m.spec.clone(),
        params: m.params.clone(),
        posteriors,
        transform: w,
    })
}

/// Attaches the optional transform to every base model and accumulates the
/// training kernel in base-model order.
pub fn assemble(
    fitted: &FittedEnsemble,
    transform: Option<&dyn PosteriorTransform>,
) -> Result<(TrainedEnsemble, KernelMatrix)> {
    let attached: Vec<Result<BaseModel>> = fitted
        .models
        .par_iter()
        .map(|m| attach_transform(m, transform))
        .collect();
    let mut models = Vec::with_capacity(attached.len());
    let mut failures = fitted.failures.clone();
    for (m, res) in fitted.models.iter().zip(attached) {
        match res {
            Ok(b) => models.push(b),
            Err(e) => failures.push(FailedModel {
                q1: m.spec.q1,
                q2: m.spec.q2,
                reason: format!("transform: {e}"),
            }),
        }
    }
    check_failures(failures.len(), fitted.config.model_count())?;

    let n = fitted.train_ids.len();
    let mut k = KernelMatrix::zeros(n, n);
    let units: Vec<Vec<Vec<f64>>> = models
        .par_iter()
        .map(|m| unit_rows(&m.posteriors))
        .collect::<Result<_>>()?;
    for u in &units {
        for i in 0..n {
            k.data[i * n + i] += 1.0;
            for j in (i + 1)..n {
                let c = unit_dot(&u[i], &u[j]);
                k.data[i * n + j] += c;
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            k.data[j * n + i] = k.data[i * n + j];
        }
    }
    k.model_count = models.len();
    if fitted.config.normalize_by_models {
        k.divide_by_models();
    }
    let ens = TrainedEnsemble {
        config: fitted.config.clone(),
        n_attrs: fitted.n_attrs,
        len: fitted.len,
        train_ids: fitted.train_ids.clone(),
        models,
        failures,
    };
    Ok((ens, k))
}

/// Fits the ensemble and returns it with its `N x N` training kernel.
pub fn train_ensemble(
    data: &Dataset,
    cfg: &EnsembleConfig,
    transform: Option<&dyn PosteriorTransform>,
) -> Result<(TrainedEnsemble, KernelMatrix)> {
    let fitted = fit_base_models(data, cfg)?;
    assemble(&fitted, transform)
}

/// `N x M` kernel between the training series and `test`.
pub fn kernel_test(ens: &TrainedEnsemble, test: &Dataset) -> Result<KernelMatrix> {
    if test.n_attrs() != ens.n_attrs || test.len() != ens.len {
        return Err(TckError::Schema(format!(
            "test data is {}x{}, ensemble was trained on {}x{}",
            test.n_attrs(),
            test.len(),
            ens.n_attrs,
            ens.len
        )));
    }
    let n = ens.train_ids.len();
    let m = test.n_series();
    let mut k = KernelMatrix::zeros(n, m);
    k.model_count = ens.models.len();
    if m == 0 {
        return Ok(k);
    }
    let per_model: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = ens
        .models
        .par_iter()
        .map(|bm| {
            let restricted: Vec<MaskedMts> = test.series().iter().map(|s| bm.spec.restrict(s)).collect();
            let raw = e_step(&bm.params, &restricted)?;
            let post = match &bm.transform {
                Some(w) => raw.map_rows(w.n_classes, |r| apply_transform(w, r)),
                None => raw,
            };
            Ok((unit_rows(&bm.posteriors)?, unit_rows(&post)?))
        })
        .collect::<Result<_>>()?;
    for (train_u, test_u) in &per_model {
        for i in 0..n {
            for j in 0..m {
                k.data[i * m + j] += unit_dot(&train_u[i], &test_u[j]);
            }
        }
    }
    if ens.config.normalize_by_models {
        k.divide_by_models();
    }
    Ok(k)
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: EnsembleConfig,
    n_attrs: usize,
    len: usize,
    train_ids: Vec<u64>,
    failures: Vec<FailedModel>,
    models: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    q1: usize,
    q2: usize,
    sub_seed: u64,
    params_file: String,
    transform_file: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    spec: BaseModelSpec,
    record: ParamsRecord,
    posteriors: PosteriorMatrix,
}

impl TrainedEnsemble {
    /// Writes `manifest.json`, one `model_<q1>_<q2>.json` per base model and a
    /// `transform_<q1>_<q2>.json` per attached transform.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.models.len());
        for m in &self.models {
            let tag = m.spec.tag();
            let params_file = format!("model_{tag}.json");
            let file = ModelFile {
                spec: m.spec.clone(),
                record: ParamsRecord {
                    params: m.params.clone(),
                    hp: m.spec.hp,
                    seed: m.spec.sub_seed,
                },
                posteriors: m.posteriors.clone(),
            };
            serde_json::to_writer(BufWriter::new(File::create(dir.join(&params_file))?), &file)?;
            let transform_file = match &m.transform {
                Some(w) => {
                    let name = format!("transform_{tag}.json");
                    serde_json::to_writer(BufWriter::new(File::create(dir.join(&name))?), w)?;
                    Some(name)
                }
                None => None,
            };
            entries.push(ManifestEntry {
                q1: m.spec.q1,
                q2: m.spec.q2,
                sub_seed: m.spec.sub_seed,
                params_file,
                transform_file,
            });
        }
        let manifest = Manifest {
            config: self.config.clone(),
            n_attrs: self.n_attrs,
            len: self.len,
            train_ids: self.train_ids.clone(),
            failures: self.failures.clone(),
            models: entries,
        };
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("manifest.json"))?), &manifest)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(dir.join("manifest.json"))?))?;
        let mut models = Vec::with_capacity(manifest.models.len());
        for e in &manifest.models {
            let file: ModelFile = serde_json::from_reader(BufReader::new(File::open(dir.join(&e.params_file))?))?;
            file.record.params.validate()?;
            let transform = match &e.transform_file {
                Some(name) => Some(serde_json::from_reader(BufReader::new(File::open(dir.join(name))?))?),
                None => None,
            };
            models.push(BaseModel {
                spec: file.spec,
                params: file.record.params,
                posteriors: file.posteriors,
                transform,
            });
        }
        Ok(Self {
            config: manifest.config,
            n_attrs: manifest.n_attrs,
            len: manifest.len,
            train_ids: manifest.train_ids,
            models,
            failures: manifest.failures,
        })
    }
}
