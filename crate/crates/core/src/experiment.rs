//! End-to-end pipelines: preprocessing, kernel training, KPCA + kNN evaluation
//! and the VAR(1) benchmark.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{concat_mask, zero_impute, Dataset, StandardizationStats};
use crate::ensemble::{
    assemble, fit_base_models, kernel_test, mix_seed, EnsembleConfig, KernelMatrix, TrainedEnsemble,
};
use crate::error::{param_err, Result, TckError};
use crate::eval::{kfold, knn, kpca, metrics, select_k, CvReport, Embedding, Metrics, DEFAULT_DIM, K_GRID};
use crate::mixture::{EmOptions, Mode};
use crate::synth::{gen_var1, inject_var1_mnar, Var1Params, VAR1_DROP_PROBS, VAR1_DROP_THRESHOLD};
use crate::transform::{LabelThreshold, PosteriorTransform, SemiSupervised, Supervised};

/// Kernel variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Tck,
    SsTck,
    STck,
    TckIm,
    SsTckIm,
    STckIm,
    /// Gaussian-only kernel on data with the mask appended as extra attributes.
    TckB,
    /// Gaussian-only kernel on zero-imputed data.
    Tck0,
}

/// How labels enter the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Supervision {
    None,
    Semi,
    Full,
}

/// Input transformation applied after standardization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prep {
    Plain,
    ConcatMask,
    ZeroImpute,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Tck,
        Variant::SsTck,
        Variant::STck,
        Variant::TckIm,
        Variant::SsTckIm,
        Variant::STckIm,
        Variant::TckB,
        Variant::Tck0,
    ];
    /// The six variants of the VAR(1) comparison.
    pub const TABLE: [Variant; 6] = [
        Variant::Tck,
        Variant::SsTck,
        Variant::STck,
        Variant::TckIm,
        Variant::SsTckIm,
        Variant::STckIm,
    ];

    pub fn mode(self) -> Mode {
        match self {
            Variant::TckIm | Variant::SsTckIm | Variant::STckIm => Mode::MixedMode,
            _ => Mode::GaussianOnly,
        }
    }

    pub fn supervision(self) -> Supervision {
        match self {
            Variant::SsTck | Variant::SsTckIm => Supervision::Semi,
            Variant::STck | Variant::STckIm => Supervision::Full,
            _ => Supervision::None,
        }
    }

    pub fn prep(self) -> Prep {
        match self {
            Variant::TckB => Prep::ConcatMask,
            Variant::Tck0 => Prep::ZeroImpute,
            _ => Prep::Plain,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Tck => "tck",
            Variant::SsTck => "sstck",
            Variant::STck => "stck",
            Variant::TckIm => "tck_im",
            Variant::SsTckIm => "sstck_im",
            Variant::STckIm => "stck_im",
            Variant::TckB => "tck_b",
            Variant::Tck0 => "tck_0",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Tck => "TCK",
            Variant::SsTck => "ssTCK",
            Variant::STck => "sTCK",
            Variant::TckIm => "TCK_IM",
            Variant::SsTckIm => "ssTCK_IM",
            Variant::STckIm => "sTCK_IM",
            Variant::TckB => "TCK_B",
            Variant::Tck0 => "TCK_0",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = TckError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| TckError::Parameter(format!("unknown variant `{s}`")))
    }
}

/// Neighbour count for the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KChoice {
    Fixed(usize),
    /// Chosen from [`K_GRID`] by 5-fold CV on the training embedding.
    CrossValidated,
}

/// Settings shared by every variant of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Initializations per component count.
    pub n_inits: usize,
    /// Component counts run from `N_c` to `N_c + extra_components`.
    pub extra_components: usize,
    pub kpca_dim: usize,
    pub center: bool,
    pub k: KChoice,
    pub h: f64,
    /// Labeled training series for the semi-supervised variants; defaults to
    /// `max(20, 3 N_c)`.
    pub n_labeled: Option<usize>,
    pub normalize_by_models: bool,
    pub em: EmOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_inits: 30,
            extra_components: 20,
            kpca_dim: DEFAULT_DIM,
            center: true,
            k: KChoice::Fixed(1),
            h: 0.1,
            n_labeled: None,
            normalize_by_models: false,
            em: EmOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn ensemble_config(&self, n_classes: usize, mode: Mode, seed: u64) -> EnsembleConfig {
        let mut cfg = EnsembleConfig::new(n_classes, mode, seed);
        cfg.n_inits = self.n_inits;
        cfg.components = (n_classes.max(1)..=n_classes.max(1) + self.extra_components).collect();
        cfg.normalize_by_models = self.normalize_by_models;
        cfg.em = self.em;
        cfg
    }

    pub fn n_labeled_for(&self, n_classes: usize) -> usize {
        self.n_labeled.unwrap_or((3 * n_classes).max(20))
    }
}

/// Keeps `n_labeled` labels chosen at random within each class, in
/// proportion to class size (at least one per class when possible).
pub fn label_subset(labels: &[usize], n_classes: usize, n_labeled: usize, seed: u64) -> Vec<Option<usize>> {
    let n = labels.len();
    let target = n_labeled.min(n);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in &mut by_class {
        c.shuffle(&mut rng);
    }
    // Largest-remainder allocation.
    let mut quota: Vec<usize> = by_class.iter().map(|c| c.len() * target / n.max(1)).collect();
    for (q, c) in quota.iter_mut().zip(&by_class) {
        if *q == 0 && !c.is_empty() && target >= n_classes {
            *q = 1;
        }
    }
    let mut rem: Vec<usize> = (0..n_classes).collect();
    rem.sort_by_key(|&c| std::cmp::Reverse((by_class[c].len() * target) % n.max(1)));
    let mut i = 0;
    while quota.iter().sum::<usize>() < target {
        let c = rem[i % n_classes];
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
        }
        i += 1;
    }
    let mut out = vec![None; n];
    for (c, members) in by_class.iter().enumerate() {
        for &i in members.iter().take(quota[c]) {
            out[i] = Some(c);
        }
    }
    out
}

/// Standardizes with training statistics and applies the variant's input transformation.
pub fn preprocess(train: &Dataset, test: &Dataset, prep: Prep) -> Result<(Dataset, Dataset, StandardizationStats)> {
    let stats = StandardizationStats::fit(train)?;
    let (tr, te) = (stats.apply(train)?, stats.apply(test)?);
    let (tr, te) = match prep {
        Prep::Plain => (tr, te),
        Prep::ConcatMask => (concat_mask(&tr), concat_mask(&te)),
        Prep::ZeroImpute => (zero_impute(&tr), zero_impute(&te)),
    };
    Ok((tr, te, stats))
}

/// Kernels and predictions of one variant.
#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub ensemble: TrainedEnsemble,
    pub train_kernel: KernelMatrix,
    pub test_kernel: KernelMatrix,
    pub train_embedding: Embedding,
    pub test_embedding: Embedding,
    pub k: usize,
    pub predictions: Vec<usize>,
    pub metrics: Metrics,
}

fn transform_for(
    variant: Variant,
    labels: &[usize],
    n_classes: usize,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Option<Box<dyn PosteriorTransform>>> {
    Ok(match variant.supervision() {
        Supervision::None => None,
        Supervision::Full => Some(Box::new(Supervised {
            labels: labels.to_vec(),
            n_classes,
        })),
        Supervision::Semi => Some(Box::new(SemiSupervised {
            labels: label_subset(labels, n_classes, cfg.n_labeled_for(n_classes), mix_seed(seed, 4, 0)),
            n_classes,
            h: LabelThreshold::new(cfg.h)?,
        })),
    })
}

/// Trains each requested variant on `train` and evaluates it on `test`.
///
/// Variants that share a mixture mode and input transformation share their
/// base models; only the posterior transform differs between them.
pub fn run_variants(
    train: &Dataset,
    test: &Dataset,
    variants: &[Variant],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<VariantOutcome>> {
    let labels = train.full_labels()?;
    let truth = test.full_labels()?;
    let n_classes = train.n_classes();
    let positive = (n_classes == 2).then_some(1);
    let mut out = Vec::with_capacity(variants.len());
    let mut groups: Vec<(Mode, Prep)> = Vec::new();
    for v in variants {
        if !groups.contains(&(v.mode(), v.prep())) {
            groups.push((v.mode(), v.prep()));
        }
    }
    for (mode, prep) in groups {
        let (tr, te, _) = preprocess(train, test, prep)?;
        let ens_cfg = cfg.ensemble_config(n_classes, mode, mix_seed(seed, 3, 0));
        let max_c = ens_cfg.components.iter().max().copied().unwrap_or(1);
        if tr.n_series() < max_c {
            return param_err(format!(
                "{} training series but up to {max_c} mixture components; lower the component range",
                tr.n_series()
            ));
        }
        let fitted = fit_base_models(&tr, &ens_cfg)?;
        for &variant in variants.iter().filter(|v| v.mode() == mode && v.prep() == prep) {
            let transform = transform_for(variant, &labels, n_classes, cfg, seed)?;
            let (ensemble, train_kernel) = assemble(&fitted, transform.as_deref())?;
            let test_kernel = kernel_test(&ensemble, &te)?;
            let (train_embedding, proj) = kpca(&train_kernel, cfg.kpca_dim, cfg.center)?;
            let test_embedding = proj.project(&test_kernel)?;
            let k = match cfg.k {
                KChoice::Fixed(k) => k,
                KChoice::CrossValidated => select_k(&train_embedding, &labels, &K_GRID, 5, mix_seed(seed, 5, 0))?,
            };
            let predictions = knn(&train_embedding, &labels, &test_embedding, k)?;
            let metrics = metrics(&predictions, &truth, positive)?;
            log::info!("{}: accuracy {:.4}", variant.display_name(), metrics.accuracy);
            out.push(VariantOutcome {
                variant,
                ensemble,
                train_kernel,
                test_kernel,
                train_embedding,
                test_embedding,
                k,
                predictions,
                metrics,
            });
        }
    }
    out.sort_by_key(|o| variants.iter().position(|v| *v == o.variant));
    Ok(out)
}

/// Stratified k-fold evaluation of one variant; every fold refits the
/// standardization and the ensemble on its training split.
pub fn cross_validate(
    data: &Dataset,
    variant: Variant,
    cfg: &PipelineConfig,
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    kfold(data, folds, seed, |train, test, fold_seed| {
        let mut res = run_variants(train, test, &[variant], cfg, fold_seed)?;
        Ok(res.remove(0).metrics)
    })
}

/// Published accuracies on the VAR(1) benchmark.
pub const VAR1_TARGETS: [(Variant, f64); 6] = [
    (Variant::Tck, 0.826),
    (Variant::SsTck, 0.854),
    (Variant::STck, 0.867),
    (Variant::TckIm, 0.933),
    (Variant::SsTckIm, 0.967),
    (Variant::STckIm, 0.970),
];
/// Allowed absolute deviation from each published accuracy.
pub const ACCURACY_TOLERANCE: f64 = 0.05;
/// Slack on the ordering claims.
pub const ORDERING_SLACK: f64 = 0.02;
/// Required advantage of TCK_IM over TCK.
pub const IM_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub variant: Variant,
    pub target: f64,
    pub measured: f64,
    pub pass: bool,
}

/// `lhs - rhs >= margin - slack`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingClaim {
    pub claim: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Var1Report {
    pub seed: u64,
    pub train_missing_rate: f64,
    pub test_missing_rate: f64,
    pub rows: Vec<AccuracyRow>,
    pub orderings: Vec<OrderingClaim>,
}

impl Var1Report {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.orderings.iter().all(|c| c.pass)
    }

    pub fn accuracy(&self, v: Variant) -> Option<f64> {
        self.rows.iter().find(|r| r.variant == v).map(|r| r.measured)
    }

    pub fn from_accuracies(
        seed: u64,
        train_missing_rate: f64,
        test_missing_rate: f64,
        acc: &[(Variant, f64)],
    ) -> Result<Self> {
        let get = |v: Variant| {
            acc.iter()
                .find(|(w, _)| *w == v)
                .map(|&(_, a)| a)
                .ok_or_else(|| TckError::Parameter(format!("missing accuracy for {}", v.display_name())))
        };
        let rows = VAR1_TARGETS
            .iter()
            .map(|&(variant, target)| {
                let measured = get(variant)?;
                Ok(AccuracyRow {
                    variant,
                    target,
                    measured,
                    pass: (measured - target).abs() <= ACCURACY_TOLERANCE + 1e-12,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let claim = |lhs: Variant, rhs: Variant, margin: f64| -> Result<OrderingClaim> {
            let (a, b) = (get(lhs)?, get(rhs)?);
            Ok(OrderingClaim {
                claim: format!("{} - {} >= {margin}", lhs.display_name(), rhs.display_name()),
                lhs: a,
                rhs: b,
                margin,
                pass: a - b >= margin - ORDERING_SLACK - 1e-12,
            })
        };
        let orderings = vec![
            claim(Variant::TckIm, Variant::Tck, IM_MARGIN)?,
            claim(Variant::STck, Variant::SsTck, 0.0)?,
            claim(Variant::SsTck, Variant::Tck, 0.0)?,
            claim(Variant::STckIm, Variant::SsTckIm, 0.0)?,
            claim(Variant::SsTckIm, Variant::TckIm, 0.0)?,
        ];
        Ok(Self {
            seed,
            train_missing_rate,
            test_missing_rate,
            rows,
            orderings,
        })
    }

    /// Plain-text comparison table.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "VAR(1) benchmark, seed {}, missing rate train {:.3} / test {:.3}\n",
            self.seed, self.train_missing_rate, self.test_missing_rate
        );
        s.push_str(&format!(
            "{:<10} {:>8} {:>9} {:>7}\n",
            "kernel", "target", "measured", "result"
        ));
        for r in &self.rows {
            s.push_str(&format!(
                "{:<10} {:>8.3} {:>9.3} {:>7}\n",
                r.variant.display_name(),
                r.target,
                r.measured,
                if r.pass { "pass" } else { "FAIL" }
            ));
        }
        for c in &self.orderings {
            s.push_str(&format!(
                "{:<28} {:.3} vs {:.3} {:>7}\n",
                c.claim,
                c.lhs,
                c.rhs,
                if c.pass { "pass" } else { "FAIL" }
            ));
        }
        s
    }
}

/// Generates MNAR VAR(1) data and returns `(train, test)`.
pub fn var1_benchmark_data(seed: u64) -> Result<(Dataset, Dataset)> {
    let split = gen_var1(&Var1Params::default(), seed)?;
    let train = inject_var1_mnar(
        &split.train,
        &VAR1_DROP_PROBS,
        VAR1_DROP_THRESHOLD,
        mix_seed(seed, 6, 1),
    )?;
    let test = inject_var1_mnar(&split.test, &VAR1_DROP_PROBS, VAR1_DROP_THRESHOLD, mix_seed(seed, 6, 2))?;
    Ok((train, test))
}

/// Runs the six-variant VAR(1) comparison.
pub fn reproduce_var1(seed: u64, cfg: &PipelineConfig) -> Result<(Var1Report, Vec<VariantOutcome>)> {
    let (train, test) = var1_benchmark_data(seed)?;
    let outcomes = run_variants(&train, &test, &Variant::TABLE, cfg, seed)?;
    let acc: Vec<(Variant, f64)> = outcomes.iter().map(|o| (o.variant, o.metrics.accuracy)).collect();
    let report = Var1Report::from_accuracies(seed, train.missing_fraction(), test.missing_fraction(), &acc)?;
    Ok((report, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("ssTCK-IM".parse::<Variant>().unwrap(), Variant::SsTckIm);
        assert!("gak".parse::<Variant>().is_err());
    }

    #[test]
    fn label_subset_counts() {
        let labels: Vec<usize> = (0..200).map(|i| (i >= 100) as usize).collect();
        let s = label_subset(&labels, 2, 20, 1);
        assert_eq!(s.iter().flatten().count(), 20);
        assert_eq!(s.iter().filter(|l| **l == Some(0)).count(), 10);
        for (i, l) in s.iter().enumerate() {
            if let Some(c) = l {
                assert_eq!(*c, labels[i]);
            }
        }
        let skew: Vec<usize> = (0..30).map(|i| (i >= 28) as usize).collect();
        let s = label_subset(&skew, 2, 5, 2);
        assert_eq!(s.iter().flatten().count(), 5);
        assert!(s.contains(&Some(1)));
    }

    #[test]
    fn default_label_budget() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.n_labeled_for(2), 20);
        assert_eq!(cfg.n_labeled_for(20), 60);
    }

    #[test]
    fn report_orderings() {
        let acc: Vec<(Variant, f64)> = VAR1_TARGETS.to_vec();
        let r = Var1Report::from_accuracies(1, 0.63, 0.63, &acc).unwrap();
        assert!(r.all_pass());
        let mut worse = acc.clone();
        worse[3].1 = 0.85;
        let r = Var1Report::from_accuracies(1, 0.63, 0.63, &worse).unwrap();
        assert!(!r.orderings[0].pass);
        assert!(!r.rows[3].pass);
    }
}
