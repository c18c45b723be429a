//! Command arguments. Every field can also come from a TOML config file whose
//! keys mirror the long flag names (with underscores); flags take precedence.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "TCK_OUTPUT_ROOT";

pub fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

/// `--out` if given, else `$TCK_OUTPUT_ROOT/<command>`, else `tck-output/<command>`.
pub fn output_dir(out: Option<PathBuf>, command: &str) -> PathBuf {
    out.unwrap_or_else(|| {
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("tck-output"));
        root.join(command)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    /// Two-class VAR(1) train/test sets with MNAR missingness.
    Var1,
    /// Label-correlated missing rates on an existing dataset.
    Mar,
    /// Label-correlated missing rates restricted to values above the attribute mean.
    Mnar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    Var1,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct GenerateArgs {
    /// TOML file with default values for these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub recipe: Option<Recipe>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// VAR(1) only: skip the missingness injection.
    #[arg(long)]
    pub no_missing: bool,
    /// Input dataset for the `mar` and `mnar` recipes.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Informativeness parameter E.
    #[arg(long)]
    pub e: Option<f64>,
    /// Tune E to reach this mean absolute rate/label correlation.
    #[arg(long, conflicts_with = "e")]
    pub target_corr: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl GenerateArgs {
    pub fn merge(self, file: Self) -> Self {
        Self {
            config: self.config,
            recipe: self.recipe.or(file.recipe),
            seed: self.seed.or(file.seed),
            no_missing: self.no_missing || file.no_missing,
            input: self.input.or(file.input),
            labels: self.labels.or(file.labels),
            e: self.e.or(file.e),
            target_corr: self.target_corr.or(file.target_corr),
            out: self.out.or(file.out),
        }
    }
}

/// Ensemble and pipeline options shared by `train`, `eval --folds` and `reproduce`.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct EnsembleArgs {
    /// Random initializations per component count.
    #[arg(long)]
    pub n_inits: Option<usize>,
    /// Component counts run from N_c to N_c + this value.
    #[arg(long)]
    pub extra_components: Option<usize>,
    /// Anchoring threshold for the semi-supervised variants.
    #[arg(long)]
    pub h: Option<f64>,
    /// Labeled training series kept for the semi-supervised variants.
    #[arg(long)]
    pub n_labeled: Option<usize>,
    /// Divide kernels by the number of base models.
    #[arg(long)]
    pub normalize: bool,
}

impl EnsembleArgs {
    pub fn merge(self, file: Self) -> Self {
        Self {
            n_inits: self.n_inits.or(file.n_inits),
            extra_components: self.extra_components.or(file.extra_components),
            h: self.h.or(file.h),
            n_labeled: self.n_labeled.or(file.n_labeled),
            normalize: self.normalize || file.normalize,
        }
    }
}

/// Embedding and classifier options.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct ClassifierArgs {
    /// KPCA dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Neighbours for kNN.
    #[arg(long)]
    pub k: Option<usize>,
    /// Pick k from {1,3,5,7,9} by 5-fold CV on the training embedding.
    #[arg(long, conflicts_with = "k")]
    pub k_cv: bool,
    /// Skip kernel centering before KPCA.
    #[arg(long)]
    pub no_center: bool,
}

impl ClassifierArgs {
    pub fn merge(self, file: Self) -> Self {
        Self {
            dim: self.dim.or(file.dim),
            k: self.k.or(file.k),
            k_cv: self.k_cv || file.k_cv,
            no_center: self.no_center || file.no_center,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Training data CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Label CSV; blank labels mark unlabeled series.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// tck, sstck, stck, tck_im, sstck_im, stck_im, tck_b or tck_0.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl TrainArgs {
    pub fn merge(self, file: Self) -> Self {
        Self {
            config: self.config,
            data: self.data.or(file.data),
            labels: self.labels.or(file.labels),
            variant: self.variant.or(file.variant),
            seed: self.seed.or(file.seed),
            ensemble: self.ensemble.merge(file.ensemble),
            out: self.out.or(file.out),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory of `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    /// Dataset for cross-validation (with `--folds`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Variant trained in each fold.
    #[arg(long)]
    pub variant: Option<String>,
    /// Run stratified k-fold cross-validation on `--data`.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Positive class (1-based) for sensitivity, specificity and F1.
    #[arg(long)]
    pub positive: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub classifier: ClassifierArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl EvalArgs {
    pub fn merge(self, file: Self) -> Self {
        Self {
            config: self.config,
            model: self.model.or(file.model),
            test: self.test.or(file.test),
            test_labels: self.test_labels.or(file.test_labels),
            data: self.data.or(file.data),
            labels: self.labels.or(file.labels),
            variant: self.variant.or(file.variant),
            folds: self.folds.or(file.folds),
            positive: self.positive.or(file.positive),
            seed: self.seed.or(file.seed),
            classifier: self.classifier.merge(file.classifier),
            ensemble: self.ensemble.merge(file.ensemble),
            out: self.out.or(file.out),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct ReproduceArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub table: Option<Table>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub classifier: ClassifierArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ReproduceArgs {
    pub fn merge(self, file: Self) -> Self {
        Self {
            config: self.config,
            table: self.table.or(file.table),
            seed: self.seed.or(file.seed),
            classifier: self.classifier.merge(file.classifier),
            ensemble: self.ensemble.merge(file.ensemble),
            out: self.out.or(file.out),
        }
    }
}
