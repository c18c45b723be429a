use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use tck_core::data::{concat_mask, save_dataset, zero_impute, Dataset, StandardizationStats};
use tck_core::ensemble::mix_seed;
use tck_core::ensemble::{kernel_test, train_ensemble, KernelMatrix, TrainedEnsemble};
use tck_core::eval::{knn, kpca, metrics, select_k, write_embedding_csv, Embedding, Metrics, K_GRID};
use tck_core::experiment::{
    cross_validate, label_subset, reproduce_var1, var1_benchmark_data, KChoice, PipelineConfig, Prep, Supervision,
    Variant,
};
use tck_core::synth::{gen_var1, inject_rate, mean_abs_rate_corr, tune_e, RateScheme, Var1Params};
use tck_core::transform::{LabelThreshold, PosteriorTransform, SemiSupervised, Supervised};

use crate::config::{
    output_dir, read_config, ClassifierArgs, EnsembleArgs, EvalArgs, GenerateArgs, Recipe, ReproduceArgs, Table,
    TrainArgs,
};

const DEFAULT_SEED: u64 = 1;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

fn load_dataset(path: &Path, labels: Option<&Path>) -> Result<Dataset> {
    tck_core::data::load_dataset(path, labels).with_context(|| format!("loading {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Checks that every listed output exists and is nonempty.
fn validate_outputs(dir: &Path, files: &[String]) -> Result<()> {
    for f in files {
        let p = dir.join(f);
        let len = fs::metadata(&p)
            .with_context(|| format!("missing output {}", p.display()))?
            .len();
        ensure!(len > 0, "output {} is empty", p.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize, S: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a C,
    summary: S,
    outputs: &'a [String],
}

fn finish<C: Serialize, S: Serialize>(
    dir: &Path,
    command: &str,
    config: &C,
    summary: S,
    outputs: &[String],
) -> Result<()> {
    validate_outputs(dir, outputs)?;
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config,
        summary,
        outputs,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    log::info!("wrote {}", dir.display());
    Ok(())
}

fn parse_variant(v: Option<&str>) -> Result<Variant> {
    Ok(v.ok_or_else(|| anyhow!("--variant is required"))?.parse()?)
}

fn pipeline_config(ens: &EnsembleArgs, cls: &ClassifierArgs) -> PipelineConfig {
    let d = PipelineConfig::default();
    PipelineConfig {
        n_inits: ens.n_inits.unwrap_or(d.n_inits),
        extra_components: ens.extra_components.unwrap_or(d.extra_components),
        kpca_dim: cls.dim.unwrap_or(d.kpca_dim),
        center: !cls.no_center,
        k: if cls.k_cv {
            KChoice::CrossValidated
        } else {
            KChoice::Fixed(cls.k.unwrap_or(1))
        },
        h: ens.h.unwrap_or(d.h),
        n_labeled: ens.n_labeled,
        normalize_by_models: ens.normalize,
        em: d.em,
    }
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GenerateConfig {
    recipe: Recipe,
    seed: u64,
    no_missing: bool,
    input: Option<PathBuf>,
    labels: Option<PathBuf>,
    e: Option<f64>,
    target_corr: Option<f64>,
    out: PathBuf,
}

#[derive(Serialize)]
struct RateSummary {
    e: f64,
    achieved_corr: f64,
    missing_rate: f64,
    signs: Vec<i8>,
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let file = read_config(args.config.as_deref())?;
    let a = args.merge(file);
    let cfg = GenerateConfig {
        recipe: a.recipe.ok_or_else(|| anyhow!("--recipe is required"))?,
        seed: a.seed.unwrap_or(DEFAULT_SEED),
        no_missing: a.no_missing,
        input: a.input,
        labels: a.labels,
        e: a.e,
        target_corr: a.target_corr,
        out: output_dir(a.out, "generate"),
    };
    create_dir(&cfg.out)?;
    match cfg.recipe {
        Recipe::Var1 => {
            let (train, test) = if cfg.no_missing {
                let split = gen_var1(&Var1Params::default(), cfg.seed)?;
                (split.train, split.test)
            } else {
                var1_benchmark_data(cfg.seed)?
            };
            save_dataset(
                &train,
                cfg.out.join("train.csv"),
                Some(&cfg.out.join("train_labels.csv")),
            )?;
            save_dataset(&test, cfg.out.join("test.csv"), Some(&cfg.out.join("test_labels.csv")))?;
            let outputs: Vec<String> = ["train.csv", "train_labels.csv", "test.csv", "test_labels.csv"]
                .map(String::from)
                .to_vec();
            #[derive(Serialize)]
            struct Summary {
                params: Var1Params,
                train_series: usize,
                test_series: usize,
                train_missing_rate: f64,
                test_missing_rate: f64,
            }
            let summary = Summary {
                params: Var1Params::default(),
                train_series: train.n_series(),
                test_series: test.n_series(),
                train_missing_rate: train.missing_fraction(),
                test_missing_rate: test.missing_fraction(),
            };
            finish(&cfg.out, "generate", &cfg, summary, &outputs)
        }
        Recipe::Mar | Recipe::Mnar => {
            let scheme = if cfg.recipe == Recipe::Mar {
                RateScheme::Mar
            } else {
                RateScheme::Mnar
            };
            let input = cfg
                .input
                .as_deref()
                .ok_or_else(|| anyhow!("--input is required for this recipe"))?;
            let labels = cfg
                .labels
                .as_deref()
                .ok_or_else(|| anyhow!("--labels is required for this recipe"))?;
            let data = load_dataset(input, Some(labels))?;
            let e = match (cfg.e, cfg.target_corr) {
                (Some(e), _) => e,
                (None, Some(t)) => tune_e(&data, scheme, t, mix_seed(cfg.seed, 7, 0))?.e,
                (None, None) => bail!("give either --e or --target-corr"),
            };
            let inj = inject_rate(&data, scheme, e, cfg.seed)?;
            save_dataset(&inj.data, cfg.out.join("data.csv"), Some(&cfg.out.join("labels.csv")))?;
            let summary = RateSummary {
                e,
                achieved_corr: mean_abs_rate_corr(&inj.rates, &data.full_labels()?),
                missing_rate: inj.data.missing_fraction(),
                signs: inj.signs,
            };
            let outputs = vec!["data.csv".to_string(), "labels.csv".to_string()];
            finish(&cfg.out, "generate", &cfg, summary, &outputs)
        }
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TrainConfig {
    data: PathBuf,
    labels: Option<PathBuf>,
    variant: Variant,
    seed: u64,
    pipeline: PipelineConfig,
    out: PathBuf,
}

/// Everything `eval` needs besides the ensemble and kernel.
#[derive(Serialize, Deserialize)]
pub struct ModelInfo {
    pub variant: Variant,
    pub n_classes: usize,
    pub stats: StandardizationStats,
    /// Training labels (0-based) as loaded, used by the classifier.
    pub labels: Vec<Option<usize>>,
    pub train_ids: Vec<u64>,
}

fn apply_prep(data: &Dataset, prep: Prep) -> Dataset {
    match prep {
        Prep::Plain => data.clone(),
        Prep::ConcatMask => concat_mask(data),
        Prep::ZeroImpute => zero_impute(data),
    }
}

fn build_transform(
    variant: Variant,
    data: &Dataset,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Option<Box<dyn PosteriorTransform>>> {
    let n_classes = data.n_classes();
    Ok(match variant.supervision() {
        Supervision::None => None,
        Supervision::Full => {
            let labels = data
                .full_labels()
                .map_err(|_| anyhow!("{} needs a label for every training series", variant.display_name()))?;
            Some(Box::new(Supervised { labels, n_classes }))
        }
        Supervision::Semi => {
            let labels = match data.full_labels() {
                Ok(full) => label_subset(&full, n_classes, cfg.n_labeled_for(n_classes), mix_seed(seed, 4, 0)),
                Err(_) => data.labels().to_vec(),
            };
            ensure!(
                labels.iter().any(Option::is_some),
                "{} needs some labeled series",
                variant.display_name()
            );
            Some(Box::new(SemiSupervised {
                labels,
                n_classes,
                h: LabelThreshold::new(cfg.h)?,
            }))
        }
    })
}

pub fn train(args: TrainArgs) -> Result<()> {
    let file = read_config(args.config.as_deref())?;
    let a = args.merge(file);
    let cfg = TrainConfig {
        data: a.data.ok_or_else(|| anyhow!("--data is required"))?,
        labels: a.labels,
        variant: parse_variant(a.variant.as_deref())?,
        seed: a.seed.unwrap_or(DEFAULT_SEED),
        pipeline: pipeline_config(&a.ensemble, &ClassifierArgs::default()),
        out: output_dir(a.out, "train"),
    };
    let data = load_dataset(&cfg.data, cfg.labels.as_deref())?;
    let n_classes = data.n_classes().max(1);
    let max_c = n_classes + cfg.pipeline.extra_components;
    ensure!(
        data.n_series() >= max_c,
        "{} training series but the component range reaches {max_c}; lower --extra-components or use more data",
        data.n_series()
    );
    let stats = StandardizationStats::fit(&data)?;
    let prepared = apply_prep(&stats.apply(&data)?, cfg.variant.prep());
    let ens_cfg = cfg
        .pipeline
        .ensemble_config(n_classes, cfg.variant.mode(), mix_seed(cfg.seed, 3, 0));
    let transform = build_transform(cfg.variant, &data, &cfg.pipeline, cfg.seed)?;
    let (ensemble, kernel) = train_ensemble(&prepared, &ens_cfg, transform.as_deref())?;

    create_dir(&cfg.out)?;
    ensemble.save(cfg.out.join("ensemble"))?;
    kernel.write_csv(File::create(cfg.out.join("train_kernel.csv"))?)?;
    let info = ModelInfo {
        variant: cfg.variant,
        n_classes,
        stats,
        labels: data.labels().to_vec(),
        train_ids: ensemble.train_ids.clone(),
    };
    write_json(&cfg.out.join("model.json"), &info)?;
    #[derive(Serialize)]
    struct Summary {
        series: usize,
        models: usize,
        failed_models: usize,
    }
    let summary = Summary {
        series: data.n_series(),
        models: ensemble.models.len(),
        failed_models: ensemble.failures.len(),
    };
    let outputs = vec![
        "ensemble/manifest.json".to_string(),
        "train_kernel.csv".to_string(),
        "model.json".to_string(),
    ];
    finish(&cfg.out, "train", &cfg, summary, &outputs)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EvalConfig {
    model: Option<PathBuf>,
    test: Option<PathBuf>,
    test_labels: Option<PathBuf>,
    data: Option<PathBuf>,
    labels: Option<PathBuf>,
    variant: Option<Variant>,
    folds: Option<usize>,
    positive: Option<usize>,
    seed: u64,
    pipeline: PipelineConfig,
    out: PathBuf,
}

fn write_metrics_csv(path: &Path, m: &Metrics) -> Result<()> {
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "accuracy,f1,sensitivity,specificity")?;
    writeln!(
        w,
        "{},{},{},{}",
        m.accuracy,
        opt(m.f1),
        opt(m.sensitivity),
        opt(m.specificity)
    )?;
    w.flush()?;
    Ok(())
}

fn rows_of(e: &Embedding, rows: &[usize]) -> Embedding {
    Embedding {
        coords: e.coords.select_rows(rows.iter()),
        eigenvalues: e.eigenvalues.clone(),
    }
}

fn positive_class(cli: Option<usize>, n_classes: usize) -> Result<Option<usize>> {
    match cli {
        Some(0) => bail!("--positive is 1-based"),
        Some(p) => Ok(Some(p - 1)),
        None => Ok((n_classes == 2).then_some(1)),
    }
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let file = read_config(args.config.as_deref())?;
    let a = args.merge(file);
    let cfg = EvalConfig {
        model: a.model,
        test: a.test,
        test_labels: a.test_labels,
        data: a.data,
        labels: a.labels,
        variant: a.variant.as_deref().map(str::parse).transpose()?,
        folds: a.folds,
        positive: a.positive,
        seed: a.seed.unwrap_or(DEFAULT_SEED),
        pipeline: pipeline_config(&a.ensemble, &a.classifier),
        out: output_dir(a.out, "eval"),
    };
    create_dir(&cfg.out)?;
    if let Some(folds) = cfg.folds {
        let data_path = cfg.data.as_deref().ok_or_else(|| anyhow!("--folds needs --data"))?;
        let labels_path = cfg.labels.as_deref().ok_or_else(|| anyhow!("--folds needs --labels"))?;
        let variant = cfg.variant.ok_or_else(|| anyhow!("--folds needs --variant"))?;
        let data = load_dataset(data_path, Some(labels_path))?;
        let report = cross_validate(&data, variant, &cfg.pipeline, folds, cfg.seed)?;
        report.write_csv(File::create(cfg.out.join("cv_metrics.csv"))?)?;
        println!(
            "{}: accuracy {:.4} +- {:.4} over {folds} folds",
            variant.display_name(),
            report.accuracy.mean,
            report.accuracy.se
        );
        return finish(&cfg.out, "eval", &cfg, &report, &["cv_metrics.csv".to_string()]);
    }

    let model_dir = cfg
        .model
        .as_deref()
        .ok_or_else(|| anyhow!("give --model (with --test) or --folds"))?;
    let test_path = cfg
        .test
        .as_deref()
        .ok_or_else(|| anyhow!("--test is required with --model"))?;
    let info: ModelInfo = read_json(&model_dir.join("model.json"))?;
    let ensemble = TrainedEnsemble::load(model_dir.join("ensemble"))?;
    let kernel = KernelMatrix::read_csv(File::open(model_dir.join("train_kernel.csv"))?)?;
    let test = load_dataset(test_path, cfg.test_labels.as_deref())?;
    let test_prepared = apply_prep(&info.stats.apply(&test)?, info.variant.prep());
    let k_test = kernel_test(&ensemble, &test_prepared)?;

    let (train_emb, proj) = kpca(&kernel, cfg.pipeline.kpca_dim, cfg.pipeline.center)?;
    let test_emb = proj.project(&k_test)?;
    let labeled: Vec<usize> = (0..info.labels.len()).filter(|&i| info.labels[i].is_some()).collect();
    ensure!(
        !labeled.is_empty(),
        "the model has no labeled training series for the classifier"
    );
    let knn_labels: Vec<usize> = labeled.iter().map(|&i| info.labels[i].unwrap()).collect();
    let knn_train = rows_of(&train_emb, &labeled);
    let k = match cfg.pipeline.k {
        KChoice::Fixed(k) => k,
        KChoice::CrossValidated => select_k(&knn_train, &knn_labels, &K_GRID, 5, mix_seed(cfg.seed, 5, 0))?,
    };
    let pred = knn(&knn_train, &knn_labels, &test_emb, k)?;

    let mut outputs = vec![
        "predictions.csv".to_string(),
        "embedding_train.csv".to_string(),
        "embedding_test.csv".to_string(),
    ];
    {
        let mut w = BufWriter::new(File::create(cfg.out.join("predictions.csv"))?);
        writeln!(w, "series_id,predicted,label")?;
        for (i, s) in test.series().iter().enumerate() {
            let truth = test.labels()[i].map_or(String::new(), |c| (c + 1).to_string());
            writeln!(w, "{},{},{truth}", s.id, pred[i] + 1)?;
        }
        w.flush()?;
    }
    write_embedding_csv(
        File::create(cfg.out.join("embedding_train.csv"))?,
        &info.train_ids,
        &info.labels,
        &train_emb,
        2,
    )?;
    let test_ids: Vec<u64> = test.series().iter().map(|s| s.id).collect();
    write_embedding_csv(
        File::create(cfg.out.join("embedding_test.csv"))?,
        &test_ids,
        test.labels(),
        &test_emb,
        2,
    )?;

    #[derive(Serialize)]
    struct Summary {
        k: usize,
        dim: usize,
        metrics: Option<Metrics>,
    }
    let metrics = match test.full_labels() {
        Ok(truth) => {
            let m = metrics(&pred, &truth, positive_class(cfg.positive, info.n_classes)?)?;
            write_metrics_csv(&cfg.out.join("metrics.csv"), &m)?;
            outputs.push("metrics.csv".to_string());
            println!("{}: accuracy {:.4}", info.variant.display_name(), m.accuracy);
            Some(m)
        }
        Err(_) => {
            log::warn!("test labels missing or incomplete; metrics skipped");
            None
        }
    };
    let summary = Summary {
        k,
        dim: train_emb.dim(),
        metrics,
    };
    finish(&cfg.out, "eval", &cfg, summary, &outputs)
}

// ---------------------------------------------------------------------------
// reproduce
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ReproduceConfig {
    table: Table,
    seed: u64,
    pipeline: PipelineConfig,
    out: PathBuf,
}

pub fn reproduce(args: ReproduceArgs) -> Result<()> {
    let file = read_config(args.config.as_deref())?;
    let a = args.merge(file);
    let cfg = ReproduceConfig {
        table: a.table.unwrap_or(Table::Var1),
        seed: a.seed.unwrap_or(DEFAULT_SEED),
        pipeline: pipeline_config(&a.ensemble, &a.classifier),
        out: output_dir(a.out, "reproduce"),
    };
    create_dir(&cfg.out)?;
    let (report, outcomes) = match cfg.table {
        Table::Var1 => reproduce_var1(cfg.seed, &cfg.pipeline)?,
    };
    let table = report.to_table();
    print!("{table}");
    fs::write(cfg.out.join("report.txt"), &table)?;
    write_json(&cfg.out.join("report.json"), &report)?;
    let mut outputs = vec!["report.txt".to_string(), "report.json".to_string()];
    let (_, test) = match cfg.table {
        Table::Var1 => var1_benchmark_data(cfg.seed)?,
    };
    let ids: Vec<u64> = test.series().iter().map(|s| s.id).collect();
    for o in &outcomes {
        let name = format!("embedding_{}.csv", o.variant.name());
        write_embedding_csv(
            File::create(cfg.out.join(&name))?,
            &ids,
            test.labels(),
            &o.test_embedding,
            2,
        )?;
        outputs.push(name);
    }
    finish(&cfg.out, "reproduce", &cfg, &report, &outputs)
}
