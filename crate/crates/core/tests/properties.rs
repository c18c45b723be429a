mod common;

use proptest::prelude::*;
use rand::Rng;
use tck_core::data::{
    concat_mask, read_dataset, resampled_length, standardize, write_dataset, zero_impute, StandardizationStats,
};
use tck_core::ensemble::{cosine, mix_seed, train_ensemble, EnsembleConfig};
use tck_core::eval::{kfold, knn_loo, kpca, metrics, Embedding};
use tck_core::mixture::{build_prior, fit_from, initialize_params, EmOptions, HyperParams, Mode, PosteriorMatrix};
use tck_core::synth::{gen_var1, inject_rate_mar, pearson, Var1ClassParams, Var1Params};
use tck_core::transform::{apply_transform, supervised_w};

use common::{random_dataset, random_series, rng};

fn simplex_rows(seed: u64, n: usize, g: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..g).map(|_| r.random_range(0.001..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trip(seed in any::<u64>(), n in 1usize..12, v in 1usize..4, t in 1usize..9, p in 0.0f64..0.6) {
        let d = random_dataset(seed, n, v, t, p, 3);
        let (mut data, mut labels) = (Vec::new(), Vec::new());
        write_dataset(&d, &mut data, Some(&mut labels)).unwrap();
        let back = read_dataset(&data[..], Some(&labels[..])).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn standardize_is_idempotent(seed in any::<u64>(), n in 3usize..15, v in 1usize..4, t in 2usize..9) {
        let d = random_dataset(seed, n, v, t, 0.2, 2);
        let (once, _) = standardize(&d).unwrap();
        let (twice, _) = standardize(&once).unwrap();
        for (a, b) in once.series().iter().zip(twice.series()) {
            prop_assert_eq!(a.mask(), b.mask());
            for (x, y) in a.values().iter().zip(b.values()) {
                if !x.is_nan() {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn augmentations_keep_counts(seed in any::<u64>(), n in 1usize..10) {
        let d = random_dataset(seed, n, 2, 5, 0.3, 2);
        for out in [concat_mask(&d), zero_impute(&d)] {
            prop_assert_eq!(out.n_series(), d.n_series());
            prop_assert_eq!(out.labels(), d.labels());
        }
    }

    #[test]
    fn em_objective_never_decreases(seed in any::<u64>(), g in 1usize..4, mixed in any::<bool>()) {
        let mut r = rng(seed);
        let (data, _) = random_series(&mut r, 20, 2, 6, 0.3, 2);
        let hp = HyperParams::new(0.5, 0.05, 0.05).unwrap();
        let prior = build_prior(&data, &hp).unwrap();
        let mode = if mixed { Mode::MixedMode } else { Mode::GaussianOnly };
        let init = initialize_params(&data, &prior, mode, g, seed).unwrap();
        let fit = fit_from(&data, &prior, &hp, init, &EmOptions { max_iter: 15, tol: 0.0 }).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8);
        }
    }

    #[test]
    fn transform_keeps_simplex(seed in any::<u64>(), g in 2usize..7) {
        let rows = simplex_rows(seed, 24, g);
        let labels: Vec<usize> = (0..24).map(|i| i % 2).collect();
        let w = supervised_w(&PosteriorMatrix::from_rows(&rows).unwrap(), &labels, 2).unwrap();
        for row in simplex_rows(seed ^ 1, 10, g) {
            let out = apply_transform(&w, &row);
            prop_assert!(out.iter().all(|&x| x >= 0.0));
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn supervised_w_ignores_duplication(seed in any::<u64>(), g in 2usize..6) {
        let rows = simplex_rows(seed, 12, g);
        let labels: Vec<usize> = (0..12).map(|i| i % 2).collect();
        let once = supervised_w(&PosteriorMatrix::from_rows(&rows).unwrap(), &labels, 2).unwrap();
        let doubled: Vec<Vec<f64>> = rows.iter().chain(&rows).cloned().collect();
        let dl: Vec<usize> = labels.iter().chain(&labels).copied().collect();
        let twice = supervised_w(&PosteriorMatrix::from_rows(&doubled).unwrap(), &dl, 2).unwrap();
        for (a, b) in once.w.iter().zip(&twice.w) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn cosine_in_unit_interval(a in prop::collection::vec(0.0f64..1.0, 1..6), seed in any::<u64>()) {
        prop_assume!(a.iter().any(|&x| x > 0.0));
        let mut r = rng(seed);
        let b: Vec<f64> = a.iter().map(|_| r.random_range(0.01..1.0)).collect();
        let c = cosine(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn binary_metrics_are_consistent(pairs in prop::collection::vec((0usize..2, 0usize..2), 1..60)) {
        let (pred, truth): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        prop_assume!(truth.contains(&1));
        let m = metrics(&pred, &truth, Some(1)).unwrap();
        let p = truth.iter().filter(|&&t| t == 1).count() as f64;
        let n = truth.len() as f64 - p;
        let recomposed = (m.sensitivity.unwrap() * p + m.specificity.unwrap() * n) / (p + n);
        prop_assert!((recomposed - m.accuracy).abs() <= 1e-12);
    }
}

#[test]
fn resampled_length_matches_integer_oracle() {
    for t in 1..=10_000usize {
        let windows = t.div_ceil(25);
        assert_eq!(resampled_length(t, 25), t.div_ceil(windows), "T_max = {t}");
    }
}

#[test]
fn cosine_half_vector() {
    let c = cosine(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
    assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
}

#[test]
fn kernel_is_invariant_to_training_order() {
    let d = random_dataset(3, 24, 2, 10, 0.2, 2);
    let mut cfg = EnsembleConfig::new(2, Mode::MixedMode, 5);
    cfg.n_inits = 3;
    cfg.components = vec![2, 3];
    let (_, k) = train_ensemble(&d, &cfg, None).unwrap();
    let perm: Vec<usize> = (0..24).rev().collect();
    let (_, kp) = train_ensemble(&d.subset(&perm), &cfg, None).unwrap();
    for i in 0..24 {
        for j in 0..24 {
            assert!((k.get(perm[i], perm[j]) - kp.get(i, j)).abs() <= 1e-12);
        }
    }
}

#[test]
fn kpca_reconstructs_psd_kernel() {
    let mut r = rng(4);
    let n = 8;
    let b: Vec<f64> = (0..n * 5).map(|_| common::gauss(&mut r)).collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = (0..5).map(|c| b[i * 5 + c] * b[j * 5 + c]).sum();
        }
    }
    let km = tck_core::ensemble::KernelMatrix::from_vec(n, n, 1, k.clone()).unwrap();
    let (e, _) = kpca(&km, n, false).unwrap();
    for w in e.eigenvalues.windows(2) {
        assert!(w[0] >= w[1]);
    }
    // Z Z^T = sum_i lambda_i u_i u_i^T.
    for i in 0..n {
        for j in 0..n {
            let zz: f64 = (0..e.dim()).map(|c| e.coords[(i, c)] * e.coords[(j, c)]).sum();
            assert!((zz - k[i * n + j]).abs() < 1e-8);
        }
    }
}

#[test]
fn separable_blobs_classify_perfectly() {
    let mut r = rng(5);
    let coords = nalgebra::DMatrix::from_fn(
        40,
        2,
        |i, _| if i < 20 { -5.0 } else { 5.0 } + 0.1 * common::gauss(&mut r),
    );
    let e = Embedding {
        coords,
        eigenvalues: vec![1.0, 1.0],
    };
    let labels: Vec<usize> = (0..40).map(|i| (i >= 20) as usize).collect();
    assert_eq!(knn_loo(&e, &labels, 1).unwrap(), labels);
}

#[test]
fn kfold_fits_on_training_split_only() {
    // Class 2 sits far above class 1, so any per-fold training mean reflects
    // exactly which series were held out.
    let d = random_dataset(9, 30, 1, 4, 0.0, 2);
    let mut means = Vec::new();
    let report = kfold(&d, 5, 1, |train, test, _| {
        let stats = StandardizationStats::fit(train).unwrap();
        means.push(stats.mean[0]);
        assert_eq!(train.n_series() + test.n_series(), 30);
        let truth = test.full_labels().unwrap();
        metrics(&vec![0; truth.len()], &truth, None)
    })
    .unwrap();
    means.sort_by(f64::total_cmp);
    means.dedup();
    assert_eq!(means.len(), 5);
    // Constant predictor: accuracy equals the class-1 share of each fold.
    assert!((report.accuracy.mean - 0.5).abs() < 1e-12);
}

#[test]
fn leave_one_out_runs() {
    let d = random_dataset(10, 8, 1, 3, 0.0, 2);
    let report = kfold(&d, 8, 2, |_, test, _| {
        assert_eq!(test.n_series(), 1);
        let truth = test.full_labels().unwrap();
        metrics(&truth, &truth, None)
    })
    .unwrap();
    assert_eq!(report.folds.len(), 8);
    assert_eq!(report.accuracy.mean, 1.0);
}

#[test]
fn var1_class_one_is_stationary_with_target_correlation() {
    let c = Var1Params::default().classes[0];
    let mut r = rng(12);
    let chain = c.simulate(100_000, 1.0, &mut r).unwrap();
    let x: Vec<f64> = chain.iter().map(|p| p[0]).collect();
    let y: Vec<f64> = chain.iter().map(|p| p[1]).collect();
    let (mx, my) = (x.iter().sum::<f64>() / 1e5, y.iter().sum::<f64>() / 1e5);
    assert!((mx - 0.5).abs() < 0.05 && (my + 0.5).abs() < 0.05, "{mx} {my}");
    assert!((pearson(&x, &y) - 0.8).abs() < 0.02);
}

#[test]
fn var1_stationary_mean_over_many_chains() {
    // Averaging independent chains tightens the mean check to +-0.02.
    let c = Var1Params::default().classes[0];
    let mut r = rng(13);
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for _ in 0..400 {
        for p in c.simulate(500, 1.0, &mut r).unwrap() {
            sx += p[0];
            sy += p[1];
            n += 1.0;
        }
    }
    assert!((sx / n - 0.5).abs() < 0.02 && (sy / n + 0.5).abs() < 0.02);
}

#[test]
fn uncorrelated_var1_stays_uncorrelated() {
    let c = Var1ClassParams {
        ar: [0.7, 0.2],
        corr: 0.0,
        mean: [1.0, -2.0],
    };
    let mut r = rng(14);
    let chain = c.simulate(100_000, 1.0, &mut r).unwrap();
    let x: Vec<f64> = chain.iter().map(|p| p[0]).collect();
    let y: Vec<f64> = chain.iter().map(|p| p[1]).collect();
    assert!(pearson(&x, &y).abs() < 0.02);
}

#[test]
fn mar_without_information_treats_classes_alike() {
    let d = gen_var1(&Var1Params::default(), mix_seed(1, 2, 3)).unwrap().train;
    let inj = inject_rate_mar(&d, 0.0, 4).unwrap();
    let labels = d.full_labels().unwrap();
    let class_rate = |c: usize| {
        let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        inj.data.subset(&pos).missing_fraction()
    };
    assert!((class_rate(0) - class_rate(1)).abs() < 0.02);
}
