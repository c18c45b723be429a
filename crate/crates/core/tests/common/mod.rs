#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tck_core::data::{Dataset, MaskedMts};
use tck_core::mixture::MixtureParams;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the helpers free of the distribution crate.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random series with class-dependent offsets; cells go missing with
/// probability `p_missing`, but `(v, 0)` of the first series stays observed
/// so no attribute is empty.
pub fn random_series(
    rng: &mut ChaCha8Rng,
    n: usize,
    n_attrs: usize,
    len: usize,
    p_missing: f64,
    n_classes: usize,
) -> (Vec<MaskedMts>, Vec<usize>) {
    let mut out = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % n_classes.max(1);
        let rows: Vec<Vec<Option<f64>>> = (0..n_attrs)
            .map(|v| {
                (0..len)
                    .map(|t| {
                        let keep = (i == 0 && t == 0) || rng.random::<f64>() >= p_missing;
                        let x = y as f64 * 1.5 + 0.3 * v as f64 + gauss(rng);
                        keep.then_some(x)
                    })
                    .collect()
            })
            .collect();
        out.push(MaskedMts::from_optional_rows(i as u64 + 1, &rows).unwrap());
        labels.push(y);
    }
    (out, labels)
}

pub fn random_dataset(seed: u64, n: usize, n_attrs: usize, len: usize, p_missing: f64, n_classes: usize) -> Dataset {
    let mut r = rng(seed);
    let (series, labels) = random_series(&mut r, n, n_attrs, len, p_missing, n_classes);
    let mut d = Dataset::new(n_attrs, len, n_classes);
    for (s, y) in series.into_iter().zip(labels) {
        d.push(s, Some(y)).unwrap();
    }
    d
}

fn pdf(x: f64, mu: f64, var: f64) -> f64 {
    (-(x - mu) * (x - mu) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Responsibilities by direct multiplication of the mixture terms.
pub fn naive_posteriors(p: &MixtureParams, data: &[MaskedMts]) -> Vec<Vec<f64>> {
    data.iter()
        .map(|s| {
            let joint: Vec<f64> = (0..p.n_components)
                .map(|g| {
                    let mut w = p.theta[g];
                    for v in 0..p.n_attrs {
                        for t in 0..p.len {
                            let mu = p.mu[(g * p.n_attrs + v) * p.len + t];
                            let var = p.sigma2[g * p.n_attrs + v];
                            let observed = s.is_observed(v, t);
                            if observed {
                                w *= pdf(s.value(v, t).unwrap(), mu, var);
                            }
                            if let Some(b) = &p.beta {
                                let beta = b[(g * p.n_attrs + v) * p.len + t];
                                w *= if observed { beta } else { 1.0 - beta };
                            }
                        }
                    }
                    w
                })
                .collect();
            let z: f64 = joint.iter().sum();
            joint.iter().map(|w| w / z).collect()
        })
        .collect()
}

/// `KL(N(m1, v1) || N(m2, v2))` by composite Simpson integration over
/// `m1 +- 14 sd`.
pub fn kl_quadrature(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    let sd = v1.sqrt();
    let (a, b) = (m1 - 14.0 * sd, m1 + 14.0 * sd);
    let n = 20_000;
    let h = (b - a) / n as f64;
    let log_pdf = |x: f64, m: f64, v: f64| -(x - m) * (x - m) / (2.0 * v) - 0.5 * (2.0 * std::f64::consts::PI * v).ln();
    let f = |x: f64| pdf(x, m1, v1) * (log_pdf(x, m1, v1) - log_pdf(x, m2, v2));
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}
