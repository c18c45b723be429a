//! Incompletely observed multivariate time series and dataset handling.
//!
//! A [`MaskedMts`] stores a `V x T` grid of values together with its binary
//! observation mask. Missing cells hold [`MISSING`] (NaN) so that any
//! accidental read of an unobserved value poisons downstream arithmetic.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result, TckError};

/// Stored in every unobserved cell.
pub const MISSING: f64 = f64::NAN;

/// One multivariate time series with its observation mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskedMts {
    pub id: u64,
    n_attrs: usize,
    len: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl MaskedMts {
    /// A fully missing series.
    pub fn missing(id: u64, n_attrs: usize, len: usize) -> Self {
        Self {
            id,
            n_attrs,
            len,
            values: vec![MISSING; n_attrs * len],
            mask: vec![false; n_attrs * len],
        }
    }

    /// A fully observed series from per-attribute rows.
    pub fn from_rows(id: u64, rows: &[Vec<f64>]) -> Result<Self> {
        let n_attrs = rows.len();
        let len = rows.first().map_or(0, Vec::len);
        if n_attrs == 0 || len == 0 {
            return param_err("a series needs at least one attribute and one time step");
        }
        if rows.iter().any(|r| r.len() != len) {
            return param_err("all attributes must share the same length");
        }
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(Self {
            id,
            n_attrs,
            len,
            mask: vec![true; values.len()],
            values,
        })
    }

    /// Builds a series from per-attribute rows where `None` marks a missing cell.
    pub fn from_optional_rows(id: u64, rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n_attrs = rows.len();
        let len = rows.first().map_or(0, Vec::len);
        if n_attrs == 0 || len == 0 {
            return param_err("a series needs at least one attribute and one time step");
        }
        if rows.iter().any(|r| r.len() != len) {
            return param_err("all attributes must share the same length");
        }
        let mut out = Self::missing(id, n_attrs, len);
        for (v, row) in rows.iter().enumerate() {
            for (t, cell) in row.iter().enumerate() {
                if let Some(x) = cell {
                    out.set(v, t, *x);
                }
            }
        }
        Ok(out)
    }

    pub fn n_attrs(&self) -> usize {
        self.n_attrs
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    fn idx(&self, v: usize, t: usize) -> usize {
        debug_assert!(v < self.n_attrs && t < self.len);
        v * self.len + t
    }

    #[inline]
    pub fn is_observed(&self, v: usize, t: usize) -> bool {
        self.mask[self.idx(v, t)]
    }

    /// The value at `(v, t)` if it is observed.
    #[inline]
    pub fn value(&self, v: usize, t: usize) -> Option<f64> {
        let i = self.idx(v, t);
        self.mask[i].then_some(self.values[i])
    }

    /// Raw cell content; [`MISSING`] for unobserved cells.
    #[inline]
    pub fn raw(&self, v: usize, t: usize) -> f64 {
        self.values[self.idx(v, t)]
    }

    pub fn set(&mut self, v: usize, t: usize, x: f64) {
        let i = self.idx(v, t);
        self.values[i] = x;
        self.mask[i] = true;
    }

    /// Marks a cell missing and poisons its value.
    pub fn clear(&mut self, v: usize, t: usize) {
        let i = self.idx(v, t);
        self.values[i] = MISSING;
        self.mask[i] = false;
    }

    /// Row-major (`v * T + t`) values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row-major (`v * T + t`) mask.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// The sub-series on the given attributes and contiguous time segment.
    pub fn restrict(&self, attrs: &[usize], segment: Range<usize>) -> MaskedMts {
        let len = segment.len();
        let mut values = Vec::with_capacity(attrs.len() * len);
        let mut mask = Vec::with_capacity(attrs.len() * len);
        for &v in attrs {
            let base = v * self.len;
            values.extend_from_slice(&self.values[base + segment.start..base + segment.end]);
            mask.extend_from_slice(&self.mask[base + segment.start..base + segment.end]);
        }
        MaskedMts {
            id: self.id,
            n_attrs: attrs.len(),
            len,
            values,
            mask,
        }
    }
}

impl PartialEq for MaskedMts {
    /// Equal when ids, shapes and masks agree and observed values are identical.
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.n_attrs == other.n_attrs
            && self.len == other.len
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), &m)| !m || a.to_bits() == b.to_bits())
    }
}

/// A collection of series sharing one `V x T` schema, with optional labels.
///
/// Labels are class indices `0..n_classes` (one-hot position); `None` marks
/// an unlabeled series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n_attrs: usize,
    len: usize,
    n_classes: usize,
    series: Vec<MaskedMts>,
    labels: Vec<Option<usize>>,
}

impl Dataset {
    pub fn new(n_attrs: usize, len: usize, n_classes: usize) -> Self {
        Self {
            n_attrs,
            len,
            n_classes,
            series: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_series(series: Vec<MaskedMts>, labels: Vec<Option<usize>>, n_classes: usize) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| TckError::Parameter("from_series needs at least one series".into()))?;
        let mut data = Self::new(first.n_attrs, first.len, n_classes);
        if labels.len() != series.len() {
            return param_err("labels and series differ in length");
        }
        for (s, y) in series.into_iter().zip(labels) {
            data.push(s, y)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, series: MaskedMts, label: Option<usize>) -> Result<()> {
        if series.n_attrs != self.n_attrs || series.len != self.len {
            return Err(TckError::Schema(format!(
                "series {} is {}x{}, dataset is {}x{}",
                series.id, series.n_attrs, series.len, self.n_attrs, self.len
            )));
        }
        if let Some(y) = label {
            if y >= self.n_classes {
                return Err(TckError::Label(format!(
                    "label {} outside 1..={}",
                    y + 1,
                    self.n_classes
                )));
            }
        }
        self.series.push(series);
        self.labels.push(label);
        Ok(())
    }

    pub fn n_series(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn n_attrs(&self) -> usize {
        self.n_attrs
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn series(&self) -> &[MaskedMts] {
        &self.series
    }

    pub fn series_mut(&mut self) -> &mut [MaskedMts] {
        &mut self.series
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn set_labels(&mut self, labels: Vec<Option<usize>>) -> Result<()> {
        if labels.len() != self.series.len() {
            return param_err("label vector length differs from series count");
        }
        if labels.iter().flatten().any(|&y| y >= self.n_classes) {
            return Err(TckError::Label("label outside class range".into()));
        }
        self.labels = labels;
        Ok(())
    }

    /// Every label, or an error if any series is unlabeled.
    pub fn full_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .zip(&self.series)
            .map(|(y, s)| y.ok_or_else(|| TckError::Label(format!("series {} is unlabeled", s.id))))
            .collect()
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().flatten().count()
    }

    /// One-hot label vector of series `n`, if labeled.
    pub fn one_hot(&self, n: usize) -> Option<Vec<f64>> {
        self.labels[n].map(|y| {
            let mut e = vec![0.0; self.n_classes];
            e[y] = 1.0;
            e
        })
    }

    /// The subset at the given positions, in the given order.
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        Dataset {
            n_attrs: self.n_attrs,
            len: self.len,
            n_classes: self.n_classes,
            series: positions.iter().map(|&i| self.series[i].clone()).collect(),
            labels: positions.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Fraction of observed cells over the whole dataset.
    pub fn observed_fraction(&self) -> f64 {
        let cells = self.series.len() * self.n_attrs * self.len;
        if cells == 0 {
            return 0.0;
        }
        let obs: usize = self.series.iter().map(MaskedMts::observed_count).sum();
        obs as f64 / cells as f64
    }

    pub fn missing_fraction(&self) -> f64 {
        1.0 - self.observed_fraction()
    }
}

// ---------------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------------

const DATA_HEADER: [&str; 4] = ["series_id", "attribute", "time", "value"];
const LABEL_HEADER: [&str; 2] = ["series_id", "label"];

/// Declared schema from the leading `# N=..,V=..,T=..,N_c=..` line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub n_series: usize,
    pub n_attrs: usize,
    pub len: usize,
    pub n_classes: usize,
}

impl DatasetHeader {
    fn parse(line: &str) -> Result<Self> {
        let fmt_err = |msg: String| TckError::Format { line: 1, msg };
        let body = line
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| fmt_err("missing `# N=..,V=..,T=..,N_c=..` metadata line".into()))?;
        let (mut n, mut v, mut t, mut c) = (None, None, None, None);
        for part in body.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| fmt_err(format!("malformed metadata entry `{}`", part.trim())))?;
            let value: usize = value
                .trim()
                .parse()
                .map_err(|_| fmt_err(format!("non-integer metadata value `{}`", value.trim())))?;
            match key.trim() {
                "N" => n = Some(value),
                "V" => v = Some(value),
                "T" => t = Some(value),
                "N_c" => c = Some(value),
                other => return Err(fmt_err(format!("unknown metadata key `{other}`"))),
            }
        }
        match (n, v, t, c) {
            (Some(n_series), Some(n_attrs), Some(len), Some(n_classes)) => {
                if n_attrs == 0 || len == 0 {
                    return Err(fmt_err("V and T must be at least 1".into()));
                }
                Ok(Self {
                    n_series,
                    n_attrs,
                    len,
                    n_classes,
                })
            }
            _ => Err(fmt_err("metadata must declare N, V, T and N_c".into())),
        }
    }

    fn render(&self) -> String {
        format!(
            "# N={},V={},T={},N_c={}",
            self.n_series, self.n_attrs, self.len, self.n_classes
        )
    }
}

fn parse_index(field: &str, name: &str, line: usize, max: usize) -> Result<usize> {
    let value: usize = field.trim().parse().map_err(|_| TckError::Format {
        line,
        msg: format!("{name} `{field}` is not a positive integer"),
    })?;
    if value < 1 || value > max {
        return Err(TckError::Format {
            line,
            msg: format!("{name} {value} outside declared range 1..={max}"),
        });
    }
    Ok(value - 1)
}

/// Reads the long-format data CSV and an optional label CSV.
///
/// Series ids in the files are dense positions `1..=N`.
pub fn read_dataset<R: Read, L: Read>(data: R, labels: Option<L>) -> Result<Dataset> {
    let mut reader = BufReader::new(data);
    let mut meta = String::new();
    reader.read_line(&mut meta)?;
    if meta.trim().is_empty() {
        return Err(TckError::Format {
            line: 1,
            msg: "empty file: metadata line required".into(),
        });
    }
    let header = DatasetHeader::parse(&meta)?;

    let mut series: Vec<MaskedMts> = (1..=header.n_series as u64)
        .map(|id| MaskedMts::missing(id, header.n_attrs, header.len))
        .collect();

    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let cols = csv.headers()?.clone();
    if !cols.is_empty() && cols.iter().ne(DATA_HEADER) {
        return Err(TckError::Format {
            line: 2,
            msg: format!("expected header `{}`", DATA_HEADER.join(",")),
        });
    }
    for rec in csv.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize + 1);
        if rec.len() != 4 {
            return Err(TckError::Format {
                line,
                msg: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let n = parse_index(&rec[0], "series_id", line, header.n_series)?;
        let v = parse_index(&rec[1], "attribute", line, header.n_attrs)?;
        let t = parse_index(&rec[2], "time", line, header.len)?;
        let x: f64 = rec[3].parse().map_err(|_| TckError::Format {
            line,
            msg: format!("value `{}` is not a number", &rec[3]),
        })?;
        if !x.is_finite() {
            return Err(TckError::Format {
                line,
                msg: "non-finite value".into(),
            });
        }
        if series[n].is_observed(v, t) {
            return Err(TckError::Format {
                line,
                msg: format!("duplicate cell (series {}, attribute {}, time {})", n + 1, v + 1, t + 1),
            });
        }
        series[n].set(v, t, x);
    }

    let mut label_vec = vec![None; header.n_series];
    if let Some(labels) = labels {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(labels);
        let cols = csv.headers()?.clone();
        if cols.iter().ne(LABEL_HEADER) {
            return Err(TckError::Format {
                line: 1,
                msg: format!("expected label header `{}`", LABEL_HEADER.join(",")),
            });
        }
        for rec in csv.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize + 1);
            let n = parse_index(&rec[0], "series_id", line, header.n_series)?;
            let raw = rec.get(1).unwrap_or("");
            if raw.is_empty() {
                continue;
            }
            let y: usize = raw.parse().map_err(|_| TckError::Format {
                line,
                msg: format!("label `{raw}` is not an integer"),
            })?;
            if y < 1 || y > header.n_classes {
                return Err(TckError::Format {
                    line,
                    msg: format!("label {y} outside 1..={}", header.n_classes),
                });
            }
            label_vec[n] = Some(y - 1);
        }
    }

    Ok(Dataset {
        n_attrs: header.n_attrs,
        len: header.len,
        n_classes: header.n_classes,
        series,
        labels: label_vec,
    })
}

/// Writes the data CSV and, when given, the label CSV. Series are renumbered
/// densely `1..=N` in dataset order.
pub fn write_dataset<W: Write, L: Write>(data: &Dataset, out: W, labels: Option<L>) -> Result<()> {
    let mut out = BufWriter::new(out);
    let header = DatasetHeader {
        n_series: data.n_series(),
        n_attrs: data.n_attrs,
        len: data.len,
        n_classes: data.n_classes,
    };
    writeln!(out, "{}", header.render())?;
    writeln!(out, "{}", DATA_HEADER.join(","))?;
    for (n, s) in data.series.iter().enumerate() {
        for v in 0..s.n_attrs {
            for t in 0..s.len {
                if let Some(x) = s.value(v, t) {
                    writeln!(out, "{},{},{},{}", n + 1, v + 1, t + 1, x)?;
                }
            }
        }
    }
    out.flush()?;
    if let Some(labels) = labels {
        let mut out = BufWriter::new(labels);
        writeln!(out, "{}", LABEL_HEADER.join(","))?;
        for (n, y) in data.labels.iter().enumerate() {
            match y {
                Some(y) => writeln!(out, "{},{}", n + 1, y + 1)?,
                None => writeln!(out, "{},", n + 1)?,
            }
        }
        out.flush()?;
    }
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>, label_path: Option<&Path>) -> Result<Dataset> {
    let data = File::open(path)?;
    match label_path {
        Some(p) => read_dataset(data, Some(File::open(p)?)),
        None => read_dataset(data, None::<File>),
    }
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>, label_path: Option<&Path>) -> Result<()> {
    let out = File::create(path)?;
    match label_path {
        Some(p) => write_dataset(data, out, Some(File::create(p)?)),
        None => write_dataset(data, out, None::<File>),
    }
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// Per-attribute mean and sample standard deviation over observed entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Attributes with zero variance (or a single observation); mapped to 0.
    pub constant: Vec<bool>,
}

impl StandardizationStats {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let n_attrs = data.n_attrs;
        let mut mean = vec![0.0; n_attrs];
        let mut std = vec![0.0; n_attrs];
        let mut constant = vec![false; n_attrs];
        for v in 0..n_attrs {
            let obs: Vec<f64> = data
                .series
                .iter()
                .flat_map(|s| (0..s.len).filter_map(move |t| s.value(v, t)))
                .collect();
            if obs.is_empty() {
                return Err(TckError::EmptyAttribute { attribute: v + 1 });
            }
            let m = obs.iter().sum::<f64>() / obs.len() as f64;
            let sd = if obs.len() > 1 {
                (obs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (obs.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            mean[v] = m;
            std[v] = sd;
            constant[v] = sd == 0.0;
        }
        Ok(Self { mean, std, constant })
    }

    /// Applies these statistics to a dataset with the same attribute count.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_attrs != self.mean.len() {
            return Err(TckError::Schema(format!(
                "statistics cover {} attributes, dataset has {}",
                self.mean.len(),
                data.n_attrs
            )));
        }
        let mut out = data.clone();
        for s in &mut out.series {
            for v in 0..s.n_attrs {
                for t in 0..s.len {
                    if let Some(x) = s.value(v, t) {
                        let z = if self.constant[v] {
                            0.0
                        } else {
                            (x - self.mean[v]) / self.std[v]
                        };
                        s.set(v, t, z);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Standardizes each attribute to zero mean and unit sample standard deviation
/// over its observed entries.
pub fn standardize(data: &Dataset) -> Result<(Dataset, StandardizationStats)> {
    let stats = StandardizationStats::fit(data)?;
    Ok((stats.apply(data)?, stats))
}

/// Output length after window-mean shortening: `ceil(T / ceil(T / cap))`.
pub fn resampled_length(t_max: usize, cap: usize) -> usize {
    let window = t_max.div_ceil(cap);
    t_max.div_ceil(window)
}

/// Shortens every series to [`resampled_length`] by averaging observed values
/// in non-overlapping windows. A window with no observed value stays missing.
pub fn resample_length(data: &Dataset, cap: usize) -> Result<Dataset> {
    if cap < 1 {
        return param_err("resampling cap must be at least 1");
    }
    let t_max = data.len;
    let window = t_max.div_ceil(cap);
    let new_len = t_max.div_ceil(window);
    let series = data
        .series
        .iter()
        .map(|s| {
            let mut out = MaskedMts::missing(s.id, s.n_attrs, new_len);
            for v in 0..s.n_attrs {
                for w in 0..new_len {
                    let (sum, count) = (w * window..((w + 1) * window).min(t_max))
                        .filter_map(|t| s.value(v, t))
                        .fold((0.0, 0usize), |(a, c), x| (a + x, c + 1));
                    if count > 0 {
                        out.set(v, w, sum / count as f64);
                    }
                }
            }
            out
        })
        .collect();
    Ok(Dataset {
        n_attrs: data.n_attrs,
        len: new_len,
        n_classes: data.n_classes,
        series,
        labels: data.labels.clone(),
    })
}

/// Appends the mask as `V` extra, fully observed attributes (values 0/1).
pub fn concat_mask(data: &Dataset) -> Dataset {
    let n_attrs = 2 * data.n_attrs;
    let series = data
        .series
        .iter()
        .map(|s| {
            let mut out = MaskedMts::missing(s.id, n_attrs, s.len);
            for v in 0..s.n_attrs {
                for t in 0..s.len {
                    if let Some(x) = s.value(v, t) {
                        out.set(v, t, x);
                    }
                    out.set(s.n_attrs + v, t, if s.is_observed(v, t) { 1.0 } else { 0.0 });
                }
            }
            out
        })
        .collect();
    Dataset {
        n_attrs,
        len: data.len,
        n_classes: data.n_classes,
        series,
        labels: data.labels.clone(),
    }
}

/// Replaces every missing cell with 0 and marks it observed.
pub fn zero_impute(data: &Dataset) -> Dataset {
    let mut out = data.clone();
    for s in &mut out.series {
        for v in 0..s.n_attrs {
            for t in 0..s.len {
                if !s.is_observed(v, t) {
                    s.set(v, t, 0.0);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_attr(id: u64, cells: &[Option<f64>]) -> MaskedMts {
        MaskedMts::from_optional_rows(id, &[cells.to_vec()]).unwrap()
    }

    fn parse(data: &str, labels: Option<&str>) -> Result<Dataset> {
        read_dataset(data.as_bytes(), labels.map(str::as_bytes))
    }

    #[test]
    fn absent_rows_are_missing() {
        let d = parse(
            "# N=1,V=1,T=3,N_c=1\nseries_id,attribute,time,value\n1,1,1,0.5\n1,1,2,0.7\n",
            None,
        )
        .unwrap();
        assert_eq!(d.series()[0].mask(), &[true, true, false]);
        assert_eq!(d.series()[0].value(0, 1), Some(0.7));
    }

    #[test]
    fn empty_dataset() {
        let d = parse("# N=0,V=2,T=4,N_c=2\nseries_id,attribute,time,value\n", None).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.n_attrs(), 2);
    }

    #[test]
    fn duplicate_and_range_errors() {
        let dup = "# N=1,V=1,T=3,N_c=1\nseries_id,attribute,time,value\n1,1,1,0.5\n1,1,1,0.7\n";
        assert!(matches!(parse(dup, None), Err(TckError::Format { line: 4, .. })));
        let oob = "# N=1,V=1,T=3,N_c=1\nseries_id,attribute,time,value\n1,2,1,0.5\n";
        assert!(matches!(parse(oob, None), Err(TckError::Format { .. })));
        let t_oob = "# N=1,V=1,T=3,N_c=1\nseries_id,attribute,time,value\n1,1,4,0.5\n";
        assert!(matches!(parse(t_oob, None), Err(TckError::Format { .. })));
    }

    #[test]
    fn labels_with_blanks_and_range_check() {
        let data = "# N=2,V=1,T=1,N_c=2\nseries_id,attribute,time,value\n1,1,1,1\n2,1,1,2\n";
        let d = parse(data, Some("series_id,label\n1,2\n2,\n")).unwrap();
        assert_eq!(d.labels(), &[Some(1), None]);
        assert!(parse(data, Some("series_id,label\n1,3\n")).is_err());
        assert!(parse(data, Some("series_id,label\n1,0\n")).is_err());
    }

    #[test]
    fn standardize_sample_std() {
        let s = one_attr(1, &[Some(1.0), Some(2.0), Some(3.0)]);
        let d = Dataset::from_series(vec![s], vec![None], 1).unwrap();
        let (z, stats) = standardize(&d).unwrap();
        assert_eq!(stats.std, vec![1.0]);
        let vals: Vec<_> = (0..3).map(|t| z.series()[0].value(0, t).unwrap()).collect();
        assert_eq!(vals, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn standardize_constant_attribute() {
        let s = one_attr(1, &[Some(5.0), Some(5.0)]);
        let d = Dataset::from_series(vec![s], vec![None], 1).unwrap();
        let (z, stats) = standardize(&d).unwrap();
        assert!(stats.constant[0]);
        assert_eq!(z.series()[0].value(0, 0), Some(0.0));
        assert_eq!(z.series()[0].value(0, 1), Some(0.0));
    }

    #[test]
    fn standardize_respects_mask() {
        let s = one_attr(1, &[Some(1.0), None, Some(3.0)]);
        let d = Dataset::from_series(vec![s], vec![None], 1).unwrap();
        let (z, stats) = standardize(&d).unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert!(!z.series()[0].is_observed(0, 1));
        assert!(z.series()[0].raw(0, 1).is_nan());
    }

    #[test]
    fn standardize_empty_attribute_errors() {
        let s = MaskedMts::from_optional_rows(1, &[vec![Some(1.0), Some(2.0)], vec![None, None]]).unwrap();
        let d = Dataset::from_series(vec![s], vec![None], 1).unwrap();
        assert!(matches!(
            standardize(&d),
            Err(TckError::EmptyAttribute { attribute: 2 })
        ));
    }

    #[test]
    fn resampled_lengths_from_benchmarks() {
        assert_eq!(resampled_length(315, 25), 25);
        assert_eq!(resampled_length(205, 25), 23);
        assert_eq!(resampled_length(29, 25), 15);
    }

    #[test]
    fn resample_window_means_and_mask() {
        // T=4, cap=2 -> window 2, length 2.
        let s = one_attr(1, &[Some(1.0), Some(3.0), None, None]);
        let d = Dataset::from_series(vec![s], vec![None], 1).unwrap();
        let r = resample_length(&d, 2).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.series()[0].value(0, 0), Some(2.0));
        assert_eq!(r.series()[0].value(0, 1), None);
        assert!(resample_length(&d, 0).is_err());
    }

    #[test]
    fn concat_mask_layout() {
        let s = one_attr(1, &[Some(4.0), None]);
        let d = Dataset::from_series(vec![s], vec![Some(0)], 1).unwrap();
        let c = concat_mask(&d);
        assert_eq!(c.n_attrs(), 2);
        let out = &c.series()[0];
        assert_eq!(out.value(0, 0), Some(4.0));
        assert!(!out.is_observed(0, 1));
        assert_eq!((out.value(1, 0), out.value(1, 1)), (Some(1.0), Some(0.0)));
        assert_eq!(c.labels(), d.labels());

        let empty = Dataset::new(3, 5, 2);
        assert_eq!(concat_mask(&empty).n_attrs(), 6);
    }

    #[test]
    fn concat_mask_fully_observed() {
        let s = one_attr(1, &[Some(4.0), Some(1.0)]);
        let d = Dataset::from_series(vec![s], vec![None], 1).unwrap();
        let c = concat_mask(&d);
        assert_eq!(c.series()[0].value(1, 0), Some(1.0));
        assert_eq!(c.series()[0].value(1, 1), Some(1.0));
    }

    #[test]
    fn zero_impute_cases() {
        let d = Dataset::from_series(
            vec![one_attr(1, &[None, Some(2.0)]), one_attr(2, &[None, None])],
            vec![None, None],
            1,
        )
        .unwrap();
        let z = zero_impute(&d);
        assert_eq!(z.series()[0].value(0, 0), Some(0.0));
        assert_eq!(z.series()[0].value(0, 1), Some(2.0));
        assert_eq!(z.series()[1].observed_count(), 2);
        assert_eq!(z.series()[1].value(0, 1), Some(0.0));
        assert_eq!(zero_impute(&z), z);
    }

    #[test]
    fn restrict_extracts_segment() {
        let s = MaskedMts::from_rows(3, &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let r = s.restrict(&[1], 1..3);
        assert_eq!(r.n_attrs(), 1);
        assert_eq!(r.values(), &[5.0, 6.0]);
        assert_eq!(r.id, 3);
    }
}
