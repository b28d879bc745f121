//! CSV ingestion, seeded splitting, input quantization and synthetic data.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::quantizer::QuantizerSpec;

/// Row-major matrix of activation codes (samples x columns).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codes {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u32>,
}

impl Codes {
    pub fn new(rows: usize, cols: usize, data: Vec<u32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} codes for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn select(&self, rows: &[usize]) -> Codes {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Codes {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_features: usize,
    /// Row-major, `len() / num_features` samples.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    /// Per-feature `(min, max)`, taken from the training split.
    pub feature_ranges: Vec<(f64, f64)>,
}

impl Dataset {
    pub fn new(num_features: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if num_features == 0 || features.len() != labels.len() * num_features {
            return Err(Error::Dataset(format!(
                "{} feature values for {} samples of {num_features} features",
                features.len(),
                labels.len()
            )));
        }
        if let Some(x) = features.iter().find(|x| !x.is_finite()) {
            return Err(Error::Dataset(format!("non-finite feature value {x}")));
        }
        let feature_ranges = compute_ranges(num_features, &features);
        Ok(Self {
            num_features,
            features,
            labels,
            feature_ranges,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.features[r * self.num_features..(r + 1) * self.num_features]
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= num_classes) {
            Some(l) => Err(Error::Dataset(format!(
                "label {l} outside [0, {num_classes})"
            ))),
            None => Ok(()),
        }
    }

    fn subset(&self, rows: &[usize], ranges: &[(f64, f64)]) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.num_features);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            features.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        Dataset {
            num_features: self.num_features,
            features,
            labels,
            feature_ranges: ranges.to_vec(),
        }
    }
}

fn compute_ranges(num_features: usize, features: &[f64]) -> Vec<(f64, f64)> {
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); num_features];
    for row in features.chunks(num_features) {
        for (r, &x) in ranges.iter_mut().zip(row) {
            r.0 = r.0.min(x);
            r.1 = r.1.max(x);
        }
    }
    for r in &mut ranges {
        if !r.0.is_finite() {
            *r = (0.0, 0.0);
        }
    }
    ranges
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// A CSV file with a header row. The last non-`split` column is an integer
/// label; every other column is a real feature. An optional `split` column
/// holds `train`, `val` or `test`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTable {
    pub data: Dataset,
    pub split: Option<Vec<Split>>,
}

pub fn read_csv(path: &Path) -> Result<LabeledTable> {
    read_csv_with(path, b',')
}

pub fn read_csv_with(path: &Path, delimiter: u8) -> Result<LabeledTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let split_col = headers.iter().position(|h| h.eq_ignore_ascii_case("split"));
    let value_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| Some(c) != split_col)
        .collect();
    if value_cols.len() < 2 {
        return Err(Error::Dataset(
            "need at least one feature column and a label column".into(),
        ));
    }
    let label_col = *value_cols.last().unwrap();
    let feature_cols = &value_cols[..value_cols.len() - 1];

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut split = split_col.map(|_| Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        for &c in feature_cols {
            let v: f64 = rec[c].parse().map_err(|_| {
                Error::Dataset(format!("line {line}: bad feature value {:?}", &rec[c]))
            })?;
            features.push(v);
        }
        let l: usize = rec[label_col]
            .parse()
            .map_err(|_| Error::Dataset(format!("line {line}: bad label {:?}", &rec[label_col])))?;
        labels.push(l);
        if let (Some(s), Some(c)) = (split.as_mut(), split_col) {
            s.push(match rec[c].to_ascii_lowercase().as_str() {
                "train" => Split::Train,
                "val" | "valid" | "validation" => Split::Val,
                "test" => Split::Test,
                other => {
                    return Err(Error::Dataset(format!(
                        "line {line}: unknown split {other:?}"
                    )))
                }
            });
        }
    }
    if labels.is_empty() {
        return Err(Error::Dataset(format!("{} has no rows", path.display())));
    }
    Ok(LabeledTable {
        data: Dataset::new(feature_cols.len(), features, labels)?,
        split,
    })
}

pub fn write_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.num_features).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for r in 0..ds.len() {
        let mut rec: Vec<String> = ds.row(r).iter().map(|x| format!("{x:?}")).collect();
        rec.push(ds.labels[r].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

impl LabeledTable {
    /// Uses the `split` column when present, otherwise a seeded 60/20/20
    /// shuffle. Feature ranges of all three parts come from the train part.
    pub fn into_splits(self, seed: u64) -> Result<Splits> {
        let n = self.data.len();
        let (train, val, test): (Vec<usize>, Vec<usize>, Vec<usize>) = match &self.split {
            Some(tags) => {
                let pick = |want: Split| (0..n).filter(|&i| tags[i] == want).collect::<Vec<_>>();
                (pick(Split::Train), pick(Split::Val), pick(Split::Test))
            }
            None => {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                let n_train = n * 6 / 10;
                let n_val = n * 2 / 10;
                (
                    idx[..n_train].to_vec(),
                    idx[n_train..n_train + n_val].to_vec(),
                    idx[n_train + n_val..].to_vec(),
                )
            }
        };
        if train.is_empty() {
            return Err(Error::Dataset("training split is empty".into()));
        }
        let full = &self.data;
        let train_ds = full.subset(&train, &[]);
        let ranges = compute_ranges(full.num_features, &train_ds.features);
        Ok(Splits {
            train: full.subset(&train, &ranges),
            val: full.subset(&val, &ranges),
            test: full.subset(&test, &ranges),
        })
    }
}

/// Min-max normalization plus an unsigned `bits`-bit quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct InputQuantizer {
    pub bits: u32,
    pub ranges: Vec<(f64, f64)>,
}

impl InputQuantizer {
    pub fn new(bits: u32, ranges: Vec<(f64, f64)>) -> Result<Self> {
        QuantizerSpec::unit_interval(bits)?;
        Ok(Self { bits, ranges })
    }

    pub fn spec(&self) -> QuantizerSpec {
        QuantizerSpec::unit_interval(self.bits).expect("validated at construction")
    }

    pub fn encode_feature(&self, feature: usize, x: f64) -> Result<u32> {
        let (lo, hi) = self.ranges[feature];
        if hi <= lo {
            return Ok(0);
        }
        let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        Ok(self.spec().quantize(t)?.value)
    }

    pub fn encode(&self, ds: &Dataset) -> Result<Codes> {
        if ds.num_features != self.ranges.len() {
            return Err(Error::Shape(format!(
                "dataset has {} features, quantizer expects {}",
                ds.num_features,
                self.ranges.len()
            )));
        }
        let mut data = Vec::with_capacity(ds.features.len());
        for r in 0..ds.len() {
            for (f, &x) in ds.row(r).iter().enumerate() {
                data.push(self.encode_feature(f, x)?);
            }
        }
        Codes::new(ds.len(), ds.num_features, data)
    }
}

/// Quantizes every feature of `ds` to an unsigned `input_bits`-bit code
/// using the dataset's own feature ranges.
pub fn quantize_inputs(ds: &Dataset, input_bits: u32) -> Result<Codes> {
    InputQuantizer::new(input_bits, ds.feature_ranges.clone())?.encode(ds)
}

/// Gaussian blobs: one random center per class in `[0, 1]^features`,
/// isotropic noise with standard deviation `spread`, uniform labels.
pub fn synthetic_blobs(
    samples: usize,
    features: usize,
    classes: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes == 0 || features == 0 {
        return Err(Error::Dataset(
            "need at least one class and one feature".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<f64> = (0..classes * features)
        .map(|_| rng.random::<f64>())
        .collect();
    let noise = Normal::new(0.0, spread).map_err(|e| Error::Dataset(e.to_string()))?;
    let mut x = Vec::with_capacity(samples * features);
    let mut y = Vec::with_capacity(samples);
    for _ in 0..samples {
        let c = rng.random_range(0..classes);
        for f in 0..features {
            x.push(centers[c * features + f] + noise.sample(&mut rng));
        }
        y.push(c);
    }
    Dataset::new(features, x, y)
}

/// Two classes split by the hyperplane `x0 + x1 = 1` in `[0, 1]^features`,
/// with no samples closer than `margin` to it.
pub fn synthetic_separable(
    samples: usize,
    features: usize,
    margin: f64,
    seed: u64,
) -> Result<Dataset> {
    if features < 2 {
        return Err(Error::Dataset("need at least two features".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(samples * features);
    let mut y = Vec::with_capacity(samples);
    while y.len() < samples {
        let row: Vec<f64> = (0..features).map(|_| rng.random::<f64>()).collect();
        let d = row[0] + row[1] - 1.0;
        if d.abs() < margin {
            continue;
        }
        x.extend(row);
        y.push(usize::from(d > 0.0));
    }
    Dataset::new(features, x, y)
}
