//! Datasets: synthetic Gaussian clusters, the 1-d ambiguity toy, and CSV ingestion.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, RngStream};

/// Features with aligned binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                actual: y.len(),
                context: "dataset rows vs labels",
            });
        }
        if let Some(&bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidLabel(bad));
        }
        Ok(Dataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1.0).count()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Random `(train, test)` split; the test part gets `round(n * test_fraction)` rows.
    pub fn split(&self, test_fraction: f64, rng: &mut RngStream) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::InvalidParameter(format!("test fraction {test_fraction} outside [0, 1)")));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        rng.shuffle(&mut idx);
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        let (test, train) = idx.split_at(n_test);
        Ok((self.subset(train), self.subset(test)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d_in: usize,
    pub pos_frac: f64,
    /// Distance between the two class means.
    pub separation: f64,
    #[serde(default = "one")]
    pub noise_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

/// Two Gaussian clusters at `+-separation/2` along the diagonal direction,
/// isotropic noise of scale `noise_scale`, labels Bernoulli(`pos_frac`).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if !(spec.pos_frac > 0.0 && spec.pos_frac < 1.0) {
        return Err(Error::InvalidParameter(format!("pos_frac {} outside (0, 1)", spec.pos_frac)));
    }
    if spec.d_in == 0 || spec.n == 0 {
        return Err(Error::InvalidParameter("n and d_in must be >= 1".into()));
    }
    if !(spec.separation >= 0.0) || !(spec.noise_scale >= 0.0) {
        return Err(Error::InvalidParameter("separation and noise_scale must be >= 0".into()));
    }
    let mut rng = RngStream::new(spec.seed);
    let offset = 0.5 * spec.separation / (spec.d_in as f64).sqrt();
    let mut x = Matrix::zeros(spec.n, spec.d_in);
    let mut y = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let label = rng.bernoulli(spec.pos_frac);
        let shift = if label { offset } else { -offset };
        for v in x.row_mut(i) {
            *v = shift + spec.noise_scale * rng.normal();
        }
        y.push(if label { 1.0 } else { 0.0 });
    }
    Dataset::new(x, y)
}

/// Positives uniform on [0,1]; negatives uniform on [0,1] with probability 0.1
/// and on [1,2] otherwise; balanced labels.
pub fn generate_toy_1d(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let mut rng = RngStream::new(seed);
    let mut x = Matrix::zeros(n, 1);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = rng.bernoulli(0.5);
        let u = rng.uniform();
        let v = if label || rng.bernoulli(0.1) { u } else { 1.0 + u };
        x.set(i, 0, v);
        y.push(if label { 1.0 } else { 0.0 });
    }
    Dataset::new(x, y)
}

/// Bayes posterior `P(y = 1 | x)` of the toy distribution.
pub fn toy_1d_posterior(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        1.0 / 1.1
    } else {
        0.0
    }
}

/// Reads a `label,f1,...,fk` CSV without normalization.
pub fn read_csv_raw(path: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.len() < 2 {
        return Err(parse_err(1, "expected header `label,f1,...,fk`".into()));
    }
    if headers.get(0).map(str::trim) != Some("label") {
        return Err(parse_err(1, "first column must be `label`".into()));
    }
    let k = headers.len() - 1;
    let mut data = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != k + 1 {
            return Err(parse_err(line, format!("expected {} fields, found {}", k + 1, rec.len())));
        }
        let label: f64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("label `{}` is not a number", &rec[0])))?;
        if label != 0.0 && label != 1.0 {
            return Err(parse_err(line, format!("label must be 0 or 1, got `{}`", &rec[0])));
        }
        y.push(label);
        for field in rec.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("feature `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("feature `{field}` is not finite")));
            }
            data.push(v);
        }
    }
    if y.is_empty() {
        return Err(Error::Empty("csv has no data rows"));
    }
    Dataset::new(Matrix::from_vec(y.len(), k, data)?, y)
}

/// Reads a CSV dataset and min-max normalizes every feature column to [0,1].
/// Constant columns become 0.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut ds = read_csv_raw(path)?;
    normalize_columns(&mut ds.x);
    Ok(ds)
}

fn normalize_columns(x: &mut Matrix) {
    for c in 0..x.cols() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in 0..x.rows() {
            lo = lo.min(x.get(r, c));
            hi = hi.max(x.get(r, c));
        }
        let span = hi - lo;
        for r in 0..x.rows() {
            let v = if span > 0.0 { (x.get(r, c) - lo) / span } else { 0.0 };
            x.set(r, c, v);
        }
    }
}

pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["label".to_string()];
    header.extend((1..=ds.dim()).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for (row, &label) in ds.x.iter_rows().zip(&ds.y) {
        let mut rec = vec![format!("{}", label as u8)];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
