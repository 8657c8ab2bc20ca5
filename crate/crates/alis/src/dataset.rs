//! Dataset storage, CSV/LIBSVM ingestion, synthetic generators, and
//! stratified splitting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A dense feature matrix with ground-truth binary labels.
///
/// Labels are exactly -1 or +1. In the query loop the labels are held back
/// behind an [`crate::engine::Oracle`]; this type itself is the
/// experimenter's view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<i8>,
    d: usize,
}

impl Dataset {
    /// Builds a dataset from a row-major `n×d` feature buffer.
    pub fn new(features: Vec<f64>, labels: Vec<i8>, d: usize) -> Result<Self> {
        let n = labels.len();
        if n == 0 || d == 0 {
            return Err(Error::invalid("dataset needs n >= 1 and d >= 1"));
        }
        if features.len() != n * d {
            return Err(Error::invalid(format!(
                "feature buffer holds {} values, expected n*d = {}",
                features.len(),
                n * d
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        if labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(Error::invalid("labels must be -1 or +1"));
        }
        Ok(Dataset {
            features,
            labels,
            d,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Feature row of point `i`.
    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> i8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }
}

/// Supported on-disk formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Libsvm,
}

/// Specification of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub generator: GeneratorKind,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Two spherical Gaussians at `±μ` with `‖2μ‖ = mean_separation` and
    /// covariance `covariance_scale·I`; `class_balance` is the probability
    /// of the `+1` class.
    TwoGaussians {
        mean_separation: f64,
        covariance_scale: f64,
        class_balance: f64,
    },
    /// Standard-normal features labeled by a random hyperplane through the
    /// origin, with labels flipped at `label_noise_rate`.
    LinearMargin { label_noise_rate: f64 },
}

/// Generates a dataset from `spec`, deterministically in `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::invalid("synthetic spec needs n >= 1 and d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.generator {
        GeneratorKind::TwoGaussians {
            mean_separation,
            covariance_scale,
            class_balance,
        } => {
            if !(covariance_scale > 0.0) {
                return Err(Error::invalid("covariance_scale must be positive"));
            }
            if !(class_balance > 0.0 && class_balance < 1.0) {
                return Err(Error::invalid("class_balance must lie in (0, 1)"));
            }
            if !(mean_separation >= 0.0) {
                return Err(Error::invalid("mean_separation must be nonnegative"));
            }
            // Per-coordinate offset so the class means sit mean_separation
            // apart regardless of d.
            let mu = mean_separation / (2.0 * (spec.d as f64).sqrt());
            let sigma = covariance_scale.sqrt();
            let mut features = Vec::with_capacity(spec.n * spec.d);
            let mut labels = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let y: i8 = if rng.gen::<f64>() < class_balance { 1 } else { -1 };
                labels.push(y);
                for _ in 0..spec.d {
                    let z: f64 = rng.sample(StandardNormal);
                    features.push(y as f64 * mu + sigma * z);
                }
            }
            Dataset::new(features, labels, spec.d)
        }
        GeneratorKind::LinearMargin { label_noise_rate } => {
            if !(0.0..0.5).contains(&label_noise_rate) {
                return Err(Error::invalid("label_noise_rate must lie in [0, 0.5)"));
            }
            let mut normal = vec![0.0f64; spec.d];
            for v in &mut normal {
                *v = rng.sample(StandardNormal);
            }
            let scale = normal.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            for v in &mut normal {
                *v /= scale;
            }
            let mut features = Vec::with_capacity(spec.n * spec.d);
            let mut labels = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let row_start = features.len();
                let mut margin = 0.0;
                for v in &normal {
                    let z: f64 = rng.sample(StandardNormal);
                    features.push(z);
                    margin += v * z;
                }
                let _ = row_start;
                let mut y: i8 = if margin >= 0.0 { 1 } else { -1 };
                if rng.gen::<f64>() < label_noise_rate {
                    y = -y;
                }
                labels.push(y);
            }
            Dataset::new(features, labels, spec.d)
        }
    }
}

fn parse_label(raw: &str, line: usize) -> Result<i8> {
    let value: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("label '{raw}' is not a number"),
    })?;
    if value == 1.0 {
        Ok(1)
    } else if value == -1.0 {
        Ok(-1)
    } else if value == 0.0 {
        // 0/1 labeling maps onto -1/+1.
        Ok(-1)
    } else {
        Err(Error::Parse {
            line,
            message: format!("label must be -1, 0, or +1, got '{raw}'"),
        })
    }
}

fn parse_feature(raw: &str, line: usize) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("feature '{raw}' is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("feature '{raw}' is not finite"),
        });
    }
    Ok(value)
}

/// Reads comma-separated rows with the label in the last column.
///
/// Labels may be -1/+1 or 0/1; 0 maps to -1. Every row must carry the same
/// number of columns.
pub fn read_csv_dataset(reader: impl BufRead) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut d: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: line_no,
                message: "row needs at least one feature and a label".into(),
            });
        }
        let row_d = fields.len() - 1;
        match d {
            None => d = Some(row_d),
            Some(expected) if expected != row_d => {
                return Err(Error::Schema(format!(
                    "line {line_no} has {row_d} features, expected {expected}"
                )));
            }
            _ => {}
        }
        for raw in &fields[..row_d] {
            features.push(parse_feature(raw, line_no)?);
        }
        labels.push(parse_label(fields[row_d], line_no)?);
    }
    let d = d.ok_or_else(|| Error::Schema("file contains no data rows".into()))?;
    Dataset::new(features, labels, d)
}

/// Reads sparse `label index:value` lines (1-indexed); `d` is the largest
/// index seen and absent entries densify to 0.
pub fn read_libsvm_dataset(reader: impl BufRead) -> Result<Dataset> {
    let mut rows: Vec<(i8, Vec<(usize, f64)>)> = Vec::new();
    let mut d = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue; // blank line
        };
        let label = parse_label(label_tok, line_no)?;
        let mut entries = Vec::new();
        for tok in tokens {
            let (i_raw, v_raw) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected index:value, got '{tok}'"),
            })?;
            let index: usize = i_raw.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("index '{i_raw}' is not an integer"),
            })?;
            if index == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "indices are 1-based; got 0".into(),
                });
            }
            if entries.iter().any(|&(i, _)| i == index) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate index {index}"),
                });
            }
            let value = parse_feature(v_raw, line_no)?;
            d = d.max(index);
            entries.push((index, value));
        }
        rows.push((label, entries));
    }
    if rows.is_empty() || d == 0 {
        return Err(Error::Schema("file contains no feature data".into()));
    }
    let mut features = vec![0.0; rows.len() * d];
    let mut labels = Vec::with_capacity(rows.len());
    for (r, (label, entries)) in rows.iter().enumerate() {
        labels.push(*label);
        for &(index, value) in entries {
            features[r * d + (index - 1)] = value;
        }
    }
    Dataset::new(features, labels, d)
}

/// Loads a dataset from disk in the given format.
pub fn load_dataset(path: impl AsRef<Path>, format: Format) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    match format {
        Format::Csv => read_csv_dataset(reader),
        Format::Libsvm => read_libsvm_dataset(reader),
    }
}

/// Renders a float with 17 significant digits, enough for an exact `f64`
/// round trip.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// Writes the dataset as CSV with the label in the last column.
pub fn write_csv_dataset(mut writer: impl Write, dataset: &Dataset) -> Result<()> {
    for i in 0..dataset.n() {
        let mut row = String::new();
        for v in dataset.features(i) {
            row.push_str(&format_f64(*v));
            row.push(',');
        }
        row.push_str(&dataset.label(i).to_string());
        row.push('\n');
        writer.write_all(row.as_bytes())?;
    }
    Ok(())
}

/// Saves the dataset to a CSV file.
pub fn save_csv(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path.as_ref())?);
    write_csv_dataset(&mut writer, dataset)?;
    writer.flush()?;
    Ok(())
}

fn indices_by_class(dataset: &Dataset, candidates: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for &i in candidates {
        if dataset.label(i) == 1 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    (pos, neg)
}

/// Stratified holdout split of `candidates`: per class, `round(fraction·n_c)`
/// points go to the holdout side. Both sides come back sorted.
pub fn split_holdout_of(
    dataset: &Dataset,
    candidates: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid("holdout fraction must lie in [0, 1)"));
    }
    if let Some(&bad) = candidates.iter().find(|&&i| i >= dataset.n()) {
        return Err(Error::invalid(format!("index {bad} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pos, mut neg) = indices_by_class(dataset, candidates);
    let mut holdout = Vec::new();
    let mut train = Vec::new();
    for class in [&mut pos, &mut neg] {
        class.shuffle(&mut rng);
        let k = (fraction * class.len() as f64).round() as usize;
        holdout.extend_from_slice(&class[..k]);
        train.extend_from_slice(&class[k..]);
    }
    if train.is_empty() {
        return Err(Error::invalid(
            "holdout fraction leaves no training points",
        ));
    }
    holdout.sort_unstable();
    train.sort_unstable();
    Ok((train, holdout))
}

/// Stratified holdout split of the whole dataset.
pub fn split_holdout(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let all: Vec<usize> = (0..dataset.n()).collect();
    split_holdout_of(dataset, &all, fraction, seed)
}

/// Draws `k` indices stratified by class (largest-remainder quotas), sorted.
pub fn stratified_sample(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = dataset.n();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "sample size must lie in 1..={n}, got {k}"
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    let (mut pos, mut neg) = indices_by_class(dataset, &all);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let exact_pos = k as f64 * pos.len() as f64 / n as f64;
    let mut k_pos = (exact_pos.floor() as usize).min(pos.len());
    let mut k_neg = (k - k_pos).min(neg.len());
    // Largest remainder: hand any shortfall to whichever class has room.
    while k_pos + k_neg < k {
        if exact_pos - exact_pos.floor() >= 0.5 && k_pos < pos.len() || k_neg == neg.len() {
            k_pos += 1;
        } else {
            k_neg += 1;
        }
    }
    let mut out: Vec<usize> = pos[..k_pos].iter().chain(neg[..k_neg].iter()).copied().collect();
    out.sort_unstable();
    Ok(out)
}
