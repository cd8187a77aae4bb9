//! Synthetic data, CSV ingestion and CSV writing.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};
use crate::kernels::{kernel_matrix, Dataset, Hyperparams};
use crate::numerics::{cholesky_factor, standard_normal_vec, stream_rng, DenseMatrix};

const DATA_STREAM: u64 = 0xDA7A;

/// Jitter allowed when factoring the noiseless prior covariance.
pub const PRIOR_JITTER: f64 = 1e-10;

/// Draws `y = L ε + σ ε′` with `L Lᵀ = K_XX + 1e-10 I`.
pub fn sample_gp_prior(x: &DenseMatrix, theta: &Hyperparams, rng: &mut impl Rng) -> Result<Vec<f64>> {
    theta.check_dim(x.cols())?;
    let k = kernel_matrix(x, theta, false)?;
    let l = cholesky_factor(&k, PRIOR_JITTER)?;
    let n = x.rows();
    let eps = standard_normal_vec(rng, n);
    let noise = standard_normal_vec(rng, n);
    let sd = theta.noise_sq.sqrt();
    Ok((0..n)
        .map(|i| {
            let row = &l.row(i)[..=i];
            row.iter().zip(&eps).map(|(a, b)| a * b).sum::<f64>() + sd * noise[i]
        })
        .collect())
}

/// `y = x sin(5πx) + ε` on a uniform grid over `[0, 1]`.
pub fn gen_toy_sine(n: usize, noise_sd: f64, rng: &mut impl Rng) -> Result<Dataset> {
    if n < 2 {
        return Err(GpError::InvalidConfig(format!("toy data needs at least 2 points, got {n}")));
    }
    let x = DenseMatrix::from_fn(n, 1, |i, _| i as f64 / (n - 1) as f64);
    let eps = standard_normal_vec(rng, n);
    let y = (0..n)
        .map(|i| toy_sine_mean(x[(i, 0)]) + noise_sd * eps[i])
        .collect();
    Dataset::new(x, y)
}

pub fn toy_sine_mean(x: f64) -> f64 {
    x * (5.0 * std::f64::consts::PI * x).sin()
}

/// Declarative synthetic data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SyntheticSpec {
    /// Toy sine on a grid, noise standard deviation `noise_sd`.
    ToySine {
        n: usize,
        #[serde(default = "default_toy_noise_sd")]
        noise_sd: f64,
    },
    /// Inputs uniform on `[0, 1]^d`, targets drawn from the GP prior.
    GpPrior { n: usize, d: usize, theta: Hyperparams },
}

fn default_toy_noise_sd() -> f64 {
    0.1
}

impl SyntheticSpec {
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        let mut rng = stream_rng(seed, DATA_STREAM);
        match self {
            Self::ToySine { n, noise_sd } => gen_toy_sine(*n, *noise_sd, &mut rng),
            Self::GpPrior { n, d, theta } => gp_prior_dataset(*n, *d, theta, &mut rng),
        }
    }
}

/// Uniform random inputs on `[0, 1]^d` with targets from the GP prior.
pub fn gp_prior_dataset(n: usize, d: usize, theta: &Hyperparams, rng: &mut impl Rng) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(GpError::EmptyData);
    }
    let x = DenseMatrix::from_vec(n, d, (0..n * d).map(|_| rng.random::<f64>()).collect())?;
    let y = sample_gp_prior(&x, theta, rng)?;
    Dataset::new(x, y)
}

/// A numeric CSV split into inputs and target.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub dataset: Dataset,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

/// Reads a header-plus-numeric CSV. The target defaults to the last
/// column. Standardization stores its means and scales on the dataset.
pub fn load_csv(path: impl AsRef<Path>, target_column: Option<&str>, standardize: bool) -> Result<CsvData> {
    let (headers, rows) = read_numeric_csv(path)?;
    let target = match target_column {
        None => headers.len() - 1,
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| GpError::InvalidConfig(format!("no column named {name:?}")))?,
    };
    if headers.len() < 2 {
        return Err(GpError::InvalidConfig("CSV needs at least one feature column and a target".into()));
    }
    let feature_idx: Vec<usize> = (0..headers.len()).filter(|&j| j != target).collect();
    let x = DenseMatrix::from_fn(rows.len(), feature_idx.len(), |i, j| rows[i][feature_idx[j]]);
    let y = rows.iter().map(|r| r[target]).collect();
    let mut dataset = Dataset::new(x, y)?;
    if standardize {
        dataset = dataset.standardized();
    }
    Ok(CsvData {
        dataset,
        feature_names: feature_idx.iter().map(|&j| headers[j].clone()).collect(),
        target_name: headers[target].clone(),
    })
}

/// Reads the named columns (in the given order) of a numeric CSV.
pub fn load_csv_columns(path: impl AsRef<Path>, names: &[String]) -> Result<DenseMatrix> {
    let (headers, rows) = read_numeric_csv(path)?;
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| GpError::InvalidConfig(format!("no column named {n:?}")))
        })
        .collect::<Result<_>>()?;
    Ok(DenseMatrix::from_fn(rows.len(), idx.len(), |i, j| rows[i][idx[j]]))
}

/// Header plus rows of finite floats. Row numbers in errors are 1-based
/// data rows (the header is row 0); columns are 0-based.
pub fn read_numeric_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| GpError::Parse { row, col: 0, msg: e.to_string() })?;
        if record.len() != headers.len() {
            return Err(GpError::Parse {
                row,
                col: record.len().min(headers.len()),
                msg: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(col, field)| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(v) => Err(GpError::Parse { row, col, msg: format!("non-finite value {v}") }),
                Err(e) => Err(GpError::Parse { row, col, msg: format!("{field:?}: {e}") }),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(GpError::EmptyData);
    }
    Ok((headers, rows))
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes inputs as `x0, x1, …` followed by `y`.
pub fn write_dataset_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.dim()).map(|k| format!("x{k}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.x.row(i).iter().map(|v| fmt_f64(*v)).collect();
        rec.push(fmt_f64(data.y[i]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a table of preformatted fields.
pub fn write_table(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_sine_noiseless_on_curve() {
        let mut rng = stream_rng(0, 0);
        let d = gen_toy_sine(5, 0.0, &mut rng).unwrap();
        assert_eq!(d.y[0], 0.0);
        assert!((d.y[2] - 0.5).abs() < 1e-15);
        for i in 0..5 {
            assert_eq!(d.y[i], toy_sine_mean(d.x[(i, 0)]));
        }
    }

    #[test]
    fn toy_sine_needs_two_points() {
        assert!(gen_toy_sine(1, 0.1, &mut stream_rng(0, 0)).is_err());
    }

    #[test]
    fn prior_sample_seeded() {
        let th = Hyperparams::isotropic(1.0, 0.3, 0.01).unwrap();
        let a = SyntheticSpec::GpPrior { n: 20, d: 2, theta: th.clone() }.generate(5).unwrap();
        let b = SyntheticSpec::GpPrior { n: 20, d: 2, theta: th }.generate(5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 123456.789] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
