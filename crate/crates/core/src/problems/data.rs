use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ProblemError;
use crate::matcore::random::{gaussian_matrix, matrix_with_singular_values, rng_from_seed};
use crate::matcore::Matrix;

/// d×B matrix with i.i.d. standard normal entries.
pub fn gaussian_features(d: usize, batch: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    gaussian_matrix(&mut rng, d, batch)
}

/// Geometric singular-value profile s_i = q^i (i = 0..k) with
/// Σ s_i² / s_0² = `target`, solved for q by bisection.
pub fn lowrank_profile(k: usize, target: f64) -> Result<Vec<f64>, ProblemError> {
    if !(target >= 1.0) {
        return Err(ProblemError::InvalidArgument(format!("target ratio {target} < 1")));
    }
    if target > k as f64 {
        return Err(ProblemError::Infeasible(format!(
            "target ratio {target} exceeds min(d, B) = {k}"
        )));
    }
    let ratio = |q: f64| (0..k).map(|i| q.powi(2 * i as i32)).sum::<f64>();
    let q = if target == 1.0 {
        0.0
    } else if target == k as f64 {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    Ok((0..k)
        .map(|i| if i == 0 { 1.0 } else { q.powi(i as i32) })
        .collect())
}

/// d×B matrix U·diag(s)·Vᵀ with Haar factors, a geometric singular-value
/// profile with ‖X‖_F²/‖X‖_op² = `target_ratio`, scaled so ‖X‖_F² = d·B.
pub fn lowrank_features(d: usize, batch: usize, target_ratio: f64, seed: u64) -> Result<Matrix, ProblemError> {
    let k = d.min(batch);
    let mut s = lowrank_profile(k, target_ratio)?;
    let kept = s.iter().rposition(|&v| v > 1e-150).map_or(1, |i| i + 1);
    s.truncate(kept);
    let total: f64 = s.iter().map(|v| v * v).sum();
    let scale = ((d * batch) as f64 / total).sqrt();
    s.iter_mut().for_each(|v| *v *= scale);
    let mut rng = rng_from_seed(seed);
    Ok(matrix_with_singular_values(&mut rng, d, batch, &s))
}

/// c×B label matrix whose columns are one-hot at uniformly random classes.
pub fn onehot_labels(classes: usize, batch: usize, seed: u64) -> Matrix {
    assert!(classes >= 1 && batch >= 1);
    let mut rng = rng_from_seed(seed);
    let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    onehot_from_classes(classes, &idx).expect("indices drawn in range")
}

pub fn onehot_from_classes(classes: usize, idx: &[usize]) -> Result<Matrix, ProblemError> {
    if idx.is_empty() || classes == 0 {
        return Err(ProblemError::InvalidArgument("empty label set".into()));
    }
    let mut y = Matrix::zeros(classes, idx.len());
    for (j, &k) in idx.iter().enumerate() {
        if k >= classes {
            return Err(ProblemError::InvalidArgument(format!("class {k} out of range 0..{classes}")));
        }
        y[(k, j)] = 1.0;
    }
    Ok(y)
}

/// One-hot labels argmax(T·X + noise·N) from a Gaussian linear teacher T.
pub fn teacher_labels(x: &Matrix, classes: usize, noise: f64, seed: u64) -> Result<Matrix, ProblemError> {
    if classes == 0 || !(noise >= 0.0) {
        return Err(ProblemError::InvalidArgument(format!("classes {classes}, noise {noise}")));
    }
    let mut rng = rng_from_seed(seed);
    let teacher = gaussian_matrix(&mut rng, classes, x.rows());
    let mut logits = teacher.matmul(x);
    if noise > 0.0 {
        logits.axpy(noise, &gaussian_matrix(&mut rng, classes, x.cols()));
    }
    let idx: Vec<usize> = (0..x.cols())
        .map(|j| {
            (0..classes)
                .max_by(|&a, &b| logits[(a, j)].total_cmp(&logits[(b, j)]))
                .expect("at least one class")
        })
        .collect();
    onehot_from_classes(classes, &idx)
}

/// d×B features drawn around `classes` Gaussian means (scale `spread`),
/// with their one-hot labels.
pub fn gaussian_clusters(
    d: usize,
    batch: usize,
    classes: usize,
    spread: f64,
    seed: u64,
) -> Result<(Matrix, Matrix), ProblemError> {
    if d == 0 || batch == 0 || classes == 0 {
        return Err(ProblemError::InvalidArgument("empty cluster spec".into()));
    }
    let mut rng = rng_from_seed(seed);
    let means = gaussian_matrix(&mut rng, d, classes).scale(spread);
    let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let mut x = gaussian_matrix(&mut rng, d, batch);
    for (j, &k) in idx.iter().enumerate() {
        for i in 0..d {
            x[(i, j)] += means[(i, k)];
        }
    }
    Ok((x, onehot_from_classes(classes, &idx)?))
}

fn read_rows(path: &Path, skip_header: bool) -> Result<Vec<Vec<f64>>, ProblemError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(skip_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ProblemError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + usize::from(skip_header);
        let record = record.map_err(|e| ProblemError::Csv {
            row,
            message: e.to_string(),
        })?;
        let values = record
            .iter()
            .map(|field| {
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| ProblemError::Csv {
                    row,
                    message: format!("non-numeric field {field:?}"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first().map(|r: &Vec<f64>| r.len()) {
            if values.len() != first {
                return Err(ProblemError::Csv {
                    row,
                    message: format!("expected {first} fields, found {}", values.len()),
                });
            }
        }
        rows.push(values);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(ProblemError::Csv {
            row: 0,
            message: "no data rows".into(),
        });
    }
    Ok(rows)
}

/// Reads a d×B feature matrix (rows = feature dimensions, columns = samples).
pub fn load_features_csv(path: impl AsRef<Path>, skip_header: bool) -> Result<Matrix, ProblemError> {
    let rows = read_rows(path.as_ref(), skip_header)?;
    let (r, c) = (rows.len(), rows[0].len());
    Ok(Matrix::new(r, c, rows.into_iter().flatten().collect())?)
}

/// Writes a matrix as header-less CSV with round-trip float formatting.
pub fn save_matrix_csv(path: impl AsRef<Path>, a: &Matrix) -> Result<(), ProblemError> {
    let path = path.as_ref();
    let io_err = |e: std::io::Error| ProblemError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| io_err(std::io::Error::other(e.to_string())))?;
    for i in 0..a.rows() {
        writer
            .write_record(a.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| io_err(std::io::Error::other(e.to_string())))?;
    }
    writer.flush().map_err(io_err)
}

/// Label file layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelFormat {
    /// c×B matrix of one-hot columns.
    OneHot,
    /// One integer class per sample, as a single column or a single row.
    ClassIndex { classes: usize },
}

pub fn load_labels_csv(path: impl AsRef<Path>, skip_header: bool, format: LabelFormat) -> Result<Matrix, ProblemError> {
    match format {
        LabelFormat::OneHot => {
            let y = load_features_csv(path, skip_header)?;
            for j in 0..y.cols() {
                let ones = (0..y.rows()).filter(|&i| y[(i, j)] == 1.0).count();
                let zeros = (0..y.rows()).filter(|&i| y[(i, j)] == 0.0).count();
                if ones != 1 || ones + zeros != y.rows() {
                    return Err(ProblemError::InvalidArgument(format!("label column {j} is not one-hot")));
                }
            }
            Ok(y)
        }
        LabelFormat::ClassIndex { classes } => {
            let rows = read_rows(path.as_ref(), skip_header)?;
            let flat: Vec<f64> = if rows[0].len() == 1 {
                rows.iter().map(|r| r[0]).collect()
            } else if rows.len() == 1 {
                rows[0].clone()
            } else {
                return Err(ProblemError::InvalidArgument("class labels must be a single row or column".into()));
            };
            let idx = flat
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if v >= 0.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(ProblemError::Csv {
                            row: i,
                            message: format!("class label {v} is not a nonnegative integer"),
                        })
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            onehot_from_classes(classes, &idx)
        }
    }
}
