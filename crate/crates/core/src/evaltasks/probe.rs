use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Representation;
use crate::diffmath::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const PROBE_FOLDS: usize = 5;
const RIDGE: f64 = 1e-3;
const LOGISTIC_L2: f64 = 1e-4;
const LOGISTIC_ITERS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTarget {
    SharedClass,
    ExclX,
    ExclY,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub target: ProbeTarget,
    pub representation: Representation,
    /// Accuracy for class targets, pooled out-of-fold R² (mean over target
    /// columns) for continuous ones.
    pub score: f64,
    pub folds: usize,
}

pub enum Targets<'a> {
    Class(&'a [u32]),
    Continuous(&'a Matrix<f32>),
}

fn folds(n: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (0..PROBE_FOLDS)
        .map(|f| perm.iter().copied().skip(f).step_by(PROBE_FOLDS).collect())
        .collect()
}

/// Standardizes with statistics from `fit` rows; appends a bias column.
fn design(x: &DMatrix<f64>, fit: &[usize], rows: &[usize]) -> DMatrix<f64> {
    let d = x.ncols();
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for j in 0..d {
        mean[j] = fit.iter().map(|&i| x[(i, j)]).sum::<f64>() / fit.len() as f64;
        let var = fit.iter().map(|&i| (x[(i, j)] - mean[j]).powi(2)).sum::<f64>() / fit.len() as f64;
        sd[j] = if var > 1e-12 { var.sqrt() } else { 1.0 };
    }
    DMatrix::from_fn(rows.len(), d + 1, |r, j| {
        if j == d {
            1.0
        } else {
            (x[(rows[r], j)] - mean[j]) / sd[j]
        }
    })
}

fn ridge(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut g = a.transpose() * a;
    for j in 0..g.nrows() - 1 {
        g[(j, j)] += RIDGE * a.nrows() as f64;
    }
    let last = g.nrows() - 1;
    g[(last, last)] += 1e-9;
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::SingularCovariance("ridge normal equations".into()))?;
    Ok(chol.solve(&(a.transpose() * b)))
}

/// Multinomial logistic regression by gradient descent on standardized inputs.
fn logistic(a: &DMatrix<f64>, y: &[usize], k: usize) -> DMatrix<f64> {
    let (n, d) = a.shape();
    let mut w = DMatrix::zeros(d, k);
    let lr = 1.0 / (1.0 + 0.25 * d as f64);
    let mut onehot = DMatrix::zeros(n, k);
    for (i, &c) in y.iter().enumerate() {
        onehot[(i, c)] = 1.0;
    }
    for _ in 0..LOGISTIC_ITERS {
        let mut p = a * &w;
        for mut row in p.row_iter_mut() {
            let m = row.max();
            row.iter_mut().for_each(|v| *v = (*v - m).exp());
            let s = row.sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let grad = a.transpose() * (p - &onehot) / n as f64 + &w * LOGISTIC_L2;
        w -= grad * lr;
    }
    w
}

/// Five-fold cross-validated linear probe.
pub fn probe<T: Scalar>(
    embeddings: &Matrix<T>,
    targets: Targets<'_>,
    target: ProbeTarget,
    representation: Representation,
    seed: u64,
) -> Result<ProbeReport> {
    let n = embeddings.rows();
    if n < PROBE_FOLDS {
        return Err(Error::InvalidArgument(format!("probe needs at least {PROBE_FOLDS} rows, got {n}")));
    }
    let x = DMatrix::from_fn(n, embeddings.cols(), |i, j| embeddings.get(i, j).as_f64());
    let folds = folds(n, seed);
    let score = match targets {
        Targets::Class(labels) => {
            if labels.len() != n {
                return Err(Error::dim("probe labels", n, labels.len()));
            }
            let mut classes: Vec<u32> = labels.to_vec();
            classes.sort_unstable();
            classes.dedup();
            if classes.len() < 2 {
                return Err(Error::InvalidArgument("class probe needs at least two classes".into()));
            }
            let y: Vec<usize> = labels.iter().map(|l| classes.binary_search(l).unwrap()).collect();
            let mut correct = 0;
            for test in &folds {
                let fit: Vec<usize> = (0..n).filter(|i| !test.contains(i)).collect();
                let a = design(&x, &fit, &fit);
                let yf: Vec<usize> = fit.iter().map(|&i| y[i]).collect();
                let w = logistic(&a, &yf, classes.len());
                let scores = design(&x, &fit, test) * w;
                for (r, &i) in test.iter().enumerate() {
                    let pred = scores.row(r).transpose().argmax().0;
                    correct += (pred == y[i]) as usize;
                }
            }
            correct as f64 / n as f64
        }
        Targets::Continuous(t) => {
            if t.rows() != n {
                return Err(Error::dim("probe targets", n, t.rows()));
            }
            let tm = DMatrix::from_fn(n, t.cols(), |i, j| t.get(i, j) as f64);
            let mut pred = DMatrix::zeros(n, t.cols());
            for test in &folds {
                let fit: Vec<usize> = (0..n).filter(|i| !test.contains(i)).collect();
                let b = DMatrix::from_fn(fit.len(), t.cols(), |r, j| tm[(fit[r], j)]);
                let w = ridge(&design(&x, &fit, &fit), &b)?;
                let p = design(&x, &fit, test) * w;
                for (r, &i) in test.iter().enumerate() {
                    pred.row_mut(i).copy_from(&p.row(r));
                }
            }
            let mut r2 = 0.0;
            for j in 0..t.cols() {
                let col: DVector<f64> = tm.column(j).into_owned();
                let mean = col.mean();
                let ss_tot: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
                let ss_res: f64 = col.iter().zip(pred.column(j).iter()).map(|(a, b)| (a - b).powi(2)).sum();
                r2 += 1.0 - ss_res / ss_tot.max(1e-300);
            }
            r2 / t.cols() as f64
        }
    };
    Ok(ProbeReport {
        target,
        representation,
        score,
        folds: PROBE_FOLDS,
    })
}
