use std::f64::consts::PI;

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Range that head outputs are clamped into before being read as log-variances.
pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// Diagonal Gaussian stored as mean and log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams<T> {
    mean: Vec<T>,
    log_var: Vec<T>,
}

impl<T: Scalar> GaussianParams<T> {
    pub fn new(mean: Vec<T>, log_var: Vec<T>) -> Result<Self> {
        if mean.len() != log_var.len() {
            return Err(Error::dim("gaussian log_var", mean.len(), log_var.len()));
        }
        if !mean.iter().chain(&log_var).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("gaussian parameters".into()));
        }
        Ok(Self { mean, log_var })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![T::zero(); dim],
            log_var: vec![T::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn log_var(&self) -> &[T] {
        &self.log_var
    }

    pub fn variance(&self) -> Vec<T> {
        self.log_var.iter().map(|l| l.exp()).collect()
    }

    /// Log-density at `z`.
    pub fn log_density(&self, z: &[T]) -> T {
        let half = T::of(0.5);
        let ln2pi = T::of((2.0 * PI).ln());
        self.mean
            .iter()
            .zip(&self.log_var)
            .zip(z)
            .map(|((&m, &l), &v)| -half * (ln2pi + l + (v - m) * (v - m) / l.exp()))
            .sum()
    }
}

/// `mean + exp(log_var / 2) * noise`.
pub fn reparameterize<T: Scalar>(params: &GaussianParams<T>, noise: &[T]) -> Result<Vec<T>> {
    if noise.len() != params.dim() {
        return Err(Error::dim("reparameterize noise", params.dim(), noise.len()));
    }
    Ok(params
        .mean
        .iter()
        .zip(&params.log_var)
        .zip(noise)
        .map(|((&m, &l), &e)| reparam_elem(m, l, e))
        .collect())
}

/// `KL[p || N(0, I)]` in nats.
pub fn kl_to_standard_normal<T: Scalar>(p: &GaussianParams<T>) -> T {
    p.mean
        .iter()
        .zip(&p.log_var)
        .map(|(&m, &l)| kl_std_elem(m, l))
        .sum()
}

/// `KL[p || q]` between diagonal Gaussians, in nats.
pub fn kl_diag_gaussian<T: Scalar>(p: &GaussianParams<T>, q: &GaussianParams<T>) -> Result<T> {
    if p.dim() != q.dim() {
        return Err(Error::dim("kl_diag_gaussian", p.dim(), q.dim()));
    }
    Ok((0..p.dim())
        .map(|i| kl_elem(p.mean[i], p.log_var[i], q.mean[i], q.log_var[i]))
        .sum())
}

/// Log-likelihood of `target` under `N(predicted_mean, fixed_var * I)`.
pub fn gaussian_log_likelihood<T: Scalar>(target: &[T], predicted_mean: &[T], fixed_var: T) -> Result<T> {
    if !(fixed_var > T::zero()) {
        return Err(Error::InvalidArgument(format!("fixed_var must be positive, got {fixed_var}")));
    }
    if target.len() != predicted_mean.len() {
        return Err(Error::dim("log likelihood", target.len(), predicted_mean.len()));
    }
    let c = loglik_const::<T>(fixed_var);
    let inv2v = T::one() / (T::of(2.0) * fixed_var);
    Ok(target
        .iter()
        .zip(predicted_mean)
        .map(|(&t, &m)| c - (t - m) * (t - m) * inv2v)
        .sum())
}

/// Per-dimension constant `-0.5 ln(2 pi var)` of the Gaussian log-likelihood.
pub fn loglik_const<T: Scalar>(fixed_var: T) -> T {
    -T::of(0.5) * (T::of(2.0 * PI) * fixed_var).ln()
}

#[inline]
pub(crate) fn reparam_elem<T: Scalar>(m: T, l: T, e: T) -> T {
    m + (T::of(0.5) * l).exp() * e
}

#[inline]
pub(crate) fn kl_std_elem<T: Scalar>(m: T, l: T) -> T {
    T::of(0.5) * (m * m + l.exp() - T::one() - l)
}

/// `(d/dm, d/dl)` of [`kl_std_elem`].
#[inline]
pub(crate) fn kl_std_elem_grad<T: Scalar>(m: T, l: T) -> (T, T) {
    (m, T::of(0.5) * (l.exp() - T::one()))
}

#[inline]
pub(crate) fn kl_elem<T: Scalar>(mp: T, lp: T, mq: T, lq: T) -> T {
    let d = mp - mq;
    T::of(0.5) * ((lq - lp) + (lp.exp() + d * d) / lq.exp() - T::one())
}

/// `(d/dmp, d/dlp, d/dmq, d/dlq)` of [`kl_elem`].
#[inline]
pub(crate) fn kl_elem_grad<T: Scalar>(mp: T, lp: T, mq: T, lq: T) -> (T, T, T, T) {
    let half = T::of(0.5);
    let inv_vq = (-lq).exp();
    let d = mp - mq;
    (
        d * inv_vq,
        half * ((lp - lq).exp() - T::one()),
        -d * inv_vq,
        half * (T::one() - (lp.exp() + d * d) * inv_vq),
    )
}

/// A batch of diagonal Gaussians, one per row, as produced by a distribution head.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBatch<T> {
    pub mean: Matrix<T>,
    pub log_var: Matrix<T>,
    /// 1 where the raw log-variance was inside the clamp range, else 0.
    pub(crate) pass: Vec<bool>,
}

impl<T: Scalar> GaussianBatch<T> {
    /// Splits a `n x 2d` head output into mean and clamped log-variance.
    pub fn from_head(raw: &Matrix<T>) -> Self {
        let d = raw.cols() / 2;
        let (mean, mut log_var) = raw.split_cols(d);
        let (lo, hi) = (T::of(LOG_VAR_MIN), T::of(LOG_VAR_MAX));
        let mut pass = Vec::with_capacity(log_var.as_slice().len());
        for v in log_var.as_mut_slice() {
            pass.push(*v > lo && *v < hi);
            *v = v.max(lo).min(hi);
        }
        Self { mean, log_var, pass }
    }

    pub fn rows(&self) -> usize {
        self.mean.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.cols()
    }

    pub fn get(&self, r: usize) -> GaussianParams<T> {
        GaussianParams {
            mean: self.mean.row(r).to_vec(),
            log_var: self.log_var.row(r).to_vec(),
        }
    }

    /// Row-wise reparameterized samples.
    pub fn sample(&self, noise: &Matrix<T>) -> Result<Matrix<T>> {
        if noise.rows() != self.rows() || noise.cols() != self.dim() {
            return Err(Error::dim("batch noise", self.rows() * self.dim(), noise.rows() * noise.cols()));
        }
        let mut z = self.mean.clone();
        for ((zv, &l), &e) in z
            .as_mut_slice()
            .iter_mut()
            .zip(self.log_var.as_slice())
            .zip(noise.as_slice())
        {
            *zv = reparam_elem(*zv, l, e);
        }
        Ok(z)
    }

    /// Joins mean and log-variance gradients into a head-output gradient,
    /// zeroing the log-variance part wherever the clamp was active.
    pub(crate) fn head_grad(&self, g_mean: &Matrix<T>, g_log_var: &Matrix<T>) -> Matrix<T> {
        let mut glv = g_log_var.clone();
        for (g, &p) in glv.as_mut_slice().iter_mut().zip(&self.pass) {
            if !p {
                *g = T::zero();
            }
        }
        Matrix::hconcat(&[g_mean, &glv]).expect("gradient halves share row count")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(m: &[f64], l: &[f64]) -> GaussianParams<f64> {
        GaussianParams::new(m.to_vec(), l.to_vec()).unwrap()
    }

    #[test]
    fn reparameterize_cases() {
        let p = g(&[0.7, -1.0], &[0.3, 2.0]);
        assert_eq!(reparameterize(&p, &[0.0, 0.0]).unwrap(), vec![0.7, -1.0]);
        assert_eq!(reparameterize(&g(&[0.0], &[0.0]), &[1.5]).unwrap(), vec![1.5]);
        let z = reparameterize(&g(&[2.0], &[4f64.ln()]), &[-1.0]).unwrap();
        assert!(z[0].abs() < 1e-15);
        assert!(reparameterize(&p, &[1.0]).is_err());
    }

    #[test]
    fn kl_standard_normal_closed_forms() {
        assert_eq!(kl_to_standard_normal(&g(&[0.0, 0.0], &[0.0, 0.0])), 0.0);
        assert!((kl_to_standard_normal(&g(&[1.0], &[0.0])) - 0.5).abs() < 1e-15);
        let v = kl_to_standard_normal(&g(&[0.0], &[4f64.ln()]));
        assert!((v - 0.5 * (4.0 - 1.0 - 4f64.ln())).abs() < 1e-15);
        assert!((v - 0.80685).abs() < 1e-5);
    }

    #[test]
    fn kl_diag_closed_forms_and_asymmetry() {
        let p = g(&[0.3, -0.2], &[0.1, -0.5]);
        assert_eq!(kl_diag_gaussian(&p, &p).unwrap(), 0.0);
        let a = kl_diag_gaussian(&g(&[0.0], &[0.0]), &g(&[1.0], &[0.0])).unwrap();
        assert!((a - 0.5).abs() < 1e-15);
        let e = std::f64::consts::E;
        let b = kl_diag_gaussian(&g(&[0.0], &[1.0]), &g(&[0.0], &[0.0])).unwrap();
        assert!((b - 0.5 * (-1.0 + e - 1.0)).abs() < 1e-15);
        assert!((b - 0.35914).abs() < 1e-5);
        let back = kl_diag_gaussian(&g(&[0.0], &[0.0]), &g(&[0.0], &[1.0])).unwrap();
        assert!((back - b).abs() > 0.05, "KL must not be symmetric here");
        assert!(kl_diag_gaussian(&p, &g(&[0.0], &[0.0])).is_err());
    }

    #[test]
    fn log_likelihood_closed_forms() {
        let c = -0.5 * (2.0 * PI).ln();
        assert!((gaussian_log_likelihood(&[0.4], &[0.4], 1.0).unwrap() - c).abs() < 1e-15);
        assert!((c + 0.91894).abs() < 1e-5);
        let v = gaussian_log_likelihood(&[1.0], &[0.0], 1.0).unwrap();
        assert!((v - (c - 0.5)).abs() < 1e-15);
        assert!(gaussian_log_likelihood(&[1.0], &[0.0], 0.0).is_err());
        assert!(gaussian_log_likelihood(&[1.0], &[0.0], -2.0).is_err());
    }

    #[test]
    fn elementwise_gradients_match_central_differences() {
        let h = 1e-6;
        let (mp, lp, mq, lq) = (0.4, -0.3, -0.7, 0.6);
        let (a, b, c, d) = kl_elem_grad(mp, lp, mq, lq);
        let fd = |f: &dyn Fn(f64) -> f64| (f(h) - f(-h)) / (2.0 * h);
        assert!((a - fd(&|e| kl_elem(mp + e, lp, mq, lq))).abs() < 1e-8);
        assert!((b - fd(&|e| kl_elem(mp, lp + e, mq, lq))).abs() < 1e-8);
        assert!((c - fd(&|e| kl_elem(mp, lp, mq + e, lq))).abs() < 1e-8);
        assert!((d - fd(&|e| kl_elem(mp, lp, mq, lq + e))).abs() < 1e-8);
        let (sm, sl) = kl_std_elem_grad(mp, lp);
        assert!((sm - fd(&|e| kl_std_elem(mp + e, lp))).abs() < 1e-8);
        assert!((sl - fd(&|e| kl_std_elem(mp, lp + e))).abs() < 1e-8);
    }

    #[test]
    fn head_split_clamps_log_variance() {
        let raw = Matrix::new(1, 4, vec![1.0, 2.0, 30.0, -0.5]).unwrap();
        let b = GaussianBatch::<f64>::from_head(&raw);
        assert_eq!(b.mean.as_slice(), &[1.0, 2.0]);
        assert_eq!(b.log_var.as_slice(), &[10.0, -0.5]);
        assert_eq!(b.pass, vec![false, true]);
    }

    #[test]
    fn non_finite_params_rejected() {
        assert!(GaussianParams::new(vec![f64::NAN], vec![0.0]).is_err());
        assert!(GaussianParams::new(vec![0.0], vec![0.0, 1.0]).is_err());
    }
}
