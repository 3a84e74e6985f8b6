//! Differentiable numeric substrate: dense nets with a hand-written reverse
//! pass, diagonal-Gaussian operations, and a finite-difference checker.

mod dense;
mod gaussian;
mod gradcheck;
mod matrix;

pub use dense::{dense_apply, Activation, Dense, DenseNet, Trace, LEAKY_SLOPE};
pub use gaussian::{
    gaussian_log_likelihood, kl_diag_gaussian, kl_to_standard_normal, loglik_const, reparameterize,
    GaussianBatch, GaussianParams, LOG_VAR_MAX, LOG_VAR_MIN,
};
pub(crate) use gaussian::{kl_elem, kl_elem_grad, kl_std_elem, kl_std_elem_grad};
pub use gradcheck::{grad_check, grad_check_steps, GradCheckReport};
pub use matrix::{Matrix, Trans};
