//! Self-check suites: analytic gradients, closed-form KLs and the
//! information identities, each against an independent numeric reference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::diffmath::{grad_check_steps, kl_diag_gaussian, kl_to_standard_normal, reparameterize, GaussianParams, Matrix};
use crate::error::Result;
use crate::model::{ArchConfig, IIAEModel, LatentNoise};
use crate::objective::{
    loss_and_grad, verify_bound_directions, verify_mi_identity, Batch, LinearGaussianSystem, LossParams, Objective,
    VariationalChoices,
};

pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Finite-difference steps, tried in order for parameters that fail the first.
pub const GRAD_STEPS: [f64; 2] = [1e-4, 1e-5];
pub const IDENTITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub passed: bool,
}

/// The objective settings covered by the gradient suite.
pub fn gradient_cases() -> Vec<(Objective, f64)> {
    vec![
        (Objective::Elbo, 0.0),
        (Objective::Iiae, 0.5),
        (Objective::Iiae, 2.0),
        (Objective::Iiae, 50.0),
        (Objective::Ii, 2.0),
        (Objective::IiMi, 2.0),
        (Objective::ElboPlusIi, 2.0),
        (Objective::ElboPlusIiMi, 2.0),
    ]
}

fn small_arch() -> ArchConfig {
    ArchConfig {
        zx_dim: 2,
        zs_dim: 3,
        zy_dim: 2,
        fe_hidden: vec![6],
        excl_hidden: vec![5],
        single_hidden: vec![5],
        joint_hidden: vec![6],
        dec_hidden: vec![5],
    }
}

/// A seeded `(model, batch, frozen noise)` triple in double precision.
pub fn gradient_fixture(seed: u64) -> Result<(IIAEModel<f64>, Batch<f64>, LatentNoise<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = IIAEModel::new(5, 4, &small_arch(), &mut rng)?;
    let rows = 8;
    let x = Matrix::from_fn(rows, 5, |_, _| rng.random_range(-1.0..1.0));
    let y = Matrix::from_fn(rows, 4, |_, _| rng.random_range(-1.0..1.0));
    let noise = LatentNoise::sample(&mut rng, rows, model.dims());
    Ok((model, Batch::new(x, y)?, noise))
}

pub fn gradient_suite(seeds: &[u64]) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for &seed in seeds {
        let (model, batch, noise) = gradient_fixture(seed)?;
        let theta = model.to_flat();
        for (obj, lambda) in gradient_cases() {
            let params = LossParams {
                lambda,
                ..LossParams::default()
            };
            let report = grad_check_steps(
                |t| {
                    let mut m = model.clone();
                    m.set_flat(t)?;
                    let (l, g) = loss_and_grad(&m, &batch, &noise, obj, &params)?;
                    Ok((l.total, g.to_flat()))
                },
                &theta,
                &GRAD_STEPS,
                GRAD_TOLERANCE,
            )?;
            out.push(Check {
                name: format!("grad {obj} lambda={lambda} seed={seed}"),
                value: report.max_relative_error,
                passed: report.max_relative_error < GRAD_TOLERANCE,
            });
        }
    }
    Ok(out)
}

fn random_gaussian<R: Rng>(rng: &mut R, dim: usize) -> GaussianParams<f64> {
    let mean = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let log_var = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    GaussianParams::new(mean, log_var).expect("finite")
}

/// Mean and standard error of `log p(z) - log q(z)` for `z ~ p`.
fn mc_kl<R: Rng>(rng: &mut R, p: &GaussianParams<f64>, q: &GaussianParams<f64>, samples: usize) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut eps = vec![0.0; p.dim()];
    for _ in 0..samples {
        eps.iter_mut().for_each(|e| *e = rng.sample(StandardNormal));
        let z = reparameterize(p, &eps).expect("dims match");
        let v = p.log_density(&z) - q.log_density(&z);
        sum += v;
        sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sq / n - mean * mean) * n / (n - 1.0);
    (mean, (var.max(0.0) / n).sqrt())
}

/// Closed-form KLs against Monte-Carlo estimates; `value` is the deviation
/// in standard errors, passing below 4.
pub fn kl_suite(pairs: usize, samples: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..pairs {
        let dim = rng.random_range(1..=8);
        let p = random_gaussian(&mut rng, dim);
        let q = random_gaussian(&mut rng, dim);
        let closed = kl_diag_gaussian(&p, &q).expect("dims match");
        let (mc, se) = mc_kl(&mut rng, &p, &q, samples);
        let z = (closed - mc).abs() / se.max(1e-300);
        out.push(Check {
            name: format!("kl_diag #{i} dim={dim}"),
            value: z,
            passed: z < 4.0,
        });
        let closed = kl_to_standard_normal(&p);
        let (mc, se) = mc_kl(&mut rng, &p, &GaussianParams::standard(dim), samples);
        let z = (closed - mc).abs() / se.max(1e-300);
        out.push(Check {
            name: format!("kl_std #{i} dim={dim}"),
            value: z,
            passed: z < 4.0,
        });
    }
    out
}

pub fn random_system<R: Rng>(rng: &mut R) -> Result<LinearGaussianSystem> {
    let xd = rng.random_range(1..=3);
    let yd = rng.random_range(1..=3);
    let k = rng.random_range(1..=3);
    LinearGaussianSystem::random(rng, xd, yd, k, k + 1, k)
}

pub fn mi_identity_suite(systems: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..systems {
        let r = verify_mi_identity(&random_system(&mut rng)?)?;
        out.push(Check {
            name: format!("decomposition #{i}"),
            value: r.decomposition_residual,
            passed: r.decomposition_residual < IDENTITY_TOLERANCE,
        });
        out.push(Check {
            name: format!("interaction symmetry #{i}"),
            value: r.symmetry_residual,
            passed: r.symmetry_residual < IDENTITY_TOLERANCE,
        });
    }
    Ok(out)
}

/// Each bound must hold (gap >= -4 SE) with perturbed variational choices,
/// and be tight (|gap| <= 4 SE) with the exact ones. `value` is the gap in
/// standard errors.
pub fn bounds_suite(systems: usize, samples: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..systems {
        let sys = random_system(&mut rng)?;
        let exact = verify_bound_directions(&sys, &VariationalChoices::exact(&sys)?, samples, &mut rng)?;
        for c in exact.checks() {
            out.push(Check {
                name: format!("{} tight #{i}", c.name),
                value: c.gap / c.std_error,
                passed: c.tight(4.0),
            });
        }
        let off = VariationalChoices::perturbed(&sys, &mut rng, 0.5)?;
        let loose = verify_bound_directions(&sys, &off, samples, &mut rng)?;
        for c in loose.checks() {
            out.push(Check {
                name: format!("{} direction #{i}", c.name),
                value: c.gap / c.std_error,
                passed: c.holds(4.0),
            });
        }
    }
    Ok(out)
}
