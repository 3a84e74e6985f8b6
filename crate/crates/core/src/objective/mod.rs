//! Training objectives and the closed-form linear-Gaussian oracle.
//!
//! Every objective here is a *loss* (the negated bound). With
//! `R = w (rec_x + rec_y)`, `Rs = w (rec_x_shared + rec_y_shared)`,
//! `Kx = kl_zx + kl_zy`, `Ks = kl_zs_prior`, `Kr = kl_zs_rx + kl_zs_ry`:
//!
//! | objective        | total                                   |
//! |------------------|-----------------------------------------|
//! | ELBO             | `-(R - Kx - Ks)`                        |
//! | IIAE(λ)          | `-((1+λ)(R - Kx) - Ks - λ Kr)`          |
//! | II               | `-(Rs - Kr)`                            |
//! | II-MI            | `-(R - Kx - Kr)`                        |
//! | ELBO + λ II      | `ELBO + λ II`                           |
//! | ELBO + λ (II-MI) | `ELBO + λ (II-MI)`, equal to IIAE(λ)    |
//!
//! The data entropies `H(X)`, `H(Y)` that appear in the information bounds
//! are constants and dropped. Shared-only reconstructions `p(x|z_s)` reuse the
//! pair decoder with the exclusive slot of its input set to zero.

mod oracle;

pub use oracle::{
    gaussian_mi, verify_bound_directions, verify_mi_identity, BoundCheck, BoundReport, LinearConditional,
    LinearGaussianSystem, MiIdentityReport, Var, VariationalChoices,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffmath::{kl_elem, kl_elem_grad, kl_std_elem, kl_std_elem_grad, loglik_const, GaussianBatch, Matrix};
use crate::error::{Error, Result};
use crate::model::{IIAEModel, LatentNoise, NetId};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Elbo,
    Iiae,
    Ii,
    IiMi,
    ElboPlusIi,
    ElboPlusIiMi,
}

impl Objective {
    pub const ALL: [Objective; 6] = [
        Objective::Ii,
        Objective::IiMi,
        Objective::ElboPlusIi,
        Objective::ElboPlusIiMi,
        Objective::Iiae,
        Objective::Elbo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Elbo => "elbo",
            Objective::Iiae => "iiae",
            Objective::Ii => "ii",
            Objective::IiMi => "ii_mi",
            Objective::ElboPlusIi => "elbo_plus_ii",
            Objective::ElboPlusIiMi => "elbo_plus_ii_mi",
        }
    }

    fn uses_pair_reconstruction(self) -> bool {
        self != Objective::Ii
    }

    fn uses_shared_reconstruction(self) -> bool {
        matches!(self, Objective::Ii | Objective::ElboPlusIi)
    }

    fn coefficients(self, lambda: f64) -> Coefficients {
        let l = lambda;
        let (rec, rec_shared, kl_excl, kl_prior_s, kl_r) = match self {
            Objective::Elbo => (1.0, 0.0, 1.0, 1.0, 0.0),
            Objective::Iiae | Objective::ElboPlusIiMi => (1.0 + l, 0.0, 1.0 + l, 1.0, l),
            Objective::Ii => (0.0, 1.0, 0.0, 0.0, 1.0),
            Objective::IiMi => (1.0, 0.0, 1.0, 0.0, 1.0),
            Objective::ElboPlusIi => (1.0, l, 1.0, 1.0, l),
        };
        Coefficients {
            rec,
            rec_shared,
            kl_excl,
            kl_prior_s,
            kl_r,
        }
    }

    /// Recomposes the loss from its parts.
    pub fn total(self, b: &LossBreakdown) -> f64 {
        let w = b.recon_weight;
        let l = b.lambda;
        let rec = w * (b.rec_x + b.rec_y);
        let rec_shared = w * (b.rec_x_shared + b.rec_y_shared);
        let kx = b.kl_zx + b.kl_zy;
        let kr = b.kl_zs_rx + b.kl_zs_ry;
        let elbo = -(rec - kx - b.kl_zs_prior);
        let ii = -(rec_shared - kr);
        let ii_mi = -(rec - kx - kr);
        match self {
            Objective::Elbo => elbo,
            Objective::Iiae => -((1.0 + l) * (rec - kx) - b.kl_zs_prior - l * kr),
            Objective::Ii => ii,
            Objective::IiMi => ii_mi,
            Objective::ElboPlusIi => elbo + l * ii,
            Objective::ElboPlusIiMi => elbo + l * ii_mi,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', '+'], "_");
        Ok(match norm.as_str() {
            "elbo" => Objective::Elbo,
            "iiae" => Objective::Iiae,
            "ii" => Objective::Ii,
            "ii_mi" => Objective::IiMi,
            "elbo_plus_ii" | "elbo_ii" => Objective::ElboPlusIi,
            "elbo_plus_ii_mi" | "elbo_ii_mi" => Objective::ElboPlusIiMi,
            _ => return Err(Error::InvalidArgument(format!("unknown objective variant `{s}`"))),
        })
    }
}

/// The four ablation objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Ii,
    IiMi,
    ElboPlusIi,
    ElboPlusIiMi,
}

impl From<AblationVariant> for Objective {
    fn from(v: AblationVariant) -> Self {
        match v {
            AblationVariant::Ii => Objective::Ii,
            AblationVariant::IiMi => Objective::IiMi,
            AblationVariant::ElboPlusIi => Objective::ElboPlusIi,
            AblationVariant::ElboPlusIiMi => Objective::ElboPlusIiMi,
        }
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<Objective>()? {
            Objective::Ii => Ok(AblationVariant::Ii),
            Objective::IiMi => Ok(AblationVariant::IiMi),
            Objective::ElboPlusIi => Ok(AblationVariant::ElboPlusIi),
            Objective::ElboPlusIiMi => Ok(AblationVariant::ElboPlusIiMi),
            other => Err(Error::InvalidArgument(format!("`{other}` is not an ablation variant"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Coefficients {
    rec: f64,
    rec_shared: f64,
    kl_excl: f64,
    kl_prior_s: f64,
    kl_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub lambda: f64,
    pub recon_weight: f64,
    /// Variance of the Gaussian decoders' likelihood.
    pub fixed_var: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            recon_weight: 10.0,
            fixed_var: 1.0,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.recon_weight >= 0.0) || !self.recon_weight.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "recon_weight must be >= 0, got {}",
                self.recon_weight
            )));
        }
        if !(self.fixed_var > 0.0) || !self.fixed_var.is_finite() {
            return Err(Error::InvalidArgument(format!("fixed_var must be > 0, got {}", self.fixed_var)));
        }
        Ok(())
    }
}

/// Batch means of every term, and the weighted total to minimize.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rec_x: f64,
    pub rec_y: f64,
    /// `log p(x | z_s)` terms; populated only by objectives that use them.
    pub rec_x_shared: f64,
    pub rec_y_shared: f64,
    pub kl_zx: f64,
    pub kl_zy: f64,
    pub kl_zs_prior: f64,
    pub kl_zs_rx: f64,
    pub kl_zs_ry: f64,
    pub total: f64,
    pub lambda: f64,
    pub recon_weight: f64,
}

impl LossBreakdown {
    fn check_finite(&self) -> Result<()> {
        let fields = [
            ("rec_x", self.rec_x),
            ("rec_y", self.rec_y),
            ("rec_x_shared", self.rec_x_shared),
            ("rec_y_shared", self.rec_y_shared),
            ("kl_zx", self.kl_zx),
            ("kl_zy", self.kl_zy),
            ("kl_zs_prior", self.kl_zs_prior),
            ("kl_zs_rx", self.kl_zs_rx),
            ("kl_zs_ry", self.kl_zs_ry),
            ("total", self.total),
        ];
        for (term, v) in fields {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss { step: 0, term });
            }
        }
        Ok(())
    }

    /// Element-wise accumulation used for averaging over batches.
    pub fn add_scaled(&mut self, other: &LossBreakdown, s: f64) {
        self.rec_x += s * other.rec_x;
        self.rec_y += s * other.rec_y;
        self.rec_x_shared += s * other.rec_x_shared;
        self.rec_y_shared += s * other.rec_y_shared;
        self.kl_zx += s * other.kl_zx;
        self.kl_zy += s * other.kl_zy;
        self.kl_zs_prior += s * other.kl_zs_prior;
        self.kl_zs_rx += s * other.kl_zs_rx;
        self.kl_zs_ry += s * other.kl_zs_ry;
        self.total += s * other.total;
    }
}

/// Paired mini-batch; row `i` of `x` is paired with row `i` of `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub x: Matrix<T>,
    pub y: Matrix<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(x: Matrix<T>, y: Matrix<T>) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::dim("batch rows", x.rows(), y.rows()));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

pub fn elbo_terms<T: Scalar>(
    model: &IIAEModel<T>,
    batch: &Batch<T>,
    noise: &LatentNoise<T>,
    params: &LossParams,
) -> Result<LossBreakdown> {
    let p = LossParams { lambda: 0.0, ..*params };
    evaluate(model, batch, noise, Objective::Elbo, &p)
}

pub fn iiae_loss<T: Scalar>(
    model: &IIAEModel<T>,
    batch: &Batch<T>,
    noise: &LatentNoise<T>,
    params: &LossParams,
) -> Result<LossBreakdown> {
    evaluate(model, batch, noise, Objective::Iiae, params)
}

pub fn ablation_loss<T: Scalar>(
    model: &IIAEModel<T>,
    batch: &Batch<T>,
    noise: &LatentNoise<T>,
    variant: AblationVariant,
    params: &LossParams,
) -> Result<LossBreakdown> {
    evaluate(model, batch, noise, variant.into(), params)
}

/// Loss breakdown without gradients.
pub fn evaluate<T: Scalar>(
    model: &IIAEModel<T>,
    batch: &Batch<T>,
    noise: &LatentNoise<T>,
    objective: Objective,
    params: &LossParams,
) -> Result<LossBreakdown> {
    run(model, batch, noise, objective, params, None)
}

/// Loss breakdown and the gradient of `total` w.r.t. every model parameter.
pub fn loss_and_grad<T: Scalar>(
    model: &IIAEModel<T>,
    batch: &Batch<T>,
    noise: &LatentNoise<T>,
    objective: Objective,
    params: &LossParams,
) -> Result<(LossBreakdown, IIAEModel<T>)> {
    let mut grads = model.zeros_like();
    let b = run(model, batch, noise, objective, params, Some(&mut grads))?;
    Ok((b, grads))
}

struct Head<T> {
    trace: crate::diffmath::Trace<T>,
    dist: GaussianBatch<T>,
}

fn head<T: Scalar>(model: &IIAEModel<T>, id: NetId, input: &Matrix<T>) -> Result<Head<T>> {
    let trace = model.net(id).forward_traced(input)?;
    let dist = GaussianBatch::from_head(trace.output());
    Ok(Head { trace, dist })
}

/// Sum over rows and columns of `(t - m)^2`, plus the gradient of the batch
/// mean log-likelihood scaled by `coef`, w.r.t. the predicted means.
fn reconstruction<T: Scalar>(target: &Matrix<T>, pred: &Matrix<T>, fixed_var: T, inv_n: T) -> (T, Matrix<T>) {
    let c = loglik_const(fixed_var) * T::of(target.cols() as f64);
    let inv2v = T::one() / (T::of(2.0) * fixed_var);
    let mut sq = T::zero();
    let mut g = Matrix::zeros(pred.rows(), pred.cols());
    for ((gv, &t), &m) in g.as_mut_slice().iter_mut().zip(target.as_slice()).zip(pred.as_slice()) {
        let d = t - m;
        sq += d * d;
        // d(mean loglik)/dm
        *gv = d / fixed_var * inv_n;
    }
    let mean_ll = c - sq * inv2v * inv_n;
    (mean_ll, g)
}

fn run<T: Scalar>(
    model: &IIAEModel<T>,
    batch: &Batch<T>,
    noise: &LatentNoise<T>,
    objective: Objective,
    params: &LossParams,
    mut grads: Option<&mut IIAEModel<T>>,
) -> Result<LossBreakdown> {
    params.validate()?;
    let n = batch.len();
    if n == 0 {
        return Err(Error::Empty("loss batch".into()));
    }
    let dims = *model.dims();
    if batch.x.cols() != dims.x_dim {
        return Err(Error::dim("batch x", dims.x_dim, batch.x.cols()));
    }
    if batch.y.cols() != dims.y_dim {
        return Err(Error::dim("batch y", dims.y_dim, batch.y.cols()));
    }
    noise.check(n, &dims)?;
    let inv_n = T::of(1.0 / n as f64);
    let fixed_var = T::of(params.fixed_var);
    let coef = objective.coefficients(params.lambda);
    let pair_rec = objective.uses_pair_reconstruction();
    let shared_rec = objective.uses_shared_reconstruction();

    // encoders
    let fe_x = model.net(NetId::FeX).forward_traced(&batch.x)?;
    let fe_y = model.net(NetId::FeY).forward_traced(&batch.y)?;
    let hxy = Matrix::hconcat(&[fe_x.output(), fe_y.output()])?;
    let qs = head(model, NetId::HeadQs, &hxy)?;
    let rx = head(model, NetId::HeadRx, fe_x.output())?;
    let ry = head(model, NetId::HeadRy, fe_y.output())?;
    let z_s = qs.dist.sample(&noise.s)?;
    let (qx, qy) = if pair_rec {
        (
            Some(head(model, NetId::HeadQx, &batch.x)?),
            Some(head(model, NetId::HeadQy, &batch.y)?),
        )
    } else {
        (None, None)
    };

    let mut b = LossBreakdown {
        lambda: params.lambda,
        recon_weight: params.recon_weight,
        ..Default::default()
    };

    // KL terms
    let mean_sum = |m: &Matrix<T>, l: &Matrix<T>, f: &dyn Fn(T, T) -> T| -> f64 {
        let s: T = m.as_slice().iter().zip(l.as_slice()).map(|(&a, &c)| f(a, c)).sum();
        (s * inv_n).as_f64()
    };
    let kl_r = |r: &GaussianBatch<T>| -> f64 {
        let q = &qs.dist;
        let mut s = T::zero();
        for i in 0..q.mean.as_slice().len() {
            s += kl_elem(
                q.mean.as_slice()[i],
                q.log_var.as_slice()[i],
                r.mean.as_slice()[i],
                r.log_var.as_slice()[i],
            );
        }
        (s * inv_n).as_f64()
    };
    b.kl_zs_prior = mean_sum(&qs.dist.mean, &qs.dist.log_var, &kl_std_elem);
    b.kl_zs_rx = kl_r(&rx.dist);
    b.kl_zs_ry = kl_r(&ry.dist);
    if let (Some(qx), Some(qy)) = (&qx, &qy) {
        b.kl_zx = mean_sum(&qx.dist.mean, &qx.dist.log_var, &kl_std_elem);
        b.kl_zy = mean_sum(&qy.dist.mean, &qy.dist.log_var, &kl_std_elem);
    }

    // decoders
    let mut pair = None;
    if let (Some(qx), Some(qy)) = (&qx, &qy) {
        let z_x = qx.dist.sample(&noise.x)?;
        let z_y = qy.dist.sample(&noise.y)?;
        let dx = model.net(NetId::DecX).forward_traced(&Matrix::hconcat(&[&z_x, &z_s])?)?;
        let dy = model.net(NetId::DecY).forward_traced(&Matrix::hconcat(&[&z_y, &z_s])?)?;
        let (llx, gx) = reconstruction(&batch.x, dx.output(), fixed_var, inv_n);
        let (lly, gy) = reconstruction(&batch.y, dy.output(), fixed_var, inv_n);
        b.rec_x = llx.as_f64();
        b.rec_y = lly.as_f64();
        pair = Some((dx, dy, gx, gy));
    }
    let mut shared = None;
    if shared_rec {
        let zero_x = Matrix::zeros(n, dims.zx_dim);
        let zero_y = Matrix::zeros(n, dims.zy_dim);
        let dx = model.net(NetId::DecX).forward_traced(&Matrix::hconcat(&[&zero_x, &z_s])?)?;
        let dy = model.net(NetId::DecY).forward_traced(&Matrix::hconcat(&[&zero_y, &z_s])?)?;
        let (llx, gx) = reconstruction(&batch.x, dx.output(), fixed_var, inv_n);
        let (lly, gy) = reconstruction(&batch.y, dy.output(), fixed_var, inv_n);
        b.rec_x_shared = llx.as_f64();
        b.rec_y_shared = lly.as_f64();
        shared = Some((dx, dy, gx, gy));
    }
    b.total = objective.total(&b);
    b.check_finite()?;

    let Some(grads) = grads.as_deref_mut() else {
        return Ok(b);
    };

    // reverse pass; every gradient below is d(total)/d(.)
    let w = T::of(params.recon_weight);
    let mut g_zs = Matrix::<T>::zeros(n, dims.zs_dim);
    let mut g_zx = Matrix::<T>::zeros(n, dims.zx_dim);
    let mut g_zy = Matrix::<T>::zeros(n, dims.zy_dim);

    let mut through_decoder = |id: NetId,
                               trace: &crate::diffmath::Trace<T>,
                               mut g_ll: Matrix<T>,
                               c: f64,
                               excl_dim: usize,
                               g_excl: Option<&mut Matrix<T>>,
                               g_zs: &mut Matrix<T>|
     -> Result<()> {
        if c == 0.0 {
            return Ok(());
        }
        g_ll.scale(-T::of(c) * w);
        let g_in = model.net(id).backward(trace, g_ll, grads.net_mut(id))?;
        let (ge, gs) = g_in.split_cols(excl_dim);
        g_zs.add_assign(&gs);
        if let Some(g) = g_excl {
            g.add_assign(&ge);
        }
        Ok(())
    };
    if let Some((dx, dy, gx, gy)) = pair {
        through_decoder(NetId::DecX, &dx, gx, coef.rec, dims.zx_dim, Some(&mut g_zx), &mut g_zs)?;
        through_decoder(NetId::DecY, &dy, gy, coef.rec, dims.zy_dim, Some(&mut g_zy), &mut g_zs)?;
    }
    if let Some((dx, dy, gx, gy)) = shared {
        through_decoder(NetId::DecX, &dx, gx, coef.rec_shared, dims.zx_dim, None, &mut g_zs)?;
        through_decoder(NetId::DecY, &dy, gy, coef.rec_shared, dims.zy_dim, None, &mut g_zs)?;
    }

    // shared posterior: reparameterization, prior KL, r KLs
    let mut gqs_m = g_zs.clone();
    let mut gqs_l = reparam_log_var_grad(&qs.dist, &g_zs, &noise.s);
    add_kl_std_grad(&qs.dist, T::of(coef.kl_prior_s) * inv_n, &mut gqs_m, &mut gqs_l);

    let mut g_hx = Matrix::<T>::zeros(n, fe_x.output().cols());
    let mut g_hy = Matrix::<T>::zeros(n, fe_y.output().cols());
    if coef.kl_r != 0.0 {
        let k = T::of(coef.kl_r) * inv_n;
        for (r, id, g_h) in [(&rx, NetId::HeadRx, &mut g_hx), (&ry, NetId::HeadRy, &mut g_hy)] {
            let mut grm = Matrix::zeros(n, dims.zs_dim);
            let mut grl = Matrix::zeros(n, dims.zs_dim);
            let q = &qs.dist;
            for i in 0..n * dims.zs_dim {
                let (dmp, dlp, dmq, dlq) = kl_elem_grad(
                    q.mean.as_slice()[i],
                    q.log_var.as_slice()[i],
                    r.dist.mean.as_slice()[i],
                    r.dist.log_var.as_slice()[i],
                );
                gqs_m.as_mut_slice()[i] += k * dmp;
                gqs_l.as_mut_slice()[i] += k * dlp;
                grm.as_mut_slice()[i] = k * dmq;
                grl.as_mut_slice()[i] = k * dlq;
            }
            let g_out = r.dist.head_grad(&grm, &grl);
            let gh = model.net(id).backward(&r.trace, g_out, grads.net_mut(id))?;
            g_h.add_assign(&gh);
        }
    }
    let g_hxy = model
        .net(NetId::HeadQs)
        .backward(&qs.trace, qs.dist.head_grad(&gqs_m, &gqs_l), grads.net_mut(NetId::HeadQs))?;
    let (ghx, ghy) = g_hxy.split_cols(fe_x.output().cols());
    g_hx.add_assign(&ghx);
    g_hy.add_assign(&ghy);
    model.net(NetId::FeX).backward(&fe_x, g_hx, grads.net_mut(NetId::FeX))?;
    model.net(NetId::FeY).backward(&fe_y, g_hy, grads.net_mut(NetId::FeY))?;

    // exclusive posteriors
    if let (Some(qx), Some(qy)) = (&qx, &qy) {
        for (h, g_z, eps, id) in [
            (qx, &g_zx, &noise.x, NetId::HeadQx),
            (qy, &g_zy, &noise.y, NetId::HeadQy),
        ] {
            let mut gm = g_z.clone();
            let mut gl = reparam_log_var_grad(&h.dist, g_z, eps);
            add_kl_std_grad(&h.dist, T::of(coef.kl_excl) * inv_n, &mut gm, &mut gl);
            model
                .net(id)
                .backward(&h.trace, h.dist.head_grad(&gm, &gl), grads.net_mut(id))?;
        }
    }
    Ok(b)
}

/// Gradient w.r.t. log-variance of `z = m + exp(l/2) eps`, given `dL/dz`.
fn reparam_log_var_grad<T: Scalar>(dist: &GaussianBatch<T>, g_z: &Matrix<T>, eps: &Matrix<T>) -> Matrix<T> {
    let half = T::of(0.5);
    let mut g = g_z.clone();
    for ((gv, &l), &e) in g
        .as_mut_slice()
        .iter_mut()
        .zip(dist.log_var.as_slice())
        .zip(eps.as_slice())
    {
        *gv *= half * (half * l).exp() * e;
    }
    g
}

fn add_kl_std_grad<T: Scalar>(dist: &GaussianBatch<T>, scale: T, gm: &mut Matrix<T>, gl: &mut Matrix<T>) {
    if scale == T::zero() {
        return;
    }
    for i in 0..gm.as_slice().len() {
        let (dm, dl) = kl_std_elem_grad(dist.mean.as_slice()[i], dist.log_var.as_slice()[i]);
        gm.as_mut_slice()[i] += scale * dm;
        gl.as_mut_slice()[i] += scale * dl;
    }
}
