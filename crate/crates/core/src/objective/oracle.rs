//! Closed-form mutual information for a linear-Gaussian encoder family, and
//! Monte-Carlo checks that the variational bounds point the right way.
//!
//! Data `(x, y) ~ N(0, S)`, encoders `z_x = A x + n_x`, `z_s = B [x; y] + n_s`,
//! `z_y = C y + n_y` with independent diagonal Gaussian noise.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Var {
    X,
    Y,
    Zx,
    Zs,
    Zy,
}

#[derive(Debug, Clone)]
pub struct LinearGaussianSystem {
    pub cov_xy: DMatrix<f64>,
    pub x_dim: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub noise_x: DVector<f64>,
    pub noise_s: DVector<f64>,
    pub noise_y: DVector<f64>,
    joint: DMatrix<f64>,
}

fn chol(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::SingularCovariance(what.to_string()))
}

fn log_det(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    let l = chol(m, what)?;
    Ok(2.0 * l.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

fn gauss_matrix<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

impl LinearGaussianSystem {
    pub fn new(
        cov_xy: DMatrix<f64>,
        x_dim: usize,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        noise_x: DVector<f64>,
        noise_s: DVector<f64>,
        noise_y: DVector<f64>,
    ) -> Result<Self> {
        let d = cov_xy.nrows();
        if cov_xy.ncols() != d || x_dim == 0 || x_dim >= d {
            return Err(Error::InvalidArgument("cov_xy must be square with 0 < x_dim < dim".into()));
        }
        let y_dim = d - x_dim;
        let shape = |m: &DMatrix<f64>, cols: usize, noise: &DVector<f64>, name: &str| -> Result<()> {
            if m.ncols() != cols || m.nrows() != noise.len() {
                return Err(Error::InvalidArgument(format!("encoder {name} has a shape mismatch")));
            }
            if noise.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidArgument(format!("noise of {name} must be positive")));
            }
            Ok(())
        };
        shape(&a, x_dim, &noise_x, "A")?;
        shape(&b, d, &noise_s, "B")?;
        shape(&c, y_dim, &noise_y, "C")?;
        chol(&cov_xy, "data covariance")?;

        // stacked linear map from (x, y, n_x, n_s, n_y) to all variables
        let (kx, ks, ky) = (a.nrows(), b.nrows(), c.nrows());
        let total = d + kx + ks + ky;
        let mut m = DMatrix::zeros(total, d);
        m.view_mut((0, 0), (d, d)).fill_with_identity();
        m.view_mut((d, 0), (kx, x_dim)).copy_from(&a);
        m.view_mut((d + kx, 0), (ks, d)).copy_from(&b);
        m.view_mut((d + kx + ks, x_dim), (ky, y_dim)).copy_from(&c);
        let mut joint = &m * &cov_xy * m.transpose();
        for (i, v) in noise_x.iter().chain(noise_s.iter()).chain(noise_y.iter()).enumerate() {
            joint[(d + i, d + i)] += v;
        }
        Ok(Self {
            cov_xy,
            x_dim,
            a,
            b,
            c,
            noise_x,
            noise_s,
            noise_y,
            joint,
        })
    }

    /// Random well-conditioned system with a shared factor between x and y.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        x_dim: usize,
        y_dim: usize,
        zx_dim: usize,
        zs_dim: usize,
        zy_dim: usize,
    ) -> Result<Self> {
        let d = x_dim + y_dim;
        let f = gauss_matrix(rng, d, d, 1.0 / (d as f64).sqrt());
        let cov = &f * f.transpose() + DMatrix::identity(d, d) * 0.3;
        let pos = |rng: &mut R, k: usize| DVector::from_fn(k, |_, _| 0.2 + rng.random::<f64>());
        let a = gauss_matrix(rng, zx_dim, x_dim, 1.0);
        let b = gauss_matrix(rng, zs_dim, d, 1.0);
        let c = gauss_matrix(rng, zy_dim, y_dim, 1.0);
        let (nx, ns, ny) = (pos(rng, zx_dim), pos(rng, zs_dim), pos(rng, zy_dim));
        Self::new(cov, x_dim, a, b, c, nx, ns, ny)
    }

    pub fn y_dim(&self) -> usize {
        self.cov_xy.nrows() - self.x_dim
    }

    pub fn dim(&self, v: Var) -> usize {
        match v {
            Var::X => self.x_dim,
            Var::Y => self.y_dim(),
            Var::Zx => self.a.nrows(),
            Var::Zs => self.b.nrows(),
            Var::Zy => self.c.nrows(),
        }
    }

    fn offset(&self, v: Var) -> usize {
        let order = [Var::X, Var::Y, Var::Zx, Var::Zs, Var::Zy];
        order.iter().take_while(|&&o| o != v).map(|&o| self.dim(o)).sum()
    }

    fn indices(&self, vars: &[Var]) -> Vec<usize> {
        vars.iter()
            .flat_map(|&v| {
                let o = self.offset(v);
                o..o + self.dim(v)
            })
            .collect()
    }

    /// Full covariance over `(x, y, z_x, z_s, z_y)`.
    pub fn joint_covariance(&self) -> &DMatrix<f64> {
        &self.joint
    }

    fn block(&self, r: &[usize], c: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(r.len(), c.len(), |i, j| self.joint[(r[i], c[j])])
    }

    pub fn covariance(&self, vars: &[Var]) -> DMatrix<f64> {
        let i = self.indices(vars);
        self.block(&i, &i)
    }

    /// Exact `p(target | given)` as a linear-Gaussian conditional.
    pub fn conditional(&self, target: &[Var], given: &[Var]) -> Result<LinearConditional> {
        let t = self.indices(target);
        let g = self.indices(given);
        let stt = self.block(&t, &t);
        if g.is_empty() {
            return Ok(LinearConditional {
                weight: DMatrix::zeros(t.len(), 0),
                bias: DVector::zeros(t.len()),
                cov: stt,
            });
        }
        let sgg = chol(&self.block(&g, &g), "conditioning block")?;
        let sgt = self.block(&g, &t);
        // W = S_tg S_gg^-1
        let weight = sgg.solve(&sgt).transpose();
        let cov = &stt - &weight * &sgt;
        Ok(LinearConditional {
            weight,
            bias: DVector::zeros(t.len()),
            cov: (&cov + cov.transpose()) * 0.5,
        })
    }

    fn cond_log_det(&self, a: &[Var], c: &[Var]) -> Result<f64> {
        let cov = self.conditional(a, c)?.cov;
        log_det(&cov, "conditional covariance")
    }

    /// Samples of `(x, y, z_x, z_s, z_y)` as rows of the joint.
    pub fn sample_joint<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<DVector<f64>>> {
        let l = chol(&self.joint, "joint covariance")?.unpack();
        let k = self.joint.nrows();
        Ok((0..n)
            .map(|_| &l * DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect())
    }

    fn part(&self, sample: &DVector<f64>, v: Var) -> DVector<f64> {
        sample.rows(self.offset(v), self.dim(v)).into_owned()
    }
}

/// `I(A; B | C)` in nats from the joint covariance.
pub fn gaussian_mi(sys: &LinearGaussianSystem, a: &[Var], b: &[Var], c: &[Var]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("mutual information needs two non-empty groups".into()));
    }
    for v in a {
        if b.contains(v) || c.contains(v) {
            return Err(Error::InvalidArgument(format!("{v:?} appears in more than one group")));
        }
    }
    if b.iter().any(|v| c.contains(v)) {
        return Err(Error::InvalidArgument("groups must be disjoint".into()));
    }
    let ab: Vec<Var> = a.iter().chain(b).copied().collect();
    Ok(0.5 * (sys.cond_log_det(a, c)? + sys.cond_log_det(b, c)? - sys.cond_log_det(&ab, c)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct MiIdentityReport {
    pub i_zx_zs: f64,
    pub i_x_zx_zs: f64,
    pub i_x_zx: f64,
    pub i_x_zs: f64,
    pub i_x_zs_given_y: f64,
    pub i_y_zs: f64,
    pub i_y_zs_given_x: f64,
    /// `|I(Zx;Zs) - (I(X;Zx) + I(X;Zs) - I(X;Zx,Zs))|`
    pub decomposition_residual: f64,
    /// `|(I(X;Zs) - I(X;Zs|Y)) - (I(Y;Zs) - I(Y;Zs|X))|`
    pub symmetry_residual: f64,
}

impl MiIdentityReport {
    /// Interaction information `I(X;Y;Zs)`, via the `X` side.
    pub fn interaction(&self) -> f64 {
        self.i_x_zs - self.i_x_zs_given_y
    }
}

/// Checks that `I(Zx;Zs) = I(X;Zx) + I(X;Zs) - I(X;Zx,Zs)` (which needs `z_x`
/// to depend on `x` alone) and that the interaction information `I(X;Y;Zs)`
/// comes out the same from either domain.
pub fn verify_mi_identity(sys: &LinearGaussianSystem) -> Result<MiIdentityReport> {
    use Var::*;
    let i_zx_zs = gaussian_mi(sys, &[Zx], &[Zs], &[])?;
    let i_x_zx_zs = gaussian_mi(sys, &[X], &[Zx, Zs], &[])?;
    let i_x_zx = gaussian_mi(sys, &[X], &[Zx], &[])?;
    let i_x_zs = gaussian_mi(sys, &[X], &[Zs], &[])?;
    let i_x_zs_given_y = gaussian_mi(sys, &[X], &[Zs], &[Y])?;
    let i_y_zs = gaussian_mi(sys, &[Y], &[Zs], &[])?;
    let i_y_zs_given_x = gaussian_mi(sys, &[Y], &[Zs], &[X])?;
    Ok(MiIdentityReport {
        i_zx_zs,
        i_x_zx_zs,
        i_x_zx,
        i_x_zs,
        i_x_zs_given_y,
        i_y_zs,
        i_y_zs_given_x,
        decomposition_residual: (i_zx_zs - (i_x_zx + i_x_zs - i_x_zx_zs)).abs(),
        symmetry_residual: ((i_x_zs - i_x_zs_given_y) - (i_y_zs - i_y_zs_given_x)).abs(),
    })
}

/// `N(W g + b, cov)` over some target given `g`.
#[derive(Debug, Clone)]
pub struct LinearConditional {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl LinearConditional {
    pub fn mean(&self, given: &DVector<f64>) -> DVector<f64> {
        &self.weight * given + &self.bias
    }

    fn log_density(&self, target: &DVector<f64>, given: &DVector<f64>) -> Result<f64> {
        let l = chol(&self.cov, "decoder covariance")?;
        let d = target - self.mean(given);
        let k = d.len() as f64;
        let quad = d.dot(&l.solve(&d));
        let ld = 2.0 * l.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(-0.5 * (k * (2.0 * std::f64::consts::PI).ln() + ld + quad))
    }

    fn perturbed<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> Self {
        let (r, c) = self.weight.shape();
        let k = self.cov.nrows();
        let f = gauss_matrix(rng, k, k, scale / (k as f64).sqrt());
        Self {
            weight: &self.weight + gauss_matrix(rng, r, c, scale),
            bias: &self.bias + DVector::from_fn(self.bias.len(), |_, _| scale * rng.sample::<f64, _>(StandardNormal)),
            cov: &self.cov + &f * f.transpose(),
        }
    }
}

/// `KL(N(m1, s1) || N(m2, s2))` for full covariances.
fn kl_full(m1: &DVector<f64>, s1: &DMatrix<f64>, m2: &DVector<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    let l2 = chol(s2, "KL reference covariance")?;
    let k = m1.len() as f64;
    let tr = l2.solve(s1).trace();
    let d = m2 - m1;
    let quad = d.dot(&l2.solve(&d));
    Ok(0.5 * (tr + quad - k + log_det(s2, "KL reference")? - log_det(s1, "KL posterior")?))
}

/// Variational distributions plugged into the three bounds.
#[derive(Debug, Clone)]
pub struct VariationalChoices {
    /// `r_y(z_s | y)`
    pub r_y: LinearConditional,
    /// `p(z_x)`, given nothing
    pub prior_zx: LinearConditional,
    /// `p(x | z_x, z_s)`
    pub decoder_x: LinearConditional,
}

impl VariationalChoices {
    /// The exact distributions, which make every bound tight.
    pub fn exact(sys: &LinearGaussianSystem) -> Result<Self> {
        use Var::*;
        Ok(Self {
            r_y: sys.conditional(&[Zs], &[Y])?,
            prior_zx: sys.conditional(&[Zx], &[])?,
            decoder_x: sys.conditional(&[X], &[Zx, Zs])?,
        })
    }

    pub fn perturbed<R: Rng + ?Sized>(sys: &LinearGaussianSystem, rng: &mut R, scale: f64) -> Result<Self> {
        let e = Self::exact(sys)?;
        Ok(Self {
            r_y: e.r_y.perturbed(rng, scale),
            prior_zx: e.prior_zx.perturbed(rng, scale),
            decoder_x: e.decoder_x.perturbed(rng, scale),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub exact: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// Slack on the side the bound allows; negative means violated.
    pub gap: f64,
    pub insufficient_samples: bool,
}

impl BoundCheck {
    fn new(name: &'static str, exact: f64, samples: &[f64], upper: bool) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let std_error = (var / n).sqrt();
        let gap = if upper { mean - exact } else { exact - mean };
        Self {
            name,
            exact,
            estimate: mean,
            std_error,
            gap,
            insufficient_samples: std_error > gap.abs(),
        }
    }

    /// The bound is not violated beyond `k` standard errors.
    pub fn holds(&self, k: f64) -> bool {
        self.gap >= -k * self.std_error
    }

    /// The estimate matches the exact value within `k` standard errors.
    pub fn tight(&self, k: f64) -> bool {
        self.gap.abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    /// `E KL(q(z_s|x,y) || r_y(z_s|y)) >= I(X;Zs|Y)`
    pub conditional_mi: BoundCheck,
    /// `E KL(q(z_x|x) || p(z_x)) >= I(X;Zx)`
    pub vib: BoundCheck,
    /// `E log p(x|z_x,z_s) + H(X) <= I(X;Zx,Zs)`
    pub reconstruction: BoundCheck,
}

impl BoundReport {
    pub fn checks(&self) -> [&BoundCheck; 3] {
        [&self.conditional_mi, &self.vib, &self.reconstruction]
    }
}

pub fn verify_bound_directions<R: Rng + ?Sized>(
    sys: &LinearGaussianSystem,
    choices: &VariationalChoices,
    samples: usize,
    rng: &mut R,
) -> Result<BoundReport> {
    use Var::*;
    if samples < 2 {
        return Err(Error::InvalidArgument("bound checks need at least 2 samples".into()));
    }
    let draws = sys.sample_joint(rng, samples)?;
    let q_s_cov = DMatrix::from_diagonal(&sys.noise_s);
    let q_x_cov = DMatrix::from_diagonal(&sys.noise_x);
    let empty = DVector::zeros(0);
    let h_x = 0.5 * (log_det(&sys.covariance(&[X]), "x covariance")?
        + sys.x_dim as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln());

    let mut cmi = Vec::with_capacity(samples);
    let mut vib = Vec::with_capacity(samples);
    let mut rec = Vec::with_capacity(samples);
    for s in &draws {
        let x = sys.part(s, X);
        let y = sys.part(s, Y);
        let xy = s.rows(0, sys.cov_xy.nrows()).into_owned();
        let qs_mean = &sys.b * &xy;
        cmi.push(kl_full(&qs_mean, &q_s_cov, &choices.r_y.mean(&y), &choices.r_y.cov)?);
        let qx_mean = &sys.a * &x;
        vib.push(kl_full(&qx_mean, &q_x_cov, &choices.prior_zx.mean(&empty), &choices.prior_zx.cov)?);
        let mut z = sys.part(s, Zx).as_slice().to_vec();
        z.extend_from_slice(sys.part(s, Zs).as_slice());
        rec.push(choices.decoder_x.log_density(&x, &DVector::from_vec(z))? + h_x);
    }
    Ok(BoundReport {
        conditional_mi: BoundCheck::new("conditional_mi", gaussian_mi(sys, &[X], &[Zs], &[Y])?, &cmi, true),
        vib: BoundCheck::new("vib", gaussian_mi(sys, &[X], &[Zx], &[])?, &vib, true),
        reconstruction: BoundCheck::new("reconstruction", gaussian_mi(sys, &[X], &[Zx, Zs], &[])?, &rec, false),
    })
}
