//! The IIAE network: per-domain feature extractors, five distribution heads
//! and two decoders.
//!
//! ```text
//!   x ──► fe_x ─┬──────────────► head_rx ─► r(z_s|x)
//!               └─┐
//!                 ├─ [fe_x; fe_y] ► head_qs ─► q(z_s|x,y)
//!               ┌─┘
//!   y ──► fe_y ─┴──────────────► head_ry ─► r(z_s|y)
//!   x ──► head_qx ─► q(z_x|x)        y ──► head_qy ─► q(z_y|y)
//!   [z_x; z_s] ──► dec_x ─► x̂        [z_y; z_s] ──► dec_y ─► ŷ
//! ```

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta, Manifest, TensorEntry,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{Activation, DenseNet, GaussianBatch, GaussianParams, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Layer widths of every sub-network. The head output layers (`2 * z_dim`)
/// and the decoder output (`x_dim`/`y_dim`) are implied and not listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub zx_dim: usize,
    pub zs_dim: usize,
    pub zy_dim: usize,
    /// Feature extractor layers; the last width is the feature dimension.
    pub fe_hidden: Vec<usize>,
    /// Hidden layers of `q(z_x|x)` / `q(z_y|y)`, which read the raw input.
    pub excl_hidden: Vec<usize>,
    /// Hidden layers of `r(z_s|x)` / `r(z_s|y)` on top of the features.
    pub single_hidden: Vec<usize>,
    /// Hidden layers of `q(z_s|x,y)` on top of the concatenated features.
    pub joint_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
}

impl Default for ArchConfig {
    /// Fully-connected layout for 512-d input features with 64-d latents
    /// (each head's final 128 units are mean ‖ log-variance).
    fn default() -> Self {
        Self {
            zx_dim: 64,
            zs_dim: 64,
            zy_dim: 64,
            fe_hidden: vec![512],
            excl_hidden: vec![512, 256],
            single_hidden: vec![256],
            joint_hidden: vec![512],
            dec_hidden: vec![128],
        }
    }
}

impl ArchConfig {
    /// Compact layout used for the synthetic benchmark.
    pub fn compact() -> Self {
        Self {
            zx_dim: 4,
            zs_dim: 8,
            zy_dim: 4,
            fe_hidden: vec![64],
            excl_hidden: vec![64, 64],
            single_hidden: vec![64],
            joint_hidden: vec![64],
            dec_hidden: vec![64, 64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.zx_dim == 0 || self.zs_dim == 0 || self.zy_dim == 0 {
            return Err(Error::InvalidArgument("latent dimensions must be at least 1".into()));
        }
        if self.fe_hidden.is_empty() {
            return Err(Error::InvalidArgument("feature extractor needs at least one layer".into()));
        }
        let all = [
            &self.fe_hidden,
            &self.excl_hidden,
            &self.single_hidden,
            &self.joint_hidden,
            &self.dec_hidden,
        ];
        if all.iter().any(|v| v.contains(&0)) {
            return Err(Error::InvalidArgument("layer widths must be at least 1".into()));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        *self.fe_hidden.last().expect("validated non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub x_dim: usize,
    pub y_dim: usize,
    pub zx_dim: usize,
    pub zs_dim: usize,
    pub zy_dim: usize,
}

/// Identifies one of the nine sub-networks; the discriminant is the canonical
/// order used for flattening and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NetId {
    FeX = 0,
    FeY,
    HeadQx,
    HeadQy,
    HeadRx,
    HeadRy,
    HeadQs,
    DecX,
    DecY,
}

impl NetId {
    pub const ALL: [NetId; 9] = [
        NetId::FeX,
        NetId::FeY,
        NetId::HeadQx,
        NetId::HeadQy,
        NetId::HeadRx,
        NetId::HeadRy,
        NetId::HeadQs,
        NetId::DecX,
        NetId::DecY,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NetId::FeX => "fe_x",
            NetId::FeY => "fe_y",
            NetId::HeadQx => "head_qx",
            NetId::HeadQy => "head_qy",
            NetId::HeadRx => "head_rx",
            NetId::HeadRy => "head_ry",
            NetId::HeadQs => "head_qs",
            NetId::DecX => "dec_x",
            NetId::DecY => "dec_y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "x")]
    X,
    #[serde(rename = "y")]
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "x2y")]
    XToY,
    #[serde(rename = "y2x")]
    YToX,
}

impl Direction {
    pub fn source(self) -> Domain {
        match self {
            Direction::XToY => Domain::X,
            Direction::YToX => Domain::Y,
        }
    }

    pub fn target(self) -> Domain {
        match self {
            Direction::XToY => Domain::Y,
            Direction::YToX => Domain::X,
        }
    }
}

/// How the target-domain exclusive code is chosen during translation.
#[derive(Debug, Clone, PartialEq)]
pub enum TranslateMode<T> {
    /// Reparameterize the `N(0, I)` prior with the given standard-normal noise.
    PriorSample { noise: Vec<T> },
    /// Use the posterior mean of the exclusive encoder on a target-domain item.
    Guided { reference: Option<Vec<T>> },
}

/// Per-pair standard-normal noise for the three sampled codes.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentNoise<T> {
    pub x: Matrix<T>,
    pub s: Matrix<T>,
    pub y: Matrix<T>,
}

impl<T: Scalar> LatentNoise<T> {
    pub fn zeros(rows: usize, dims: &ModelDims) -> Self {
        Self {
            x: Matrix::zeros(rows, dims.zx_dim),
            s: Matrix::zeros(rows, dims.zs_dim),
            y: Matrix::zeros(rows, dims.zy_dim),
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, rows: usize, dims: &ModelDims) -> Self {
        let mut draw = |cols: usize| {
            Matrix::from_fn(rows, cols, |_, _| T::of(rng.sample::<f64, _>(rand_distr::StandardNormal)))
        };
        let x = draw(dims.zx_dim);
        let s = draw(dims.zs_dim);
        let y = draw(dims.zy_dim);
        Self { x, s, y }
    }

    pub fn rows(&self) -> usize {
        self.s.rows()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            s: self.s.select_rows(idx),
            y: self.y.select_rows(idx),
        }
    }

    pub(crate) fn check(&self, rows: usize, dims: &ModelDims) -> Result<()> {
        for (m, d, name) in [
            (&self.x, dims.zx_dim, "noise x"),
            (&self.s, dims.zs_dim, "noise s"),
            (&self.y, dims.zy_dim, "noise y"),
        ] {
            if m.cols() != d {
                return Err(Error::dim(name, d, m.cols()));
            }
            if m.rows() != rows {
                return Err(Error::dim(format!("{name} rows"), rows, m.rows()));
            }
        }
        Ok(())
    }
}

/// The five posteriors and three sampled codes of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair<T> {
    pub qx: GaussianParams<T>,
    pub qy: GaussianParams<T>,
    pub qs: GaussianParams<T>,
    pub rx: GaussianParams<T>,
    pub ry: GaussianParams<T>,
    pub z_x: Vec<T>,
    pub z_s: Vec<T>,
    pub z_y: Vec<T>,
    pub noise: [Vec<T>; 3],
}

/// Batched counterpart of [`EncodedPair`].
#[derive(Debug, Clone)]
pub struct EncodedBatch<T> {
    pub qx: GaussianBatch<T>,
    pub qy: GaussianBatch<T>,
    pub qs: GaussianBatch<T>,
    pub rx: GaussianBatch<T>,
    pub ry: GaussianBatch<T>,
    pub z_x: Matrix<T>,
    pub z_s: Matrix<T>,
    pub z_y: Matrix<T>,
}

/// Counts forward evaluations per sub-network.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct CallLog {
    counts: [usize; 9],
}

impl CallLog {
    pub fn count(&self, id: NetId) -> usize {
        self.counts[id as usize]
    }

    fn hit(&mut self, id: NetId) {
        self.counts[id as usize] += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IIAEModel<T> {
    dims: ModelDims,
    arch: ArchConfig,
    nets: Vec<DenseNet<T>>,
}

impl<T: Scalar> IIAEModel<T> {
    /// Zero-initialized model. All heads output mean 0 and log-variance 0.
    pub fn zeros(x_dim: usize, y_dim: usize, arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        if x_dim == 0 || y_dim == 0 {
            return Err(Error::InvalidArgument("data dimensions must be at least 1".into()));
        }
        let leaky = Activation::LeakyRelu;
        let id = Activation::Identity;
        let feat = arch.feature_dim();
        let fe = |input: usize| {
            let (last, hidden) = arch.fe_hidden.split_last().unwrap();
            DenseNet::zeros(input, hidden, *last, leaky, leaky)
        };
        let nets = vec![
            fe(x_dim),
            fe(y_dim),
            DenseNet::zeros(x_dim, &arch.excl_hidden, 2 * arch.zx_dim, leaky, id),
            DenseNet::zeros(y_dim, &arch.excl_hidden, 2 * arch.zy_dim, leaky, id),
            DenseNet::zeros(feat, &arch.single_hidden, 2 * arch.zs_dim, leaky, id),
            DenseNet::zeros(feat, &arch.single_hidden, 2 * arch.zs_dim, leaky, id),
            DenseNet::zeros(2 * feat, &arch.joint_hidden, 2 * arch.zs_dim, leaky, id),
            DenseNet::zeros(arch.zx_dim + arch.zs_dim, &arch.dec_hidden, x_dim, leaky, Activation::Tanh),
            DenseNet::zeros(arch.zy_dim + arch.zs_dim, &arch.dec_hidden, y_dim, leaky, Activation::Tanh),
        ];
        Ok(Self {
            dims: ModelDims {
                x_dim,
                y_dim,
                zx_dim: arch.zx_dim,
                zs_dim: arch.zs_dim,
                zy_dim: arch.zy_dim,
            },
            arch: arch.clone(),
            nets,
        })
    }

    /// Glorot-uniform initialized model.
    pub fn new<R: Rng + ?Sized>(x_dim: usize, y_dim: usize, arch: &ArchConfig, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(x_dim, y_dim, arch)?;
        for net in &mut m.nets {
            net.init_uniform(rng);
        }
        Ok(m)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            dims: self.dims,
            arch: self.arch.clone(),
            nets: self.nets.iter().map(DenseNet::zeros_like).collect(),
        }
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn net(&self, id: NetId) -> &DenseNet<T> {
        &self.nets[id as usize]
    }

    pub fn net_mut(&mut self, id: NetId) -> &mut DenseNet<T> {
        &mut self.nets[id as usize]
    }

    pub fn fe_x(&self) -> &DenseNet<T> {
        self.net(NetId::FeX)
    }

    pub fn fe_y(&self) -> &DenseNet<T> {
        self.net(NetId::FeY)
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(DenseNet::param_count).sum()
    }

    /// Named parameter tensors in canonical order: `(name, shape, values)`.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for id in NetId::ALL {
            for (l, layer) in self.net(id).layers().iter().enumerate() {
                out.push((
                    format!("{}.{l}.weight", id.name()),
                    vec![layer.weight.rows(), layer.weight.cols()],
                    layer.weight.as_slice(),
                ));
                out.push((format!("{}.{l}.bias", id.name()), vec![layer.bias.len()], layer.bias.as_slice()));
            }
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.nets.iter_mut().flat_map(|n| n.param_slices_mut()).collect()
    }

    pub fn param_slices(&self) -> Vec<&[T]> {
        self.nets.iter().flat_map(|n| n.param_slices()).collect()
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.param_slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        let total = self.param_count();
        if flat.len() != total {
            return Err(Error::dim("flat parameter vector", total, flat.len()));
        }
        let mut off = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> IIAEModel<U> {
        let mut out = IIAEModel::<U>::zeros(self.dims.x_dim, self.dims.y_dim, &self.arch).expect("same shape");
        let flat: Vec<U> = self.to_flat().iter().map(|v| U::of(v.as_f64())).collect();
        out.set_flat(&flat).expect("same shape");
        out
    }

    pub fn is_finite(&self) -> bool {
        self.nets.iter().all(DenseNet::is_finite)
    }

    fn run(&self, id: NetId, input: &Matrix<T>, log: &mut CallLog) -> Result<Matrix<T>> {
        log.hit(id);
        self.net(id).forward(input)
    }

    fn check_inputs(&self, x: &Matrix<T>, y: &Matrix<T>) -> Result<()> {
        if x.cols() != self.dims.x_dim {
            return Err(Error::dim("x input", self.dims.x_dim, x.cols()));
        }
        if y.cols() != self.dims.y_dim {
            return Err(Error::dim("y input", self.dims.y_dim, y.cols()));
        }
        if x.rows() != y.rows() {
            return Err(Error::dim("paired rows", x.rows(), y.rows()));
        }
        Ok(())
    }

    /// Batched encoder pass; each feature extractor runs once.
    pub fn encode_batch_logged(
        &self,
        x: &Matrix<T>,
        y: &Matrix<T>,
        noise: &LatentNoise<T>,
        log: &mut CallLog,
    ) -> Result<EncodedBatch<T>> {
        self.check_inputs(x, y)?;
        noise.check(x.rows(), &self.dims)?;
        let hx = self.run(NetId::FeX, x, log)?;
        let hy = self.run(NetId::FeY, y, log)?;
        let hxy = Matrix::hconcat(&[&hx, &hy])?;
        let qx = GaussianBatch::from_head(&self.run(NetId::HeadQx, x, log)?);
        let qy = GaussianBatch::from_head(&self.run(NetId::HeadQy, y, log)?);
        let qs = GaussianBatch::from_head(&self.run(NetId::HeadQs, &hxy, log)?);
        let rx = GaussianBatch::from_head(&self.run(NetId::HeadRx, &hx, log)?);
        let ry = GaussianBatch::from_head(&self.run(NetId::HeadRy, &hy, log)?);
        let z_x = qx.sample(&noise.x)?;
        let z_s = qs.sample(&noise.s)?;
        let z_y = qy.sample(&noise.y)?;
        Ok(EncodedBatch {
            qx,
            qy,
            qs,
            rx,
            ry,
            z_x,
            z_s,
            z_y,
        })
    }

    pub fn encode_batch(&self, x: &Matrix<T>, y: &Matrix<T>, noise: &LatentNoise<T>) -> Result<EncodedBatch<T>> {
        self.encode_batch_logged(x, y, noise, &mut CallLog::default())
    }

    /// Encodes one pair with explicit noise `[eps_x, eps_s, eps_y]`.
    pub fn encode_pair(&self, x: &[T], y: &[T], noise: [&[T]; 3]) -> Result<EncodedPair<T>> {
        self.encode_pair_logged(x, y, noise, &mut CallLog::default())
    }

    pub fn encode_pair_logged(&self, x: &[T], y: &[T], noise: [&[T]; 3], log: &mut CallLog) -> Result<EncodedPair<T>> {
        let n = LatentNoise {
            x: Matrix::row_vector(noise[0]),
            s: Matrix::row_vector(noise[1]),
            y: Matrix::row_vector(noise[2]),
        };
        let b = self.encode_batch_logged(&Matrix::row_vector(x), &Matrix::row_vector(y), &n, log)?;
        Ok(EncodedPair {
            qx: b.qx.get(0),
            qy: b.qy.get(0),
            qs: b.qs.get(0),
            rx: b.rx.get(0),
            ry: b.ry.get(0),
            z_x: b.z_x.into_vec(),
            z_s: b.z_s.into_vec(),
            z_y: b.z_y.into_vec(),
            noise: [noise[0].to_vec(), noise[1].to_vec(), noise[2].to_vec()],
        })
    }

    fn domain_dim(&self, d: Domain) -> usize {
        match d {
            Domain::X => self.dims.x_dim,
            Domain::Y => self.dims.y_dim,
        }
    }

    fn excl_dim(&self, d: Domain) -> usize {
        match d {
            Domain::X => self.dims.zx_dim,
            Domain::Y => self.dims.zy_dim,
        }
    }

    /// Single-view shared posterior `r(z_s|·)` for a batch of items.
    pub fn shared_posterior(&self, items: &Matrix<T>, domain: Domain) -> Result<GaussianBatch<T>> {
        let (fe, head) = match domain {
            Domain::X => (NetId::FeX, NetId::HeadRx),
            Domain::Y => (NetId::FeY, NetId::HeadRy),
        };
        if items.cols() != self.domain_dim(domain) {
            return Err(Error::dim("shared posterior input", self.domain_dim(domain), items.cols()));
        }
        let h = self.net(fe).forward(items)?;
        Ok(GaussianBatch::from_head(&self.net(head).forward(&h)?))
    }

    /// Exclusive posterior `q(z_x|x)` or `q(z_y|y)` for a batch of items.
    pub fn exclusive_posterior(&self, items: &Matrix<T>, domain: Domain) -> Result<GaussianBatch<T>> {
        let head = match domain {
            Domain::X => NetId::HeadQx,
            Domain::Y => NetId::HeadQy,
        };
        if items.cols() != self.domain_dim(domain) {
            return Err(Error::dim("exclusive posterior input", self.domain_dim(domain), items.cols()));
        }
        Ok(GaussianBatch::from_head(&self.net(head).forward(items)?))
    }

    /// Decoder mean for a batch of `(exclusive, shared)` codes.
    pub fn decode(&self, domain: Domain, z_excl: &Matrix<T>, z_s: &Matrix<T>) -> Result<Matrix<T>> {
        let dec = match domain {
            Domain::X => NetId::DecX,
            Domain::Y => NetId::DecY,
        };
        if z_excl.cols() != self.excl_dim(domain) {
            return Err(Error::dim("exclusive code", self.excl_dim(domain), z_excl.cols()));
        }
        if z_s.cols() != self.dims.zs_dim {
            return Err(Error::dim("shared code", self.dims.zs_dim, z_s.cols()));
        }
        self.net(dec).forward(&Matrix::hconcat(&[z_excl, z_s])?)
    }

    pub fn decode_x(&self, z_x: &[T], z_s: &[T]) -> Result<Vec<T>> {
        Ok(self
            .decode(Domain::X, &Matrix::row_vector(z_x), &Matrix::row_vector(z_s))?
            .into_vec())
    }

    pub fn decode_y(&self, z_y: &[T], z_s: &[T]) -> Result<Vec<T>> {
        Ok(self
            .decode(Domain::Y, &Matrix::row_vector(z_y), &Matrix::row_vector(z_s))?
            .into_vec())
    }

    /// Batched translation. The shared code is the mean of the source's
    /// single-view encoder; the target exclusive code is a prior sample
    /// (`noise` rows) or the posterior mean of the matching `references` row.
    pub fn translate_batch(
        &self,
        sources: &Matrix<T>,
        direction: Direction,
        exclusive: ExclusiveSource<'_, T>,
    ) -> Result<Matrix<T>> {
        let target = direction.target();
        let zs = self.shared_posterior(sources, direction.source())?.mean;
        let excl = match exclusive {
            ExclusiveSource::Prior(noise) => {
                if noise.rows() != sources.rows() {
                    return Err(Error::dim("prior noise rows", sources.rows(), noise.rows()));
                }
                if noise.cols() != self.excl_dim(target) {
                    return Err(Error::dim("prior noise", self.excl_dim(target), noise.cols()));
                }
                // prior is N(0, I), so the reparameterized sample is the noise
                noise.clone()
            }
            ExclusiveSource::Guided(refs) => {
                if refs.rows() != sources.rows() {
                    return Err(Error::dim("reference rows", sources.rows(), refs.rows()));
                }
                self.exclusive_posterior(refs, target)?.mean
            }
        };
        self.decode(target, &excl, &zs)
    }

    pub fn translate(&self, source: &[T], direction: Direction, mode: &TranslateMode<T>) -> Result<Vec<T>> {
        let src = Matrix::row_vector(source);
        let out = match mode {
            TranslateMode::PriorSample { noise } => {
                self.translate_batch(&src, direction, ExclusiveSource::Prior(&Matrix::row_vector(noise)))?
            }
            TranslateMode::Guided { reference } => {
                let r = reference.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("guided translation requires a target-domain reference".into())
                })?;
                self.translate_batch(&src, direction, ExclusiveSource::Guided(&Matrix::row_vector(r)))?
            }
        };
        Ok(out.into_vec())
    }
}

/// Batched source of target exclusive codes for [`IIAEModel::translate_batch`].
#[derive(Debug, Clone, Copy)]
pub enum ExclusiveSource<'a, T> {
    Prior(&'a Matrix<T>),
    Guided(&'a Matrix<T>),
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_arch() -> ArchConfig {
        ArchConfig {
            zx_dim: 2,
            zs_dim: 3,
            zy_dim: 2,
            fe_hidden: vec![5],
            excl_hidden: vec![4],
            single_hidden: vec![4],
            joint_hidden: vec![6],
            dec_hidden: vec![5],
        }
    }

    fn random_model(seed: u64) -> IIAEModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        IIAEModel::new(4, 3, &small_arch(), &mut rng).unwrap()
    }

    #[test]
    fn zero_model_encodes_to_prior_and_codes_equal_noise() {
        let m = IIAEModel::<f64>::zeros(4, 3, &small_arch()).unwrap();
        let (ex, es, ey) = ([0.5, -1.0], [0.1, 0.2, 0.3], [2.0, -2.0]);
        let e = m.encode_pair(&[1.0, 2.0, 3.0, 4.0], &[0.1, 0.2, 0.3], [&ex, &es, &ey]).unwrap();
        for g in [&e.qx, &e.qy, &e.qs, &e.rx, &e.ry] {
            assert!(g.mean().iter().all(|&v| v == 0.0));
            assert!(g.log_var().iter().all(|&v| v == 0.0));
        }
        assert_eq!(e.z_x, ex.to_vec());
        assert_eq!(e.z_s, es.to_vec());
        assert_eq!(e.z_y, ey.to_vec());
        assert_eq!(m.decode_x(&ex, &es).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn encoding_is_deterministic() {
        let m = random_model(1);
        let n = ([0.5, -1.0], [0.1, 0.2, 0.3], [2.0, -2.0]);
        let a = m.encode_pair(&[1.0, 2.0, 3.0, 4.0], &[0.1, 0.2, 0.3], [&n.0, &n.1, &n.2]).unwrap();
        let b = m.encode_pair(&[1.0, 2.0, 3.0, 4.0], &[0.1, 0.2, 0.3], [&n.0, &n.1, &n.2]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn structural_independence_of_heads() {
        let m = random_model(2);
        let n = ([0.5, -1.0], [0.1, 0.2, 0.3], [2.0, -2.0]);
        let noise = [&n.0[..], &n.1[..], &n.2[..]];
        let x1 = [0.3, -0.2, 0.8, 0.1];
        let x2 = [-0.9, 0.4, 0.0, 0.5];
        let y1 = [0.1, 0.2, 0.3];
        let y2 = [-0.7, 0.9, -0.1];
        let a = m.encode_pair(&x1, &y1, noise).unwrap();
        let b = m.encode_pair(&x1, &y2, noise).unwrap();
        let c = m.encode_pair(&x2, &y1, noise).unwrap();
        assert_eq!(a.rx, b.rx);
        assert_eq!(a.qx, b.qx);
        assert_eq!(a.ry, c.ry);
        assert_eq!(a.qy, c.qy);
        assert_ne!(a.qs, b.qs);
        assert_ne!(a.qs, c.qs);
    }

    #[test]
    fn feature_extractors_run_once_per_encode() {
        let m = random_model(3);
        let mut log = CallLog::default();
        let n = ([0.0; 2], [0.0; 3], [0.0; 2]);
        m.encode_pair_logged(&[0.1; 4], &[0.2; 3], [&n.0, &n.1, &n.2], &mut log)
            .unwrap();
        assert_eq!(log.count(NetId::FeX), 1);
        assert_eq!(log.count(NetId::FeY), 1);
        assert_eq!(log.count(NetId::HeadRx), 1);
        assert_eq!(log.count(NetId::HeadQs), 1);
    }

    #[test]
    fn decoder_output_is_inside_open_unit_interval() {
        let mut m = random_model(4);
        for s in m.param_slices_mut() {
            s.iter_mut().for_each(|v| *v *= 3.0);
        }
        let out = m.decode_x(&[40.0, -40.0], &[1e3, -5.0, 7.0]).unwrap();
        assert!(out.iter().all(|v| v.abs() <= 1.0 && v.is_finite()));
        let out = m.decode_y(&[0.2, 0.1], &[0.3, -0.1, 0.05]).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn translate_modes() {
        let z = IIAEModel::<f64>::zeros(4, 3, &small_arch()).unwrap();
        let prior = TranslateMode::PriorSample { noise: vec![0.3, -0.4] };
        assert_eq!(z.translate(&[1.0; 4], Direction::XToY, &prior).unwrap(), vec![0.0; 3]);

        let m = random_model(5);
        let x = [0.2, -0.1, 0.4, 0.9];
        let y = [0.5, -0.3, 0.2];
        let guided = TranslateMode::Guided {
            reference: Some(y.to_vec()),
        };
        let out = m.translate(&x, Direction::XToY, &guided).unwrap();
        let zy = m.exclusive_posterior(&Matrix::row_vector(&y), Domain::Y).unwrap().mean;
        let zs = m.shared_posterior(&Matrix::row_vector(&x), Domain::X).unwrap().mean;
        assert_eq!(out, m.decode_y(zy.row(0), zs.row(0)).unwrap());

        let missing = TranslateMode::Guided { reference: None };
        assert!(matches!(
            m.translate(&x, Direction::XToY, &missing),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = random_model(6);
        let n = ([0.0; 2], [0.0; 3], [0.0; 2]);
        assert!(matches!(
            m.encode_pair(&[0.0; 3], &[0.0; 3], [&n.0, &n.1, &n.2]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            m.encode_pair(&[0.0; 4], &[0.0; 3], [&n.0, &n.0, &n.2]),
            Err(Error::Dimension { .. })
        ));
        assert!(m.decode_x(&[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn flat_round_trip_and_cast() {
        let m = random_model(7);
        let mut z = m.zeros_like();
        z.set_flat(&m.to_flat()).unwrap();
        assert_eq!(z, m);
        let f: IIAEModel<f32> = m.cast();
        assert_eq!(f.param_count(), m.param_count());
    }

    #[test]
    fn default_architecture_parameter_count() {
        // 512-d features on both sides, 64-d latents
        let m = IIAEModel::<f32>::zeros(512, 512, &ArchConfig::default()).unwrap();
        let fc = |i: usize, o: usize| i * o + o;
        let fe = fc(512, 512);
        let qx = fc(512, 512) + fc(512, 256) + fc(256, 128);
        let r = fc(512, 256) + fc(256, 128);
        let qs = fc(1024, 512) + fc(512, 128);
        let dec = fc(128, 128) + fc(128, 512);
        assert_eq!(m.param_count(), 2 * (fe + qx + r + dec) + qs);
        assert_eq!(m.net(NetId::HeadQs).input_dim(), 2 * m.fe_x().output_dim());
        assert_eq!(m.net(NetId::DecX).input_dim(), 64 + 64);
        assert_eq!(m.net(NetId::HeadQx).output_dim(), 128);
    }
}
