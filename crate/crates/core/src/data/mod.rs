//! Paired two-domain datasets: a synthetic generator with known factors, the
//! IIPD binary format, class-based pairing and train/test splits.

mod iipd;
mod pairing;

pub use iipd::{decode_dataset, encode_dataset, load_dataset, save_dataset, IIPD_MAGIC, IIPD_VERSION};
pub use pairing::{pair_by_class, ClassPairer};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffmath::{Activation, Dense, DenseNet, Matrix};
use crate::error::{Error, Result};

/// Rows of `x` and `y` are paired; all optional fields have the same row count.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub x: Matrix<f32>,
    pub y: Matrix<f32>,
    pub shared_class: Option<Vec<u32>>,
    /// Ground-truth exclusive factors of each domain.
    pub excl_x: Option<Matrix<f32>>,
    pub excl_y: Option<Matrix<f32>>,
    pub split: Option<String>,
    /// Free-form generation record carried into file headers.
    pub provenance: serde_json::Value,
}

impl PairedDataset {
    pub fn new(x: Matrix<f32>, y: Matrix<f32>) -> Result<Self> {
        let ds = Self {
            x,
            y,
            shared_class: None,
            excl_x: None,
            excl_y: None,
            split: None,
            provenance: serde_json::Value::Null,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let mut rows = vec![("y", self.y.rows())];
        if let Some(c) = &self.shared_class {
            rows.push(("shared_class", c.len()));
        }
        if let Some(m) = &self.excl_x {
            rows.push(("excl_x", m.rows()));
        }
        if let Some(m) = &self.excl_y {
            rows.push(("excl_y", m.rows()));
        }
        for (name, r) in rows {
            if r != n {
                return Err(Error::dim(format!("{name} rows"), n, r));
            }
        }
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(Error::NonFinite("dataset values".into()));
        }
        Ok(())
    }

    /// Row subset, carrying every optional field along.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            shared_class: self.shared_class.as_ref().map(|c| idx.iter().map(|&i| c[i]).collect()),
            excl_x: self.excl_x.as_ref().map(|m| m.select_rows(idx)),
            excl_y: self.excl_y.as_ref().map(|m| m.select_rows(idx)),
            split: self.split.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn labels(&self) -> Result<&[u32]> {
        self.shared_class
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("dataset has no shared_class labels".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n: usize,
    /// Number of shared classes K.
    pub classes: usize,
    pub x_dim: usize,
    pub y_dim: usize,
    /// Exclusive factor dimension in each domain.
    pub excl_x_dim: usize,
    pub excl_y_dim: usize,
    /// Width of the class codebook vectors.
    pub embed_dim: usize,
    /// Dense layers of each frozen generator (tanh between layers).
    pub depth: usize,
    pub hidden: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            n: 8192,
            classes: 8,
            x_dim: 32,
            y_dim: 32,
            excl_x_dim: 2,
            excl_y_dim: 2,
            embed_dim: 4,
            depth: 2,
            hidden: 32,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.classes < 2 {
            return bad("need at least 2 classes");
        }
        if self.n == 0 {
            return bad("n must be positive");
        }
        if [self.x_dim, self.y_dim, self.excl_x_dim, self.excl_y_dim, self.embed_dim, self.hidden, self.depth]
            .contains(&0)
        {
            return bad("dimensions and depth must be >= 1");
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad("noise_std must be >= 0");
        }
        Ok(())
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Frozen random map: `depth` dense layers, tanh between them, linear last.
/// Weights ~ N(0, 1/fan_in) so pre-activations stay O(1).
fn random_generator<R: Rng>(rng: &mut R, input: usize, hidden: usize, output: usize, depth: usize) -> DenseNet<f64> {
    let mut widths = vec![input];
    widths.extend(std::iter::repeat_n(hidden, depth - 1));
    widths.push(output);
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let scale = (1.0 / w[0] as f64).sqrt();
            let mut layer = Dense::zeros(w[0], w[1], if i + 2 == widths.len() { Activation::Identity } else { Activation::Tanh });
            layer.weight = Matrix::from_fn(w[0], w[1], |_, _| scale * normal(rng));
            layer.bias = (0..w[1]).map(|_| 0.1 * normal(rng)).collect();
            layer
        })
        .collect();
    DenseNet::new(layers).expect("widths chain by construction")
}

/// `x = tanh(G_x([c_s; e_x])) + noise`, likewise for `y`, where `c_s` is the
/// codebook vector of class `s` (shared by both domains), `e_x, e_y ~ N(0, I)`
/// are drawn independently, and `G_x`, `G_y` are frozen random maps. Values are
/// clamped to `[-1, 1]` after the noise is added.
pub fn gen_synthetic(spec: &GenSpec) -> Result<PairedDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // codebook rows scaled so class separation dominates a unit-variance factor
    let code_scale = 2.0;
    let codebook = Matrix::from_fn(spec.classes, spec.embed_dim, |_, _| code_scale * normal(&mut rng));
    let gx = random_generator(&mut rng, spec.embed_dim + spec.excl_x_dim, spec.hidden, spec.x_dim, spec.depth);
    let gy = random_generator(&mut rng, spec.embed_dim + spec.excl_y_dim, spec.hidden, spec.y_dim, spec.depth);

    let n = spec.n;
    let classes: Vec<u32> = (0..n).map(|_| rng.random_range(0..spec.classes as u32)).collect();
    let ex = Matrix::from_fn(n, spec.excl_x_dim, |_, _| normal(&mut rng));
    let ey = Matrix::from_fn(n, spec.excl_y_dim, |_, _| normal(&mut rng));
    let render = |g: &DenseNet<f64>, e: &Matrix<f64>, rng: &mut ChaCha8Rng| -> Result<Matrix<f32>> {
        let codes = codebook.select_rows(&classes.iter().map(|&c| c as usize).collect::<Vec<_>>());
        let h = g.forward(&Matrix::hconcat(&[&codes, e])?)?;
        let mut out = h.map(|v| v.tanh());
        for v in out.as_mut_slice() {
            *v = (*v + spec.noise_std * normal(rng)).clamp(-1.0, 1.0);
        }
        Ok(out.cast())
    };
    let x = render(&gx, &ex, &mut rng)?;
    let y = render(&gy, &ey, &mut rng)?;
    Ok(PairedDataset {
        x,
        y,
        shared_class: Some(classes),
        excl_x: Some(ex.cast()),
        excl_y: Some(ey.cast()),
        split: None,
        provenance: serde_json::json!({ "generator": "gen_synthetic", "spec": spec }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Shuffle rows; both sides see every class.
    Rows,
    /// Whole classes go to one side (zero-shot).
    ClassDisjoint,
}

/// Splits into `(train, test)` with `fractions = [train, test]`.
pub fn split(ds: &PairedDataset, fractions: [f64; 2], mode: SplitMode, seed: u64) -> Result<(PairedDataset, PairedDataset)> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || ((fractions[0] + fractions[1]) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split fractions {fractions:?} must be >= 0 and sum to 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_idx, test_idx): (Vec<usize>, Vec<usize>) = match mode {
        SplitMode::Rows => {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            idx.shuffle(&mut rng);
            let cut = (fractions[0] * ds.len() as f64).round() as usize;
            let test = idx.split_off(cut);
            (idx, test)
        }
        SplitMode::ClassDisjoint => {
            let labels = ds.labels()?;
            let mut classes: Vec<u32> = labels.to_vec();
            classes.sort_unstable();
            classes.dedup();
            classes.shuffle(&mut rng);
            let cut = (fractions[0] * classes.len() as f64).round() as usize;
            let train_classes = &classes[..cut];
            (0..ds.len()).partition(|&i| train_classes.contains(&labels[i]))
        }
    };
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Empty("a split side received no rows".into()));
    }
    let sorted = |mut v: Vec<usize>, tag: &str| {
        v.sort_unstable();
        let mut d = ds.select_rows(&v);
        d.split = Some(tag.to_string());
        d
    };
    Ok((sorted(train_idx, "train"), sorted(test_idx, "test")))
}

#[cfg(test)]
mod tests;
