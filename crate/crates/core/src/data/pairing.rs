use std::borrow::Cow;
use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PairedDataset;
use crate::diffmath::Matrix;
use crate::error::{Error, Result};
use crate::trainer::EpochSource;

/// Pairs un-aligned items of two domains by class label. Each round draws one
/// item per class from each domain, uniformly and independently.
#[derive(Debug, Clone)]
pub struct ClassPairer {
    x: Matrix<f32>,
    y: Matrix<f32>,
    /// `(class, x rows, y rows)` for classes present in both domains.
    classes: Vec<(u32, Vec<usize>, Vec<usize>)>,
    /// Classes present in only one domain.
    pub skipped_x_only: usize,
    pub skipped_y_only: usize,
    rounds: usize,
    per_epoch: bool,
    cached: Option<PairedDataset>,
}

fn group(labels: &[u32]) -> BTreeMap<u32, Vec<usize>> {
    let mut m: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        m.entry(c).or_default().push(i);
    }
    m
}

impl ClassPairer {
    pub fn new(x: Matrix<f32>, labels_x: &[u32], y: Matrix<f32>, labels_y: &[u32]) -> Result<Self> {
        if x.rows() != labels_x.len() {
            return Err(Error::dim("x labels", x.rows(), labels_x.len()));
        }
        if y.rows() != labels_y.len() {
            return Err(Error::dim("y labels", y.rows(), labels_y.len()));
        }
        let gx = group(labels_x);
        let mut gy = group(labels_y);
        let mut classes = Vec::new();
        let mut skipped_x_only = 0;
        for (c, xs) in gx {
            match gy.remove(&c) {
                Some(ys) => classes.push((c, xs, ys)),
                None => skipped_x_only += 1,
            }
        }
        let skipped_y_only = gy.len();
        if classes.is_empty() {
            return Err(Error::Empty("the two domains share no class".into()));
        }
        let rounds = x.rows().max(y.rows()).div_ceil(classes.len());
        Ok(Self {
            x,
            y,
            classes,
            skipped_x_only,
            skipped_y_only,
            rounds,
            per_epoch: true,
            cached: None,
        })
    }

    /// Pairs from a dataset's own labels, discarding its existing pairing.
    pub fn from_dataset(ds: &PairedDataset) -> Result<Self> {
        let l = ds.labels()?;
        Self::new(ds.x.clone(), l, ds.y.clone(), l)
    }

    /// Rounds per epoch; each round yields one pair per shared class.
    pub fn with_rounds(mut self, rounds: usize) -> Self {
        self.rounds = rounds.max(1);
        self
    }

    /// `false` draws the pairing once and reuses it for every epoch.
    pub fn per_epoch(mut self, on: bool) -> Self {
        self.per_epoch = on;
        self
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> PairedDataset {
        let mut xi = Vec::with_capacity(self.rounds * self.classes.len());
        let mut yi = Vec::with_capacity(xi.capacity());
        let mut labels = Vec::with_capacity(xi.capacity());
        for _ in 0..self.rounds {
            for (c, xs, ys) in &self.classes {
                xi.push(*xs.choose(rng).expect("non-empty class"));
                yi.push(*ys.choose(rng).expect("non-empty class"));
                labels.push(*c);
            }
        }
        PairedDataset {
            x: self.x.select_rows(&xi),
            y: self.y.select_rows(&yi),
            shared_class: Some(labels),
            excl_x: None,
            excl_y: None,
            split: None,
            provenance: serde_json::json!({ "paired_by_class": { "rounds": self.rounds } }),
        }
    }
}

impl EpochSource for ClassPairer {
    fn epoch(&mut self, _index: usize, rng: &mut ChaCha8Rng) -> Result<Cow<'_, PairedDataset>> {
        if self.per_epoch {
            return Ok(Cow::Owned(self.sample(rng)));
        }
        if self.cached.is_none() {
            self.cached = Some(self.sample(rng));
        }
        Ok(Cow::Borrowed(self.cached.as_ref().expect("filled above")))
    }
}

/// One seeded pairing of two labelled feature sets.
pub fn pair_by_class(
    features_x: Matrix<f32>,
    labels_x: &[u32],
    features_y: Matrix<f32>,
    labels_y: &[u32],
    seed: u64,
) -> Result<PairedDataset> {
    let p = ClassPairer::new(features_x, labels_x, features_y, labels_y)?;
    Ok(p.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}
