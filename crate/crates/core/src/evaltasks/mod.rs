//! Downstream evaluation: cross-domain retrieval, linear probes and batch
//! translation.

mod probe;
mod retrieval;

pub use probe::{probe, ProbeReport, ProbeTarget, Targets, PROBE_FOLDS};
pub use retrieval::{rank, retrieve, GroundTruth, Metric, Representation, RetrievalReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PairedDataset;
use crate::diffmath::Matrix;
use crate::error::{Error, Result};
use crate::model::{Direction, Domain, ExclusiveSource, IIAEModel, LatentNoise};
use crate::scalar::Scalar;

/// Which code [`embed`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Code {
    /// Mean of the single-view encoder `r(z_s|·)`.
    Shared,
    /// Mean of `q(z_x|x)` or `q(z_y|y)`.
    Exclusive,
}

/// Posterior means for a batch of items from one domain.
pub fn embed<T: Scalar>(model: &IIAEModel<T>, items: &Matrix<f32>, domain: Domain, code: Code) -> Result<Matrix<T>> {
    let items = items.cast::<T>();
    Ok(match code {
        Code::Shared => model.shared_posterior(&items, domain)?.mean,
        Code::Exclusive => model.exclusive_posterior(&items, domain)?.mean,
    })
}

/// How retrieval hits are defined on a paired test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitRule {
    /// Only the paired item.
    Pair,
    /// Any item of the query's class.
    Class,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub shared: RetrievalReport,
    pub exclusive_x: RetrievalReport,
    pub exclusive_y: RetrievalReport,
}

fn truth(ds: &PairedDataset, rule: HitRule) -> Result<GroundTruth> {
    Ok(match rule {
        HitRule::Pair => GroundTruth::Pairs,
        HitRule::Class => {
            let l = ds.labels()?.to_vec();
            GroundTruth::ByClass {
                queries: l.clone(),
                database: l,
            }
        }
    })
}

/// Retrieval of one representation: x items query the y items for shared and
/// exclusive_x, y items query the x items for exclusive_y.
pub fn retrieve_with<T: Scalar>(
    model: &IIAEModel<T>,
    ds: &PairedDataset,
    representation: Representation,
    metric: Metric,
    rule: HitRule,
    ks: &[usize],
) -> Result<RetrievalReport> {
    let (q, db) = match representation {
        Representation::Shared => (
            embed(model, &ds.x, Domain::X, Code::Shared)?,
            embed(model, &ds.y, Domain::Y, Code::Shared)?,
        ),
        Representation::ExclusiveX | Representation::ExclusiveY => {
            let ex = embed(model, &ds.x, Domain::X, Code::Exclusive)?;
            let ey = embed(model, &ds.y, Domain::Y, Code::Exclusive)?;
            if ex.cols() != ey.cols() {
                return Err(Error::InvalidArgument(format!(
                    "exclusive retrieval needs zx_dim == zy_dim, got {} and {}",
                    ex.cols(),
                    ey.cols()
                )));
            }
            if representation == Representation::ExclusiveX {
                (ex, ey)
            } else {
                (ey, ex)
            }
        }
    };
    retrieve(&q, &db, metric, &truth(ds, rule)?, ks, representation)
}

/// Shared versus exclusive retrieval on the same paired test set.
pub fn exclusive_ablation<T: Scalar>(
    model: &IIAEModel<T>,
    ds: &PairedDataset,
    metric: Metric,
    rule: HitRule,
    ks: &[usize],
) -> Result<AblationReport> {
    Ok(AblationReport {
        shared: retrieve_with(model, ds, Representation::Shared, metric, rule, ks)?,
        exclusive_x: retrieve_with(model, ds, Representation::ExclusiveX, metric, rule, ks)?,
        exclusive_y: retrieve_with(model, ds, Representation::ExclusiveY, metric, rule, ks)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslationMode {
    /// Target exclusive code drawn from the prior with a seeded stream.
    Prior,
    /// Target exclusive code from the dataset's paired target item.
    Guided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationSummary {
    pub direction: Direction,
    pub mode: TranslationMode,
    pub rows: usize,
    /// Mean squared error against the paired target items.
    pub mse: f64,
    /// MSE of prior-mode output with the same seed, for comparison.
    pub prior_mse: f64,
}

pub struct Translation {
    pub output: Matrix<f32>,
    pub summary: TranslationSummary,
}

fn mse(a: &Matrix<f32>, b: &Matrix<f32>) -> f64 {
    let n = a.as_slice().len().max(1) as f64;
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&p, &t)| (p as f64 - t as f64).powi(2))
        .sum::<f64>()
        / n
}

/// Translates every source item of `ds` into the other domain.
pub fn translate_batch<T: Scalar>(
    model: &IIAEModel<T>,
    ds: &PairedDataset,
    direction: Direction,
    mode: TranslationMode,
    seed: u64,
) -> Result<Translation> {
    let (src, tgt) = match direction.source() {
        Domain::X => (&ds.x, &ds.y),
        Domain::Y => (&ds.y, &ds.x),
    };
    if tgt.cols() == 0 && mode == TranslationMode::Guided {
        return Err(Error::InvalidArgument("guided translation requires paired target items".into()));
    }
    let sources = src.cast::<T>();
    let noise = LatentNoise::<T>::sample(&mut ChaCha8Rng::seed_from_u64(seed), ds.len(), model.dims());
    let prior_noise = match direction.target() {
        Domain::X => &noise.x,
        Domain::Y => &noise.y,
    };
    let prior: Matrix<f32> = model
        .translate_batch(&sources, direction, ExclusiveSource::Prior(prior_noise))?
        .cast();
    let output = match mode {
        TranslationMode::Prior => prior.clone(),
        TranslationMode::Guided => model
            .translate_batch(&sources, direction, ExclusiveSource::Guided(&tgt.cast()))?
            .cast(),
    };
    let has_target = tgt.cols() == output.cols() && tgt.rows() == output.rows();
    let (m, pm) = if has_target {
        (mse(&output, tgt), mse(&prior, tgt))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(Translation {
        summary: TranslationSummary {
            direction,
            mode,
            rows: ds.len(),
            mse: m,
            prior_mse: pm,
        },
        output,
    })
}

/// Wraps a single-domain matrix for the IIPD writer (`y` has zero columns).
pub fn single_domain(output: Matrix<f32>, provenance: serde_json::Value) -> Result<PairedDataset> {
    let n = output.rows();
    let mut ds = PairedDataset::new(output, Matrix::zeros(n, 0))?;
    ds.provenance = provenance;
    Ok(ds)
}

#[cfg(test)]
mod tests;
