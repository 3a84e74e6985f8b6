use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffmath::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Shared,
    ExclusiveX,
    ExclusiveY,
}

/// Which database items count as hits for each query.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    /// Query `i` matches database item `i` only.
    Pairs,
    /// Every database item with the query's label.
    ByClass { queries: Vec<u32>, database: Vec<u32> },
    Explicit(Vec<Vec<usize>>),
}

impl GroundTruth {
    fn relevance(&self, q: usize, db: usize) -> Result<Vec<bool>> {
        let mut rel = vec![false; db];
        match self {
            GroundTruth::Pairs => {
                if q >= db {
                    return Err(Error::InvalidArgument(format!("query {q} has no paired database item")));
                }
                rel[q] = true;
            }
            GroundTruth::ByClass { queries, database } => {
                let c = queries[q];
                for (r, &d) in rel.iter_mut().zip(database) {
                    *r = d == c;
                }
            }
            GroundTruth::Explicit(sets) => {
                for &i in &sets[q] {
                    if i >= db {
                        return Err(Error::InvalidArgument(format!("relevant index {i} out of range")));
                    }
                    rel[i] = true;
                }
            }
        }
        if !rel.iter().any(|&r| r) {
            return Err(Error::Empty(format!("query {q} has no relevant database item")));
        }
        Ok(rel)
    }

    fn check(&self, nq: usize, ndb: usize) -> Result<()> {
        match self {
            GroundTruth::Pairs => Ok(()),
            GroundTruth::ByClass { queries, database } => {
                if queries.len() != nq {
                    return Err(Error::dim("query labels", nq, queries.len()));
                }
                if database.len() != ndb {
                    return Err(Error::dim("database labels", ndb, database.len()));
                }
                Ok(())
            }
            GroundTruth::Explicit(sets) => {
                if sets.len() != nq {
                    return Err(Error::dim("relevance sets", nq, sets.len()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub metric: Metric,
    pub representation: Representation,
    pub recall_at: BTreeMap<usize, f64>,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub precision_at: BTreeMap<usize, f64>,
    /// 1-based rank of the first relevant item, per query.
    pub first_relevant_rank: Vec<usize>,
    /// Expected Recall@1 of a random ranking.
    pub chance_recall_at_1: f64,
}

/// Database indices sorted by distance to `q`, ties by index.
pub fn rank<T: Scalar>(q: &[T], db: &Matrix<T>, metric: Metric) -> Vec<usize> {
    let score: Vec<f64> = match metric {
        Metric::Euclidean => db
            .iter_rows()
            .map(|r| r.iter().zip(q).map(|(&a, &b)| (a - b).as_f64().powi(2)).sum())
            .collect(),
        Metric::Cosine => {
            let qn = q.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
            db.iter_rows()
                .map(|r| {
                    let dot: f64 = r.iter().zip(q).map(|(&a, &b)| a.as_f64() * b.as_f64()).sum();
                    let rn = r.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
                    let denom = qn * rn;
                    if denom > 0.0 {
                        -dot / denom
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    let mut idx: Vec<usize> = (0..db.rows()).collect();
    idx.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
    idx
}

struct QueryStats {
    first: usize,
    ap: f64,
    hits_at: Vec<usize>,
    relevant: usize,
}

fn query_stats(order: &[usize], rel: &[bool], ks: &[usize]) -> QueryStats {
    let mut hits = 0;
    let mut ap = 0.0;
    let mut first = 0;
    let mut hits_at = vec![0; ks.len()];
    for (pos, &i) in order.iter().enumerate() {
        if rel[i] {
            hits += 1;
            ap += hits as f64 / (pos + 1) as f64;
            if first == 0 {
                first = pos + 1;
            }
        }
        for (h, &k) in hits_at.iter_mut().zip(ks) {
            if pos + 1 == k.min(order.len()) {
                *h = hits;
            }
        }
    }
    QueryStats {
        first,
        ap: ap / hits as f64,
        hits_at,
        relevant: hits,
    }
}

/// Exhaustive retrieval of each query row against the database rows.
pub fn retrieve<T: Scalar>(
    queries: &Matrix<T>,
    database: &Matrix<T>,
    metric: Metric,
    truth: &GroundTruth,
    ks: &[usize],
    representation: Representation,
) -> Result<RetrievalReport> {
    if queries.cols() != database.cols() {
        return Err(Error::dim("embedding width", queries.cols(), database.cols()));
    }
    if queries.rows() == 0 || database.rows() == 0 {
        return Err(Error::Empty("retrieval needs queries and a database".into()));
    }
    if ks.contains(&0) {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    truth.check(queries.rows(), database.rows())?;
    let stats: Vec<QueryStats> = (0..queries.rows())
        .into_par_iter()
        .map(|q| {
            let rel = truth.relevance(q, database.rows())?;
            Ok(query_stats(&rank(queries.row(q), database, metric), &rel, ks))
        })
        .collect::<Result<_>>()?;
    let nq = stats.len() as f64;
    let ndb = database.rows();
    let mut recall_at = BTreeMap::new();
    let mut precision_at = BTreeMap::new();
    for (j, &k) in ks.iter().enumerate() {
        let recall = stats.iter().filter(|s| s.hits_at[j] > 0).count() as f64 / nq;
        let precision = stats.iter().map(|s| s.hits_at[j] as f64 / k.min(ndb) as f64).sum::<f64>() / nq;
        recall_at.insert(k, recall);
        precision_at.insert(k, precision);
    }
    Ok(RetrievalReport {
        metric,
        representation,
        recall_at,
        map: stats.iter().map(|s| s.ap).sum::<f64>() / nq,
        precision_at,
        first_relevant_rank: stats.iter().map(|s| s.first).collect(),
        chance_recall_at_1: stats.iter().map(|s| s.relevant as f64 / ndb as f64).sum::<f64>() / nq,
    })
}
