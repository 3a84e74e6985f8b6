use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::data::{decode_dataset, encode_dataset};
use crate::model::{ArchConfig, NetId};

fn arch() -> ArchConfig {
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

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn column(v: &[f64]) -> Matrix<f64> {
    Matrix::from_fn(v.len(), 1, |i, _| v[i])
}

#[test]
fn zero_model_embeds_to_zero() {
    let m = IIAEModel::<f64>::zeros(4, 3, &arch()).unwrap();
    let items = Matrix::from_fn(5, 4, |i, j| (i + j) as f32);
    for code in [Code::Shared, Code::Exclusive] {
        let e = embed(&m, &items, Domain::X, code).unwrap();
        assert!(e.as_slice().iter().all(|&v| v == 0.0));
    }
    assert!(embed(&m, &items, Domain::Y, Code::Shared).is_err());
}

#[test]
fn shared_x_embedding_ignores_y_side_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut m = IIAEModel::<f64>::new(4, 3, &arch(), &mut rng).unwrap();
    let items = Matrix::from_fn(6, 4, |_, _| rng.random_range(-1.0f32..1.0));
    let before = embed(&m, &items, Domain::X, Code::Shared).unwrap();
    for id in [NetId::FeY, NetId::HeadQy, NetId::HeadRy, NetId::HeadQs, NetId::DecY] {
        for s in m.net_mut(id).param_slices_mut() {
            s.iter_mut().for_each(|v| *v += 0.3);
        }
    }
    assert_eq!(before, embed(&m, &items, Domain::X, Code::Shared).unwrap());
    assert_eq!(before, embed(&m, &items, Domain::X, Code::Shared).unwrap());
}

#[test]
fn self_retrieval_is_perfect() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let e = random_matrix(&mut rng, 20, 4);
    for metric in [Metric::Euclidean, Metric::Cosine] {
        let r = retrieve(&e, &e, metric, &GroundTruth::Pairs, &[1, 5], Representation::Shared).unwrap();
        assert_eq!(r.recall_at[&1], 1.0);
        assert_eq!(r.map, 1.0);
        assert!(r.first_relevant_rank.iter().all(|&k| k == 1));
    }
}

#[test]
fn hand_enumerated_average_precision() {
    let q = column(&[0.0]);
    let db = column(&[0.0, 1.0, 2.0]);
    let gt = GroundTruth::Explicit(vec![vec![0, 2]]);
    let r = retrieve(&q, &db, Metric::Euclidean, &gt, &[1, 2, 100], Representation::Shared).unwrap();
    assert!((r.map - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    assert_eq!(r.precision_at[&2], 0.5);
    assert_eq!(r.precision_at[&1], 1.0);
    // K beyond the database truncates at its size
    assert!((r.precision_at[&100] - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(r.first_relevant_rank, vec![1]);
}

#[test]
fn ties_break_by_index_and_bad_truth_is_rejected() {
    let q = column(&[0.0]);
    let db = column(&[1.0, -1.0, 1.0]);
    assert_eq!(rank(q.row(0), &db, Metric::Euclidean), vec![0, 1, 2]);
    let gt = GroundTruth::Explicit(vec![vec![]]);
    assert!(matches!(
        retrieve(&q, &db, Metric::Euclidean, &gt, &[1], Representation::Shared),
        Err(Error::Empty(_))
    ));
    let wide = Matrix::<f64>::zeros(1, 2);
    assert!(retrieve(&wide, &db, Metric::Euclidean, &GroundTruth::Pairs, &[1], Representation::Shared).is_err());
}

#[test]
fn class_ground_truth_and_chance() {
    let q = column(&[0.0, 10.0]);
    let db = column(&[0.1, 9.0, 10.5, -0.2]);
    let gt = GroundTruth::ByClass {
        queries: vec![0, 1],
        database: vec![0, 1, 1, 0],
    };
    let r = retrieve(&q, &db, Metric::Euclidean, &gt, &[1, 2], Representation::Shared).unwrap();
    assert_eq!(r.recall_at[&1], 1.0);
    assert_eq!(r.precision_at[&2], 1.0);
    assert_eq!(r.map, 1.0);
    assert_eq!(r.chance_recall_at_1, 0.5);
}

#[test]
fn reordering_database_with_relabelled_truth_keeps_report() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = random_matrix(&mut rng, 15, 3);
    let db = random_matrix(&mut rng, 15, 3);
    let base = retrieve(&q, &db, Metric::Euclidean, &GroundTruth::Pairs, &[1, 3, 10], Representation::Shared).unwrap();
    let perm: Vec<usize> = (0..15).rev().collect();
    let db2 = db.select_rows(&perm);
    let gt2 = GroundTruth::Explicit((0..15).map(|i| vec![perm.iter().position(|&p| p == i).unwrap()]).collect());
    let r = retrieve(&q, &db2, Metric::Euclidean, &gt2, &[1, 3, 10], Representation::Shared).unwrap();
    assert_eq!(base, r);
}

#[test]
fn probe_recovers_a_linear_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let e = random_matrix(&mut rng, 200, 3);
    let t = Matrix::from_fn(200, 1, |i, _| e.get(i, 1) as f32);
    let r = probe(&e, Targets::Continuous(&t), ProbeTarget::ExclX, Representation::ExclusiveX, 0).unwrap();
    assert!(r.score >= 0.999, "{r:?}");
    let unrelated = Matrix::from_fn(200, 1, |_, _| rng.sample::<f64, _>(StandardNormal) as f32);
    let r = probe(&e, Targets::Continuous(&unrelated), ProbeTarget::ExclX, Representation::ExclusiveX, 0).unwrap();
    assert!(r.score < 0.1, "{r:?}");
}

#[test]
fn class_probe_separates_clusters_and_is_chance_on_shuffled_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 400;
    let labels: Vec<u32> = (0..n).map(|i| (i % 4) as u32).collect();
    let centers = random_matrix(&mut rng, 4, 3);
    let e = Matrix::from_fn(n, 3, |i, j| 3.0 * centers.get(labels[i] as usize, j) + 0.3 * rng.sample::<f64, _>(StandardNormal));
    let r = probe(&e, Targets::Class(&labels), ProbeTarget::SharedClass, Representation::Shared, 1).unwrap();
    assert!(r.score > 0.95, "{r:?}");

    let noise = random_matrix(&mut rng, n, 3);
    let r = probe(&noise, Targets::Class(&labels), ProbeTarget::SharedClass, Representation::Shared, 1).unwrap();
    let se = (0.25f64 * 0.75 / n as f64).sqrt();
    assert!((r.score - 0.25).abs() < 4.0 * se, "{r:?}");

    let one = vec![0u32; n];
    assert!(probe(&e, Targets::Class(&one), ProbeTarget::SharedClass, Representation::Shared, 1).is_err());
}

#[test]
fn translation_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = IIAEModel::<f64>::new(4, 3, &arch(), &mut rng).unwrap();
    let ds = PairedDataset::new(
        Matrix::from_fn(8, 4, |_, _| rng.random_range(-1.0f32..1.0)),
        Matrix::from_fn(8, 3, |_, _| rng.random_range(-1.0f32..1.0)),
    )
    .unwrap();
    let a = translate_batch(&m, &ds, Direction::XToY, TranslationMode::Prior, 7).unwrap();
    let b = translate_batch(&m, &ds, Direction::XToY, TranslationMode::Prior, 7).unwrap();
    assert_eq!(a.output, b.output);
    assert_eq!(a.output.cols(), 3);
    let g = translate_batch(&m, &ds, Direction::YToX, TranslationMode::Guided, 7).unwrap();
    assert_eq!(g.output.cols(), 4);
    assert!(g.summary.mse.is_finite());

    let out = single_domain(g.output.clone(), serde_json::json!({"direction": "y2x"})).unwrap();
    let back = decode_dataset(&encode_dataset(&out).unwrap()).unwrap();
    assert_eq!(back.x, g.output);
    assert_eq!(back.y.cols(), 0);

    let lone = single_domain(ds.x.clone(), serde_json::Value::Null).unwrap();
    assert!(translate_batch(&m, &lone, Direction::XToY, TranslationMode::Guided, 0).is_err());
}

#[test]
fn exclusive_retrieval_needs_matching_widths() {
    let a = ArchConfig { zy_dim: 3, ..arch() };
    let m = IIAEModel::<f64>::zeros(4, 3, &a).unwrap();
    let ds = PairedDataset::new(Matrix::zeros(4, 4), Matrix::zeros(4, 3)).unwrap();
    assert!(retrieve_with(&m, &ds, Representation::ExclusiveX, Metric::Euclidean, HitRule::Pair, &[1]).is_err());
    assert!(retrieve_with(&m, &ds, Representation::Shared, Metric::Euclidean, HitRule::Pair, &[1]).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn recall_is_monotone_and_bounded(seed in any::<u64>(), nq in 1usize..12, ndb in 12usize..20, classes in 2u32..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_matrix(&mut rng, nq, 3);
        let db = random_matrix(&mut rng, ndb, 3);
        let gt = GroundTruth::ByClass {
            queries: (0..nq as u32).map(|i| i % classes).collect(),
            database: (0..ndb as u32).map(|i| i % classes).collect(),
        };
        let ks = [1, 2, 5, 10, 50];
        let r = retrieve(&q, &db, Metric::Cosine, &gt, &ks, Representation::Shared).unwrap();
        let rec: Vec<f64> = ks.iter().map(|k| r.recall_at[k]).collect();
        prop_assert!(rec.windows(2).all(|w| w[0] <= w[1]));
        for v in rec.iter().chain(r.precision_at.values()).chain([&r.map]) {
            prop_assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn cosine_ignores_positive_row_scaling(seed in any::<u64>(), scales in prop::collection::vec(0.01f64..100.0, 10)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_matrix(&mut rng, 10, 4);
        let db = random_matrix(&mut rng, 10, 4);
        let scaled = Matrix::from_fn(10, 4, |i, j| db.get(i, j) * scales[i]);
        for i in 0..10 {
            prop_assert_eq!(rank(q.row(i), &db, Metric::Cosine), rank(q.row(i), &scaled, Metric::Cosine));
        }
    }

    #[test]
    fn euclidean_ranking_survives_rotation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 4;
        let q = random_matrix(&mut rng, 6, d);
        let db = random_matrix(&mut rng, 12, d);
        let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let rot = g.qr().q();
        let apply = |m: &Matrix<f64>| Matrix::from_fn(m.rows(), d, |i, j| (0..d).map(|k| m.get(i, k) * rot[(k, j)]).sum::<f64>());
        let (q2, db2) = (apply(&q), apply(&db));
        for i in 0..6 {
            // rotation perturbs distances by rounding only; compare rankings
            prop_assert_eq!(rank(q.row(i), &db, Metric::Euclidean), rank(q2.row(i), &db2, Metric::Euclidean));
        }
    }
}
