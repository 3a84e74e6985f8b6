use iiae::data::{gen_synthetic, load_dataset, save_dataset, split, ClassPairer, GenSpec, SplitMode};
use iiae::evaltasks::{exclusive_ablation, translate_batch, HitRule, Metric, TranslationMode};
use iiae::model::{load_checkpoint, save_checkpoint, CheckpointMeta, Direction};
use iiae::trainer::{eval_pass, train};
use iiae::{ArchConfig, Objective, TrainConfig};

fn small_spec(seed: u64) -> GenSpec {
    GenSpec {
        n: 1200,
        seed,
        ..GenSpec::default()
    }
}

#[test]
fn files_train_and_evaluate_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_synthetic(&small_spec(5)).unwrap();
    let (tr, te) = split(&ds, [0.8, 0.2], SplitMode::Rows, 5).unwrap();
    let (tr_path, te_path) = (dir.path().join("tr.iipd"), dir.path().join("te.iipd"));
    save_dataset(&tr, &tr_path).unwrap();
    save_dataset(&te, &te_path).unwrap();
    let mut tr = load_dataset(&tr_path).unwrap();
    let te = load_dataset(&te_path).unwrap();
    assert_eq!(tr.split.as_deref(), Some("train"));

    let cfg = TrainConfig {
        total_steps: 1500,
        eval_every: 500,
        seed: 5,
        arch: ArchConfig::compact(),
        ..TrainConfig::default()
    };
    let out = train::<f32>(&mut tr, Some(&te), &cfg).unwrap();
    let first = out.log.first().unwrap();
    let last = out.log.last().unwrap();
    assert!(last.eval.unwrap().total < first.eval.unwrap().total);

    let ckpt = dir.path().join("m.ckpt");
    let meta = CheckpointMeta {
        config: Some(cfg.clone()),
        step: cfg.total_steps,
        seed: cfg.seed,
        provenance: Some(tr.provenance.clone()),
    };
    save_checkpoint(&out.model, &meta, &ckpt).unwrap();
    let (model, back) = load_checkpoint::<f32>(&ckpt).unwrap();
    assert_eq!(back, meta);

    let params = cfg.loss_params();
    let a = eval_pass(&out.model, &te, Objective::Iiae, &params, 1).unwrap();
    let b = eval_pass(&model, &te, Objective::Iiae, &params, 1).unwrap();
    assert_eq!(a.total.to_bits(), b.total.to_bits());

    // Short run: shared codes should already beat their exclusive counterparts.
    let ab = exclusive_ablation(&model, &te, Metric::Euclidean, HitRule::Class, &[1, 10]).unwrap();
    assert!(ab.shared.map > ab.exclusive_x.map, "{} vs {}", ab.shared.map, ab.exclusive_x.map);

    let guided = translate_batch(&model, &te, Direction::XToY, TranslationMode::Guided, 0).unwrap();
    assert_eq!(guided.output.rows(), te.len());
    assert!(guided.summary.mse < guided.summary.prior_mse);
}

#[test]
fn class_pairing_trains_from_unaligned_items() {
    let ds = gen_synthetic(&small_spec(6)).unwrap();
    let mut pairer = ClassPairer::from_dataset(&ds).unwrap();
    let cfg = TrainConfig {
        total_steps: 40,
        eval_every: 20,
        seed: 6,
        arch: ArchConfig::compact(),
        ..TrainConfig::default()
    };
    let a = train::<f32>(&mut pairer, None, &cfg).unwrap();
    let b = train::<f32>(&mut ClassPairer::from_dataset(&ds).unwrap(), None, &cfg).unwrap();
    assert_eq!(a.model.to_flat(), b.model.to_flat());
    assert!(a.log.iter().all(|r| r.train.total.is_finite()));
}
