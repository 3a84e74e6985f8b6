use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use iiae::data::{gen_synthetic, load_dataset, save_dataset, split, ClassPairer, GenSpec, PairedDataset, SplitMode};
use iiae::evaltasks::{
    embed, probe, retrieve_with, single_domain, translate_batch, Code, HitRule, Metric, ProbeTarget, Representation,
    RetrievalReport, Targets, TranslationMode,
};
use iiae::model::{load_checkpoint, save_checkpoint, CheckpointMeta, Direction, Domain};
use iiae::trainer::{eval_pass, train, EpochSource, TrainConfig};
use iiae::verify::{bounds_suite, gradient_suite, kl_suite, mi_identity_suite, Check};
use iiae::{ArchConfig, IIAEModel, LossBreakdown, Objective};

use crate::output::{emit_json, emit_lines, with_header, Header};
use crate::{
    AblateArgs, ArchArg, CheckCommand, Command, DirectionArg, DomainArg, EvalCommand, Failure, GenDataArgs, HitArg,
    MetricArg, ModeArg, OptimArgs, PairingArg, ProbeArgs, ProbeTargetArg, RepArg, RetrieveArgs, SplitArg, TrainArgs,
    TranslateArgs,
};

type Outcome = Result<(), Failure>;

pub fn dispatch(command: Command, argv: &[String]) -> Outcome {
    match command {
        Command::GenData(a) => gen_data(a, argv),
        Command::Train(a) => train_cmd(a, argv),
        Command::Eval(EvalCommand::Retrieve(a)) => eval_retrieve(a, argv),
        Command::Eval(EvalCommand::Probe(a)) => eval_probe(a, argv),
        Command::Translate(a) => translate(a, argv),
        Command::Ablate(a) => ablate(a, argv),
        Command::Check(c) => check(c),
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

fn metric(m: MetricArg) -> Metric {
    match m {
        MetricArg::Euclidean => Metric::Euclidean,
        MetricArg::Cosine => Metric::Cosine,
    }
}

fn representation(r: RepArg) -> Representation {
    match r {
        RepArg::Shared => Representation::Shared,
        RepArg::ExclusiveX => Representation::ExclusiveX,
        RepArg::ExclusiveY => Representation::ExclusiveY,
    }
}

fn hit_rule(h: HitArg) -> HitRule {
    match h {
        HitArg::Pair => HitRule::Pair,
        HitArg::Class => HitRule::Class,
    }
}

fn check_fraction(f: f64) -> Outcome {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("test fraction must be in (0, 1), got {f}")))
    }
}

fn gen_data(a: GenDataArgs, argv: &[String]) -> Outcome {
    let spec = GenSpec {
        n: a.n,
        classes: a.classes,
        x_dim: a.x_dim,
        y_dim: a.y_dim,
        excl_x_dim: a.excl_x_dim,
        excl_y_dim: a.excl_y_dim,
        embed_dim: a.embed_dim,
        depth: a.depth,
        hidden: a.hidden,
        noise_std: a.noise,
        seed: a.seed,
    };
    spec.validate()?;
    if a.test_out.is_some() {
        check_fraction(a.test_fraction)?;
    }
    let mut ds = gen_synthetic(&spec)?;
    let header = Header::new(argv, serde_json::to_value(&spec).map_err(iiae::Error::from)?, json!({ "data": a.seed }));
    let tag = |mut d: PairedDataset| {
        d.provenance = json!({ "generator": d.provenance, "header": header.to_value() });
        d
    };
    match &a.test_out {
        None => {
            ds = tag(ds);
            save_dataset(&ds, &a.out)?;
            eprintln!("wrote {} pairs to {}", ds.len(), a.out.display());
        }
        Some(test_path) => {
            let mode = match a.split_mode {
                SplitArg::Rows => SplitMode::Rows,
                SplitArg::ClassDisjoint => SplitMode::ClassDisjoint,
            };
            let (tr, te) = split(&ds, [1.0 - a.test_fraction, a.test_fraction], mode, a.seed)?;
            let (tr, te) = (tag(tr), tag(te));
            save_dataset(&tr, &a.out)?;
            save_dataset(&te, test_path)?;
            eprintln!(
                "wrote {} train pairs to {} and {} test pairs to {}",
                tr.len(),
                a.out.display(),
                te.len(),
                test_path.display()
            );
        }
    }
    Ok(())
}

fn train_config(variant: Objective, o: &OptimArgs) -> Result<TrainConfig, Failure> {
    let mut arch = match o.arch {
        ArchArg::Default => ArchConfig::default(),
        ArchArg::Compact => ArchConfig::compact(),
    };
    if let Some(d) = o.latent_dim {
        arch.zx_dim = d;
        arch.zs_dim = d;
        arch.zy_dim = d;
    }
    let cfg = TrainConfig {
        variant,
        lambda: o.lambda,
        recon_weight: o.recon_weight,
        fixed_var: o.fixed_var,
        learning_rate: o.lr,
        batch_size: o.batch,
        total_steps: o.steps,
        seed: o.seed,
        eval_every: o.eval_every,
        arch,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn source_for(ds: PairedDataset, pairing: PairingArg) -> Result<Box<dyn EpochSource>, Failure> {
    Ok(match pairing {
        PairingArg::Rows => Box::new(ds),
        PairingArg::Class => Box::new(ClassPairer::from_dataset(&ds)?),
        PairingArg::ClassFixed => Box::new(ClassPairer::from_dataset(&ds)?.per_epoch(false)),
    })
}

fn load_model(path: &Path) -> Result<(IIAEModel<f32>, CheckpointMeta), Failure> {
    Ok(load_checkpoint::<f32>(path)?)
}

fn checkpoint_seeds(meta: &CheckpointMeta) -> Value {
    json!({ "checkpoint": meta.seed })
}

fn train_cmd(a: TrainArgs, argv: &[String]) -> Outcome {
    let variant: Objective = a.variant.parse()?;
    let cfg = train_config(variant, &a.optim)?;
    let ds = load_dataset(&a.data)?;
    let eval = a.eval_data.as_deref().map(load_dataset).transpose()?;
    let header = Header::new(
        argv,
        serde_json::to_value(&cfg).map_err(iiae::Error::from)?,
        json!({ "train": cfg.seed, "data": ds.provenance }),
    );
    let mut source = source_for(ds, a.optim.pairing)?;
    let out = train::<f32>(source.as_mut(), eval.as_ref(), &cfg)?;

    let meta = CheckpointMeta {
        config: Some(cfg.clone()),
        step: cfg.total_steps,
        seed: cfg.seed,
        provenance: Some(header.to_value()),
    };
    save_checkpoint(&out.model, &meta, &a.out_ckpt)?;
    if let Some(log) = &a.log {
        let mut lines = vec![json!({ "header": header.to_value() })];
        for r in &out.log {
            lines.push(serde_json::to_value(r).map_err(iiae::Error::from)?);
        }
        emit_lines(log, &lines)?;
    }
    if let Some(last) = out.log.last() {
        eprintln!(
            "trained {variant} for {} steps: final batch loss {:.4}",
            last.step, last.train.total
        );
    }
    Ok(())
}

fn eval_retrieve(a: RetrieveArgs, argv: &[String]) -> Outcome {
    if a.k.is_empty() || a.k.contains(&0) {
        return Err(invalid("--k needs positive cutoffs"));
    }
    let (model, meta) = load_model(&a.ckpt)?;
    let ds = load_dataset(&a.data)?;
    let report = retrieve_with(&model, &ds, representation(a.rep), metric(a.metric), hit_rule(a.hit), &a.k)?;
    let header = Header::new(
        argv,
        json!({ "rep": report.representation, "metric": report.metric, "hit": format!("{:?}", a.hit).to_lowercase(), "k": a.k }),
        checkpoint_seeds(&meta),
    );
    emit_json(a.out.as_deref(), &with_header(&header, &report)?)?;
    Ok(())
}

fn eval_probe(a: ProbeArgs, argv: &[String]) -> Outcome {
    let (model, meta) = load_model(&a.ckpt)?;
    let ds = load_dataset(&a.data)?;
    let rep = representation(a.rep);
    let (domain, code) = match a.rep {
        RepArg::Shared => (
            match a.domain {
                DomainArg::X => Domain::X,
                DomainArg::Y => Domain::Y,
            },
            Code::Shared,
        ),
        RepArg::ExclusiveX => (Domain::X, Code::Exclusive),
        RepArg::ExclusiveY => (Domain::Y, Code::Exclusive),
    };
    let items = match domain {
        Domain::X => &ds.x,
        Domain::Y => &ds.y,
    };
    let emb = embed(&model, items, domain, code)?;
    let missing = |what: &str| invalid(format!("dataset has no {what} targets"));
    let (target, targets) = match a.target {
        ProbeTargetArg::Class => (ProbeTarget::SharedClass, Targets::Class(ds.labels()?)),
        ProbeTargetArg::ExclX => (
            ProbeTarget::ExclX,
            Targets::Continuous(ds.excl_x.as_ref().ok_or_else(|| missing("excl_x"))?),
        ),
        ProbeTargetArg::ExclY => (
            ProbeTarget::ExclY,
            Targets::Continuous(ds.excl_y.as_ref().ok_or_else(|| missing("excl_y"))?),
        ),
    };
    let report = probe(&emb, targets, target, rep, a.seed)?;
    let header = Header::new(
        argv,
        json!({ "rep": rep, "target": target, "domain": format!("{:?}", domain).to_lowercase() }),
        json!({ "probe": a.seed, "checkpoint": meta.seed }),
    );
    emit_json(a.out.as_deref(), &with_header(&header, &report)?)?;
    Ok(())
}

fn translate(a: TranslateArgs, argv: &[String]) -> Outcome {
    let (model, meta) = load_model(&a.ckpt)?;
    let ds = load_dataset(&a.data)?;
    let direction = match a.direction {
        DirectionArg::X2y => Direction::XToY,
        DirectionArg::Y2x => Direction::YToX,
    };
    let mode = match a.mode {
        ModeArg::Prior => TranslationMode::Prior,
        ModeArg::Guided => TranslationMode::Guided,
    };
    let t = translate_batch(&model, &ds, direction, mode, a.seed)?;
    let header = Header::new(
        argv,
        json!({ "direction": direction, "mode": mode }),
        json!({ "translate": a.seed, "checkpoint": meta.seed }),
    );
    let out = single_domain(t.output, json!({ "header": header.to_value(), "summary": t.summary }))?;
    save_dataset(&out, &a.out)?;
    emit_json(a.summary.as_deref(), &with_header(&header, &t.summary)?)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct AblationRow {
    variant: Objective,
    shared: RetrievalReport,
    exclusive_x_recall_at_1: Option<f64>,
    exclusive_y_recall_at_1: Option<f64>,
    test_loss: LossBreakdown,
    final_train_loss: f64,
}

#[derive(Debug, Serialize)]
struct AblationTable {
    rows: Vec<AblationRow>,
}

/// Ablation variants first, then full IIAE and plain ELBO.
const ABLATION_ORDER: [Objective; 6] = [
    Objective::Ii,
    Objective::IiMi,
    Objective::ElboPlusIi,
    Objective::ElboPlusIiMi,
    Objective::Iiae,
    Objective::Elbo,
];

fn ablate(a: AblateArgs, argv: &[String]) -> Outcome {
    let base = train_config(Objective::Iiae, &a.optim)?;
    if a.test_data.is_none() {
        check_fraction(a.test_fraction)?;
    }
    let ds = load_dataset(&a.data)?;
    let (train_set, test) = match &a.test_data {
        Some(p) => (ds, load_dataset(p)?),
        None => split(&ds, [1.0 - a.test_fraction, a.test_fraction], SplitMode::Rows, base.seed)?,
    };
    let rule = if test.shared_class.is_some() { HitRule::Class } else { HitRule::Pair };
    let ks = [1, 5, 10];
    let mut rows = Vec::new();
    for variant in ABLATION_ORDER {
        let cfg = TrainConfig { variant, ..base.clone() };
        let mut source = source_for(train_set.clone(), a.optim.pairing)?;
        let out = train::<f32>(source.as_mut(), None, &cfg)?;
        let shared = retrieve_with(&out.model, &test, Representation::Shared, metric(a.metric), rule, &ks)?;
        let excl = |rep| {
            retrieve_with(&out.model, &test, rep, metric(a.metric), rule, &[1])
                .ok()
                .map(|r| r.recall_at[&1])
        };
        let row = AblationRow {
            variant,
            exclusive_x_recall_at_1: excl(Representation::ExclusiveX),
            exclusive_y_recall_at_1: excl(Representation::ExclusiveY),
            test_loss: eval_pass(&out.model, &test, variant, &cfg.loss_params(), cfg.seed)?,
            final_train_loss: out.log.last().map_or(f64::NAN, |r| r.train.total),
            shared,
        };
        eprintln!("{variant}: shared R@1 {:.3}", row.shared.recall_at[&1]);
        rows.push(row);
    }
    let header = Header::new(
        argv,
        serde_json::to_value(&base).map_err(iiae::Error::from)?,
        json!({ "train": base.seed, "data": train_set.provenance }),
    );
    emit_json(a.out.as_deref(), &with_header(&header, &AblationTable { rows })?)?;
    Ok(())
}

fn report_checks(suite: &str, checks: Vec<Check>, json: bool) -> Outcome {
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} ({:.3e})", c.name, c.value))
        .collect();
    let passed = checks.len() - failed.len();
    if json {
        let v = json!({ "suite": suite, "passed": passed, "total": checks.len(), "checks": checks });
        println!("{}", serde_json::to_string_pretty(&v).map_err(iiae::Error::from)?);
    } else {
        for c in &checks {
            println!("{} {:<48} {:.3e}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.value);
        }
        println!("{suite}: {passed}/{} passed", checks.len());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failed))
    }
}

fn check(c: CheckCommand) -> Outcome {
    match c {
        CheckCommand::Grads { seeds, json } => {
            if seeds == 0 {
                return Err(invalid("--seeds must be positive"));
            }
            let seeds: Vec<u64> = (0..seeds).collect();
            report_checks("grads", gradient_suite(&seeds)?, json)
        }
        CheckCommand::Kl {
            pairs,
            samples,
            seed,
            json,
        } => {
            if pairs == 0 || samples < 2 {
                return Err(invalid("--pairs must be positive and --samples at least 2"));
            }
            report_checks("kl", kl_suite(pairs, samples, seed), json)
        }
        CheckCommand::MiIdentity { systems, seed, json } => {
            if systems == 0 {
                return Err(invalid("--systems must be positive"));
            }
            report_checks("mi-identity", mi_identity_suite(systems, seed)?, json)
        }
        CheckCommand::Bounds {
            systems,
            samples,
            seed,
            json,
        } => {
            if systems == 0 || samples < 2 {
                return Err(invalid("--systems must be positive and --samples at least 2"));
            }
            report_checks("bounds", bounds_suite(systems, samples, seed)?, json)
        }
    }
}
