use unlearn::data::{make_synthetic, split_half, LabeledDataset, SplitPlan};
use unlearn::eval::{
    evaluate, select_positive_points, sweep_batch_size, timing_compare, train_attack_ensemble, EnsembleConfig,
    Victim, VictimModels,
};
use unlearn::mia::{attack_scores, build_attack_training_set, train_attack, AttackModel, DEFAULT_REG_STRENGTH};
use unlearn::nn::{train, ArchitectureConfig, Checkpoint, ConvBlock, TrainConfig};
use unlearn::redaction::{redact_point, RedactionConfig, RedactionRequest};
use unlearn::seed::derive;
use unlearn::Error;

struct Small {
    ds: LabeledDataset,
    arch: ArchitectureConfig,
    cfg: TrainConfig,
    plan: SplitPlan,
    target: Checkpoint,
    shadow: Checkpoint,
    shadow_plan: SplitPlan,
    attack: AttackModel,
}

fn small() -> Small {
    let ds = make_synthetic(3, 60, (4, 4, 3), 2.0, 17).unwrap();
    let arch = ArchitectureConfig {
        input_shape: (4, 4, 3),
        conv_blocks: vec![ConvBlock::pair(4, 4)],
        dense_width: 16,
        class_count: 3,
    };
    let cfg = TrainConfig {
        batch_size: 16,
        epochs: 25,
        ..TrainConfig::default()
    };
    let shadow_plan = split_half(&ds, 1, false).unwrap();
    let (shadow, _) = train(&arch, &ds, &shadow_plan, &cfg).unwrap();
    let attack = train_attack(&build_attack_training_set(&shadow, &ds, &shadow_plan).unwrap(), DEFAULT_REG_STRENGTH, 0).unwrap();
    let plan = split_half(&ds, 2, true).unwrap();
    let (target, _) = train(&arch, &ds, &plan, &TrainConfig { init_seed: 5, shuffle_seed: 6, ..cfg.clone() }).unwrap();
    Small {
        ds,
        arch,
        cfg,
        plan,
        target,
        shadow,
        shadow_plan,
        attack,
    }
}

#[test]
fn self_attack_separates_its_own_members() {
    let s = small();
    let members = s.shadow_plan.distinct_members();
    let mut points = members.clone();
    points.extend_from_slice(&s.shadow_plan.nonmember_indices);
    let victims = [Victim {
        name: "shadow".into(),
        models: VictimModels::Shared {
            checkpoint: &s.shadow,
            plan: &s.shadow_plan,
        },
    }];
    let report = evaluate(&victims, &points, std::slice::from_ref(&s.attack), &s.ds).unwrap();
    let v = &report.victims[0];
    let mean = |want: bool| {
        let rows: Vec<f64> = v.scores.iter().zip(&v.ground_truth).filter(|(_, &t)| t == want).map(|(row, _)| row[0].value()).collect();
        rows.iter().sum::<f64>() / rows.len() as f64
    };
    assert!(mean(true) > mean(false), "members {} vs non-members {}", mean(true), mean(false));
    assert!(report.is_consistent());
    assert_eq!(v.ground_truth.iter().filter(|&&t| t).count(), members.len());
}

#[test]
fn evaluate_rejects_bad_inputs_and_handles_empty_points() {
    let s = small();
    let shared = |plan| Victim {
        name: "target".into(),
        models: VictimModels::Shared {
            checkpoint: &s.target,
            plan,
        },
    };
    let empty = evaluate(&[shared(&s.plan)], &[], std::slice::from_ref(&s.attack), &s.ds).unwrap();
    assert_eq!(empty.victims[0].scores.len(), 0);
    assert_eq!(empty.victims[0].summary.points, 0);
    assert!(empty.victims[0].summary.mean_score_boxplot.is_none());

    let err = evaluate(&[shared(&s.plan)], &[0], &[], &s.ds).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)));

    let mut partial = s.plan.clone();
    let hidden = partial.nonmember_indices.remove(0);
    let err = evaluate(&[shared(&partial)], &[hidden], std::slice::from_ref(&s.attack), &s.ds).unwrap_err();
    assert!(matches!(err, Error::UnknownGroundTruth { record, .. } if record == hidden));

    let per_point = Victim {
        name: "redact".into(),
        models: VictimModels::PerPoint(vec![(&s.target, &s.plan)]),
    };
    assert!(evaluate(&[per_point], &[0, 1], std::slice::from_ref(&s.attack), &s.ds).is_err());
}

#[test]
fn single_k_single_point_sweep_is_one_redaction() {
    let s = small();
    let cfg = RedactionConfig {
        k: 3,
        max_steps: 5,
        ..RedactionConfig::default()
    };
    let points = select_positive_points(&s.ds, &s.plan, &s.target, &s.attack, 1, 9).unwrap();
    let table = sweep_batch_size(&s.ds, &s.plan, &s.target, &s.attack, &[3], 1, 9, &cfg, 1).unwrap();
    assert_eq!(table.points, points);
    let row = table.row(3).unwrap();
    assert_eq!(row.outcomes.len(), 3);
    for (outcome, &record) in row.outcomes.iter().zip(&points) {
        let request = RedactionRequest::for_record(&s.ds, record, derive(9, "sweep-request", record as u64)).unwrap();
        let (_, single) = redact_point(&s.target, &s.ds, &s.plan, &request, &s.attack, &cfg).unwrap();
        assert_eq!(*outcome, single);
    }
    let mean = row.outcomes.iter().map(|o| o.final_score.value()).sum::<f64>() / 3.0;
    assert!((row.mean_score - mean).abs() < 1e-12);
}

#[test]
fn sweep_table_layout_and_determinism() {
    let s = small();
    let cfg = RedactionConfig {
        max_steps: 4,
        ..RedactionConfig::default()
    };
    let ks = [0, 1, 5, 10];
    let a = sweep_batch_size(&s.ds, &s.plan, &s.target, &s.attack, &ks, 2, 3, &cfg, 1).unwrap();
    let b = sweep_batch_size(&s.ds, &s.plan, &s.target, &s.attack, &ks, 2, 3, &cfg, 2).unwrap();
    assert_eq!(a, b);
    let csv = a.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0], "k,mean_mi_score,mean_accuracy,mean_steps");
    for (line, k) in lines[1..].iter().zip(ks) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[0], k.to_string());
    }
    for row in &a.rows {
        for o in &row.outcomes {
            assert!(o.success || o.steps_used == 4);
        }
    }
}

#[test]
fn sweep_reports_per_class_deficit() {
    let s = small();
    let err = sweep_batch_size(&s.ds, &s.plan, &s.target, &s.attack, &[1], 10_000, 0, &RedactionConfig::default(), 1).unwrap_err();
    match err {
        Error::InsufficientQualifyingPoints { deficits } => {
            assert_eq!(deficits.len(), 3);
            assert!(deficits.iter().all(|&(_, missing)| missing > 9_000));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn timing_requires_points_and_reports_both_methods() {
    let s = small();
    let cfg = RedactionConfig {
        k: 2,
        ..RedactionConfig::default()
    };
    assert!(timing_compare(&s.ds, &s.plan, &s.arch, &s.cfg, &s.target, &s.attack, &[], &cfg, 0).is_err());
    let members = s.plan.distinct_members();
    let scores = attack_scores(&s.attack, &s.target, &s.ds, &members).unwrap();
    let point = members.iter().zip(&scores).find(|(_, s)| s.is_in()).map(|(&r, _)| r).unwrap();
    let report = timing_compare(&s.ds, &s.plan, &s.arch, &s.cfg, &s.target, &s.attack, &[point], &cfg, 0).unwrap();
    assert_eq!(report.remove_seconds.len(), 1);
    assert_eq!(report.redact_seconds.len(), 1);
    assert!(report.mean_remove_seconds > 0.0 && report.mean_redact_seconds > 0.0);
    let csv = report.to_csv();
    assert!(csv.lines().nth(1).unwrap().starts_with("Remove,"));
    assert!(csv.lines().nth(2).unwrap().starts_with("Redact,"));
}

#[test]
fn ensemble_evaluation_is_deterministic() {
    let s = small();
    let cfg = EnsembleConfig {
        split_count: 2,
        base_seed: 4,
        ..EnsembleConfig::default()
    };
    let ensemble: Vec<AttackModel> = train_attack_ensemble(&s.ds, &s.arch, &s.cfg, &cfg, 2)
        .unwrap()
        .into_iter()
        .map(|m| m.attack)
        .collect();
    assert_eq!(ensemble.len(), 4);
    let points = s.plan.distinct_members()[..10].to_vec();
    let run = || {
        let victims = [Victim {
            name: "target".into(),
            models: VictimModels::Shared {
                checkpoint: &s.target,
                plan: &s.plan,
            },
        }];
        evaluate(&victims, &points, &ensemble, &s.ds).unwrap().to_json().unwrap()
    };
    assert_eq!(run(), run());
}
