//! Label-poisoned incremental retraining.
//!
//! Redacting a record starts from the deployed checkpoint and repeatedly
//! takes one Adam step on a small batch: the record under a fixed wrong
//! label plus `k` correctly labelled members of its true class. After every
//! step the membership attack rescores the record; redaction stops once the
//! score falls below the threshold or the step budget runs out.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{class_members, LabeledDataset, SplitPlan};
use crate::error::{Error, Result};
use crate::mia::{attack_score, attack_scores, AttackModel, MiScore};
use crate::nn::{accuracy, run_epochs, train_step, AdamConfig, AdamState, Checkpoint, TensorBuffer, TrainHistory};
use crate::seed;

/// Rounds of re-redaction attempted after recovery training.
pub const RECOVERY_ROUNDS: usize = 25;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionRequest {
    pub record_index: usize,
    pub true_label: usize,
    pub request_seed: u64,
}

impl RedactionRequest {
    /// Request for `record` with its label looked up in `dataset`.
    pub fn for_record(dataset: &LabeledDataset, record: usize, request_seed: u64) -> Result<Self> {
        Ok(Self {
            record_index: record,
            true_label: dataset.label(record)?,
            request_seed,
        })
    }

    pub fn validate(&self, dataset: &LabeledDataset, plan: &SplitPlan) -> Result<()> {
        let label = dataset.label(self.record_index)?;
        if label != self.true_label {
            return Err(Error::InvalidConfig(format!(
                "record {} has label {label}, request says {}",
                self.record_index, self.true_label
            )));
        }
        if !plan.is_member(self.record_index) {
            return Err(Error::NotAMember {
                record: self.record_index,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RedactionConfig {
    /// Correctly labelled same-class records per poison batch.
    pub k: usize,
    pub max_steps: usize,
    pub stop_threshold: f64,
    pub optimizer: AdamConfig,
}

impl Default for RedactionConfig {
    fn default() -> Self {
        Self {
            k: 10,
            max_steps: 25,
            stop_threshold: 0.0,
            optimizer: AdamConfig::default(),
        }
    }
}

impl RedactionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        if !self.stop_threshold.is_finite() {
            return Err(Error::InvalidConfig("stop_threshold must be finite".into()));
        }
        self.optimizer.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedactionOutcome {
    pub record_index: usize,
    pub true_label: usize,
    pub request_seed: u64,
    pub k: usize,
    pub poison_label: usize,
    /// Label given to the redaction record at every step.
    pub step_poison_labels: Vec<usize>,
    pub steps_used: usize,
    /// Score before the first step, then after every step.
    pub score_trace: Vec<MiScore>,
    pub final_score: MiScore,
    /// Held-out accuracy before redaction.
    pub pre_accuracy: f64,
    /// Held-out accuracy after redaction.
    pub post_accuracy: f64,
    pub success: bool,
}

/// A uniformly random class other than `true_label`.
pub fn choose_poison_label(true_label: usize, class_count: usize, seed: u64) -> Result<usize> {
    if class_count < 2 {
        return Err(Error::InvalidConfig(format!(
            "poisoning needs at least two classes, got {class_count}"
        )));
    }
    if true_label >= class_count {
        return Err(Error::InvalidLabel {
            label: true_label,
            class_count,
        });
    }
    let draw = seed::rng(seed).random_range(0..class_count - 1);
    Ok(if draw >= true_label { draw + 1 } else { draw })
}

/// The redaction record labelled `poison_label` followed by `k` distinct
/// members of its true class with their true labels, drawn with `step_seed`.
pub fn build_poison_batch(
    dataset: &LabeledDataset,
    plan: &SplitPlan,
    request: &RedactionRequest,
    poison_label: usize,
    k: usize,
    step_seed: u64,
) -> Result<(TensorBuffer, Vec<usize>)> {
    build_poison_batch_excluding(dataset, plan, request, poison_label, k, step_seed, &[])
}

/// [`build_poison_batch`] that also never draws any record in `exclude`
/// (for instance, records redacted earlier).
pub fn build_poison_batch_excluding(
    dataset: &LabeledDataset,
    plan: &SplitPlan,
    request: &RedactionRequest,
    poison_label: usize,
    k: usize,
    step_seed: u64,
    exclude: &[usize],
) -> Result<(TensorBuffer, Vec<usize>)> {
    request.validate(dataset, plan)?;
    if poison_label >= dataset.class_count || poison_label == request.true_label {
        return Err(Error::InvalidConfig(format!(
            "poison label {poison_label} must be a class other than {}",
            request.true_label
        )));
    }
    let pool: Vec<usize> = class_members(dataset, plan, request.true_label)?
        .into_iter()
        .filter(|&r| r != request.record_index && !exclude.contains(&r))
        .collect();
    if pool.len() < k {
        return Err(Error::InsufficientClassMembers {
            class: request.true_label,
            needed: k,
            available: pool.len(),
        });
    }
    let mut records = vec![request.record_index];
    records.extend(pool.choose_multiple(&mut seed::rng(step_seed), k));
    let (images, mut labels) = dataset.gather(&records)?;
    labels[0] = poison_label;
    Ok((images, labels))
}

fn poison_seed(request_seed: u64) -> u64 {
    seed::derive(request_seed, "poison", 0)
}

fn step_seed(request_seed: u64, step: usize) -> u64 {
    seed::derive(request_seed, "step", step as u64)
}

/// Redacts one record from `ckpt`.
///
/// An already-negative record returns an unchanged copy of `ckpt`. Otherwise
/// the result is a child checkpoint even when the step budget ran out;
/// failure shows up as `success == false`.
pub fn redact_point(
    ckpt: &Checkpoint,
    dataset: &LabeledDataset,
    plan: &SplitPlan,
    request: &RedactionRequest,
    attack: &AttackModel,
    cfg: &RedactionConfig,
) -> Result<(Checkpoint, RedactionOutcome)> {
    redact_excluding(ckpt, dataset, plan, request, attack, cfg, &[])
}

fn redact_excluding(
    ckpt: &Checkpoint,
    dataset: &LabeledDataset,
    plan: &SplitPlan,
    request: &RedactionRequest,
    attack: &AttackModel,
    cfg: &RedactionConfig,
    exclude: &[usize],
) -> Result<(Checkpoint, RedactionOutcome)> {
    cfg.validate()?;
    request.validate(dataset, plan)?;
    let poison_label = choose_poison_label(request.true_label, dataset.class_count, poison_seed(request.request_seed))?;
    let pre_accuracy = accuracy(ckpt, dataset, &plan.nonmember_indices)?;
    let mut score = attack_score(attack, ckpt, dataset, request.record_index)?;
    let mut trace = vec![score];
    let mut step_labels = Vec::new();
    let mut current = None;
    let mut state = None;
    let mut steps = 0;
    while score.value() >= cfg.stop_threshold && steps < cfg.max_steps {
        let (images, labels) = build_poison_batch_excluding(
            dataset,
            plan,
            request,
            poison_label,
            cfg.k,
            step_seed(request.request_seed, steps),
            exclude,
        )?;
        let model = current.get_or_insert_with(|| {
            ckpt.child(format!(
                "redact record={} poison={} k={} seed={}",
                request.record_index, poison_label, cfg.k, request.request_seed
            ))
        });
        step_labels.push(labels[0]);
        let adam = state.get_or_insert_with(|| AdamState::new(&model.params));
        train_step(model, &images, &labels, adam, &cfg.optimizer)?;
        steps += 1;
        score = attack_score(attack, model, dataset, request.record_index)?;
        trace.push(score);
    }
    let out = current.unwrap_or_else(|| ckpt.clone());
    let post_accuracy = if steps == 0 {
        pre_accuracy
    } else {
        accuracy(&out, dataset, &plan.nonmember_indices)?
    };
    let outcome = RedactionOutcome {
        record_index: request.record_index,
        true_label: request.true_label,
        request_seed: request.request_seed,
        k: cfg.k,
        poison_label,
        step_poison_labels: step_labels,
        steps_used: steps,
        score_trace: trace,
        final_score: score,
        pre_accuracy,
        post_accuracy,
        success: score.value() < cfg.stop_threshold,
    };
    Ok((out, outcome))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueReport {
    /// Held-out accuracy before the queue, then after every redaction.
    pub accuracy_trace: Vec<f64>,
    /// Score of every queued record under the final checkpoint.
    pub final_scores: Vec<(usize, MiScore)>,
    /// Queued records whose final score is at or above the threshold.
    pub still_in: Vec<usize>,
}

/// Redacts `queue` in order, each request starting from the previous result.
/// Records already redacted are never drawn as true points.
pub fn sequential_redact(
    ckpt: &Checkpoint,
    dataset: &LabeledDataset,
    plan: &SplitPlan,
    queue: &[RedactionRequest],
    attack: &AttackModel,
    cfg: &RedactionConfig,
) -> Result<(Checkpoint, Vec<RedactionOutcome>, QueueReport)> {
    cfg.validate()?;
    for request in queue {
        request.validate(dataset, plan)?;
    }
    let mut current = ckpt.clone();
    let mut outcomes = Vec::with_capacity(queue.len());
    let mut accuracy_trace = vec![accuracy(&current, dataset, &plan.nonmember_indices)?];
    let mut done: Vec<usize> = Vec::with_capacity(queue.len());
    for request in queue {
        let (next, outcome) = redact_excluding(&current, dataset, plan, request, attack, cfg, &done)?;
        accuracy_trace.push(outcome.post_accuracy);
        outcomes.push(outcome);
        done.push(request.record_index);
        current = next;
    }
    let records: Vec<usize> = queue.iter().map(|r| r.record_index).collect();
    let scores = attack_scores(attack, &current, dataset, &records)?;
    let still_in = records
        .iter()
        .zip(&scores)
        .filter(|(_, s)| s.value() >= cfg.stop_threshold)
        .map(|(&r, _)| r)
        .collect();
    let report = QueueReport {
        accuracy_trace,
        final_scores: records.into_iter().zip(scores).collect(),
        still_in,
    };
    Ok((current, outcomes, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub epochs: usize,
    pub accuracy_before: f64,
    /// Held-out accuracy right after the recovery epochs.
    pub accuracy_trained: f64,
    /// Held-out accuracy after any re-redaction.
    pub accuracy_after: f64,
    /// Redacted records that scored at or above the threshold after training.
    pub flipped: Vec<usize>,
    pub re_redactions: Vec<RedactionOutcome>,
    /// Redacted records still at or above the threshold at the end.
    pub still_in: Vec<usize>,
    pub history: TrainHistory,
}

/// Trains `epochs` more epochs on the members of `plan` minus the redacted
/// records, then re-redacts any redacted record the attack detects again.
///
/// Training uses the checkpoint's own batch size and optimizer with a fresh
/// Adam state; the shuffle seed derives from the checkpoint's train config.
pub fn recover_accuracy(
    ckpt: &Checkpoint,
    dataset: &LabeledDataset,
    plan: &SplitPlan,
    epochs: usize,
    redacted: &[RedactionRequest],
    attack: &AttackModel,
    cfg: &RedactionConfig,
) -> Result<(Checkpoint, RecoveryReport)> {
    cfg.validate()?;
    for request in redacted {
        request.validate(dataset, plan)?;
    }
    let heldout = &plan.nonmember_indices;
    let accuracy_before = accuracy(ckpt, dataset, heldout)?;
    let excluded: Vec<usize> = redacted.iter().map(|r| r.record_index).collect();
    let mut history = TrainHistory::default();
    if epochs == 0 {
        let report = RecoveryReport {
            epochs,
            accuracy_before,
            accuracy_trained: accuracy_before,
            accuracy_after: accuracy_before,
            flipped: Vec::new(),
            re_redactions: Vec::new(),
            still_in: Vec::new(),
            history,
        };
        return Ok((ckpt.clone(), report));
    }
    let remaining = plan.without(&excluded)?;
    let mut current = ckpt.child(format!("recover epochs={epochs} excluded={}", excluded.len()));
    let batch = current.train_config.batch_size.min(remaining.member_indices.len());
    let shuffle = seed::derive(current.train_config.shuffle_seed, "recover", excluded.len() as u64);
    run_epochs(
        &mut current,
        dataset,
        &remaining.member_indices,
        heldout,
        epochs,
        batch,
        shuffle,
        &mut history,
    )?;
    let accuracy_trained = accuracy(&current, dataset, heldout)?;

    let detected = |model: &Checkpoint| -> Result<Vec<usize>> {
        let scores = attack_scores(attack, model, dataset, &excluded)?;
        Ok(excluded
            .iter()
            .zip(scores)
            .filter(|(_, s)| s.value() >= cfg.stop_threshold)
            .map(|(&r, _)| r)
            .collect())
    };
    let flipped = detected(&current)?;
    let mut still_in = flipped.clone();
    let mut re_redactions = Vec::new();
    for round in 0..RECOVERY_ROUNDS {
        if still_in.is_empty() {
            break;
        }
        for &record in &still_in {
            let original = redacted.iter().find(|r| r.record_index == record).expect("record comes from the redacted list");
            let request = RedactionRequest {
                request_seed: seed::derive(original.request_seed, "recover", round as u64),
                ..original.clone()
            };
            let (next, outcome) = redact_excluding(&current, dataset, plan, &request, attack, cfg, &excluded)?;
            current = next;
            re_redactions.push(outcome);
        }
        still_in = detected(&current)?;
    }
    let report = RecoveryReport {
        epochs,
        accuracy_before,
        accuracy_trained,
        accuracy_after: accuracy(&current, dataset, heldout)?,
        flipped,
        re_redactions,
        still_in,
        history,
    };
    Ok((current, report))
}

/// One JSON object per line.
pub fn outcomes_to_jsonl(outcomes: &[RedactionOutcome]) -> Result<String> {
    let mut out = String::new();
    for outcome in outcomes {
        out.push_str(&serde_json::to_string(outcome)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn outcomes_from_jsonl(text: &str) -> Result<Vec<RedactionOutcome>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, split_half};
    use crate::mia::{build_attack_training_set, train_attack, DEFAULT_REG_STRENGTH};
    use crate::nn::{train, ArchitectureConfig, ConvBlock, TrainConfig};
    use proptest::prelude::*;

    #[test]
    fn two_classes_force_the_other_label() {
        for s in 0..50 {
            assert_eq!(choose_poison_label(0, 2, s).unwrap(), 1);
            assert_eq!(choose_poison_label(1, 2, s).unwrap(), 0);
        }
        assert!(choose_poison_label(0, 1, 0).is_err());
        assert!(choose_poison_label(3, 3, 0).is_err());
    }

    #[test]
    fn poison_label_is_uniform_over_wrong_classes() {
        let mut counts = [0usize; 10];
        let trials = 10_000;
        for s in 0..trials {
            counts[choose_poison_label(4, 10, s).unwrap()] += 1;
        }
        assert_eq!(counts[4], 0);
        for (c, &n) in counts.iter().enumerate().filter(|(c, _)| *c != 4) {
            let freq = n as f64 / trials as f64;
            assert!((freq - 1.0 / 9.0).abs() < 0.01, "class {c}: {freq}");
        }
    }

    proptest! {
        #[test]
        fn poison_label_is_deterministic_and_wrong(true_label in 0usize..7, seed in any::<u64>()) {
            let a = choose_poison_label(true_label, 7, seed).unwrap();
            prop_assert_eq!(a, choose_poison_label(true_label, 7, seed).unwrap());
            prop_assert!(a != true_label && a < 7);
        }
    }

    fn fixture() -> (LabeledDataset, SplitPlan) {
        let ds = make_synthetic(3, 20, (4, 4, 3), 3.0, 9).unwrap();
        let plan = split_half(&ds, 1, false).unwrap();
        (ds, plan)
    }

    #[test]
    fn poison_batch_layout() {
        let (ds, plan) = fixture();
        let record = plan.member_indices[0];
        let request = RedactionRequest::for_record(&ds, record, 5).unwrap();
        let poison = (request.true_label + 1) % 3;
        let (images, labels) = build_poison_batch(&ds, &plan, &request, poison, 0, 1).unwrap();
        assert_eq!(labels, vec![poison]);
        assert_eq!(images.row(0), ds.gather(&[record]).unwrap().0.row(0));

        let members = class_members(&ds, &plan, request.true_label).unwrap();
        let k = members.len() - 1;
        for step in 0..5 {
            let (images, labels) = build_poison_batch(&ds, &plan, &request, poison, k, step).unwrap();
            assert_eq!(images.rows(), k + 1);
            assert_eq!(labels.iter().filter(|&&l| l != request.true_label).count(), 1);
            assert_eq!(labels[0], poison);
            for row in 1..=k {
                assert_ne!(images.row(row), images.row(0), "redaction record drawn as a true point");
            }
        }
        let err = build_poison_batch(&ds, &plan, &request, poison, k + 1, 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientClassMembers { .. }), "{err}");
        assert!(build_poison_batch(&ds, &plan, &request, request.true_label, 1, 0).is_err());
    }

    #[test]
    fn excluded_records_are_never_drawn() {
        let (ds, plan) = fixture();
        let record = plan.member_indices[0];
        let request = RedactionRequest::for_record(&ds, record, 5).unwrap();
        let members = class_members(&ds, &plan, request.true_label).unwrap();
        let others: Vec<usize> = members.iter().copied().filter(|&r| r != record).collect();
        let (kept, dropped) = others.split_at(2);
        let poison = (request.true_label + 1) % 3;
        let (images, _) = build_poison_batch_excluding(&ds, &plan, &request, poison, 2, 3, dropped).unwrap();
        let expected = ds.gather(kept).unwrap().0;
        let mut rows: Vec<&[f64]> = (1..3).map(|i| images.row(i)).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<&[f64]> = (0..2).map(|i| expected.row(i)).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rows, want);
    }

    #[test]
    fn requests_outside_the_plan_are_rejected() {
        let (ds, plan) = fixture();
        let outsider = plan.nonmember_indices[0];
        let request = RedactionRequest::for_record(&ds, outsider, 0).unwrap();
        assert!(matches!(request.validate(&ds, &plan), Err(Error::NotAMember { .. })));
        let mut wrong = RedactionRequest::for_record(&ds, plan.member_indices[0], 0).unwrap();
        wrong.true_label = (wrong.true_label + 1) % 3;
        assert!(wrong.validate(&ds, &plan).is_err());
        assert!(RedactionRequest::for_record(&ds, ds.len(), 0).is_err());
    }

    struct Trained {
        ds: LabeledDataset,
        plan: SplitPlan,
        target: Checkpoint,
        attack: AttackModel,
    }

    fn trained() -> Trained {
        let ds = make_synthetic(3, 40, (4, 4, 3), 2.0, 11).unwrap();
        let arch = ArchitectureConfig {
            input_shape: (4, 4, 3),
            conv_blocks: vec![ConvBlock::pair(4, 4)],
            dense_width: 16,
            class_count: 3,
        };
        let cfg = TrainConfig {
            batch_size: 16,
            epochs: 8,
            ..TrainConfig::default()
        };
        let shadow_plan = split_half(&ds, 21, false).unwrap();
        let (shadow, _) = train(&arch, &ds, &shadow_plan, &cfg).unwrap();
        let set = build_attack_training_set(&shadow, &ds, &shadow_plan).unwrap();
        let attack = train_attack(&set, DEFAULT_REG_STRENGTH, 0).unwrap();
        let plan = split_half(&ds, 22, false).unwrap();
        let (target, _) = train(&arch, &ds, &plan, &cfg).unwrap();
        Trained { ds, plan, target, attack }
    }

    #[test]
    fn redaction_contract() {
        let t = trained();
        let scores = attack_scores(&t.attack, &t.target, &t.ds, &t.plan.distinct_members()).unwrap();
        let members = t.plan.distinct_members();
        let pos = members.iter().zip(&scores).find(|(_, s)| s.value() >= 0.0).map(|(&r, _)| r);
        let neg = members.iter().zip(&scores).find(|(_, s)| s.value() < 0.0).map(|(&r, _)| r);

        if let Some(record) = neg {
            let request = RedactionRequest::for_record(&t.ds, record, 1).unwrap();
            let (out, outcome) = redact_point(&t.target, &t.ds, &t.plan, &request, &t.attack, &RedactionConfig::default()).unwrap();
            assert_eq!(out, t.target);
            assert_eq!(outcome.steps_used, 0);
            assert_eq!(outcome.score_trace.len(), 1);
            assert!(outcome.success);
        }

        let record = pos.expect("some member scores positive");
        let request = RedactionRequest::for_record(&t.ds, record, 2).unwrap();
        for k in [0, 3] {
            let cfg = RedactionConfig {
                k,
                max_steps: 6,
                ..RedactionConfig::default()
            };
            let before = t.target.encode();
            let (out, outcome) = redact_point(&t.target, &t.ds, &t.plan, &request, &t.attack, &cfg).unwrap();
            assert_eq!(t.target.encode(), before);
            assert!(outcome.steps_used >= 1 && outcome.steps_used <= 6);
            assert_eq!(outcome.score_trace.len(), outcome.steps_used + 1);
            assert_eq!(outcome.success, outcome.final_score.value() < 0.0);
            assert_eq!(*outcome.score_trace.last().unwrap(), outcome.final_score);
            assert_eq!(outcome.final_score, attack_score(&t.attack, &out, &t.ds, record).unwrap());
            assert_eq!(outcome.poison_label, choose_poison_label(request.true_label, 3, poison_seed(2)).unwrap());
            assert_eq!(outcome.step_poison_labels, vec![outcome.poison_label; outcome.steps_used]);
            assert!(out.descends_from(&t.target.id()));
            assert_eq!(out.provenance.parent, Some(t.target.id()));
            if !outcome.success {
                assert_eq!(outcome.steps_used, 6);
            }
            let again = redact_point(&t.target, &t.ds, &t.plan, &request, &t.attack, &cfg).unwrap();
            assert_eq!(again.0.encode(), out.encode());
            assert_eq!(again.1, outcome);
        }
    }

    #[test]
    fn queue_of_one_matches_single_redaction() {
        let t = trained();
        let request = RedactionRequest::for_record(&t.ds, t.plan.member_indices[3], 4).unwrap();
        let cfg = RedactionConfig {
            k: 2,
            max_steps: 4,
            ..RedactionConfig::default()
        };
        let single = redact_point(&t.target, &t.ds, &t.plan, &request, &t.attack, &cfg).unwrap();
        let (ckpt, outcomes, report) =
            sequential_redact(&t.target, &t.ds, &t.plan, std::slice::from_ref(&request), &t.attack, &cfg).unwrap();
        assert_eq!(ckpt.encode(), single.0.encode());
        assert_eq!(outcomes, vec![single.1.clone()]);
        assert_eq!(report.accuracy_trace.len(), 2);
        assert_eq!(report.final_scores, vec![(request.record_index, single.1.final_score)]);
        assert_eq!(report.still_in.is_empty(), single.1.success);
    }

    #[test]
    fn zero_recovery_epochs_is_identity() {
        let t = trained();
        let request = RedactionRequest::for_record(&t.ds, t.plan.member_indices[0], 4).unwrap();
        let (out, report) =
            recover_accuracy(&t.target, &t.ds, &t.plan, 0, &[request], &t.attack, &RedactionConfig::default()).unwrap();
        assert_eq!(out, t.target);
        assert!(report.flipped.is_empty() && report.re_redactions.is_empty());
        assert_eq!(report.accuracy_before, report.accuracy_after);
    }

    #[test]
    fn recovery_leaves_no_detected_records() {
        let t = trained();
        let cfg = RedactionConfig {
            k: 3,
            ..RedactionConfig::default()
        };
        let queue: Vec<RedactionRequest> = t.plan.distinct_members()[..3]
            .iter()
            .enumerate()
            .map(|(i, &r)| RedactionRequest::for_record(&t.ds, r, i as u64).unwrap())
            .collect();
        let (redacted, _, _) = sequential_redact(&t.target, &t.ds, &t.plan, &queue, &t.attack, &cfg).unwrap();
        let (out, report) = recover_accuracy(&redacted, &t.ds, &t.plan, 1, &queue, &t.attack, &cfg).unwrap();
        assert_eq!(report.history.epochs.len(), 2);
        assert!(out.descends_from(&redacted.id()));
        assert_eq!(report.flipped.is_empty(), report.re_redactions.is_empty());
        assert!(report.still_in.iter().all(|r| report.flipped.contains(r)));
        let scores = attack_scores(&t.attack, &out, &t.ds, &[queue[0].record_index, queue[1].record_index, queue[2].record_index]).unwrap();
        let detected: Vec<usize> = queue.iter().zip(scores).filter(|(_, s)| s.is_in()).map(|(q, _)| q.record_index).collect();
        assert_eq!(detected, report.still_in);
    }

    #[test]
    fn outcomes_round_trip_through_jsonl() {
        let outcome = RedactionOutcome {
            record_index: 3,
            true_label: 1,
            request_seed: 99,
            k: 10,
            poison_label: 2,
            step_poison_labels: vec![2],
            steps_used: 1,
            score_trace: vec![MiScore(0.25), MiScore(-0.125)],
            final_score: MiScore(-0.125),
            pre_accuracy: 0.5,
            post_accuracy: 0.75,
            success: true,
        };
        let text = outcomes_to_jsonl(&[outcome.clone(), outcome.clone()]).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(outcomes_from_jsonl(&text).unwrap(), vec![outcome.clone(), outcome]);
    }
}
