//! Shadow-model membership inference.
//!
//! A shadow network is trained on one half of a dataset. Its eval-mode
//! confidence vectors on its own training half are labelled "In", those on
//! the other half "Out", and one L2-regularized logistic regression is fit
//! per true class. Scoring a victim applies the scorer of the record's true
//! class to the victim's confidence vector and returns the log-odds.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{class_members, LabeledDataset, SplitPlan};
use crate::error::{Error, Result};
use crate::nn::{predict, Checkpoint};

/// Gradient-norm tolerance for attack training.
pub const ATTACK_TOLERANCE: f64 = 1e-6;
/// Iteration cap for attack training.
pub const ATTACK_MAX_ITERATIONS: usize = 200_000;
/// Default L2 strength.
pub const DEFAULT_REG_STRENGTH: f64 = 1e-3;

/// One labelled attack example: a shadow confidence vector and whether the
/// record was in the shadow's training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackExample {
    pub record: usize,
    pub confidence: Vec<f64>,
    pub member: bool,
}

/// Attack examples bucketed by the record's true class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackTrainingSet {
    pub per_class: Vec<Vec<AttackExample>>,
    pub shadow_id: String,
    pub split: String,
    pub split_seed: u64,
}

/// Signed membership score (log-odds). Non-negative means "In".
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MiScore(pub f64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    In,
    Out,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::In => "In",
            Verdict::Out => "Out",
        })
    }
}

impl MiScore {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn verdict(self) -> Verdict {
        if self.0 >= 0.0 {
            Verdict::In
        } else {
            Verdict::Out
        }
    }

    pub fn is_in(self) -> bool {
        self.verdict() == Verdict::In
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ClassScorer {
    pub fn decision(&self, confidence: &[f64]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(confidence)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackProvenance {
    pub shadow_checkpoint: String,
    pub split: String,
    pub split_seed: u64,
    pub reg_strength: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    pub per_class: Vec<ClassScorer>,
    pub provenance: AttackProvenance,
}

impl AttackModel {
    pub fn class_count(&self) -> usize {
        self.per_class.len()
    }

    /// Score of a confidence vector for a record of class `class`.
    pub fn score_confidence(&self, class: usize, confidence: &[f64]) -> MiScore {
        MiScore(self.per_class[class].decision(confidence))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: AttackModel = serde_json::from_str(text)?;
        let classes = model.per_class.len();
        if let Some(bad) = model.per_class.iter().position(|s| s.weights.len() != classes) {
            return Err(Error::Serialization(format!(
                "class {bad} scorer has {} weights, expected {classes}",
                model.per_class[bad].weights.len()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub(crate) fn check_provenance(ckpt: &Checkpoint, plan: &SplitPlan) -> Result<()> {
    let p = &ckpt.provenance;
    let matches = p.dataset_id == plan.dataset_id
        && p.split_seed == plan.seed
        && p.split_with_replacement == plan.with_replacement
        && p.split_complemented == plan.complemented
        && p.excluded_records == plan.excluded;
    if matches {
        Ok(())
    } else {
        Err(Error::ProvenanceMismatch {
            checkpoint: format!(
                "{}/seed={}/{}{}{}",
                p.dataset_id,
                p.split_seed,
                if p.split_with_replacement { "with-replacement" } else { "disjoint" },
                if p.split_complemented { "/complement" } else { "" },
                if p.excluded_records.is_empty() {
                    String::new()
                } else {
                    format!("/minus={}", p.excluded_records.len())
                },
            ),
            plan: plan.describe(),
        })
    }
}

/// Labels every record the plan covers with the shadow's eval-mode
/// confidence vector and its membership, bucketed by true class.
pub fn build_attack_training_set(
    shadow: &Checkpoint,
    dataset: &LabeledDataset,
    plan: &SplitPlan,
) -> Result<AttackTrainingSet> {
    check_provenance(shadow, plan)?;
    let members = plan.distinct_members();
    let mut records: Vec<(usize, bool)> = members.iter().map(|&r| (r, true)).collect();
    records.extend(plan.nonmember_indices.iter().map(|&r| (r, false)));
    records.sort_unstable();
    let indices: Vec<usize> = records.iter().map(|&(r, _)| r).collect();
    let confidences = predict(shadow, dataset, &indices)?;
    let mut per_class = vec![Vec::new(); dataset.class_count];
    for ((record, member), confidence) in records.into_iter().zip(confidences) {
        per_class[dataset.labels[record]].push(AttackExample {
            record,
            confidence,
            member,
        });
    }
    Ok(AttackTrainingSet {
        per_class,
        shadow_id: shadow.id(),
        split: plan.describe(),
        split_seed: plan.seed,
    })
}

/// Full-batch gradient descent on mean logistic loss plus
/// `reg / 2 * |w|^2` (bias unpenalized), from zero, with step `1 / L` for the
/// loss's gradient Lipschitz bound `L = max |[x, 1]|^2 / 4 + reg`.
fn fit_logistic(examples: &[AttackExample], dim: usize, reg: f64) -> ClassScorer {
    let n = examples.len() as f64;
    let max_sq = examples
        .iter()
        .map(|e| 1.0 + e.confidence.iter().map(|x| x * x).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / (max_sq / 4.0 + reg);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut grad_w = vec![0.0; dim];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < ATTACK_MAX_ITERATIONS {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for e in examples {
            let z = b + w.iter().zip(&e.confidence).map(|(a, x)| a * x).sum::<f64>();
            let residual = sigmoid(z) - if e.member { 1.0 } else { 0.0 };
            grad_b += residual;
            grad_w
                .iter_mut()
                .zip(&e.confidence)
                .for_each(|(g, x)| *g += residual * x);
        }
        grad_b /= n;
        for (g, wi) in grad_w.iter_mut().zip(&w) {
            *g = *g / n + reg * wi;
        }
        let norm = (grad_b * grad_b + grad_w.iter().map(|g| g * g).sum::<f64>()).sqrt();
        if norm < ATTACK_TOLERANCE {
            converged = true;
            break;
        }
        b -= step * grad_b;
        w.iter_mut().zip(&grad_w).for_each(|(wi, g)| *wi -= step * g);
        iterations += 1;
    }
    ClassScorer {
        weights: w,
        bias: b,
        iterations,
        converged,
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fits one logistic-regression scorer per class. Every class bucket must
/// contain both members and non-members.
pub fn train_attack(set: &AttackTrainingSet, reg_strength: f64, seed: u64) -> Result<AttackModel> {
    if reg_strength.is_nan() || reg_strength < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "regularization strength must be non-negative, got {reg_strength}"
        )));
    }
    let classes = set.per_class.len();
    let mut per_class = Vec::with_capacity(classes);
    for (class, bucket) in set.per_class.iter().enumerate() {
        let members = bucket.iter().filter(|e| e.member).count();
        if members == 0 || members == bucket.len() {
            return Err(Error::SingleLabelBucket {
                class,
                label: if members == 0 { "Out" } else { "In" },
            });
        }
        if let Some(e) = bucket.iter().find(|e| e.confidence.len() != classes) {
            return Err(Error::ShapeMismatch {
                context: format!("attack features for record {}", e.record),
                expected: vec![classes],
                found: vec![e.confidence.len()],
            });
        }
        per_class.push(fit_logistic(bucket, classes, reg_strength));
    }
    Ok(AttackModel {
        per_class,
        provenance: AttackProvenance {
            shadow_checkpoint: set.shadow_id.clone(),
            split: set.split.clone(),
            split_seed: set.split_seed,
            reg_strength,
            seed,
        },
    })
}

/// Score of `record` against `victim`.
pub fn attack_score(
    attack: &AttackModel,
    victim: &Checkpoint,
    dataset: &LabeledDataset,
    record: usize,
) -> Result<MiScore> {
    Ok(attack_scores(attack, victim, dataset, &[record])?[0])
}

/// Scores for many records from one batched forward pass.
pub fn attack_scores(
    attack: &AttackModel,
    victim: &Checkpoint,
    dataset: &LabeledDataset,
    records: &[usize],
) -> Result<Vec<MiScore>> {
    if attack.class_count() != dataset.class_count {
        return Err(Error::ShapeMismatch {
            context: "attack model classes vs dataset classes".into(),
            expected: vec![dataset.class_count],
            found: vec![attack.class_count()],
        });
    }
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let confidences = predict(victim, dataset, records)?;
    Ok(records
        .iter()
        .zip(confidences)
        .map(|(&r, c)| attack.score_confidence(dataset.labels[r], &c))
        .collect())
}

/// Fraction of covered records (distinct members and non-members of `plan`)
/// whose verdict matches membership.
pub fn attack_accuracy(
    attack: &AttackModel,
    victim: &Checkpoint,
    dataset: &LabeledDataset,
    plan: &SplitPlan,
) -> Result<f64> {
    let members = plan.distinct_members();
    let mut records = members.clone();
    records.extend_from_slice(&plan.nonmember_indices);
    let scores = attack_scores(attack, victim, dataset, &records)?;
    let correct = scores
        .iter()
        .enumerate()
        .filter(|(i, s)| s.is_in() == (*i < members.len()))
        .count();
    Ok(correct as f64 / records.len() as f64)
}

/// Per class, member records sorted by descending score (ties by ascending
/// record index), truncated to `top_n`.
pub fn vulnerability_ranking(
    attack: &AttackModel,
    victim: &Checkpoint,
    dataset: &LabeledDataset,
    plan: &SplitPlan,
    top_n: usize,
) -> Result<Vec<Vec<(usize, MiScore)>>> {
    let mut out = Vec::with_capacity(dataset.class_count);
    for class in 0..dataset.class_count {
        let members = class_members(dataset, plan, class)?;
        if top_n > members.len() {
            return Err(Error::InsufficientClassMembers {
                class,
                needed: top_n,
                available: members.len(),
            });
        }
        let scores = attack_scores(attack, victim, dataset, &members)?;
        let mut ranked: Vec<(usize, MiScore)> = members.into_iter().zip(scores).collect();
        ranked.sort_by(|a, b| b.1 .0.total_cmp(&a.1 .0).then(a.0.cmp(&b.0)));
        ranked.truncate(top_n);
        out.push(ranked);
    }
    Ok(out)
}
