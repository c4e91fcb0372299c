use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{class_members, LabeledDataset, SplitPlan};
use crate::error::{Error, Result};
use crate::jobs::run_jobs;
use crate::mia::{attack_scores, AttackModel};
use crate::nn::Checkpoint;
use crate::redaction::{redact_point, RedactionConfig, RedactionOutcome, RedactionRequest};
use crate::seed::{self, derive};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub mean_score: f64,
    pub mean_accuracy: f64,
    /// Failed redactions count as `max_steps`.
    pub mean_steps: f64,
    pub failures: usize,
    pub outcomes: Vec<RedactionOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub points: Vec<usize>,
    pub max_steps: usize,
    pub rows: Vec<SweepRow>,
}

/// Draws `per_class` members of every class whose initial score is
/// non-negative, in class order.
pub fn select_positive_points(
    dataset: &LabeledDataset,
    plan: &SplitPlan,
    target: &Checkpoint,
    attack: &AttackModel,
    per_class: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut points = Vec::with_capacity(per_class * dataset.class_count);
    let mut deficits = Vec::new();
    for class in 0..dataset.class_count {
        let members = class_members(dataset, plan, class)?;
        let scores = attack_scores(attack, target, dataset, &members)?;
        let mut positive: Vec<usize> = members
            .into_iter()
            .zip(scores)
            .filter(|(_, s)| s.is_in())
            .map(|(r, _)| r)
            .collect();
        if positive.len() < per_class {
            deficits.push((class, per_class - positive.len()));
            continue;
        }
        positive.shuffle(&mut seed::rng(derive(seed, "select", class as u64)));
        positive.truncate(per_class);
        positive.sort_unstable();
        points.extend(positive);
    }
    if deficits.is_empty() {
        Ok(points)
    } else {
        Err(Error::InsufficientQualifyingPoints { deficits })
    }
}

/// Redacts every selected point from `target` once per `k`, always
/// starting from `target`. Request seeds depend only on `seed` and the
/// record, so every `k` sees the same poison label per point.
#[allow(clippy::too_many_arguments)]
pub fn sweep_batch_size(
    dataset: &LabeledDataset,
    plan: &SplitPlan,
    target: &Checkpoint,
    attack: &AttackModel,
    k_values: &[usize],
    points_per_class: usize,
    seed: u64,
    base: &RedactionConfig,
    workers: usize,
) -> Result<SweepTable> {
    let points = select_positive_points(dataset, plan, target, attack, points_per_class, seed)?;
    let requests = points
        .iter()
        .map(|&r| RedactionRequest::for_record(dataset, r, derive(seed, "sweep-request", r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let cfg = RedactionConfig { k, ..base.clone() };
        let outcomes = run_jobs(workers, requests.clone(), |request| {
            Ok(redact_point(target, dataset, plan, &request, attack, &cfg)?.1)
        })?;
        let n = outcomes.len().max(1) as f64;
        rows.push(SweepRow {
            k,
            mean_score: outcomes.iter().map(|o| o.final_score.value()).sum::<f64>() / n,
            mean_accuracy: outcomes.iter().map(|o| o.post_accuracy).sum::<f64>() / n,
            mean_steps: outcomes
                .iter()
                .map(|o| if o.success { o.steps_used } else { cfg.max_steps } as f64)
                .sum::<f64>()
                / n,
            failures: outcomes.iter().filter(|o| !o.success).count(),
            outcomes,
        });
    }
    Ok(SweepTable {
        points,
        max_steps: base.max_steps,
        rows,
    })
}

impl SweepTable {
    pub fn row(&self, k: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per `k`: mean score, mean held-out accuracy, mean steps. A
    /// row where every redaction failed shows steps as `N/A (<max>)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,mean_mi_score,mean_accuracy,mean_steps\n");
        for row in &self.rows {
            let steps = if row.failures == row.outcomes.len() && !row.outcomes.is_empty() {
                format!("N/A ({:.1})", row.mean_steps)
            } else {
                format!("{:.3}", row.mean_steps)
            };
            let _ = writeln!(out, "{},{:.4},{:.4},{steps}", row.k, row.mean_score, row.mean_accuracy);
        }
        out
    }
}
