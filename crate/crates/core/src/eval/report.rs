use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, SplitPlan};
use crate::error::{Error, Result};
use crate::mia::{AttackModel, MiScore, Verdict};
use crate::nn::{predict, Checkpoint};

/// The models standing behind one victim name.
pub enum VictimModels<'a> {
    /// One checkpoint for every point.
    Shared {
        checkpoint: &'a Checkpoint,
        plan: &'a SplitPlan,
    },
    /// One checkpoint and ground-truth plan per evaluated point, in point
    /// order.
    PerPoint(Vec<(&'a Checkpoint, &'a SplitPlan)>),
}

pub struct Victim<'a> {
    pub name: String,
    pub models: VictimModels<'a>,
}

/// Tukey boxplot of per-point scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    /// `(record, value)` beyond 1.5 IQR of the quartiles.
    pub outliers: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VictimSummary {
    pub points: usize,
    pub majority_in: usize,
    pub majority_correct: usize,
    pub unanimous_in: usize,
    pub unanimous_out: usize,
    /// Points on which every attack agrees with the ground truth.
    pub all_correct: usize,
    /// Boxplot of each point's mean score across attacks.
    pub mean_score_boxplot: Option<BoxplotStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VictimReport {
    pub name: String,
    /// Membership of each point in the victim's training set.
    pub ground_truth: Vec<bool>,
    /// `scores[point][attack]`.
    pub scores: Vec<Vec<MiScore>>,
    pub majority: Vec<Verdict>,
    pub all_correct: Vec<bool>,
    pub summary: VictimSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub attack_count: usize,
    pub points: Vec<usize>,
    pub victims: Vec<VictimReport>,
}

/// "In" iff strictly more than half of the scores are non-negative.
pub fn majority_verdict(scores: &[MiScore]) -> Verdict {
    let votes = scores.iter().filter(|s| s.is_in()).count();
    if 2 * votes > scores.len() {
        Verdict::In
    } else {
        Verdict::Out
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Tukey boxplot of `(record, value)` pairs; `None` when empty.
pub fn boxplot(values: &[(usize, f64)]) -> Option<BoxplotStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = values.iter().map(|&(_, v)| v).collect();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || sorted.iter().copied().filter(|&v| v >= lo_fence && v <= hi_fence);
    Some(BoxplotStats {
        median: quantile(&sorted, 0.5),
        q1,
        q3,
        lower_whisker: inside().fold(f64::INFINITY, f64::min),
        upper_whisker: inside().fold(f64::NEG_INFINITY, f64::max),
        outliers: values
            .iter()
            .copied()
            .filter(|&(_, v)| v < lo_fence || v > hi_fence)
            .collect(),
    })
}

fn victim_report(name: String, points: &[usize], ground_truth: Vec<bool>, scores: Vec<Vec<MiScore>>) -> VictimReport {
    let majority: Vec<Verdict> = scores.iter().map(|s| majority_verdict(s)).collect();
    let all_correct: Vec<bool> = scores
        .iter()
        .zip(&ground_truth)
        .map(|(s, &truth)| s.iter().all(|x| x.is_in() == truth))
        .collect();
    let means: Vec<(usize, f64)> = points
        .iter()
        .zip(&scores)
        .map(|(&r, s)| (r, s.iter().map(|x| x.value()).sum::<f64>() / s.len() as f64))
        .collect();
    let summary = VictimSummary {
        points: points.len(),
        majority_in: majority.iter().filter(|&&v| v == Verdict::In).count(),
        majority_correct: majority
            .iter()
            .zip(&ground_truth)
            .filter(|(&v, &t)| (v == Verdict::In) == t)
            .count(),
        unanimous_in: scores.iter().filter(|s| s.iter().all(|x| x.is_in())).count(),
        unanimous_out: scores.iter().filter(|s| s.iter().all(|x| !x.is_in())).count(),
        all_correct: all_correct.iter().filter(|&&c| c).count(),
        mean_score_boxplot: boxplot(&means),
    };
    VictimReport {
        name,
        ground_truth,
        scores,
        majority,
        all_correct,
        summary,
    }
}

/// Scores every point against every victim with every attack.
pub fn evaluate(
    victims: &[Victim<'_>],
    points: &[usize],
    ensemble: &[AttackModel],
    dataset: &LabeledDataset,
) -> Result<EvaluationReport> {
    if ensemble.is_empty() {
        return Err(Error::InvalidConfig("evaluation needs at least one attack model".into()));
    }
    if let Some(a) = ensemble.iter().find(|a| a.class_count() != dataset.class_count) {
        return Err(Error::ShapeMismatch {
            context: "attack model classes vs dataset classes".into(),
            expected: vec![dataset.class_count],
            found: vec![a.class_count()],
        });
    }
    if let Some(&record) = points.iter().find(|&&r| r >= dataset.len()) {
        return Err(Error::RecordOutOfRange {
            record,
            len: dataset.len(),
        });
    }
    let mut reports = Vec::with_capacity(victims.len());
    for victim in victims {
        let (ground_truth, confidences) = match &victim.models {
            VictimModels::Shared { checkpoint, plan } => {
                let truth = points
                    .iter()
                    .map(|&r| ground_truth(plan, &victim.name, r))
                    .collect::<Result<Vec<bool>>>()?;
                (truth, predict(checkpoint, dataset, points)?)
            }
            VictimModels::PerPoint(models) => {
                if models.len() != points.len() {
                    return Err(Error::ShapeMismatch {
                        context: format!("per-point models for victim {}", victim.name),
                        expected: vec![points.len()],
                        found: vec![models.len()],
                    });
                }
                let mut truth = Vec::with_capacity(points.len());
                let mut confidences = Vec::with_capacity(points.len());
                for (&r, (checkpoint, plan)) in points.iter().zip(models) {
                    truth.push(ground_truth(plan, &victim.name, r)?);
                    confidences.extend(predict(checkpoint, dataset, &[r])?);
                }
                (truth, confidences)
            }
        };
        let scores = points
            .iter()
            .zip(&confidences)
            .map(|(&r, c)| ensemble.iter().map(|a| a.score_confidence(dataset.labels[r], c)).collect())
            .collect();
        reports.push(victim_report(victim.name.clone(), points, ground_truth, scores));
    }
    Ok(EvaluationReport {
        attack_count: ensemble.len(),
        points: points.to_vec(),
        victims: reports,
    })
}

fn ground_truth(plan: &SplitPlan, victim: &str, record: usize) -> Result<bool> {
    plan.membership(record).ok_or_else(|| Error::UnknownGroundTruth {
        victim: victim.to_string(),
        record,
    })
}

impl EvaluationReport {
    pub fn victim(&self, name: &str) -> Option<&VictimReport> {
        self.victims.iter().find(|v| v.name == name)
    }

    /// Whether stored verdicts and flags match those recomputed from the
    /// score matrix.
    pub fn is_consistent(&self) -> bool {
        self.victims.iter().all(|v| {
            let fresh = victim_report(v.name.clone(), &self.points, v.ground_truth.clone(), v.scores.clone());
            fresh == *v
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per (victim, point).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("victim,record,member,mean_score,in_votes,attacks,majority,all_correct\n");
        for v in &self.victims {
            for (i, &record) in self.points.iter().enumerate() {
                let s = &v.scores[i];
                let mean = s.iter().map(|x| x.value()).sum::<f64>() / s.len() as f64;
                let votes = s.iter().filter(|x| x.is_in()).count();
                let _ = writeln!(
                    out,
                    "{},{record},{},{mean},{votes},{},{},{}",
                    v.name,
                    v.ground_truth[i],
                    s.len(),
                    v.majority[i],
                    v.all_correct[i]
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(values: &[f64]) -> Vec<MiScore> {
        values.iter().map(|&v| MiScore(v)).collect()
    }

    #[test]
    fn majority_needs_strictly_more_than_half() {
        assert_eq!(majority_verdict(&scores(&[1.0, -1.0])), Verdict::Out);
        assert_eq!(majority_verdict(&scores(&[0.0, 0.0, -1.0])), Verdict::In);
        assert_eq!(majority_verdict(&scores(&[])), Verdict::Out);
    }

    #[test]
    fn boxplot_matches_hand_computed_quartiles() {
        // 1..=9 plus an outlier at 100: sorted positions 0..9.
        let mut values: Vec<(usize, f64)> = (1..=9).map(|i| (i, i as f64)).collect();
        values.push((10, 100.0));
        let b = boxplot(&values).unwrap();
        // q1 at position 2.25 -> 3.25; median at 4.5 -> 5.5; q3 at 6.75 -> 7.75.
        assert!((b.q1 - 3.25).abs() < 1e-12);
        assert!((b.median - 5.5).abs() < 1e-12);
        assert!((b.q3 - 7.75).abs() < 1e-12);
        assert_eq!(b.outliers, vec![(10, 100.0)]);
        assert_eq!((b.lower_whisker, b.upper_whisker), (1.0, 9.0));
        assert!(boxplot(&[]).is_none());
        let one = boxplot(&[(4, 2.0)]).unwrap();
        assert_eq!((one.q1, one.median, one.q3), (2.0, 2.0, 2.0));
    }

    proptest! {
        #[test]
        fn boxplot_orders_and_partitions(values in prop::collection::vec(-50.0f64..50.0, 1..60)) {
            let pairs: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
            let b = boxplot(&pairs).unwrap();
            prop_assert!(b.q1 <= b.median && b.median <= b.q3);
            prop_assert!(b.lower_whisker <= b.upper_whisker);
            let iqr = b.q3 - b.q1;
            let inside = values.iter().filter(|&&v| v >= b.q1 - 1.5 * iqr && v <= b.q3 + 1.5 * iqr).count();
            prop_assert_eq!(inside + b.outliers.len(), values.len());
        }

        #[test]
        fn summary_counts_agree_with_matrix(matrix in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 0..20),
                                            truth_bits in any::<u64>()) {
            let points: Vec<usize> = (0..matrix.len()).collect();
            let truth: Vec<bool> = (0..matrix.len()).map(|i| truth_bits >> (i % 64) & 1 == 1).collect();
            let s: Vec<Vec<MiScore>> = matrix.iter().map(|row| scores(row)).collect();
            let report = EvaluationReport {
                attack_count: 3,
                points: points.clone(),
                victims: vec![victim_report("v".into(), &points, truth.clone(), s.clone())],
            };
            prop_assert!(report.is_consistent());
            let v = &report.victims[0];
            for (i, row) in s.iter().enumerate() {
                let votes = row.iter().filter(|x| x.is_in()).count();
                prop_assert_eq!(v.majority[i] == Verdict::In, votes >= 2);
                prop_assert_eq!(v.all_correct[i], row.iter().all(|x| x.is_in() == truth[i]));
            }
            prop_assert_eq!(v.summary.unanimous_in + v.summary.unanimous_out <= matrix.len(), true);
            prop_assert_eq!(report.to_csv().lines().count(), matrix.len() + 1);
        }
    }

    #[test]
    fn tampered_verdicts_are_detected() {
        let points = vec![0, 1];
        let mut report = EvaluationReport {
            attack_count: 2,
            points: points.clone(),
            victims: vec![victim_report("v".into(), &points, vec![true, false], vec![scores(&[1.0, 1.0]), scores(&[-1.0, 1.0])])],
        };
        assert!(report.is_consistent());
        report.victims[0].majority[1] = Verdict::In;
        assert!(!report.is_consistent());
    }
}
