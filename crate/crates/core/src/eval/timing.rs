use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ensemble::train_remove_model;
use crate::data::{LabeledDataset, SplitPlan};
use crate::error::{Error, Result};
use crate::mia::AttackModel;
use crate::nn::{ArchitectureConfig, Checkpoint, TrainConfig};
use crate::redaction::{redact_point, RedactionConfig, RedactionRequest};
use crate::seed::derive;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub hardware: String,
    pub points: Vec<usize>,
    pub remove_seconds: Vec<f64>,
    pub redact_seconds: Vec<f64>,
    pub redact_success: Vec<bool>,
    pub mean_remove_seconds: f64,
    pub mean_redact_seconds: f64,
}

/// Architecture, OS and logical CPU count of this machine.
pub fn hardware_annotation() -> String {
    format!(
        "{}-{} cpus={}",
        std::env::consts::ARCH,
        std::env::consts::OS,
        crate::jobs::default_workers()
    )
}

/// For each point, times a full retrain without it and a redaction from
/// `target`, one after the other on the calling thread.
#[allow(clippy::too_many_arguments)]
pub fn timing_compare(
    dataset: &LabeledDataset,
    plan: &SplitPlan,
    arch: &ArchitectureConfig,
    train_cfg: &TrainConfig,
    target: &Checkpoint,
    attack: &AttackModel,
    trial_points: &[usize],
    redaction: &RedactionConfig,
    seed: u64,
) -> Result<TimingReport> {
    if trial_points.is_empty() {
        return Err(Error::InvalidConfig("timing needs at least one trial point".into()));
    }
    let mut report = TimingReport {
        hardware: hardware_annotation(),
        points: trial_points.to_vec(),
        remove_seconds: Vec::with_capacity(trial_points.len()),
        redact_seconds: Vec::with_capacity(trial_points.len()),
        redact_success: Vec::with_capacity(trial_points.len()),
        mean_remove_seconds: 0.0,
        mean_redact_seconds: 0.0,
    };
    for &record in trial_points {
        let request = RedactionRequest::for_record(dataset, record, derive(seed, "timing-request", record as u64))?;
        request.validate(dataset, plan)?;

        let start = Instant::now();
        let remove_cfg = TrainConfig {
            shuffle_seed: derive(seed, "timing-shuffle", record as u64),
            init_seed: derive(seed, "timing-init", record as u64),
            ..train_cfg.clone()
        };
        train_remove_model(dataset, plan, &[record], arch, &remove_cfg)?;
        report.remove_seconds.push(start.elapsed().as_secs_f64());

        let start = Instant::now();
        let (_, outcome) = redact_point(target, dataset, plan, &request, attack, redaction)?;
        report.redact_seconds.push(start.elapsed().as_secs_f64());
        report.redact_success.push(outcome.success);
    }
    let n = trial_points.len() as f64;
    report.mean_remove_seconds = report.remove_seconds.iter().sum::<f64>() / n;
    report.mean_redact_seconds = report.redact_seconds.iter().sum::<f64>() / n;
    Ok(report)
}

impl TimingReport {
    /// Mean Remove time over mean redaction time.
    pub fn speedup(&self) -> f64 {
        self.mean_remove_seconds / self.mean_redact_seconds
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,mean_seconds,trials,hardware\n");
        let trials = self.points.len();
        let _ = writeln!(out, "Remove,{:.6},{trials},{}", self.mean_remove_seconds, self.hardware);
        let _ = writeln!(out, "Redact,{:.6},{trials},{}", self.mean_redact_seconds, self.hardware);
        out
    }
}
