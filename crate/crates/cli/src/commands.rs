use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use unlearn::data::{split_half, LabeledDataset, SplitPlan};
use unlearn::eval::{
    evaluate, sweep_batch_size, timing_compare, train_attack_ensemble, train_remove_model, EnsembleMember, Victim,
    VictimModels,
};
use unlearn::jobs::run_jobs;
use unlearn::mia::{attack_accuracy, build_attack_training_set, train_attack, AttackModel};
use unlearn::nn::{train, Checkpoint, TrainConfig};
use unlearn::redaction::{
    outcomes_to_jsonl, recover_accuracy, redact_point, sequential_redact, RedactionOutcome, RedactionRequest,
};
use unlearn::seed::derive;

use crate::config::ExperimentConfig;
use crate::points::PointSpec;

/// How a command finished when it did not error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    RedactionFailures(usize),
}

impl Status {
    fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a RedactionOutcome>) -> Self {
        match outcomes.into_iter().filter(|o| !o.success).count() {
            0 => Status::Ok,
            n => Status::RedactionFailures(n),
        }
    }
}

/// Loaded config plus the resolved places to read and write.
pub struct Session {
    pub cfg: ExperimentConfig,
    pub base: PathBuf,
    pub out: PathBuf,
    pub workers: usize,
}

impl Session {
    pub fn new(cfg: ExperimentConfig, base: PathBuf, out: Option<PathBuf>, workers: usize) -> Self {
        let out = out.unwrap_or_else(|| base.join(&cfg.output_dir));
        Self {
            cfg,
            base,
            out,
            workers: workers.max(1),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn dataset(&self) -> Result<LabeledDataset> {
        self.cfg.dataset.load(&self.base)
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn save_checkpoint(&self, name: &str, ckpt: &Checkpoint) -> Result<()> {
        self.write(name, ckpt.encode())
    }

    fn load_checkpoint(&self, name: &str) -> Result<Checkpoint> {
        let path = self.path(name);
        require(&path, name)?;
        Ok(Checkpoint::load(&path)?)
    }

    fn load_plan(&self, name: &str) -> Result<SplitPlan> {
        let path = self.path(name);
        require(&path, name)?;
        Ok(SplitPlan::load(&path)?)
    }

    fn load_attack(&self) -> Result<AttackModel> {
        let path = self.path(ATTACK);
        require(&path, ATTACK)?;
        Ok(AttackModel::load(&path)?)
    }

    fn load_ensemble(&self) -> Result<Vec<AttackModel>> {
        let path = self.path(ENSEMBLE);
        require(&path, ENSEMBLE)?;
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let members: Vec<EnsembleMember> =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if members.is_empty() {
            bail!("artifact {ENSEMBLE} holds no attack models");
        }
        Ok(members.into_iter().map(|m| m.attack).collect())
    }

    /// Target checkpoint, its plan and the redaction attack, checked to
    /// belong to the configured dataset.
    fn target_artifacts(&self, dataset: &LabeledDataset) -> Result<(Checkpoint, SplitPlan, AttackModel)> {
        let target = self.load_checkpoint(TARGET_CKPT)?;
        let plan = self.load_plan(TARGET_PLAN)?;
        let attack = self.load_attack()?;
        if plan.dataset_id != dataset.id || target.provenance.dataset_id != dataset.id {
            bail!(
                "artifacts in {} were built from dataset {} but the config loads {}",
                self.out.display(),
                plan.dataset_id,
                dataset.id
            );
        }
        Ok((target, plan, attack))
    }

    fn derived_train(&self, tag: &str, index: u64) -> TrainConfig {
        TrainConfig {
            shuffle_seed: derive(self.cfg.seed, &format!("{tag}-shuffle"), index),
            init_seed: derive(self.cfg.seed, &format!("{tag}-init"), index),
            ..self.cfg.train.clone()
        }
    }
}

pub const CONFIG_COPY: &str = "config.toml";
pub const TARGET_CKPT: &str = "target.ckpt";
pub const TARGET_HISTORY: &str = "target.history.json";
pub const TARGET_PLAN: &str = "target.plan.json";
pub const SHADOW_CKPT: &str = "shadow.ckpt";
pub const SHADOW_PLAN: &str = "shadow.plan.json";
pub const ATTACK: &str = "attack.json";
pub const ENSEMBLE: &str = "ensemble.json";
pub const REDACTED_CKPT: &str = "redacted.ckpt";
pub const OUTCOMES: &str = "outcomes.jsonl";
pub const QUEUE: &str = "queue.json";
pub const RECOVERED_CKPT: &str = "recovered.ckpt";
pub const RECOVERY: &str = "recovery.json";
pub const REMOVE_CKPT: &str = "remove.ckpt";
pub const EVALUATE_OUTCOMES: &str = "evaluate.outcomes.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const SWEEP_JSON: &str = "sweep.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const TIMING_JSON: &str = "timing.json";
pub const TIMING_CSV: &str = "timing.csv";

fn require(path: &Path, name: &str) -> Result<()> {
    if !path.is_file() {
        bail!("missing artifact {name} (expected at {})", path.display());
    }
    Ok(())
}

fn requests(dataset: &LabeledDataset, seed: u64, tag: &str, points: &[usize]) -> Result<Vec<RedactionRequest>> {
    Ok(points
        .iter()
        .map(|&r| RedactionRequest::for_record(dataset, r, derive(seed, tag, r as u64)))
        .collect::<unlearn::Result<Vec<_>>>()?)
}

/// Trains the target model on a with-replacement half draw.
pub fn cmd_train(ctx: &Session) -> Result<Status> {
    let dataset = ctx.dataset()?;
    let plan = split_half(&dataset, derive(ctx.cfg.seed, "target-split", 0), true)?;
    let (ckpt, history) = train(&ctx.cfg.architecture, &dataset, &plan, &ctx.cfg.train)?;
    ctx.write(CONFIG_COPY, ctx.cfg.to_toml()?)?;
    ctx.save_checkpoint(TARGET_CKPT, &ckpt)?;
    ctx.write(TARGET_HISTORY, serde_json::to_string_pretty(&history)?)?;
    ctx.write(TARGET_PLAN, plan.to_json()?)?;
    if let Some(last) = history.last() {
        println!(
            "target {}: train accuracy {:.4}, held-out accuracy {:.4}",
            ckpt.id(),
            last.train_accuracy,
            last.heldout_accuracy
        );
    }
    Ok(Status::Ok)
}

/// Trains the shadow model on a disjoint half and fits the redaction
/// attack on it; with `ensemble`, also trains the evaluation ensemble.
pub fn cmd_attack(ctx: &Session, ensemble: bool) -> Result<Status> {
    let dataset = ctx.dataset()?;
    let plan = split_half(&dataset, derive(ctx.cfg.seed, "shadow-split", 0), false)?;
    let (shadow, _) = train(&ctx.cfg.architecture, &dataset, &plan, &ctx.derived_train("shadow", 0))?;
    let set = build_attack_training_set(&shadow, &dataset, &plan)?;
    let attack = train_attack(&set, ctx.cfg.ensemble.reg_strength, derive(ctx.cfg.seed, "attack", 0))?;
    let self_accuracy = attack_accuracy(&attack, &shadow, &dataset, &plan)?;
    ctx.save_checkpoint(SHADOW_CKPT, &shadow)?;
    ctx.write(SHADOW_PLAN, plan.to_json()?)?;
    ctx.write(ATTACK, attack.to_json()?)?;
    println!("attack on shadow {}: self accuracy {self_accuracy:.4}", shadow.id());
    if ensemble {
        let members = train_attack_ensemble(
            &dataset,
            &ctx.cfg.architecture,
            &ctx.cfg.train,
            &ctx.cfg.ensemble,
            ctx.workers,
        )?;
        ctx.write(ENSEMBLE, serde_json::to_string_pretty(&members)?)?;
        let accs: Vec<String> = members.iter().map(|m| format!("{:.3}", m.self_accuracy)).collect();
        println!("ensemble of {}: self accuracy {}", members.len(), accs.join(" "));
    }
    Ok(Status::Ok)
}

/// Redacts the points in order from the target, then optionally runs
/// recovery epochs.
pub fn cmd_redact(ctx: &Session, points: &PointSpec, recover_epochs: usize) -> Result<Status> {
    let dataset = ctx.dataset()?;
    let (target, plan, attack) = ctx.target_artifacts(&dataset)?;
    let points = points.resolve(&dataset, &plan, &target, &attack)?;
    if points.is_empty() {
        println!("no points requested");
        return Ok(Status::Ok);
    }
    let queue = requests(&dataset, ctx.cfg.seed, "redact-request", &points)?;
    let (redacted, outcomes, report) = sequential_redact(&target, &dataset, &plan, &queue, &attack, &ctx.cfg.redaction)?;
    ctx.save_checkpoint(REDACTED_CKPT, &redacted)?;
    ctx.write(OUTCOMES, outcomes_to_jsonl(&outcomes)?)?;
    ctx.write(QUEUE, serde_json::to_string_pretty(&report)?)?;
    let status = Status::from_outcomes(&outcomes);
    println!(
        "redacted {} points: {} succeeded, held-out accuracy {:.4} -> {:.4}, {} still In at end",
        outcomes.len(),
        outcomes.iter().filter(|o| o.success).count(),
        report.accuracy_trace[0],
        report.accuracy_trace[report.accuracy_trace.len() - 1],
        report.still_in.len()
    );
    if recover_epochs > 0 {
        let (recovered, recovery) =
            recover_accuracy(&redacted, &dataset, &plan, recover_epochs, &queue, &attack, &ctx.cfg.redaction)?;
        ctx.save_checkpoint(RECOVERED_CKPT, &recovered)?;
        ctx.write(RECOVERY, serde_json::to_string_pretty(&recovery)?)?;
        println!(
            "recovery over {recover_epochs} epochs: held-out accuracy {:.4}, {} re-redactions, {} still In",
            recovery.accuracy_after,
            recovery.re_redactions.len(),
            recovery.still_in.len()
        );
    }
    Ok(status)
}

/// Scores the points on the target, on one redacted model per point and on
/// a model retrained without all of them, under the evaluation ensemble.
pub fn cmd_evaluate(ctx: &Session, points: &PointSpec) -> Result<Status> {
    let dataset = ctx.dataset()?;
    let (target, plan, attack) = ctx.target_artifacts(&dataset)?;
    let ensemble = ctx.load_ensemble()?;
    let points = points.resolve(&dataset, &plan, &target, &attack)?;
    let queue = requests(&dataset, ctx.cfg.seed, "evaluate-request", &points)?;
    for request in &queue {
        request.validate(&dataset, &plan)?;
    }
    let redacted = run_jobs(ctx.workers, queue, |request| {
        let (ckpt, outcome) = redact_point(&target, &dataset, &plan, &request, &attack, &ctx.cfg.redaction)?;
        Ok((ckpt, plan.without(&[request.record_index])?, outcome))
    })?;
    let remove_plan = plan.without(&points)?;
    let remove = train_remove_model(&dataset, &plan, &points, &ctx.cfg.architecture, &ctx.derived_train("remove", 0))?;
    ctx.save_checkpoint(REMOVE_CKPT, &remove)?;
    let outcomes: Vec<RedactionOutcome> = redacted.iter().map(|(_, _, o)| o.clone()).collect();
    ctx.write(EVALUATE_OUTCOMES, outcomes_to_jsonl(&outcomes)?)?;
    let victims = [
        Victim {
            name: "target".into(),
            models: VictimModels::Shared {
                checkpoint: &target,
                plan: &plan,
            },
        },
        Victim {
            name: "redact".into(),
            models: VictimModels::PerPoint(redacted.iter().map(|(c, p, _)| (c, p)).collect()),
        },
        Victim {
            name: "remove".into(),
            models: VictimModels::Shared {
                checkpoint: &remove,
                plan: &remove_plan,
            },
        },
    ];
    let report = evaluate(&victims, &points, &ensemble, &dataset)?;
    ctx.write(REPORT_JSON, report.to_json()?)?;
    ctx.write(REPORT_CSV, report.to_csv())?;
    for v in &report.victims {
        let s = &v.summary;
        println!(
            "{}: {} points, majority In {}, unanimous In {}, unanimous Out {}",
            v.name, s.points, s.majority_in, s.unanimous_in, s.unanimous_out
        );
    }
    Ok(Status::from_outcomes(&outcomes))
}

/// Batch-composition sweep over `k_values`.
pub fn cmd_sweep(ctx: &Session, k_values: &[usize], per_class: usize) -> Result<Status> {
    let dataset = ctx.dataset()?;
    let (target, plan, attack) = ctx.target_artifacts(&dataset)?;
    let table = sweep_batch_size(
        &dataset,
        &plan,
        &target,
        &attack,
        k_values,
        per_class,
        derive(ctx.cfg.seed, "sweep", 0),
        &ctx.cfg.redaction,
        ctx.workers,
    )?;
    ctx.write(SWEEP_JSON, table.to_json()?)?;
    let csv = table.to_csv();
    ctx.write(SWEEP_CSV, &csv)?;
    print!("{csv}");
    Ok(Status::from_outcomes(table.rows.iter().flat_map(|r| &r.outcomes)))
}

/// Wall-clock comparison of full retraining against redaction.
pub fn cmd_timing(ctx: &Session, points: &PointSpec) -> Result<Status> {
    let dataset = ctx.dataset()?;
    let (target, plan, attack) = ctx.target_artifacts(&dataset)?;
    let points = points.resolve(&dataset, &plan, &target, &attack)?;
    let report = timing_compare(
        &dataset,
        &plan,
        &ctx.cfg.architecture,
        &ctx.cfg.train,
        &target,
        &attack,
        &points,
        &ctx.cfg.redaction,
        derive(ctx.cfg.seed, "timing", 0),
    )?;
    ctx.write(TIMING_JSON, report.to_json()?)?;
    let csv = report.to_csv();
    ctx.write(TIMING_CSV, &csv)?;
    print!("{csv}");
    println!("speedup {:.1}x", report.speedup());
    match report.redact_success.iter().filter(|&&s| !s).count() {
        0 => Ok(Status::Ok),
        n => Ok(Status::RedactionFailures(n)),
    }
}
