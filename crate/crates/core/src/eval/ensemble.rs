use serde::{Deserialize, Serialize};

use crate::data::{split_half, LabeledDataset, SplitPlan};
use crate::error::{Error, Result};
use crate::jobs::run_jobs;
use crate::mia::{attack_accuracy, build_attack_training_set, train_attack, AttackModel, DEFAULT_REG_STRENGTH};
use crate::nn::{train, ArchitectureConfig, Checkpoint, TrainConfig};
use crate::seed::derive;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    /// Number of half splits; each yields two attack models.
    pub split_count: usize,
    pub base_seed: u64,
    pub reg_strength: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            split_count: 5,
            base_seed: 0,
            reg_strength: DEFAULT_REG_STRENGTH,
        }
    }
}

impl EnsembleConfig {
    pub fn attack_count(&self) -> usize {
        2 * self.split_count
    }
}

/// One evaluation attack with the split its shadow was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub attack: AttackModel,
    pub shadow_plan: SplitPlan,
    /// Attack accuracy on its own shadow's members and non-members.
    pub self_accuracy: f64,
}

/// Trains `2 * split_count` shadows, two per disjoint half split (one on
/// each half), and fits one attack per shadow. All seeds derive from
/// `cfg.base_seed`; `train_cfg`'s own seeds are replaced.
pub fn train_attack_ensemble(
    dataset: &LabeledDataset,
    arch: &ArchitectureConfig,
    train_cfg: &TrainConfig,
    cfg: &EnsembleConfig,
    workers: usize,
) -> Result<Vec<EnsembleMember>> {
    if cfg.split_count == 0 {
        return Err(Error::InvalidConfig("ensemble needs at least one split".into()));
    }
    let mut jobs = Vec::with_capacity(cfg.attack_count());
    for s in 0..cfg.split_count as u64 {
        let half = split_half(dataset, derive(cfg.base_seed, "ensemble-split", s), false)?;
        let other = half.complement()?;
        jobs.push((2 * s, half));
        jobs.push((2 * s + 1, other));
    }
    run_jobs(workers, jobs, |(index, plan)| {
        let shadow_cfg = TrainConfig {
            shuffle_seed: derive(cfg.base_seed, "ensemble-shuffle", index),
            init_seed: derive(cfg.base_seed, "ensemble-init", index),
            ..train_cfg.clone()
        };
        let (shadow, _) = train(arch, dataset, &plan, &shadow_cfg)?;
        let set = build_attack_training_set(&shadow, dataset, &plan)?;
        let attack = train_attack(&set, cfg.reg_strength, derive(cfg.base_seed, "ensemble-attack", index))?;
        let self_accuracy = attack_accuracy(&attack, &shadow, dataset, &plan)?;
        Ok(EnsembleMember {
            attack,
            shadow_plan: plan,
            self_accuracy,
        })
    })
}

/// Retrains from scratch on `plan`'s members minus `excluded`.
pub fn train_remove_model(
    dataset: &LabeledDataset,
    plan: &SplitPlan,
    excluded: &[usize],
    arch: &ArchitectureConfig,
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    let remaining = plan.without(excluded)?;
    Ok(train(arch, dataset, &remaining, cfg)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic;
    use crate::nn::ConvBlock;

    fn tiny() -> (LabeledDataset, ArchitectureConfig, TrainConfig) {
        let ds = make_synthetic(2, 24, (4, 4, 1), 2.0, 5).unwrap();
        let arch = ArchitectureConfig {
            input_shape: (4, 4, 1),
            conv_blocks: vec![ConvBlock::pair(2, 2)],
            dense_width: 8,
            class_count: 2,
        };
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 3,
            ..TrainConfig::default()
        };
        (ds, arch, cfg)
    }

    #[test]
    fn one_split_gives_complementary_pair() {
        let (ds, arch, train_cfg) = tiny();
        let cfg = EnsembleConfig {
            split_count: 1,
            ..EnsembleConfig::default()
        };
        let members = train_attack_ensemble(&ds, &arch, &train_cfg, &cfg, 1).unwrap();
        assert_eq!(members.len(), 2);
        let (a, b) = (&members[0].shadow_plan, &members[1].shadow_plan);
        assert_eq!(a.member_indices, b.nonmember_indices);
        assert_eq!(a.nonmember_indices, b.member_indices);
        for m in &members {
            assert_eq!(m.attack.provenance.split, m.shadow_plan.describe());
        }
    }

    #[test]
    fn ensemble_is_deterministic_across_worker_counts() {
        let (ds, arch, train_cfg) = tiny();
        let cfg = EnsembleConfig {
            split_count: 2,
            base_seed: 8,
            ..EnsembleConfig::default()
        };
        let a = train_attack_ensemble(&ds, &arch, &train_cfg, &cfg, 1).unwrap();
        let b = train_attack_ensemble(&ds, &arch, &train_cfg, &cfg, 3).unwrap();
        assert_eq!(a.len(), cfg.attack_count());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(train_attack_ensemble(&ds, &arch, &train_cfg, &EnsembleConfig { split_count: 0, ..cfg }, 1).is_err());
    }

    #[test]
    fn remove_model_records_exclusions() {
        let (ds, arch, cfg) = tiny();
        let plan = split_half(&ds, 3, true).unwrap();
        let excluded = plan.distinct_members()[..3].to_vec();
        let ckpt = train_remove_model(&ds, &plan, &excluded, &arch, &cfg).unwrap();
        assert_eq!(ckpt.provenance.excluded_records, excluded);
        let removed = plan.member_indices.iter().filter(|r| excluded.contains(r)).count();
        assert_eq!(ckpt.provenance.member_count, plan.member_indices.len() - removed);

        let full = train_remove_model(&ds, &plan, &[], &arch, &cfg).unwrap();
        assert_eq!(full.encode(), train(&arch, &ds, &plan, &cfg).unwrap().0.encode());
        assert!(train_remove_model(&ds, &plan, &plan.nonmember_indices[..1], &arch, &cfg).is_err());
    }
}
