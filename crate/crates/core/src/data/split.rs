use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};

/// Membership ground truth for one trained model.
///
/// `member_indices` is the training multiset (sorted); `nonmember_indices`
/// are records never drawn plus any `excluded` members.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub dataset_id: String,
    pub seed: u64,
    pub with_replacement: bool,
    pub member_indices: Vec<usize>,
    pub nonmember_indices: Vec<usize>,
    /// Set on the opposite half of a disjoint split.
    #[serde(default)]
    pub complemented: bool,
    /// Former members removed from training, ascending.
    #[serde(default)]
    pub excluded: Vec<usize>,
}

impl SplitPlan {
    pub fn is_member(&self, record: usize) -> bool {
        self.member_indices.binary_search(&record).is_ok()
    }

    pub fn is_nonmember(&self, record: usize) -> bool {
        self.nonmember_indices.binary_search(&record).is_ok()
    }

    /// Ground truth for `record`: `Some(true)` for members, `Some(false)` for
    /// non-members, `None` if the plan does not cover it.
    pub fn membership(&self, record: usize) -> Option<bool> {
        if self.is_member(record) {
            Some(true)
        } else if self.is_nonmember(record) {
            Some(false)
        } else {
            None
        }
    }

    /// Members with duplicates removed.
    pub fn distinct_members(&self) -> Vec<usize> {
        let mut out = self.member_indices.clone();
        out.dedup();
        out
    }

    /// The same plan with `records` moved from members to non-members.
    pub fn without(&self, records: &[usize]) -> Result<SplitPlan> {
        if let Some(&record) = records.iter().find(|&&r| !self.is_member(r)) {
            return Err(Error::NotAMember { record });
        }
        let mut removed = records.to_vec();
        removed.sort_unstable();
        removed.dedup();
        let mut plan = self.clone();
        plan.member_indices
            .retain(|r| removed.binary_search(r).is_err());
        plan.nonmember_indices.extend_from_slice(&removed);
        plan.nonmember_indices.sort_unstable();
        plan.excluded.extend_from_slice(&removed);
        plan.excluded.sort_unstable();
        plan.excluded.dedup();
        Ok(plan)
    }

    /// Swaps members and non-members of a disjoint half split.
    pub fn complement(&self) -> Result<SplitPlan> {
        if self.with_replacement || !self.excluded.is_empty() {
            return Err(Error::InvalidConfig(
                "only untouched without-replacement splits have a complement".into(),
            ));
        }
        Ok(SplitPlan {
            dataset_id: self.dataset_id.clone(),
            seed: self.seed,
            with_replacement: false,
            member_indices: self.nonmember_indices.clone(),
            nonmember_indices: self.member_indices.clone(),
            complemented: !self.complemented,
            excluded: Vec::new(),
        })
    }

    /// `<dataset>/seed=<s>/<mode>[/complement][/minus=<k>]`
    pub fn describe(&self) -> String {
        let mut out = format!(
            "{}/seed={}/{}",
            self.dataset_id,
            self.seed,
            if self.with_replacement { "with-replacement" } else { "disjoint" }
        );
        if self.complemented {
            out.push_str("/complement");
        }
        if !self.excluded.is_empty() {
            out.push_str(&format!("/minus={}", self.excluded.len()));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
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

/// Draws `N/2` members: a shuffled half without replacement, or `N/2`
/// uniform draws with replacement (non-members are then the records never
/// drawn).
pub fn split_half(dataset: &LabeledDataset, seed: u64, with_replacement: bool) -> Result<SplitPlan> {
    let n = dataset.len();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "half split needs an even, non-zero record count, got {n}"
        )));
    }
    let mut rng = crate::seed::rng(crate::seed::derive(seed, "split", 0));
    let (mut members, mut nonmembers) = if with_replacement {
        let members: Vec<usize> = (0..n / 2).map(|_| rng.random_range(0..n)).collect();
        let mut drawn = vec![false; n];
        members.iter().for_each(|&m| drawn[m] = true);
        let nonmembers = (0..n).filter(|&i| !drawn[i]).collect();
        (members, nonmembers)
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let nonmembers = all.split_off(n / 2);
        (all, nonmembers)
    };
    members.sort_unstable();
    nonmembers.sort_unstable();
    Ok(SplitPlan {
        dataset_id: dataset.id.clone(),
        seed,
        with_replacement,
        member_indices: members,
        nonmember_indices: nonmembers,
        complemented: false,
        excluded: Vec::new(),
    })
}

/// Distinct members of `plan` whose label is `class_id`, ascending.
pub fn class_members(dataset: &LabeledDataset, plan: &SplitPlan, class_id: usize) -> Result<Vec<usize>> {
    if class_id >= dataset.class_count {
        return Err(Error::InvalidLabel {
            label: class_id,
            class_count: dataset.class_count,
        });
    }
    Ok(plan
        .distinct_members()
        .into_iter()
        .filter(|&i| dataset.labels[i] == class_id)
        .collect())
}
