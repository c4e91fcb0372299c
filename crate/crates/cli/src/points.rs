use std::str::FromStr;

use anyhow::{anyhow, bail, Result};
use unlearn::data::{class_members, LabeledDataset, SplitPlan};
use unlearn::mia::{vulnerability_ranking, AttackModel};
use unlearn::nn::Checkpoint;

/// Records named on the command line: explicit ids or the `N` members the
/// attack scores highest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PointSpec {
    Ids(Vec<usize>),
    Top(usize),
}

impl FromStr for PointSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(n) = s.strip_prefix("top:") {
            let n = n.trim().parse().map_err(|_| anyhow!("bad point count in {s:?}"))?;
            return Ok(PointSpec::Top(n));
        }
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse().map_err(|_| anyhow!("bad point id {t:?}")))
            .collect::<Result<Vec<_>>>()
            .map(PointSpec::Ids)
    }
}

impl PointSpec {
    /// Concrete record ids, in queue order. `Top` merges the per-class
    /// rankings and orders by descending score, ties by record id.
    pub fn resolve(
        &self,
        dataset: &LabeledDataset,
        plan: &SplitPlan,
        target: &Checkpoint,
        attack: &AttackModel,
    ) -> Result<Vec<usize>> {
        let n = match self {
            PointSpec::Ids(ids) => {
                for &id in ids {
                    if id >= dataset.len() {
                        bail!("unknown point id {id}: dataset has {} records", dataset.len());
                    }
                }
                return Ok(ids.clone());
            }
            PointSpec::Top(n) => *n,
        };
        if n == 0 {
            return Ok(Vec::new());
        }
        let smallest = (0..dataset.class_count)
            .map(|c| class_members(dataset, plan, c).map(|m| m.len()))
            .collect::<unlearn::Result<Vec<_>>>()?
            .into_iter()
            .min()
            .unwrap_or(0);
        let mut ranked: Vec<_> = vulnerability_ranking(attack, target, dataset, plan, n.min(smallest))?
            .into_iter()
            .flatten()
            .collect();
        if ranked.len() < n {
            bail!("top:{n} requested but only {} members can be ranked", ranked.len());
        }
        ranked.sort_by(|a, b| b.1 .0.total_cmp(&a.1 .0).then(a.0.cmp(&b.0)));
        Ok(ranked.into_iter().take(n).map(|(r, _)| r).collect())
    }
}
