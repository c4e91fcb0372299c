//! Evaluation protocol: attack ensembles, Target/Remove/Redact comparison,
//! batch-size sweeps and timing.

mod ensemble;
mod report;
mod sweep;
mod timing;

pub use ensemble::{train_attack_ensemble, train_remove_model, EnsembleConfig, EnsembleMember};
pub use report::{
    boxplot, evaluate, majority_verdict, BoxplotStats, EvaluationReport, Victim, VictimModels, VictimReport,
    VictimSummary,
};
pub use sweep::{select_positive_points, sweep_batch_size, SweepRow, SweepTable};
pub use timing::{hardware_annotation, timing_compare, TimingReport};
