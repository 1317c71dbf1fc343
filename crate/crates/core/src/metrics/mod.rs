//! Fidelity of synthetic tables and group fairness of predictions.

mod bootstrap;
mod fairness;
mod fidelity;

pub use bootstrap::{bootstrap_fairness, percentile, BootstrapConfig, BootstrapStats, FairnessEntry, FairnessReport};
pub use fairness::{
    average_odds_difference, disparate_impact, equal_opportunity_difference, group_confusion, metric_from_confusion,
    Confusion, GroupConfusion, Metric, ProtectedGroup,
};
pub use fidelity::{
    contingency_similarity, cramers_v, dcc_matrix, discriminator_measure, fidelity_report, kl_protected_outcome,
    tvd_complement, AttrScore, DccMatrix, DiscriminatorConfig, DiscriminatorResult, FidelityOptions, FidelityReport,
    PairScore,
};

/// Values are summed in order, so results do not depend on thread count.
pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn population_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}
