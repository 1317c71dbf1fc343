use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::table::DataTable;

use super::fairness::{group_confusion, metric_from_confusion, Confusion, Metric, ProtectedGroup};
use super::{mean, population_std};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapStats {
    pub mean: f64,
    pub std: f64,
    pub p2_5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p97_5: f64,
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BootstrapStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self {
            mean: mean(values),
            std: population_std(values),
            p2_5: percentile(&s, 2.5),
            p25: percentile(&s, 25.0),
            p50: percentile(&s, 50.0),
            p75: percentile(&s, 75.0),
            p97_5: percentile(&s, 97.5),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessEntry {
    pub attr: String,
    pub metric: Metric,
    /// Value on the full table; `None` when undefined there.
    pub point: Option<f64>,
    pub bootstrap: Option<BootstrapStats>,
    /// Replicates where the metric was undefined.
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub n_rows: usize,
    pub n_boot: usize,
    pub entries: Vec<FairnessEntry>,
}

impl FairnessReport {
    pub fn entry(&self, attr: &str, metric: Metric) -> Option<&FairnessEntry> {
        self.entries.iter().find(|e| e.attr == attr && e.metric == metric)
    }

    pub fn bootstrap_mean(&self, attr: &str, metric: Metric) -> Option<f64> {
        self.entry(attr, metric)?.bootstrap.as_ref().map(|b| b.mean)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { n_boot: 1000, seed: 0 }
    }
}

/// Fairness metrics of fixed predictions on `table`, with a row bootstrap.
///
/// Predictions depend only on the row, so resampling rows together with
/// their predictions equals re-predicting each replicate. Replicate `r` uses
/// `seed::derive(seed, "bootstrap", r)`.
pub fn bootstrap_fairness(
    table: &DataTable,
    y_pred: &[usize],
    label: &str,
    positive: &str,
    groups: &[ProtectedGroup],
    metrics: &[Metric],
    config: &BootstrapConfig,
) -> Result<FairnessReport> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    if y_pred.len() != table.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} rows",
            y_pred.len(),
            table.n_rows()
        )));
    }
    let label_pos = table.position_of(label)?;
    let positive = table.schema().category_index(table.attrs()[label_pos], positive)?;
    let y_true: Vec<usize> = table.column(label_pos).collect();
    let members = groups
        .iter()
        .map(|g| g.membership(table))
        .collect::<Result<Vec<_>>>()?;
    let n = table.n_rows();

    // per replicate, per group: confusion counts
    let replicates: Vec<Vec<[Confusion; 2]>> = (0..config.n_boot)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::stream_rng(config.seed, "bootstrap", r as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            members
                .iter()
                .map(|m| {
                    let mut c = [Confusion::default(); 2];
                    for &i in &idx {
                        c[usize::from(m[i])].add(y_true[i] == positive, y_pred[i] == positive);
                    }
                    c
                })
                .collect()
        })
        .collect();

    let mut entries = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let full = group_confusion(&y_true, y_pred, &members[gi], positive)?;
        for &metric in metrics {
            let mut values = Vec::with_capacity(config.n_boot);
            let mut skipped = 0;
            for rep in &replicates {
                match metric_from_confusion(metric, &rep[gi]) {
                    Ok(v) => values.push(v),
                    Err(_) => skipped += 1,
                }
            }
            if skipped > 0 {
                log::warn!(
                    "{} on `{}`: {skipped} of {} bootstrap replicates undefined",
                    metric.name(),
                    g.attr,
                    config.n_boot
                );
            }
            entries.push(FairnessEntry {
                attr: g.attr.clone(),
                metric,
                point: metric_from_confusion(metric, &full).ok(),
                bootstrap: BootstrapStats::from_values(&values),
                skipped,
            });
        }
    }
    Ok(FairnessReport {
        n_rows: n,
        n_boot: config.n_boot,
        entries,
    })
}
