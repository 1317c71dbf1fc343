use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::DataTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Equal opportunity difference.
    Eod,
    /// Disparate impact.
    Di,
    /// Average odds difference.
    Aod,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Eod, Metric::Di, Metric::Aod];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Eod => "EOD",
            Metric::Di => "DI",
            Metric::Aod => "AOD",
        }
    }

    /// Value of the metric when both groups are treated identically.
    pub fn parity(self) -> f64 {
        match self {
            Metric::Di => 1.0,
            Metric::Eod | Metric::Aod => 0.0,
        }
    }
}

/// Confusion counts for one group, with respect to the favourable label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, truth: bool, pred: bool) {
        match (truth, pred) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn tpr(&self, group: &str) -> Result<f64> {
        let pos = self.tp + self.fn_;
        if pos == 0 {
            return Err(Error::UndefinedMetric(format!("no positive ground truth in the {group} group")));
        }
        Ok(self.tp as f64 / pos as f64)
    }

    fn fpr(&self, group: &str) -> Result<f64> {
        let neg = self.fp + self.tn;
        if neg == 0 {
            return Err(Error::UndefinedMetric(format!("no negative ground truth in the {group} group")));
        }
        Ok(self.fp as f64 / neg as f64)
    }

    fn positive_rate(&self, group: &str) -> Result<f64> {
        if self.n() == 0 {
            return Err(Error::UndefinedMetric(format!("the {group} group is empty")));
        }
        Ok((self.tp + self.fp) as f64 / self.n() as f64)
    }
}

/// Per-group confusion counts: `[unprivileged, privileged]`.
pub type GroupConfusion = [Confusion; 2];

pub fn group_confusion(y_true: &[usize], y_pred: &[usize], privileged: &[bool], positive: usize) -> Result<GroupConfusion> {
    if y_true.len() != y_pred.len() || y_true.len() != privileged.len() {
        return Err(Error::InvalidArgument("label, prediction and group vectors differ in length".into()));
    }
    let mut g = [Confusion::default(); 2];
    for ((&t, &p), &priv_) in y_true.iter().zip(y_pred).zip(privileged) {
        g[usize::from(priv_)].add(t == positive, p == positive);
    }
    Ok(g)
}

pub fn metric_from_confusion(metric: Metric, g: &GroupConfusion) -> Result<f64> {
    let [u, p] = g;
    match metric {
        Metric::Eod => Ok(u.tpr("unprivileged")? - p.tpr("privileged")?),
        Metric::Di => {
            let (ru, rp) = (u.positive_rate("unprivileged")?, p.positive_rate("privileged")?);
            if rp == 0.0 {
                return Err(Error::UndefinedMetric(
                    "no favourable predictions in the privileged group".into(),
                ));
            }
            Ok(ru / rp)
        }
        Metric::Aod => Ok(0.5
            * ((u.fpr("unprivileged")? - p.fpr("privileged")?) + (u.tpr("unprivileged")? - p.tpr("privileged")?))),
    }
}

/// `TPR_unpriv - TPR_priv`.
pub fn equal_opportunity_difference(
    y_true: &[usize],
    y_pred: &[usize],
    privileged: &[bool],
    positive: usize,
) -> Result<f64> {
    metric_from_confusion(Metric::Eod, &group_confusion(y_true, y_pred, privileged, positive)?)
}

/// `P(pred = + | unpriv) / P(pred = + | priv)`.
pub fn disparate_impact(y_pred: &[usize], privileged: &[bool], positive: usize) -> Result<f64> {
    // ground truth does not enter DI
    metric_from_confusion(Metric::Di, &group_confusion(y_pred, y_pred, privileged, positive)?)
}

/// `((FPR_u - FPR_p) + (TPR_u - TPR_p)) / 2`.
pub fn average_odds_difference(
    y_true: &[usize],
    y_pred: &[usize],
    privileged: &[bool],
    positive: usize,
) -> Result<f64> {
    metric_from_confusion(Metric::Aod, &group_confusion(y_true, y_pred, privileged, positive)?)
}

/// A protected attribute and the category that marks the privileged group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectedGroup {
    pub attr: String,
    pub privileged: String,
}

impl ProtectedGroup {
    pub fn membership(&self, table: &DataTable) -> Result<Vec<bool>> {
        let pos = table.position_of(&self.attr)?;
        let cat = table.schema().category_index(table.attrs()[pos], &self.privileged)?;
        Ok(table.column(pos).map(|v| v == cat).collect())
    }
}
