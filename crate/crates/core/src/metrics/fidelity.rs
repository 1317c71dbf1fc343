use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::classifiers::{train_forest_on, ForestConfig, TrainSet};
use crate::error::{Error, Result};
use crate::seed;
use crate::table::DataTable;

use super::{mean, population_std};

fn column_of(table: &DataTable, attr: &str) -> Result<(usize, usize)> {
    let pos = table.position_of(attr)?;
    Ok((pos, table.schema().cardinality(table.attrs()[pos])))
}

fn histogram(table: &DataTable, attr: &str) -> Result<Vec<f64>> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    let (pos, k) = column_of(table, attr)?;
    let mut h = vec![0.0; k];
    for v in table.column(pos) {
        h[v] += 1.0;
    }
    let n = table.n_rows() as f64;
    Ok(h.into_iter().map(|c| c / n).collect())
}

fn counts2(table: &DataTable, a: &str, b: &str) -> Result<(Vec<f64>, usize, usize)> {
    let (pa, ka) = column_of(table, a)?;
    let (pb, kb) = column_of(table, b)?;
    let mut c = vec![0.0; ka * kb];
    for r in table.rows() {
        c[r[pa] * kb + r[pb]] += 1.0;
    }
    Ok((c, ka, kb))
}

fn half_l1(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn same_schema(real: &DataTable, synth: &DataTable) -> Result<()> {
    if real.schema().attributes() != synth.schema().attributes() {
        return Err(Error::InvalidArgument("real and synthetic tables use different schemas".into()));
    }
    Ok(())
}

/// `1 - TVD` between the two univariate distributions of `attr`.
pub fn tvd_complement(real: &DataTable, synth: &DataTable, attr: &str) -> Result<f64> {
    same_schema(real, synth)?;
    Ok(1.0 - half_l1(&histogram(real, attr)?, &histogram(synth, attr)?))
}

/// `1 - TVD` between the normalised contingency tables of `a` and `b`.
pub fn contingency_similarity(real: &DataTable, synth: &DataTable, a: &str, b: &str) -> Result<f64> {
    same_schema(real, synth)?;
    if real.is_empty() || synth.is_empty() {
        return Err(Error::EmptyTable);
    }
    let (r, _, _) = counts2(real, a, b)?;
    let (s, _, _) = counts2(synth, a, b)?;
    let (nr, ns) = (real.n_rows() as f64, synth.n_rows() as f64);
    let r: Vec<f64> = r.into_iter().map(|c| c / nr).collect();
    let s: Vec<f64> = s.into_iter().map(|c| c / ns).collect();
    Ok(1.0 - half_l1(&r, &s))
}

/// Cramér's V from the raw-count contingency table restricted to observed
/// levels; zero when either attribute takes a single value.
pub fn cramers_v(table: &DataTable, a: &str, b: &str) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    let (c, ka, kb) = counts2(table, a, b)?;
    let row: Vec<f64> = (0..ka).map(|i| c[i * kb..(i + 1) * kb].iter().sum()).collect();
    let col: Vec<f64> = (0..kb).map(|j| (0..ka).map(|i| c[i * kb + j]).sum()).collect();
    let r = row.iter().filter(|&&x| x > 0.0).count();
    let k = col.iter().filter(|&&x| x > 0.0).count();
    if r < 2 || k < 2 {
        return Ok(0.0);
    }
    let n = table.n_rows() as f64;
    let mut chi2 = 0.0;
    for i in (0..ka).filter(|&i| row[i] > 0.0) {
        for j in (0..kb).filter(|&j| col[j] > 0.0) {
            let e = row[i] * col[j] / n;
            chi2 += (c[i * kb + j] - e).powi(2) / e;
        }
    }
    Ok(((chi2 / n) / (r.min(k) - 1) as f64).sqrt().min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DccMatrix {
    pub attrs: Vec<String>,
    /// `values[i][j] = V_synth(i, j) - V_real(i, j)`; zero diagonal.
    pub values: Vec<Vec<f64>>,
}

pub fn dcc_matrix(real: &DataTable, synth: &DataTable) -> Result<DccMatrix> {
    same_schema(real, synth)?;
    let attrs: Vec<String> = real.attr_names().into_iter().map(String::from).collect();
    let d = attrs.len();
    let mut values = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i + 1..d {
            let v = cramers_v(synth, &attrs[i], &attrs[j])? - cramers_v(real, &attrs[i], &attrs[j])?;
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(DccMatrix { attrs, values })
}

/// Laplace-smoothed `KL(p_synth(A, Y) || p_real(A, Y))`.
pub fn kl_protected_outcome(
    real: &DataTable,
    synth: &DataTable,
    protected: &str,
    label: &str,
    alpha: f64,
) -> Result<f64> {
    same_schema(real, synth)?;
    if real.is_empty() || synth.is_empty() {
        return Err(Error::EmptyTable);
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("KL smoothing must be positive, got {alpha}")));
    }
    let smooth = |t: &DataTable| -> Result<Vec<f64>> {
        let (c, _, _) = counts2(t, protected, label)?;
        let total = t.n_rows() as f64 + alpha * c.len() as f64;
        Ok(c.into_iter().map(|x| (x + alpha) / total).collect())
    };
    let (p, q) = (smooth(synth)?, smooth(real)?);
    Ok(p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub forest: ForestConfig,
    pub trials: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            forest: ForestConfig::default(),
            trials: 5,
            test_fraction: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorResult {
    pub mean: f64,
    pub std: f64,
    pub accuracies: Vec<f64>,
}

/// Holdout accuracy of a forest separating real (0) from synthetic (1) rows,
/// on class-balanced data with a stratified holdout, averaged over trials.
pub fn discriminator_measure(
    real: &DataTable,
    synth: &DataTable,
    config: &DiscriminatorConfig,
) -> Result<DiscriminatorResult> {
    same_schema(real, synth)?;
    if real.is_empty() || synth.is_empty() {
        return Err(Error::EmptyTable);
    }
    if config.trials == 0 || !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(Error::InvalidArgument("discriminator needs trials >= 1 and a holdout in (0, 1)".into()));
    }
    let names: Vec<String> = real.attr_names().into_iter().map(String::from).collect();
    let synth_pos = names.iter().map(|n| synth.position_of(n)).collect::<Result<Vec<_>>>()?;
    if synth_pos.len() != synth.width() {
        return Err(Error::InvalidArgument("real and synthetic tables carry different attributes".into()));
    }
    let cards = real.schema().cardinalities(real.attrs());
    let mut accuracies = Vec::with_capacity(config.trials);
    for trial in 0..config.trials {
        let mut rng = seed::stream_rng(config.seed, "discriminator", trial as u64);
        let n = real.n_rows().min(synth.n_rows());
        let pick = |rng: &mut rand_chacha::ChaCha8Rng, total: usize| -> Vec<usize> {
            let mut v = index::sample(rng, total, n).into_vec();
            v.sort_unstable();
            v
        };
        let real_rows = pick(&mut rng, real.n_rows());
        let synth_rows = pick(&mut rng, synth.n_rows());
        // stratified holdout: the same count from each class
        let n_test = (config.test_fraction * n as f64).round() as usize;
        if n_test == 0 || n_test == n {
            return Err(Error::InvalidArgument(format!("{n} rows per class is too few for a holdout")));
        }
        let mut split = |mut rows: Vec<usize>| -> (Vec<usize>, Vec<usize>) {
            rows.shuffle(&mut rng);
            let train = rows.split_off(n_test);
            (train, rows)
        };
        let (real_train, real_test) = split(real_rows);
        let (synth_train, synth_test) = split(synth_rows);

        let mut cols = vec![Vec::with_capacity(2 * (n - n_test)); names.len()];
        for &i in &real_train {
            for (c, &v) in cols.iter_mut().zip(real.row(i)) {
                c.push(v as u32);
            }
        }
        for &i in &synth_train {
            let row = synth.row(i);
            for (c, &p) in cols.iter_mut().zip(&synth_pos) {
                c.push(row[p] as u32);
            }
        }
        let mut labels = vec![0u8; real_train.len()];
        labels.resize(real_train.len() + synth_train.len(), 1);
        let data = TrainSet {
            cols,
            cards: cards.clone(),
            labels,
        };
        let forest_cfg = ForestConfig {
            seed: seed::derive(config.seed, "discriminator-forest", trial as u64),
            ..config.forest.clone()
        };
        let forest = train_forest_on(&data, names.clone(), "synthetic", &forest_cfg)?;

        let mut correct = 0usize;
        let mut x = vec![0; names.len()];
        for &i in &real_test {
            x.copy_from_slice(real.row(i));
            correct += usize::from(forest.predict_row(&x) == 0);
        }
        for &i in &synth_test {
            let row = synth.row(i);
            for (o, &p) in x.iter_mut().zip(&synth_pos) {
                *o = row[p];
            }
            correct += usize::from(forest.predict_row(&x) == 1);
        }
        accuracies.push(correct as f64 / (2 * n_test) as f64);
    }
    Ok(DiscriminatorResult {
        mean: mean(&accuracies),
        std: population_std(&accuracies),
        accuracies,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttrScore {
    pub attr: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub a: String,
    pub b: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub tvd_complement: Vec<AttrScore>,
    pub mean_tvd_complement: f64,
    pub contingency_similarity: Vec<PairScore>,
    pub mean_contingency_similarity: f64,
    pub dcc: DccMatrix,
    pub discriminator: Option<DiscriminatorResult>,
    /// KL of `p(A, Y)` per protected attribute.
    pub kl: Vec<AttrScore>,
}

#[derive(Clone, Debug, Default)]
pub struct FidelityOptions {
    /// Protected attributes for the KL entries; needs `label`.
    pub protected: Vec<String>,
    pub label: Option<String>,
    pub kl_alpha: f64,
    /// Skipped when `None`.
    pub discriminator: Option<DiscriminatorConfig>,
}

pub fn fidelity_report(real: &DataTable, synth: &DataTable, options: &FidelityOptions) -> Result<FidelityReport> {
    same_schema(real, synth)?;
    let names: Vec<String> = real.attr_names().into_iter().map(String::from).collect();
    let tvd = names
        .iter()
        .map(|a| {
            Ok(AttrScore {
                attr: a.clone(),
                value: tvd_complement(real, synth, a)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cs = Vec::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            cs.push(PairScore {
                a: names[i].clone(),
                b: names[j].clone(),
                value: contingency_similarity(real, synth, &names[i], &names[j])?,
            });
        }
    }
    let kl = match &options.label {
        Some(label) => options
            .protected
            .iter()
            .map(|p| {
                Ok(AttrScore {
                    attr: p.clone(),
                    value: kl_protected_outcome(real, synth, p, label, options.kl_alpha)?,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let discriminator = options
        .discriminator
        .as_ref()
        .map(|c| discriminator_measure(real, synth, c))
        .transpose()?;
    Ok(FidelityReport {
        mean_tvd_complement: mean(&tvd.iter().map(|s| s.value).collect::<Vec<_>>()),
        tvd_complement: tvd,
        mean_contingency_similarity: if cs.is_empty() {
            1.0
        } else {
            mean(&cs.iter().map(|s| s.value).collect::<Vec<_>>())
        },
        contingency_similarity: cs,
        dcc: dcc_matrix(real, synth)?,
        discriminator,
        kl,
    })
}
