use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::{ConditionalTable, FrequencyTable, Radix, Smoothing};
use crate::schema::Schema;
use crate::table::DataTable;

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Internal,
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    IndepOverlap,
    MarginalPreserve,
    LatentNb,
    Independent,
}

/// Mixture of independent categoricals: `p(x) = sum_k pi_k prod_i p_i(x_i | k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentNb {
    /// Mixing weights `pi_k`.
    pub weights: Vec<f64>,
    /// `emissions[attr][k][m] = p_attr(m | k)`, one matrix per schema attribute.
    pub emissions: Vec<Vec<Vec<f64>>>,
}

impl LatentNb {
    pub fn k(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Structure {
    /// `p(o) p(internal-only | o) p(external-only | o)`
    IndepOverlap {
        overlap: FrequencyTable,
        internal: ConditionalTable,
        external: ConditionalTable,
    },
    /// Preserved side's empirical table times the other side's conditional.
    MarginalPreserve {
        preserve: Side,
        preserved: FrequencyTable,
        other: ConditionalTable,
    },
    LatentNb(LatentNb),
    /// One dense singleton distribution per schema attribute.
    Independent { marginals: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    #[serde(default)]
    pub smoothing: Option<Smoothing>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Per-iteration log-likelihood of the retained EM run.
    #[serde(default)]
    pub em_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    schema: Arc<Schema>,
    structure: Structure,
    #[serde(default)]
    fit: FitInfo,
}

/// A fitted generative model over every attribute of its schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct JointModel {
    schema: Arc<Schema>,
    structure: Structure,
    fit: FitInfo,
}

impl TryFrom<ModelRepr> for JointModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        JointModel::new(r.schema, r.structure, r.fit)
    }
}

impl From<JointModel> for ModelRepr {
    fn from(m: JointModel) -> Self {
        ModelRepr {
            schema: m.schema,
            structure: m.structure,
            fit: m.fit,
        }
    }
}

fn disjoint_cover(schema: &Schema, parts: &[&[usize]]) -> Result<()> {
    let mut seen = vec![false; schema.len()];
    for part in parts {
        for &a in *part {
            if a >= schema.len() {
                return Err(Error::IndexOutOfRange(format!("attribute index {a}")));
            }
            if std::mem::replace(&mut seen[a], true) {
                return Err(Error::InvalidArgument(format!(
                    "attribute `{}` covered twice",
                    schema.name(a)
                )));
            }
        }
    }
    if let Some(a) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidArgument(format!(
            "attribute `{}` not covered by the model",
            schema.name(a)
        )));
    }
    Ok(())
}

fn check_simplex(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what}: invalid probability")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidArgument(format!("{what} sums to {s}")));
    }
    Ok(())
}

fn check_conditional(schema: &Schema, c: &ConditionalTable) -> Result<()> {
    check_dims(schema, c.given(), c.given_radix().dims())?;
    check_dims(schema, c.target(), c.target_radix().dims())?;
    let size = c.target_radix().size();
    if c.slices().len() as u64 != c.given_radix().size()
        || c.slices().iter().any(|s| s.empirical.iter().any(|&(t, _)| t >= size))
    {
        return Err(Error::InvalidArgument("conditional table layout".into()));
    }
    if c.max_simplex_error() > SIMPLEX_TOL {
        return Err(Error::InvalidArgument("conditional slice not normalised".into()));
    }
    Ok(())
}

fn check_dims(schema: &Schema, attrs: &[usize], dims: &[usize]) -> Result<()> {
    if schema.cardinalities(attrs) != dims {
        return Err(Error::InvalidArgument("table dimensions disagree with schema".into()));
    }
    Ok(())
}

impl JointModel {
    pub fn new(schema: Arc<Schema>, structure: Structure, fit: FitInfo) -> Result<Self> {
        let m = Self {
            schema,
            structure,
            fit,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let s = &*self.schema;
        match &self.structure {
            Structure::IndepOverlap {
                overlap,
                internal,
                external,
            } => {
                disjoint_cover(s, &[overlap.attrs(), internal.target(), external.target()])?;
                if internal.given() != overlap.attrs() || external.given() != overlap.attrs() {
                    return Err(Error::InvalidArgument("conditionals must be given the overlap".into()));
                }
                check_dims(s, overlap.attrs(), overlap.dims())?;
                check_conditional(s, internal)?;
                check_conditional(s, external)?;
            }
            Structure::MarginalPreserve {
                preserved, other, ..
            } => {
                disjoint_cover(s, &[preserved.attrs(), other.target()])?;
                if !other.given().iter().all(|g| preserved.attrs().contains(g)) {
                    return Err(Error::InvalidArgument(
                        "conditional must be given attributes of the preserved table".into(),
                    ));
                }
                check_dims(s, preserved.attrs(), preserved.dims())?;
                check_conditional(s, other)?;
            }
            Structure::LatentNb(nb) => {
                if nb.weights.is_empty() {
                    return Err(Error::InvalidArgument("latent model needs K >= 1".into()));
                }
                check_simplex(&nb.weights, "mixing weights")?;
                if nb.emissions.len() != s.len() {
                    return Err(Error::InvalidArgument("one emission matrix per attribute".into()));
                }
                for (a, mat) in nb.emissions.iter().enumerate() {
                    if mat.len() != nb.k() {
                        return Err(Error::InvalidArgument("emission matrix needs K rows".into()));
                    }
                    for row in mat {
                        if row.len() != s.cardinality(a) {
                            return Err(Error::InvalidArgument("emission row length".into()));
                        }
                        check_simplex(row, s.name(a))?;
                    }
                }
            }
            Structure::Independent { marginals } => {
                if marginals.len() != s.len() {
                    return Err(Error::InvalidArgument("one marginal per attribute".into()));
                }
                for (a, m) in marginals.iter().enumerate() {
                    if m.len() != s.cardinality(a) {
                        return Err(Error::InvalidArgument("marginal length".into()));
                    }
                    check_simplex(m, s.name(a))?;
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn fit_info(&self) -> &FitInfo {
        &self.fit
    }

    pub fn variant(&self) -> Variant {
        match self.structure {
            Structure::IndepOverlap { .. } => Variant::IndepOverlap,
            Structure::MarginalPreserve { .. } => Variant::MarginalPreserve,
            Structure::LatentNb(_) => Variant::LatentNb,
            Structure::Independent { .. } => Variant::Independent,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Exact model probability of a full assignment (one index per schema
    /// attribute, schema order).
    pub fn cell_probability(&self, x: &[usize]) -> Result<f64> {
        if x.len() != self.schema.len() {
            return Err(Error::InvalidArgument(format!(
                "assignment has {} entries, schema has {}",
                x.len(),
                self.schema.len()
            )));
        }
        for (a, &v) in x.iter().enumerate() {
            if v >= self.schema.cardinality(a) {
                return Err(Error::IndexOutOfRange(format!(
                    "category {v} of `{}`",
                    self.schema.name(a)
                )));
            }
        }
        let pick = |attrs: &[usize]| -> Vec<usize> { attrs.iter().map(|&a| x[a]).collect() };
        Ok(match &self.structure {
            Structure::IndepOverlap {
                overlap,
                internal,
                external,
            } => {
                let g = overlap.radix().encode(&pick(overlap.attrs()));
                let p = overlap.prob_code(g);
                if p == 0.0 {
                    0.0
                } else {
                    p * internal.prob_code(g, internal.target_radix().encode(&pick(internal.target())))
                        * external.prob_code(g, external.target_radix().encode(&pick(external.target())))
                }
            }
            Structure::MarginalPreserve {
                preserved, other, ..
            } => {
                let p = preserved.prob(&pick(preserved.attrs()));
                if p == 0.0 {
                    0.0
                } else {
                    p * other.prob(&pick(other.given()), &pick(other.target()))
                }
            }
            Structure::LatentNb(nb) => (0..nb.k())
                .map(|k| {
                    nb.weights[k]
                        * x.iter()
                            .enumerate()
                            .map(|(a, &v)| nb.emissions[a][k][v])
                            .product::<f64>()
                })
                .sum(),
            Structure::Independent { marginals } => {
                x.iter().enumerate().map(|(a, &v)| marginals[a][v]).product()
            }
        })
    }

    /// Evaluator for the marginal probability of rows over `attrs`.
    pub fn marginal_evaluator(&self, attrs: &[usize]) -> Result<MarginalEvaluator> {
        MarginalEvaluator::new(self, attrs)
    }

    /// Dense joint over the full schema; only for small product spaces.
    pub fn dense_joint(&self) -> Result<Vec<f64>> {
        let radix = Radix::new(self.schema.cardinalities(&(0..self.schema.len()).collect::<Vec<_>>()))?;
        if radix.size() > 1 << 22 {
            return Err(Error::InvalidArgument(format!(
                "{} cells is too many to enumerate",
                radix.size()
            )));
        }
        let mut x = vec![0; self.schema.len()];
        (0..radix.size())
            .map(|c| {
                radix.decode(c, &mut x);
                self.cell_probability(&x)
            })
            .collect()
    }
}

enum Factor {
    /// Table over `row_pos` attributes followed by the overlap attributes.
    Joint {
        table: FrequencyTable,
        row_pos: Vec<usize>,
    },
    Cond {
        table: ConditionalTable,
        row_pos: Vec<usize>,
    },
}

enum EvalKind {
    Product(Vec<Vec<f64>>),
    Mixture {
        log_weights: Vec<f64>,
        /// `[row position][k][m]`
        log_emissions: Vec<Vec<Vec<f64>>>,
    },
    Overlap {
        radix: Radix,
        /// For each overlap attribute, its row position if present.
        overlap_pos: Vec<Option<usize>>,
        factors: Vec<Factor>,
    },
}

/// Computes `p(x_S)` for rows over a fixed attribute subset `S`,
/// marginalising the model over every absent attribute.
pub struct MarginalEvaluator {
    kind: EvalKind,
    width: usize,
}

impl MarginalEvaluator {
    fn new(model: &JointModel, attrs: &[usize]) -> Result<Self> {
        let schema = &model.schema;
        for &a in attrs {
            if a >= schema.len() {
                return Err(Error::IndexOutOfRange(format!("attribute index {a}")));
            }
        }
        let row_pos = |a: usize| attrs.iter().position(|&x| x == a);
        // attributes of `set` present in the row, in row order
        let present_in = |set: &[usize]| -> Vec<usize> {
            attrs.iter().copied().filter(|a| set.contains(a)).collect()
        };
        let kind = match &model.structure {
            Structure::Independent { marginals } => {
                EvalKind::Product(attrs.iter().map(|&a| marginals[a].clone()).collect())
            }
            Structure::LatentNb(nb) => EvalKind::Mixture {
                log_weights: nb.weights.iter().map(|w| w.ln()).collect(),
                log_emissions: attrs
                    .iter()
                    .map(|&a| {
                        nb.emissions[a]
                            .iter()
                            .map(|row| row.iter().map(|p| p.ln()).collect())
                            .collect()
                    })
                    .collect(),
            },
            Structure::IndepOverlap {
                overlap,
                internal,
                external,
            } => {
                let mut factors = vec![Factor::Joint {
                    table: overlap.clone(),
                    row_pos: Vec::new(),
                }];
                for c in [internal, external] {
                    let keep = present_in(c.target());
                    factors.push(Factor::Cond {
                        row_pos: keep.iter().map(|&a| row_pos(a).unwrap()).collect(),
                        table: c.project_target(&keep)?,
                    });
                }
                EvalKind::Overlap {
                    radix: overlap.radix().clone(),
                    overlap_pos: overlap.attrs().iter().map(|&a| row_pos(a)).collect(),
                    factors,
                }
            }
            Structure::MarginalPreserve {
                preserved, other, ..
            } => {
                let given = other.given();
                let kept: Vec<usize> = present_in(preserved.attrs())
                    .into_iter()
                    .filter(|a| !given.contains(a))
                    .collect();
                let order: Vec<usize> = kept.iter().chain(given).copied().collect();
                let keep_target = present_in(other.target());
                EvalKind::Overlap {
                    radix: other.given_radix().clone(),
                    overlap_pos: given.iter().map(|&a| row_pos(a)).collect(),
                    factors: vec![
                        Factor::Joint {
                            table: preserved.marginalize(&order)?,
                            row_pos: kept.iter().map(|&a| row_pos(a).unwrap()).collect(),
                        },
                        Factor::Cond {
                            row_pos: keep_target.iter().map(|&a| row_pos(a).unwrap()).collect(),
                            table: other.project_target(&keep_target)?,
                        },
                    ],
                }
            }
        };
        Ok(Self {
            kind,
            width: attrs.len(),
        })
    }

    pub fn prob(&self, row: &[usize]) -> f64 {
        debug_assert_eq!(row.len(), self.width);
        match &self.kind {
            EvalKind::Product(m) => row.iter().zip(m).map(|(&v, p)| p[v]).product(),
            EvalKind::Mixture { .. } => self.log_prob(row).exp(),
            EvalKind::Overlap {
                radix,
                overlap_pos,
                factors,
            } => {
                let mut g_idx = vec![0; overlap_pos.len()];
                let mut buf = Vec::new();
                let mut total = 0.0;
                'cells: for g in 0..radix.size() {
                    radix.decode(g, &mut g_idx);
                    for (gi, pos) in g_idx.iter().zip(overlap_pos) {
                        if pos.is_some_and(|p| row[p] != *gi) {
                            continue 'cells;
                        }
                    }
                    let mut term = 1.0;
                    for f in factors {
                        term *= match f {
                            Factor::Joint { table, row_pos } => {
                                buf.clear();
                                buf.extend(row_pos.iter().map(|&p| row[p]));
                                buf.extend_from_slice(&g_idx);
                                table.prob(&buf)
                            }
                            Factor::Cond { table, row_pos } => {
                                buf.clear();
                                buf.extend(row_pos.iter().map(|&p| row[p]));
                                table.prob_code(g, table.target_radix().encode(&buf))
                            }
                        };
                        if term == 0.0 {
                            break;
                        }
                    }
                    total += term;
                }
                total
            }
        }
    }

    pub fn log_prob(&self, row: &[usize]) -> f64 {
        match &self.kind {
            EvalKind::Mixture {
                log_weights,
                log_emissions,
            } => {
                let terms: Vec<f64> = (0..log_weights.len())
                    .map(|k| {
                        log_weights[k]
                            + row
                                .iter()
                                .zip(log_emissions)
                                .map(|(&v, e)| e[k][v])
                                .sum::<f64>()
                    })
                    .collect();
                log_sum_exp(&terms)
            }
            _ => self.prob(row).ln(),
        }
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub value: f64,
    /// Rows with zero model probability, counted at the floor.
    pub floored: usize,
}

pub const DEFAULT_LOG_FLOOR: f64 = -27.631_021_115_928_547; // ln(1e-12)

pub fn log_likelihood(model: &JointModel, table: &DataTable) -> Result<LogLikelihood> {
    log_likelihood_with_floor(model, table, DEFAULT_LOG_FLOOR)
}

/// Sum of log marginal probabilities of the rows; rows the model gives zero
/// mass contribute `floor` instead of negative infinity.
pub fn log_likelihood_with_floor(model: &JointModel, table: &DataTable, floor: f64) -> Result<LogLikelihood> {
    if table.schema().attributes() != model.schema().attributes() {
        return Err(Error::InvalidArgument("table and model schemas differ".into()));
    }
    let eval = model.marginal_evaluator(table.attrs())?;
    let mut value = 0.0;
    let mut floored = 0;
    for row in table.rows() {
        let lp = eval.log_prob(row);
        if lp.is_finite() {
            value += lp;
        } else {
            floored += 1;
            value += floor;
        }
    }
    if floored > 0 {
        log::warn!("log-likelihood: {floored} rows had zero model probability");
    }
    Ok(LogLikelihood { value, floored })
}
