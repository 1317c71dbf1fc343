//! Raw CSV ingestion: row filters and derived columns, then per-column
//! binning / merging into categorical attributes.
//!
//! A config file looks like
//!
//! ```json
//! {
//!   "null_values": ["?"],
//!   "pre_transform": [
//!     {"op": "filter_values", "column": "race", "keep": ["African-American", "Caucasian"]},
//!     {"op": "sum", "columns": ["juv_fel_count", "juv_misd_count"], "into": "juv_crime"}
//!   ],
//!   "columns": [
//!     {"name": "age", "bins": {"thresholds": [24, 60], "labels": ["<25", "25-60", ">60"]}},
//!     {"name": "race", "merge": {"groups": {"white": ["White"]}, "default": "non-white"}},
//!     {"name": "sex"}
//!   ],
//!   "drop": ["fnlwgt"],
//!   "protected": [{"name": "race", "privileged": "white"}],
//!   "label": {"name": "income", "positive": ">50K"}
//! }
//! ```
//!
//! Only columns listed under `columns` are retained. Categories are sorted
//! lexicographically; only observed categories enter the schema.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Attribute, Schema};
use crate::table::DataTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    /// Cell values treated as missing, in addition to the empty string.
    #[serde(default)]
    pub null_values: Vec<String>,
    #[serde(default)]
    pub pre_transform: Vec<PreTransform>,
    pub columns: Vec<ColumnRule>,
    /// Source columns deliberately discarded. Must exist in the input.
    #[serde(default)]
    pub drop: Vec<String>,
    #[serde(default)]
    pub protected: Vec<ProtectedSpec>,
    #[serde(default)]
    pub label: Option<LabelSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtectedSpec {
    pub name: String,
    pub privileged: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSpec {
    pub name: String,
    /// The favourable outcome.
    pub positive: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum PreTransform {
    /// New numeric column holding the sum of the sources.
    Sum { columns: Vec<String>, into: String },
    /// New column obtained by a value lookup on an existing one.
    Map {
        column: String,
        into: String,
        map: BTreeMap<String, String>,
    },
    /// Keeps rows whose numeric value lies in `[min, max]`.
    FilterRange {
        column: String,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
    /// Keeps rows whose value is in `keep` (when given) and not in `exclude`.
    FilterValues {
        column: String,
        #[serde(default)]
        keep: Option<Vec<String>>,
        #[serde(default)]
        exclude: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRule {
    /// Attribute name in the schema.
    pub name: String,
    /// Source column, when it differs from `name`.
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub bins: Option<BinRule>,
    #[serde(default)]
    pub merge: Option<MergeRule>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closed {
    /// Bin `i` is `(t[i-1], t[i]]`.
    #[default]
    Right,
    /// Bin `i` is `[t[i-1], t[i])`.
    Left,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinRule {
    pub thresholds: Vec<f64>,
    pub labels: Vec<String>,
    #[serde(default)]
    pub closed: Closed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeRule {
    /// Output label → source values mapped onto it.
    pub groups: BTreeMap<String, Vec<String>>,
    /// Catch-all label for values not listed in any group.
    #[serde(default)]
    pub default: Option<String>,
}

impl BinRule {
    fn validate(&self, column: &str) -> Result<()> {
        if self.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(format!(
                "column `{column}`: bin thresholds must be strictly increasing"
            )));
        }
        if self.labels.len() != self.thresholds.len() + 1 {
            return Err(Error::Config(format!(
                "column `{column}`: {} labels for {} thresholds",
                self.labels.len(),
                self.thresholds.len()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, column: &str, value: &str) -> Result<String> {
        match value.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => {
                let bin = match self.closed {
                    Closed::Right => self.thresholds.iter().filter(|&&t| v > t).count(),
                    Closed::Left => self.thresholds.iter().filter(|&&t| v >= t).count(),
                };
                Ok(self.labels[bin].clone())
            }
            // already-binned dumps reload unchanged
            _ if self.labels.iter().any(|l| l == value) => Ok(value.to_string()),
            _ => Err(Error::Unbinnable {
                column: column.to_string(),
                value: value.to_string(),
            }),
        }
    }
}

impl MergeRule {
    fn lookup(&self) -> Result<HashMap<&str, &str>> {
        let mut m = HashMap::new();
        for (target, sources) in &self.groups {
            for s in sources {
                if let Some(prev) = m.insert(s.as_str(), target.as_str()) {
                    if prev != target {
                        return Err(Error::Config(format!(
                            "merge source `{s}` maps to both `{prev}` and `{target}`"
                        )));
                    }
                }
            }
        }
        Ok(m)
    }
}

impl DiscretizationConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Config that keeps every named column as-is.
    pub fn passthrough<S: AsRef<str>>(columns: &[S]) -> Self {
        Self {
            null_values: Vec::new(),
            pre_transform: Vec::new(),
            columns: columns
                .iter()
                .map(|c| ColumnRule {
                    name: c.as_ref().to_string(),
                    source: None,
                    bins: None,
                    merge: None,
                })
                .collect(),
            drop: Vec::new(),
            protected: Vec::new(),
            label: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for c in &self.columns {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Config(format!("column `{}` listed twice", c.name)));
            }
            if c.bins.is_some() && c.merge.is_some() {
                return Err(Error::Config(format!(
                    "column `{}` has both bins and merge",
                    c.name
                )));
            }
            if let Some(b) = &c.bins {
                b.validate(&c.name)?;
            }
            if let Some(m) = &c.merge {
                m.lookup()?;
            }
        }
        if self.columns.is_empty() {
            return Err(Error::Config("no columns retained".into()));
        }
        for p in &self.protected {
            if !names.contains(p.name.as_str()) {
                return Err(Error::Config(format!("protected `{}` is not a column", p.name)));
            }
        }
        if let Some(l) = &self.label {
            if !names.contains(l.name.as_str()) {
                return Err(Error::Config(format!("label `{}` is not a column", l.name)));
            }
        }
        Ok(())
    }
}

enum Compiled<'a> {
    Pass,
    Bins(&'a BinRule),
    Merge {
        lookup: HashMap<&'a str, &'a str>,
        targets: BTreeSet<&'a str>,
        default: Option<&'a str>,
    },
}

/// Column lookup over raw + derived values for one record.
struct RowView<'a> {
    raw: &'a csv::StringRecord,
    raw_index: &'a HashMap<String, usize>,
    derived: Vec<Option<String>>,
    derived_index: &'a HashMap<String, usize>,
}

impl RowView<'_> {
    fn get(&self, column: &str) -> Option<&str> {
        if let Some(&i) = self.derived_index.get(column) {
            return self.derived[i].as_deref();
        }
        self.raw_index.get(column).map(|&i| self.raw.get(i).unwrap_or(""))
    }
}

fn is_null(value: &str, nulls: &[String]) -> bool {
    let v = value.trim();
    v.is_empty() || nulls.iter().any(|n| n == v)
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn load_csv(path: &Path, config: &DiscretizationConfig) -> Result<(Schema, DataTable)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let (schema, table) = load_csv_reader(std::io::BufReader::new(f), config)?;
    log::info!(
        "loaded {}: {} rows, {} attributes",
        path.display(),
        table.n_rows(),
        schema.len()
    );
    Ok((schema, table))
}

pub fn load_csv_reader<R: Read>(input: R, config: &DiscretizationConfig) -> Result<(Schema, DataTable)> {
    config.validate()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers()?.clone();
    // duplicated header names resolve to their first occurrence
    let mut raw_index = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        raw_index.entry(h.trim().to_string()).or_insert(i);
    }

    let mut derived_index = HashMap::new();
    for t in &config.pre_transform {
        let mut need = |c: &String| -> Result<()> {
            if raw_index.contains_key(c) || derived_index.contains_key(c) {
                Ok(())
            } else {
                Err(Error::MissingColumn(c.clone()))
            }
        };
        match t {
            PreTransform::Sum { columns, into } => {
                columns.iter().try_for_each(&mut need)?;
                let n = derived_index.len();
                derived_index.insert(into.clone(), n);
            }
            PreTransform::Map { column, into, .. } => {
                need(column)?;
                let n = derived_index.len();
                derived_index.insert(into.clone(), n);
            }
            PreTransform::FilterRange { column, .. } | PreTransform::FilterValues { column, .. } => {
                need(column)?
            }
        }
    }
    for d in &config.drop {
        if !raw_index.contains_key(d) {
            return Err(Error::MissingColumn(d.clone()));
        }
    }

    let rules: Vec<(String, Compiled)> = config
        .columns
        .iter()
        .map(|c| {
            let source = c.source.clone().unwrap_or_else(|| c.name.clone());
            if !raw_index.contains_key(&source) && !derived_index.contains_key(&source) {
                return Err(Error::MissingColumn(source));
            }
            let compiled = match (&c.bins, &c.merge) {
                (Some(b), _) => Compiled::Bins(b),
                (None, Some(m)) => Compiled::Merge {
                    lookup: m.lookup()?,
                    targets: m.groups.keys().map(String::as_str).collect(),
                    default: m.default.as_deref(),
                },
                (None, None) => Compiled::Pass,
            };
            Ok((source, compiled))
        })
        .collect::<Result<_>>()?;

    let mut labels: Vec<Vec<String>> = Vec::new();
    let mut dropped_null = 0usize;
    let mut filtered = 0usize;
    'records: for rec in reader.records() {
        let rec = rec?;
        let mut view = RowView {
            raw: &rec,
            raw_index: &raw_index,
            derived: vec![None; derived_index.len()],
            derived_index: &derived_index,
        };
        for t in &config.pre_transform {
            match t {
                PreTransform::Sum { columns, into } => {
                    let mut total = Some(0.0);
                    for c in columns {
                        let v = view.get(c).unwrap_or("");
                        total = match (total, v.trim().parse::<f64>()) {
                            (Some(acc), Ok(x)) if !is_null(v, &config.null_values) => Some(acc + x),
                            _ => None,
                        };
                    }
                    view.derived[derived_index[into]] = total.map(format_number);
                }
                PreTransform::Map { column, into, map } => {
                    let v = view.get(column).unwrap_or("").trim();
                    view.derived[derived_index[into]] = map.get(v).cloned();
                }
                PreTransform::FilterRange { column, min, max } => {
                    let v = view.get(column).unwrap_or("");
                    let keep = !is_null(v, &config.null_values)
                        && v.trim().parse::<f64>().is_ok_and(|x| {
                            min.is_none_or(|m| x >= m) && max.is_none_or(|m| x <= m)
                        });
                    if !keep {
                        filtered += 1;
                        continue 'records;
                    }
                }
                PreTransform::FilterValues {
                    column,
                    keep,
                    exclude,
                } => {
                    let v = view.get(column).unwrap_or("").trim();
                    let kept = !is_null(v, &config.null_values)
                        && keep.as_ref().is_none_or(|k| k.iter().any(|x| x == v))
                        && !exclude.iter().any(|x| x == v);
                    if !kept {
                        filtered += 1;
                        continue 'records;
                    }
                }
            }
        }

        let mut row = Vec::with_capacity(rules.len());
        for ((source, rule), col) in rules.iter().zip(&config.columns) {
            let v = match view.get(source) {
                Some(v) if !is_null(v, &config.null_values) => v.trim(),
                _ => {
                    dropped_null += 1;
                    continue 'records;
                }
            };
            let label = match rule {
                Compiled::Pass => v.to_string(),
                Compiled::Bins(b) => b.apply(&col.name, v)?,
                Compiled::Merge {
                    lookup,
                    targets,
                    default,
                } => match lookup.get(v) {
                    Some(t) => t.to_string(),
                    None if targets.contains(v) => v.to_string(),
                    None => match default {
                        Some(d) => d.to_string(),
                        None => {
                            return Err(Error::Unmergeable {
                                column: col.name.clone(),
                                value: v.to_string(),
                            })
                        }
                    },
                },
            };
            row.push(label);
        }
        labels.push(row);
    }
    if filtered > 0 || dropped_null > 0 {
        log::info!("ingest: {filtered} rows filtered, {dropped_null} rows dropped for nulls");
    }

    let mut attributes = Vec::with_capacity(config.columns.len());
    for (j, col) in config.columns.iter().enumerate() {
        let cats: BTreeSet<&str> = labels.iter().map(|r| r[j].as_str()).collect();
        if cats.is_empty() {
            return Err(Error::EmptyTable);
        }
        attributes.push(Attribute::new(
            col.name.clone(),
            cats.into_iter().map(str::to_string).collect(),
        ));
    }
    let protected = config
        .columns
        .iter()
        .map(|c| config.protected.iter().any(|p| p.name == c.name))
        .collect();
    let schema = Schema::new(attributes, protected, config.label.as_ref().map(|l| l.name.clone()))?;

    let lookup: Vec<HashMap<&str, usize>> = schema
        .attributes()
        .iter()
        .map(|a| a.categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect())
        .collect();
    let mut cells = Vec::with_capacity(labels.len() * schema.len());
    for row in &labels {
        cells.extend(row.iter().zip(&lookup).map(|(l, m)| m[l.as_str()]));
    }
    let arc = Arc::new(schema.clone());
    let table = DataTable::from_flat(arc, (0..schema.len()).collect(), cells)?;
    Ok((schema, table))
}
