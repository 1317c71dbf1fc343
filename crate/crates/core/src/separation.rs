//! Column separation of a complete table into an internal dataset (model
//! features and label) and an external dataset (protected attributes),
//! bridged by the overlap attributes.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::Schema;
use crate::table::DataTable;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparationSpec {
    pub internal: Vec<String>,
    pub external: Vec<String>,
    pub overlap: Vec<String>,
}

/// A separation checked against a schema; attribute lists are schema indices
/// in schema order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Separation {
    pub internal: Vec<usize>,
    pub external: Vec<usize>,
    pub overlap: Vec<usize>,
}

impl Separation {
    pub fn internal_only(&self) -> Vec<usize> {
        self.internal.iter().copied().filter(|a| !self.overlap.contains(a)).collect()
    }

    pub fn external_only(&self) -> Vec<usize> {
        self.external.iter().copied().filter(|a| !self.overlap.contains(a)).collect()
    }
}

impl SeparationSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn resolve(&self, schema: &Schema) -> Result<Separation> {
        let set = |names: &[String], what: &str| -> Result<BTreeSet<usize>> {
            let mut s = BTreeSet::new();
            for n in names {
                if !s.insert(schema.require(n)?) {
                    return Err(Error::Config(format!("`{n}` listed twice in {what}")));
                }
            }
            Ok(s)
        };
        let internal = set(&self.internal, "internal")?;
        let external = set(&self.external, "external")?;
        let overlap = set(&self.overlap, "overlap")?;

        if overlap.is_empty() {
            return Err(Error::Config("overlap must be non-empty".into()));
        }
        let both: BTreeSet<usize> = internal.intersection(&external).copied().collect();
        if both != overlap {
            return Err(Error::Config(format!(
                "internal ∩ external = {:?} but overlap = {:?}",
                names(schema, &both),
                names(schema, &overlap)
            )));
        }
        let union: BTreeSet<usize> = internal.union(&external).copied().collect();
        if union.len() != schema.len() {
            let missing: BTreeSet<usize> = (0..schema.len()).filter(|a| !union.contains(a)).collect();
            return Err(Error::Config(format!(
                "attributes in neither dataset: {:?}",
                names(schema, &missing)
            )));
        }
        if let Some(label) = schema.label_index() {
            if !internal.contains(&label) {
                return Err(Error::Config(format!(
                    "label `{}` must be in the internal dataset",
                    schema.name(label)
                )));
            }
        }
        for p in schema.protected_indices() {
            if internal.contains(&p) {
                return Err(Error::Config(format!(
                    "protected attribute `{}` must be external-only",
                    schema.name(p)
                )));
            }
        }
        Ok(Separation {
            internal: internal.into_iter().collect(),
            external: external.into_iter().collect(),
            overlap: overlap.into_iter().collect(),
        })
    }
}

fn names(schema: &Schema, set: &BTreeSet<usize>) -> Vec<String> {
    set.iter().map(|&a| schema.name(a).to_string()).collect()
}

/// Splits a complete table by column. Both outputs keep every row in the
/// original order; overlap attributes appear in both.
pub fn separate_columns(table: &DataTable, spec: &SeparationSpec) -> Result<(DataTable, DataTable)> {
    let sep = spec.resolve(table.schema())?;
    Ok((table.project(&sep.internal)?, table.project(&sep.external)?))
}
