//! Attribute universe shared by every table and model.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub categories: Vec<String>,
}

impl Attribute {
    pub fn new(name: impl Into<String>, categories: Vec<String>) -> Self {
        Self {
            name: name.into(),
            categories,
        }
    }

    pub fn cardinality(&self) -> usize {
        self.categories.len()
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaRepr {
    attributes: Vec<Attribute>,
    protected: Vec<bool>,
    label: Option<String>,
}

/// Ordered categorical attributes plus protected flags and the optional
/// binary label. Category order is the coordinate system for every table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr", into = "SchemaRepr")]
pub struct Schema {
    attributes: Vec<Attribute>,
    protected: Vec<bool>,
    label: Option<String>,
}

impl TryFrom<SchemaRepr> for Schema {
    type Error = Error;

    fn try_from(r: SchemaRepr) -> Result<Self> {
        Schema::new(r.attributes, r.protected, r.label)
    }
}

impl From<Schema> for SchemaRepr {
    fn from(s: Schema) -> Self {
        SchemaRepr {
            attributes: s.attributes,
            protected: s.protected,
            label: s.label,
        }
    }
}

impl Schema {
    pub fn new(
        attributes: Vec<Attribute>,
        protected: Vec<bool>,
        label: Option<String>,
    ) -> Result<Self> {
        if protected.len() != attributes.len() {
            return Err(Error::Schema(format!(
                "{} protected flags for {} attributes",
                protected.len(),
                attributes.len()
            )));
        }
        let mut names = HashSet::new();
        for a in &attributes {
            if !names.insert(a.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{}`", a.name)));
            }
            if a.categories.is_empty() {
                return Err(Error::Schema(format!("attribute `{}` has no categories", a.name)));
            }
            let mut seen = HashSet::new();
            for c in &a.categories {
                if !seen.insert(c.as_str()) {
                    return Err(Error::Schema(format!(
                        "attribute `{}` repeats category `{c}`",
                        a.name
                    )));
                }
            }
        }
        if let Some(l) = &label {
            let a = attributes
                .iter()
                .find(|a| &a.name == l)
                .ok_or_else(|| Error::Schema(format!("label `{l}` is not an attribute")))?;
            if a.cardinality() != 2 {
                return Err(Error::Schema(format!(
                    "label `{l}` must have exactly 2 categories, has {}",
                    a.cardinality()
                )));
            }
        }
        Ok(Self {
            attributes,
            protected,
            label,
        })
    }

    /// Schema with no protected attributes and no label.
    pub fn plain(attributes: Vec<Attribute>) -> Result<Self> {
        let n = attributes.len();
        Self::new(attributes, vec![false; n], None)
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, i: usize) -> &Attribute {
        &self.attributes[i]
    }

    pub fn name(&self, i: usize) -> &str {
        &self.attributes[i].name
    }

    pub fn cardinality(&self, i: usize) -> usize {
        self.attributes[i].cardinality()
    }

    pub fn cardinalities(&self, attrs: &[usize]) -> Vec<usize> {
        attrs.iter().map(|&a| self.cardinality(a)).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    /// Resolves names to schema indices, preserving the given order.
    pub fn resolve<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.require(n.as_ref())).collect()
    }

    pub fn is_protected(&self, i: usize) -> bool {
        self.protected[i]
    }

    pub fn protected_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.protected[i]).collect()
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn label_index(&self) -> Option<usize> {
        self.label.as_deref().and_then(|l| self.index_of(l))
    }

    pub fn category_index(&self, attr: usize, label: &str) -> Result<usize> {
        self.attributes[attr]
            .category_index(label)
            .ok_or_else(|| Error::UnknownCategory {
                column: self.attributes[attr].name.clone(),
                value: label.to_string(),
            })
    }

    /// Number of cells in the product space of `attrs`, if it fits in u64.
    pub fn product_size(&self, attrs: &[usize]) -> Option<u64> {
        attrs
            .iter()
            .try_fold(1u64, |acc, &a| acc.checked_mul(self.cardinality(a) as u64))
    }
}
