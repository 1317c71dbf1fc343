//! Row-major tables of category indices.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::schema::Schema;
use crate::seed;

/// Rows of category indices over a subset of schema attributes.
///
/// `attrs` holds schema indices; column `j` of every row indexes into the
/// categories of `schema.attribute(attrs[j])`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataTable {
    schema: Arc<Schema>,
    attrs: Vec<usize>,
    cells: Vec<usize>,
}

impl DataTable {
    pub fn from_flat(schema: Arc<Schema>, attrs: Vec<usize>, cells: Vec<usize>) -> Result<Self> {
        if attrs.is_empty() {
            return Err(Error::InvalidArgument("a table needs at least one attribute".into()));
        }
        let mut seen = vec![false; schema.len()];
        for &a in &attrs {
            if a >= schema.len() {
                return Err(Error::IndexOutOfRange(format!("attribute index {a}")));
            }
            if std::mem::replace(&mut seen[a], true) {
                return Err(Error::InvalidArgument(format!(
                    "attribute `{}` listed twice",
                    schema.name(a)
                )));
            }
        }
        if cells.len() % attrs.len() != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} cells do not form rows of width {}",
                cells.len(),
                attrs.len()
            )));
        }
        let cards = schema.cardinalities(&attrs);
        for row in cells.chunks_exact(attrs.len()) {
            for (j, (&v, &card)) in row.iter().zip(&cards).enumerate() {
                if v >= card {
                    return Err(Error::IndexOutOfRange(format!(
                        "category {v} of `{}` (cardinality {card})",
                        schema.name(attrs[j])
                    )));
                }
            }
        }
        Ok(Self {
            schema,
            attrs,
            cells,
        })
    }

    pub fn from_rows(schema: Arc<Schema>, attrs: Vec<usize>, rows: &[Vec<usize>]) -> Result<Self> {
        let width = attrs.len();
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::InvalidArgument(format!(
                "row of width {} in a table of width {width}",
                r.len()
            )));
        }
        Self::from_flat(schema, attrs, rows.concat())
    }

    /// Table over every schema attribute, in schema order.
    pub fn full(schema: Arc<Schema>, rows: &[Vec<usize>]) -> Result<Self> {
        let attrs = (0..schema.len()).collect();
        Self::from_rows(schema, attrs, rows)
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn attrs(&self) -> &[usize] {
        &self.attrs
    }

    pub fn attr_names(&self) -> Vec<&str> {
        self.attrs.iter().map(|&a| self.schema.name(a)).collect()
    }

    pub fn width(&self) -> usize {
        self.attrs.len()
    }

    pub fn n_rows(&self) -> usize {
        self.cells.len() / self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        let w = self.width();
        &self.cells[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, usize> {
        self.cells.chunks_exact(self.width())
    }

    /// Column position of a schema attribute, if the table carries it.
    pub fn position(&self, attr: usize) -> Option<usize> {
        self.attrs.iter().position(|&a| a == attr)
    }

    pub fn position_of(&self, name: &str) -> Result<usize> {
        let attr = self.schema.require(name)?;
        self.position(attr)
            .ok_or_else(|| Error::UnknownAttribute(format!("{name} (not in this table)")))
    }

    pub fn column(&self, pos: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows().map(move |r| r[pos])
    }

    pub fn has_full_schema(&self) -> bool {
        self.attrs.len() == self.schema.len() && self.attrs.iter().enumerate().all(|(i, &a)| i == a)
    }

    pub fn select_rows(&self, indices: &[usize]) -> DataTable {
        let mut cells = Vec::with_capacity(indices.len() * self.width());
        for &i in indices {
            cells.extend_from_slice(self.row(i));
        }
        DataTable {
            schema: self.schema.clone(),
            attrs: self.attrs.clone(),
            cells,
        }
    }

    /// Keeps the given schema attributes (in the given order).
    pub fn project(&self, attrs: &[usize]) -> Result<DataTable> {
        let positions = attrs
            .iter()
            .map(|&a| {
                self.position(a).ok_or_else(|| {
                    Error::UnknownAttribute(format!("{} (not in this table)", self.schema.name(a)))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut cells = Vec::with_capacity(self.n_rows() * positions.len());
        for row in self.rows() {
            cells.extend(positions.iter().map(|&p| row[p]));
        }
        DataTable::from_flat(self.schema.clone(), attrs.to_vec(), cells)
    }

    /// Row-wise join of two tables with the same row count. Attributes present
    /// in both must agree cell for cell. The result is in schema order.
    pub fn join_columns(&self, other: &DataTable) -> Result<DataTable> {
        if self.n_rows() != other.n_rows() {
            return Err(Error::InvalidArgument(format!(
                "cannot join {} rows with {} rows",
                self.n_rows(),
                other.n_rows()
            )));
        }
        let mut attrs: Vec<usize> = self.attrs.iter().chain(&other.attrs).copied().collect();
        attrs.sort_unstable();
        attrs.dedup();
        let mut cells = Vec::with_capacity(self.n_rows() * attrs.len());
        for (a_row, b_row) in self.rows().zip(other.rows()) {
            for &attr in &attrs {
                let left = self.position(attr).map(|p| a_row[p]);
                let right = other.position(attr).map(|p| b_row[p]);
                let v = match (left, right) {
                    (Some(l), Some(r)) if l != r => {
                        return Err(Error::InvalidArgument(format!(
                            "tables disagree on `{}`",
                            self.schema.name(attr)
                        )))
                    }
                    (Some(v), _) | (None, Some(v)) => v,
                    (None, None) => unreachable!(),
                };
                cells.push(v);
            }
        }
        DataTable::from_flat(self.schema.clone(), attrs, cells)
    }

    /// Writes the canonical dump: header of attribute names, cells as labels.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(self.attr_names())?;
        let mut record = Vec::with_capacity(self.width());
        for row in self.rows() {
            record.clear();
            record.extend(
                row.iter()
                    .zip(&self.attrs)
                    .map(|(&v, &a)| self.schema.attribute(a).categories[v].as_str()),
            );
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads a canonical dump against an existing schema. The header may name
    /// any subset of schema attributes; the table keeps the header order.
    pub fn read_csv<R: Read>(schema: Arc<Schema>, input: R) -> Result<DataTable> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = r.headers()?.clone();
        let attrs = header
            .iter()
            .map(|h| schema.require(h))
            .collect::<Result<Vec<_>>>()?;
        let mut cells = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            for (value, &a) in rec.iter().zip(&attrs) {
                cells.push(schema.category_index(a, value)?);
            }
        }
        DataTable::from_flat(schema, attrs, cells)
    }

    pub fn read_csv_file(schema: Arc<Schema>, path: &Path) -> Result<DataTable> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(schema, std::io::BufReader::new(f))
    }
}

/// Seeded uniform shuffle, then the first `round(test_fraction * N)` shuffled
/// rows become the test set. Both parts keep the shuffled order.
pub fn holdout_split(table: &DataTable, test_fraction: f64, seed: u64) -> Result<(DataTable, DataTable)> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = table.n_rows();
    let n_test = (test_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let (test_idx, train_idx) = order.split_at(n_test);
    log::info!("holdout split: {} train rows, {} test rows", train_idx.len(), test_idx.len());
    Ok((table.select_rows(train_idx), table.select_rows(test_idx)))
}
