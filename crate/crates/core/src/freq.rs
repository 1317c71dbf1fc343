//! Empirical probability tables over attribute subsets.
//!
//! Cells are addressed by a mixed-radix code (last attribute varies fastest),
//! so a code sequence is row-major schema order. Only non-zero cells are
//! stored: the internal block of a wide schema has a product space far too
//! large to hold densely, while the number of observed cells is bounded by
//! the row count.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::Schema;
use crate::table::DataTable;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Radix {
    dims: Vec<usize>,
    strides: Vec<u64>,
    size: u64,
}

impl TryFrom<Vec<usize>> for Radix {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Radix::new(dims)
    }
}

impl From<Radix> for Vec<usize> {
    fn from(r: Radix) -> Self {
        r.dims
    }
}

impl Radix {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        let mut strides = vec![0u64; dims.len()];
        let mut size = 1u64;
        for i in (0..dims.len()).rev() {
            strides[i] = size;
            size = size
                .checked_mul(dims[i] as u64)
                .ok_or_else(|| Error::InvalidArgument("product space exceeds u64".into()))?;
        }
        Ok(Self { dims, strides, size })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn encode(&self, idx: &[usize]) -> u64 {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter().zip(&self.strides).map(|(&i, &s)| i as u64 * s).sum()
    }

    pub fn decode(&self, mut code: u64, out: &mut [usize]) {
        for (o, &s) in out.iter_mut().zip(&self.strides) {
            *o = (code / s) as usize;
            code %= s;
        }
    }

    pub fn decode_vec(&self, code: u64) -> Vec<usize> {
        let mut v = vec![0; self.dims.len()];
        self.decode(code, &mut v);
        v
    }
}

/// Normalised counts over `attrs` (schema indices). Cells are `(code, p)`
/// pairs sorted by code with `p > 0`; absent codes have probability zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct FrequencyTable {
    attrs: Vec<usize>,
    radix: Radix,
    cells: Vec<(u64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    attrs: Vec<usize>,
    dims: Vec<usize>,
    cells: Vec<(u64, f64)>,
}

impl TryFrom<TableRepr> for FrequencyTable {
    type Error = Error;

    fn try_from(r: TableRepr) -> Result<Self> {
        FrequencyTable::from_cells(r.attrs, r.dims, r.cells)
    }
}

impl From<FrequencyTable> for TableRepr {
    fn from(t: FrequencyTable) -> Self {
        TableRepr {
            attrs: t.attrs,
            dims: t.radix.dims,
            cells: t.cells,
        }
    }
}

impl FrequencyTable {
    pub fn from_cells(attrs: Vec<usize>, dims: Vec<usize>, cells: Vec<(u64, f64)>) -> Result<Self> {
        let radix = Radix::new(dims)?;
        let t = Self { attrs, radix, cells };
        t.check()?;
        Ok(t)
    }

    /// Builds a table from a dense row-major probability array.
    pub fn from_dense(attrs: Vec<usize>, dims: Vec<usize>, probs: &[f64]) -> Result<Self> {
        let radix = Radix::new(dims)?;
        if probs.len() as u64 != radix.size() {
            return Err(Error::InvalidArgument(format!(
                "{} probabilities for {} cells",
                probs.len(),
                radix.size()
            )));
        }
        let cells = probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(i, &p)| (i as u64, p))
            .collect();
        let t = Self { attrs, radix, cells };
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<()> {
        if self.attrs.len() != self.radix.dims().len() {
            return Err(Error::InvalidArgument("attrs and dims differ in length".into()));
        }
        let mut total = 0.0;
        let mut prev = None;
        for &(c, p) in &self.cells {
            if c >= self.radix.size() || prev.is_some_and(|q| q >= c) {
                return Err(Error::InvalidArgument("cell codes must be sorted and in range".into()));
            }
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidArgument(format!("invalid probability {p}")));
            }
            prev = Some(c);
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("cells sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn attrs(&self) -> &[usize] {
        &self.attrs
    }

    pub fn radix(&self) -> &Radix {
        &self.radix
    }

    pub fn dims(&self) -> &[usize] {
        self.radix.dims()
    }

    pub fn cells(&self) -> &[(u64, f64)] {
        &self.cells
    }

    pub fn prob_code(&self, code: u64) -> f64 {
        match self.cells.binary_search_by_key(&code, |&(c, _)| c) {
            Ok(i) => self.cells[i].1,
            Err(_) => 0.0,
        }
    }

    /// Probability of a cell given one index per attribute in `attrs` order.
    pub fn prob(&self, idx: &[usize]) -> f64 {
        self.prob_code(self.radix.encode(idx))
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().map(|&(_, p)| p).sum()
    }

    /// Dense row-major array; fails when the product space is too large.
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        const LIMIT: u64 = 1 << 26;
        if self.radix.size() > LIMIT {
            return Err(Error::InvalidArgument(format!(
                "{} cells is too many for a dense table",
                self.radix.size()
            )));
        }
        let mut v = vec![0.0; self.radix.size() as usize];
        for &(c, p) in &self.cells {
            v[c as usize] = p;
        }
        Ok(v)
    }

    /// Sums out every attribute not in `keep`; result follows `keep` order.
    pub fn marginalize(&self, keep: &[usize]) -> Result<FrequencyTable> {
        let positions = keep
            .iter()
            .map(|a| {
                self.attrs
                    .iter()
                    .position(|x| x == a)
                    .ok_or_else(|| Error::UnknownAttribute(format!("attribute index {a}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let dims: Vec<usize> = positions.iter().map(|&p| self.radix.dims()[p]).collect();
        let out_radix = Radix::new(dims)?;
        let mut full = vec![0; self.attrs.len()];
        let mut part = vec![0; keep.len()];
        let mut acc: BTreeMap<u64, f64> = BTreeMap::new();
        for &(c, p) in &self.cells {
            self.radix.decode(c, &mut full);
            for (o, &pos) in part.iter_mut().zip(&positions) {
                *o = full[pos];
            }
            *acc.entry(out_radix.encode(&part)).or_insert(0.0) += p;
        }
        Ok(FrequencyTable {
            attrs: keep.to_vec(),
            radix: out_radix,
            cells: acc.into_iter().collect(),
        })
    }
}

/// Counts rows by cell over `attrs` (schema indices). Returns the sorted
/// `(code, count)` list and the radix.
pub fn count_cells(table: &DataTable, attrs: &[usize]) -> Result<(Radix, Vec<(u64, usize)>)> {
    let positions = attrs
        .iter()
        .map(|&a| {
            table.position(a).ok_or_else(|| {
                Error::UnknownAttribute(format!("{} (not in this table)", table.schema().name(a)))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let radix = Radix::new(table.schema().cardinalities(attrs))?;
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    let mut idx = vec![0; attrs.len()];
    for row in table.rows() {
        for (o, &p) in idx.iter_mut().zip(&positions) {
            *o = row[p];
        }
        *counts.entry(radix.encode(&idx)).or_insert(0) += 1;
    }
    Ok((radix, counts.into_iter().collect()))
}

/// Empirical distribution `count / N` over the named attributes.
pub fn empirical_table<S: AsRef<str>>(table: &DataTable, attrs: &[S]) -> Result<FrequencyTable> {
    let idx = table.schema().resolve(attrs)?;
    empirical_table_idx(table, &idx)
}

pub fn empirical_table_idx(table: &DataTable, attrs: &[usize]) -> Result<FrequencyTable> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    let n = table.n_rows() as f64;
    let (radix, counts) = count_cells(table, attrs)?;
    Ok(FrequencyTable {
        attrs: attrs.to_vec(),
        radix,
        cells: counts.into_iter().map(|(c, k)| (c, k as f64 / n)).collect(),
    })
}

/// Dense singleton distribution of one attribute.
pub fn singleton(table: &DataTable, attr: usize) -> Result<Vec<f64>> {
    empirical_table_idx(table, &[attr])?.to_dense()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingScope {
    /// No pseudo-counts; a conditional given an unobserved overlap cell is an error.
    Off,
    /// Pseudo-counts only on conditional slices whose overlap cell has no rows.
    EmptySlices,
    /// Laplace pseudo-counts on every cell of every conditional slice.
    AllCells,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub alpha: f64,
    pub scope: SmoothingScope,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            scope: SmoothingScope::EmptySlices,
        }
    }
}

impl Smoothing {
    pub fn off() -> Self {
        Self {
            alpha: 0.0,
            scope: SmoothingScope::Off,
        }
    }

    pub fn laplace(alpha: f64) -> Self {
        Self {
            alpha,
            scope: SmoothingScope::AllCells,
        }
    }

    /// Weight of the uniform component for a slice holding `count` rows over
    /// `cells` target cells; `(c + a) / (C + a T)` equals
    /// `(1 - w) c / C + w / T` with `w = a T / (C + a T)`.
    fn uniform_weight(&self, count: usize, cells: u64) -> Option<f64> {
        let pseudo = self.alpha * cells as f64;
        match self.scope {
            SmoothingScope::Off => (count > 0).then_some(0.0),
            SmoothingScope::EmptySlices if count > 0 => Some(0.0),
            SmoothingScope::EmptySlices | SmoothingScope::AllCells => {
                if count == 0 && pseudo <= 0.0 {
                    None
                } else {
                    Some(pseudo / (count as f64 + pseudo))
                }
            }
        }
    }
}

/// `p(target | given)` for one given cell: a mixture of the empirical
/// conditional and a uniform component over the target product space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    /// Sorted `(target code, p)` with `p > 0`, summing to 1; empty when the
    /// slice saw no rows.
    pub empirical: Vec<(u64, f64)>,
    pub uniform_weight: f64,
    /// Row count behind the slice.
    pub count: usize,
}

impl Slice {
    fn is_defined(&self) -> bool {
        !self.empirical.is_empty() || self.uniform_weight > 0.0
    }

    fn prob(&self, code: u64, size: u64) -> f64 {
        let emp = match self.empirical.binary_search_by_key(&code, |&(c, _)| c) {
            Ok(i) => self.empirical[i].1,
            Err(_) => 0.0,
        };
        (1.0 - self.uniform_weight) * emp + self.uniform_weight / size as f64
    }
}

/// Conditional table `p(target | given)`, one slice per given cell (dense
/// over the given product space, which is the overlap).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    given: Vec<usize>,
    target: Vec<usize>,
    given_radix: Radix,
    target_radix: Radix,
    slices: Vec<Slice>,
}

impl ConditionalTable {
    pub fn fit(table: &DataTable, given: &[usize], target: &[usize], smoothing: Smoothing) -> Result<Self> {
        let schema = table.schema();
        let given_radix = Radix::new(schema.cardinalities(given))?;
        let target_radix = Radix::new(schema.cardinalities(target))?;
        if given_radix.size() > 1 << 24 {
            return Err(Error::InvalidArgument(format!(
                "overlap space of {} cells is too large",
                given_radix.size()
            )));
        }
        let all: Vec<usize> = given.iter().chain(target).copied().collect();
        let (joint_radix, counts) = count_cells(table, &all)?;
        let mut per_slice: Vec<Vec<(u64, usize)>> = vec![Vec::new(); given_radix.size() as usize];
        let mut idx = vec![0; all.len()];
        for (code, k) in counts {
            joint_radix.decode(code, &mut idx);
            let g = given_radix.encode(&idx[..given.len()]);
            let t = target_radix.encode(&idx[given.len()..]);
            per_slice[g as usize].push((t, k));
        }
        let slices = per_slice
            .into_iter()
            .map(|mut cells| {
                cells.sort_unstable();
                let count: usize = cells.iter().map(|&(_, k)| k).sum();
                let uniform_weight = smoothing.uniform_weight(count, target_radix.size()).unwrap_or(0.0);
                Slice {
                    empirical: cells.into_iter().map(|(c, k)| (c, k as f64 / count as f64)).collect(),
                    uniform_weight,
                    count,
                }
            })
            .collect();
        Ok(Self {
            given: given.to_vec(),
            target: target.to_vec(),
            given_radix,
            target_radix,
            slices,
        })
    }

    pub fn given(&self) -> &[usize] {
        &self.given
    }

    pub fn target(&self) -> &[usize] {
        &self.target
    }

    pub fn given_radix(&self) -> &Radix {
        &self.given_radix
    }

    pub fn target_radix(&self) -> &Radix {
        &self.target_radix
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn slice(&self, given_code: u64) -> &Slice {
        &self.slices[given_code as usize]
    }

    /// Errors if any given cell with positive weight has an undefined slice.
    pub fn require_defined(&self, weights: impl Fn(u64) -> f64, schema: &Schema) -> Result<()> {
        for (g, s) in self.slices.iter().enumerate() {
            if weights(g as u64) > 0.0 && !s.is_defined() {
                let cell = self.given_radix.decode_vec(g as u64);
                let desc: Vec<String> = self
                    .given
                    .iter()
                    .zip(&cell)
                    .map(|(&a, &v)| format!("{}={}", schema.name(a), schema.attribute(a).categories[v]))
                    .collect();
                return Err(Error::UndefinedConditional(format!(
                    "no rows with {} in the dataset holding {:?}; enable smoothing",
                    desc.join(", "),
                    self.target.iter().map(|&a| schema.name(a)).collect::<Vec<_>>()
                )));
            }
        }
        Ok(())
    }

    pub fn prob_code(&self, given_code: u64, target_code: u64) -> f64 {
        self.slices[given_code as usize].prob(target_code, self.target_radix.size())
    }

    pub fn prob(&self, given: &[usize], target: &[usize]) -> f64 {
        self.prob_code(self.given_radix.encode(given), self.target_radix.encode(target))
    }

    /// Marginalises the target onto `keep` (a subset of the target
    /// attributes, in any order). The given side is unchanged.
    pub fn project_target(&self, keep: &[usize]) -> Result<ConditionalTable> {
        let positions = keep
            .iter()
            .map(|a| {
                self.target
                    .iter()
                    .position(|x| x == a)
                    .ok_or_else(|| Error::UnknownAttribute(format!("attribute index {a}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let out_radix = Radix::new(positions.iter().map(|&p| self.target_radix.dims()[p]).collect())?;
        let mut full = vec![0; self.target.len()];
        let mut part = vec![0; keep.len()];
        let slices = self
            .slices
            .iter()
            .map(|s| {
                let mut acc: BTreeMap<u64, f64> = BTreeMap::new();
                for &(c, p) in &s.empirical {
                    self.target_radix.decode(c, &mut full);
                    for (o, &pos) in part.iter_mut().zip(&positions) {
                        *o = full[pos];
                    }
                    *acc.entry(out_radix.encode(&part)).or_insert(0.0) += p;
                }
                Slice {
                    empirical: acc.into_iter().collect(),
                    uniform_weight: s.uniform_weight,
                    count: s.count,
                }
            })
            .collect();
        Ok(ConditionalTable {
            given: self.given.clone(),
            target: keep.to_vec(),
            given_radix: self.given_radix.clone(),
            target_radix: out_radix,
            slices,
        })
    }

    /// Largest deviation from 1 of any defined slice's total mass.
    pub fn max_simplex_error(&self) -> f64 {
        self.slices
            .iter()
            .filter(|s| s.is_defined())
            .map(|s| {
                // an empty slice is only defined with w = 1
                let emp: f64 = s.empirical.iter().map(|&(_, p)| p).sum();
                ((1.0 - s.uniform_weight) * emp + s.uniform_weight - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Attribute;
    use std::sync::Arc;

    fn schema(cards: &[usize]) -> Arc<Schema> {
        Arc::new(
            Schema::plain(
                cards
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| Attribute::new(format!("x{}", i + 1), (0..k).map(|c| c.to_string()).collect()))
                    .collect(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn radix_round_trip() {
        let r = Radix::new(vec![3, 2, 4]).unwrap();
        assert_eq!(r.size(), 24);
        for code in 0..24 {
            assert_eq!(r.encode(&r.decode_vec(code)), code);
        }
        assert_eq!(r.encode(&[1, 0, 2]), 1 * 8 + 2);
        assert!(Radix::new(vec![1 << 32, 1 << 32, 2]).is_err());
    }

    #[test]
    fn counting_binary() {
        let s = schema(&[2]);
        let t = DataTable::full(s, &[vec![0], vec![0], vec![0], vec![1]]).unwrap();
        let f = empirical_table(&t, &["x1"]).unwrap();
        assert_eq!(f.to_dense().unwrap(), vec![0.75, 0.25]);
    }

    #[test]
    fn single_row_full_table() {
        let s = schema(&[2, 3]);
        let t = DataTable::full(s, &[vec![1, 2]]).unwrap();
        let f = empirical_table(&t, &["x1", "x2"]).unwrap();
        assert_eq!(f.to_dense().unwrap(), vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_and_unknown() {
        let s = schema(&[2]);
        let t = DataTable::full(s.clone(), &[]).unwrap();
        assert!(matches!(empirical_table(&t, &["x1"]), Err(Error::EmptyTable)));
        let t = DataTable::full(s, &[vec![0]]).unwrap();
        assert!(matches!(empirical_table(&t, &["zz"]), Err(Error::UnknownAttribute(_))));
    }

    #[test]
    fn marginalize_matches_direct_count() {
        let s = schema(&[2, 3, 2]);
        let rows: Vec<Vec<usize>> = (0..30).map(|i| vec![i % 2, (i * 7) % 3, (i / 4) % 2]).collect();
        let t = DataTable::full(s, &rows).unwrap();
        let full = empirical_table_idx(&t, &[0, 1, 2]).unwrap();
        let m = full.marginalize(&[2, 0]).unwrap();
        let direct = empirical_table_idx(&t, &[2, 0]).unwrap();
        for (a, b) in m.cells().iter().zip(direct.cells()) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() < 1e-15);
        }
    }

    #[test]
    fn laplace_matches_formula() {
        let s = schema(&[2, 3]);
        // given x1, target x2; x1=1 never observed
        let t = DataTable::full(s, &[vec![0, 0], vec![0, 0], vec![0, 2]]).unwrap();
        let c = ConditionalTable::fit(&t, &[0], &[1], Smoothing::laplace(0.5)).unwrap();
        assert!((c.prob(&[0], &[0]) - 2.5 / 4.5).abs() < 1e-15);
        assert!((c.prob(&[0], &[1]) - 0.5 / 4.5).abs() < 1e-15);
        assert!((c.prob(&[1], &[1]) - 1.0 / 3.0).abs() < 1e-15);

        let e = ConditionalTable::fit(&t, &[0], &[1], Smoothing::default()).unwrap();
        assert!((e.prob(&[0], &[0]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.prob(&[0], &[1]), 0.0);
        assert!((e.prob(&[1], &[2]) - 1.0 / 3.0).abs() < 1e-15);

        let off = ConditionalTable::fit(&t, &[0], &[1], Smoothing::off()).unwrap();
        assert!(off.require_defined(|_| 1.0, t.schema()).is_err());
        assert!(off.require_defined(|g| if g == 0 { 1.0 } else { 0.0 }, t.schema()).is_ok());
        for c in [c, e] {
            assert!(c.max_simplex_error() < 1e-12);
        }
    }
}
