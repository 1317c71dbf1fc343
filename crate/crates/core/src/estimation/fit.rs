use std::sync::Arc;

use crate::error::{Error, Result};
use crate::freq::{empirical_table_idx, singleton, ConditionalTable, FrequencyTable, Smoothing};
use crate::schema::Schema;
use crate::table::DataTable;

use super::model::{FitInfo, JointModel, Side, Structure};

/// Attribute bookkeeping shared by every fit over an internal/external pair.
pub(crate) struct Blocks {
    pub schema: Arc<Schema>,
    pub overlap: Vec<usize>,
    pub internal_only: Vec<usize>,
    pub external_only: Vec<usize>,
}

pub(crate) fn blocks<S: AsRef<str>>(internal: &DataTable, external: &DataTable, overlap: &[S]) -> Result<Blocks> {
    let schema = internal.schema().clone();
    if external.schema().attributes() != schema.attributes() {
        return Err(Error::InvalidArgument("internal and external tables use different schemas".into()));
    }
    if internal.is_empty() || external.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut overlap = schema.resolve(overlap)?;
    overlap.sort_unstable();
    overlap.dedup();
    if overlap.is_empty() {
        return Err(Error::InvalidArgument("overlap must be non-empty".into()));
    }
    let mut shared: Vec<usize> = internal
        .attrs()
        .iter()
        .copied()
        .filter(|&a| external.position(a).is_some())
        .collect();
    shared.sort_unstable();
    if shared != overlap {
        return Err(Error::InvalidArgument(format!(
            "overlap {:?} differs from the attributes both tables carry {:?}",
            overlap.iter().map(|&a| schema.name(a)).collect::<Vec<_>>(),
            shared.iter().map(|&a| schema.name(a)).collect::<Vec<_>>()
        )));
    }
    let only = |t: &DataTable| -> Vec<usize> {
        let mut v: Vec<usize> = t.attrs().iter().copied().filter(|a| !overlap.contains(a)).collect();
        v.sort_unstable();
        v
    };
    let internal_only = only(internal);
    let external_only = only(external);
    if overlap.len() + internal_only.len() + external_only.len() != schema.len() {
        let missing: Vec<&str> = (0..schema.len())
            .filter(|a| internal.position(*a).is_none() && external.position(*a).is_none())
            .map(|a| schema.name(a))
            .collect();
        return Err(Error::InvalidArgument(format!("attributes in neither table: {missing:?}")));
    }
    Ok(Blocks {
        schema,
        overlap,
        internal_only,
        external_only,
    })
}

/// Internal and external attributes independent given the overlap. The
/// overlap distribution is the average of the two empirical overlap tables.
pub fn fit_independence_given_overlap<S: AsRef<str>>(
    internal: &DataTable,
    external: &DataTable,
    overlap: &[S],
    smoothing: Smoothing,
) -> Result<JointModel> {
    let b = blocks(internal, external, overlap)?;
    let p_overlap = average_tables(
        &empirical_table_idx(internal, &b.overlap)?,
        &empirical_table_idx(external, &b.overlap)?,
    )?;
    let left = ConditionalTable::fit(internal, &b.overlap, &b.internal_only, smoothing)?;
    let right = ConditionalTable::fit(external, &b.overlap, &b.external_only, smoothing)?;
    for c in [&left, &right] {
        c.require_defined(|g| p_overlap.prob_code(g), &b.schema)?;
    }
    JointModel::new(
        b.schema,
        Structure::IndepOverlap {
            overlap: p_overlap,
            internal: left,
            external: right,
        },
        FitInfo {
            smoothing: Some(smoothing),
            ..FitInfo::default()
        },
    )
}

/// Elementwise mean of two tables over the same attributes.
fn average_tables(a: &FrequencyTable, b: &FrequencyTable) -> Result<FrequencyTable> {
    let mut cells = Vec::with_capacity(a.cells().len().max(b.cells().len()));
    let (mut i, mut j) = (0, 0);
    let (ac, bc) = (a.cells(), b.cells());
    while i < ac.len() || j < bc.len() {
        let (code, pa, pb) = match (ac.get(i), bc.get(j)) {
            (Some(&(ca, pa)), Some(&(cb, pb))) if ca == cb => {
                i += 1;
                j += 1;
                (ca, pa, pb)
            }
            (Some(&(ca, pa)), Some(&(cb, _))) if ca < cb => {
                i += 1;
                (ca, pa, 0.0)
            }
            (Some(&(ca, pa)), None) => {
                i += 1;
                (ca, pa, 0.0)
            }
            (_, Some(&(cb, pb))) => {
                j += 1;
                (cb, 0.0, pb)
            }
            (None, None) => unreachable!(),
        };
        cells.push((code, 0.5 * (pa + pb)));
    }
    FrequencyTable::from_cells(a.attrs().to_vec(), a.dims().to_vec(), cells)
}

/// Keeps the empirical joint of one side and attaches the other side's
/// attributes through their conditional given the overlap.
pub fn fit_marginal_preservation<S: AsRef<str>>(
    internal: &DataTable,
    external: &DataTable,
    overlap: &[S],
    preserve: Side,
    smoothing: Smoothing,
) -> Result<JointModel> {
    let b = blocks(internal, external, overlap)?;
    let (kept, other, other_only) = match preserve {
        Side::Internal => (internal, external, &b.external_only),
        Side::External => (external, internal, &b.internal_only),
    };
    let mut kept_attrs: Vec<usize> = kept.attrs().to_vec();
    kept_attrs.sort_unstable();
    let preserved = empirical_table_idx(kept, &kept_attrs)?;
    let cond = ConditionalTable::fit(other, &b.overlap, other_only, smoothing)?;
    let weights = preserved.marginalize(&b.overlap)?;
    cond.require_defined(|g| weights.prob_code(g), &b.schema)?;
    JointModel::new(
        b.schema,
        Structure::MarginalPreserve {
            preserve,
            preserved,
            other: cond,
        },
        FitInfo {
            smoothing: Some(smoothing),
            ..FitInfo::default()
        },
    )
}

/// Product of singleton marginals. Attributes seen by both tables take the
/// average of their two marginals.
pub fn fit_independent(internal: &DataTable, external: &DataTable) -> Result<JointModel> {
    let schema = internal.schema().clone();
    if external.schema().attributes() != schema.attributes() {
        return Err(Error::InvalidArgument("internal and external tables use different schemas".into()));
    }
    if internal.is_empty() || external.is_empty() {
        return Err(Error::EmptyTable);
    }
    let marginals = (0..schema.len())
        .map(|a| match (internal.position(a), external.position(a)) {
            (Some(_), Some(_)) => {
                let (l, r) = (singleton(internal, a)?, singleton(external, a)?);
                Ok(l.iter().zip(&r).map(|(x, y)| 0.5 * (x + y)).collect())
            }
            (Some(_), None) => singleton(internal, a),
            (None, Some(_)) => singleton(external, a),
            (None, None) => Err(Error::InvalidArgument(format!(
                "attribute `{}` in neither table",
                schema.name(a)
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    JointModel::new(schema, Structure::Independent { marginals }, FitInfo::default())
}
