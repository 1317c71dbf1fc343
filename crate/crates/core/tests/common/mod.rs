#![allow(dead_code)]

use std::sync::Arc;

use fairsynth_core::estimation::{FitInfo, JointModel, LatentNb, Structure};
use fairsynth_core::schema::{Attribute, Schema};
use fairsynth_core::table::DataTable;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn schema(cards: &[usize]) -> Arc<Schema> {
    let attrs = cards
        .iter()
        .enumerate()
        .map(|(i, &c)| Attribute::new(format!("x{i}"), (0..c).map(|v| format!("v{v}")).collect()))
        .collect();
    Arc::new(Schema::plain(attrs).unwrap())
}

/// Role of each attribute in a separation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    InternalOnly,
    Overlap,
    ExternalOnly,
}

#[derive(Clone, Debug)]
pub struct Toy {
    pub schema: Arc<Schema>,
    pub roles: Vec<Role>,
    pub internal: DataTable,
    pub external: DataTable,
}

impl Toy {
    pub fn internal_attrs(&self) -> Vec<usize> {
        (0..self.roles.len()).filter(|&a| self.roles[a] != Role::ExternalOnly).collect()
    }

    pub fn external_attrs(&self) -> Vec<usize> {
        (0..self.roles.len()).filter(|&a| self.roles[a] != Role::InternalOnly).collect()
    }

    pub fn overlap(&self) -> Vec<usize> {
        (0..self.roles.len()).filter(|&a| self.roles[a] == Role::Overlap).collect()
    }

    pub fn overlap_names(&self) -> Vec<String> {
        self.overlap().iter().map(|&a| self.schema.name(a).to_string()).collect()
    }
}

/// Every role assignment of `n` attributes with a non-empty overlap.
pub fn all_roles(n: usize) -> Vec<Vec<Role>> {
    let mut out = Vec::new();
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let roles: Vec<Role> = (0..n)
            .map(|_| {
                let r = [Role::InternalOnly, Role::Overlap, Role::ExternalOnly][c % 3];
                c /= 3;
                r
            })
            .collect();
        if roles.contains(&Role::Overlap) {
            out.push(roles);
        }
    }
    out
}

/// Random table over `attrs` whose first rows enumerate every overlap cell,
/// so no conditional slice is empty.
fn random_side(schema: &Arc<Schema>, attrs: &[usize], overlap: &[usize], n: usize, rng: &mut ChaCha8Rng) -> DataTable {
    let cards: Vec<usize> = overlap.iter().map(|&a| schema.cardinality(a)).collect();
    let n_cells: usize = cards.iter().product();
    // skewed per-attribute weights so the data is not uniform
    let skew: Vec<f64> = attrs.iter().map(|_| rng.random_range(0.1..0.9)).collect();
    let rows: Vec<Vec<usize>> = (0..n_cells + n)
        .map(|i| {
            let mut cell = i % n_cells;
            let mut fixed = vec![0; overlap.len()];
            for (j, &c) in cards.iter().enumerate().rev() {
                fixed[j] = cell % c;
                cell /= c;
            }
            attrs
                .iter()
                .zip(&skew)
                .map(|(&a, &s)| match overlap.iter().position(|&o| o == a) {
                    Some(j) if i < n_cells => fixed[j],
                    _ => {
                        let c = schema.cardinality(a);
                        if rng.random::<f64>() < s {
                            0
                        } else {
                            rng.random_range(0..c)
                        }
                    }
                })
                .collect()
        })
        .collect();
    DataTable::from_rows(schema.clone(), attrs.to_vec(), &rows).unwrap()
}

pub fn random_toy(cards: &[usize], roles: Vec<Role>, n1: usize, n2: usize, rng: &mut ChaCha8Rng) -> Toy {
    let schema = schema(cards);
    let mut toy = Toy {
        schema: schema.clone(),
        roles,
        internal: DataTable::from_rows(schema.clone(), vec![0], &[vec![0]]).unwrap(),
        external: DataTable::from_rows(schema.clone(), vec![0], &[vec![0]]).unwrap(),
    };
    let overlap = toy.overlap();
    toy.internal = random_side(&schema, &toy.internal_attrs(), &overlap, n1, rng);
    toy.external = random_side(&schema, &toy.external_attrs(), &overlap, n2, rng);
    toy
}

/// Fraction of rows of `t` agreeing with the full-schema cell `x` on `attrs`.
pub fn freq(t: &DataTable, x: &[usize], attrs: &[usize]) -> f64 {
    let pos: Vec<usize> = attrs.iter().map(|&a| t.position(a).unwrap()).collect();
    let hits = t
        .rows()
        .filter(|r| pos.iter().zip(attrs).all(|(&p, &a)| r[p] == x[a]))
        .count();
    hits as f64 / t.n_rows() as f64
}

pub fn cond(t: &DataTable, x: &[usize], target: &[usize], given: &[usize]) -> f64 {
    let both: Vec<usize> = target.iter().chain(given).copied().collect();
    freq(t, x, &both) / freq(t, x, given)
}

#[derive(Clone, Copy, Debug)]
pub enum Oracle {
    IndepOverlap,
    MarginalInternal,
    MarginalExternal,
    Independent,
}

/// Hand evaluation of one full cell, straight from row counts.
pub fn oracle_cell(kind: Oracle, toy: &Toy, x: &[usize]) -> f64 {
    let o = toy.overlap();
    let int: Vec<usize> = toy.internal_attrs().into_iter().filter(|a| !o.contains(a)).collect();
    let ext: Vec<usize> = toy.external_attrs().into_iter().filter(|a| !o.contains(a)).collect();
    let (di, de) = (&toy.internal, &toy.external);
    match kind {
        Oracle::IndepOverlap => {
            0.5 * (freq(di, x, &o) + freq(de, x, &o)) * cond(di, x, &int, &o) * cond(de, x, &ext, &o)
        }
        Oracle::MarginalInternal => freq(di, x, &toy.internal_attrs()) * cond(de, x, &ext, &o),
        Oracle::MarginalExternal => freq(de, x, &toy.external_attrs()) * cond(di, x, &int, &o),
        Oracle::Independent => (0..toy.roles.len())
            .map(|a| match toy.roles[a] {
                Role::InternalOnly => freq(di, x, &[a]),
                Role::ExternalOnly => freq(de, x, &[a]),
                Role::Overlap => 0.5 * (freq(di, x, &[a]) + freq(de, x, &[a])),
            })
            .product(),
    }
}

/// All cells of the schema, first attribute most significant.
pub fn cells(cards: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = cards.iter().product();
    (0..total)
        .map(|mut c| {
            let mut x = vec![0; cards.len()];
            for (i, &k) in cards.iter().enumerate().rev() {
                x[i] = c % k;
                c /= k;
            }
            x
        })
        .collect()
}

pub fn random_simplex(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

pub fn random_mixture(schema: &Arc<Schema>, k: usize, rng: &mut ChaCha8Rng) -> JointModel {
    let weights = random_simplex(k, rng);
    let emissions = (0..schema.len())
        .map(|a| (0..k).map(|_| random_simplex(schema.cardinality(a), rng)).collect())
        .collect();
    JointModel::new(
        schema.clone(),
        Structure::LatentNb(LatentNb { weights, emissions }),
        FitInfo::default(),
    )
    .unwrap()
}

pub fn mixture_cell(m: &LatentNb, x: &[usize]) -> f64 {
    (0..m.k())
        .map(|k| m.weights[k] * x.iter().enumerate().map(|(a, &v)| m.emissions[a][k][v]).product::<f64>())
        .sum()
}

/// Empirical distribution of a full-schema table, first attribute most significant.
pub fn empirical_joint(t: &DataTable) -> Vec<f64> {
    let cards: Vec<usize> = (0..t.schema().len()).map(|a| t.schema().cardinality(a)).collect();
    let total: usize = cards.iter().product();
    let mut h = vec![0.0; total];
    let pos: Vec<usize> = (0..cards.len()).map(|a| t.position(a).unwrap()).collect();
    for r in t.rows() {
        let code = pos.iter().zip(&cards).fold(0, |acc, (&p, &c)| acc * c + r[p]);
        h[code] += 1.0;
    }
    h.iter_mut().for_each(|v| *v /= t.n_rows() as f64);
    h
}

pub fn tvd(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
