//! Ancestral sampling from fitted joint models.
//!
//! Rows are generated in fixed-size chunks; chunk `i` draws from its own
//! generator seeded with `seed::derive(seed, "sample-chunk", i)`, so the
//! output does not depend on the thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{JointModel, Structure};
use crate::freq::{ConditionalTable, FrequencyTable, Radix, Slice};
use crate::seed;
use crate::table::DataTable;

pub const CHUNK_ROWS: usize = 8192;

/// Inverse-CDF draw over the cells with positive mass.
#[derive(Clone, Debug)]
struct Cdf {
    codes: Vec<u64>,
    cum: Vec<f64>,
}

impl Cdf {
    fn new(cells: impl IntoIterator<Item = (u64, f64)>) -> Self {
        let mut codes = Vec::new();
        let mut cum = Vec::new();
        let mut acc = 0.0;
        for (c, p) in cells {
            if p > 0.0 {
                acc += p;
                codes.push(c);
                cum.push(acc);
            }
        }
        Self { codes, cum }
    }

    fn dense(probs: &[f64]) -> Self {
        Self::new(probs.iter().enumerate().map(|(i, &p)| (i as u64, p)))
    }

    fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        let total = *self.cum.last().expect("draw from an empty distribution");
        let u = rng.random::<f64>() * total;
        let i = self.cum.partition_point(|&c| c <= u);
        self.codes[i.min(self.codes.len() - 1)]
    }
}

struct SliceSampler {
    empirical: Cdf,
    uniform_weight: f64,
}

impl SliceSampler {
    fn new(s: &Slice) -> Self {
        Self {
            empirical: Cdf::new(s.empirical.iter().copied()),
            uniform_weight: s.uniform_weight,
        }
    }

    fn draw(&self, size: u64, rng: &mut ChaCha8Rng) -> u64 {
        let w = self.uniform_weight;
        let uniform = if w <= 0.0 {
            false
        } else if w >= 1.0 || self.empirical.is_empty() {
            true
        } else {
            rng.random::<f64>() < w
        };
        if uniform {
            rng.random_range(0..size)
        } else {
            self.empirical.draw(rng)
        }
    }
}

struct CondSampler {
    target: Vec<usize>,
    radix: Radix,
    slices: Vec<SliceSampler>,
}

impl CondSampler {
    /// `weight(g)` is the mass of given cell `g`; cells with mass need a defined slice.
    fn new(c: &ConditionalTable, weight: impl Fn(u64) -> f64) -> Result<Self> {
        for (g, s) in c.slices().iter().enumerate() {
            if weight(g as u64) > 0.0 && s.empirical.is_empty() && s.uniform_weight <= 0.0 {
                return Err(Error::UndefinedConditional(format!("conditional slice {g} has no mass")));
            }
        }
        Ok(Self {
            target: c.target().to_vec(),
            radix: c.target_radix().clone(),
            slices: c.slices().iter().map(SliceSampler::new).collect(),
        })
    }

    fn draw_into(&self, g: u64, row: &mut [usize], buf: &mut [usize], rng: &mut ChaCha8Rng) {
        let code = self.slices[g as usize].draw(self.radix.size(), rng);
        self.radix.decode(code, buf);
        for (&a, &v) in self.target.iter().zip(buf.iter()) {
            row[a] = v;
        }
    }
}

struct BlockSampler {
    attrs: Vec<usize>,
    radix: Radix,
    cdf: Cdf,
}

impl BlockSampler {
    fn new(t: &FrequencyTable) -> Self {
        Self {
            attrs: t.attrs().to_vec(),
            radix: t.radix().clone(),
            cdf: Cdf::new(t.cells().iter().copied()),
        }
    }

    fn draw_into(&self, row: &mut [usize], buf: &mut [usize], rng: &mut ChaCha8Rng) -> u64 {
        let code = self.cdf.draw(rng);
        self.radix.decode(code, buf);
        for (&a, &v) in self.attrs.iter().zip(buf.iter()) {
            row[a] = v;
        }
        code
    }
}

enum Plan {
    Overlap {
        overlap: BlockSampler,
        sides: [CondSampler; 2],
    },
    Preserve {
        block: BlockSampler,
        given: Vec<usize>,
        given_radix: Radix,
        other: CondSampler,
    },
    Mixture {
        weights: Cdf,
        /// `[attr][k]`
        emissions: Vec<Vec<Cdf>>,
    },
    Product(Vec<Cdf>),
}

/// Precomputed cumulative tables for repeated sampling from one model.
pub struct Sampler {
    width: usize,
    scratch: usize,
    plan: Plan,
}

impl Sampler {
    pub fn new(model: &JointModel) -> Result<Self> {
        let width = model.schema().len();
        let plan = match model.structure() {
            Structure::IndepOverlap {
                overlap,
                internal,
                external,
            } => Plan::Overlap {
                overlap: BlockSampler::new(overlap),
                sides: [
                    CondSampler::new(internal, |g| overlap.prob_code(g))?,
                    CondSampler::new(external, |g| overlap.prob_code(g))?,
                ],
            },
            Structure::MarginalPreserve {
                preserved, other, ..
            } => {
                let weights = preserved.marginalize(other.given())?;
                Plan::Preserve {
                    block: BlockSampler::new(preserved),
                    given: other.given().to_vec(),
                    given_radix: other.given_radix().clone(),
                    other: CondSampler::new(other, |g| weights.prob_code(g))?,
                }
            }
            Structure::LatentNb(nb) => Plan::Mixture {
                weights: Cdf::dense(&nb.weights),
                emissions: nb
                    .emissions
                    .iter()
                    .map(|m| m.iter().map(|r| Cdf::dense(r)).collect())
                    .collect(),
            },
            Structure::Independent { marginals } => Plan::Product(marginals.iter().map(|m| Cdf::dense(m)).collect()),
        };
        Ok(Self {
            width,
            scratch: width,
            plan,
        })
    }

    fn draw_row(&self, row: &mut [usize], buf: &mut [usize], rng: &mut ChaCha8Rng) {
        match &self.plan {
            Plan::Overlap { overlap, sides } => {
                let g = overlap.draw_into(row, buf, rng);
                for s in sides {
                    s.draw_into(g, row, buf, rng);
                }
            }
            Plan::Preserve {
                block,
                given,
                given_radix,
                other,
            } => {
                block.draw_into(row, buf, rng);
                for (o, &a) in buf.iter_mut().zip(given) {
                    *o = row[a];
                }
                let g = given_radix.encode(&buf[..given.len()]);
                other.draw_into(g, row, buf, rng);
            }
            Plan::Mixture { weights, emissions } => {
                let k = weights.draw(rng) as usize;
                for (a, e) in emissions.iter().enumerate() {
                    row[a] = e[k].draw(rng) as usize;
                }
            }
            Plan::Product(m) => {
                for (a, cdf) in m.iter().enumerate() {
                    row[a] = cdf.draw(rng) as usize;
                }
            }
        }
    }

    fn draw_chunk(&self, n: usize, seed: u64) -> Vec<usize> {
        let mut rng = seed::rng(seed);
        let mut cells = vec![0; n * self.width];
        let mut buf = vec![0; self.scratch];
        for row in cells.chunks_exact_mut(self.width) {
            self.draw_row(row, &mut buf, &mut rng);
        }
        cells
    }
}

/// Draws `n` i.i.d. rows over the model's full schema.
pub fn sample(model: &JointModel, n: usize, seed: u64) -> Result<DataTable> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let sampler = Sampler::new(model)?;
    let n_chunks = n.div_ceil(CHUNK_ROWS);
    let chunks: Vec<Vec<usize>> = (0..n_chunks)
        .into_par_iter()
        .map(|i| {
            let rows = CHUNK_ROWS.min(n - i * CHUNK_ROWS);
            sampler.draw_chunk(rows, seed::derive(seed, "sample-chunk", i as u64))
        })
        .collect();
    let schema = model.schema().clone();
    DataTable::from_flat(schema.clone(), (0..schema.len()).collect(), chunks.concat())
}
