use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::table::DataTable;

use super::fit::blocks;
use super::model::{log_sum_exp, FitInfo, JointModel, LatentNb, Structure};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Number of latent components.
    pub k: usize,
    /// Stop once the relative log-likelihood gain falls below this.
    pub tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            k: 20,
            tol: 1e-6,
            max_iters: 500,
            restarts: 5,
            seed: 0,
        }
    }
}

/// Distinct rows of one table with multiplicities.
struct Patterns {
    /// Schema attribute per column.
    attrs: Vec<usize>,
    rows: Vec<Vec<usize>>,
    counts: Vec<f64>,
    row_pattern: Vec<usize>,
}

impl Patterns {
    fn new(table: &DataTable) -> Self {
        let mut ids: BTreeMap<&[usize], usize> = BTreeMap::new();
        for row in table.rows() {
            let next = ids.len();
            ids.entry(row).or_insert(next);
        }
        let mut rows = vec![Vec::new(); ids.len()];
        for (&r, &i) in &ids {
            rows[i] = r.to_vec();
        }
        let mut counts = vec![0.0; rows.len()];
        let row_pattern: Vec<usize> = table
            .rows()
            .map(|r| {
                let i = ids[r];
                counts[i] += 1.0;
                i
            })
            .collect();
        Self {
            attrs: table.attrs().to_vec(),
            rows,
            counts,
            row_pattern,
        }
    }

    fn n_rows(&self) -> f64 {
        self.row_pattern.len() as f64
    }
}

/// Posterior component probabilities for every row of one table.
#[derive(Clone, Debug, PartialEq)]
pub struct Responsibilities {
    k: usize,
    row_pattern: Vec<usize>,
    /// `patterns x k`, row-major.
    probs: Vec<f64>,
}

impl Responsibilities {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_rows(&self) -> usize {
        self.row_pattern.len()
    }

    /// `q(k | row)` for row `n` of the fitted table.
    pub fn row(&self, n: usize) -> &[f64] {
        let p = self.row_pattern[n];
        &self.probs[p * self.k..(p + 1) * self.k]
    }
}

/// E-step output at the returned parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EmState {
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub internal: Responsibilities,
    pub external: Responsibilities,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmRun {
    pub restart: usize,
    pub seed: u64,
    pub converged: bool,
    /// Log-likelihood at every E-step, starting from the initial parameters.
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EmFit {
    pub model: JointModel,
    /// Index into `runs` of the retained restart.
    pub best: usize,
    pub runs: Vec<EmRun>,
    pub state: EmState,
}

struct Params {
    log_w: Vec<f64>,
    /// `[attr][k][m]` in log space
    log_e: Vec<Vec<Vec<f64>>>,
}

impl Params {
    fn from_nb(nb: &LatentNb) -> Self {
        Self {
            log_w: nb.weights.iter().map(|w| w.ln()).collect(),
            log_e: nb
                .emissions
                .iter()
                .map(|m| m.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect())
                .collect(),
        }
    }
}

/// Returns the log-likelihood and the per-pattern responsibilities.
fn e_step(params: &Params, data: &Patterns) -> Result<(f64, Vec<f64>)> {
    let k = params.log_w.len();
    let mut q = vec![0.0; data.rows.len() * k];
    let mut ll = 0.0;
    let mut lw = vec![0.0; k];
    for (p, row) in data.rows.iter().enumerate() {
        for (c, l) in lw.iter_mut().enumerate() {
            *l = params.log_w[c]
                + row
                    .iter()
                    .zip(&data.attrs)
                    .map(|(&v, &a)| params.log_e[a][c][v])
                    .sum::<f64>();
        }
        let lse = log_sum_exp(&lw);
        if !lse.is_finite() {
            return Err(Error::NonFinite(format!(
                "row pattern {row:?} has log-likelihood {lse} under the mixture"
            )));
        }
        ll += data.counts[p] * lse;
        for (dst, l) in q[p * k..(p + 1) * k].iter_mut().zip(&lw) {
            *dst = (l - lse).exp();
        }
    }
    Ok((ll, q))
}

fn m_step(nb: &mut LatentNb, data: [&Patterns; 2], q: [&[f64]; 2]) {
    let k = nb.k();
    let n_total: f64 = data.iter().map(|d| d.n_rows()).sum();
    let mut mass = vec![0.0; k];
    for (d, qd) in data.iter().zip(q) {
        for (p, &cnt) in d.counts.iter().enumerate() {
            for c in 0..k {
                mass[c] += cnt * qd[p * k + c];
            }
        }
    }
    for c in 0..k {
        nb.weights[c] = mass[c] / n_total;
    }
    for (a, mat) in nb.emissions.iter_mut().enumerate() {
        let card = mat[0].len();
        let mut num = vec![vec![0.0; card]; k];
        for (d, qd) in data.iter().zip(q) {
            let Some(pos) = d.attrs.iter().position(|&x| x == a) else {
                continue;
            };
            for (p, row) in d.rows.iter().enumerate() {
                let v = row[pos];
                for c in 0..k {
                    num[c][v] += d.counts[p] * qd[p * k + c];
                }
            }
        }
        for (c, row) in num.into_iter().enumerate() {
            let denom: f64 = row.iter().sum();
            // a component that lost all mass keeps its previous emissions
            if denom > 0.0 {
                mat[c] = row.into_iter().map(|x| x / denom).collect();
            }
        }
    }
}

fn dirichlet_one<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    // normalised unit exponentials; 1 - u lies in (0, 1]
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        v.iter_mut().for_each(|x| *x = 1.0 / n as f64);
    }
    v
}

fn init(cards: &[usize], k: usize, seed: u64) -> LatentNb {
    let mut rng = seed::rng(seed);
    LatentNb {
        weights: vec![1.0 / k as f64; k],
        emissions: cards
            .iter()
            .map(|&m| (0..k).map(|_| dirichlet_one(&mut rng, m)).collect())
            .collect(),
    }
}

struct RunOutput {
    nb: LatentNb,
    run: EmRun,
    q: [Vec<f64>; 2],
}

fn run_em(mut nb: LatentNb, data: [&Patterns; 2], config: &EmConfig, restart: usize, seed: u64) -> Result<RunOutput> {
    let mut trace = Vec::new();
    let mut converged = false;
    loop {
        let params = Params::from_nb(&nb);
        let (l1, q1) = e_step(&params, data[0])?;
        let (l2, q2) = e_step(&params, data[1])?;
        let ll = l1 + l2;
        if !ll.is_finite() {
            return Err(Error::NonFinite(format!("EM log-likelihood {ll}")));
        }
        if let Some(&prev) = trace.last() {
            let gain = (ll - prev) / f64::max(f64::abs(prev), f64::MIN_POSITIVE);
            if gain < config.tol {
                converged = true;
            }
        }
        trace.push(ll);
        if converged || trace.len() > config.max_iters {
            if !converged {
                log::warn!(
                    "EM restart {restart} stopped after {} iterations without converging",
                    config.max_iters
                );
            }
            return Ok(RunOutput {
                nb,
                run: EmRun {
                    restart,
                    seed,
                    converged,
                    trace,
                },
                q: [q1, q2],
            });
        }
        m_step(&mut nb, data, [&q1, &q2]);
    }
}

/// Latent-class model fitted by EM on both tables at once. Attributes seen by
/// both tables pool their statistics; the others use their own table only.
/// Restarts run in parallel; the run with the highest final log-likelihood is
/// kept (ties go to the lower restart index).
pub fn fit_latent_nb<S: AsRef<str>>(
    internal: &DataTable,
    external: &DataTable,
    overlap: &[S],
    config: &EmConfig,
) -> Result<EmFit> {
    let b = blocks(internal, external, overlap)?;
    if config.k == 0 || config.restarts == 0 {
        return Err(Error::InvalidArgument("EM needs K >= 1 and at least one restart".into()));
    }
    if !(config.tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("EM tolerance {}", config.tol)));
    }
    let n = internal.n_rows() + external.n_rows();
    if config.k > n {
        log::warn!("EM with K = {} components on only {n} rows", config.k);
    }
    let data = [Patterns::new(internal), Patterns::new(external)];
    let cards = b.schema.cardinalities(&(0..b.schema.len()).collect::<Vec<_>>());
    let outputs = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let s = seed::derive(config.seed, "em-restart", r as u64);
            run_em(init(&cards, config.k, s), [&data[0], &data[1]], config, r, s)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, o) in outputs.iter().enumerate() {
        if o.run.trace.last() > outputs[best].run.trace.last() {
            best = i;
        }
    }
    let runs: Vec<EmRun> = outputs.iter().map(|o| o.run.clone()).collect();
    for r in &runs {
        log::debug!(
            "EM restart {}: {} iterations, log-likelihood {:.6}",
            r.restart,
            r.trace.len(),
            r.trace.last().unwrap()
        );
    }
    let RunOutput { nb, run, q } = outputs.into_iter().nth(best).unwrap();
    let [q1, q2] = q;
    let state = EmState {
        iterations: run.trace.len(),
        converged: run.converged,
        log_likelihood: *run.trace.last().unwrap(),
        internal: Responsibilities {
            k: config.k,
            row_pattern: data[0].row_pattern.clone(),
            probs: q1,
        },
        external: Responsibilities {
            k: config.k,
            row_pattern: data[1].row_pattern.clone(),
            probs: q2,
        },
    };
    let model = JointModel::new(
        b.schema,
        Structure::LatentNb(nb),
        FitInfo {
            smoothing: None,
            seed: Some(config.seed),
            em_trace: run.trace.clone(),
        },
    )?;
    Ok(EmFit {
        model,
        best,
        runs,
        state,
    })
}
