use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::table::DataTable;

use super::tree::{Builder, DecisionTree, TrainSet, TreeConfig};
use super::Classifier;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(sqrt(d))` features per node.
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::All => d,
            MaxFeatures::Count(n) => n,
        }
        .clamp(1, d.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
    pub tree: TreeConfig,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
            tree: TreeConfig::default(),
            seed: 0,
        }
    }
}

/// Bagged trees; prediction is a majority vote with ties going to label 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub seed: u64,
}

impl RandomForest {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl Classifier for RandomForest {
    fn predict(&self, table: &DataTable) -> Result<Vec<usize>> {
        let mut votes = vec![0usize; table.n_rows()];
        for t in &self.trees {
            for (v, p) in votes.iter_mut().zip(t.predict(table)?) {
                *v += p;
            }
        }
        let n = self.trees.len();
        Ok(votes.into_iter().map(|v| usize::from(2 * v > n)).collect())
    }
}

pub fn train_forest<S: AsRef<str>>(
    train: &DataTable,
    features: &[S],
    label: &str,
    config: &ForestConfig,
) -> Result<RandomForest> {
    let data = TrainSet::from_table(train, features, label)?;
    let names = features.iter().map(|f| f.as_ref().to_string()).collect();
    train_forest_on(&data, names, label, config)
}

pub(crate) fn train_forest_on(
    data: &TrainSet,
    names: Vec<String>,
    label: &str,
    config: &ForestConfig,
) -> Result<RandomForest> {
    if config.n_trees == 0 {
        return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
    }
    if data.n_rows() == 0 {
        return Err(Error::EmptyTable);
    }
    let d = names.len();
    let m = config.max_features.resolve(d);
    let n = data.n_rows();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::stream_rng(config.seed, "forest-tree", t as u64);
            let rows: Vec<u32> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n) as u32).collect()
            } else {
                (0..n as u32).collect()
            };
            let mut b = Builder {
                data,
                config: &config.tree,
                pick: || {
                    if m == d {
                        (0..d).collect()
                    } else {
                        let mut v = index::sample(&mut rng, d, m).into_vec();
                        v.sort_unstable();
                        v
                    }
                },
                nodes: Vec::new(),
            };
            b.build(rows, 0);
            let nodes = b.nodes;
            DecisionTree::from_parts(names.clone(), label.to_string(), nodes)
        })
        .collect();
    Ok(RandomForest {
        trees,
        seed: config.seed,
    })
}

impl RandomForest {
    /// Majority vote for one row given in feature order.
    pub fn predict_row(&self, x: &[usize]) -> usize {
        let votes: usize = self.trees.iter().map(|t| t.predict_row(x)).sum();
        usize::from(2 * votes > self.trees.len())
    }
}
