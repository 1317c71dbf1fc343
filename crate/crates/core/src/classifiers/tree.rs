use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::DataTable;

use super::Classifier;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 12,
            min_samples_leaf: 5,
        }
    }
}

/// Splits must improve impurity by more than this to be kept.
const MIN_GAIN: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        label: usize,
        counts: [usize; 2],
    },
    /// Rows whose `feature` equals `category` go left, all others right.
    Split {
        feature: usize,
        category: usize,
        left: usize,
        right: usize,
    },
}

/// Column-major training matrix; labels are 0/1.
pub(crate) struct TrainSet {
    pub cols: Vec<Vec<u32>>,
    pub cards: Vec<usize>,
    pub labels: Vec<u8>,
}

impl TrainSet {
    pub fn from_table<S: AsRef<str>>(table: &DataTable, features: &[S], label: &str) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::EmptyTable);
        }
        let schema = table.schema();
        let label_pos = table.position_of(label)?;
        let label_attr = table.attrs()[label_pos];
        if schema.cardinality(label_attr) != 2 {
            return Err(Error::InvalidArgument(format!("label `{label}` is not binary")));
        }
        let mut cols = Vec::with_capacity(features.len());
        let mut cards = Vec::with_capacity(features.len());
        for f in features {
            let f = f.as_ref();
            if f == label {
                return Err(Error::InvalidArgument(format!("label `{label}` cannot be a feature")));
            }
            let pos = table.position_of(f)?;
            cols.push(table.column(pos).map(|v| v as u32).collect());
            cards.push(schema.cardinality(table.attrs()[pos]));
        }
        Ok(Self {
            cols,
            cards,
            labels: table.column(label_pos).map(|v| v as u8).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }
}

fn gini(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = c[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

fn leaf(counts: [usize; 2]) -> Node {
    Node::Leaf {
        label: usize::from(counts[1] > counts[0]),
        counts,
    }
}

pub(crate) struct Builder<'a, F> {
    pub data: &'a TrainSet,
    pub config: &'a TreeConfig,
    /// Candidate features at each node, ascending.
    pub pick: F,
    pub nodes: Vec<Node>,
}

impl<F: FnMut() -> Vec<usize>> Builder<'_, F> {
    pub fn build(&mut self, rows: Vec<u32>, depth: usize) -> usize {
        let mut counts = [0usize; 2];
        for &r in &rows {
            counts[self.data.labels[r as usize] as usize] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(leaf(counts));
        let n = rows.len();
        if depth >= self.config.max_depth || counts[0] == 0 || counts[1] == 0 || n < 2 * self.config.min_samples_leaf.max(1) {
            return id;
        }
        let parent = gini(counts);
        let min_leaf = self.config.min_samples_leaf.max(1);
        let mut best: Option<(f64, usize, usize)> = None;
        for f in (self.pick)() {
            let col = &self.data.cols[f];
            let mut by_cat = vec![[0usize; 2]; self.data.cards[f]];
            for &r in &rows {
                by_cat[col[r as usize] as usize][self.data.labels[r as usize] as usize] += 1;
            }
            for (c, left) in by_cat.iter().enumerate() {
                let nl = left[0] + left[1];
                if nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let gain = parent - (nl as f64 * gini(*left) + (n - nl) as f64 * gini(right)) / n as f64;
                if gain > MIN_GAIN && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, c));
                }
            }
        }
        let Some((_, feature, category)) = best else {
            return id;
        };
        let col = &self.data.cols[feature];
        let (l, r): (Vec<u32>, Vec<u32>) = rows.into_iter().partition(|&i| col[i as usize] as usize == category);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            category,
            left,
            right,
        };
        id
    }
}

/// Binary CART tree over categorical features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeRepr", into = "TreeRepr")]
pub struct DecisionTree {
    features: Vec<String>,
    label: String,
    nodes: Vec<Node>,
}

#[derive(Serialize, Deserialize)]
struct TreeRepr {
    features: Vec<String>,
    label: String,
    nodes: Vec<Node>,
}

impl TryFrom<TreeRepr> for DecisionTree {
    type Error = Error;

    fn try_from(r: TreeRepr) -> Result<Self> {
        let t = DecisionTree {
            features: r.features,
            label: r.label,
            nodes: r.nodes,
        };
        t.validate()?;
        Ok(t)
    }
}

impl From<DecisionTree> for TreeRepr {
    fn from(t: DecisionTree) -> Self {
        TreeRepr {
            features: t.features,
            label: t.label,
            nodes: t.nodes,
        }
    }
}

impl DecisionTree {
    pub(crate) fn from_parts(features: Vec<String>, label: String, nodes: Vec<Node>) -> Self {
        Self { features, label, nodes }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument("tree has no nodes".into()));
        }
        // children always come after their parent, so the tree is acyclic
        for (i, n) in self.nodes.iter().enumerate() {
            match *n {
                Node::Leaf { label, counts } => {
                    if label > 1 || counts[0] + counts[1] == 0 {
                        return Err(Error::InvalidArgument(format!("bad leaf {i}")));
                    }
                }
                Node::Split {
                    feature, left, right, ..
                } => {
                    if feature >= self.features.len()
                        || left <= i
                        || right <= i
                        || left >= self.nodes.len()
                        || right >= self.nodes.len()
                    {
                        return Err(Error::InvalidArgument(format!("bad split node {i}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Label of a row given as feature values in `features()` order.
    pub fn predict_row(&self, x: &[usize]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { label, .. } => return label,
                Node::Split {
                    feature,
                    category,
                    left,
                    right,
                } => i = if x[feature] == category { left } else { right },
            }
        }
    }

    pub(crate) fn positions(&self, table: &DataTable) -> Result<Vec<usize>> {
        self.features.iter().map(|f| table.position_of(f)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl Classifier for DecisionTree {
    fn predict(&self, table: &DataTable) -> Result<Vec<usize>> {
        let pos = self.positions(table)?;
        let mut x = vec![0; pos.len()];
        Ok(table
            .rows()
            .map(|r| {
                for (o, &p) in x.iter_mut().zip(&pos) {
                    *o = r[p];
                }
                self.predict_row(&x)
            })
            .collect())
    }
}

/// Greedy Gini tree on `features` predicting the binary `label`.
pub fn train_tree<S: AsRef<str>>(
    train: &DataTable,
    features: &[S],
    label: &str,
    config: &TreeConfig,
) -> Result<DecisionTree> {
    let data = TrainSet::from_table(train, features, label)?;
    let all: Vec<usize> = (0..features.len()).collect();
    let mut b = Builder {
        data: &data,
        config,
        pick: || all.clone(),
        nodes: Vec::new(),
    };
    b.build((0..data.n_rows() as u32).collect(), 0);
    let tree = DecisionTree::from_parts(
        features.iter().map(|f| f.as_ref().to_string()).collect(),
        label.to_string(),
        b.nodes,
    );
    log::debug!("trained tree: {} nodes, depth {}", tree.nodes.len(), tree.depth());
    Ok(tree)
}
