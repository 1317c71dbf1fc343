//! Decision tree and random forest over category indices.

mod forest;
mod tree;

pub(crate) use forest::train_forest_on;
pub(crate) use tree::TrainSet;
pub use forest::{train_forest, ForestConfig, MaxFeatures, RandomForest};
pub use tree::{train_tree, DecisionTree, Node, TreeConfig};

use crate::error::Result;
use crate::table::DataTable;

/// A trained binary classifier; predictions are label category indices.
pub trait Classifier: Sync {
    fn predict(&self, table: &DataTable) -> Result<Vec<usize>>;
}
