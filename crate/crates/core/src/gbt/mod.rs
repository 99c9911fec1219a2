//! Multiclass gradient-boosted trees with a softmax objective.

mod ensemble;
mod metrics;
mod train;
mod tree;

pub use ensemble::{argmax, softmax, GbtEnsemble};
pub use metrics::{classification_report, evaluate, AverageMetrics, ClassMetrics, EvalReport};
pub use train::{train, GbtParams, RoundMetrics, TrainHistory, TrainedModel};
pub use tree::{Tree, TreeNode};
