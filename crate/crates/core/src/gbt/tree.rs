use serde::{Deserialize, Serialize};

use crate::dataset::N_FEATURES;

/// A node of a regression tree stored in a flat arena; index 0 is the root.
///
/// Routing: `value < threshold` goes left, everything else right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Margin contribution, learning rate already applied.
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(weight: f64) -> Self {
        Tree {
            nodes: vec![TreeNode::Leaf { weight }],
        }
    }

    /// Depth-one tree: `left_weight` when `row[feature] < threshold`.
    pub fn stump(feature: usize, threshold: f64, left_weight: f64, right_weight: f64) -> Self {
        Tree {
            nodes: vec![
                TreeNode::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                },
                TreeNode::Leaf {
                    weight: left_weight,
                },
                TreeNode::Leaf {
                    weight: right_weight,
                },
            ],
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                TreeNode::Leaf { weight } => return weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[feature] < threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], idx: usize) -> usize {
            match nodes[idx] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, left).max(walk(nodes, right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Bitmask of the features this tree splits on.
    pub fn feature_mask(&self) -> u32 {
        self.nodes.iter().fold(0, |mask, n| match n {
            TreeNode::Split { feature, .. } => mask | (1 << feature),
            TreeNode::Leaf { .. } => mask,
        })
    }

    pub(crate) fn is_valid(&self) -> bool {
        let n = self.nodes.len();
        !self.nodes.is_empty()
            && self.nodes.iter().enumerate().all(|(i, node)| match *node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    feature < N_FEATURES
                        && !threshold.is_nan()
                        && left > i
                        && right > i
                        && left < n
                        && right < n
                }
                TreeNode::Leaf { weight } => weight.is_finite(),
            })
    }
}
