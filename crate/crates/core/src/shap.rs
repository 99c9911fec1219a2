//! Exact interventional Shapley values for the boosted ensemble.
//!
//! The value of a coalition `S` for instance `x` is the mean margin, over
//! background rows `b`, of the composite row that takes features in `S`
//! from `x` and the rest from `b`. All 2⁸ coalition values are computed
//! once per (instance, class) and shared by the eight attributions.
//!
//! Coalition values are accumulated in a fixed order so any evaluation
//! route gives the same bits:
//!
//! ```text
//! v(S) = base + Σ_trees ( Σ_background leaf(composite) ) / |background|
//! ```
//!
//! with trees in round order and background rows in stored order. A tree
//! only reads the features it splits on, so its contribution is tabulated
//! once per subset of those features and broadcast to all 256 coalitions.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{FEATURE_NAMES, N_FEATURES};
use crate::error::{Error, Result};
use crate::gbt::{GbtEnsemble, Tree, TreeNode};
use crate::preprocess::Row;

pub const N_COALITIONS: usize = 1 << N_FEATURES;

/// Reference rows standing in for absent features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSet {
    pub rows: Vec<Row>,
    pub seed: u64,
}

impl BackgroundSet {
    /// Draws `size` rows without replacement, or takes all rows when fewer.
    /// Sampled rows keep their original relative order.
    pub fn sample(rows: &[Row], size: usize, seed: u64) -> Result<Self> {
        if rows.is_empty() || size == 0 {
            return Err(Error::EmptyBackground);
        }
        let picked = if size >= rows.len() {
            rows.to_vec()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, rows.len(), size).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| rows[i]).collect()
        };
        Ok(BackgroundSet { rows: picked, seed })
    }

    pub fn from_rows(rows: Vec<Row>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyBackground);
        }
        Ok(BackgroundSet { rows, seed: 0 })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Shapley values of one instance for one class, in margin space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    pub class: usize,
    pub instance: Row,
    pub values: Row,
    /// Mean margin over the background (the empty coalition).
    pub baseline: f64,
    /// Margin of the instance itself.
    pub margin: f64,
}

impl ShapAttribution {
    /// `baseline + Σ φ - margin`; zero up to rounding.
    pub fn efficiency_gap(&self) -> f64 {
        self.baseline + self.values.iter().sum::<f64>() - self.margin
    }
}

/// `|S|! (n - |S| - 1)! / n!` for `n = 8`.
pub fn coalition_weight(size: usize) -> f64 {
    let fact = |k: usize| (1..=k).product::<usize>() as f64;
    fact(size) * fact(N_FEATURES - size - 1) / fact(N_FEATURES)
}

/// Per-ensemble data reused across instances.
pub struct ShapPlan<'a> {
    ensemble: &'a GbtEnsemble,
    masks: Vec<Vec<u32>>,
    weights: [f64; N_FEATURES],
}

impl<'a> ShapPlan<'a> {
    pub fn new(ensemble: &'a GbtEnsemble) -> Self {
        let masks = ensemble
            .trees
            .iter()
            .map(|list| list.iter().map(Tree::feature_mask).collect())
            .collect();
        let mut weights = [0.0; N_FEATURES];
        for (s, w) in weights.iter_mut().enumerate() {
            *w = coalition_weight(s);
        }
        ShapPlan {
            ensemble,
            masks,
            weights,
        }
    }

    /// Value of every coalition (bit j set = feature j taken from the instance).
    pub fn coalition_values(
        &self,
        instance: &Row,
        background: &BackgroundSet,
        class: usize,
    ) -> Box<[f64; N_COALITIONS]> {
        let mut values = Box::new([self.ensemble.base_score; N_COALITIONS]);
        let mut table = [0.0f64; N_COALITIONS];
        let n_background = background.len() as f64;
        for (tree, &used) in self.ensemble.trees[class].iter().zip(&self.masks[class]) {
            for_each_submask(used, |r| table[r as usize] = 0.0);
            for b in &background.rows {
                accumulate_leaves(tree, instance, b, used, &mut table);
            }
            for_each_submask(used, |r| table[r as usize] /= n_background);
            for (s, v) in values.iter_mut().enumerate() {
                *v += table[s & used as usize];
            }
        }
        values
    }

    pub fn explain(
        &self,
        instance: &Row,
        background: &BackgroundSet,
        class: usize,
    ) -> Result<ShapAttribution> {
        if background.is_empty() {
            return Err(Error::EmptyBackground);
        }
        if class >= self.ensemble.n_classes {
            return Err(Error::Parameter(format!(
                "class {class} outside 0..{}",
                self.ensemble.n_classes
            )));
        }
        let v = self.coalition_values(instance, background, class);
        Ok(ShapAttribution {
            class,
            instance: *instance,
            values: self.shapley_from_values(&v),
            baseline: v[0],
            margin: self.ensemble.class_margin(class, instance),
        })
    }

    fn shapley_from_values(&self, v: &[f64; N_COALITIONS]) -> Row {
        let mut phi = [0.0; N_FEATURES];
        for (j, p) in phi.iter_mut().enumerate() {
            let bit = 1usize << j;
            for s in 0..N_COALITIONS {
                if s & bit != 0 {
                    continue;
                }
                let size = (s as u32).count_ones() as usize;
                *p += self.weights[size] * (v[s | bit] - v[s]);
            }
        }
        phi
    }
}

fn for_each_submask(mask: u32, mut f: impl FnMut(u32)) {
    let mut sub = mask;
    loop {
        f(sub);
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & mask;
    }
}

/// Adds the leaf reached by every composite of `x` and `b` to the table
/// slot of each coalition (restricted to `used`) that reaches it.
fn accumulate_leaves(tree: &Tree, x: &Row, b: &Row, used: u32, table: &mut [f64; N_COALITIONS]) {
    // (node, features forced from x, features forced from b)
    let mut stack: Vec<(usize, u32, u32)> = Vec::with_capacity(16);
    stack.push((0, 0, 0));
    while let Some((idx, from_x, from_b)) = stack.pop() {
        match tree.nodes[idx] {
            TreeNode::Leaf { weight } => {
                let free = used & !(from_x | from_b);
                for_each_submask(free, |sub| table[(from_x | sub) as usize] += weight);
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let bit = 1u32 << feature;
                let x_child = if x[feature] < threshold { left } else { right };
                let b_child = if b[feature] < threshold { left } else { right };
                if from_x & bit != 0 || x_child == b_child {
                    stack.push((x_child, from_x, from_b));
                } else if from_b & bit != 0 {
                    stack.push((b_child, from_x, from_b));
                } else {
                    stack.push((b_child, from_x, from_b | bit));
                    stack.push((x_child, from_x | bit, from_b));
                }
            }
        }
    }
}

/// Exact Shapley values of `instance` for `class`.
pub fn shap_exact(
    ensemble: &GbtEnsemble,
    instance: &[f64],
    background: &BackgroundSet,
    class: usize,
) -> Result<ShapAttribution> {
    let row: Row = instance.try_into().map_err(|_| Error::Shape {
        expected: N_FEATURES,
        got: instance.len(),
    })?;
    ShapPlan::new(ensemble).explain(&row, background, class)
}

/// Attributions for every class of one instance.
pub fn shap_all_classes(
    ensemble: &GbtEnsemble,
    instance: &[f64],
    background: &BackgroundSet,
) -> Result<Vec<ShapAttribution>> {
    let row: Row = instance.try_into().map_err(|_| Error::Shape {
        expected: N_FEATURES,
        got: instance.len(),
    })?;
    let plan = ShapPlan::new(ensemble);
    (0..ensemble.n_classes)
        .map(|c| plan.explain(&row, background, c))
        .collect()
}

/// Global mean absolute Shapley value per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub features: Vec<String>,
    /// Averaged over sampled instances and classes.
    pub mean_abs_shap: Vec<f64>,
    /// `mean_abs_shap` divided by its total; `None` when every entry is zero.
    pub normalized: Option<Vec<f64>>,
    pub n_instances: usize,
    pub n_classes: usize,
}

impl ImportanceTable {
    pub fn from_values(mean_abs_shap: Vec<f64>, n_instances: usize, n_classes: usize) -> Self {
        let total: f64 = mean_abs_shap.iter().sum();
        let normalized = (total > 0.0).then(|| mean_abs_shap.iter().map(|v| v / total).collect());
        ImportanceTable {
            features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            mean_abs_shap,
            normalized,
            n_instances,
            n_classes,
        }
    }

    /// Feature indices by descending importance; ties keep schema order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.mean_abs_shap.len()).collect();
        order.sort_by(|&a, &b| self.mean_abs_shap[b].total_cmp(&self.mean_abs_shap[a]));
        order
    }
}

pub fn global_importance(
    ensemble: &GbtEnsemble,
    sample: &[Row],
    background: &BackgroundSet,
) -> Result<ImportanceTable> {
    if sample.is_empty() {
        return Err(Error::EmptyInput("importance sample"));
    }
    if background.is_empty() {
        return Err(Error::EmptyBackground);
    }
    let plan = ShapPlan::new(ensemble);
    let mut totals = [0.0; N_FEATURES];
    for row in sample {
        for class in 0..ensemble.n_classes {
            let v = plan.coalition_values(row, background, class);
            let phi = plan.shapley_from_values(&v);
            for (t, p) in totals.iter_mut().zip(phi) {
                *t += p.abs();
            }
        }
    }
    let count = (sample.len() * ensemble.n_classes) as f64;
    Ok(ImportanceTable::from_values(
        totals.iter().map(|t| t / count).collect(),
        sample.len(),
        ensemble.n_classes,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ensemble_of(trees: Vec<Tree>) -> GbtEnsemble {
        let mut e = GbtEnsemble::empty(1, 0.1);
        e.rounds = trees.len();
        e.trees[0] = trees;
        e
    }

    fn row_with(pairs: &[(usize, f64)]) -> Row {
        let mut r = [0.0; N_FEATURES];
        for &(j, v) in pairs {
            r[j] = v;
        }
        r
    }

    #[test]
    fn weights_sum_to_one_over_subsets() {
        // Σ over subsets of the 7 others, grouped by size
        let total: f64 = (0..N_FEATURES)
            .map(|s| {
                let n_subsets = (0..s).fold(1.0, |acc, i| acc * (7 - i) as f64 / (i + 1) as f64);
                n_subsets * coalition_weight(s)
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(coalition_weight(0), 1.0 / 8.0);
    }

    #[test]
    fn constant_model_has_zero_attribution() {
        let e = ensemble_of(vec![Tree::leaf(0.7), Tree::leaf(-0.2)]);
        let bg =
            BackgroundSet::from_rows(vec![row_with(&[(0, 0.3)]), row_with(&[(1, 0.9)])]).unwrap();
        let a = shap_exact(&e, &row_with(&[(2, 0.5)]), &bg, 0).unwrap();
        assert_eq!(a.values, [0.0; N_FEATURES]);
        assert!((a.baseline - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_stump_assigns_everything_to_its_feature() {
        let e = ensemble_of(vec![Tree::stump(0, 0.5, 0.0, 1.0)]);
        let bg =
            BackgroundSet::from_rows(vec![row_with(&[(3, 0.2)]), row_with(&[(5, 0.8)])]).unwrap();
        let x = row_with(&[(0, 1.0), (3, 0.9)]);
        let a = shap_exact(&e, &x, &bg, 0).unwrap();
        assert!((a.values[0] - 1.0).abs() < 1e-12);
        assert!(a.values[1..].iter().all(|&v| v == 0.0));
        assert_eq!(a.baseline, 0.0);
    }

    #[test]
    fn additive_model_splits_by_component() {
        let g = Tree::stump(0, 0.5, -1.0, 2.0);
        let h = Tree::stump(1, 0.4, 0.5, -0.5);
        let e = ensemble_of(vec![g.clone(), h.clone()]);
        let bg = BackgroundSet::from_rows(vec![
            row_with(&[(0, 0.1), (1, 0.1)]),
            row_with(&[(0, 0.9), (1, 0.2)]),
            row_with(&[(0, 0.2), (1, 0.8)]),
        ])
        .unwrap();
        let x = row_with(&[(0, 0.7), (1, 0.6)]);
        let a = shap_exact(&e, &x, &bg, 0).unwrap();
        let mean = |t: &Tree| bg.rows.iter().map(|b| t.predict(b)).sum::<f64>() / 3.0;
        assert!((a.values[0] - (g.predict(&x) - mean(&g))).abs() < 1e-12);
        assert!((a.values[1] - (h.predict(&x) - mean(&h))).abs() < 1e-12);
    }

    #[test]
    fn empty_background_rejected() {
        let e = ensemble_of(vec![Tree::leaf(0.0)]);
        let bg = BackgroundSet {
            rows: vec![],
            seed: 0,
        };
        assert!(matches!(
            shap_exact(&e, &[0.0; N_FEATURES], &bg, 0),
            Err(Error::EmptyBackground)
        ));
        assert!(matches!(
            BackgroundSet::sample(&[], 4, 0),
            Err(Error::EmptyBackground)
        ));
    }

    #[test]
    fn global_importance_arithmetic_and_dummy() {
        let e = ensemble_of(vec![Tree::stump(0, 0.5, -1.0, 1.0)]);
        let bg = BackgroundSet::from_rows(vec![row_with(&[(0, 0.0)])]).unwrap();
        let sample = vec![row_with(&[(0, 1.0)]), row_with(&[(0, 0.2)])];
        let t = global_importance(&e, &sample, &bg).unwrap();
        // φ0 = 2 for the first row, 0 for the second
        assert!((t.mean_abs_shap[0] - 1.0).abs() < 1e-12);
        assert!(t.mean_abs_shap[1..].iter().all(|&v| v == 0.0));
        assert_eq!(t.normalized.as_ref().unwrap()[0], 1.0);
        assert_eq!(t.ranking()[0], 0);

        let constant = ensemble_of(vec![Tree::leaf(3.0)]);
        let t = global_importance(&constant, &sample, &bg).unwrap();
        assert!(t.mean_abs_shap.iter().all(|&v| v == 0.0));
        assert!(t.normalized.is_none());
        assert!(matches!(
            global_importance(&e, &[], &bg),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn background_sampling_without_replacement() {
        let rows: Vec<Row> = (0..50).map(|i| row_with(&[(0, i as f64)])).collect();
        let bg = BackgroundSet::sample(&rows, 10, 3).unwrap();
        assert_eq!(bg.len(), 10);
        let mut firsts: Vec<f64> = bg.rows.iter().map(|r| r[0]).collect();
        firsts.dedup();
        assert_eq!(firsts.len(), 10);
        assert_eq!(BackgroundSet::sample(&rows, 500, 3).unwrap().len(), 50);
        assert_eq!(bg, BackgroundSet::sample(&rows, 10, 3).unwrap());
    }

    fn arb_tree() -> impl Strategy<Value = Tree> {
        // depth-2 tree over features 0..4
        (
            prop::array::uniform3((0usize..4, 0.05f64..0.95)),
            prop::array::uniform4(-1.0f64..1.0),
        )
            .prop_map(|(splits, leaves)| Tree {
                nodes: vec![
                    TreeNode::Split {
                        feature: splits[0].0,
                        threshold: splits[0].1,
                        left: 1,
                        right: 2,
                    },
                    TreeNode::Split {
                        feature: splits[1].0,
                        threshold: splits[1].1,
                        left: 3,
                        right: 4,
                    },
                    TreeNode::Split {
                        feature: splits[2].0,
                        threshold: splits[2].1,
                        left: 5,
                        right: 6,
                    },
                    TreeNode::Leaf { weight: leaves[0] },
                    TreeNode::Leaf { weight: leaves[1] },
                    TreeNode::Leaf { weight: leaves[2] },
                    TreeNode::Leaf { weight: leaves[3] },
                ],
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn efficiency_holds(
            trees in prop::collection::vec(arb_tree(), 1..6),
            x in prop::array::uniform8(0.0f64..1.0),
            bg in prop::collection::vec(prop::array::uniform8(0.0f64..1.0), 1..8),
        ) {
            let e = ensemble_of(trees);
            let bg = BackgroundSet::from_rows(bg).unwrap();
            let a = shap_exact(&e, &x, &bg, 0).unwrap();
            prop_assert!(a.efficiency_gap().abs() < 1e-9);
            // features 4..8 never split
            prop_assert!(a.values[4..].iter().all(|&v| v == 0.0));
        }

        #[test]
        fn additive_across_trees(
            t1 in arb_tree(),
            t2 in arb_tree(),
            x in prop::array::uniform8(0.0f64..1.0),
            bg in prop::collection::vec(prop::array::uniform8(0.0f64..1.0), 1..8),
        ) {
            let bg = BackgroundSet::from_rows(bg).unwrap();
            let both = shap_exact(&ensemble_of(vec![t1.clone(), t2.clone()]), &x, &bg, 0).unwrap();
            let a = shap_exact(&ensemble_of(vec![t1]), &x, &bg, 0).unwrap();
            let b = shap_exact(&ensemble_of(vec![t2]), &x, &bg, 0).unwrap();
            for j in 0..N_FEATURES {
                prop_assert!((both.values[j] - a.values[j] - b.values[j]).abs() < 1e-9);
            }
        }

        #[test]
        fn interchangeable_features_share_credit(
            t in 0.1f64..0.9,
            w in prop::array::uniform4(-1.0f64..1.0),
            x in prop::array::uniform8(0.0f64..1.0),
            bg in prop::collection::vec(prop::array::uniform8(0.0f64..1.0), 1..6),
        ) {
            // f = g(x0, x1) symmetric in the two inputs; x0 and x1 share values in every row
            let sym = |mut r: Row| { r[1] = r[0]; r };
            let tree = Tree { nodes: vec![
                TreeNode::Split { feature: 0, threshold: t, left: 1, right: 2 },
                TreeNode::Split { feature: 1, threshold: t, left: 3, right: 4 },
                TreeNode::Split { feature: 1, threshold: t, left: 5, right: 6 },
                TreeNode::Leaf { weight: w[0] },
                TreeNode::Leaf { weight: w[1] },
                TreeNode::Leaf { weight: w[1] },
                TreeNode::Leaf { weight: w[3] },
            ]};
            let bg = BackgroundSet::from_rows(bg.into_iter().map(sym).collect()).unwrap();
            let a = shap_exact(&ensemble_of(vec![tree]), &sym(x), &bg, 0).unwrap();
            prop_assert!((a.values[0] - a.values[1]).abs() < 1e-9);
        }
    }
}
