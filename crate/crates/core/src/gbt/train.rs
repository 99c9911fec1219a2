//! Softmax boosting with exact greedy, second-order split search.
//!
//! Rows are first put into a canonical order (lexicographic on features,
//! then label) so the fitted ensemble does not depend on input order:
//! every sum, the holdout draw and split tie-breaking run over that order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ensemble::{argmax, GbtEnsemble};
use super::tree::{Tree, TreeNode};
use crate::dataset::N_FEATURES;
use crate::error::{Error, Result};
use crate::preprocess::Row;

const HESSIAN_FLOOR: f64 = 1e-16;
const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub rounds: usize,
    /// Rounds without validation improvement before stopping.
    pub early_stopping_patience: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_hessian: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            learning_rate: 0.1,
            max_depth: 4,
            rounds: 200,
            early_stopping_patience: 20,
            lambda: 1.0,
            gamma: 0.0,
            min_child_hessian: 1e-3,
        }
    }
}

impl GbtParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.lambda < 0.0 || self.gamma < 0.0 || self.min_child_hessian < 0.0 {
            return bad("lambda, gamma and min_child_hessian must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_loss: Option<f64>,
    pub valid_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub rounds: Vec<RoundMetrics>,
    /// Round count kept in the ensemble (after early-stopping truncation).
    pub best_round: usize,
    pub stopped_early: bool,
}

/// Output of [`train`]: the ensemble, its history and the holdout rows.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub ensemble: GbtEnsemble,
    pub history: TrainHistory,
    /// Indices into the caller's rows held out for validation, ascending.
    pub holdout: Vec<usize>,
}

pub fn train(
    features: &[Row],
    labels: &[usize],
    n_classes: usize,
    params: &GbtParams,
    validation_fraction: f64,
    seed: u64,
) -> Result<TrainedModel> {
    params.validate()?;
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(Error::Parameter(format!(
            "validation_fraction {validation_fraction} must lie in [0, 1)"
        )));
    }
    if features.len() != labels.len() {
        return Err(Error::Alignment(format!(
            "{} rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if n_classes == 0 {
        return Err(Error::Parameter("n_classes must be positive".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Parameter(format!(
            "label {bad} outside 0..{n_classes}"
        )));
    }

    let canonical = canonical_order(features, labels);
    let (train_pos, valid_pos) =
        stratified_split(&canonical, labels, n_classes, validation_fraction, seed);

    let mut present = vec![false; n_classes];
    for &p in &train_pos {
        present[labels[canonical[p]]] = true;
    }
    let missing: Vec<usize> = (0..n_classes).filter(|&c| !present[c]).collect();
    if !missing.is_empty() {
        return Err(Error::LabelCoverage { missing });
    }

    let gather = |pos: &[usize]| -> (Vec<Row>, Vec<usize>) {
        pos.iter()
            .map(|&p| (features[canonical[p]], labels[canonical[p]]))
            .unzip()
    };
    let (train_x, train_y) = gather(&train_pos);
    let (valid_x, valid_y) = gather(&valid_pos);

    let (ensemble, history) = boost(&train_x, &train_y, &valid_x, &valid_y, n_classes, params);

    let mut holdout: Vec<usize> = valid_pos.iter().map(|&p| canonical[p]).collect();
    holdout.sort_unstable();
    Ok(TrainedModel {
        ensemble,
        history,
        holdout,
    })
}

fn canonical_order(features: &[Row], labels: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| {
        features[a]
            .iter()
            .zip(&features[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(labels[a].cmp(&labels[b]))
    });
    order
}

/// Positions into `canonical` for training and validation, each ascending.
///
/// Every class contributes `round(fraction * n_c)` rows to validation while
/// keeping at least one row for training.
fn stratified_split(
    canonical: &[usize],
    labels: &[usize],
    n_classes: usize,
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    if fraction == 0.0 {
        return ((0..canonical.len()).collect(), Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..canonical.len())
            .filter(|&p| labels[canonical[p]] == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let n_valid = ((fraction * members.len() as f64).round() as usize).min(members.len() - 1);
        valid.extend_from_slice(&members[..n_valid]);
        train.extend_from_slice(&members[n_valid..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    (train, valid)
}

fn softmax_into(margins: &[f64], out: &mut [f64]) {
    let max = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, m) in out.iter_mut().zip(margins) {
        *o = (m - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Mean cross-entropy and accuracy for row-major margins.
fn loss_and_accuracy(margins: &[f64], labels: &[usize], k: usize) -> (f64, f64) {
    let mut p = vec![0.0; k];
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        let m = &margins[i * k..(i + 1) * k];
        softmax_into(m, &mut p);
        loss -= p[y].max(PROB_FLOOR).ln();
        if argmax(&p) == y {
            correct += 1;
        }
    }
    let n = labels.len() as f64;
    (loss / n, correct as f64 / n)
}

fn boost(
    train_x: &[Row],
    train_y: &[usize],
    valid_x: &[Row],
    valid_y: &[usize],
    k: usize,
    params: &GbtParams,
) -> (GbtEnsemble, TrainHistory) {
    let mut ensemble = GbtEnsemble::empty(k, params.learning_rate);
    let n = train_x.len();
    let mut margins = vec![ensemble.base_score; n * k];
    let mut valid_margins = vec![ensemble.base_score; valid_x.len() * k];
    let sorted = presort(train_x);

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize)> = None;
    let mut probs = vec![0.0; n * k];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for round in 1..=params.rounds {
        for i in 0..n {
            softmax_into(&margins[i * k..(i + 1) * k], &mut probs[i * k..(i + 1) * k]);
        }
        let mut round_trees = Vec::with_capacity(k);
        for c in 0..k {
            for i in 0..n {
                let p = probs[i * k + c];
                let y = if train_y[i] == c { 1.0 } else { 0.0 };
                grad[i] = p - y;
                hess[i] = (p * (1.0 - p)).max(HESSIAN_FLOOR);
            }
            round_trees.push(build_tree(train_x, &grad, &hess, &sorted, params));
        }
        for (c, tree) in round_trees.into_iter().enumerate() {
            for (i, row) in train_x.iter().enumerate() {
                margins[i * k + c] += tree.predict(row);
            }
            for (i, row) in valid_x.iter().enumerate() {
                valid_margins[i * k + c] += tree.predict(row);
            }
            ensemble.trees[c].push(tree);
        }
        ensemble.rounds = round;

        let (train_loss, train_accuracy) = loss_and_accuracy(&margins, train_y, k);
        let (valid_loss, valid_accuracy) = if valid_y.is_empty() {
            (None, None)
        } else {
            let (l, a) = loss_and_accuracy(&valid_margins, valid_y, k);
            (Some(l), Some(a))
        };
        history.rounds.push(RoundMetrics {
            round,
            train_loss,
            train_accuracy,
            valid_loss,
            valid_accuracy,
        });

        if let Some(vl) = valid_loss {
            if best.is_none_or(|(b, _)| vl < b) {
                best = Some((vl, round));
            }
            let (_, best_round) = best.expect("set above");
            if params.early_stopping_patience > 0
                && round - best_round >= params.early_stopping_patience
            {
                history.stopped_early = true;
                break;
            }
        }
    }

    let keep = best.map_or(ensemble.rounds, |(_, r)| r);
    for list in &mut ensemble.trees {
        list.truncate(keep);
    }
    ensemble.rounds = keep;
    history.best_round = keep;
    (ensemble, history)
}

/// Row positions sorted by each feature; ties keep canonical order.
fn presort(rows: &[Row]) -> Vec<Vec<u32>> {
    (0..N_FEATURES)
        .map(|j| {
            let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
            idx.sort_by(|&a, &b| rows[a as usize][j].total_cmp(&rows[b as usize][j]));
            idx
        })
        .collect()
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Open {
    node: usize,
    grad: f64,
    hess: f64,
    any_gradient: bool,
}

fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - gamma
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid <= lo {
        hi
    } else {
        mid
    }
}

/// Level-wise exact greedy growth. A split is taken when its gain is
/// non-negative and the node carries some non-zero gradient; ties prefer
/// the lower feature index, then the lower threshold.
fn build_tree(
    rows: &[Row],
    grad: &[f64],
    hess: &[f64],
    sorted: &[Vec<u32>],
    params: &GbtParams,
) -> Tree {
    const NONE: u32 = u32::MAX;
    let n = rows.len();
    let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { weight: 0.0 }];
    let mut node_of: Vec<u32> = vec![0; n];

    let totals = |node_of: &[u32], ids: &[usize], n_nodes: usize| -> Vec<Open> {
        let mut out: Vec<Open> = ids
            .iter()
            .map(|&node| Open {
                node,
                grad: 0.0,
                hess: 0.0,
                any_gradient: false,
            })
            .collect();
        let mut slot = vec![NONE; n_nodes];
        for (s, &id) in ids.iter().enumerate() {
            slot[id] = s as u32;
        }
        for i in 0..n {
            if node_of[i] == NONE {
                continue;
            }
            let s = slot[node_of[i] as usize];
            if s != NONE {
                let o = &mut out[s as usize];
                o.grad += grad[i];
                o.hess += hess[i];
                o.any_gradient |= grad[i] != 0.0;
            }
        }
        out
    };

    let mut open = totals(&node_of, &[0], 1);
    let mut depth = 0;
    while !open.is_empty() {
        let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
        if depth < params.max_depth {
            // slot of each open node, indexed by node id
            let mut slot = vec![NONE; nodes.len()];
            for (s, o) in open.iter().enumerate() {
                slot[o.node] = s as u32;
            }
            let mut gl = vec![0.0; open.len()];
            let mut hl = vec![0.0; open.len()];
            let mut last = vec![f64::NAN; open.len()];
            for (feature, order) in sorted.iter().enumerate() {
                gl.iter_mut().for_each(|v| *v = 0.0);
                hl.iter_mut().for_each(|v| *v = 0.0);
                last.iter_mut().for_each(|v| *v = f64::NAN);
                for &r in order {
                    let r = r as usize;
                    let node = node_of[r];
                    if node == NONE {
                        continue;
                    }
                    let s = slot[node as usize];
                    if s == NONE {
                        continue;
                    }
                    let s = s as usize;
                    let v = rows[r][feature];
                    if v > last[s] {
                        let o = &open[s];
                        let (gr, hr) = (o.grad - gl[s], o.hess - hl[s]);
                        if hl[s] >= params.min_child_hessian && hr >= params.min_child_hessian {
                            let gain =
                                split_gain(gl[s], hl[s], gr, hr, params.lambda, params.gamma);
                            if best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Candidate {
                                    gain,
                                    feature,
                                    threshold: midpoint(last[s], v),
                                });
                            }
                        }
                    }
                    gl[s] += grad[r];
                    hl[s] += hess[r];
                    last[s] = v;
                }
            }
        }

        let mut next_ids = Vec::new();
        let mut routed: Vec<(usize, Candidate, usize, usize)> = Vec::new();
        for (s, o) in open.iter().enumerate() {
            match best[s] {
                Some(c) if c.gain >= 0.0 && o.any_gradient => {
                    let left = nodes.len();
                    nodes.push(TreeNode::Leaf { weight: 0.0 });
                    nodes.push(TreeNode::Leaf { weight: 0.0 });
                    nodes[o.node] = TreeNode::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    routed.push((o.node, c, left, left + 1));
                    next_ids.extend([left, left + 1]);
                }
                _ => {
                    nodes[o.node] = TreeNode::Leaf {
                        weight: -o.grad / (o.hess + params.lambda) * params.learning_rate,
                    };
                }
            }
        }
        for (i, row) in rows.iter().enumerate() {
            let node = node_of[i];
            if node == NONE {
                continue;
            }
            node_of[i] = match routed.iter().find(|(id, ..)| *id as u32 == node) {
                Some(&(_, c, left, right)) => {
                    if row[c.feature] < c.threshold {
                        left as u32
                    } else {
                        right as u32
                    }
                }
                None => NONE,
            };
        }
        open = totals(&node_of, &next_ids, nodes.len());
        depth += 1;
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row2(a: f64, b: f64) -> Row {
        let mut r = [0.0; N_FEATURES];
        r[0] = a;
        r[1] = b;
        r
    }

    #[test]
    fn gain_formula() {
        // left (G=-2, H=1), right (G=2, H=1), lambda 1
        let g = split_gain(-2.0, 1.0, 2.0, 1.0, 1.0, 0.0);
        assert!((g - 0.5 * (4.0 / 2.0 + 4.0 / 2.0 - 0.0)).abs() < 1e-15);
        assert!((split_gain(-2.0, 1.0, 2.0, 1.0, 1.0, 0.5) - (g - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn xor_is_learned_exactly() {
        let rows = vec![
            row2(0.0, 0.0),
            row2(0.0, 1.0),
            row2(1.0, 0.0),
            row2(1.0, 1.0),
        ];
        let labels = vec![0, 1, 1, 0];
        let params = GbtParams {
            max_depth: 2,
            rounds: 50,
            ..GbtParams::default()
        };
        let model = train(&rows, &labels, 2, &params, 0.0, 0).unwrap();
        for (r, &y) in rows.iter().zip(&labels) {
            assert_eq!(model.ensemble.predict_class(r).unwrap(), y);
        }
        assert!(model
            .ensemble
            .trees
            .iter()
            .flatten()
            .all(|t| t.depth() <= 2));
        assert_eq!(model.history.rounds.last().unwrap().train_accuracy, 1.0);
    }

    #[test]
    fn single_class_declared_five_is_coverage_error() {
        let rows = vec![row2(0.1, 0.2); 6];
        let labels = vec![2; 6];
        match train(&rows, &labels, 5, &GbtParams::default(), 0.0, 0).unwrap_err() {
            Error::LabelCoverage { missing } => assert_eq!(missing, [0, 1, 3, 4]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_class_model_is_certain() {
        let rows = vec![row2(0.1, 0.2), row2(0.4, 0.9), row2(0.7, 0.3)];
        let model = train(&rows, &[0, 0, 0], 1, &GbtParams::default(), 0.0, 0).unwrap();
        assert_eq!(model.ensemble.predict_proba(&rows[1]).unwrap(), vec![1.0]);
        assert!(model
            .ensemble
            .trees
            .iter()
            .flatten()
            .all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn zero_rounds_predicts_prior() {
        let rows = vec![
            row2(0.1, 0.0),
            row2(0.2, 0.0),
            row2(0.3, 0.0),
            row2(0.9, 0.0),
        ];
        let labels = vec![0, 0, 0, 1];
        let params = GbtParams {
            rounds: 0,
            ..GbtParams::default()
        };
        let model = train(&rows, &labels, 2, &params, 0.0, 0).unwrap();
        assert_eq!(model.ensemble.rounds, 0);
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(r, y)| model.ensemble.predict_class(&r[..]).unwrap() == **y)
            .count();
        assert_eq!(correct as f64 / 4.0, 0.75);
    }

    #[test]
    fn bad_validation_fraction() {
        let rows = vec![row2(0.0, 0.0), row2(1.0, 1.0)];
        assert!(matches!(
            train(&rows, &[0, 1], 2, &GbtParams::default(), 1.0, 0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn huge_lambda_gives_uniform_prior() {
        let rows: Vec<Row> = (0..20).map(|i| row2(i as f64 / 20.0, 0.0)).collect();
        let labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let params = GbtParams {
            lambda: 1e12,
            rounds: 10,
            ..GbtParams::default()
        };
        let model = train(&rows, &labels, 2, &params, 0.0, 0).unwrap();
        for r in &rows {
            for p in model.ensemble.predict_proba(r).unwrap() {
                assert!((p - 0.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn midpoint_never_collapses_onto_lower_value() {
        let lo = 0.1f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let m = midpoint(lo, hi);
        assert!(lo < m && m <= hi);
    }

    #[test]
    fn stratified_split_keeps_class_shares() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let canonical: Vec<usize> = (0..100).collect();
        let (train, valid) = stratified_split(&canonical, &labels, 4, 0.2, 9);
        assert_eq!(valid.len(), 20);
        assert_eq!(train.len(), 80);
        for c in 0..4 {
            assert_eq!(valid.iter().filter(|&&p| labels[p] == c).count(), 5);
        }
    }

    fn blob_data(seed: u64, n: usize) -> (Vec<Row>, Vec<usize>) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let mut r = [0.0; N_FEATURES];
            for v in r.iter_mut() {
                *v = (rng.random::<f64>() * 20.0).round() / 20.0;
            }
            let label = if r[0] + r[1] > 1.1 {
                2
            } else if r[2] > 0.5 {
                1
            } else {
                0
            };
            rows.push(r);
            labels.push(label);
        }
        (rows, labels)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn row_permutation_does_not_change_model(seed in any::<u64>(), rot in 1usize..60) {
            let (rows, labels) = blob_data(seed, 60);
            let params = GbtParams { rounds: 15, ..GbtParams::default() };
            let a = train(&rows, &labels, 3, &params, 0.2, 4).unwrap();
            let n = rows.len();
            let perm: Vec<usize> = (0..n).map(|i| (i * 7 + rot) % n).collect();
            prop_assume!({
                let mut p = perm.clone();
                p.sort_unstable();
                p == (0..n).collect::<Vec<_>>()
            });
            let rows2: Vec<Row> = perm.iter().map(|&i| rows[i]).collect();
            let labels2: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
            let b = train(&rows2, &labels2, 3, &params, 0.2, 4).unwrap();
            prop_assert_eq!(&a.ensemble, &b.ensemble);
            prop_assert_eq!(
                serde_json::to_string(&a.ensemble).unwrap(),
                serde_json::to_string(&b.ensemble).unwrap()
            );
        }

        #[test]
        fn training_loss_non_increasing(seed in any::<u64>()) {
            let (rows, labels) = blob_data(seed, 120);
            let params = GbtParams { rounds: 40, ..GbtParams::default() };
            let m = train(&rows, &labels, 3, &params, 0.0, 1).unwrap();
            for w in m.history.rounds.windows(2) {
                prop_assert!(w[1].train_loss <= w[0].train_loss + 1e-9);
            }
            for t in m.ensemble.trees.iter().flatten() {
                prop_assert!(t.depth() <= params.max_depth);
            }
        }
    }
}
