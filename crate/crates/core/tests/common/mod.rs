#![allow(dead_code, clippy::needless_range_loop)]

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use suitability_core::gbt::{GbtEnsemble, Tree, TreeNode};

pub type Row = [f64; 8];

/// Walks the node arena without going through the library's routing.
fn leaf_value(nodes: &[TreeNode], row: &Row) -> f64 {
    let mut i = 0;
    loop {
        match &nodes[i] {
            TreeNode::Leaf { weight } => return *weight,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                i = if row[*feature] < *threshold {
                    *left
                } else {
                    *right
                };
            }
        }
    }
}

fn composite(x: &Row, b: &Row, coalition: usize) -> Row {
    let mut z = *b;
    for j in 0..8 {
        if coalition & (1 << j) != 0 {
            z[j] = x[j];
        }
    }
    z
}

/// Coalition value from scratch: trees in order, background rows in order.
pub fn coalition_value(
    e: &GbtEnsemble,
    class: usize,
    x: &Row,
    bg: &[Row],
    coalition: usize,
) -> f64 {
    let mut v = e.base_score;
    for tree in &e.trees[class] {
        let mut sum = 0.0;
        for b in bg {
            sum += leaf_value(&tree.nodes, &composite(x, b, coalition));
        }
        v += sum / bg.len() as f64;
    }
    v
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Shapley values by direct enumeration, re-evaluating every coalition each time.
pub fn brute_force_shap(e: &GbtEnsemble, class: usize, x: &Row, bg: &[Row]) -> (Row, f64) {
    let n = 8;
    let mut phi = [0.0; 8];
    for j in 0..n {
        for s in 0..(1usize << n) {
            if s & (1 << j) != 0 {
                continue;
            }
            let size = s.count_ones() as usize;
            let w = factorial(size) * factorial(n - size - 1) / factorial(n);
            let gain = coalition_value(e, class, x, bg, s | (1 << j))
                - coalition_value(e, class, x, bg, s);
            phi[j] += w * gain;
        }
    }
    (phi, coalition_value(e, class, x, bg, 0))
}

/// Values on a coarse grid so instance, background and thresholds collide.
pub fn grid_value(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0..=8) as f64 / 8.0
}

fn random_tree(rng: &mut ChaCha8Rng, features: &[usize], depth: usize) -> Tree {
    fn grow(
        rng: &mut ChaCha8Rng,
        features: &[usize],
        depth: usize,
        nodes: &mut Vec<TreeNode>,
    ) -> usize {
        let id = nodes.len();
        if depth == 0 || rng.random_bool(0.2) {
            nodes.push(TreeNode::Leaf {
                weight: rng.random_range(-1.0..1.0),
            });
            return id;
        }
        nodes.push(TreeNode::Leaf { weight: 0.0 });
        let feature = *features.choose(rng).unwrap();
        let threshold = grid_value(rng);
        let left = grow(rng, features, depth - 1, nodes);
        let right = grow(rng, features, depth - 1, nodes);
        nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
    let mut nodes = Vec::new();
    grow(rng, features, depth, &mut nodes);
    Tree { nodes }
}

/// Random multi-class ensemble splitting on at most four features.
pub fn random_ensemble(seed: u64) -> GbtEnsemble {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<usize> = (0..8).collect();
    all.shuffle(&mut rng);
    let features = &all[..rng.random_range(1..=4)];
    let n_classes = rng.random_range(1..=3);
    let rounds = rng.random_range(1..=6);
    let trees = (0..n_classes)
        .map(|_| {
            (0..rounds)
                .map(|_| {
                    let depth = rng.random_range(0..=3);
                    random_tree(&mut rng, features, depth)
                })
                .collect()
        })
        .collect();
    let e = GbtEnsemble {
        n_classes,
        rounds,
        learning_rate: 0.1,
        base_score: rng.random_range(-0.5..0.5),
        trees,
    };
    e.validate().unwrap();
    e
}

/// `k` Gaussian blobs in the unit cube whose centres sit at least
/// `separation` times the intra-blob RMS radius apart.
pub fn separated_blobs(
    n: usize,
    k: usize,
    sigma: f64,
    separation: f64,
    seed: u64,
) -> (Vec<Row>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = sigma * 8f64.sqrt();
    let mut centres: Vec<Row> = Vec::new();
    while centres.len() < k {
        let c: Row = std::array::from_fn(|_| rng.random_range(0.15..0.85));
        let far = centres.iter().all(|o| {
            let d2: f64 = o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= separation * radius
        });
        if far {
            centres.push(c);
        }
    }
    let noise = Normal::new(0.0, sigma).unwrap();
    (0..n)
        .map(|i| {
            let c = i % k;
            (
                std::array::from_fn(|j| centres[c][j] + noise.sample(&mut rng)),
                c,
            )
        })
        .unzip()
}
