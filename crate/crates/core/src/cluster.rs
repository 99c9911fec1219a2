//! K-means proxy labelling.
//!
//! Lloyd iterations from a seeded k-means++ start, k chosen by mean
//! silhouette over a candidate range, and clusters ranked into ordinal
//! suitability classes by their mean direction-adjusted feature score.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::N_FEATURES;
use crate::error::{Error, Result};
use crate::preprocess::Row;

pub const CLASS_LABELS: [&str; 5] = ["Very Low", "Low", "Moderate", "High", "Very High"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Seeded restarts per candidate k in [`select_k`].
    pub n_init: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            max_iter: 300,
            tol: 1e-6,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Vec<Row>,
    pub inertia: f64,
    pub iterations_run: usize,
    pub seed: u64,
}

fn sq_dist(a: &Row, b: &Row) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &Row, b: &Row) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Index and squared distance of the nearest centroid; ties go to the lower index.
fn nearest(centroids: &[Row], row: &Row) -> (usize, f64) {
    let mut best = (0, sq_dist(&centroids[0], row));
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(centroid, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

impl KMeansModel {
    pub fn nearest(&self, row: &Row) -> usize {
        nearest(&self.centroids, row).0
    }

    pub fn assign(&self, rows: &[Row]) -> Vec<usize> {
        rows.iter().map(|r| self.nearest(r)).collect()
    }
}

/// Sum of squared distances of each row to its labelled centroid.
pub fn inertia(rows: &[Row], centroids: &[Row], labels: &[usize]) -> f64 {
    rows.iter()
        .zip(labels)
        .map(|(r, &l)| sq_dist(r, &centroids[l]))
        .sum()
}

fn kmeans_plus_plus(rows: &[Row], k: usize, rng: &mut ChaCha8Rng) -> Vec<Row> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(rows[rng.random_range(0..rows.len())]);
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave the target past the last positive weight
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            rng.random_range(0..rows.len())
        };
        let c = rows[pick];
        for (slot, r) in d2.iter_mut().zip(rows) {
            *slot = slot.min(sq_dist(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

pub fn kmeans_fit(
    rows: &[Row],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel> {
    kmeans_fit_traced(rows, k, seed, max_iter, tol).map(|(m, _)| m)
}

/// As [`kmeans_fit`], also returning the objective after every assignment step.
pub fn kmeans_fit_traced(
    rows: &[Row],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<(KMeansModel, Vec<f64>)> {
    check_k(rows, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeans_plus_plus(rows, k, &mut rng);
    Ok(lloyd(rows, init, seed, max_iter, tol))
}

fn check_k(rows: &[Row], k: usize) -> Result<()> {
    if k == 0 || k > rows.len() {
        return Err(Error::InfeasibleK {
            k,
            rows: rows.len(),
        });
    }
    Ok(())
}

fn lloyd(
    rows: &[Row],
    mut centroids: Vec<Row>,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> (KMeansModel, Vec<f64>) {
    let k = centroids.len();
    let mut labels = vec![0usize; rows.len()];
    let mut d2 = vec![0.0; rows.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut objective = 0.0;
        for (i, r) in rows.iter().enumerate() {
            let (c, d) = nearest(&centroids, r);
            labels[i] = c;
            d2[i] = d;
            objective += d;
        }
        trace.push(objective);

        let mut sums = vec![[0.0; N_FEATURES]; k];
        let mut counts = vec![0usize; k];
        for (r, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(r) {
                *s += v;
            }
        }
        let mut updated = centroids.clone();
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..N_FEATURES {
                    updated[c][j] = sums[c][j] / counts[c] as f64;
                }
            } else {
                // re-seed an empty cluster at the worst-served point
                let far = (0..rows.len())
                    .filter(|i| !taken.contains(i))
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if d2[b] >= d2[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("k <= rows");
                taken.push(far);
                updated[c] = rows[far];
            }
        }
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| dist(a, b))
            .fold(0.0, f64::max);
        centroids = updated;
        if shift < tol {
            break;
        }
    }

    for (i, r) in rows.iter().enumerate() {
        labels[i] = nearest(&centroids, r).0;
    }
    let final_inertia = inertia(rows, &centroids, &labels);
    trace.push(final_inertia);
    (
        KMeansModel {
            k,
            centroids,
            inertia: final_inertia,
            iterations_run: iterations,
            seed,
        },
        trace,
    )
}

/// Mean silhouette. Singleton clusters score 0; a point with zero
/// intra-cluster distance scores 1 when the nearest other cluster is apart.
///
/// Exact O(n²) over all pairs.
pub fn silhouette(rows: &[Row], labels: &[usize]) -> Result<f64> {
    if rows.len() != labels.len() {
        return Err(Error::Alignment(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_clusters];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::UndefinedSilhouette);
    }

    // sums[i * n_clusters + c] = total distance from point i to members of c
    let n = rows.len();
    let mut sums = vec![0.0; n * n_clusters];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist(&rows[i], &rows[j]);
            sums[i * n_clusters + labels[j]] += d;
            sums[j * n_clusters + labels[i]] += d;
        }
    }

    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[i * n_clusters + own] / (sizes[own] - 1) as f64;
        let b = (0..n_clusters)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[i * n_clusters + c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCandidate {
    pub k: usize,
    pub inertia: f64,
    /// `None` when the best fit collapsed to a single cluster.
    pub silhouette: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    pub candidates: Vec<KCandidate>,
    pub chosen_k: usize,
    pub elbow_k: usize,
}

impl KSelectionReport {
    pub fn candidate(&self, k: usize) -> Option<&KCandidate> {
        self.candidates.iter().find(|c| c.k == k)
    }
}

fn derive_seed(seed: u64, k: usize, restart: usize) -> u64 {
    // splitmix64 finaliser over the combined key
    let mut z = seed
        ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (restart as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn select_k(rows: &[Row], k_min: usize, k_max: usize, seed: u64) -> Result<KSelectionReport> {
    select_k_with(rows, k_min, k_max, seed, &KMeansConfig::default()).map(|(r, _)| r)
}

/// Fits every candidate k and returns the report plus the winning model per k.
///
/// Each k keeps the lowest-inertia fit among `n_init` k-means++ restarts and
/// one warm start from the previous k's centroids plus a D²-sampled point,
/// which keeps the inertia curve non-increasing in k.
pub fn select_k_with(
    rows: &[Row],
    k_min: usize,
    k_max: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<(KSelectionReport, Vec<KMeansModel>)> {
    if k_min < 2 || k_min > k_max {
        return Err(Error::Parameter(format!(
            "k range {k_min}..={k_max} must satisfy 2 <= k_min <= k_max"
        )));
    }
    check_k(rows, k_max)?;

    let mut models: Vec<KMeansModel> = Vec::new();
    let mut candidates = Vec::new();
    for k in k_min..=k_max {
        let mut best: Option<KMeansModel> = None;
        let mut consider = |m: KMeansModel| {
            if best.as_ref().is_none_or(|b| m.inertia < b.inertia) {
                best = Some(m);
            }
        };
        for restart in 0..config.n_init.max(1) {
            let s = derive_seed(seed, k, restart);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let init = kmeans_plus_plus(rows, k, &mut rng);
            consider(lloyd(rows, init, s, config.max_iter, config.tol).0);
        }
        if let Some(prev) = models.last() {
            let s = derive_seed(seed, k, usize::MAX);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let init = extend_centroids(rows, &prev.centroids, &mut rng);
            consider(lloyd(rows, init, s, config.max_iter, config.tol).0);
        }
        let model = best.expect("at least one restart");
        let labels = model.assign(rows);
        let sil = match silhouette(rows, &labels) {
            Ok(s) => Some(s),
            Err(Error::UndefinedSilhouette) => None,
            Err(e) => return Err(e),
        };
        candidates.push(KCandidate {
            k,
            inertia: model.inertia,
            silhouette: sil,
        });
        models.push(model);
    }

    let mut chosen: Option<(usize, f64)> = None;
    for c in &candidates {
        if let Some(s) = c.silhouette {
            if chosen.is_none_or(|(_, best)| s > best) {
                chosen = Some((c.k, s));
            }
        }
    }
    let chosen_k = chosen.ok_or(Error::UndefinedSilhouette)?.0;
    let elbow_k = elbow(&candidates);
    Ok((
        KSelectionReport {
            candidates,
            chosen_k,
            elbow_k,
        },
        models,
    ))
}

fn extend_centroids(rows: &[Row], base: &[Row], rng: &mut ChaCha8Rng) -> Vec<Row> {
    let d2: Vec<f64> = rows.iter().map(|r| nearest(base, r).1).collect();
    let total: f64 = d2.iter().sum();
    let pick = if total > 0.0 {
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        d2.iter()
            .position(|&d| {
                acc += d;
                acc > target && d > 0.0
            })
            .unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap_or(0))
    } else {
        rng.random_range(0..rows.len())
    };
    let mut out = base.to_vec();
    out.push(rows[pick]);
    out
}

/// k whose (k, inertia) point lies farthest from the chord joining the
/// curve's endpoints, with both axes rescaled to `[0, 1]`.
fn elbow(candidates: &[KCandidate]) -> usize {
    let first = &candidates[0];
    let last = &candidates[candidates.len() - 1];
    let k_span = (last.k - first.k) as f64;
    let w_span = first.inertia - last.inertia;
    if candidates.len() < 3 || k_span == 0.0 || w_span <= 0.0 {
        return first.k;
    }
    // chord from (0, 1) to (1, 0) in normalised coordinates: x + y = 1
    let mut best = (first.k, f64::NEG_INFINITY);
    for c in candidates {
        let x = (c.k - first.k) as f64 / k_span;
        let y = (c.inertia - last.inertia) / w_span;
        let d = (1.0 - x - y) / std::f64::consts::SQRT_2;
        if d > best.1 {
            best = (c.k, d);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub cluster: usize,
    pub size: usize,
    /// Mean of each direction-adjusted feature over members.
    pub feature_means: Vec<f64>,
    /// Mean over members of the unweighted mean of the adjusted features.
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyLabeling {
    pub cluster_to_class: Vec<usize>,
    pub class_labels: Vec<String>,
    pub clusters: Vec<ClusterStats>,
}

impl ProxyLabeling {
    pub fn n_classes(&self) -> usize {
        self.cluster_to_class.len()
    }

    pub fn class_of(&self, cluster: usize) -> usize {
        self.cluster_to_class[cluster]
    }

    pub fn label(&self, class: usize) -> &str {
        &self.class_labels[class]
    }
}

/// Ordinal class names for `k` ranked clusters.
pub fn class_labels(k: usize) -> Vec<String> {
    if k == CLASS_LABELS.len() {
        CLASS_LABELS.iter().map(|s| s.to_string()).collect()
    } else {
        (0..k).map(|c| format!("Class {c}")).collect()
    }
}

pub fn rank_clusters(
    model: &KMeansModel,
    adjusted: &[Row],
    labels: &[usize],
) -> Result<ProxyLabeling> {
    if adjusted.len() != labels.len() {
        return Err(Error::Alignment(format!(
            "{} adjusted rows but {} labels",
            adjusted.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.k) {
        return Err(Error::Alignment(format!(
            "label {bad} out of range for k = {}",
            model.k
        )));
    }
    let k = model.k;
    let mut sums = vec![[0.0; N_FEATURES]; k];
    let mut score_sums = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (row, &l) in adjusted.iter().zip(labels) {
        sizes[l] += 1;
        score_sums[l] += row.iter().sum::<f64>() / N_FEATURES as f64;
        for (s, v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    let clusters: Vec<ClusterStats> = (0..k)
        .map(|c| {
            let size = sizes[c];
            let feature_means: Vec<f64> = if size > 0 {
                sums[c].iter().map(|s| s / size as f64).collect()
            } else {
                vec![f64::NAN; N_FEATURES]
            };
            let mean_score = if size > 0 {
                score_sums[c] / size as f64
            } else {
                f64::NEG_INFINITY
            };
            ClusterStats {
                cluster: c,
                size,
                feature_means,
                mean_score,
            }
        })
        .collect();
    Ok(labeling_from_scores(
        &clusters.iter().map(|c| c.mean_score).collect::<Vec<_>>(),
        clusters,
    ))
}

fn labeling_from_scores(scores: &[f64], clusters: Vec<ClusterStats>) -> ProxyLabeling {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps lower cluster ids first among equal scores
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut cluster_to_class = vec![0; scores.len()];
    for (class, &cluster) in order.iter().enumerate() {
        cluster_to_class[cluster] = class;
    }
    ProxyLabeling {
        cluster_to_class,
        class_labels: class_labels(scores.len()),
        clusters,
    }
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must align");
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
    }
    let pairs = |n: u64| (n * n.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().map(|&n| pairs(n)).sum();
    let rows: f64 = (0..ka)
        .map(|i| pairs(table[i * kb..(i + 1) * kb].iter().sum()))
        .sum();
    let cols: f64 = (0..kb)
        .map(|j| pairs((0..ka).map(|i| table[i * kb + j]).sum()))
        .sum();
    let total = pairs(a.len() as u64);
    let expected = rows * cols / total;
    let max_index = 0.5 * (rows + cols);
    if max_index == expected {
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}
