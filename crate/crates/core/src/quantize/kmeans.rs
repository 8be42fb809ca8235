use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::codebook::Codebook;
use crate::features::FeatureSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOptions {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative inertia improvement drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Inertia after each assignment step, starting with the k-means++ seeds.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd's algorithm over all frames of `sequences`, seeded by k-means++.
pub fn kmeans_fit(sequences: &[FeatureSequence], opts: &KMeansOptions) -> Result<KMeansFit> {
    let first = sequences
        .first()
        .ok_or_else(|| Error::InvalidInput("no feature sequences".into()))?;
    let dim = first.dim();
    let mut rows = Vec::new();
    for seq in sequences {
        if seq.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: seq.dim(),
            });
        }
        rows.extend_from_slice(seq.values());
    }
    kmeans_fit_rows(&rows, dim, opts)
}

/// [`kmeans_fit`] over a row-major `[n x dim]` buffer.
pub fn kmeans_fit_rows(rows: &[f32], dim: usize, opts: &KMeansOptions) -> Result<KMeansFit> {
    if dim == 0 || !rows.len().is_multiple_of(dim) {
        return Err(Error::InvalidInput(format!(
            "{} values do not form rows of {dim}",
            rows.len()
        )));
    }
    let n = rows.len() / dim;
    let k = opts.k;
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if n < k {
        return Err(Error::InvalidInput(format!("{n} points for {k} clusters")));
    }
    crate::io::ensure_finite(rows, "k-means input")?;

    let points: Vec<f64> = rows.iter().map(|&v| v as f64).collect();
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut centroids = plus_plus_init(&points, dim, k, &mut rng);

    let mut labels = vec![0usize; n];
    let mut dists = vec![0f64; n];
    let mut inertia = assign(&points, dim, &centroids, &mut labels, &mut dists);
    let mut history = vec![inertia];
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;

        let mut counts = vec![0usize; k];
        let mut sums = vec![0f64; k * dim];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(point(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dim {
                    centroids[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
                }
            }
        }
        // residual of every point under the updated means
        for i in 0..n {
            let c = labels[i];
            dists[i] = sq_dist(point(i), &centroids[c * dim..(c + 1) * dim]);
        }
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..n)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .unwrap();
            centroids[c * dim..(c + 1) * dim].copy_from_slice(point(far));
            dists[far] = 0.0;
        }

        let previous_labels = labels.clone();
        let previous = inertia;
        inertia = assign(&points, dim, &centroids, &mut labels, &mut dists);
        history.push(inertia);
        if labels == previous_labels || inertia == 0.0 {
            break;
        }
        if previous > 0.0 && (previous - inertia) / previous < opts.tol {
            break;
        }
    }

    let mut usage = vec![0f64; k];
    for &c in &labels {
        usage[c] += 1.0;
    }
    let vectors = centroids.iter().map(|&v| v as f32).collect();
    let codebook = Codebook::from_vectors(vectors, dim)?.with_usage(&usage);
    Ok(KMeansFit {
        codebook,
        inertia_history: history,
        iterations,
    })
}

fn plus_plus_init(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(point(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(point(i), &centroids[..dim])).collect();

    while centroids.len() < k * dim {
        let total: f64 = nearest.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // never land on a zero-weight point through rounding
            if nearest[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| nearest[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(point(chosen));
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(sq_dist(point(i), &centroids[start..start + dim]));
        }
    }
    centroids
}

fn assign(points: &[f64], dim: usize, centroids: &[f64], labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in points.chunks_exact(dim).enumerate() {
        let mut best = (0, f64::INFINITY);
        for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
            let d = sq_dist(p, centroid);
            if d < best.1 {
                best = (c, d);
            }
        }
        labels[i] = best.0;
        dists[i] = best.1;
        inertia += best.1;
    }
    inertia
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
