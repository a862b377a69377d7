//! Block-wise sensor clustering: Lloyd iterations with k-means++ seeding.
//!
//! Points are sensors — each sensor is the vector of its readings within one
//! block, so the block matrix is used transposed. Empty clusters are repaired
//! by moving in the point farthest from its centroid, which keeps all `m`
//! clusters nonempty and never increases the objective.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{BlockPartition, SensorDataset};
use crate::error::{Error, Result};
use crate::seeds;

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Assignment of every item to one of `m` cluster labels (0-based);
/// every label is used by at least one item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusteringSolution {
    assignment: Vec<usize>,
    m: usize,
}

impl ClusteringSolution {
    pub fn new(assignment: Vec<usize>, m: usize) -> Result<Self> {
        if m == 0 || assignment.len() < m {
            return Err(Error::InvalidParam(format!(
                "cannot place {} items into {m} nonempty clusters",
                assignment.len()
            )));
        }
        let mut seen = vec![false; m];
        for &l in &assignment {
            if l >= m {
                return Err(Error::InvalidParam(format!(
                    "label {l} out of range 0..{m}"
                )));
            }
            seen[l] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::InvalidParam("empty cluster in assignment".into()));
        }
        Ok(Self { assignment, m })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_items(&self) -> usize {
        self.assignment.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.m];
        for &l in &self.assignment {
            counts[l] += 1;
        }
        counts
    }

    /// Member indices per cluster label.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.m];
        for (i, &l) in self.assignment.iter().enumerate() {
            members[l].push(i);
        }
        members
    }

    /// True when every label in `0..m` is nonempty and in range.
    pub fn is_valid(&self) -> bool {
        self.assignment.iter().all(|&l| l < self.m)
            && self.counts().iter().all(|&c| c > 0)
    }
}

/// One K-Means run with its convergence record.
#[derive(Debug, Clone)]
pub struct KmeansRun {
    pub solution: ClusteringSolution,
    pub inertia: f64,
    /// Objective after each Lloyd iteration; non-increasing.
    pub inertia_history: Vec<f64>,
}

/// Cluster `points` (rows) into `m` groups; see [`kmeans_run`] for the
/// convergence record.
pub fn kmeans(
    points: ArrayView2<'_, f64>,
    m: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusteringSolution> {
    Ok(kmeans_run(points, m, seed, max_iter, tol)?.solution)
}

/// Lloyd iterations from k-means++ seeding until the largest centroid shift
/// drops below `tol` or `max_iter` is reached.
pub fn kmeans_run(
    points: ArrayView2<'_, f64>,
    m: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KmeansRun> {
    let n = points.nrows();
    if m == 0 || m > n {
        return Err(Error::InvalidParam(format!(
            "m = {m} out of range 1..={n} points"
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("points contain non-finite values".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeding(points, m, &mut rng);
    let mut assignment = vec![0usize; n];
    let mut history = Vec::new();
    let mut prev_inertia = f64::INFINITY;

    for _ in 0..max_iter {
        assign_nearest(points, &centroids, &mut assignment);
        repair_empty_clusters(points, &centroids, &mut assignment, m);

        let new_centroids = centroid_means(points, &assignment, m);
        let inertia = inertia_for(points, &assignment, &new_centroids);
        assert!(
            inertia <= prev_inertia + 1e-9 * (1.0 + prev_inertia.min(f64::MAX)),
            "Lloyd iteration increased inertia: {prev_inertia} -> {inertia}"
        );
        prev_inertia = inertia;
        history.push(inertia);

        let shift = centroids
            .axis_iter(Axis(0))
            .zip(new_centroids.axis_iter(Axis(0)))
            .map(|(a, b)| {
                (&a - &b).iter().map(|x| x * x).sum::<f64>().sqrt()
            })
            .fold(0.0f64, f64::max);
        centroids = new_centroids;
        if shift < tol {
            break;
        }
    }

    let solution = ClusteringSolution::new(assignment, m)?;
    Ok(KmeansRun {
        solution,
        inertia: prev_inertia,
        inertia_history: history,
    })
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_seeding(points: ArrayView2<'_, f64>, m: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let d = points.ncols();
    let mut centroids = Array2::<f64>::zeros((m, d));
    let mut chosen = vec![false; n];

    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    chosen[first] = true;

    let mut dist2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(0)))
        .collect();

    for k in 1..m {
        let total: f64 = dist2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d2) in dist2.iter().enumerate() {
                u -= d2;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // all remaining distances are zero (duplicate points): any
            // unchosen index keeps the centroid count at m
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.row_mut(k).assign(&points.row(pick));
        for (i, d) in dist2.iter_mut().enumerate() {
            let d2 = sq_dist(points.row(i), centroids.row(k));
            if d2 < *d {
                *d = d2;
            }
        }
    }
    centroids
}

fn assign_nearest(points: ArrayView2<'_, f64>, centroids: &Array2<f64>, assignment: &mut [usize]) {
    for (i, point) in points.axis_iter(Axis(0)).enumerate() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, c) in centroids.axis_iter(Axis(0)).enumerate() {
            let d = sq_dist(point, c);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        assignment[i] = best;
    }
}

/// Give each empty cluster the point farthest from its current centroid,
/// drawn from clusters that can spare a member.
fn repair_empty_clusters(
    points: ArrayView2<'_, f64>,
    centroids: &Array2<f64>,
    assignment: &mut [usize],
    m: usize,
) {
    let mut counts = vec![0usize; m];
    for &l in assignment.iter() {
        counts[l] += 1;
    }
    for empty in 0..m {
        if counts[empty] > 0 {
            continue;
        }
        let mut far_idx = usize::MAX;
        let mut far_d = -1.0f64;
        for (i, point) in points.axis_iter(Axis(0)).enumerate() {
            let l = assignment[i];
            if counts[l] < 2 {
                continue;
            }
            let d = sq_dist(point, centroids.row(l));
            if d > far_d {
                far_d = d;
                far_idx = i;
            }
        }
        debug_assert!(far_idx != usize::MAX, "m <= n guarantees a donor point");
        counts[assignment[far_idx]] -= 1;
        assignment[far_idx] = empty;
        counts[empty] += 1;
    }
}

fn centroid_means(points: ArrayView2<'_, f64>, assignment: &[usize], m: usize) -> Array2<f64> {
    let d = points.ncols();
    let mut sums = Array2::<f64>::zeros((m, d));
    let mut counts = vec![0usize; m];
    for (i, point) in points.axis_iter(Axis(0)).enumerate() {
        let l = assignment[i];
        counts[l] += 1;
        let mut row = sums.row_mut(l);
        row += &point;
    }
    for (&count, mut row) in counts.iter().zip(sums.axis_iter_mut(Axis(0))) {
        if count > 0 {
            row /= count as f64;
        }
    }
    sums
}

fn inertia_for(points: ArrayView2<'_, f64>, assignment: &[usize], centroids: &Array2<f64>) -> f64 {
    points
        .axis_iter(Axis(0))
        .enumerate()
        .map(|(i, p)| sq_dist(p, centroids.row(assignment[i])))
        .sum()
}

/// Total squared distance of every point to its cluster mean.
pub fn inertia(points: ArrayView2<'_, f64>, solution: &ClusteringSolution) -> f64 {
    let centroids = centroid_means(points, solution.assignment(), solution.m());
    inertia_for(points, solution.assignment(), &centroids)
}

/// Restarts per block in [`cluster_all_blocks`]; the lowest-inertia run wins.
pub const DEFAULT_RESTARTS: usize = 4;

/// Cluster the sensors of every block independently (blocks may run in
/// parallel; each block gets its own derived seed and keeps the best of
/// [`DEFAULT_RESTARTS`] seeded runs).
pub fn cluster_all_blocks(
    d: &SensorDataset,
    partition: &BlockPartition,
    m: usize,
    seed: u64,
) -> Result<Vec<ClusteringSolution>> {
    cluster_all_blocks_restarts(d, partition, m, seed, DEFAULT_RESTARTS)
}

pub fn cluster_all_blocks_restarts(
    d: &SensorDataset,
    partition: &BlockPartition,
    m: usize,
    seed: u64,
    restarts: usize,
) -> Result<Vec<ClusteringSolution>> {
    if restarts == 0 {
        return Err(Error::InvalidParam("restarts must be at least 1".into()));
    }
    (0..partition.n_blocks())
        .into_par_iter()
        .map(|b| {
            let block = partition.block(d, b);
            // sensors as points: one row per sensor
            let points = block.t();
            let mut best: Option<KmeansRun> = None;
            for r in 0..restarts {
                let run = kmeans_run(
                    points,
                    m,
                    seeds::derive2(seed, b as u64, r as u64),
                    DEFAULT_MAX_ITER,
                    DEFAULT_TOL,
                )?;
                if best.as_ref().is_none_or(|cur| run.inertia < cur.inertia) {
                    best = Some(run);
                }
            }
            Ok(best.expect("restarts >= 1").solution)
        })
        .collect()
}
