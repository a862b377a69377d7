//! Representative-sensor selection via a correlation quality score.
//!
//! A sensor's quality within its cluster is `(1 - Var(c)) / (1 - Mean(c))`
//! over the vector `c` of its Pearson correlations with every cluster member
//! (self term included). The highest-quality sensor per cluster is retained
//! physically; the rest become virtual.

use ndarray::ArrayView1;
use rayon::prelude::*;

use crate::dataset::SensorDataset;
use crate::error::{Error, Result};
use crate::kmeans::ClusteringSolution;

/// Guard for the `Mean(c) == 1` division; a cluster of identical sensors
/// gets Q = 1e9 rather than a division by zero.
pub const QUALITY_GUARD: f64 = 1e-9;

/// Quality of one sensor within one cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    pub sensor: usize,
    pub q: f64,
}

/// Sample Pearson correlation coefficient.
///
/// Errors on length mismatch, fewer than two samples, or a constant input.
pub fn pearson(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "pearson inputs have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidParam(
            "pearson needs at least 2 samples".into(),
        ));
    }
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::ConstantVector);
    }
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Quality of sensor `i` within `cluster` (which must contain `i`).
pub fn quality(i: usize, cluster: &[usize], d: &SensorDataset) -> Result<QualityScore> {
    if !cluster.contains(&i) {
        return Err(Error::InvalidParam(format!(
            "sensor {i} is not a member of the cluster"
        )));
    }
    let c: Vec<f64> = cluster
        .iter()
        .map(|&j| {
            if i == j {
                Ok(1.0)
            } else {
                pearson(d.column(i), d.column(j)).map_err(|e| match e {
                    Error::ConstantVector => Error::ConstantSensor(d.names()[j].clone()),
                    other => other,
                })
            }
        })
        .collect::<Result<_>>()?;
    Ok(QualityScore {
        sensor: i,
        q: quality_from_correlations(&c),
    })
}

/// The score of a correlation vector: population variance, arithmetic
/// mean, guarded denominator.
pub fn quality_from_correlations(c: &[f64]) -> f64 {
    let n = c.len() as f64;
    let mean = c.iter().sum::<f64>() / n;
    let var = c.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    (1.0 - var) / (1.0 - mean).max(QUALITY_GUARD)
}

/// Highest-quality sensor of every cluster, ordered by cluster label.
/// Ties break toward the lowest sensor index.
pub fn select_representatives(
    sol: &ClusteringSolution,
    d: &SensorDataset,
) -> Result<Vec<usize>> {
    if sol.n_items() != d.n_sensors() {
        return Err(Error::DimensionMismatch(format!(
            "solution covers {} sensors, dataset has {}",
            sol.n_items(),
            d.n_sensors()
        )));
    }
    sol.members()
        .par_iter()
        .map(|members| {
            // pairwise correlations once per cluster
            let k = members.len();
            let mut corr = vec![vec![1.0f64; k]; k];
            for a in 0..k {
                for b in (a + 1)..k {
                    let r = pearson(d.column(members[a]), d.column(members[b])).map_err(
                        |e| match e {
                            Error::ConstantVector => {
                                Error::ConstantSensor(d.names()[members[a]].clone())
                            }
                            other => other,
                        },
                    )?;
                    corr[a][b] = r;
                    corr[b][a] = r;
                }
            }
            let mut best_idx = members[0];
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..k {
                let q = quality_from_correlations(&corr[a]);
                if q > best_q {
                    best_q = q;
                    best_idx = members[a];
                }
            }
            Ok(best_idx)
        })
        .collect()
}
