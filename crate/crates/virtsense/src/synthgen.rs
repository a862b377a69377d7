//! Synthetic datasets with planted cluster structure.
//!
//! A correlation matrix is assembled from a sampled cluster assignment:
//! within-cluster correlations are drawn from a triangular distribution
//! (peak 0.75, support [0.5, 1.0]), cross-cluster correlations are zero.
//! The matrix is repaired to be positive definite by eigenvalue clamping,
//! and data is drawn through its Cholesky factor. The planted assignment is
//! kept as ground truth for evaluating fusion quality.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{self, SensorDataset};
use crate::error::{Error, Result};
use crate::kmeans::ClusteringSolution;
use crate::linalg;
use crate::pca;

/// Eigenvalues below this are clamped up during [`repair_psd`].
pub const DEFAULT_EIGENVALUE_FLOOR: f64 = 1e-7;

/// Default triangular distribution for within-cluster correlations.
pub const DEFAULT_CORR_LOW: f64 = 0.5;
pub const DEFAULT_CORR_PEAK: f64 = 0.75;
pub const DEFAULT_CORR_HIGH: f64 = 1.0;

/// Planted sensor-to-cluster assignment used to build a correlation matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSpec {
    assignment: Vec<usize>,
    n_clusters: usize,
}

impl ClusterSpec {
    /// Labels are 0-based; every label in `0..n_clusters` must occur.
    pub fn new(assignment: Vec<usize>, n_clusters: usize) -> Result<Self> {
        let mut seen = vec![false; n_clusters];
        for &l in &assignment {
            if l >= n_clusters {
                return Err(Error::InvalidParam(format!(
                    "cluster label {l} out of range 0..{n_clusters}"
                )));
            }
            seen[l] = true;
        }
        if n_clusters == 0 || !seen.iter().all(|&s| s) {
            return Err(Error::InvalidParam(
                "every cluster must have at least one sensor".into(),
            ));
        }
        Ok(Self {
            assignment,
            n_clusters,
        })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn n_sensors(&self) -> usize {
        self.assignment.len()
    }

    /// The planted assignment as a clustering solution, for objective and
    /// ARI evaluation.
    pub fn to_solution(&self) -> ClusteringSolution {
        ClusteringSolution::new(self.assignment.clone(), self.n_clusters)
            .expect("a valid spec is a valid solution")
    }
}

/// Symmetric unit-diagonal matrix with entries in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(Array2<f64>);

impl CorrelationMatrix {
    pub fn new(m: Array2<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n || n == 0 {
            return Err(Error::DimensionMismatch(
                "correlation matrix must be square and nonempty".into(),
            ));
        }
        for i in 0..n {
            if (m[[i, i]] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParam(format!(
                    "diagonal entry {i} is {}, expected 1",
                    m[[i, i]]
                )));
            }
            for j in 0..n {
                if (m[[i, j]] - m[[j, i]]).abs() > 1e-12 {
                    return Err(Error::NotSymmetric((m[[i, j]] - m[[j, i]]).abs()));
                }
                if m[[i, j]].abs() > 1.0 + 1e-12 {
                    return Err(Error::InvalidParam(format!(
                        "correlation ({i}, {j}) = {} outside [-1, 1]",
                        m[[i, j]]
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn n_sensors(&self) -> usize {
        self.0.nrows()
    }
}

/// Triangular density on [low, high] with mode `peak`; sampled by inverse CDF.
#[derive(Debug, Clone, Copy)]
pub struct Triangular {
    pub low: f64,
    pub peak: f64,
    pub high: f64,
}

impl Triangular {
    pub fn new(low: f64, peak: f64, high: f64) -> Result<Self> {
        if !(low < peak && peak < high) {
            return Err(Error::InvalidParam(format!(
                "triangular support needs low < peak < high, got ({low}, {peak}, {high})"
            )));
        }
        Ok(Self { low, peak, high })
    }

    /// Closed-form quantile function; maps u=0 to `low` and u=1 to `high`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let (a, c, b) = (self.low, self.peak, self.high);
        let fc = (c - a) / (b - a);
        if u <= fc {
            a + (u * (b - a) * (c - a)).sqrt()
        } else {
            b - ((1.0 - u) * (b - a) * (b - c)).sqrt()
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.inverse_cdf(rng.random::<f64>())
    }
}

/// One triangular draw; peak 0.75 on [0.5, 1.0] with the default arguments.
pub fn sample_triangular(peak: f64, low: f64, high: f64, seed: u64) -> Result<f64> {
    let dist = Triangular::new(low, peak, high)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(dist.sample(&mut rng))
}

/// Random assignment of `n_sensors` into `n_clusters` nonempty clusters:
/// one sensor is placed in each cluster first, the rest land uniformly.
pub fn sample_cluster_spec(n_sensors: usize, n_clusters: usize, seed: u64) -> Result<ClusterSpec> {
    if n_clusters == 0 || n_clusters > n_sensors {
        return Err(Error::InvalidParam(format!(
            "n_clusters {n_clusters} out of range 1..={n_sensors}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n_sensors).collect();
    order.shuffle(&mut rng);
    let mut assignment = vec![0usize; n_sensors];
    for (label, &sensor) in order.iter().take(n_clusters).enumerate() {
        assignment[sensor] = label;
    }
    for &sensor in order.iter().skip(n_clusters) {
        assignment[sensor] = rng.random_range(0..n_clusters);
    }
    ClusterSpec::new(assignment, n_clusters)
}

/// Correlation matrix with triangular within-cluster entries and zero
/// cross-cluster entries.
pub fn build_correlation_matrix(spec: &ClusterSpec, seed: u64) -> CorrelationMatrix {
    build_correlation_matrix_with(
        spec,
        Triangular {
            low: DEFAULT_CORR_LOW,
            peak: DEFAULT_CORR_PEAK,
            high: DEFAULT_CORR_HIGH,
        },
        seed,
    )
}

pub fn build_correlation_matrix_with(
    spec: &ClusterSpec,
    dist: Triangular,
    seed: u64,
) -> CorrelationMatrix {
    let n = spec.n_sensors();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Array2::<f64>::eye(n);
    let asg = spec.assignment();
    for i in 0..n {
        for j in (i + 1)..n {
            if asg[i] == asg[j] {
                let r = dist.sample(&mut rng);
                m[[i, j]] = r;
                m[[j, i]] = r;
            }
        }
    }
    CorrelationMatrix::new(m).expect("construction yields a valid correlation matrix")
}

/// Clamp eigenvalues below `floor` up to `floor`, reconstruct, and rescale
/// back to unit diagonal.
///
/// The reconstruction `V diag(l') Vᵀ` is positive definite but its diagonal
/// drifts from 1, so it is renormalized by `D^{-1/2} C D^{-1/2}`.
pub fn repair_psd(c: &CorrelationMatrix, floor: f64) -> Result<CorrelationMatrix> {
    if floor <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "eigenvalue floor must be positive, got {floor}"
        )));
    }
    let n = c.n_sensors();
    let spectrum = pca::eigendecompose_sym(c.as_array())?;
    let v = &spectrum.eigenvectors;
    let mut rec = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        let l = spectrum.eigenvalues[k].max(floor);
        let col = v.column(k);
        for i in 0..n {
            let li = l * col[i];
            for j in 0..n {
                rec[[i, j]] += li * col[j];
            }
        }
    }
    // renormalize to unit diagonal and strip roundoff asymmetry
    let scale: Vec<f64> = (0..n).map(|i| rec[[i, i]].sqrt()).collect();
    let mut out = Array2::<f64>::eye(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let r = 0.5 * (rec[[i, j]] + rec[[j, i]]) / (scale[i] * scale[j]);
            let r = r.clamp(-1.0, 1.0);
            out[[i, j]] = r;
            out[[j, i]] = r;
        }
    }
    CorrelationMatrix::new(out)
}

/// Draw `n_readings` rows of correlated Gaussian data through the Cholesky
/// factor of `c`, then min-max normalize each sensor to [0, 1].
///
/// Fails with [`Error::NotPositiveDefinite`] when `c` has not been repaired.
pub fn generate_dataset(
    c: &CorrelationMatrix,
    n_readings: usize,
    seed: u64,
) -> Result<SensorDataset> {
    if n_readings < 2 {
        return Err(Error::InvalidParam(format!(
            "n_readings must be at least 2, got {n_readings}"
        )));
    }
    let n = c.n_sensors();
    let l = linalg::cholesky(c.as_array())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Array2::<f64>::from_shape_fn((n_readings, n), |_| rng.sample(StandardNormal));
    let x = z.dot(&l.t());
    let names = (0..n).map(|j| format!("s{j}")).collect();
    let raw = SensorDataset::new(names, x)?;
    let (scaled, _) = dataset::normalize(&raw)?;
    Ok(scaled)
}
