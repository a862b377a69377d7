//! Fusion of per-block clustering solutions by ant-colony search.
//!
//! Every ant is a full sensor-to-cluster assignment. Each iteration mutates
//! every ant by moving a shrinking set of candidate sensors into the
//! clusters of pairing sensors sampled from a pheromone table — a symmetric
//! sensor-pair score matrix maintained as an exponential moving average of
//! the objective values of solutions in which the pair co-clustered. A
//! singleton cluster is never emptied: the move is turned into a swap so the
//! cluster count stays at `M`. Survivor selection is elitist over the union
//! of the pre- and post-mutation colonies, which makes the best metric
//! non-decreasing by construction.
//!
//! The objective of a solution is the sum over data blocks of the
//! reciprocal within-cluster scatter; see [`objective`].

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{BlockPartition, SensorDataset};
use crate::error::{Error, Result};
use crate::kmeans::{self, ClusteringSolution};
use crate::seeds;

/// Search hyperparameters.
///
/// `delta` is accepted for config compatibility but drives no step of the
/// search and is ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Fac2tParams {
    /// Pheromone retention fraction per iteration (evaporation keeps `alpha`).
    pub alpha: f64,
    /// Candidate sensors moved per ant per iteration.
    pub beta: usize,
    /// Iterations between decrements of `beta` (floored at 1).
    pub gamma: u64,
    /// Every `tau`-th iteration samples pairing sensors uniformly.
    pub tau: u64,
    /// Growth factor applied to `alpha` each iteration, capped at `alpha_max`.
    pub theta: f64,
    pub n_ants: usize,
    pub iterations: u64,
    /// Cap keeping the pheromone update a strict convex combination.
    pub alpha_max: f64,
    /// Guard added to block inertia before taking the reciprocal.
    pub epsilon_g: f64,
    /// Unused; accepted so configs listing it remain valid.
    pub delta: Option<f64>,
}

impl Default for Fac2tParams {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 20,
            gamma: 20,
            tau: 10,
            theta: 1.007,
            n_ants: 20,
            iterations: 200,
            alpha_max: 0.995,
            epsilon_g: 1e-12,
            delta: None,
        }
    }
}

impl Fac2tParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= self.alpha_max && self.alpha_max < 1.0) {
            return Err(Error::InvalidParam(format!(
                "need 0 < alpha <= alpha_max < 1, got alpha={} alpha_max={}",
                self.alpha, self.alpha_max
            )));
        }
        if self.beta < 1 {
            return Err(Error::InvalidParam("beta must be at least 1".into()));
        }
        if self.gamma < 1 || self.tau < 1 {
            return Err(Error::InvalidParam("gamma and tau must be at least 1".into()));
        }
        if self.theta <= 0.0 {
            return Err(Error::InvalidParam("theta must be positive".into()));
        }
        if self.n_ants < 1 {
            return Err(Error::InvalidParam("n_ants must be at least 1".into()));
        }
        if self.epsilon_g <= 0.0 {
            return Err(Error::InvalidParam("epsilon_g must be positive".into()));
        }
        Ok(())
    }
}

/// Symmetric nonnegative sensor-pair score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PheromoneTable {
    p: Array2<f64>,
}

impl PheromoneTable {
    pub fn zeros(n_sensors: usize) -> Self {
        Self {
            p: Array2::zeros((n_sensors, n_sensors)),
        }
    }

    /// Wrap an existing table; must be square, symmetric (1e-12) and
    /// nonnegative.
    pub fn from_array(p: Array2<f64>) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n {
            return Err(Error::DimensionMismatch(
                "pheromone table must be square".into(),
            ));
        }
        for i in 0..n {
            for j in 0..n {
                if p[[i, j]] < 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "negative pheromone at ({i}, {j})"
                    )));
                }
                if (p[[i, j]] - p[[j, i]]).abs() > 1e-12 {
                    return Err(Error::NotSymmetric((p[[i, j]] - p[[j, i]]).abs()));
                }
            }
        }
        Ok(Self { p })
    }

    pub fn n_sensors(&self) -> usize {
        self.p.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[[i, j]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.p
    }

    /// Add `w · F(sol)` without materializing the adjacency matrix.
    pub fn deposit(&mut self, sol: &ClusteringSolution, w: f64) {
        for members in sol.members() {
            for &i in &members {
                for &j in &members {
                    self.p[[i, j]] += w;
                }
            }
        }
    }

    pub fn evaporate(&mut self, alpha: f64) {
        self.p.mapv_inplace(|v| v * alpha);
    }

    /// `P' = alpha·P + Σ_k (1 - alpha)·g(a_k)·F(a_k)` over the colony.
    pub fn update(&mut self, colony: &Colony, alpha: f64) {
        self.evaporate(alpha);
        for (ant, &g) in colony.ants.iter().zip(&colony.metrics) {
            self.deposit(ant, (1.0 - alpha) * g);
        }
    }
}

/// The ants of one iteration with their cached objective values.
#[derive(Debug, Clone)]
pub struct Colony {
    pub ants: Vec<ClusteringSolution>,
    pub metrics: Vec<f64>,
}

impl Colony {
    pub fn len(&self) -> usize {
        self.ants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ants.is_empty()
    }

    pub fn mean_metric(&self) -> f64 {
        self.metrics.iter().sum::<f64>() / self.metrics.len() as f64
    }

    /// Highest-metric ant; ties go to the lowest index.
    pub fn best(&self) -> (usize, f64) {
        let mut bi = 0;
        let mut bm = self.metrics[0];
        for (i, &m) in self.metrics.iter().enumerate().skip(1) {
            if m > bm {
                bm = m;
                bi = i;
            }
        }
        (bi, bm)
    }
}

/// Per-iteration trace of one run. The best-metric sequence is
/// non-decreasing (it tracks the best ant ever observed).
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iteration: u64,
    pub best_metric: f64,
    pub mean_metric: f64,
    pub alpha: f64,
    pub beta: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunHistory {
    pub rows: Vec<HistoryRow>,
}

impl RunHistory {
    pub fn best_initial(&self) -> f64 {
        self.rows.first().map_or(f64::NAN, |r| r.best_metric)
    }

    pub fn best_final(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.best_metric)
    }

    pub fn is_monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].best_metric >= w[0].best_metric)
    }

    /// CSV rendering: `iteration,best_metric,mean_metric,alpha,beta`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("iteration,best_metric,mean_metric,alpha,beta\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iteration, r.best_metric, r.mean_metric, r.alpha, r.beta
            ));
        }
        out
    }
}

/// Blockwise objective: `Σ_b 1 / (inertia_b + epsilon_g)`, where
/// `inertia_b` treats the sensors of block `b` as points.
///
/// This is the direct route; [`BlockObjective`] computes the same value
/// from cached Gram matrices and is what the search loop uses.
pub fn objective(
    sol: &ClusteringSolution,
    d: &SensorDataset,
    partition: &BlockPartition,
    epsilon_g: f64,
) -> f64 {
    assert_eq!(
        sol.n_items(),
        d.n_sensors(),
        "solution covers {} sensors, dataset has {}",
        sol.n_items(),
        d.n_sensors()
    );
    (0..partition.n_blocks())
        .map(|b| {
            let block = partition.block(d, b);
            let inertia = kmeans::inertia(block.t(), sol).max(0.0);
            1.0 / (inertia + epsilon_g)
        })
        .sum()
}

/// Cached evaluator for the blockwise objective.
///
/// Per block, the Gram matrix `G = XᵀX` of sensor vectors is precomputed;
/// a solution's within-cluster scatter is then
/// `Σ_i G_ii - Σ_c (Σ_{i,j∈c} G_ij) / |c|`, independent of block length.
#[derive(Debug, Clone)]
pub struct BlockObjective {
    grams: Vec<Array2<f64>>,
    traces: Vec<f64>,
    n_sensors: usize,
    epsilon_g: f64,
}

impl BlockObjective {
    pub fn new(d: &SensorDataset, partition: &BlockPartition, epsilon_g: f64) -> Self {
        let grams: Vec<Array2<f64>> = (0..partition.n_blocks())
            .into_par_iter()
            .map(|b| {
                let block = partition.block(d, b);
                block.t().dot(&block)
            })
            .collect();
        let traces = grams
            .iter()
            .map(|g| (0..g.nrows()).map(|i| g[[i, i]]).sum())
            .collect();
        Self {
            grams,
            traces,
            n_sensors: d.n_sensors(),
            epsilon_g,
        }
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn eval(&self, sol: &ClusteringSolution) -> f64 {
        assert_eq!(
            sol.n_items(),
            self.n_sensors,
            "solution covers {} sensors, evaluator was built for {}",
            sol.n_items(),
            self.n_sensors
        );
        let mut members = sol.members();
        // canonical cluster order (by lowest member): the value is then
        // bitwise invariant under label permutation
        members.sort_by_key(|mem| mem[0]);
        let mut total = 0.0;
        for (g, &trace) in self.grams.iter().zip(&self.traces) {
            let mut explained = 0.0;
            for mem in &members {
                let mut s = 0.0;
                for &i in mem {
                    let row = g.row(i);
                    let mut ri = 0.0;
                    for &j in mem {
                        ri += row[j];
                    }
                    s += ri;
                }
                explained += s / mem.len() as f64;
            }
            // scatter is nonnegative by definition; clamp roundoff
            let inertia = (trace - explained).max(0.0);
            total += 1.0 / (inertia + self.epsilon_g);
        }
        total
    }
}

/// Binary co-membership matrix `F`; `F_ij = 1` iff sensors `i` and `j`
/// share a cluster (diagonal included).
pub fn adjacency(sol: &ClusteringSolution) -> Array2<f64> {
    let n = sol.n_items();
    let asg = sol.assignment();
    let mut f = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if asg[i] == asg[j] {
                f[[i, j]] = 1.0;
            }
        }
    }
    f
}

/// Build the initial colony from block solutions and seed the pheromone
/// table with their weighted adjacencies.
///
/// With more ants than blocks, each block solution is copied
/// `floor(n_ants / L)` times and the remainder drawn from uniformly random
/// blocks; with fewer, the highest-objective block solutions are kept.
pub fn init_colony(
    solutions: &[ClusteringSolution],
    params: &Fac2tParams,
    obj: &BlockObjective,
    seed: u64,
) -> Result<(Colony, PheromoneTable)> {
    if solutions.is_empty() {
        return Err(Error::InvalidParam("no initial solutions".into()));
    }
    if params.n_ants == 0 {
        return Err(Error::InvalidParam("n_ants must be at least 1".into()));
    }
    let n = solutions[0].n_items();
    let m = solutions[0].m();
    for s in solutions {
        if s.n_items() != n || s.m() != m {
            return Err(Error::DimensionMismatch(
                "initial solutions disagree on sensor or cluster count".into(),
            ));
        }
    }
    let l = solutions.len();
    let block_metrics: Vec<f64> = solutions.par_iter().map(|s| obj.eval(s)).collect();

    let mut ants = Vec::with_capacity(params.n_ants);
    let mut metrics = Vec::with_capacity(params.n_ants);
    if params.n_ants >= l {
        let copies = params.n_ants / l;
        for (s, &g) in solutions.iter().zip(&block_metrics) {
            for _ in 0..copies {
                ants.push(s.clone());
                metrics.push(g);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while ants.len() < params.n_ants {
            let i = rng.random_range(0..l);
            ants.push(solutions[i].clone());
            metrics.push(block_metrics[i]);
        }
    } else {
        let mut order: Vec<usize> = (0..l).collect();
        order.sort_by(|&a, &b| {
            block_metrics[b]
                .total_cmp(&block_metrics[a])
                .then(a.cmp(&b))
        });
        for &i in order.iter().take(params.n_ants) {
            ants.push(solutions[i].clone());
            metrics.push(block_metrics[i]);
        }
    }

    let mut pheromone = PheromoneTable::zeros(n);
    for (ant, &g) in ants.iter().zip(&metrics) {
        pheromone.deposit(ant, g);
    }
    Ok((Colony { ants, metrics }, pheromone))
}

/// Sample the pairing sensor for candidate `s`: proportional to the
/// pheromone row (self excluded), uniform on exploration iterations or when
/// the row carries no mass.
fn sample_pairing(
    pheromone: &PheromoneTable,
    s: usize,
    uniform: bool,
    rng: &mut ChaCha8Rng,
) -> usize {
    let n = pheromone.n_sensors();
    debug_assert!(n >= 2);
    let uniform_pick = |rng: &mut ChaCha8Rng| {
        let j = rng.random_range(0..n - 1);
        if j >= s {
            j + 1
        } else {
            j
        }
    };
    if uniform {
        return uniform_pick(rng);
    }
    let total: f64 = (0..n).filter(|&j| j != s).map(|j| pheromone.get(s, j)).sum();
    if total < 1e-300 {
        return uniform_pick(rng);
    }
    let mut u = rng.random::<f64>() * total;
    let mut last_positive = None;
    for j in (0..n).filter(|&j| j != s) {
        let w = pheromone.get(s, j);
        if w <= 0.0 {
            continue;
        }
        last_positive = Some(j);
        u -= w;
        if u <= 0.0 {
            return j;
        }
    }
    last_positive.expect("total mass was positive")
}

/// Move candidate `s` into the cluster of pairing sensor `j`. If `s` is a
/// singleton, the member of `j`'s cluster with the lowest cumulative
/// pheromone to its cluster mates is swapped into `s`'s cluster first, so
/// the cluster count is preserved.
fn move_candidate(
    assignment: &mut [usize],
    counts: &mut [usize],
    s: usize,
    j: usize,
    pheromone: &PheromoneTable,
) {
    let x = assignment[s];
    let y = assignment[j];
    if x == y {
        return;
    }
    if counts[x] == 1 {
        let members_y: Vec<usize> = (0..assignment.len())
            .filter(|&i| assignment[i] == y)
            .collect();
        let mut z = members_y[0];
        let mut z_score = f64::INFINITY;
        for &z1 in &members_y {
            let score: f64 = members_y.iter().map(|&z2| pheromone.get(z1, z2)).sum();
            if score < z_score {
                z_score = score;
                z = z1;
            }
        }
        assignment[z] = x;
        counts[y] -= 1;
        counts[x] += 1;
    }
    counts[assignment[s]] -= 1;
    assignment[s] = y;
    counts[y] += 1;
}

/// Mutate one ant: `beta` distinct candidate sensors are each moved to the
/// cluster of a sampled pairing sensor. Every `tau`-th iteration samples
/// pairings uniformly instead of from the pheromone table. The result keeps
/// exactly `M` nonempty clusters.
pub fn mutate_ant(
    ant: &ClusteringSolution,
    pheromone: &PheromoneTable,
    beta: usize,
    iter_index: u64,
    tau: u64,
    rng: &mut ChaCha8Rng,
) -> ClusteringSolution {
    let n = ant.n_items();
    if n < 2 || beta == 0 {
        return ant.clone();
    }
    let uniform = tau != 0 && iter_index.is_multiple_of(tau);
    let mut assignment = ant.assignment().to_vec();
    let mut counts = ant.counts();
    let chosen = rand::seq::index::sample(rng, n, beta.min(n));
    for s in chosen {
        let j = sample_pairing(pheromone, s, uniform, rng);
        move_candidate(&mut assignment, &mut counts, s, j, pheromone);
    }
    // hard invariant: mutation never changes the number of nonempty clusters
    ClusteringSolution::new(assignment, ant.m())
        .expect("mutation preserved all M nonempty clusters")
}

/// Keep the `N_ants` highest-metric ants from the union of both colonies;
/// ties prefer the previous colony, then the lower index.
///
/// A mutated ant identical to its pre-mutation copy is already present in
/// the union and is not counted twice; with no effective mutations the
/// previous colony is therefore a fixed point.
pub fn select_survivors(previous: &Colony, mutated: &Colony) -> Colony {
    assert_eq!(
        previous.len(),
        mutated.len(),
        "colonies must have the same size"
    );
    let n = previous.len();
    let metric = |origin: usize, idx: usize| {
        if origin == 0 {
            previous.metrics[idx]
        } else {
            mutated.metrics[idx]
        }
    };
    let mut order: Vec<(usize, usize)> = (0..n)
        .map(|i| (0, i))
        .chain(
            (0..n)
                .filter(|&i| mutated.ants[i] != previous.ants[i])
                .map(|i| (1, i)),
        )
        .collect();
    order.sort_by(|&(oa, ia), &(ob, ib)| {
        metric(ob, ib)
            .total_cmp(&metric(oa, ia))
            .then(oa.cmp(&ob))
            .then(ia.cmp(&ib))
    });
    let mut ants = Vec::with_capacity(n);
    let mut metrics = Vec::with_capacity(n);
    for &(origin, idx) in order.iter().take(n) {
        let src = if origin == 0 { previous } else { mutated };
        ants.push(src.ants[idx].clone());
        metrics.push(src.metrics[idx]);
    }
    Colony { ants, metrics }
}

/// Run the full search and return the best ant ever observed along with the
/// per-iteration history (row 0 records the initial colony).
pub fn run_fac2t(
    d: &SensorDataset,
    partition: &BlockPartition,
    init_solutions: &[ClusteringSolution],
    params: &Fac2tParams,
    seed: u64,
) -> Result<(ClusteringSolution, RunHistory)> {
    let obj = BlockObjective::new(d, partition, params.epsilon_g);
    run_fac2t_with(&obj, init_solutions, params, seed)
}

/// Same as [`run_fac2t`] but reusing a prebuilt evaluator, so callers can
/// score other solutions on the identical objective.
pub fn run_fac2t_with(
    obj: &BlockObjective,
    init_solutions: &[ClusteringSolution],
    params: &Fac2tParams,
    seed: u64,
) -> Result<(ClusteringSolution, RunHistory)> {
    let (mut colony, mut pheromone) =
        init_colony(init_solutions, params, obj, seeds::derive(seed, 0))?;

    let (best_idx, mut best_metric) = colony.best();
    let mut best_ant = colony.ants[best_idx].clone();
    let mut alpha = params.alpha.min(params.alpha_max);
    let mut beta = params.beta;

    let mut history = RunHistory::default();
    history.rows.push(HistoryRow {
        iteration: 0,
        best_metric,
        mean_metric: colony.mean_metric(),
        alpha,
        beta,
    });

    for n in 1..=params.iterations {
        let mutated_ants: Vec<ClusteringSolution> = colony
            .ants
            .par_iter()
            .enumerate()
            .map(|(k, ant)| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seeds::derive2(seed, n, 1 + k as u64));
                mutate_ant(ant, &pheromone, beta, n, params.tau, &mut rng)
            })
            .collect();
        let mutated_metrics: Vec<f64> =
            mutated_ants.par_iter().map(|a| obj.eval(a)).collect();
        let mutated = Colony {
            ants: mutated_ants,
            metrics: mutated_metrics,
        };

        pheromone.update(&mutated, alpha);
        colony = select_survivors(&colony, &mutated);

        let (idx, metric) = colony.best();
        if metric > best_metric {
            best_metric = metric;
            best_ant = colony.ants[idx].clone();
        }
        // elitist selection makes this literally true; keep it hard
        assert!(
            best_metric >= history.rows.last().expect("row 0 exists").best_metric,
            "best-ant metric decreased at iteration {n}"
        );
        history.rows.push(HistoryRow {
            iteration: n,
            best_metric,
            mean_metric: colony.mean_metric(),
            alpha,
            beta,
        });

        if params.gamma > 0 && n % params.gamma == 0 && beta > 1 {
            beta -= 1;
        }
        alpha = (alpha * params.theta).min(params.alpha_max);
    }
    Ok((best_ant, history))
}
