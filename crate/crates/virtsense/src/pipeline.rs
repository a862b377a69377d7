//! End-to-end orchestration: the estimate/cluster/select/train loop, the
//! two synthetic fusion experiments, comparison metrics, and the on-disk
//! artifact formats shared with the CLI.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, NormParams, SensorDataset};
use crate::error::{Error, Result};
use crate::fac2t::{self, BlockObjective, Fac2tParams, RunHistory};
use crate::kmeans::{self, ClusteringSolution};
use crate::pca;
use crate::regress::{
    lbfr_fit, mlp_fit, mse, svr_fit_multi, MlpConfig, Regressor, RegressorKind, SvrParams,
};
use crate::repsel;
use crate::seeds;
use crate::synthgen::{self, Triangular};

/// Synthetic-generation settings used by `synth`, Experiment A and B.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_sensors: usize,
    pub n_clusters: usize,
    pub n_readings: usize,
    pub corr_low: f64,
    pub corr_peak: f64,
    pub corr_high: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_sensors: 60,
            n_clusters: 6,
            n_readings: 5000,
            corr_low: synthgen::DEFAULT_CORR_LOW,
            corr_peak: synthgen::DEFAULT_CORR_PEAK,
            corr_high: synthgen::DEFAULT_CORR_HIGH,
        }
    }
}

impl SynthConfig {
    pub fn triangular(&self) -> Result<Triangular> {
        Triangular::new(self.corr_low, self.corr_peak, self.corr_high)
    }
}

/// Settings for Experiments A and B.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Seeded datasets per cluster count (Experiment A).
    pub n_datasets: usize,
    /// Planted-and-searched cluster counts (Experiment A).
    pub cluster_counts: Vec<usize>,
    /// Fraction of sensors shuffled in each block solution (Experiment B).
    pub corruption_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_datasets: 10,
            cluster_counts: vec![5, 10],
            corruption_fraction: 0.3,
        }
    }
}

/// Full run configuration; JSON keys mirror the field names.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub has_header: bool,
    pub block_size: usize,
    pub variance_fraction: f64,
    pub train_fraction: f64,
    pub fac2t: Fac2tParams,
    pub regressors: Vec<RegressorKind>,
    /// Accept the current cluster count once mean test MSE drops below this.
    pub mse_threshold: f64,
    /// Upper bound for the cluster-count loop; sensor count when absent.
    pub max_clusters: Option<usize>,
    /// Non-empty: evaluate exactly these cluster counts instead of looping
    /// from the PCA estimate.
    pub cluster_counts: Vec<usize>,
    pub seed: u64,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub lbfr_lambda: f64,
    pub mlp: MlpConfig,
    pub svr: SvrParams,
    pub synth: SynthConfig,
    pub experiment: ExperimentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            has_header: true,
            block_size: 1000,
            variance_fraction: pca::DEFAULT_VARIANCE_FRACTION,
            train_fraction: 0.8,
            fac2t: Fac2tParams::default(),
            regressors: RegressorKind::ALL.to_vec(),
            mse_threshold: 0.01,
            max_clusters: None,
            cluster_counts: Vec::new(),
            seed: 0,
            kmeans_max_iter: kmeans::DEFAULT_MAX_ITER,
            kmeans_tol: kmeans::DEFAULT_TOL,
            lbfr_lambda: crate::regress::DEFAULT_RIDGE,
            mlp: MlpConfig::default(),
            svr: SvrParams::default(),
            synth: SynthConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mse_threshold.is_nan() || self.mse_threshold <= 0.0 {
            return Err(Error::InvalidParam("mse_threshold must be positive".into()));
        }
        if self.regressors.is_empty() {
            return Err(Error::InvalidParam("at least one regressor kind".into()));
        }
        if !(0.0..=1.0).contains(&self.experiment.corruption_fraction) {
            return Err(Error::InvalidParam(
                "corruption_fraction must lie in [0, 1]".into(),
            ));
        }
        self.fac2t.validate()?;
        self.svr.validate()?;
        self.mlp.adam.validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub m: usize,
    pub seed: u64,
    pub fac2t_objective: f64,
    pub kmeans_objective: Option<f64>,
    pub ideal_objective: Option<f64>,
    pub ari: Option<f64>,
    pub mse_lbfr: Option<f64>,
    pub mse_mlp: Option<f64>,
    pub mse_svr: Option<f64>,
}

impl ReportRow {
    pub fn mse_for(&self, kind: RegressorKind) -> Option<f64> {
        match kind {
            RegressorKind::Lbfr => self.mse_lbfr,
            RegressorKind::Mlp => self.mse_mlp,
            RegressorKind::Svr => self.mse_svr,
        }
    }

    pub fn mean_mse(&self) -> Option<f64> {
        let values: Vec<f64> = [self.mse_lbfr, self.mse_mlp, self.mse_svr]
            .into_iter()
            .flatten()
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentReport {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from(
            "dataset,m,seed,fac2t_objective,kmeans_objective,ideal_objective,ari,mse_lbfr,mse_mlp,mse_svr\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.dataset,
                r.m,
                r.seed,
                r.fac2t_objective,
                opt_cell(r.kmeans_objective),
                opt_cell(r.ideal_objective),
                opt_cell(r.ari),
                opt_cell(r.mse_lbfr),
                opt_cell(r.mse_mlp),
                opt_cell(r.mse_svr),
            ));
        }
        s
    }
}

/// Chance-corrected partition agreement from the pair-counting
/// contingency table; 1 means identical up to label permutation.
pub fn adjusted_rand_index(a: &ClusteringSolution, b: &ClusteringSolution) -> Result<f64> {
    if a.n_items() != b.n_items() {
        return Err(Error::DimensionMismatch(format!(
            "partitions cover {} and {} items",
            a.n_items(),
            b.n_items()
        )));
    }
    let n = a.n_items();
    if n < 2 {
        return Ok(1.0);
    }
    fn comb2(x: usize) -> f64 {
        if x < 2 {
            0.0
        } else {
            x as f64 * (x as f64 - 1.0) / 2.0
        }
    }
    let mut contingency = vec![vec![0usize; b.m()]; a.m()];
    for (&la, &lb) in a.assignment().iter().zip(b.assignment().iter()) {
        contingency[la][lb] += 1;
    }
    let sum_cells: f64 = contingency.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_a: f64 = contingency
        .iter()
        .map(|row| comb2(row.iter().sum()))
        .sum();
    let sum_b: f64 = (0..b.m())
        .map(|j| comb2(contingency.iter().map(|row| row[j]).sum()))
        .sum();
    let expected = sum_a * sum_b / comb2(n);
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-15 {
        // both partitions trivial (all singletons or one block): identical
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max_index - expected))
}

// ---------------------------------------------------------------------------
// artifact file shapes
// ---------------------------------------------------------------------------

/// `clustering.json` / ground-truth shape: cluster label -> sensor names.
pub type ClusterLabelMap = BTreeMap<String, Vec<String>>;

pub fn clustering_to_label_map(sol: &ClusteringSolution, names: &[String]) -> ClusterLabelMap {
    let mut map = ClusterLabelMap::new();
    for (label, members) in sol.members().iter().enumerate() {
        map.insert(
            label.to_string(),
            members.iter().map(|&i| names[i].clone()).collect(),
        );
    }
    map
}

pub fn clustering_from_label_map(
    map: &ClusterLabelMap,
    names: &[String],
) -> Result<ClusteringSolution> {
    let index: BTreeMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut labels: Vec<usize> = map
        .keys()
        .map(|k| {
            k.parse::<usize>()
                .map_err(|_| Error::InvalidParam(format!("bad cluster label {k:?}")))
        })
        .collect::<Result<_>>()?;
    labels.sort_unstable();
    let m = labels.len();
    if labels.iter().enumerate().any(|(i, &l)| i != l) {
        return Err(Error::InvalidParam(
            "cluster labels must be 0..m without gaps".into(),
        ));
    }
    let mut assignment = vec![usize::MAX; names.len()];
    for (k, sensors) in map {
        let label: usize = k.parse().expect("validated above");
        for s in sensors {
            let &i = index.get(s.as_str()).ok_or_else(|| {
                Error::InvalidParam(format!("clustering names unknown sensor {s:?}"))
            })?;
            if assignment[i] != usize::MAX {
                return Err(Error::InvalidParam(format!(
                    "sensor {s:?} appears in more than one cluster"
                )));
            }
            assignment[i] = label;
        }
    }
    if assignment.contains(&usize::MAX) {
        return Err(Error::InvalidParam(
            "clustering does not cover every sensor".into(),
        ));
    }
    ClusteringSolution::new(assignment, m)
}

/// Per-block solutions as written by the `kmeans` subcommand and read by
/// `fuse`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockClusterings {
    pub sensor_names: Vec<String>,
    pub m: usize,
    pub block_size: usize,
    pub assignments: Vec<Vec<usize>>,
}

impl BlockClusterings {
    pub fn from_solutions(
        solutions: &[ClusteringSolution],
        names: &[String],
        block_size: usize,
    ) -> Self {
        Self {
            sensor_names: names.to_vec(),
            m: solutions.first().map_or(0, |s| s.m()),
            block_size,
            assignments: solutions
                .iter()
                .map(|s| s.assignment().to_vec())
                .collect(),
        }
    }

    pub fn to_solutions(&self) -> Result<Vec<ClusteringSolution>> {
        self.assignments
            .iter()
            .map(|a| ClusteringSolution::new(a.clone(), self.m))
            .collect()
    }
}

/// `representatives.json` value per cluster label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepresentativeEntry {
    pub sensor: String,
    pub quality: f64,
}

/// `model.json`: self-describing model container plus the sensor-name
/// wiring and the normalization it was trained under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub norm: Option<NormParams>,
    pub model: Regressor,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `predictions.csv`: sample index plus actual and predicted columns per
/// virtual sensor.
pub fn predictions_csv(
    names: &[String],
    actual: &Array2<f64>,
    predicted: &Array2<f64>,
) -> String {
    let mut header = String::from("sample");
    for name in names {
        header.push_str(&format!(",{name}_actual,{name}_predicted"));
    }
    header.push('\n');
    let mut out = header;
    for i in 0..actual.nrows() {
        out.push_str(&i.to_string());
        for j in 0..names.len() {
            out.push_str(&format!(",{},{}", actual[[i, j]], predicted[[i, j]]));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

/// Train one regressor family on `(x, y)`.
pub fn train_regressor(
    kind: RegressorKind,
    x: ndarray::ArrayView2<'_, f64>,
    y: ndarray::ArrayView2<'_, f64>,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Regressor> {
    match kind {
        RegressorKind::Lbfr => Ok(Regressor::Lbfr(lbfr_fit(x, y, cfg.lbfr_lambda)?)),
        RegressorKind::Mlp => Ok(Regressor::Mlp(mlp_fit(x, y, &cfg.mlp, seed)?.0)),
        RegressorKind::Svr => Ok(Regressor::Svr(svr_fit_multi(x, y, &cfg.svr, seed)?)),
    }
}

struct StageOutcome {
    row: ReportRow,
    solution: ClusteringSolution,
    representatives: Vec<usize>,
    history: RunHistory,
    /// Lowest-MSE model with its test-set predictions `(actual, predicted)`.
    best_model: Option<(RegressorKind, Regressor, Array2<f64>, Array2<f64>)>,
    mean_mse: f64,
}

/// One full pass at a fixed cluster count: block K-Means, fusion,
/// representative selection, training, test evaluation.
fn run_stage(
    cfg: &PipelineConfig,
    train: &SensorDataset,
    test: &SensorDataset,
    dataset_id: &str,
    m: usize,
    seed: u64,
) -> Result<StageOutcome> {
    let partition = dataset::partition_blocks(train, cfg.block_size)?;
    let solutions = kmeans::cluster_all_blocks(train, &partition, m, seeds::derive2(seed, m as u64, 1))?;
    let objective = BlockObjective::new(train, &partition, cfg.fac2t.epsilon_g);
    let (best, history) =
        fac2t::run_fac2t_with(&objective, &solutions, &cfg.fac2t, seeds::derive2(seed, m as u64, 2))?;
    let representatives = repsel::select_representatives(&best, train)?;
    let virtuals: Vec<usize> = (0..train.n_sensors())
        .filter(|i| !representatives.contains(i))
        .collect();

    let mut row = ReportRow {
        dataset: dataset_id.to_string(),
        m,
        seed,
        fac2t_objective: objective.eval(&best),
        kmeans_objective: None,
        ideal_objective: None,
        ari: None,
        mse_lbfr: None,
        mse_mlp: None,
        mse_svr: None,
    };

    let mut best_model: Option<(RegressorKind, Regressor, Array2<f64>, Array2<f64>)> = None;
    let mean_mse;
    if virtuals.is_empty() {
        // every sensor is its own representative: nothing to emulate
        mean_mse = 0.0;
    } else {
        let x_train = train.select_columns(&representatives)?;
        let y_train = train.select_columns(&virtuals)?;
        let x_test = test.select_columns(&representatives)?;
        let y_test = test.select_columns(&virtuals)?;

        let mut best_mse = f64::INFINITY;
        for (k, &kind) in cfg.regressors.iter().enumerate() {
            let model = train_regressor(
                kind,
                x_train.values(),
                y_train.values(),
                cfg,
                seeds::derive2(seed, m as u64, 10 + k as u64),
            )?;
            let predicted = model.predict(x_test.values())?;
            let err = mse(predicted.view(), y_test.values())?;
            match kind {
                RegressorKind::Lbfr => row.mse_lbfr = Some(err),
                RegressorKind::Mlp => row.mse_mlp = Some(err),
                RegressorKind::Svr => row.mse_svr = Some(err),
            }
            if err < best_mse {
                best_mse = err;
                best_model = Some((kind, model, y_test.values().to_owned(), predicted));
            }
        }
        mean_mse = row.mean_mse().expect("at least one regressor ran");
    }

    Ok(StageOutcome {
        row,
        solution: best,
        representatives,
        history,
        best_model,
        mean_mse,
    })
}

fn write_stage_artifacts(
    out: &Path,
    train: &SensorDataset,
    norm: &NormParams,
    outcome: &StageOutcome,
) -> Result<()> {
    let names = train.names();
    write_json(
        &out.join("clustering.json"),
        &clustering_to_label_map(&outcome.solution, names),
    )?;

    let members = outcome.solution.members();
    let mut reps = BTreeMap::<String, RepresentativeEntry>::new();
    for (label, &rep) in outcome.representatives.iter().enumerate() {
        let q = repsel::quality(rep, &members[label], train)?;
        reps.insert(
            label.to_string(),
            RepresentativeEntry {
                sensor: names[rep].clone(),
                quality: q.q,
            },
        );
    }
    write_json(&out.join("representatives.json"), &reps)?;

    if let Some((_, model, actual, predicted)) = &outcome.best_model {
        let virtuals: Vec<String> = (0..train.n_sensors())
            .filter(|i| !outcome.representatives.contains(i))
            .map(|i| names[i].clone())
            .collect();
        let inputs: Vec<String> = outcome
            .representatives
            .iter()
            .map(|&i| names[i].clone())
            .collect();
        write_json(
            &out.join("model.json"),
            &ModelFile {
                inputs,
                outputs: virtuals.clone(),
                norm: Some(norm.clone()),
                model: model.clone(),
            },
        )?;
        write_text(
            &out.join("predictions.csv"),
            &predictions_csv(&virtuals, actual, predicted),
        )?;
    }
    write_text(&out.join("history.csv"), &outcome.history.to_csv_string())?;
    Ok(())
}

/// The end-to-end loop: ingest, clean, split, normalize on the training
/// split, estimate the starting cluster count from the covariance spectrum,
/// then raise the cluster count until the mean test MSE meets the threshold
/// (or the bound is hit). Artifacts are written at the accepted count.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<ExperimentReport> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::InvalidParam("pipeline requires an input CSV path".into()))?;
    let dataset_id = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let raw = dataset::load_csv(input, cfg.has_header)?;
    run_pipeline_on(cfg, &raw, &dataset_id, out)
}

/// Same as [`run_pipeline`] but starting from an in-memory dataset.
pub fn run_pipeline_on(
    cfg: &PipelineConfig,
    raw: &SensorDataset,
    dataset_id: &str,
    out: &Path,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let clean = dataset::clean_missing(raw)?;
    let (train_raw, test_raw) =
        dataset::split_train_test(&clean, cfg.train_fraction, seeds::derive(cfg.seed, 1))?;
    let (train, norm) = dataset::normalize(&train_raw)?;
    let test = norm.apply(&test_raw)?;

    let n = train.n_sensors();
    let max_m = cfg.max_clusters.unwrap_or(n).min(n).max(1);
    let m0 = pca::estimate_min_sensors(&train, cfg.variance_fraction)?.min(max_m);

    let candidates: Vec<usize> = if cfg.cluster_counts.is_empty() {
        (m0..=max_m).collect()
    } else {
        let list = cfg.cluster_counts.clone();
        if list.iter().any(|&m| m == 0 || m > n) {
            return Err(Error::InvalidParam(format!(
                "cluster_counts must lie in 1..={n}"
            )));
        }
        list
    };
    let threshold_mode = cfg.cluster_counts.is_empty();

    let mut report = ExperimentReport::default();
    let mut metrics_rows: Vec<(usize, RegressorKind, f64)> = Vec::new();
    let mut accepted: Option<StageOutcome> = None;
    for (i, &m) in candidates.iter().enumerate() {
        let outcome = run_stage(cfg, &train, &test, dataset_id, m, cfg.seed)?;
        for kind in RegressorKind::ALL {
            if let Some(v) = outcome.row.mse_for(kind) {
                metrics_rows.push((m, kind, v));
            }
        }
        report.rows.push(outcome.row.clone());
        let is_last = i + 1 == candidates.len();
        if threshold_mode {
            if outcome.mean_mse <= cfg.mse_threshold || is_last {
                accepted = Some(outcome);
                break;
            }
        } else {
            // explicit list: keep the configuration with the lowest mean MSE
            let better = accepted
                .as_ref()
                .is_none_or(|a| outcome.mean_mse < a.mean_mse);
            if better {
                accepted = Some(outcome);
            }
        }
    }
    let accepted = accepted.expect("at least one candidate ran");

    write_stage_artifacts(out, &train, &norm, &accepted)?;
    let mut metrics_csv = String::from("m,model,test_mse\n");
    for (m, kind, v) in &metrics_rows {
        metrics_csv.push_str(&format!("{m},{kind},{v}\n"));
    }
    write_text(&out.join("metrics.csv"), &metrics_csv)?;
    write_text(&out.join("report.csv"), &report.to_csv_string())?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// experiments
// ---------------------------------------------------------------------------

/// Reassign `fraction` of the sensors to uniformly random clusters,
/// applying the singleton swap whenever a move would empty a cluster.
pub fn corrupt_solution(
    sol: &ClusteringSolution,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> ClusteringSolution {
    let n = sol.n_items();
    let m = sol.m();
    let n_move = ((fraction * n as f64).round() as usize).min(n);
    if n_move == 0 || m < 2 {
        return sol.clone();
    }
    let mut assignment = sol.assignment().to_vec();
    let mut counts = sol.counts();
    for s in rand::seq::index::sample(rng, n, n_move) {
        let target = rng.random_range(0..m);
        let current = assignment[s];
        if target == current {
            continue;
        }
        if counts[current] == 1 {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == target).collect();
            let z = members[rng.random_range(0..members.len())];
            assignment[z] = current;
            counts[target] -= 1;
            counts[current] += 1;
        }
        counts[assignment[s]] -= 1;
        assignment[s] = target;
        counts[target] += 1;
    }
    ClusteringSolution::new(assignment, m).expect("corruption preserves all clusters")
}

struct SyntheticRun {
    data: SensorDataset,
    ideal: ClusteringSolution,
}

fn generate_synthetic(cfg: &PipelineConfig, m: usize, seed: u64) -> Result<SyntheticRun> {
    let spec = synthgen::sample_cluster_spec(cfg.synth.n_sensors, m, seeds::derive(seed, 0))?;
    let corr = synthgen::build_correlation_matrix_with(
        &spec,
        cfg.synth.triangular()?,
        seeds::derive(seed, 1),
    );
    let repaired = synthgen::repair_psd(&corr, synthgen::DEFAULT_EIGENVALUE_FLOOR)?;
    let data = synthgen::generate_dataset(&repaired, cfg.synth.n_readings, seeds::derive(seed, 2))?;
    Ok(SyntheticRun {
        data,
        ideal: spec.to_solution(),
    })
}

/// Experiment A: per seeded dataset and cluster count, compare the fused
/// solution against whole-dataset K-Means and the planted clustering, all
/// under the identical blockwise objective.
pub fn run_experiment_a(cfg: &PipelineConfig, out: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut report = ExperimentReport::default();
    for di in 0..cfg.experiment.n_datasets {
        for &m in &cfg.experiment.cluster_counts {
            let run_seed = seeds::derive2(cfg.seed, 100 + di as u64, m as u64);
            let row = experiment_row(cfg, m, run_seed, &format!("synth-{di}"), 0.0)?.0;
            report.rows.push(row);
        }
    }
    write_text(&out.join("report.csv"), &report.to_csv_string())?;
    Ok(report)
}

/// Outcome of one Experiment B run.
pub struct ExperimentBOutcome {
    pub report: ExperimentReport,
    pub history: RunHistory,
    pub initial_ari: f64,
    pub final_ari: f64,
}

/// Experiment B: corrupt the block solutions before fusing, then watch the
/// metric and the ground-truth agreement recover.
pub fn run_experiment_b(cfg: &PipelineConfig, out: &Path) -> Result<ExperimentBOutcome> {
    cfg.validate()?;
    let m = cfg.synth.n_clusters;
    let run_seed = seeds::derive(cfg.seed, 7777);
    let (row, detail) = experiment_row(
        cfg,
        m,
        run_seed,
        "synth-b",
        cfg.experiment.corruption_fraction,
    )?;
    let mut report = ExperimentReport::default();
    report.rows.push(row);
    write_text(&out.join("report.csv"), &report.to_csv_string())?;
    let detail = detail.expect("experiment rows carry details");
    write_text(&out.join("history.csv"), &detail.history.to_csv_string())?;
    Ok(detail)
}

/// Shared experiment body; a nonzero `corruption` makes it Experiment B.
fn experiment_row(
    cfg: &PipelineConfig,
    m: usize,
    run_seed: u64,
    dataset_id: &str,
    corruption: f64,
) -> Result<(ReportRow, Option<ExperimentBOutcome>)> {
    let synth = generate_synthetic(cfg, m, seeds::derive(run_seed, 1))?;
    let partition = dataset::partition_blocks(&synth.data, cfg.block_size)?;
    let objective = BlockObjective::new(&synth.data, &partition, cfg.fac2t.epsilon_g);

    let mut solutions =
        kmeans::cluster_all_blocks(&synth.data, &partition, m, seeds::derive(run_seed, 2))?;
    if corruption > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(run_seed, 3));
        solutions = solutions
            .iter()
            .map(|s| corrupt_solution(s, corruption, &mut rng))
            .collect();
    }
    let initial_metrics: Vec<f64> = solutions.iter().map(|s| objective.eval(s)).collect();
    let initial_best = {
        let mut bi = 0;
        for (i, &g) in initial_metrics.iter().enumerate().skip(1) {
            if g > initial_metrics[bi] {
                bi = i;
            }
        }
        solutions[bi].clone()
    };

    let (best, history) =
        fac2t::run_fac2t_with(&objective, &solutions, &cfg.fac2t, seeds::derive(run_seed, 4))?;

    let whole = kmeans::kmeans(
        synth.data.values().t(),
        m,
        seeds::derive(run_seed, 5),
        cfg.kmeans_max_iter,
        cfg.kmeans_tol,
    )?;

    let initial_ari = adjusted_rand_index(&initial_best, &synth.ideal)?;
    let final_ari = adjusted_rand_index(&best, &synth.ideal)?;
    let row = ReportRow {
        dataset: dataset_id.to_string(),
        m,
        seed: run_seed,
        fac2t_objective: objective.eval(&best),
        kmeans_objective: Some(objective.eval(&whole)),
        ideal_objective: Some(objective.eval(&synth.ideal)),
        ari: Some(final_ari),
        mse_lbfr: None,
        mse_mlp: None,
        mse_svr: None,
    };
    let outcome = ExperimentBOutcome {
        report: ExperimentReport { rows: vec![row.clone()] },
        history,
        initial_ari,
        final_ari,
    };
    Ok((row, Some(outcome)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn sol(asg: Vec<usize>, m: usize) -> ClusteringSolution {
        ClusteringSolution::new(asg, m).unwrap()
    }

    #[test]
    fn ari_of_identical_partitions_is_one() {
        let a = sol(vec![0, 0, 1, 1, 2], 3);
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ari_is_label_permutation_invariant() {
        let a = sol(vec![0, 0, 1, 1, 2, 2], 3);
        let b = sol(vec![2, 2, 0, 0, 1, 1], 3);
        assert!((adjusted_rand_index(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ari_hand_computed_cross_partition() {
        // pair counting: no co-clustered pair agrees -> ARI = -0.5
        let a = sol(vec![0, 0, 1, 1], 2);
        let b = sol(vec![0, 1, 0, 1], 2);
        assert!((adjusted_rand_index(&a, &b).unwrap() + 0.5).abs() < 1e-12);
    }

    /// Pair-enumeration oracle: count agreeing/disagreeing pairs directly.
    fn ari_pair_oracle(a: &ClusteringSolution, b: &ClusteringSolution) -> f64 {
        let n = a.n_items();
        let (mut n11, mut n00, mut n10, mut n01) = (0f64, 0f64, 0f64, 0f64);
        for i in 0..n {
            for j in (i + 1)..n {
                let same_a = a.assignment()[i] == a.assignment()[j];
                let same_b = b.assignment()[i] == b.assignment()[j];
                match (same_a, same_b) {
                    (true, true) => n11 += 1.0,
                    (false, false) => n00 += 1.0,
                    (true, false) => n10 += 1.0,
                    (false, true) => n01 += 1.0,
                }
            }
        }
        let num = 2.0 * (n11 * n00 - n10 * n01);
        let den = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00);
        if den == 0.0 {
            1.0
        } else {
            num / den
        }
    }

    #[test]
    fn ari_matches_pair_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let n = rng.random_range(4..12);
            let ma = rng.random_range(2..4usize);
            let mb = rng.random_range(2..4usize);
            let aa: Vec<usize> = (0..n).map(|_| rng.random_range(0..ma)).collect();
            let bb: Vec<usize> = (0..n).map(|_| rng.random_range(0..mb)).collect();
            let (a, b) = match (
                ClusteringSolution::new(aa, ma),
                ClusteringSolution::new(bb, mb),
            ) {
                (Ok(a), Ok(b)) => (a, b),
                _ => continue,
            };
            let fast = adjusted_rand_index(&a, &b).unwrap();
            let slow = ari_pair_oracle(&a, &b);
            assert!(
                (fast - slow).abs() <= 1e-12,
                "contingency {fast} vs pairs {slow}"
            );
            // symmetry
            let rev = adjusted_rand_index(&b, &a).unwrap();
            assert!((fast - rev).abs() <= 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn ari_bounds_symmetry_and_self_agreement(seed in 0u64..400) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(3..15usize);
            let make = |rng: &mut ChaCha8Rng| {
                use rand::seq::SliceRandom;
                let m = rng.random_range(1..=n);
                let mut asg: Vec<usize> = (0..n).map(|i| i % m).collect();
                asg.shuffle(rng);
                ClusteringSolution::new(asg, m).unwrap()
            };
            let a = make(&mut rng);
            let b = make(&mut rng);
            let ab = adjusted_rand_index(&a, &b).unwrap();
            let ba = adjusted_rand_index(&b, &a).unwrap();
            proptest::prop_assert!((ab - ba).abs() <= 1e-12);
            proptest::prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
            proptest::prop_assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        }
    }

    #[test]
    fn ari_rejects_length_mismatch() {
        let a = sol(vec![0, 1], 2);
        let b = sol(vec![0, 1, 1], 2);
        assert!(adjusted_rand_index(&a, &b).is_err());
    }

    #[test]
    fn corruption_zero_is_identity() {
        let s = sol(vec![0, 1, 2, 0, 1, 2], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(corrupt_solution(&s, 0.0, &mut rng), s);
    }

    #[test]
    fn corruption_preserves_cluster_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sol(vec![0, 1, 2, 3, 0, 1, 2, 3, 0, 1], 4);
        for _ in 0..100 {
            let c = corrupt_solution(&s, 0.5, &mut rng);
            assert_eq!(c.m(), 4);
            assert!(c.counts().iter().all(|&k| k > 0));
        }
        // full shuffle still keeps all clusters
        let c = corrupt_solution(&s, 1.0, &mut rng);
        assert!(c.counts().iter().all(|&k| k > 0));
    }

    #[test]
    fn clustering_label_map_round_trip() {
        let names: Vec<String> = (0..5).map(|i| format!("s{i}")).collect();
        let s = sol(vec![1, 0, 1, 2, 0], 3);
        let map = clustering_to_label_map(&s, &names);
        assert_eq!(map["0"], vec!["s1".to_string(), "s4".to_string()]);
        let back = clustering_from_label_map(&map, &names).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn label_map_rejects_a_sensor_in_two_clusters() {
        let names: Vec<String> = (0..3).map(|i| format!("s{i}")).collect();
        let mut map = ClusterLabelMap::new();
        map.insert("0".into(), vec!["s0".into(), "s1".into()]);
        map.insert("1".into(), vec!["s1".into(), "s2".into()]);
        assert!(clustering_from_label_map(&map, &names).is_err());
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let cfg = PipelineConfig::from_json(
            r#"{"block_size": 250, "fac2t": {"iterations": 17}, "regressors": ["lbfr"]}"#,
        )
        .unwrap();
        assert_eq!(cfg.block_size, 250);
        assert_eq!(cfg.fac2t.iterations, 17);
        assert_eq!(cfg.fac2t.beta, 20); // untouched default
        assert_eq!(cfg.regressors, vec![RegressorKind::Lbfr]);
        assert!(PipelineConfig::from_json(r#"{"mse_threshold": 0}"#).is_err());
    }

    /// 60 sensors in 6 planted groups; every sensor is an affine copy of its
    /// group signal plus small noise, so cluster-mates predict each other.
    fn linear_cluster_dataset(
        n_samples: usize,
        sensors_per_cluster: usize,
        n_clusters: usize,
        noise: f64,
        seed: u64,
    ) -> (SensorDataset, ClusteringSolution) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_sensors = sensors_per_cluster * n_clusters;
        let base = Array2::from_shape_fn((n_samples, n_clusters), |_| rng.random_range(0.0..1.0));
        let mut values = Array2::<f64>::zeros((n_samples, n_sensors));
        let mut assignment = vec![0usize; n_sensors];
        for j in 0..n_sensors {
            let c = j / sensors_per_cluster;
            assignment[j] = c;
            let scale = rng.random_range(0.5..2.0);
            let offset = rng.random_range(-0.5..0.5);
            for i in 0..n_samples {
                values[[i, j]] = scale * base[[i, c]] + offset + rng.random_range(-noise..noise);
            }
        }
        let names = (0..n_sensors).map(|j| format!("s{j}")).collect();
        (
            SensorDataset::new(names, values).unwrap(),
            ClusteringSolution::new(assignment, n_clusters).unwrap(),
        )
    }

    fn fast_cfg() -> PipelineConfig {
        PipelineConfig {
            block_size: 100,
            regressors: vec![RegressorKind::Lbfr],
            fac2t: Fac2tParams {
                iterations: 25,
                n_ants: 6,
                beta: 3,
                ..Fac2tParams::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn infinite_threshold_stops_at_the_pca_estimate() {
        let (data, _) = linear_cluster_dataset(500, 5, 4, 0.01, 3);
        let cfg = PipelineConfig {
            mse_threshold: f64::INFINITY,
            seed: 3,
            ..fast_cfg()
        };
        let dir = tempfile::tempdir().unwrap();
        let report = run_pipeline_on(&cfg, &data, "toy", dir.path()).unwrap();
        assert_eq!(report.rows.len(), 1, "loop must exit after one iteration");

        // artifacts for the accepted M exist and parse
        let map: ClusterLabelMap = read_json(&dir.path().join("clustering.json")).unwrap();
        assert_eq!(map.len(), report.rows[0].m);
        let model: ModelFile = read_json(&dir.path().join("model.json")).unwrap();
        assert_eq!(
            model.inputs.len() + model.outputs.len(),
            data.n_sensors()
        );
        assert!(dir.path().join("predictions.csv").exists());
        assert!(dir.path().join("metrics.csv").exists());
        assert!(dir.path().join("report.csv").exists());
        assert!(dir.path().join("history.csv").exists());
    }

    #[test]
    fn threshold_loop_accepts_with_low_error_on_predictable_data() {
        let (data, _) = linear_cluster_dataset(600, 10, 6, 0.01, 4);
        let cfg = PipelineConfig {
            mse_threshold: 0.01,
            max_clusters: Some(10),
            seed: 4,
            ..fast_cfg()
        };
        let dir = tempfile::tempdir().unwrap();
        let report = run_pipeline_on(&cfg, &data, "toy", dir.path()).unwrap();
        let last = report.rows.last().unwrap();
        assert!(last.m <= 10);
        assert!(
            last.mean_mse().unwrap() <= 0.01,
            "mean mse {} at m {}",
            last.mean_mse().unwrap(),
            last.m
        );
    }

    #[test]
    fn explicit_cluster_list_reports_every_count() {
        let (data, _) = linear_cluster_dataset(400, 5, 4, 0.01, 5);
        let cfg = PipelineConfig {
            cluster_counts: vec![3, 4, 5],
            seed: 5,
            ..fast_cfg()
        };
        let dir = tempfile::tempdir().unwrap();
        let report = run_pipeline_on(&cfg, &data, "toy", dir.path()).unwrap();
        assert_eq!(
            report.rows.iter().map(|r| r.m).collect::<Vec<_>>(),
            vec![3, 4, 5]
        );
        // metrics.csv carries the model-by-M table
        let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(metrics.lines().count(), 1 + 3); // header + one per (m, lbfr)
    }

    #[test]
    fn pipeline_report_is_reproducible() {
        let (data, _) = linear_cluster_dataset(300, 5, 3, 0.02, 6);
        let cfg = PipelineConfig {
            mse_threshold: f64::INFINITY,
            seed: 6,
            ..fast_cfg()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run_pipeline_on(&cfg, &data, "toy", d1.path()).unwrap();
        run_pipeline_on(&cfg, &data, "toy", d2.path()).unwrap();
        let r1 = std::fs::read(d1.path().join("report.csv")).unwrap();
        let r2 = std::fs::read(d2.path().join("report.csv")).unwrap();
        assert_eq!(r1, r2, "report.csv must be byte-identical");
        let p1 = std::fs::read(d1.path().join("predictions.csv")).unwrap();
        let p2 = std::fs::read(d2.path().join("predictions.csv")).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn report_mse_matches_recomputation_from_predictions_csv() {
        let (data, _) = linear_cluster_dataset(400, 5, 4, 0.01, 7);
        let cfg = PipelineConfig {
            mse_threshold: f64::INFINITY,
            seed: 7,
            ..fast_cfg()
        };
        let dir = tempfile::tempdir().unwrap();
        let report = run_pipeline_on(&cfg, &data, "toy", dir.path()).unwrap();
        let row = &report.rows[0];

        let text = std::fs::read_to_string(dir.path().join("predictions.csv")).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        let n_virtual = (header.split(',').count() - 1) / 2;
        let mut se = 0.0;
        let mut count = 0usize;
        for line in lines {
            let fields: Vec<f64> = line
                .split(',')
                .skip(1)
                .map(|f| f.parse().unwrap())
                .collect();
            for k in 0..n_virtual {
                let actual = fields[2 * k];
                let predicted = fields[2 * k + 1];
                se += (actual - predicted) * (actual - predicted);
                count += 1;
            }
        }
        let recomputed = se / count as f64;
        let reported = row.mse_lbfr.unwrap();
        assert!(
            (recomputed - reported).abs() <= 1e-12 * reported.max(1e-12),
            "recomputed {recomputed} vs reported {reported}"
        );
    }

    fn mini_experiment_cfg() -> PipelineConfig {
        PipelineConfig {
            block_size: 100,
            synth: SynthConfig {
                n_sensors: 18,
                n_clusters: 3,
                n_readings: 400,
                ..SynthConfig::default()
            },
            experiment: ExperimentConfig {
                n_datasets: 2,
                cluster_counts: vec![3],
                corruption_fraction: 0.3,
            },
            fac2t: Fac2tParams {
                iterations: 30,
                n_ants: 6,
                beta: 3,
                ..Fac2tParams::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn experiment_a_rows_carry_all_three_objectives() {
        let cfg = mini_experiment_cfg();
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment_a(&cfg, dir.path()).unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert!(row.fac2t_objective.is_finite());
            assert!(row.kmeans_objective.unwrap().is_finite());
            assert!(row.ideal_objective.unwrap().is_finite());
            assert!(row.ari.is_some());
        }
        // determinism of the emitted CSV
        let dir2 = tempfile::tempdir().unwrap();
        let report2 = run_experiment_a(&cfg, dir2.path()).unwrap();
        assert_eq!(report.to_csv_string(), report2.to_csv_string());
    }

    #[test]
    fn experiment_b_recovers_from_corruption() {
        let cfg = mini_experiment_cfg();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_experiment_b(&cfg, dir.path()).unwrap();
        assert!(outcome.history.is_monotone());
        assert!(outcome.history.best_final() >= outcome.history.best_initial());
        assert!(outcome.final_ari >= outcome.initial_ari - 1e-12);
        assert!(dir.path().join("history.csv").exists());
    }

    #[test]
    fn experiment_b_without_corruption_matches_plain_fusion() {
        let mut cfg = mini_experiment_cfg();
        cfg.experiment.corruption_fraction = 0.0;
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_experiment_b(&cfg, dir.path()).unwrap();
        // uncorrupted well-separated blocks start essentially ideal
        assert!(outcome.initial_ari > 0.5);
        assert!(outcome.final_ari >= outcome.initial_ari - 1e-12);
    }
}
