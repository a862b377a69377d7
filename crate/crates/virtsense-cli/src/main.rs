//! `virtsense` — cluster correlated sensors, retain one representative per
//! cluster, and emulate the rest with trained regressors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use virtsense::dataset::{self, SensorDataset};
use virtsense::fac2t::{self, BlockObjective};
use virtsense::kmeans;
use virtsense::pca;
use virtsense::pipeline::{
    self, clustering_from_label_map, clustering_to_label_map, read_json, write_json, write_text,
    BlockClusterings, ClusterLabelMap, ModelFile, PipelineConfig, RepresentativeEntry,
};
use virtsense::regress::{self, RegressorKind};
use virtsense::repsel;
use virtsense::seeds;
use virtsense::synthgen;

#[derive(Parser)]
#[command(
    name = "virtsense",
    version,
    about = "Sensor clustering by ant-colony fusion, representative selection, and virtual-sensor regression"
)]
struct Cli {
    /// JSON configuration; keys mirror the pipeline config (snake_case)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config value
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for artifacts
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Treat input CSVs as headerless (columns named s0, s1, ...)
    #[arg(long, global = true)]
    no_header: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset with planted correlated clusters
    Synth {
        #[arg(long)]
        sensors: Option<usize>,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        readings: Option<usize>,
    },
    /// Print the covariance spectrum and the minimum representative count
    Pca {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        variance_fraction: Option<f64>,
    },
    /// Cluster the sensors of every block independently
    Kmeans {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        clusters: usize,
        #[arg(long)]
        block_size: Option<usize>,
    },
    /// Fuse per-block solutions into one global clustering
    Fuse {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        blocks: PathBuf,
    },
    /// Pick the highest-quality representative sensor per cluster
    Select {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        clustering: PathBuf,
    },
    /// Train one regressor from representatives to virtual sensors
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        representatives: PathBuf,
        /// lbfr | mlp | svr
        #[arg(long)]
        model: String,
    },
    /// Predict virtual sensors with a trained model
    Predict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Full loop: estimate M, cluster, fuse, select, train, evaluate
    Pipeline {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Experiment A: fusion vs whole-data K-Means across synthetic datasets
    ExpA,
    /// Experiment B: fusion from corrupted block initializations
    ExpB,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            PipelineConfig::from_json(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.no_header {
        cfg.has_header = false;
    }
    Ok(cfg)
}

fn load_clean(path: &Path, cfg: &PipelineConfig) -> Result<SensorDataset> {
    let raw = dataset::load_csv(path, cfg.has_header)?;
    Ok(dataset::clean_missing(&raw)?)
}

fn columns_by_name(d: &SensorDataset, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            d.names()
                .iter()
                .position(|x| x == n)
                .with_context(|| format!("input has no sensor named {n:?}"))
        })
        .collect()
}

fn main() {
    if let Err(e) = run() {
        // one-line diagnostic: the error chain joined by ": "
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    let out = cli.out.clone();

    match &cli.cmd {
        Cmd::Synth {
            sensors,
            clusters,
            readings,
        } => {
            let n_sensors = sensors.unwrap_or(cfg.synth.n_sensors);
            let n_clusters = clusters.unwrap_or(cfg.synth.n_clusters);
            let n_readings = readings.unwrap_or(cfg.synth.n_readings);
            let spec = synthgen::sample_cluster_spec(
                n_sensors,
                n_clusters,
                seeds::derive(cfg.seed, 1),
            )?;
            let corr = synthgen::build_correlation_matrix_with(
                &spec,
                cfg.synth.triangular()?,
                seeds::derive(cfg.seed, 2),
            );
            let repaired = synthgen::repair_psd(&corr, synthgen::DEFAULT_EIGENVALUE_FLOOR)?;
            let data = synthgen::generate_dataset(&repaired, n_readings, seeds::derive(cfg.seed, 3))?;
            write_text(&out.join("data.csv"), &dataset::to_csv_string(&data))?;
            write_json(
                &out.join("ground_truth.json"),
                &clustering_to_label_map(&spec.to_solution(), data.names()),
            )?;
            println!(
                "wrote {} sensors x {} readings with {} planted clusters to {}",
                n_sensors,
                n_readings,
                n_clusters,
                out.display()
            );
        }

        Cmd::Pca {
            input,
            variance_fraction,
        } => {
            let fraction = variance_fraction.unwrap_or(cfg.variance_fraction);
            let (data, _) = dataset::normalize(&load_clean(input, &cfg)?)?;
            let spectrum = pca::eigendecompose_sym(&pca::covariance_matrix(&data)?)?;
            let m0 = pca::min_sensors_from_eigenvalues(&spectrum.eigenvalues, fraction)?;
            let total: f64 = spectrum.eigenvalues.iter().map(|l| l.max(0.0)).sum();
            let mut acc = 0.0;
            println!("index,eigenvalue,cumulative_fraction");
            for (i, l) in spectrum.eigenvalues.iter().enumerate() {
                acc += l.max(0.0);
                println!("{},{},{}", i, l, acc / total);
            }
            println!("minimum_representative_sensors,{m0}");
        }

        Cmd::Kmeans {
            input,
            clusters,
            block_size,
        } => {
            let block_size = block_size.unwrap_or(cfg.block_size);
            let (data, _) = dataset::normalize(&load_clean(input, &cfg)?)?;
            let partition = dataset::partition_blocks(&data, block_size)?;
            let solutions = kmeans::cluster_all_blocks(
                &data,
                &partition,
                *clusters,
                seeds::derive(cfg.seed, 10),
            )?;
            write_json(
                &out.join("blocks.json"),
                &BlockClusterings::from_solutions(&solutions, data.names(), block_size),
            )?;
            println!(
                "clustered {} blocks of {} rows into {} clusters",
                partition.n_blocks(),
                block_size,
                clusters
            );
        }

        Cmd::Fuse { input, blocks } => {
            let (data, _) = dataset::normalize(&load_clean(input, &cfg)?)?;
            let file: BlockClusterings = read_json(blocks)?;
            if file.sensor_names != data.names() {
                bail!("blocks file sensor names do not match the input CSV");
            }
            let solutions = file.to_solutions()?;
            let partition = dataset::partition_blocks(&data, file.block_size)?;
            if partition.n_blocks() != solutions.len() {
                bail!(
                    "blocks file has {} solutions but the dataset partitions into {} blocks",
                    solutions.len(),
                    partition.n_blocks()
                );
            }
            let objective = BlockObjective::new(&data, &partition, cfg.fac2t.epsilon_g);
            let (best, history) = fac2t::run_fac2t_with(
                &objective,
                &solutions,
                &cfg.fac2t,
                seeds::derive(cfg.seed, 11),
            )?;
            write_json(
                &out.join("clustering.json"),
                &clustering_to_label_map(&best, data.names()),
            )?;
            write_text(&out.join("history.csv"), &history.to_csv_string())?;
            println!(
                "fused metric {} after {} iterations",
                history.best_final(),
                cfg.fac2t.iterations
            );
        }

        Cmd::Select { input, clustering } => {
            let (data, _) = dataset::normalize(&load_clean(input, &cfg)?)?;
            let map: ClusterLabelMap = read_json(clustering)?;
            let solution = clustering_from_label_map(&map, data.names())?;
            let reps = repsel::select_representatives(&solution, &data)?;
            let members = solution.members();
            let mut file = BTreeMap::<String, RepresentativeEntry>::new();
            for (label, &rep) in reps.iter().enumerate() {
                let q = repsel::quality(rep, &members[label], &data)?;
                file.insert(
                    label.to_string(),
                    RepresentativeEntry {
                        sensor: data.names()[rep].clone(),
                        quality: q.q,
                    },
                );
            }
            write_json(&out.join("representatives.json"), &file)?;
            println!("selected {} representatives", reps.len());
        }

        Cmd::Train {
            input,
            representatives,
            model,
        } => {
            let kind: RegressorKind = model.parse()?;
            let clean = load_clean(input, &cfg)?;
            let (train_raw, test_raw) = dataset::split_train_test(
                &clean,
                cfg.train_fraction,
                seeds::derive(cfg.seed, 1),
            )?;
            let (train, norm) = dataset::normalize(&train_raw)?;
            let test = norm.apply(&test_raw)?;

            let reps: BTreeMap<String, RepresentativeEntry> = read_json(representatives)?;
            let input_names: Vec<String> =
                reps.values().map(|e| e.sensor.clone()).collect();
            let rep_cols = columns_by_name(&train, &input_names)?;
            let virtual_cols: Vec<usize> = (0..train.n_sensors())
                .filter(|i| !rep_cols.contains(i))
                .collect();
            if virtual_cols.is_empty() {
                bail!("every sensor is a representative; nothing to train");
            }
            let output_names: Vec<String> = virtual_cols
                .iter()
                .map(|&i| train.names()[i].clone())
                .collect();

            let x_train = train.select_columns(&rep_cols)?;
            let y_train = train.select_columns(&virtual_cols)?;
            let trained = pipeline::train_regressor(
                kind,
                x_train.values(),
                y_train.values(),
                &cfg,
                seeds::derive(cfg.seed, 12),
            )?;

            let x_test = test.select_columns(&rep_cols)?;
            let y_test = test.select_columns(&virtual_cols)?;
            let predicted = trained.predict(x_test.values())?;
            let err = regress::mse(predicted.view(), y_test.values())?;

            write_json(
                &out.join("model.json"),
                &ModelFile {
                    inputs: input_names,
                    outputs: output_names,
                    norm: Some(norm),
                    model: trained,
                },
            )?;
            println!("{kind} test mse {err}");
        }

        Cmd::Predict { input, model } => {
            let file: ModelFile = read_json(model)?;
            let clean = load_clean(input, &cfg)?;
            let data = match &file.norm {
                Some(norm) => norm.apply(&clean)?,
                None => clean,
            };
            let x = data.select_columns(&columns_by_name(&data, &file.inputs)?)?;
            let actual = data.select_columns(&columns_by_name(&data, &file.outputs)?)?;
            let predicted = file.model.predict(x.values())?;
            let err = regress::mse(predicted.view(), actual.values())?;
            write_text(
                &out.join("predictions.csv"),
                &pipeline::predictions_csv(
                    &file.outputs,
                    &actual.values().to_owned(),
                    &predicted,
                ),
            )?;
            println!("predicted {} samples, mse {err}", predicted.nrows());
        }

        Cmd::Pipeline { input } => {
            let mut cfg = cfg.clone();
            if let Some(path) = input {
                cfg.input = Some(path.clone());
            }
            let report = pipeline::run_pipeline(&cfg, &out)?;
            let last = report.rows.last().expect("pipeline produced a report row");
            println!(
                "accepted m={} with mean test mse {}",
                last.m,
                last.mean_mse().map_or(f64::NAN, |v| v)
            );
        }

        Cmd::ExpA => {
            let report = pipeline::run_experiment_a(&cfg, &out)?;
            let wins = report
                .rows
                .iter()
                .filter(|r| r.fac2t_objective >= r.kmeans_objective.unwrap_or(f64::INFINITY))
                .count();
            println!(
                "{} rows; fusion matched or beat whole-data k-means in {}/{}",
                report.rows.len(),
                wins,
                report.rows.len()
            );
        }

        Cmd::ExpB => {
            let outcome = pipeline::run_experiment_b(&cfg, &out)?;
            println!(
                "metric {} -> {}, ari {} -> {}",
                outcome.history.best_initial(),
                outcome.history.best_final(),
                outcome.initial_ari,
                outcome.final_ari
            );
        }
    }
    Ok(())
}
