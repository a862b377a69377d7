//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Criteria 1–3 share one desk-scale corpus: seeded synthetic datasets of
//! 60 sensors with 10 blocks of 500 readings. Criterion 9 needs the
//! external pump dataset and is `#[ignore]`d by default; see the README.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use virtsense::dataset::{partition_blocks, SensorDataset};
use virtsense::fac2t::{self, Fac2tParams};
use virtsense::kmeans::{self, ClusteringSolution};
use virtsense::pipeline::{
    self, adjusted_rand_index, ExperimentConfig, PipelineConfig, SynthConfig,
};
use virtsense::regress::{
    self, lbfr_fit, mlp_fit, mse, svr_fit, AdamParams, MlpConfig, MlpModel, SvrParams,
};

const DESK_SENSORS: usize = 60;
const DESK_BLOCKS: usize = 10;
const DESK_BLOCK_SIZE: usize = 500;
const DESK_DATASETS: usize = 10;
const DESK_CLUSTER_COUNTS: [usize; 2] = [5, 10];

fn desk_config() -> PipelineConfig {
    PipelineConfig {
        block_size: DESK_BLOCK_SIZE,
        seed: 2024,
        // moving 20 of 60 sensors per mutation is noise-dominated at this
        // scale; a smaller candidate set with a longer run searches better
        fac2t: Fac2tParams {
            beta: 5,
            iterations: 400,
            ..Fac2tParams::default()
        },
        synth: SynthConfig {
            n_sensors: DESK_SENSORS,
            n_readings: DESK_BLOCKS * DESK_BLOCK_SIZE,
            ..SynthConfig::default()
        },
        experiment: ExperimentConfig {
            n_datasets: DESK_DATASETS,
            cluster_counts: DESK_CLUSTER_COUNTS.to_vec(),
            corruption_fraction: 0.3,
        },
        ..PipelineConfig::default()
    }
}

struct DeskRun {
    report: pipeline::ExperimentReport,
    elapsed: Duration,
}

/// Experiment A at desk scale, run once and shared by criteria 1 and 2.
fn desk_experiment_a() -> &'static DeskRun {
    static RUN: OnceLock<DeskRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let start = Instant::now();
        let report =
            pipeline::run_experiment_a(&desk_config(), dir.path()).expect("experiment A runs");
        DeskRun {
            report,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_01_fusion_quality() {
    let run = desk_experiment_a();
    for &m in &DESK_CLUSTER_COUNTS {
        let rows: Vec<_> = run.report.rows.iter().filter(|r| r.m == m).collect();
        assert_eq!(rows.len(), DESK_DATASETS);
        let wins = rows
            .iter()
            .filter(|r| r.fac2t_objective >= r.kmeans_objective.expect("kmeans objective"))
            .count();
        assert!(
            wins >= 8,
            "m={m}: fusion matched/beat whole-data k-means in only {wins}/{DESK_DATASETS}"
        );
        println!("ACCEPTANCE 1 (m={m}): fusion >= k-means in {wins}/{DESK_DATASETS} datasets");
    }
    assert!(
        run.elapsed < Duration::from_secs(300),
        "desk experiment took {:?}, budget is 5 minutes",
        run.elapsed
    );
    println!(
        "ACCEPTANCE 1 PASS: desk-scale experiment finished in {:.1?}",
        run.elapsed
    );
}

#[test]
fn criterion_02_ideal_recovery() {
    let run = desk_experiment_a();
    for &m in &DESK_CLUSTER_COUNTS {
        let rows: Vec<_> = run.report.rows.iter().filter(|r| r.m == m).collect();
        let hits = rows
            .iter()
            .filter(|r| r.ari.expect("ari recorded") >= 0.9)
            .count();
        assert!(
            hits >= 8,
            "m={m}: ARI >= 0.9 in only {hits}/{DESK_DATASETS} runs"
        );
        println!("ACCEPTANCE 2 (m={m}): ARI >= 0.9 in {hits}/{DESK_DATASETS} runs");
    }
    println!("ACCEPTANCE 2 PASS: planted clusterings recovered");
}

#[test]
fn criterion_03_corruption_robustness() {
    let base = desk_config();
    for trial in 0..10u64 {
        let cfg = PipelineConfig {
            seed: 9000 + trial,
            synth: SynthConfig {
                n_clusters: 10,
                ..base.synth.clone()
            },
            ..base.clone()
        };
        let dir = tempfile::tempdir().expect("tempdir");
        let outcome = pipeline::run_experiment_b(&cfg, dir.path()).expect("experiment B runs");
        assert!(
            outcome.history.best_final() > outcome.history.best_initial(),
            "trial {trial}: final metric {} did not exceed initial {}",
            outcome.history.best_final(),
            outcome.history.best_initial()
        );
        assert!(
            outcome.final_ari >= outcome.initial_ari,
            "trial {trial}: ARI fell from {} to {}",
            outcome.initial_ari,
            outcome.final_ari
        );
        assert!(outcome.history.is_monotone());
    }
    println!("ACCEPTANCE 3 PASS: metric and ARI recovered in 10/10 corrupted runs");
}

#[test]
fn criterion_04_monotone_elitism() {
    // run_fac2t hard-asserts monotonicity every iteration; verify the
    // recorded histories over a spread of seeds and exploration settings
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let values = Array2::from_shape_fn((600, 12), |_| rng.random_range(0.0..1.0));
    let names = (0..12).map(|j| format!("s{j}")).collect();
    let data = SensorDataset::new(names, values).expect("dataset");
    let partition = partition_blocks(&data, 150).expect("partition");
    for seed in 0..6u64 {
        let solutions = kmeans::cluster_all_blocks(&data, &partition, 3, seed).expect("blocks");
        let params = Fac2tParams {
            iterations: 50,
            n_ants: 8,
            beta: 4,
            tau: 2, // frequent uniform exploration stresses elitism
            ..Fac2tParams::default()
        };
        let (_, history) =
            fac2t::run_fac2t(&data, &partition, &solutions, &params, seed).expect("run");
        assert!(history.is_monotone(), "seed {seed} produced a dip");
        assert_eq!(history.rows.len() as u64, params.iterations + 1);
    }
    println!("ACCEPTANCE 4 PASS: best-ant metric non-decreasing in every run");
}

#[test]
fn criterion_05_cluster_count_preservation() {
    // m close to n forces singleton swaps on nearly every move; mutate_ant
    // validates the invariant internally and panics on violation
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let n = 12;
    let m = 10;
    let assignment: Vec<usize> = (0..n).map(|i| i % m).collect();
    let ant = ClusteringSolution::new(assignment, m).expect("valid");
    let mut pheromone = fac2t::PheromoneTable::zeros(n);
    pheromone.deposit(&ant, 1.0);
    let mut current = ant;
    for iter in 1..=5000u64 {
        current = fac2t::mutate_ant(&current, &pheromone, 4, iter, 7, &mut rng);
        assert_eq!(current.m(), m);
        assert!(current.counts().iter().all(|&c| c > 0));
    }

    // and through a full run with ants at the singleton-heavy regime
    let values = Array2::from_shape_fn((300, n), |_| rng.random_range(0.0..1.0));
    let names = (0..n).map(|j| format!("s{j}")).collect();
    let data = SensorDataset::new(names, values).expect("dataset");
    let partition = partition_blocks(&data, 100).expect("partition");
    let solutions = kmeans::cluster_all_blocks(&data, &partition, m, 1).expect("blocks");
    let params = Fac2tParams {
        iterations: 60,
        n_ants: 6,
        beta: 5,
        ..Fac2tParams::default()
    };
    let (best, _) = fac2t::run_fac2t(&data, &partition, &solutions, &params, 2).expect("run");
    assert_eq!(best.m(), m);
    assert!(best.counts().iter().all(|&c| c > 0));
    println!("ACCEPTANCE 5 PASS: every mutation preserved all M nonempty clusters");
}

/// Representatives X in [0,1]; virtual sensors are noisy linear maps of X.
fn linear_regression_task(
    n: usize,
    m: usize,
    v: usize,
    noise_sigma: f64,
    seed: u64,
) -> (Array2<f64>, Array2<f64>) {
    use rand_distr::StandardNormal;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..1.0));
    // row-stochastic-ish mixing keeps targets near [0, 1]
    let mut a = Array2::from_shape_fn((m, v), |_| rng.random_range(0.0..1.0));
    for mut col in a.columns_mut() {
        let s: f64 = col.sum();
        col.mapv_inplace(|w| w / s);
    }
    let noise = Array2::from_shape_fn((n, v), |_| {
        let z: f64 = rng.sample(StandardNormal);
        z * noise_sigma
    });
    let y = x.dot(&a) + noise;
    (x, y)
}

#[test]
fn criterion_06_regression_sanity() {
    let (x, y) = linear_regression_task(2000, 4, 6, 0.05, 606);
    let (x_train, x_test) = (
        x.slice(ndarray::s![..1600, ..]),
        x.slice(ndarray::s![1600.., ..]),
    );
    let (y_train, y_test) = (
        y.slice(ndarray::s![..1600, ..]),
        y.slice(ndarray::s![1600.., ..]),
    );

    let lbfr = lbfr_fit(x_train, y_train, regress::DEFAULT_RIDGE).expect("lbfr");
    let lbfr_mse = mse(lbfr.predict(x_test).expect("predict").view(), y_test).expect("mse");

    let mlp_cfg = MlpConfig {
        hidden: vec![50; 10],
        adam: AdamParams {
            epochs: 200,
            ..AdamParams::default()
        },
    };
    let (mlp, _) = mlp_fit(x_train, y_train, &mlp_cfg, 607).expect("mlp");
    let mlp_mse = mse(mlp.predict(x_test).expect("predict").view(), y_test).expect("mse");

    let svr = regress::svr_fit_multi(x_train, y_train, &SvrParams::default(), 608).expect("svr");
    let svr_mse = mse(svr.predict(x_test).expect("predict").view(), y_test).expect("mse");

    println!("ACCEPTANCE 6: lbfr {lbfr_mse:.6} mlp {mlp_mse:.6} svr {svr_mse:.6}");
    assert!(lbfr_mse <= 0.01, "lbfr mse {lbfr_mse}");
    assert!(mlp_mse <= 0.01, "mlp mse {mlp_mse}");
    assert!(svr_mse <= 0.01, "svr mse {svr_mse}");
    assert!(
        mlp_mse <= lbfr_mse + 0.005,
        "mlp {mlp_mse} not within 0.005 of lbfr {lbfr_mse}"
    );
    println!("ACCEPTANCE 6 PASS: all regressors at or below 0.01 test MSE");
}

#[test]
#[allow(clippy::needless_range_loop)]
fn criterion_07_gradient_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let x = Array2::from_shape_fn((10, 3), |_| rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((10, 2), |_| rng.random_range(-1.0..1.0));
    let mut model = MlpModel::xavier(&[3, 5, 5, 2], &mut rng);
    let (_, w_grads, b_grads) = regress::mlp::loss_and_gradients(&model, x.view(), y.view());

    let h = 1e-5;
    let mut max_rel = 0.0f64;
    for l in 0..model.weights.len() {
        let (rows, cols) = model.weights[l].dim();
        for i in 0..rows {
            for j in 0..cols {
                let orig = model.weights[l][[i, j]];
                model.weights[l][[i, j]] = orig + h;
                let (lp, _, _) = regress::mlp::loss_and_gradients(&model, x.view(), y.view());
                model.weights[l][[i, j]] = orig - h;
                let (lm, _, _) = regress::mlp::loss_and_gradients(&model, x.view(), y.view());
                model.weights[l][[i, j]] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = w_grads[l][[i, j]];
                max_rel = max_rel.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6));
            }
        }
        for j in 0..model.biases[l].len() {
            let orig = model.biases[l][j];
            model.biases[l][j] = orig + h;
            let (lp, _, _) = regress::mlp::loss_and_gradients(&model, x.view(), y.view());
            model.biases[l][j] = orig - h;
            let (lm, _, _) = regress::mlp::loss_and_gradients(&model, x.view(), y.view());
            model.biases[l][j] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let an = b_grads[l][j];
            max_rel = max_rel.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6));
        }
    }
    assert!(max_rel <= 1e-4, "max relative gradient error {max_rel}");
    println!("ACCEPTANCE 7 PASS: analytic gradients within {max_rel:.2e} of finite differences");
}

#[test]
fn criterion_08_oracle_equivalences() {
    // (a) LBFR closed form vs gradient descent run to convergence
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let x = Array2::from_shape_fn((20, 3), |_| rng.random_range(0.0..1.0));
    let y = Array2::from_shape_fn((20, 2), |_| rng.random_range(-1.0..1.0));
    let model = lbfr_fit(x.view(), y.view(), 1e-4).expect("lbfr");
    let phi = regress::lbfr::design(x.view(), &model.center, model.width);
    let mut a = phi.t().dot(&phi);
    for i in 0..a.nrows() {
        a[[i, i]] += model.lambda;
    }
    let rhs = phi.t().dot(&y);
    let lmax = (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[[i, j]].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let step = 0.9 / lmax;
    let mut w = Array2::<f64>::zeros((phi.ncols(), y.ncols()));
    for _ in 0..300_000 {
        let grad = &a.dot(&w) - &rhs;
        if grad.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-13 {
            break;
        }
        w = &w - &(&grad * step);
    }
    let lbfr_diff = model
        .weights
        .iter()
        .zip(w.iter())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0f64, f64::max);
    assert!(lbfr_diff <= 1e-6, "lbfr weight difference {lbfr_diff}");

    // (b) K-Means restarts attain the exhaustive-partition optimum
    for (n, m) in [(6usize, 2usize), (7, 3), (8, 3)] {
        let points = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let mut optimum = f64::INFINITY;
        for code in 0..m.pow(n as u32) {
            let mut asg = vec![0usize; n];
            let mut c = code;
            for slot in asg.iter_mut() {
                *slot = c % m;
                c /= m;
            }
            let mut used = vec![false; m];
            for &l in &asg {
                used[l] = true;
            }
            if !used.iter().all(|&u| u) {
                continue;
            }
            let sol = ClusteringSolution::new(asg, m).expect("valid");
            optimum = optimum.min(kmeans::inertia(points.view(), &sol));
        }
        let found = (0..10)
            .map(|s| {
                let sol = kmeans::kmeans(points.view(), m, s, 300, 1e-6).expect("kmeans");
                kmeans::inertia(points.view(), &sol)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(
            (found - optimum).abs() <= 1e-9 * (1.0 + optimum),
            "n={n} m={m}: {found} vs optimum {optimum}"
        );
    }

    // (c) ARI vs direct pair enumeration, exact
    for _ in 0..30 {
        let n = rng.random_range(5..12);
        let asg_a: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let asg_b: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let (a, b) = match (
            ClusteringSolution::new(asg_a, 3),
            ClusteringSolution::new(asg_b, 3),
        ) {
            (Ok(a), Ok(b)) => (a, b),
            _ => continue,
        };
        let (mut n11, mut n00, mut n10, mut n01) = (0f64, 0f64, 0f64, 0f64);
        for i in 0..n {
            for j in (i + 1)..n {
                match (
                    a.assignment()[i] == a.assignment()[j],
                    b.assignment()[i] == b.assignment()[j],
                ) {
                    (true, true) => n11 += 1.0,
                    (false, false) => n00 += 1.0,
                    (true, false) => n10 += 1.0,
                    (false, true) => n01 += 1.0,
                }
            }
        }
        let den = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00);
        let pairs = if den == 0.0 {
            1.0
        } else {
            2.0 * (n11 * n00 - n10 * n01) / den
        };
        let ours = adjusted_rand_index(&a, &b).expect("ari");
        assert!((ours - pairs).abs() <= 1e-12, "{ours} vs {pairs}");
    }

    // (d) SVR objective within 1% of a dense grid search on 1-D problems
    for seed in [1u64, 2, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(880 + seed);
        let x = Array2::from_shape_fn((6, 1), |_| rng.random_range(0.0..1.0));
        let y = Array1::from_shape_fn(6, |i| 1.2 * x[[i, 0]] - 0.3 + rng.random_range(-0.15..0.15));
        let params = SvrParams::default();
        let model = svr_fit(x.view(), y.view(), &params, seed).expect("svr");
        let ours = regress::svr::svr_objective(
            x.view(),
            y.view(),
            &model.weights,
            model.bias,
            params.c,
            params.eps,
        );
        let mut grid_best = f64::INFINITY;
        let mut wv = -2.0;
        while wv <= 2.0 {
            let mut bv = -2.0;
            while bv <= 2.0 {
                let obj = regress::svr::svr_objective(
                    x.view(),
                    y.view(),
                    &ndarray::array![wv],
                    bv,
                    params.c,
                    params.eps,
                );
                grid_best = grid_best.min(obj);
                bv += 0.002;
            }
            wv += 0.002;
        }
        assert!(
            ours <= grid_best * 1.01 + 1e-12,
            "seed {seed}: sgd {ours} vs grid {grid_best}"
        );
    }
    println!("ACCEPTANCE 8 PASS: closed forms match their independent oracles");
}

/// Reference-value reproduction is conditional on the external pump
/// dataset. Point VIRTSENSE_PUMP_CSV at the cleaned numeric sensor CSV and
/// run with `cargo test -p virtsense-cli --test acceptance -- --ignored`.
#[test]
#[ignore = "requires the external pump dataset (set VIRTSENSE_PUMP_CSV)"]
fn criterion_09_reference_mse_conditional() {
    let path = std::env::var("VIRTSENSE_PUMP_CSV")
        .expect("set VIRTSENSE_PUMP_CSV to the pump dataset CSV");
    let reference_ann_mse = [(7usize, 0.0053111f64), (12, 0.0030742), (17, 0.0017912)];

    let cfg = PipelineConfig {
        input: Some(path.into()),
        cluster_counts: reference_ann_mse.iter().map(|&(m, _)| m).collect(),
        regressors: vec![regress::RegressorKind::Mlp],
        seed: 909,
        ..PipelineConfig::default()
    };
    let dir = tempfile::tempdir().expect("tempdir");
    let report = pipeline::run_pipeline(&cfg, dir.path()).expect("pipeline");
    for (m, reference) in reference_ann_mse {
        let row = report
            .rows
            .iter()
            .find(|r| r.m == m)
            .expect("row for configured cluster count");
        let ours = row.mse_mlp.expect("mlp mse recorded");
        assert!(
            ours <= 2.0 * reference,
            "m={m}: ANN test MSE {ours} exceeds twice the reference {reference}"
        );
        println!("ACCEPTANCE 9 (m={m}): ANN MSE {ours} vs reference {reference}");
    }
    println!("ACCEPTANCE 9 PASS: ANN MSE within 2x of the reference values");
}

#[test]
fn criterion_10_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_virtsense");
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{
            "block_size": 150,
            "regressors": ["lbfr"],
            "mse_threshold": 100.0,
            "fac2t": {"iterations": 30, "n_ants": 6, "beta": 3},
            "synth": {"n_sensors": 18, "n_clusters": 3, "n_readings": 450},
            "experiment": {"n_datasets": 2, "cluster_counts": [3], "corruption_fraction": 0.3}
        }"#,
    )
    .expect("write config");

    let run = |sub: &str, extra: &[&str], out: &Path| {
        let status = Command::new(bin)
            .arg(sub)
            .args(extra)
            .arg("--config")
            .arg(&cfg_path)
            .arg("--seed")
            .arg("33")
            .arg("--out")
            .arg(out)
            .status()
            .expect("spawn virtsense");
        assert!(status.success(), "{sub} exited nonzero");
    };

    // exp-a twice
    let (a1, a2) = (dir.path().join("a1"), dir.path().join("a2"));
    run("exp-a", &[], &a1);
    run("exp-a", &[], &a2);
    let r1 = std::fs::read(a1.join("report.csv")).expect("report 1");
    let r2 = std::fs::read(a2.join("report.csv")).expect("report 2");
    assert_eq!(r1, r2, "exp-a report.csv differs between invocations");

    // pipeline twice on a synthesized CSV
    let synth_out = dir.path().join("synth");
    run("synth", &[], &synth_out);
    let data = synth_out.join("data.csv");
    let (p1, p2) = (dir.path().join("p1"), dir.path().join("p2"));
    run("pipeline", &["--input", data.to_str().unwrap()], &p1);
    run("pipeline", &["--input", data.to_str().unwrap()], &p2);
    let r1 = std::fs::read(p1.join("report.csv")).expect("pipeline report 1");
    let r2 = std::fs::read(p2.join("report.csv")).expect("pipeline report 2");
    assert_eq!(r1, r2, "pipeline report.csv differs between invocations");

    println!("ACCEPTANCE 10 PASS: repeated CLI runs are byte-identical");
}
