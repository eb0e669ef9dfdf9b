//! End-to-end tests that drive the compiled binary the way a batch user
//! would: synthesize, train, forecast, evaluate, score events, plot, and
//! check the documented determinism and exit-code contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ordcast_cli::artifacts::{load_dataset, load_forecast, write_dataset, DatasetMeta, SplitMeta, StandardizeMeta, DATASET_META_SCHEMA};
use ordcast_cli::config::ExperimentConfig;
use ordcast_core::seq2seq::{validation_loss, Seq2SeqModel};

fn ordcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ordcast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = ordcast(args);
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(path: &Path, body: &serde_json::Value) {
    std::fs::write(path, serde_json::to_string_pretty(body).unwrap()).unwrap();
}

fn base_config(out_dir: &Path) -> serde_json::Value {
    serde_json::json!({
        "schema": "ordcast-experiment-v1",
        "dataset": { "system": "mackey-glass", "n": 1500, "seed": 11, "noise_std": 0.001 },
        "model": "ar",
        "lookback": 16,
        "horizon": 80,
        "n_samples": 24,
        "seed": 5,
        "output_dir": out_dir.display().to_string(),
        "hyper": { "ar_order": [4, 8, 16], "gp_subset": 100 }
    })
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_is_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    let mut cfg = base_config(&tmp.path().join("a"));
    cfg["dataset"] = serde_json::json!({ "system": "logistic", "n": 400, "seed": 3 });
    write_config(&cfg_path, &cfg);

    run_ok(&["generate", "--config", cfg_path.to_str().unwrap()]);
    let dir_b = tmp.path().join("b");
    run_ok(&[
        "generate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--output-dir",
        dir_b.to_str().unwrap(),
    ]);

    for name in ["logistic.csv", "logistic.meta.json"] {
        let a = std::fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }

    let data = load_dataset(&tmp.path().join("a/logistic.csv")).unwrap();
    assert_eq!(data.series.len(), 400);
    assert_eq!(
        data.train().len() + data.validation().len() + data.test().len(),
        400
    );
}

#[test]
fn unknown_system_exits_nonzero_and_lists_valid_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    let mut cfg = base_config(&tmp.path().join("out"));
    cfg["dataset"] = serde_json::json!({ "system": "sinewave", "seed": 1 });
    write_config(&cfg_path, &cfg);

    let out = ordcast(&["generate", "--config", cfg_path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sinewave"), "stderr names the bad id: {stderr}");
    assert!(stderr.contains("logistic"), "stderr lists valid ids: {stderr}");
}

#[test]
fn train_selects_the_lowest_validation_loss_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let cfg_path = tmp.path().join("cfg.json");
    write_config(&cfg_path, &base_config(&out_dir));

    run_ok(&["train", "--config", cfg_path.to_str().unwrap()]);
    let log = read_json(&out_dir.join("train_log.json"));
    assert_eq!(log["schema"], "ordcast-train-log-v1");
    let cells = log["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 3, "one cell per autoregression order");

    let mut best = (usize::MAX, f64::INFINITY);
    for (i, cell) in cells.iter().enumerate() {
        assert_eq!(cell["status"], "ok");
        let v = cell["val_loss"].as_f64().unwrap();
        assert!(v.is_finite());
        if v < best.1 {
            best = (i, v);
        }
    }
    assert_eq!(log["winner_cell"].as_u64().unwrap() as usize, best.0);
    assert_eq!(log["winner_val_loss"].as_f64().unwrap(), best.1);
}

#[test]
fn reloaded_checkpoint_reproduces_the_logged_validation_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let cfg_path = tmp.path().join("cfg.json");
    let mut cfg = base_config(&out_dir);
    cfg["dataset"] = serde_json::json!({ "system": "logistic", "n": 900, "seed": 3 });
    cfg["model"] = "mordred".into();
    cfg["lookback"] = 12.into();
    cfg["hyper"] = serde_json::json!({ "n_units": 16, "p_drop": 0.25, "lambda_l2": 1e-7, "bins": 24 });
    cfg["train"] = serde_json::json!({ "max_epochs": 2, "batch_size": 64, "patience": 2 });
    write_config(&cfg_path, &cfg);

    run_ok(&["train", "--config", cfg_path.to_str().unwrap()]);
    let log = read_json(&out_dir.join("train_log.json"));
    let logged = log["winner_val_loss"].as_f64().unwrap();

    let mut file = std::fs::File::open(out_dir.join("model.ckpt")).unwrap();
    let ckpt = ordcast_core::checkpoint::Checkpoint::read_from(&mut file).unwrap();
    let model = Seq2SeqModel::from_checkpoint(&ckpt).unwrap();
    let data = load_dataset(&out_dir.join("logistic.csv")).unwrap();
    let recomputed = validation_loss(&model, data.validation(), 64).unwrap();
    assert!(
        (recomputed - logged).abs() < 1e-12,
        "recomputed {recomputed} vs logged {logged}"
    );
}

#[test]
fn forecast_artifact_is_consistent_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let cfg_path = tmp.path().join("cfg.json");
    let mut cfg = base_config(&out_dir);
    cfg["dataset"] = serde_json::json!({ "system": "logistic", "n": 900, "seed": 3 });
    cfg["model"] = "mordred".into();
    cfg["lookback"] = 12.into();
    cfg["horizon"] = 50.into();
    cfg["n_samples"] = 10.into();
    cfg["hyper"] = serde_json::json!({ "n_units": 16, "p_drop": 0.25, "lambda_l2": 1e-7, "bins": 24 });
    cfg["train"] = serde_json::json!({ "max_epochs": 2, "batch_size": 64, "patience": 2 });
    write_config(&cfg_path, &cfg);

    run_ok(&["train", "--config", cfg_path.to_str().unwrap()]);
    run_ok(&["forecast", "--config", cfg_path.to_str().unwrap()]);

    let artifact = load_forecast(&out_dir).unwrap();
    assert_eq!(artifact.meta.density, "categorical");
    assert_eq!(artifact.densities.horizon(), 50);
    assert_eq!(artifact.trajectories.len(), 10);

    // Categorical rows sum to one.
    let text = std::fs::read_to_string(out_dir.join("forecast.csv")).unwrap();
    for line in text.lines().skip(2) {
        let sum: f64 = line.split(',').skip(1).map(|f| f.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9, "row sums to {sum}");
    }

    // The stored median curve matches a recompute from the densities.
    let quantiles = std::fs::read_to_string(out_dir.join("quantiles.csv")).unwrap();
    for (k, line) in quantiles.lines().skip(2).enumerate() {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        let median = artifact.densities.quantile_at(k, 0.5).unwrap();
        assert_eq!(fields[3], median, "median at step {k}");
    }

    // Byte determinism across reruns.
    let keep: Vec<(PathBuf, Vec<u8>)> = ["forecast.csv", "quantiles.csv", "trajectories.csv", "metadata.json"]
        .iter()
        .map(|n| {
            let p = out_dir.join(n);
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    run_ok(&["forecast", "--config", cfg_path.to_str().unwrap()]);
    for (path, before) in keep {
        let after = std::fs::read(&path).unwrap();
        assert_eq!(before, after, "{} differs between reruns", path.display());
    }

    // A different seed produces different trajectories.
    run_ok(&[
        "forecast",
        "--config",
        cfg_path.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    let reseeded = std::fs::read(out_dir.join("trajectories.csv")).unwrap();
    assert_ne!(
        reseeded,
        std::fs::read(out_dir.join("forecast.csv")).unwrap(),
        "sanity: files differ"
    );
    let original = load_forecast(&out_dir).unwrap();
    assert_eq!(original.meta.seed, 99);
}

#[test]
fn evaluate_and_events_produce_full_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    let ar_dir = tmp.path().join("ar");
    let gp_dir = tmp.path().join("gp");

    let mut cfg = base_config(&ar_dir);
    cfg["horizon"] = 60.into();
    write_config(&cfg_path, &cfg);
    run_ok(&["train", "--config", cfg_path.to_str().unwrap()]);
    run_ok(&["forecast", "--config", cfg_path.to_str().unwrap()]);

    let mut cfg_gp = base_config(&gp_dir);
    cfg_gp["horizon"] = 60.into();
    cfg_gp["model"] = "gp-mc".into();
    write_config(&cfg_path, &cfg_gp);
    run_ok(&["train", "--config", cfg_path.to_str().unwrap()]);
    run_ok(&["forecast", "--config", cfg_path.to_str().unwrap()]);

    let eval_dir = tmp.path().join("eval");
    run_ok(&[
        "evaluate",
        "--artifact",
        ar_dir.to_str().unwrap(),
        "--artifact",
        gp_dir.to_str().unwrap(),
        "--output-dir",
        eval_dir.to_str().unwrap(),
    ]);
    let metrics = std::fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().collect();
    assert_eq!(rows.len(), 3, "header plus one row per artifact");
    assert!(rows[1].starts_with("ar,mackey-glass,"));
    assert!(rows[2].starts_with("gp-mc,mackey-glass,"));

    let tables = read_json(&eval_dir.join("rank_tables.json"));
    assert_eq!(tables["datasets"], serde_json::json!(["mackey-glass"]));
    assert_eq!(tables["metrics"].as_array().unwrap().len(), 8);

    let stdout = run_ok(&[
        "events",
        "--artifact",
        ar_dir.to_str().unwrap(),
        "--artifact",
        gp_dir.to_str().unwrap(),
        "--output-dir",
        eval_dir.to_str().unwrap(),
        "--min-distance",
        "10",
    ]);
    assert!(stdout.contains("# BEST"), "events table has a best-count row:\n{stdout}");
    assert!(ar_dir.join("timing_density.csv").exists());
    assert!(gp_dir.join("timing_density.csv").exists());

    let table = read_json(&eval_dir.join("timing_nll.json"));
    assert_eq!(table["schema"], "ordcast-timing-nll-v1");
    let best_count: Vec<u64> = table["best_count"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(best_count.iter().sum::<u64>(), 1, "one dataset, one winner");

    // Rerunning events reproduces the table byte for byte.
    let before = std::fs::read(eval_dir.join("timing_nll.json")).unwrap();
    run_ok(&[
        "events",
        "--artifact",
        ar_dir.to_str().unwrap(),
        "--artifact",
        gp_dir.to_str().unwrap(),
        "--output-dir",
        eval_dir.to_str().unwrap(),
        "--min-distance",
        "10",
    ]);
    assert_eq!(before, std::fs::read(eval_dir.join("timing_nll.json")).unwrap());
}

#[test]
fn plot_emits_wellformed_svg_with_a_full_band() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let cfg_path = tmp.path().join("cfg.json");
    let mut cfg = base_config(&out_dir);
    cfg["horizon"] = 40.into();
    write_config(&cfg_path, &cfg);
    run_ok(&["train", "--config", cfg_path.to_str().unwrap()]);
    run_ok(&["forecast", "--config", cfg_path.to_str().unwrap()]);

    let svg_path = tmp.path().join("fan.svg");
    run_ok(&[
        "plot",
        "--artifact",
        out_dir.to_str().unwrap(),
        "--output",
        svg_path.to_str().unwrap(),
    ]);

    let text = std::fs::read_to_string(&svg_path).unwrap();
    let doc = roxmltree::Document::parse(&text).expect("well-formed XML");
    let band = doc
        .descendants()
        .find(|n| n.attribute("id") == Some("band"))
        .expect("band polygon present");
    let points = band.attribute("points").unwrap();
    assert_eq!(points.split(' ').count(), 2 * 40, "two vertices per step");
    for id in ["median", "truth"] {
        assert!(
            doc.descendants().any(|n| n.attribute("id") == Some(id)),
            "{id} curve present"
        );
    }
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(ordcast(&["--help"]).status.code(), Some(0));
    assert_eq!(ordcast(&["train"]).status.code(), Some(1), "missing --config");
    assert_eq!(ordcast(&["bogus"]).status.code(), Some(1));

    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    std::fs::write(&cfg_path, "{ not json").unwrap();
    assert_eq!(
        ordcast(&["train", "--config", cfg_path.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn numerical_failures_exit_two() {
    // A regression fit against astronomically large targets overflows the
    // squared-error loss in the first epoch, which must surface as the
    // numerical-failure exit code rather than a usage error.
    let tmp = tempfile::tempdir().unwrap();
    let n = 120;
    let series: Vec<f64> = (0..n).map(|i| ((i % 7) as f64 - 3.0) * 1e200).collect();
    let meta = DatasetMeta {
        schema: DATASET_META_SCHEMA.into(),
        dataset_id: "huge".into(),
        seed: 0,
        system: None,
        detrend: None,
        noise_std: 0.0,
        split: SplitMeta {
            train_end: 84,
            val_end: 102,
            n,
        },
        standardize: StandardizeMeta { mean: 0.0, std: 1.0 },
    };
    let csv = write_dataset(tmp.path(), &series, &meta).unwrap();

    let out_dir = tmp.path().join("run");
    let cfg = serde_json::json!({
        "schema": "ordcast-experiment-v1",
        "dataset": csv.display().to_string(),
        "model": "seq2seq-reg",
        "lookback": 8,
        "horizon": 10,
        "n_samples": 4,
        "seed": 1,
        "output_dir": out_dir.display().to_string(),
        "hyper": { "n_units": 8, "p_drop": 0.25, "lambda_l2": 0.0 },
        "train": { "max_epochs": 1, "batch_size": 32, "patience": 1 }
    });
    let cfg_path = tmp.path().join("cfg.json");
    write_config(&cfg_path, &cfg);

    let out = ordcast(&["train", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn config_loader_applies_documented_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    write_config(
        &cfg_path,
        &serde_json::json!({
            "schema": "ordcast-experiment-v1",
            "dataset": { "system": "lorenz", "seed": 1 },
            "model": "mordred",
            "seed": 7,
            "output_dir": "out"
        }),
    );
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.lookback, 100);
    assert_eq!(cfg.horizon, 1000);
    assert_eq!(cfg.n_samples, 100);
    assert_eq!(cfg.hyper.n_units.values(), vec![64, 128, 256, 320]);
    assert_eq!(cfg.hyper.p_drop.values(), vec![0.25, 0.35, 0.5]);
    assert_eq!(cfg.hyper.lambda_l2.values(), vec![1e-6, 1e-7, 1e-8]);
    assert_eq!(cfg.hyper.ar_order.values(), vec![16, 32, 64]);
    assert_eq!(cfg.hyper.bins.values(), vec![300]);
    assert_eq!(cfg.train.max_epochs, 50);
    assert_eq!(cfg.train.batch_size, 256);
    assert_eq!(cfg.train.patience, 5);
}
