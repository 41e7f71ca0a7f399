use std::fs;
use std::path::{Path, PathBuf};

use ris_chanest::channel_sim::Split;
use ris_chanest::models::{decode_checkpoint, encode_checkpoint, Model};
use ris_chanest_cli::commands::{self, MANIFEST};
use ris_chanest_cli::{exit, parse_run_config, run, RunConfig};
use serde_json::{json, Value};

fn tiny(out: &Path) -> Value {
    json!({
        "seed": 3,
        "out_dir": out,
        "geometry": {"n_b": 4, "n_u": 2, "ris": {"n_h": 2, "n_v": 2, "spacing_over_lambda": 0.5}},
        "dataset": {"k_users": 1, "train": 8, "val": 4, "test": 4, "snr_db": {"min_db": 10.0, "max_db": 10.0}},
        "model": {"kind": "mrdn", "n_r": 1, "b_layers": 1, "features": 2},
        "train": {"epochs": 2, "batch_size": 4},
        "bench": {"snr_db": [10.0], "n_samples": 4, "batch": 4}
    })
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("ris-chanest").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_writes_splits_and_manifest_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &tiny(&tmp.path().join("a")));
    assert_eq!(cli(&["gen-data", s(&cfg)]), exit::OK);
    let data = tmp.path().join("a/data");
    let manifest: Value = serde_json::from_str(&fs::read_to_string(data.join(MANIFEST)).unwrap()).unwrap();
    let counts: Vec<u64> = manifest["splits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["n_samples"].as_u64().unwrap())
        .collect();
    assert_eq!(counts, [8, 4, 4]);
    assert!(tmp.path().join("a/resolved_config.json").exists());

    assert_eq!(cli(&["gen-data", s(&cfg), "--out-dir", s(&tmp.path().join("b"))]), exit::OK);
    for f in ["train.bin", "val.bin", "test.bin", MANIFEST] {
        let a = fs::read(data.join(f)).unwrap();
        let b = fs::read(tmp.path().join("b/data").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}

#[test]
fn zero_learning_rate_keeps_the_initial_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = tiny(&tmp.path().join("run"));
    v["train"]["learning_rate"] = json!(0.0);
    let cfg_path = write_config(tmp.path(), "c.json", &v);
    assert_eq!(cli(&["gen-data", s(&cfg_path)]), exit::OK);
    assert_eq!(cli(&["train", s(&cfg_path)]), exit::OK);
    let cfg: RunConfig = serde_json::from_value(v).unwrap();
    let init = Model::init(&cfg.model, commands::model_seed(&cfg)).unwrap();
    let expected = encode_checkpoint(&init, cfg.seed, Some(&cfg.geometry)).unwrap();
    assert!(fs::read(tmp.path().join("run/model.ckpt")).unwrap() == expected);
}

#[test]
fn train_writes_one_metrics_row_per_iteration() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), "c.json", &tiny(&tmp.path().join("run")));
    assert_eq!(cli(&["gen-data", s(&cfg_path)]), exit::OK);
    assert_eq!(cli(&["train", s(&cfg_path)]), exit::OK);
    let csv = fs::read_to_string(tmp.path().join("run/metrics.csv")).unwrap();
    // 8 samples in batches of 4 for 2 epochs, plus the header
    assert_eq!(csv.lines().count(), 1 + 4);
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/train_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["iterations"], 4);
    assert!(summary["final_val_nmse_db"].as_f64().unwrap().is_finite());
    let (_, model) = decode_checkpoint(&fs::read(tmp.path().join("run/model.ckpt")).unwrap()).unwrap();
    assert_eq!(model.name(), "mrdn");
}

#[test]
fn periodic_checkpoints_are_written() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = tiny(&tmp.path().join("run"));
    v["train"]["checkpoint_every"] = json!(1);
    let cfg_path = write_config(tmp.path(), "c.json", &v);
    assert_eq!(cli(&["gen-data", s(&cfg_path)]), exit::OK);
    assert_eq!(cli(&["train", s(&cfg_path)]), exit::OK);
    let dir = tmp.path().join("run/checkpoints");
    assert!(dir.join("epoch_0001.ckpt").exists());
    assert_eq!(
        fs::read(dir.join("epoch_0002.ckpt")).unwrap(),
        fs::read(tmp.path().join("run/model.ckpt")).unwrap()
    );
}

#[test]
fn rerun_from_resolved_config_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = tiny(&tmp.path().join("first"));
    v["model"] = json!({"kind": "gan_cbd", "generator": {"b_c": 1, "k_s": 1, "b_blocks": 1, "features": 2}, "disc_layers": 1, "disc_features": 2});
    let cfg_path = write_config(tmp.path(), "c.json", &v);
    for cmd in ["gen-data", "train"] {
        assert_eq!(cli(&[cmd, s(&cfg_path)]), exit::OK);
    }
    let ckpt = tmp.path().join("first/model.ckpt");
    assert_eq!(cli(&["bench", s(&cfg_path), s(&ckpt)]), exit::OK);

    let resolved = tmp.path().join("first/resolved_config.json");
    let mut again: Value = serde_json::from_str(&fs::read_to_string(&resolved).unwrap()).unwrap();
    again["out_dir"] = json!(tmp.path().join("second"));
    let again_path = write_config(tmp.path(), "again.json", &again);
    for cmd in ["gen-data", "train"] {
        assert_eq!(cli(&[cmd, s(&again_path)]), exit::OK);
    }
    assert_eq!(cli(&["bench", s(&again_path), s(&tmp.path().join("second/model.ckpt"))]), exit::OK);
    for f in ["data/train.bin", "data/val.bin", "data/test.bin", "metrics.csv", "model.ckpt", "bench.csv", "bench.json"] {
        let a = fs::read(tmp.path().join("first").join(f)).unwrap();
        let b = fs::read(tmp.path().join("second").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}

#[test]
fn unknown_model_kind_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = tiny(&tmp.path().join("run"));
    v["model"] = json!({"kind": "unet"});
    let cfg = write_config(tmp.path(), "c.json", &v);
    assert_eq!(cli(&["train", s(&cfg)]), exit::CONFIG);
    let mut v = tiny(&tmp.path().join("run"));
    v["dataset"]["bogus"] = json!(1);
    let cfg = write_config(tmp.path(), "c.json", &v);
    assert_eq!(cli(&["gen-data", s(&cfg)]), exit::CONFIG);
    assert_eq!(cli(&["frobnicate"]), exit::CONFIG);
}

#[test]
fn missing_inputs_are_io_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["train", s(&tmp.path().join("nope.json"))]), exit::IO);
    let cfg = write_config(tmp.path(), "c.json", &tiny(&tmp.path().join("run")));
    assert_eq!(cli(&["train", s(&cfg)]), exit::IO);
}

#[test]
fn training_on_another_geometry_is_a_load_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &tiny(&tmp.path().join("run")));
    assert_eq!(cli(&["gen-data", s(&cfg)]), exit::OK);
    let mut v = tiny(&tmp.path().join("run"));
    v["geometry"]["n_b"] = json!(6);
    let other = write_config(tmp.path(), "d.json", &v);
    assert_eq!(cli(&["train", s(&other)]), exit::LOAD);
}

#[test]
fn divergence_exits_with_numeric_code() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = tiny(&tmp.path().join("run"));
    v["train"]["learning_rate"] = json!(1e300);
    v["train"]["clip_norm"] = Value::Null;
    let cfg = write_config(tmp.path(), "c.json", &v);
    assert_eq!(cli(&["gen-data", s(&cfg)]), exit::OK);
    assert_eq!(cli(&["train", s(&cfg)]), exit::NUMERIC);
}

#[test]
fn check_grad_exit_codes() {
    assert_eq!(cli(&["check-grad", "--model", "linear"]), exit::OK);
    assert_eq!(cli(&["check-grad", "--model", "corrupted_linear"]), exit::GRAD_CHECK_FAILED);
    assert_eq!(cli(&["check-grad", "--model", "resnet"]), exit::CONFIG);
}

#[test]
fn check_grad_report_file() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["check-grad", "--model", "mrdn", "--out-dir", s(tmp.path())]), exit::OK);
    let v: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("grad_check.json")).unwrap()).unwrap();
    assert_eq!(v[0]["model"], "mrdn");
    assert_eq!(v[0]["passed"], true);
}

#[test]
fn bench_with_only_ls_and_one_snr_is_a_single_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &tiny(&tmp.path().join("run")));
    assert_eq!(cli(&["bench", s(&cfg)]), exit::OK);
    let csv = fs::read_to_string(tmp.path().join("run/bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "estimator,snr_db,nmse_db,n_samples,mean_infer_s");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("ls,10,"));
    let json: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("run/bench.json")).unwrap()).unwrap();
    let cfg = parse_run_config(&fs::read_to_string(tmp.path().join("run/resolved_config.json")).unwrap()).unwrap();
    assert_eq!(json["fingerprint"], cfg.hash());
}

#[test]
fn bench_rejects_checkpoint_of_another_geometry() {
    let tmp = tempfile::tempdir().unwrap();
    let v = tiny(&tmp.path().join("run"));
    let cfg: RunConfig = serde_json::from_value(v.clone()).unwrap();
    let mut other = cfg.geometry.clone();
    other.n_u = 3;
    let model = Model::init(&cfg.model, 1).unwrap();
    let ckpt = tmp.path().join("m.ckpt");
    fs::write(&ckpt, encode_checkpoint(&model, 1, Some(&other)).unwrap()).unwrap();
    let cfg_path = write_config(tmp.path(), "c.json", &v);
    let err = commands::bench(&cfg, &[ckpt.clone()], &[]).err().unwrap();
    let msg = err.to_string();
    assert!(msg.contains(&ris_chanest_cli::config::geometry_fingerprint(&other)), "{msg}");
    assert!(msg.contains(&ris_chanest_cli::config::geometry_fingerprint(&cfg.geometry)), "{msg}");
    assert_eq!(cli(&["bench", s(&cfg_path), s(&ckpt)]), exit::LOAD);
    fs::write(&ckpt, b"RISCKPT\x01garbage").unwrap();
    assert_eq!(cli(&["bench", s(&cfg_path), s(&ckpt)]), exit::LOAD);
}

#[test]
fn bench_complexity_matches_count_ops_and_emits_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let v = tiny(&tmp.path().join("run"));
    let cfg_path = write_config(tmp.path(), "c.json", &v);
    assert_eq!(cli(&["gen-data", s(&cfg_path)]), exit::OK);
    assert_eq!(cli(&["train", s(&cfg_path)]), exit::OK);
    let run_dir = tmp.path().join("run");
    let ckpt = run_dir.join("model.ckpt");
    let metrics = run_dir.join("metrics.csv");
    assert_eq!(
        cli(&["bench", s(&cfg_path), s(&ckpt), s(&ckpt), "--curve", s(&metrics)]),
        exit::OK
    );
    let table = fs::read_to_string(run_dir.join("bench.csv")).unwrap();
    let names: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["ls", "mrdn", "mrdn-model"]);

    let cfg: RunConfig = serde_json::from_value(v).unwrap();
    let reports: Vec<ris_chanest::models::ComplexityReport> =
        serde_json::from_str(&fs::read_to_string(run_dir.join("complexity.json")).unwrap()).unwrap();
    let direct = ris_chanest::models::count_ops(
        &cfg.model,
        &ris_chanest::models::ComplexitySetting {
            ris_elements: 4,
            batch_size: 4,
            iterations: 4,
            image_hw: (4, 4),
        },
    )
    .unwrap();
    assert_eq!(reports, [direct.clone(), direct]);

    let curve = fs::read_to_string(run_dir.join("convergence_run.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("iteration,loss,loss_smoothed"));
    assert_eq!(curve.lines().count(), 5);
}

#[test]
fn complexity_command_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &tiny(&tmp.path().join("run")));
    assert_eq!(cli(&["complexity", s(&cfg)]), exit::OK);
    let v: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("run/complexity.json")).unwrap()).unwrap();
    assert_eq!(v[0]["model"], "mrdn");
}

#[test]
fn sweep_of_one_variant_equals_a_direct_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = tiny(&tmp.path().join("run"));
    v["sweep"] = json!({"features": [2], "n_r": [1], "b_layers": 1, "seeds": [4]});
    let cfg_path = write_config(tmp.path(), "c.json", &v);
    assert_eq!(cli(&["sweep", s(&cfg_path)]), exit::OK);
    let csv = fs::read_to_string(tmp.path().join("run/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let cfg: RunConfig = serde_json::from_value(v).unwrap();
    let ds = ris_chanest::channel_sim::gen_dataset(
        &cfg.geometry,
        &cfg.dataset,
        ris_chanest::rng::sub_seed(4, "sweep-data", 0),
    )
    .unwrap();
    let model = Model::init(&cfg.model, ris_chanest::rng::sub_seed(4, "sweep-init", 0)).unwrap();
    let out = ris_chanest::training::train(model, &ds.train, &ds.val, &cfg.train, 4).unwrap();
    let val: f64 = csv.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert_eq!(val, out.metrics.final_val_nmse_db().unwrap());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let desk = parse_run_config(&fs::read_to_string(dir.join("desk.json")).unwrap()).unwrap();
    assert_eq!((desk.geometry.n_b, desk.geometry.n_u), (16, 8));
    let paper = parse_run_config(&fs::read_to_string(dir.join("paper.json")).unwrap()).unwrap();
    assert_eq!(
        (paper.dataset.train, paper.dataset.val, paper.dataset.test),
        (16_000, 6_000, 8_000)
    );
    assert_eq!(paper.geometry.ris.len(), 4096);
}

#[test]
fn paper_geometry_generates() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut paper = parse_run_config(&fs::read_to_string(dir.join("paper.json")).unwrap()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    paper.out_dir = tmp.path().to_path_buf();
    paper.dataset.train = 2;
    paper.dataset.val = 1;
    paper.dataset.test = 1;
    let m = commands::gen_data(&paper).unwrap();
    assert_eq!(m.splits.iter().map(|s| s.n_samples).sum::<usize>(), 4);
    let train = commands::load_split(&paper, Split::Train).unwrap();
    assert_eq!(train[0].y.shape(), (64, 64));
}
