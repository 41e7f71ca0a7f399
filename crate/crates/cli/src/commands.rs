use std::fs;
use std::path::{Path, PathBuf};

use ris_chanest::channel_sim::{encode_split, gen_split, read_split, Sample, Split, SplitHeader};
use ris_chanest::eval_bench::{
    capacity_sweep, ls_nmse, mean_db, run_benchmark, sweep_csv, BenchmarkTable, Estimator, NmseDenominator, SweepRow,
};
use ris_chanest::models::{count_ops, encode_checkpoint, load_checkpoint, ComplexityReport, ComplexitySetting, Model, ModelSpec};
use ris_chanest::rng::sub_seed;
use ris_chanest::training::{grad_check, grad_check_linear, micro_spec, train_with, GradCheckOptions, GradCheckReport, Metrics};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{geometry_fingerprint, RunConfig};
use crate::error::{CliError, CliResult};

pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const MANIFEST: &str = "manifest.json";
pub const MODEL_CHECKPOINT: &str = "model.ckpt";
pub const METRICS_CSV: &str = "metrics.csv";
pub const TRAIN_SUMMARY: &str = "train_summary.json";
pub const BENCH_CSV: &str = "bench.csv";
pub const BENCH_JSON: &str = "bench.json";
pub const COMPLEXITY_JSON: &str = "complexity.json";
pub const SWEEP_CSV: &str = "sweep.csv";

/// Seed of the dataset splits.
pub fn dataset_seed(cfg: &RunConfig) -> u64 {
    sub_seed(cfg.seed, "dataset", 0)
}

/// Seed of the model initialisation.
pub fn model_seed(cfg: &RunConfig) -> u64 {
    sub_seed(cfg.seed, "model", 0)
}

/// Seed of the mini-batch order.
pub fn train_seed(cfg: &RunConfig) -> u64 {
    sub_seed(cfg.seed, "train", 0)
}

/// Seed of the benchmark test sets.
pub fn bench_seed(cfg: &RunConfig) -> u64 {
    sub_seed(cfg.seed, "bench", 0)
}

pub fn split_file(split: Split) -> String {
    format!("{}.bin", split.name())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write(path, serde_json::to_string_pretty(value).expect("serialisable") + "\n")
}

/// Creates the output directory and stores the config with every default
/// filled in.
fn write_resolved(cfg: &RunConfig) -> CliResult<()> {
    create_dir(&cfg.out_dir)?;
    write(&cfg.out_dir.join(RESOLVED_CONFIG), cfg.to_json())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSplit {
    pub split: Split,
    pub file: String,
    pub n_samples: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub dataset_seed: u64,
    pub geometry_fingerprint: String,
    pub splits: Vec<ManifestSplit>,
}

/// Writes `train.bin`, `val.bin`, `test.bin` and `manifest.json` to the
/// dataset directory.
pub fn gen_data(cfg: &RunConfig) -> CliResult<Manifest> {
    write_resolved(cfg)?;
    let dir = cfg.dataset_dir();
    create_dir(&dir)?;
    let seed = dataset_seed(cfg);
    let mut splits = Vec::new();
    for split in Split::ALL {
        let samples = gen_split(&cfg.geometry, &cfg.dataset, seed, split)?;
        let header = SplitHeader::new(split, &cfg.geometry, &cfg.dataset, seed, samples.len());
        let bytes = encode_split(&header, &samples)?;
        drop(samples);
        let file = split_file(split);
        write(&dir.join(&file), &bytes)?;
        splits.push(ManifestSplit {
            split,
            file,
            n_samples: header.n_samples,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = Manifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        dataset_seed: seed,
        geometry_fingerprint: geometry_fingerprint(&cfg.geometry),
        splits,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Reads one split and checks that it was generated from this config.
pub fn load_split(cfg: &RunConfig, split: Split) -> CliResult<Vec<Sample>> {
    let path = cfg.dataset_dir().join(split_file(split));
    let (header, samples) = read_split(&path).map_err(|e| CliError::load(&path, e))?;
    if header.geometry != cfg.geometry {
        return Err(CliError::Load(format!(
            "{}: dataset geometry {} does not match config geometry {}",
            path.display(),
            geometry_fingerprint(&header.geometry),
            geometry_fingerprint(&cfg.geometry)
        )));
    }
    if header.config != cfg.dataset || header.seed != dataset_seed(cfg) {
        return Err(CliError::Load(format!(
            "{}: dataset was generated from a different dataset config or seed; rerun gen-data",
            path.display()
        )));
    }
    Ok(samples)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model: String,
    pub iterations: usize,
    pub epochs: usize,
    pub first_epoch_loss: Option<f64>,
    pub final_epoch_loss: Option<f64>,
    pub final_val_nmse_db: Option<f64>,
    pub ls_val_nmse_db: Option<f64>,
    pub clamped_probs: usize,
}

pub struct TrainRun {
    pub model: Model,
    pub metrics: Metrics,
    pub summary: TrainSummary,
}

/// Trains `cfg.model` on the generated splits and writes the final
/// checkpoint, the metrics CSV and a summary.
pub fn train(cfg: &RunConfig) -> CliResult<TrainRun> {
    let train_set = load_split(cfg, Split::Train)?;
    let val = load_split(cfg, Split::Val)?;
    write_resolved(cfg)?;
    let model = Model::init(&cfg.model, model_seed(cfg))?;
    let ckpt_dir = cfg.out_dir.join("checkpoints");
    if cfg.train.checkpoint_every.is_some() {
        create_dir(&ckpt_dir)?;
    }
    let geometry = &cfg.geometry;
    let out = train_with(model, &train_set, &val, &cfg.train, train_seed(cfg), |epoch, model, _| {
        if let Some(k) = cfg.train.checkpoint_every {
            if (epoch + 1) % k == 0 {
                let path = ckpt_dir.join(format!("epoch_{:04}.ckpt", epoch + 1));
                fs::write(&path, encode_checkpoint(model, cfg.seed, Some(geometry))?)?;
            }
        }
        Ok(())
    })?;
    write(
        &cfg.out_dir.join(MODEL_CHECKPOINT),
        encode_checkpoint(&out.model, cfg.seed, Some(geometry))?,
    )?;
    write(&cfg.out_dir.join(METRICS_CSV), out.metrics.to_csv())?;
    let ls = if val.is_empty() {
        None
    } else {
        Some(mean_db(&ls_nmse(&val, NmseDenominator::Truth)?))
    };
    let summary = TrainSummary {
        model: out.model.name().into(),
        iterations: out.metrics.steps.len(),
        epochs: out.metrics.epochs.len(),
        first_epoch_loss: out.metrics.epochs.first().map(|e| e.train_loss),
        final_epoch_loss: out.metrics.epochs.last().map(|e| e.train_loss),
        final_val_nmse_db: out.metrics.final_val_nmse_db(),
        ls_val_nmse_db: ls,
        clamped_probs: out.metrics.clamped_probs,
    };
    write_json(&cfg.out_dir.join(TRAIN_SUMMARY), &summary)?;
    Ok(TrainRun {
        model: out.model,
        metrics: out.metrics,
        summary,
    })
}

pub const GRAD_CHECK_KINDS: [&str; 5] = ["linear", "cbdnet", "gan_cbd", "mrdn", "all"];

/// Runs the finite-difference check for `kind`. The linear model uses a
/// large step because its objective has no curvature, so truncation error
/// vanishes and only rounding remains.
pub fn check_grad(kind: &str, tol: Option<f64>, seed: u64) -> CliResult<Vec<GradCheckReport>> {
    let kinds: Vec<&str> = match kind {
        "all" => vec!["linear", "cbdnet", "gan_cbd", "mrdn"],
        k => vec![k],
    };
    let mut reports = Vec::new();
    for k in kinds {
        let base = GradCheckOptions {
            seed,
            ..GradCheckOptions::default()
        };
        let report = match k {
            "linear" | "corrupted_linear" => {
                let opts = GradCheckOptions {
                    tol: tol.unwrap_or(1e-10),
                    step: 1e-2,
                    ..base
                };
                grad_check_linear(&opts, k == "corrupted_linear")?
            }
            other => {
                let spec = micro_spec(other).ok_or_else(|| {
                    CliError::Config(format!(
                        "unknown model kind `{other}`, expected one of {}",
                        GRAD_CHECK_KINDS.join(", ")
                    ))
                })?;
                let opts = GradCheckOptions {
                    tol: tol.unwrap_or(base.tol),
                    ..base
                };
                grad_check(&spec, &opts)?
            }
        };
        reports.push(report);
    }
    Ok(reports)
}

pub fn format_grad_report(r: &GradCheckReport) -> String {
    let mut out = format!(
        "{}: {} (max rel err {:.3e}, tol {:.0e}, kink distance {:.2e}, attempts {})\n",
        r.model,
        if r.passed { "PASS" } else { "FAIL" },
        r.max_rel_err,
        r.tol,
        r.kink_distance,
        r.attempts
    );
    for t in &r.tensors {
        out += &format!("  {:<44} {:>6} {:.3e}\n", t.name, t.entries, t.max_rel_err);
    }
    out
}

/// Closed-form and exact operation counts of one training run of `spec`
/// under the config's geometry and schedule.
pub fn complexity_for(cfg: &RunConfig, spec: &ModelSpec) -> CliResult<ComplexityReport> {
    let batches = cfg.dataset.train.div_ceil(cfg.train.batch_size);
    let mut iterations = batches * cfg.train.epochs;
    if let Some(m) = cfg.train.max_steps {
        iterations = iterations.min(m);
    }
    let setting = ComplexitySetting {
        ris_elements: cfg.geometry.ris.len() as u64,
        batch_size: cfg.train.batch_size as u64,
        iterations: iterations as u64,
        image_hw: cfg.geometry.image_hw(),
    };
    Ok(count_ops(spec, &setting)?)
}

pub fn complexity(cfg: &RunConfig) -> CliResult<ComplexityReport> {
    write_resolved(cfg)?;
    let report = complexity_for(cfg, &cfg.model)?;
    write_json(&cfg.out_dir.join(COMPLEXITY_JSON), &[&report])?;
    Ok(report)
}

pub struct BenchRun {
    pub table: BenchmarkTable,
    pub complexity: Vec<ComplexityReport>,
    pub curves: Vec<PathBuf>,
}

fn curve_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("metrics");
    match path.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str()) {
        Some(parent) if stem == "metrics" => parent.to_string(),
        _ => stem.to_string(),
    }
}

/// Benchmarks LS and every checkpoint over the configured SNR grid. Each
/// `curves` entry is a stored metrics CSV turned into a smoothed
/// convergence curve.
pub fn bench(cfg: &RunConfig, checkpoints: &[PathBuf], curves: &[PathBuf]) -> CliResult<BenchRun> {
    let mut estimators = vec![Estimator::Ls];
    let mut complexity = Vec::new();
    for path in checkpoints {
        let (header, model) = load_checkpoint(path).map_err(|e| CliError::load(path, e))?;
        if let Some(g) = &header.geometry {
            if *g != cfg.geometry {
                return Err(CliError::Load(format!(
                    "{}: checkpoint was trained for geometry {} but the config geometry is {}",
                    path.display(),
                    geometry_fingerprint(g),
                    geometry_fingerprint(&cfg.geometry)
                )));
            }
        }
        let mut name = model.name().to_string();
        if estimators.iter().any(|e| e.name() == name) {
            name = format!("{name}-{}", curve_label(path));
        }
        complexity.push(complexity_for(cfg, &header.model)?);
        estimators.push(Estimator::Model { name, model });
    }
    write_resolved(cfg)?;
    let mut table = run_benchmark(&estimators, &cfg.geometry, &cfg.dataset, &cfg.bench, bench_seed(cfg))?;
    table.fingerprint = Some(cfg.hash());
    write(&cfg.out_dir.join(BENCH_CSV), table.to_csv())?;
    write_json(&cfg.out_dir.join(BENCH_JSON), &table)?;
    write_json(&cfg.out_dir.join(COMPLEXITY_JSON), &complexity)?;
    let mut written = Vec::new();
    for path in curves {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let metrics = Metrics::from_csv(&text).map_err(|e| CliError::load(path, e))?;
        let out = cfg.out_dir.join(format!("convergence_{}.csv", curve_label(path)));
        write(&out, metrics.convergence_csv(cfg.bench.smoothing_window))?;
        written.push(out);
    }
    Ok(BenchRun {
        table,
        complexity,
        curves: written,
    })
}

pub fn sweep(cfg: &RunConfig) -> CliResult<Vec<SweepRow>> {
    write_resolved(cfg)?;
    let rows = capacity_sweep(&cfg.geometry, &cfg.dataset, &cfg.sweep, &cfg.train)?;
    write(&cfg.out_dir.join(SWEEP_CSV), sweep_csv(&rows))?;
    Ok(rows)
}
