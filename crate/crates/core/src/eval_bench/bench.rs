use std::fmt::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ls_nmse, mean_db, model_nmse, NmseDenominator};
use crate::channel_sim::{gen_dataset, DatasetConfig, Sample, SnrRange, SystemGeometry};
use crate::models::Model;
use crate::tensor_nn::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub snr_db: Vec<f64>,
    /// Test samples per SNR point.
    pub n_samples: usize,
    pub batch: usize,
    pub denominator: NmseDenominator,
    /// Fill `mean_infer_s` with measured times; off by default so tables are
    /// reproducible byte for byte.
    pub record_timing: bool,
    pub timing_runs: usize,
    pub timing_warmup: usize,
    /// Moving-average window for convergence curves.
    pub smoothing_window: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            n_samples: 200,
            batch: 50,
            denominator: NmseDenominator::Truth,
            record_timing: false,
            timing_runs: 100,
            timing_warmup: 10,
            smoothing_window: 50,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let bad = |f: &str, r: &str| Err(Error::config(format!("{path}.{f}"), r));
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db", "must be a nonempty list of finite values");
        }
        if self.n_samples == 0 {
            return bad("n_samples", "must be at least 1");
        }
        if self.batch == 0 {
            return bad("batch", "must be at least 1");
        }
        if self.record_timing && self.timing_runs < 100 {
            return bad("timing_runs", "must be at least 100");
        }
        Ok(())
    }
}

pub enum Estimator {
    Ls,
    Model { name: String, model: Model },
}

impl Estimator {
    pub fn name(&self) -> &str {
        match self {
            Estimator::Ls => "ls",
            Estimator::Model { name, .. } => name,
        }
    }

    fn nmse(&self, samples: &[Sample], cfg: &BenchConfig) -> Result<Vec<f64>> {
        match self {
            Estimator::Ls => ls_nmse(samples, cfg.denominator),
            Estimator::Model { model, .. } => model_nmse(model, samples, cfg.batch, cfg.denominator),
        }
    }

    /// Median wall-clock seconds of a single-sample forward pass.
    fn time(&self, samples: &[Sample], cfg: &BenchConfig) -> Result<f64> {
        let inputs: Vec<Tensor> = samples
            .iter()
            .map(|s| Tensor::from_matrices([&s.y]))
            .collect::<Result<_>>()?;
        let run = |x: &Tensor| -> Result<()> {
            match self {
                Estimator::Ls => {
                    std::hint::black_box(x.clone());
                }
                Estimator::Model { model, .. } => {
                    std::hint::black_box(model.estimate(x)?);
                }
            }
            Ok(())
        };
        for i in 0..cfg.timing_warmup {
            run(&inputs[i % inputs.len()])?;
        }
        let mut times = Vec::with_capacity(cfg.timing_runs);
        for i in 0..cfg.timing_runs {
            let start = Instant::now();
            run(&inputs[i % inputs.len()])?;
            times.push(start.elapsed().as_secs_f64());
        }
        times.sort_by(f64::total_cmp);
        Ok(times[times.len() / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub estimator: String,
    pub snr_db: f64,
    pub nmse_db: f64,
    pub n_samples: usize,
    pub mean_infer_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    /// Hash of the configuration that produced the table.
    pub fingerprint: Option<String>,
    pub rows: Vec<BenchRow>,
}

impl BenchmarkTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,snr_db,nmse_db,n_samples,mean_infer_s\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.estimator, r.snr_db, r.nmse_db, r.n_samples, r.mean_infer_s)
                .expect("write to string");
        }
        out
    }

    pub fn row(&self, estimator: &str, snr_db: f64) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.snr_db == snr_db)
    }
}

/// Test set at one SNR. The same seed is used at every SNR so channels and
/// normalised noise draws are shared across the grid and only the noise
/// scale changes.
pub fn test_set(geom: &SystemGeometry, data: &DatasetConfig, snr_db: f64, n: usize, seed: u64) -> Result<Vec<Sample>> {
    let cfg = DatasetConfig {
        snr_db: Some(SnrRange::fixed(snr_db)),
        train: 0,
        val: 0,
        test: n,
        ..data.clone()
    };
    Ok(gen_dataset(geom, &cfg, seed)?.test)
}

/// Mean NMSE (dB) of every estimator at every SNR point, one row per pair,
/// grouped by estimator.
pub fn run_benchmark(
    estimators: &[Estimator],
    geom: &SystemGeometry,
    data: &DatasetConfig,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<BenchmarkTable> {
    cfg.validate("bench")?;
    if estimators.is_empty() {
        return Err(Error::config("bench", "no estimators given"));
    }
    let sets: Vec<Vec<Sample>> = cfg
        .snr_db
        .iter()
        .map(|&snr| test_set(geom, data, snr, cfg.n_samples, seed))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(estimators.len() * sets.len());
    for est in estimators {
        for (&snr, samples) in cfg.snr_db.iter().zip(&sets) {
            let values = est.nmse(samples, cfg)?;
            let mean_infer_s = if cfg.record_timing { est.time(samples, cfg)? } else { 0.0 };
            rows.push(BenchRow {
                estimator: est.name().to_string(),
                snr_db: snr,
                nmse_db: mean_db(&values),
                n_samples: values.len(),
                mean_infer_s,
            });
        }
    }
    Ok(BenchmarkTable { fingerprint: None, rows })
}
