use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::channel_sim::{gen_dataset, DatasetConfig, SystemGeometry};
use crate::models::{count_ops, ComplexitySetting, Model, ModelSpec, MrdnSpec};
use crate::training::{train, TrainConfig};
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub features: Vec<usize>,
    pub n_r: Vec<usize>,
    pub b_layers: usize,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            features: vec![8, 16],
            n_r: vec![1, 2],
            b_layers: 3,
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub features: usize,
    pub n_r: usize,
    pub seed: u64,
    pub val_nmse_db: f64,
    /// Closed-form training cost of the run.
    pub formula_ops: u128,
    pub forward_macs: u64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("features,n_r,seed,val_nmse_db,formula_ops,forward_macs\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.features, r.n_r, r.seed, r.val_nmse_db, r.formula_ops, r.forward_macs
        )
        .expect("write to string");
    }
    out
}

/// Trains every (features, n_r) MRDN variant on the same data and seed, for
/// each seed, and reports the final validation NMSE with the op counts.
pub fn capacity_sweep(
    geom: &SystemGeometry,
    data: &DatasetConfig,
    sweep: &SweepConfig,
    train_cfg: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    if sweep.features.is_empty() || sweep.n_r.is_empty() || sweep.seeds.is_empty() {
        return Err(Error::config("sweep", "features, n_r and seeds must be nonempty"));
    }
    let mut rows = Vec::new();
    for &seed in &sweep.seeds {
        let ds = gen_dataset(geom, data, rng::sub_seed(seed, "sweep-data", 0))?;
        for &features in &sweep.features {
            for &n_r in &sweep.n_r {
                let spec = ModelSpec::Mrdn(MrdnSpec {
                    n_r,
                    b_layers: sweep.b_layers,
                    features,
                });
                let model = Model::init(&spec, rng::sub_seed(seed, "sweep-init", 0))?;
                let out = train(model, &ds.train, &ds.val, train_cfg, seed)?;
                let ops = count_ops(
                    &spec,
                    &ComplexitySetting {
                        ris_elements: geom.ris.len() as u64,
                        batch_size: train_cfg.batch_size as u64,
                        iterations: out.metrics.steps.len() as u64,
                        image_hw: geom.image_hw(),
                    },
                )?;
                rows.push(SweepRow {
                    features,
                    n_r,
                    seed,
                    val_nmse_db: out
                        .metrics
                        .final_val_nmse_db()
                        .ok_or_else(|| Error::config("dataset.val", "capacity sweep needs a validation split"))?,
                    formula_ops: ops.formula,
                    forward_macs: ops.forward_macs,
                });
            }
        }
    }
    Ok(rows)
}
