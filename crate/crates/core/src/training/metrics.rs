use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const CSV_HEADER: [&str; 5] = ["iteration", "loss", "val_nmse_db", "sigma_hat_mean", "ms_per_step"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub loss: f64,
    /// Discriminator loss of the same batch (GAN training only).
    pub disc_loss: Option<f64>,
    pub sigma_hat_mean: Option<f64>,
    pub ms_per_step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Iteration index of the epoch's last step.
    pub iteration: usize,
    pub train_loss: f64,
    pub val_nmse_db: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Discriminator probabilities clamped away from 0 or 1.
    pub clamped_probs: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl Metrics {
    pub fn final_val_nmse_db(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.val_nmse_db)
    }

    /// One row per iteration; `val_nmse_db` is filled on the last step of
    /// each epoch.
    pub fn to_csv(&self) -> String {
        let mut out = CSV_HEADER.join(",") + "\n";
        let mut epochs = self.epochs.iter().peekable();
        for s in &self.steps {
            let val = match epochs.peek() {
                Some(e) if e.iteration == s.iteration => epochs.next().and_then(|e| e.val_nmse_db),
                _ => None,
            };
            writeln!(
                out,
                "{},{},{},{},{}",
                s.iteration,
                s.loss,
                opt(val),
                opt(s.sigma_hat_mean),
                s.ms_per_step
            )
            .expect("write to string");
        }
        out
    }

    /// Reads the output of [`Metrics::to_csv`] back. A row with a
    /// validation value closes an epoch. Discriminator losses and clamp
    /// counts are not part of the file and come back empty.
    pub fn from_csv(text: &str) -> Result<Metrics> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = reader.headers().map_err(csv_err)?;
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::Format(format!("unexpected metrics header {:?}", header)));
        }
        let mut m = Metrics::default();
        let (mut epoch, mut epoch_loss, mut epoch_steps) = (0, 0.0, 0);
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let field = |i: usize| -> Result<Option<f64>> {
                let raw = record.get(i).unwrap_or("");
                if raw.is_empty() {
                    return Ok(None);
                }
                let v: f64 = raw
                    .parse()
                    .map_err(|_| Error::Format(format!("row {row}: bad number {raw:?}")))?;
                if !v.is_finite() {
                    return Err(Error::Format(format!("row {row}: non-finite value")));
                }
                Ok(Some(v))
            };
            let iteration: usize = record[0]
                .parse()
                .map_err(|_| Error::Format(format!("row {row}: bad iteration {:?}", &record[0])))?;
            if m.steps.last().is_some_and(|s| s.iteration >= iteration) {
                return Err(Error::Format(format!("row {row}: iteration not increasing")));
            }
            let loss = field(1)?.ok_or_else(|| Error::Format(format!("row {row}: missing loss")))?;
            m.steps.push(StepRecord {
                iteration,
                epoch,
                loss,
                disc_loss: None,
                sigma_hat_mean: field(3)?,
                ms_per_step: field(4)?.unwrap_or(0.0),
            });
            epoch_loss += loss;
            epoch_steps += 1;
            if let Some(v) = field(2)? {
                m.epochs.push(EpochRecord {
                    epoch,
                    iteration,
                    train_loss: epoch_loss / epoch_steps as f64,
                    val_nmse_db: Some(v),
                });
                epoch += 1;
                epoch_loss = 0.0;
                epoch_steps = 0;
            }
        }
        Ok(m)
    }

    /// Loss curve with a trailing moving average over `window` iterations.
    pub fn convergence_csv(&self, window: usize) -> String {
        let losses: Vec<f64> = self.steps.iter().map(|s| s.loss).collect();
        let smooth = moving_average(&losses, window);
        let mut out = String::from("iteration,loss,loss_smoothed\n");
        for (s, m) in self.steps.iter().zip(smooth) {
            writeln!(out, "{},{},{}", s.iteration, s.loss, m).expect("write to string");
        }
        out
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("metrics csv: {e}"))
}

/// Mean of the last `window` values (fewer at the start) at every position.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut sum = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            sum += v;
            if i >= window {
                sum -= values[i - window];
            }
            sum / (i + 1).min(window) as f64
        })
        .collect()
}
