use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{draw_realization, make_pilots, observe, pack_real, ArrayGeometry, PilotBook};
use crate::{rng, Error, RMatrix, Result};

/// Array sizes of the simulated system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemGeometry {
    pub n_b: usize,
    pub n_u: usize,
    pub ris: ArrayGeometry,
    /// Element spacing of the BS and UE linear arrays.
    pub antenna_spacing_over_lambda: f64,
}

impl Default for SystemGeometry {
    fn default() -> Self {
        SystemGeometry {
            n_b: 64,
            n_u: 32,
            ris: ArrayGeometry {
                n_h: 64,
                n_v: 64,
                spacing_over_lambda: 0.5,
            },
            antenna_spacing_over_lambda: 0.5,
        }
    }
}

impl SystemGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.n_b == 0 || self.n_u == 0 {
            return Err(Error::config("geometry", "n_b and n_u must be >= 1"));
        }
        self.ris
            .validate()
            .map_err(|e| Error::config("geometry.ris", e.to_string()))?;
        self.bs_array()
            .map_err(|e| Error::config("geometry.antenna_spacing_over_lambda", e.to_string()))?;
        Ok(())
    }

    pub fn bs_array(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::ula(self.n_b, self.antenna_spacing_over_lambda)
    }

    pub fn ue_array(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::ula(self.n_u, self.antenna_spacing_over_lambda)
    }

    /// Packed image size `(N_b, 2 N_u)`.
    pub fn image_hw(&self) -> (usize, usize) {
        (self.n_b, 2 * self.n_u)
    }
}

/// Uniform SNR range in dB.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrRange {
    pub min_db: f64,
    pub max_db: f64,
}

impl SnrRange {
    pub fn fixed(db: f64) -> Self {
        SnrRange {
            min_db: db,
            max_db: db,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Paths on the UE → RIS link.
    pub paths_ue: usize,
    /// Paths on the BS → RIS link.
    pub paths_bs: usize,
    /// Gain variance of each link (`E Σ|z_l|²`). `None` picks `1/√N` so the
    /// cascade has roughly unit power per entry.
    pub link_power: Option<f64>,
    /// `None` generates noiseless observations.
    pub snr_db: Option<SnrRange>,
    pub k_users: usize,
    /// Pilot length, `None` means the minimum `k_users · n_u`.
    pub tau: Option<usize>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            paths_ue: 3,
            paths_bs: 3,
            link_power: None,
            snr_db: Some(SnrRange {
                min_db: 0.0,
                max_db: 20.0,
            }),
            k_users: 20,
            tau: None,
            train: 16_000,
            val: 6_000,
            test: 8_000,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths_ue == 0 || self.paths_bs == 0 {
            return Err(Error::config("dataset.paths_ue", "path counts must be >= 1"));
        }
        if self.k_users == 0 {
            return Err(Error::config("dataset.k_users", "must be >= 1"));
        }
        if self.train.checked_add(self.val).and_then(|n| n.checked_add(self.test)).is_none_or(|n| n == 0) {
            return Err(Error::config("dataset", "split sizes must sum to between 1 and usize::MAX"));
        }
        if let Some(p) = self.link_power {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::config("dataset.link_power", "must be positive"));
            }
        }
        if let Some(r) = self.snr_db {
            if !r.min_db.is_finite() || !r.max_db.is_finite() || r.min_db > r.max_db {
                return Err(Error::config(
                    "dataset.snr_db",
                    format!("invalid range [{}, {}]", r.min_db, r.max_db),
                ));
            }
        }
        Ok(())
    }

    pub fn link_power(&self, geom: &SystemGeometry) -> f64 {
        self.link_power
            .unwrap_or_else(|| 1.0 / (geom.ris.len() as f64).sqrt())
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One network training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Packed noisy observation, `N_b × 2N_u`.
    pub y: RMatrix,
    /// Packed ground-truth cascade, `N_b × 2N_u`.
    pub h: RMatrix,
    pub sigma_n: f64,
    /// `+inf` for noiseless samples.
    pub snr_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub geometry: SystemGeometry,
    pub config: DatasetConfig,
    pub seed: u64,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[Sample] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Noise std giving `snr_db = 10 log10(‖H‖² / (N_b N_u σ²))` for this
/// realization.
pub fn sigma_for_snr(h_power: f64, n_b: usize, n_u: usize, snr_db: f64) -> f64 {
    (h_power / ((n_b * n_u) as f64 * 10f64.powf(snr_db / 10.0))).sqrt()
}

pub(crate) fn gen_sample(
    geom: &SystemGeometry,
    cfg: &DatasetConfig,
    pilots: &PilotBook,
    seed: u64,
    index: usize,
) -> Result<Sample> {
    let ris = geom.ris;
    let ue = geom.ue_array()?;
    let bs = geom.bs_array()?;
    let mut rng = rng::stream(seed, "sample", index as u64);
    let real = draw_realization(
        &mut rng,
        &ris,
        &ue,
        &bs,
        cfg.paths_ue,
        cfg.paths_bs,
        cfg.link_power(geom),
    )?;
    let (sigma_n, snr_db) = match cfg.snr_db {
        None => (0.0, f64::INFINITY),
        Some(r) => {
            let snr = if r.min_db == r.max_db {
                r.min_db
            } else {
                rng.random_range(r.min_db..r.max_db)
            };
            let power = real.h_cascade.norm_squared();
            (sigma_for_snr(power, geom.n_b, geom.n_u, snr), snr)
        }
    };
    let user = index % cfg.k_users;
    let obs = observe(
        &real,
        pilots,
        user,
        sigma_n,
        rng::sub_seed(seed, "observe", index as u64),
    )?;
    Ok(Sample {
        y: obs.y_packed,
        h: pack_real(&real.h_cascade),
        sigma_n,
        snr_db,
    })
}

impl DatasetConfig {
    /// Global sample indices of a split.
    pub fn range(&self, split: Split) -> std::ops::Range<usize> {
        match split {
            Split::Train => 0..self.train,
            Split::Val => self.train..self.train + self.val,
            Split::Test => self.train + self.val..self.total(),
        }
    }
}

/// Generate one split. Sample `i` (counted across the splits in train, val,
/// test order) draws only from stream `(seed, "sample", i)`, so the result
/// does not depend on evaluation order or on which splits are generated.
pub fn gen_split(geom: &SystemGeometry, cfg: &DatasetConfig, seed: u64, split: Split) -> Result<Vec<Sample>> {
    geom.validate()?;
    cfg.validate()?;
    let tau = cfg.tau.unwrap_or(cfg.k_users * geom.n_u);
    let pilots = make_pilots(cfg.k_users, geom.n_u, tau)?;
    cfg.range(split)
        .into_par_iter()
        .map(|i| gen_sample(geom, cfg, &pilots, seed, i))
        .collect()
}

/// Generate train/val/test splits with [`gen_split`].
pub fn gen_dataset(geom: &SystemGeometry, cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    Ok(Dataset {
        geometry: geom.clone(),
        config: cfg.clone(),
        seed,
        train: gen_split(geom, cfg, seed, Split::Train)?,
        val: gen_split(geom, cfg, seed, Split::Val)?,
        test: gen_split(geom, cfg, seed, Split::Test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_geom() -> SystemGeometry {
        SystemGeometry {
            n_b: 4,
            n_u: 2,
            ris: ArrayGeometry::new(2, 2, 0.5).unwrap(),
            antenna_spacing_over_lambda: 0.5,
        }
    }

    #[test]
    fn noiseless_samples_equal_truth() {
        let cfg = DatasetConfig {
            snr_db: None,
            k_users: 1,
            train: 1,
            val: 1,
            test: 1,
            ..Default::default()
        };
        let ds = gen_dataset(&tiny_geom(), &cfg, 5).unwrap();
        assert_eq!(ds.len(), 3);
        for s in Split::ALL.iter().flat_map(|&sp| ds.split(sp)) {
            assert_eq!(s.y, s.h);
            assert_eq!(s.sigma_n, 0.0);
        }
    }

    #[test]
    fn realized_snr_matches_request() {
        let cfg = DatasetConfig {
            snr_db: Some(SnrRange::fixed(10.0)),
            k_users: 1,
            train: 4,
            val: 1,
            test: 1,
            ..Default::default()
        };
        let ds = gen_dataset(&tiny_geom(), &cfg, 5).unwrap();
        for s in &ds.train {
            let p = s.h.norm_squared();
            let want = p / (8.0 * 10.0);
            assert!((s.sigma_n * s.sigma_n - want).abs() < 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn invalid_snr_bounds_rejected() {
        let cfg = DatasetConfig {
            snr_db: Some(SnrRange {
                min_db: 10.0,
                max_db: 0.0,
            }),
            ..Default::default()
        };
        assert!(matches!(
            gen_dataset(&tiny_geom(), &cfg, 0),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn empty_dataset_rejected() {
        let cfg = DatasetConfig {
            train: 0,
            val: 0,
            test: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let one = DatasetConfig {
            val: 0,
            ..Default::default()
        };
        assert!(one.validate().is_ok());
    }
}
