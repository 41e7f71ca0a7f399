use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{CMatrix, Error, Result, C64};

/// Uniform planar array: `n_v` rows by `n_h` columns, element spacing given
/// in wavelengths. A uniform linear array is `n_h = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub n_h: usize,
    pub n_v: usize,
    #[serde(default = "half_wavelength")]
    pub spacing_over_lambda: f64,
}

fn half_wavelength() -> f64 {
    0.5
}

impl ArrayGeometry {
    pub fn new(n_h: usize, n_v: usize, spacing_over_lambda: f64) -> Result<Self> {
        let g = ArrayGeometry {
            n_h,
            n_v,
            spacing_over_lambda,
        };
        g.validate()?;
        Ok(g)
    }

    /// Linear array of `n` elements along the vertical axis.
    pub fn ula(n: usize, spacing_over_lambda: f64) -> Result<Self> {
        Self::new(1, n, spacing_over_lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_h == 0 || self.n_v == 0 {
            return Err(Error::Domain(format!(
                "array needs at least one element per axis, got {}x{}",
                self.n_v, self.n_h
            )));
        }
        if !(self.spacing_over_lambda > 0.0 && self.spacing_over_lambda.is_finite()) {
            return Err(Error::Domain(format!(
                "element spacing must be positive, got {}",
                self.spacing_over_lambda
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_h * self.n_v
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Array response toward `(azi, ele)`.
///
/// Element `iv * n_h + ih` carries phase
/// `2π d/λ (iv sin(azi) sin(ele) + ih cos(ele))`, i.e. the Kronecker product of
/// the vertical and horizontal phase progressions.
pub fn steering_vector(geom: &ArrayGeometry, azi: f64, ele: f64) -> DVector<C64> {
    let k = 2.0 * PI * geom.spacing_over_lambda;
    let dv = k * azi.sin() * ele.sin();
    let dh = k * ele.cos();
    let vert: Vec<C64> = (0..geom.n_v)
        .map(|m| C64::from_polar(1.0, dv * m as f64))
        .collect();
    let horiz: Vec<C64> = (0..geom.n_h)
        .map(|m| C64::from_polar(1.0, dh * m as f64))
        .collect();
    DVector::from_iterator(
        geom.len(),
        vert.iter().flat_map(|v| horiz.iter().map(move |h| v * h)),
    )
}

/// One propagation path: complex gain plus arrival/departure angles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathParams {
    pub gain: C64,
    pub aoa_azi: f64,
    pub aoa_ele: f64,
    pub aod_azi: f64,
    pub aod_ele: f64,
}

/// `Σ_l z_l · α_rx(aoa_l) · α_tx(aod_l)ᴴ`.
pub fn gen_path_channel(
    geom_rx: &ArrayGeometry,
    geom_tx: &ArrayGeometry,
    paths: &[PathParams],
) -> Result<CMatrix> {
    if paths.is_empty() {
        return Err(Error::Domain("a path channel needs at least one path".into()));
    }
    let mut h = CMatrix::zeros(geom_rx.len(), geom_tx.len());
    for p in paths {
        let a_r = steering_vector(geom_rx, p.aoa_azi, p.aoa_ele);
        let a_t = steering_vector(geom_tx, p.aod_azi, p.aod_ele);
        h += (a_r * a_t.adjoint()) * p.gain;
    }
    Ok(h)
}

/// Draw `n_paths` paths with azimuth `U(-π/2, π/2)`, elevation `U(0, π)` and
/// gains `CN(0, power / n_paths)`.
pub fn draw_paths<R: Rng + ?Sized>(rng: &mut R, n_paths: usize, power: f64) -> Vec<PathParams> {
    let std = (power / n_paths as f64 / 2.0).sqrt();
    (0..n_paths)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            PathParams {
                gain: C64::new(re * std, im * std),
                aoa_azi: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
                aoa_ele: rng.random_range(0.0..PI),
                aod_azi: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
                aod_ele: rng.random_range(0.0..PI),
            }
        })
        .collect()
}

/// Ground truth for one user: both links and their cascade with `ψ = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    /// UE → RIS, `N × N_u`.
    pub h_ru: CMatrix,
    /// BS → RIS, `N × N_b`.
    pub h_rb: CMatrix,
    /// `h_rbᵀ · h_ru`, `N_b × N_u`.
    pub h_cascade: CMatrix,
    pub paths_ru: Vec<PathParams>,
    pub paths_rb: Vec<PathParams>,
}

impl ChannelRealization {
    pub fn from_paths(
        ris: &ArrayGeometry,
        ue: &ArrayGeometry,
        bs: &ArrayGeometry,
        paths_ru: Vec<PathParams>,
        paths_rb: Vec<PathParams>,
    ) -> Result<Self> {
        let h_ru = gen_path_channel(ris, ue, &paths_ru)?;
        let h_rb = gen_path_channel(ris, bs, &paths_rb)?;
        let h_cascade = h_rb.transpose() * &h_ru;
        Ok(ChannelRealization {
            h_ru,
            h_rb,
            h_cascade,
            paths_ru,
            paths_rb,
        })
    }

    pub fn n_b(&self) -> usize {
        self.h_rb.ncols()
    }

    pub fn n_u(&self) -> usize {
        self.h_ru.ncols()
    }
}

/// Draw independent path sets for the two links and build the realization.
#[allow(clippy::too_many_arguments)]
pub fn draw_realization<R: Rng + ?Sized>(
    rng: &mut R,
    ris: &ArrayGeometry,
    ue: &ArrayGeometry,
    bs: &ArrayGeometry,
    paths_ue: usize,
    paths_bs: usize,
    link_power: f64,
) -> Result<ChannelRealization> {
    let paths_ru = draw_paths(rng, paths_ue, link_power);
    let paths_rb = draw_paths(rng, paths_bs, link_power);
    ChannelRealization::from_paths(ris, ue, bs, paths_ru, paths_rb)
}

/// `h_rbᵀ · diag(psi) · h_ru`.
pub fn cascade(real: &ChannelRealization, psi: &[C64]) -> Result<CMatrix> {
    let n = real.h_ru.nrows();
    if psi.len() != n || real.h_rb.nrows() != n {
        return Err(Error::Shape(format!(
            "cascade: psi has {} entries, h_ru has {} rows, h_rb has {} rows",
            psi.len(),
            n,
            real.h_rb.nrows()
        )));
    }
    if let Some(bad) = psi.iter().find(|p| p.norm() > 1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "reflection coefficient {bad} exceeds unit modulus"
        )));
    }
    let mut scaled = real.h_ru.clone();
    for (mut row, p) in scaled.row_iter_mut().zip(psi) {
        row *= *p;
    }
    Ok(real.h_rb.transpose() * scaled)
}
